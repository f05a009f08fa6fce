#include "gcvt/primitives.hpp"

#include <algorithm>
#include <cmath>

#include "gcvt/fp16.hpp"

namespace gcv {

static int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

static void check_extent(int64_t e, const char* what) {
  if (e < 1) throw gcvt_error(std::string(what) + " must be >= 1");
}

int64_t CostModel::ddmm(int64_t s1, int64_t s2, int64_t s3) const {
  check_extent(s1, "s1");
  check_extent(s2, "s2");
  check_extent(s3, "s3");
  // Tile count times per-tile streaming length with systolic fill/drain.
  return ceil_div(s1, p_ca) * ceil_div(s3, p_ca) * (s2 + 2 * p_ca);
}

int64_t CostModel::spdmm(int64_t nnz, int64_t s3) const {
  if (p_ca % 2 != 0) throw gcvt_error("p_ca must be even");
  if (nnz < 0) throw gcvt_error("nnz must be >= 0");
  check_extent(s3, "s3");
  return ceil_div(nnz, p_ca / 2) * ceil_div(s3, p_ca);
}

int64_t CostModel::sddmm(int64_t nnz, int64_t s2) const {
  if (p_ca % 2 != 0) throw gcvt_error("p_ca must be even");
  if (nnz < 0) throw gcvt_error("nnz must be >= 0");
  check_extent(s2, "s2");
  return ceil_div(nnz, p_ca / 2) * ceil_div(s2, p_ca);
}

int64_t CostModel::psvm_pvva(int64_t s1, int64_t s3) const {
  check_extent(s1, "s1");
  check_extent(s3, "s3");
  return ceil_div(s1, p_ca / 2) * ceil_div(s3, p_ca);
}

int64_t CostModel::dm_stream(int64_t elements) const {
  if (elements < 0) throw gcvt_error("elements must be >= 0");
  return ceil_div(elements, p_ca);
}

void check_permutation(const Permutation& p, int64_t n) {
  if (static_cast<int64_t>(p.size()) != n)
    throw gcvt_error("permutation length does not match row count");
  std::vector<bool> seen(static_cast<size_t>(n), false);
  for (uint32_t v : p) {
    if (v >= n || seen[v]) throw gcvt_error("invalid permutation");
    seen[v] = true;
  }
}

void ddmm_acc(const float* x, int64_t x_stride, const float* y, int64_t y_stride,
              float* acc, int64_t acc_stride, int64_t i0, int64_t m, int64_t k0,
              int64_t kk, int64_t j0, int64_t n) {
  for (int64_t i = i0; i < i0 + m; ++i) {
    const float* xr = x + i * x_stride;
    float* ar = acc + i * acc_stride;
    for (int64_t j = j0; j < j0 + n; ++j) {
      float sum = ar[j];
      for (int64_t k = k0; k < k0 + kk; ++k) sum += xr[k] * y[k * y_stride + j];
      ar[j] = sum;
    }
  }
}

void spdmm_acc(std::span<const Triple> triples, Reduction red, const float* y,
               int64_t y_stride, float* acc, int64_t acc_stride, int64_t j0,
               int64_t n) {
  for (const Triple& t : triples) {
    const float* yr = y + static_cast<int64_t>(t.src) * y_stride;
    float* ar = acc + static_cast<int64_t>(t.dst) * acc_stride;
    if (red == Reduction::Sum) {
      for (int64_t j = j0; j < j0 + n; ++j) ar[j] += t.val * yr[j];
    } else {
      for (int64_t j = j0; j < j0 + n; ++j) ar[j] = std::max(ar[j], t.val * yr[j]);
    }
  }
}

void sddmm_acc(std::span<const Triple> pattern, const float* x, int64_t x_stride,
               const float* y, int64_t y_stride, float* acc, int64_t k0, int64_t kk) {
  for (size_t e = 0; e < pattern.size(); ++e) {
    const Triple& t = pattern[e];
    const float* xr = x + static_cast<int64_t>(t.dst) * x_stride;
    float sum = acc[e];
    for (int64_t k = k0; k < k0 + kk; ++k) sum += xr[k] * y[k * y_stride + t.src];
    acc[e] = sum;
  }
}

void psvm_acc(const float* a, const float* y, int64_t y_stride, float* acc,
              int64_t acc_stride, int64_t i0, int64_t m, int64_t n) {
  for (int64_t i = i0; i < i0 + m; ++i)
    for (int64_t j = 0; j < n; ++j) acc[i * acc_stride + j] = a[i] * y[i * y_stride + j];
}

void pvva_acc(const float* x, int64_t x_stride, const float* y, int64_t y_stride,
              float* acc, int64_t acc_stride, int64_t i0, int64_t m, int64_t n) {
  for (int64_t i = i0; i < i0 + m; ++i)
    for (int64_t j = 0; j < n; ++j)
      acc[i * acc_stride + j] = x[i * x_stride + j] + y[i * y_stride + j];
}

void commit_rows(const float* acc, int64_t acc_stride, float* out, int64_t out_stride,
                 int64_t i0, int64_t m, int64_t n, const Permutation* perm) {
  for (int64_t i = i0; i < i0 + m; ++i) {
    int64_t dst = perm ? static_cast<int64_t>((*perm)[static_cast<size_t>(i)]) : i;
    for (int64_t j = 0; j < n; ++j)
      out[dst * out_stride + j] = fp16_round(acc[i * acc_stride + j]);
  }
}

static void check_2d(const Tensor& t, const char* name) {
  if (t.dims.size() != 2) throw gcvt_error(std::string(name) + " must be 2-D");
}

Tensor ddmm(const Tensor& x, const Tensor& y, const std::optional<Permutation>& shuffle) {
  check_2d(x, "X");
  check_2d(y, "Y");
  if (x.dims[1] != y.dims[0]) throw gcvt_error("ddmm inner dimensions disagree");
  const int64_t s1 = x.dims[0], s2 = x.dims[1], s3 = y.dims[1];
  if (shuffle) check_permutation(*shuffle, s1);
  std::vector<float> acc(static_cast<size_t>(s1 * s3), 0.0f);
  ddmm_acc(x.values.data(), s2, y.values.data(), s3, acc.data(), s3, 0, s1, 0, s2, 0, s3);
  Tensor z = Tensor::zeros({s1, s3});
  commit_rows(acc.data(), s3, z.values.data(), s3, 0, s1, s3,
              shuffle ? &*shuffle : nullptr);
  return z;
}

Tensor spdmm(const SparseMatrix& x, const Tensor& y, Reduction red,
             const std::optional<Permutation>& shuffle) {
  check_2d(y, "Y");
  if (x.n_cols != y.dims[0]) throw gcvt_error("spdmm inner dimensions disagree");
  x.validate();
  const int64_t s1 = x.n_rows, s3 = y.dims[1];
  if (shuffle) check_permutation(*shuffle, s1);
  std::vector<float> acc(static_cast<size_t>(s1 * s3), 0.0f);
  spdmm_acc(x.triples, red, y.values.data(), s3, acc.data(), s3, 0, s3);
  Tensor z = Tensor::zeros({s1, s3});
  commit_rows(acc.data(), s3, z.values.data(), s3, 0, s1, s3,
              shuffle ? &*shuffle : nullptr);
  return z;
}

SparseMatrix sddmm(const SparseMatrix& pattern, const Tensor& x, const Tensor& y) {
  check_2d(x, "X");
  check_2d(y, "Y");
  if (x.dims[1] != y.dims[0]) throw gcvt_error("sddmm inner dimensions disagree");
  if (pattern.n_rows != x.dims[0] || pattern.n_cols != y.dims[1])
    throw gcvt_error("sddmm pattern shape disagrees with operands");
  pattern.validate();
  std::vector<float> acc(pattern.triples.size(), 0.0f);
  sddmm_acc(pattern.triples, x.values.data(), x.dims[1], y.values.data(), y.dims[1],
            acc.data(), 0, x.dims[1]);
  SparseMatrix out = pattern;
  for (size_t e = 0; e < acc.size(); ++e) out.triples[e].val = fp16_round(acc[e]);
  return out;
}

Tensor psvm(const std::vector<float>& a, const Tensor& y) {
  check_2d(y, "Y");
  if (static_cast<int64_t>(a.size()) != y.dims[0])
    throw gcvt_error("psvm scalar count does not match row count");
  const int64_t s1 = y.dims[0], s3 = y.dims[1];
  std::vector<float> acc(static_cast<size_t>(s1 * s3), 0.0f);
  psvm_acc(a.data(), y.values.data(), s3, acc.data(), s3, 0, s1, s3);
  Tensor z = Tensor::zeros({s1, s3});
  commit_rows(acc.data(), s3, z.values.data(), s3, 0, s1, s3);
  return z;
}

Tensor pvva(const Tensor& x, const Tensor& y) {
  check_2d(x, "X");
  check_2d(y, "Y");
  if (x.dims != y.dims) throw gcvt_error("pvva dimension mismatch");
  const int64_t s1 = x.dims[0], s3 = x.dims[1];
  std::vector<float> acc(static_cast<size_t>(s1 * s3), 0.0f);
  pvva_acc(x.values.data(), s3, y.values.data(), s3, acc.data(), s3, 0, s1, s3);
  Tensor z = Tensor::zeros({s1, s3});
  commit_rows(acc.data(), s3, z.values.data(), s3, 0, s1, s3);
  return z;
}

}  // namespace gcv
