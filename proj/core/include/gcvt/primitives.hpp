#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gcvt/tensor.hpp"

namespace gcv {

enum class Reduction { Sum, Max };

// Cycle-cost formulas for the five computation primitives on a
// p_ca x p_ca computation array. All results are exact integers.
struct CostModel {
  int p_ca = 16;

  int64_t ddmm(int64_t s1, int64_t s2, int64_t s3) const;
  int64_t spdmm(int64_t nnz, int64_t s3) const;
  int64_t sddmm(int64_t nnz, int64_t s2) const;
  int64_t psvm_pvva(int64_t s1, int64_t s3) const;
  // Data Manipulation Module streaming rate: p_ca values per cycle.
  int64_t dm_stream(int64_t elements) const;
};

using Permutation = std::vector<uint32_t>;

// ---------------------------------------------------------------------
// Accumulation-buffer kernels.
//
// The functional contract is: accumulate in 32-bit floats, round to
// binary16 once at primitive output. Tiled execution keeps one fp32
// accumulator per output value and feeds it tile by tile in ascending
// reduction order, so tiled and untiled execution agree bitwise.
// ---------------------------------------------------------------------

// acc[i0..i0+m) x [j0..j0+n) += X[i][k] * Y[k][j], k ascending over
// [k0..k0+kk). Strides are the full-matrix row widths.
void ddmm_acc(const float* x, int64_t x_stride, const float* y, int64_t y_stride,
              float* acc, int64_t acc_stride, int64_t i0, int64_t m, int64_t k0,
              int64_t kk, int64_t j0, int64_t n);

// Scatter-gather update over a (dst,src)-ordered triple slice:
// Sum: acc[dst][j] += val * Y[src][j];  Max: acc[dst][j] = max(acc, val*Y[src][j]).
void spdmm_acc(std::span<const Triple> triples, Reduction red, const float* y,
               int64_t y_stride, float* acc, int64_t acc_stride, int64_t j0, int64_t n);

// acc[e] += <X[dst_e], Y[:, src_e]> restricted to k in [k0, k0+kk);
// entries correspond 1:1 to the pattern slice.
void sddmm_acc(std::span<const Triple> pattern, const float* x, int64_t x_stride,
               const float* y, int64_t y_stride, float* acc, int64_t k0, int64_t kk);

void psvm_acc(const float* a, const float* y, int64_t y_stride, float* acc,
              int64_t acc_stride, int64_t i0, int64_t m, int64_t n);

void pvva_acc(const float* x, int64_t x_stride, const float* y, int64_t y_stride,
              float* acc, int64_t acc_stride, int64_t i0, int64_t m, int64_t n);

// Rounds a block of fp32 accumulators into binary16 floats, optionally
// permuting output rows: output row i lands at position perm[i].
void commit_rows(const float* acc, int64_t acc_stride, float* out, int64_t out_stride,
                 int64_t i0, int64_t m, int64_t n,
                 const Permutation* perm = nullptr);

// ---------------------------------------------------------------------
// Whole-matrix primitive operations (untiled convenience surface).
// ---------------------------------------------------------------------

Tensor ddmm(const Tensor& x, const Tensor& y,
            const std::optional<Permutation>& shuffle = std::nullopt);

Tensor spdmm(const SparseMatrix& x, const Tensor& y, Reduction red = Reduction::Sum,
             const std::optional<Permutation>& shuffle = std::nullopt);

SparseMatrix sddmm(const SparseMatrix& pattern, const Tensor& x, const Tensor& y);

Tensor psvm(const std::vector<float>& a, const Tensor& y);

Tensor pvva(const Tensor& x, const Tensor& y);

void check_permutation(const Permutation& p, int64_t n);

}  // namespace gcv
