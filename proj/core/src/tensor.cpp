#include "gcvt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gcvt/fp16.hpp"

namespace gcv {

Tensor::Tensor(std::vector<int64_t> d, std::vector<float> v)
    : dims(std::move(d)), values(std::move(v)) {
  if (dims.empty() || dims.size() > 4) throw gcvt_error("tensor rank must be 1..4");
  int64_t n = 1;
  for (int64_t e : dims) {
    if (e < 1) throw gcvt_error("tensor extent must be >= 1");
    n *= e;
  }
  if (n != static_cast<int64_t>(values.size()))
    throw gcvt_error("tensor value count does not match dims");
}

Tensor Tensor::zeros(std::vector<int64_t> d) {
  int64_t n = 1;
  for (int64_t e : d) n *= e;
  return Tensor(std::move(d), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

int64_t Tensor::size() const { return static_cast<int64_t>(values.size()); }

int64_t Tensor::cols() const {
  int64_t c = 1;
  for (size_t i = 1; i < dims.size(); ++i) c *= dims[i];
  return c;
}

double SparseMatrix::density() const {
  if (n_rows == 0 || n_cols == 0) return 0.0;
  return static_cast<double>(triples.size()) / (static_cast<double>(n_rows) * n_cols);
}

void SparseMatrix::sort_triples() {
  std::sort(triples.begin(), triples.end(), [](const Triple& a, const Triple& b) {
    return a.dst != b.dst ? a.dst < b.dst : a.src < b.src;
  });
}

void SparseMatrix::validate() const {
  for (size_t i = 0; i < triples.size(); ++i) {
    const Triple& t = triples[i];
    if (t.src >= n_cols || t.dst >= n_rows)
      throw gcvt_error("triple (" + std::to_string(t.src) + "," + std::to_string(t.dst) +
                       ") out of range for " + std::to_string(n_rows) + "x" +
                       std::to_string(n_cols));
    if (i > 0) {
      const Triple& p = triples[i - 1];
      if (p.dst > t.dst || (p.dst == t.dst && p.src >= t.src))
        throw gcvt_error(p.src == t.src && p.dst == t.dst
                             ? "duplicate (src,dst) pair in sparse matrix"
                             : "sparse matrix triples not sorted by (dst,src)");
    }
  }
}

SparseMatrix coo_from_dense(const Tensor& t, float eps) {
  if (t.dims.size() != 2) throw gcvt_error("coo_from_dense requires a 2-D tensor");
  SparseMatrix s;
  s.n_rows = t.dims[0];
  s.n_cols = t.dims[1];
  for (int64_t r = 0; r < s.n_rows; ++r)
    for (int64_t c = 0; c < s.n_cols; ++c) {
      float v = t.at2(r, c);
      if (std::fabs(v) > eps)
        s.triples.push_back({static_cast<uint32_t>(c), static_cast<uint32_t>(r), v});
    }
  return s;  // row-major scan order is already (dst, src) sorted
}

Tensor densify(const SparseMatrix& s) {
  Tensor t = Tensor::zeros({s.n_rows, s.n_cols});
  for (const Triple& tr : s.triples) t.at2(tr.dst, tr.src) = tr.val;
  return t;
}

static void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

std::vector<uint8_t> tensor_to_bytes(const Tensor& t) {
  std::vector<uint8_t> b = {'G', 'C', 'V', 'T', 1, static_cast<uint8_t>(t.dims.size()),
                            0,   0,   0,   0,   0, 0};
  for (int64_t d : t.dims) put_u64(b, static_cast<uint64_t>(d));
  for (float v : t.values) {
    uint16_t h = half_bits_from_float(v);
    b.push_back(static_cast<uint8_t>(h & 0xff));
    b.push_back(static_cast<uint8_t>(h >> 8));
  }
  return b;
}

Tensor tensor_from_bytes(const std::vector<uint8_t>& b) {
  if (b.size() < 12 || std::memcmp(b.data(), "GCVT", 4) != 0)
    throw gcvt_error("bad tensor file magic");
  if (b[4] != 1) throw gcvt_error("unsupported tensor file version");
  const int rank = b[5];
  if (rank < 1 || rank > 4) throw gcvt_error("bad tensor rank");
  size_t off = 12;
  if (b.size() < off + 8 * rank) throw gcvt_error("truncated tensor header");
  std::vector<int64_t> dims;
  int64_t n = 1;
  for (int i = 0; i < rank; ++i) {
    uint64_t d = 0;
    for (int j = 0; j < 8; ++j) d |= static_cast<uint64_t>(b[off++]) << (8 * j);
    dims.push_back(static_cast<int64_t>(d));
    n *= static_cast<int64_t>(d);
  }
  if (b.size() != off + 2 * static_cast<size_t>(n)) throw gcvt_error("tensor payload size mismatch");
  std::vector<float> values;
  values.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    uint16_t h = static_cast<uint16_t>(b[off] | (b[off + 1] << 8));
    off += 2;
    values.push_back(float_from_half_bits(h));
  }
  return Tensor(std::move(dims), std::move(values));
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw gcvt_error("cannot open for write: " + path);
  auto b = tensor_to_bytes(t);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) throw gcvt_error("write failed: " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw gcvt_error("cannot open: " + path);
  std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return tensor_from_bytes(b);
}

SparseMatrix read_edge_list(const std::string& path, int64_t n_rows, int64_t n_cols) {
  std::ifstream f(path);
  if (!f) throw gcvt_error("cannot open: " + path);
  SparseMatrix s;
  s.n_rows = n_rows;
  s.n_cols = n_cols;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream is(line);
    uint32_t src, dst;
    double val;
    if (!(is >> src)) continue;  // blank line
    if (!(is >> dst >> val))
      throw gcvt_error(path + ":" + std::to_string(lineno) + ": expected 'src dst val'");
    s.triples.push_back({src, dst, fp16_round(static_cast<float>(val))});
  }
  s.sort_triples();
  s.validate();
  return s;
}

void write_edge_list(const std::string& path, const SparseMatrix& s) {
  std::ofstream f(path);
  if (!f) throw gcvt_error("cannot open for write: " + path);
  f << "# " << s.n_rows << " x " << s.n_cols << "\n";
  for (const Triple& t : s.triples) f << t.src << " " << t.dst << " " << t.val << "\n";
}

}  // namespace gcv
