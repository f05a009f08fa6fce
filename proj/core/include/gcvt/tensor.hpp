#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcv {

// Dense tensor, up to 4 dims, row-major. Values are logically binary16:
// every stored float is exactly representable in half precision.
struct Tensor {
  std::vector<int64_t> dims;
  std::vector<float> values;

  Tensor() = default;
  Tensor(std::vector<int64_t> d, std::vector<float> v);

  static Tensor zeros(std::vector<int64_t> d);

  int64_t size() const;
  int64_t rows() const { return dims.empty() ? 0 : dims[0]; }
  // Product of all dims after the first; 2-D view used by matrix kernels.
  int64_t cols() const;

  float& at2(int64_t r, int64_t c) { return values[r * cols() + c]; }
  float at2(int64_t r, int64_t c) const { return values[r * cols() + c]; }

  bool operator==(const Tensor&) const = default;
};

struct Triple {
  uint32_t src = 0;  // row of the dense operand Y to fetch
  uint32_t dst = 0;  // row of the result Z to update
  float val = 0.0f;

  bool operator==(const Triple&) const = default;
};

// COO sparse matrix. A triple encodes X[dst][src] = val, i.e. it
// contributes val * Y[src] into Z[dst]. Triples sorted by (dst, src).
struct SparseMatrix {
  int64_t n_rows = 0;
  int64_t n_cols = 0;
  std::vector<Triple> triples;

  double density() const;
  void sort_triples();
  // Checks ranges, ordering and duplicate (src, dst) pairs.
  void validate() const;

  bool operator==(const SparseMatrix&) const = default;
};

// Entries with |value| > eps become triples. Round-trip with densify is
// the identity at eps = 0.
SparseMatrix coo_from_dense(const Tensor& t, float eps);

Tensor densify(const SparseMatrix& s);

// Tensor binary format: magic "GCVT", u8 version=1, u8 rank, 6 pad bytes,
// rank x u64 LE dims, payload of binary16 LE values, row-major.
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

std::vector<uint8_t> tensor_to_bytes(const Tensor& t);
Tensor tensor_from_bytes(const std::vector<uint8_t>& bytes);

// Edge-list format: one "src dst val" per line, '#' comments allowed.
SparseMatrix read_edge_list(const std::string& path, int64_t n_rows, int64_t n_cols);
void write_edge_list(const std::string& path, const SparseMatrix& s);

struct gcvt_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gcv
