#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "gcvt/fp16.hpp"
#include "gcvt/tensor.hpp"

using namespace gcv;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Tensor random_fp16_tensor(std::mt19937_64& rng, std::vector<int64_t> dims) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (float& v : t.values)
    v = fp16_round(static_cast<float>(static_cast<int64_t>(rng() % 2001)) / 1000.0f -
                   1.0f);
  return t;
}

}  // namespace

TEST_CASE("coo_from_dense basics") {
  Tensor id2({2, 2}, {1, 0, 0, 1});
  SparseMatrix s = coo_from_dense(id2, 0.0f);
  CHECK(s.triples.size() == 2);
  CHECK(s.density() == 0.5);
  CHECK(densify(s) == id2);

  Tensor zero3 = Tensor::zeros({3, 3});
  CHECK(coo_from_dense(zero3, 0.0f).triples.empty());
}

TEST_CASE("coo_from_dense round-trip on random matrices") {
  std::mt19937_64 rng(11);
  for (int c = 0; c < 20; ++c) {
    Tensor t = Tensor::zeros({8, 8});
    int nnz = 0;
    for (float& v : t.values)
      if (rng() % 4 == 0) {
        v = fp16_round(static_cast<float>(rng() % 100) / 8.0f + 0.25f);
        ++nnz;
      }
    SparseMatrix s = coo_from_dense(t, 0.0f);
    CHECK(static_cast<int>(s.triples.size()) == nnz);
    CHECK(densify(s) == t);
    s.validate();  // sorted, in range, no duplicates
  }
}

TEST_CASE("tensor binary format round-trip and header") {
  std::mt19937_64 rng(5);
  Tensor t = random_fp16_tensor(rng, {3, 4, 5});
  std::vector<uint8_t> bytes = tensor_to_bytes(t);
  // 12-byte header (magic, version, rank, 6 pad), 3 x u64 dims, fp16 data.
  REQUIRE(bytes.size() == 12 + 3 * 8 + 2 * 60);
  CHECK(bytes[0] == 'G');
  CHECK(bytes[1] == 'C');
  CHECK(bytes[2] == 'V');
  CHECK(bytes[3] == 'T');
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 3);
  CHECK(bytes[12] == 3);  // first dim, little-endian u64
  CHECK(bytes[20] == 4);
  CHECK(bytes[28] == 5);
  CHECK(tensor_from_bytes(bytes) == t);

  std::string path = temp_path("gcv_tensor_test.bin");
  write_tensor_file(path, t);
  CHECK(read_tensor_file(path) == t);
  std::remove(path.c_str());
}

TEST_CASE("edge list round-trip") {
  SparseMatrix s;
  s.n_rows = 4;
  s.n_cols = 4;
  s.triples = {{1, 0, 2.0f}, {0, 1, 1.0f}, {3, 2, -0.5f}};
  s.sort_triples();
  std::string path = temp_path("gcv_edges_test.txt");
  write_edge_list(path, s);
  SparseMatrix r = read_edge_list(path, 4, 4);
  CHECK(r == s);
  std::remove(path.c_str());
}

TEST_CASE("sparse matrix validation catches bad input") {
  SparseMatrix s;
  s.n_rows = 2;
  s.n_cols = 2;
  s.triples = {{5, 0, 1.0f}};  // src out of range
  CHECK_THROWS_AS(s.validate(), gcvt_error);

  s.triples = {{0, 0, 1.0f}, {0, 0, 2.0f}};  // duplicate (src, dst)
  CHECK_THROWS_AS(s.validate(), gcvt_error);
}
