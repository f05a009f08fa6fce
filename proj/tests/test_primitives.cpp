#include <doctest.h>

#include <algorithm>
#include <random>

#include "gcvt/fp16.hpp"
#include "gcvt/primitives.hpp"

using namespace gcv;

namespace {

int64_t cdiv(int64_t a, int64_t b) { return (a + b - 1) / b; }

Tensor random_fp16(std::mt19937_64& rng, int64_t r, int64_t c) {
  Tensor t = Tensor::zeros({r, c});
  for (float& v : t.values)
    v = fp16_round(static_cast<float>(static_cast<int64_t>(rng() % 4001) - 2000) / 512.0f);
  return t;
}

// Independent wide-precision matmul oracle with ascending-k accumulation
// mirrored, then rounded once per element.
Tensor wide_matmul_fp16(const Tensor& x, const Tensor& y) {
  Tensor z = Tensor::zeros({x.rows(), y.cols()});
  for (int64_t i = 0; i < x.rows(); ++i)
    for (int64_t j = 0; j < y.cols(); ++j) {
      float acc = 0.0f;  // the production policy accumulates in fp32
      for (int64_t k = 0; k < x.cols(); ++k) acc += x.at2(i, k) * y.at2(k, j);
      z.at2(i, j) = fp16_round(acc);
    }
  return z;
}

}  // namespace

TEST_CASE("cost formulas match hand evaluation") {
  CostModel p16{16}, p4{4};
  CHECK(p16.ddmm(16, 16, 16) == 48);
  CHECK(p4.ddmm(8, 4, 8) == 2 * 2 * (4 + 8));
  CHECK(p4.spdmm(16, 4) == 8);
  CHECK(p16.spdmm(0, 64) == 0);
  CHECK(p16.spdmm(100, 48) == 13 * 3);
  CHECK(p4.sddmm(8, 8) == 4 * 2);
  CHECK(p16.sddmm(0, 16) == 0);
  CHECK(p16.sddmm(75, 9600) == 10 * 600);
  CHECK(p4.psvm_pvva(2, 4) == 1);
  CHECK(p16.psvm_pvva(64, 64) == 8 * 4);
  CHECK(p16.dm_stream(256) == 16);
}

TEST_CASE("cost formulas equal the closed forms over a randomized sweep") {
  std::mt19937_64 rng(2);
  for (int c = 0; c < 200; ++c) {
    int p = std::vector<int>{4, 8, 16}[rng() % 3];
    CostModel cm{p};
    int64_t s1 = 1 + static_cast<int64_t>(rng() % 200);
    int64_t s2 = 1 + static_cast<int64_t>(rng() % 200);
    int64_t s3 = 1 + static_cast<int64_t>(rng() % 200);
    int64_t nnz = static_cast<int64_t>(rng() % 5000);
    CHECK(cm.ddmm(s1, s2, s3) == cdiv(s1, p) * cdiv(s3, p) * (s2 + 2 * p));
    CHECK(cm.spdmm(nnz, s3) == cdiv(nnz, p / 2) * cdiv(s3, p));
    CHECK(cm.sddmm(nnz, s2) == cdiv(nnz, p / 2) * cdiv(s2, p));
    CHECK(cm.psvm_pvva(s1, s3) == cdiv(s1, p / 2) * cdiv(s3, p));
    // Monotonicity in every argument.
    CHECK(cm.ddmm(s1 + 1, s2, s3) >= cm.ddmm(s1, s2, s3));
    CHECK(cm.ddmm(s1, s2 + 1, s3) >= cm.ddmm(s1, s2, s3));
    CHECK(cm.spdmm(nnz + 1, s3) >= cm.spdmm(nnz, s3));
    CHECK(cm.sddmm(nnz, s2 + 1) >= cm.sddmm(nnz, s2));
  }
}

TEST_CASE("ddmm basics") {
  Tensor i2({2, 2}, {1, 0, 0, 1});
  Tensor y({2, 2}, {1, 2, 3, 4});
  CHECK(ddmm(i2, y) == y);
  CHECK(ddmm(Tensor({1, 1}, {2}), Tensor({1, 1}, {3})) == Tensor({1, 1}, {6}));
  CHECK_THROWS(ddmm(Tensor({1, 2}, {1, 2}), Tensor({3, 1}, {1, 2, 3})));
}

TEST_CASE("ddmm equals wide oracle on random inputs") {
  std::mt19937_64 rng(3);
  for (int c = 0; c < 50; ++c) {
    Tensor x = random_fp16(rng, 3, 4), y = random_fp16(rng, 4, 2);
    CHECK(ddmm(x, y) == wide_matmul_fp16(x, y));
  }
}

TEST_CASE("spdmm basics and identity") {
  SparseMatrix id2;
  id2.n_rows = id2.n_cols = 2;
  id2.triples = {{0, 0, 1.0f}, {1, 1, 1.0f}};
  Tensor y({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(spdmm(id2, y) == y);

  SparseMatrix s;
  s.n_rows = s.n_cols = 2;
  s.triples = {{1, 0, 2.0f}};
  Tensor y2 = Tensor::zeros({2, 2});
  y2.at2(1, 0) = 3;
  y2.at2(1, 1) = 4;
  Tensor z = spdmm(s, y2);
  CHECK(z == Tensor({2, 2}, {6, 8, 0, 0}));
}

TEST_CASE("spdmm equals ddmm on densified operands, bitwise") {
  std::mt19937_64 rng(4);
  for (int c = 0; c < 100; ++c) {
    int64_t n = 16;
    Tensor x = Tensor::zeros({n, n});
    for (float& v : x.values)
      if (rng() % 10 == 0)
        v = fp16_round(static_cast<float>(static_cast<int64_t>(rng() % 200) - 100) / 16.0f);
    Tensor y = random_fp16(rng, n, 8);
    CHECK(spdmm(coo_from_dense(x, 0.0f), y) == ddmm(x, y));
  }
}

TEST_CASE("spdmm max reduction, zero identity") {
  SparseMatrix s;
  s.n_rows = s.n_cols = 3;
  s.triples = {{1, 0, 1.0f}, {0, 1, 1.0f}, {2, 1, 1.0f}, {1, 2, 1.0f}};
  Tensor h({3, 1}, {1, 2, 3});
  CHECK(spdmm(s, h, Reduction::Sum) == Tensor({3, 1}, {2, 4, 2}));
  CHECK(spdmm(s, h, Reduction::Max) == Tensor({3, 1}, {2, 3, 2}));
  // The max accumulator starts at 0 (features are assumed nonnegative):
  // rows with no triples stay 0, and negative products clamp to 0.
  SparseMatrix one;
  one.n_rows = one.n_cols = 2;
  one.triples = {{0, 1, 1.0f}};
  CHECK(spdmm(one, Tensor({2, 1}, {-5, -7}), Reduction::Max) == Tensor({2, 1}, {0, 0}));
  CHECK(spdmm(one, Tensor({2, 1}, {5, 7}), Reduction::Max) == Tensor({2, 1}, {0, 5}));
}

TEST_CASE("sddmm basics") {
  SparseMatrix empty;
  empty.n_rows = empty.n_cols = 4;
  Tensor x({4, 2}, {1, 2, 0, 0, 0, 0, 0, 0});
  Tensor y({2, 4}, {3, 0, 0, 0, 4, 0, 0, 0});
  CHECK(sddmm(empty, x, y).triples.empty());

  SparseMatrix p1;
  p1.n_rows = p1.n_cols = 4;
  p1.triples = {{0, 0, 1.0f}};  // sample position (row 0, col 0)
  SparseMatrix r = sddmm(p1, x, y);
  REQUIRE(r.triples.size() == 1);
  CHECK(r.triples[0].val == 11.0f);  // <[1,2], [3,4]>
}

TEST_CASE("sddmm with full pattern equals ddmm") {
  std::mt19937_64 rng(6);
  Tensor x = random_fp16(rng, 4, 6), y = random_fp16(rng, 6, 4);
  SparseMatrix full;
  full.n_rows = full.n_cols = 4;
  for (uint32_t i = 0; i < 4; ++i)
    for (uint32_t j = 0; j < 4; ++j) full.triples.push_back({j, i, 1.0f});
  full.sort_triples();
  CHECK(densify(sddmm(full, x, y)) == ddmm(x, y));
}

TEST_CASE("psvm and pvva") {
  CHECK(psvm({2}, Tensor({1, 4}, {1, 2, 3, 4})) == Tensor({1, 4}, {2, 4, 6, 8}));
  Tensor y({2, 2}, {1, -2, 3, 4});
  CHECK(psvm({1, 1}, y) == y);
  CHECK(pvva(y, Tensor::zeros({2, 2})) == y);
  CHECK(pvva(Tensor({1, 1}, {1}), Tensor({1, 1}, {2})) == Tensor({1, 1}, {3}));
  std::mt19937_64 rng(8);
  Tensor a = random_fp16(rng, 5, 7), b = random_fp16(rng, 5, 7);
  Tensor z = pvva(a, b);
  for (int64_t i = 0; i < 35; ++i)
    CHECK(z.values[i] == fp16_round(a.values[i] + b.values[i]));
  std::vector<float> sv = {0.5f, -1.5f, 2.0f, 0.25f, 3.0f};
  Tensor zs = psvm(sv, a);
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 7; ++j)
      CHECK(zs.at2(i, j) == fp16_round(sv[static_cast<size_t>(i)] * a.at2(i, j)));
}

TEST_CASE("shuffle permutes rows only") {
  std::mt19937_64 rng(9);
  Tensor x = random_fp16(rng, 8, 8), y = random_fp16(rng, 8, 8);
  Permutation perm(8);
  for (uint32_t i = 0; i < 8; ++i) perm[i] = (i + 3) % 8;
  Tensor plain = ddmm(x, y);
  Tensor shuf = ddmm(x, y, perm);
  for (int64_t i = 0; i < 8; ++i)
    for (int64_t j = 0; j < 8; ++j)
      CHECK(shuf.at2(perm[static_cast<size_t>(i)], j) == plain.at2(i, j));
  CHECK_THROWS(ddmm(x, y, Permutation{0, 0, 1, 2, 3, 4, 5, 6}));
}

TEST_CASE("tiled accumulation is bitwise identical to untiled") {
  std::mt19937_64 rng(10);
  for (int c = 0; c < 20; ++c) {
    int64_t s1 = 24, s2 = 40, s3 = 24;
    Tensor x = random_fp16(rng, s1, s2), y = random_fp16(rng, s2, s3);
    Tensor whole = ddmm(x, y);

    // Persistent accumulator, k tiles ascending, arbitrary (i, j) blocks.
    std::vector<float> acc(static_cast<size_t>(s1 * s3), 0.0f);
    Tensor out = Tensor::zeros({s1, s3});
    int64_t ti = 16, tj = 16, tk = 16;
    for (int64_t i0 = 0; i0 < s1; i0 += ti)
      for (int64_t j0 = 0; j0 < s3; j0 += tj) {
        int64_t m = std::min(ti, s1 - i0), n = std::min(tj, s3 - j0);
        for (int64_t k0 = 0; k0 < s2; k0 += tk) {
          int64_t kk = std::min(tk, s2 - k0);
          ddmm_acc(x.values.data(), s2, y.values.data(), s3, acc.data(), s3, i0, m, k0,
                   kk, j0, n);
        }
        commit_rows(acc.data() + j0, s3, out.values.data() + j0, s3, i0, m, n);
      }
    CHECK(out == whole);
  }
}

TEST_CASE("tiled spdmm slices agree with whole-matrix spdmm") {
  std::mt19937_64 rng(12);
  int64_t n = 32, f = 24;
  Tensor xd = Tensor::zeros({n, n});
  for (float& v : xd.values)
    if (rng() % 6 == 0)
      v = fp16_round(static_cast<float>(static_cast<int64_t>(rng() % 64) - 32) / 8.0f);
  SparseMatrix x = coo_from_dense(xd, 0.0f);
  Tensor y = random_fp16(rng, n, f);
  Tensor whole = spdmm(x, y);

  std::vector<float> acc(static_cast<size_t>(n * f), 0.0f);
  Tensor out = Tensor::zeros({n, f});
  // Split the triple list by source-row blocks (ascending reduction order)
  // and the columns in two halves.
  for (int64_t j0 = 0; j0 < f; j0 += 12)
    for (uint32_t kb = 0; kb < n; kb += 8) {
      std::vector<Triple> slice;
      for (const Triple& t : x.triples)
        if (t.src >= kb && t.src < kb + 8) slice.push_back(t);
      spdmm_acc(slice, Reduction::Sum, y.values.data(), f, acc.data(), f, j0, 12);
    }
  commit_rows(acc.data(), f, out.values.data(), f, 0, n, f);
  CHECK(out == whole);
}
