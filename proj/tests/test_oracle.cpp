#include <doctest.h>

#include <random>
#include <string>

#include "gcvt/fp16.hpp"
#include "gcvt/model_ir.hpp"
#include "gcvt/modelgen.hpp"
#include "gcvt/oracle.hpp"

using namespace gcv;

namespace {

ComputationGraph linear_identity_model(int64_t n, int64_t f) {
  ComputationGraph g;
  g.input_shape.dims = {n, f};
  Tensor w = Tensor::zeros({f, f});
  for (int64_t i = 0; i < f; ++i) w.values[i * f + i] = 1.0f;
  g.tensors["w"] = std::move(w);
  Layer fc;
  fc.id = "fc";
  fc.kind = LayerKind::Linear;
  fc.params = LinearParams{static_cast<int>(f), static_cast<int>(f)};
  fc.inputs = {"@input"};
  fc.weights = "w";
  g.nodes = {fc};
  g.outputs = {"fc"};
  infer_shapes(g);
  return g;
}

Tensor random_input(std::mt19937_64& rng, std::vector<int64_t> dims) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (float& v : t.values)
    v = fp16_round(static_cast<float>(static_cast<int>(rng() % 17)) / 4.0f - 2.0f);
  return t;
}

}  // namespace

TEST_CASE("reference Linear with identity weights passes input through") {
  std::mt19937_64 rng(3);
  Tensor x = random_input(rng, {5, 6});
  ComputationGraph g = linear_identity_model(5, 6);
  RefResult r = run_reference(g, x);
  const DTensor& out = r.dense.at("fc");
  REQUIRE(out.dims == std::vector<int64_t>{5, 6});
  for (size_t i = 0; i < x.values.size(); ++i)
    CHECK(out.values[i] == static_cast<double>(x.values[i]));
}

TEST_CASE("reference conv with delta kernel passes channels through") {
  // 3x3 kernel that is 1 at the center of channel c for output channel c.
  std::mt19937_64 rng(4);
  Tensor x = random_input(rng, {2, 4, 4});
  ComputationGraph g;
  g.input_shape.dims = {2, 4, 4};
  Tensor w = Tensor::zeros({2, 2, 3, 3});
  for (int64_t c = 0; c < 2; ++c) w.values[c * (2 * 9) + c * 9 + 4] = 1.0f;
  g.tensors["w"] = w;
  Layer conv;
  conv.id = "c1";
  conv.kind = LayerKind::Conv;
  conv.params = ConvParams{2, 2, 3, 3, 1, 1};
  conv.inputs = {"@input"};
  conv.weights = "w";
  g.nodes = {conv};
  g.outputs = {"c1"};
  infer_shapes(g);
  RefResult r = run_reference(g, x);
  const DTensor& out = r.dense.at("c1");
  REQUIRE(out.dims == std::vector<int64_t>{2, 4, 4});
  for (size_t i = 0; i < x.values.size(); ++i)
    CHECK(out.values[i] == static_cast<double>(x.values[i]));

  // Standalone direct convolution agrees with the full reference path.
  DTensor direct = direct_conv2d(to_wide(x), w, 1, 1);
  CHECK(direct.values == out.values);
}

TEST_CASE("reference evaluation is invariant to visit order") {
  for (const std::string& name : builtin_models()) {
    CAPTURE(name);
    ComputationGraph g = generate_model(name, 2);
    Tensor x = g.tensors.at(g.input_tensor);
    RefResult a = run_reference(g, x, 0);
    for (uint64_t seed : {1u, 7u, 99u}) {
      RefResult b = run_reference(g, x, seed);
      REQUIRE(b.dense.size() == a.dense.size());
      for (const auto& [id, t] : a.dense) CHECK(b.dense.at(id).values == t.values);
    }
  }
}

TEST_CASE("compare applies the ULP tolerance per element") {
  ComputationGraph g = linear_identity_model(1, 4);
  Tensor x({1, 4}, {1.0f, 2.0f, -3.0f, 0.5f});
  RefResult ref = run_reference(g, x);

  std::map<std::string, Tensor> sim;
  sim["fc"] = x;
  ComparisonReport exact = compare(sim, ref, 0);
  CHECK(exact.pass);
  REQUIRE(exact.outputs.size() == 1);
  CHECK(exact.outputs[0].max_ulp == 0);
  CHECK(exact.outputs[0].ulp_histogram[0] == 4);

  // Perturb one element by exactly one binary16 ULP.
  Tensor off = x;
  off.values[2] = float_from_half_bits(
      static_cast<uint16_t>(half_bits_from_float(off.values[2]) + 1));
  sim["fc"] = off;
  ComparisonReport one = compare(sim, ref, 1);
  CHECK(one.pass);
  CHECK(one.outputs[0].max_ulp == 1);
  ComparisonReport strict = compare(sim, ref, 0);
  CHECK(!strict.pass);
  CHECK(!strict.outputs[0].failures.empty());
  CHECK(!strict.to_json().empty());
}

TEST_CASE("compare flags missing and grossly wrong outputs") {
  ComputationGraph g = linear_identity_model(1, 2);
  Tensor x({1, 2}, {1.0f, 2.0f});
  RefResult ref = run_reference(g, x);
  std::map<std::string, Tensor> sim;
  sim["fc"] = Tensor({1, 2}, {100.0f, 2.0f});
  ComparisonReport r = compare(sim, ref, 2);
  CHECK(!r.pass);
  CHECK(r.outputs[0].max_abs_error == doctest::Approx(99.0));
}
