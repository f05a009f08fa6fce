#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gcvt/model_ir.hpp"

namespace gcv {

// 64-bit tensors used only by the reference path.
struct DTensor {
  std::vector<int64_t> dims;
  std::vector<double> values;

  int64_t rows() const { return dims.empty() ? 0 : dims[0]; }
  int64_t cols() const {
    int64_t c = 1;
    for (size_t i = 1; i < dims.size(); ++i) c *= dims[i];
    return c;
  }
  double& at2(int64_t r, int64_t c) { return values[r * cols() + c]; }
  double at2(int64_t r, int64_t c) const { return values[r * cols() + c]; }
};

struct DSparse {
  int64_t n_rows = 0, n_cols = 0;
  std::vector<uint32_t> src, dst;
  std::vector<double> val;
};

struct RefResult {
  std::map<std::string, DTensor> dense;   // per layer id
  std::map<std::string, DSparse> sparse;  // VIP outputs
};

// Evaluates each layer by its textbook definition in 64-bit arithmetic,
// no lowering, no fp16 rounding. Accepts pre-fusion graphs; CNN/GNN
// boundaries without an explicit DM layer are evaluated with the implied
// layout transformation. visit_seed permutes the evaluation order of
// independent nodes (the result is invariant).
RefResult run_reference(const ComputationGraph& g, const Tensor& input,
                        uint64_t visit_seed = 0);

struct ComparisonReport {
  struct PerOutput {
    std::string id;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;
    int64_t max_ulp = 0;
    std::vector<int64_t> ulp_histogram;  // counts for distance 0,1,2,...,>=8
    bool pass = true;
    std::vector<std::string> failures;   // worst offending indices
  };
  std::vector<PerOutput> outputs;
  bool pass = true;

  std::string to_json() const;
};

// Pass iff every element is within tol binary16 ULPs of
// fp16_round(reference).
ComparisonReport compare(const std::map<std::string, Tensor>& sim_outputs,
                         const RefResult& ref, int64_t tol_ulps);

// Direct 2-D convolution in double precision; standalone oracle used by
// the lowering tests. Input (c_in,h,w), weights (c_out,c_in,k1,k2).
DTensor direct_conv2d(const DTensor& in, const Tensor& weights, int stride, int padding);

DTensor to_wide(const Tensor& t);
Tensor to_fp16(const DTensor& t);

}  // namespace gcv
