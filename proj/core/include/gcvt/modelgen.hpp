#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcvt/model_ir.hpp"

namespace gcv {

// Built-in seeded benchmark models. All weights are sparse ternary values
// and every activation stays on a dyadic grid with a small numerator, so
// the binary16 pipeline agrees with a wide-precision reference to within
// rounding of the final commit.
std::vector<std::string> builtin_models();
bool is_builtin_model(const std::string& name);

// Deterministic: the same (name, seed) always yields an identical graph,
// including the bound input tensor.
ComputationGraph generate_model(const std::string& name, uint64_t seed);

}  // namespace gcv
