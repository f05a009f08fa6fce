#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gcvt/primitives.hpp"
#include "gcvt/tensor.hpp"

namespace gcv {

enum class LayerKind { Conv, MP, Linear, VIP, DM, Pool, Norm, Activation };
enum class DmMode { ChannelToNode, PatchToNode, NodeToChannel };
enum class PoolKind { Max, Avg };

const char* to_string(LayerKind k);
const char* to_string(DmMode m);

struct ConvParams {
  int c_in = 0, c_out = 0, k1 = 1, k2 = 1, stride = 1, padding = 0;
  bool operator==(const ConvParams&) const = default;
};
struct MpParams {
  Reduction reduction = Reduction::Sum;
  std::string adjacency;  // graph id; empty when the adjacency values come
                          // from a VIP producer listed in inputs
  std::optional<std::pair<int, int>> patch;  // (ph, pw) for PatchToNode boundaries
  bool operator==(const MpParams&) const = default;
};
struct LinearParams {
  int f_in = 0, f_out = 0;
  bool operator==(const LinearParams&) const = default;
};
struct VipParams {
  std::string edge_pattern;  // graph id
  bool softmax = false;
  std::optional<std::pair<int, int>> patch;
  bool operator==(const VipParams&) const = default;
};
struct DmParams {
  DmMode mode = DmMode::ChannelToNode;
  int ph = 1, pw = 1;  // PatchToNode patch extents
  bool operator==(const DmParams&) const = default;
};
struct PoolParams {
  PoolKind kind = PoolKind::Max;
  int window = 2, stride = 2;
  bool operator==(const PoolParams&) const = default;
};
struct NormParams {
  std::vector<float> scale, shift;  // per channel / per row
  bool operator==(const NormParams&) const = default;
};
struct ActivationParams {
  // ReLU is the only supported kind.
  bool operator==(const ActivationParams&) const = default;
};

using LayerParams = std::variant<ConvParams, MpParams, LinearParams, VipParams,
                                 DmParams, PoolParams, NormParams, ActivationParams>;

struct EpilogueOp {
  enum Kind { ReLU, NormAffine, RowSoftmax } kind = ReLU;
  std::vector<float> scale, shift;  // NormAffine only
  bool operator==(const EpilogueOp&) const = default;
};

struct Layer {
  std::string id;
  LayerKind kind = LayerKind::Linear;
  LayerParams params;
  std::vector<std::string> inputs;  // producer layer ids, or "@input"
  std::string weights;              // tensor id (Conv / Linear)

  // Fusion state, populated by fuse_layers.
  std::vector<EpilogueOp> epilogue;
  std::optional<DmParams> fused_dm;  // DM layer absorbed as input-layout attribute
  std::string output_alias;  // id of an absorbed sink layer this one now answers for

  bool operator==(const Layer&) const = default;
};

// Annotated shape of a value flowing along a graph edge. 2-D node-feature
// shapes may carry the spatial grid they originated from, so a later
// NodeToChannel boundary can recover (h, w).
struct Shape {
  std::vector<int64_t> dims;
  bool sparse = false;  // VIP edge-score output
  std::optional<std::pair<int64_t, int64_t>> grid;

  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct ComputationGraph {
  std::vector<Layer> nodes;  // topological order after validation
  std::map<std::string, Tensor> tensors;
  std::map<std::string, SparseMatrix> graphs;
  std::string input_tensor;  // tensor id bound to "@input"
  Shape input_shape;
  std::vector<std::string> outputs;            // sink layer ids
  std::map<std::string, Shape> output_shapes;  // per layer id

  const Layer& layer(const std::string& id) const;
  Layer& layer(const std::string& id);
  std::vector<std::string> consumers(const std::string& id) const;

  bool operator==(const ComputationGraph&) const = default;
};

// Parses the JSON model format into a validated graph with shapes
// inferred on every edge. File references are resolved against base_dir.
ComputationGraph parse_model(const std::string& text, const std::string& base_dir = "");
ComputationGraph parse_model_file(const std::string& path);

// Serializes a graph back to the model format (tensors and graphs
// inline). parse_model(serialize_model(g)) == g.
std::string serialize_model(const ComputationGraph& g);

// Returns all invariant violations (cycle, unreachable node, shape
// conflict); empty means ok. Does not throw on violations.
std::vector<std::string> validate_graph(const ComputationGraph& g);

// Shape inference. CNN->GNN boundary mismatches that a DM layer could
// reconcile are tolerated when allow_dm_boundaries is set; any other
// inconsistency throws with both layer ids.
void infer_shapes(ComputationGraph& g, bool allow_dm_boundaries = true);

// Deterministic seeded tensor with uniform values in [-1, 1), fp16-rounded.
Tensor seeded_tensor(uint64_t seed, std::vector<int64_t> dims);

}  // namespace gcv
