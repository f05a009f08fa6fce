#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcvt/model_ir.hpp"

namespace gcv {

enum class OpKind { MatMul, SparseMatMul, SampledMatMul, ScaleRows, Add, Transpose };
enum class Provenance { CNN, GNN, DM, Other };

const char* to_string(OpKind k);
const char* to_string(Provenance p);

// Reads a source value through a 2-D spatial offset on its feature-map
// grid: element (y, x) of the destination grid reads source position
// (y*stride + dy, x*stride + dx); positions outside the source grid (the
// shift never wraps across image rows) contribute zero.
struct ShiftRead {
  bool present = false;
  int64_t h_src = 0, w_src = 0;
  int64_t dy = 0, dx = 0;
  int64_t stride = 1;

  bool operator==(const ShiftRead&) const = default;
};

struct MatrixOp {
  int result = -1;
  OpKind kind = OpKind::MatMul;
  Provenance prov = Provenance::Other;
  std::string layer_id;

  int a = -1, b = -1;  // operand value ids; Add may have b == -1 (add zero)
  int64_t s1 = 0, s2 = 0, s3 = 0;

  Reduction reduction = Reduction::Sum;  // SparseMatMul
  bool col_mode = false;   // SparseMatMul over columns (pooling selection)
  double sparsity_hint = 1.0;  // density estimate of the sparse-candidate operand

  // Add: shift-add metadata; dst grid is (h_dst, w_dst).
  ShiftRead shift_a, shift_b;
  int64_t h_dst = 0, w_dst = 0;

  // Transpose (DM): patch-to-node geometry; identity copy when ph*pw == 0.
  DmMode dm_mode = DmMode::ChannelToNode;
  int64_t ph = 0, pw = 0;
  int64_t src_h = 0, src_w = 0;

  std::vector<EpilogueOp> epilogue;
  std::optional<Permutation> output_shuffle;

  bool operator==(const MatrixOp&) const = default;
};

struct ProgramValue {
  int id = -1;
  std::string name;
  bool sparse = false;
  int64_t rows = 0, cols = 0;
  std::optional<Tensor> cdense;        // compile-time dense constant
  std::optional<SparseMatrix> csparse; // compile-time sparse constant
  std::optional<SparseMatrix> pattern; // sparsity pattern of a computed sparse value

  bool operator==(const ProgramValue&) const = default;
};

struct MatrixProgram {
  std::vector<ProgramValue> values;
  std::vector<MatrixOp> ops;
  int input_value = -1;
  // Sink layer id -> value id holding its result.
  std::vector<std::pair<std::string, int>> outputs;
  // Per source-model-layer op ranges [begin, end), in program order.
  std::vector<std::string> layer_ids;
  std::vector<std::pair<int, int>> layer_op_ranges;

  const ProgramValue& value(int id) const { return values.at(static_cast<size_t>(id)); }
  bool operator==(const MatrixProgram&) const = default;
};

// --------------------------------------------------------------------
// Graph transforms (compilation steps 1-2 with the DM optimizations).
// --------------------------------------------------------------------

// Inserts a DM layer at every CNN/GNN boundary; mode chosen by the
// declared vertex count of the graph-side layer.
ComputationGraph insert_dm_layers(const ComputationGraph& g);

// Absorbs Activation/Norm layers into their producer's epilogue and DM
// layers into their consumer as a layout attribute. Idempotent.
ComputationGraph fuse_layers(const ComputationGraph& g);

// --------------------------------------------------------------------
// Layer-to-matrix-operation lowering.
// --------------------------------------------------------------------

// Lowers a whole (fused or unfused) graph to a MatrixProgram in
// topological order.
MatrixProgram lower_graph(const ComputationGraph& g);

// Per-layer entry points building a one-layer program around a fresh
// input value; used by unit tests and lower_graph alike.
MatrixProgram lower_conv(const ComputationGraph& g, const Layer& layer,
                         const Shape& in_shape);
MatrixProgram lower_mp(const ComputationGraph& g, const Layer& layer,
                       const Shape& in_shape);
MatrixProgram lower_linear(const ComputationGraph& g, const Layer& layer,
                           const Shape& in_shape);
MatrixProgram lower_vip(const ComputationGraph& g, const Layer& layer,
                        const Shape& in_shape);
MatrixProgram lower_pool(const ComputationGraph& g, const Layer& layer,
                         const Shape& in_shape);

// One op per line: id, kind, operands, shape, provenance.
std::string dump_program(const MatrixProgram& p);

// --------------------------------------------------------------------
// Program evaluation.
// --------------------------------------------------------------------

struct EvalResult {
  std::map<int, Tensor> dense;
  std::map<int, SparseMatrix> sparse;
};

// Executes the program with the production fp16 policy (32-bit
// accumulation, binary16 rounding at op output).
EvalResult evaluate_program(const MatrixProgram& p, const Tensor& input);

struct WideEvalResult {
  std::map<int, std::vector<double>> dense;
  std::map<int, std::vector<double>> sparse_vals;
};

// Executes the program entirely in 64-bit arithmetic with no rounding;
// used for structural-equality checks against wide references.
WideEvalResult evaluate_program_wide(const MatrixProgram& p, const Tensor& input);

// ---- helpers shared by the evaluator and the simulator ----

// Returns element (row, y, x) of the destination grid; zero outside the
// source grid.
float shift_read_f32(const float* v, int64_t row_stride, int64_t row,
                     const ShiftRead& s, int64_t y, int64_t x);

// Column-mode scatter-gather: acc[:, dst] op= val * y[:, src] over all
// rows, used by the pooling selection matrices.
void spdmm_col_acc(std::span<const Triple> triples, Reduction red, const float* y,
                   int64_t y_stride, int64_t rows, float* acc, int64_t acc_stride);

// Applies NormAffine / ReLU epilogue ops to a block of fp32 accumulators;
// row indices are global (scale/shift are indexed by i0+i). RowSoftmax is
// handled by the sampled-matmul path and rejected here.
void apply_epilogue_f32(const std::vector<EpilogueOp>& eps, float* acc,
                        int64_t acc_stride, int64_t i0, int64_t m, int64_t n);

// Row-wise softmax over the entries of a (dst,src)-sorted pattern;
// computed in double, results not yet fp16-rounded.
void apply_row_softmax(std::span<const Triple> pattern, float* vals);

std::vector<float> transpose_f32(const float* x, int64_t rows, int64_t cols);

// PatchToNode element mapping: node (y/ph)*gw + x/pw, feature
// ch*ph*pw + (y%ph)*pw + (x%pw).
void patch_to_node_f32(const float* in, int64_t c, int64_t h, int64_t w,
                       int64_t ph, int64_t pw, float* out);

}  // namespace gcv
