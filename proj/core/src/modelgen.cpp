#include "gcvt/modelgen.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "gcvt/fp16.hpp"

namespace gcv {
namespace {

// All randomness flows through the raw mt19937_64 stream with explicit
// modular mapping, so generated models are identical across platforms.
int rand_below(std::mt19937_64& r, int n) {
  return static_cast<int>(r() % static_cast<uint64_t>(n));
}

std::vector<int> sample_distinct(std::mt19937_64& r, int m, int n) {
  std::vector<int> idx(static_cast<size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n; ++i)
    std::swap(idx[static_cast<size_t>(i)],
              idx[static_cast<size_t>(i + rand_below(r, m - i))]);
  idx.resize(static_cast<size_t>(n));
  return idx;
}

// Nonnegative input values on the 1/4 grid: k/4, k in [0, 8).
Tensor grid_input(std::mt19937_64& r, std::vector<int64_t> dims) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (float& v : t.values) v = 0.25f * static_cast<float>(rand_below(r, 8));
  return t;
}

// Conv weights (c_out, c_in, k1, k2) with nnz ternary taps per output
// channel; the cap bounds per-output accumulation numerators.
Tensor conv_weights(std::mt19937_64& r, int c_out, int c_in, int k, int nnz) {
  Tensor t = Tensor::zeros({c_out, c_in, k, k});
  const int taps = c_in * k * k;
  for (int co = 0; co < c_out; ++co)
    for (int p : sample_distinct(r, taps, std::min(nnz, taps)))
      t.values[static_cast<size_t>(co * taps + p)] = rand_below(r, 2) ? 1.0f : -1.0f;
  return t;
}

// Linear weights (f_in, f_out) with nnz entries per output column.
Tensor linear_weights(std::mt19937_64& r, int f_in, int f_out, int nnz, bool nonneg) {
  Tensor t = Tensor::zeros({f_in, f_out});
  for (int j = 0; j < f_out; ++j)
    for (int i : sample_distinct(r, f_in, std::min(nnz, f_in))) {
      float v = nonneg || rand_below(r, 2) ? 1.0f : -1.0f;
      t.values[static_cast<size_t>(i) * static_cast<size_t>(f_out) +
               static_cast<size_t>(j)] = v;
    }
  return t;
}

// Unit-valued adjacency with deg incoming edges per vertex.
SparseMatrix adjacency(std::mt19937_64& r, int v, int deg) {
  SparseMatrix a;
  a.n_rows = a.n_cols = v;
  for (int dst = 0; dst < v; ++dst) {
    std::vector<int> srcs = sample_distinct(r, v, std::min(deg, v));
    std::sort(srcs.begin(), srcs.end());
    for (int src : srcs)
      a.triples.push_back({static_cast<uint32_t>(src), static_cast<uint32_t>(dst), 1.0f});
  }
  return a;
}

struct Builder {
  ComputationGraph g;
  std::mt19937_64 rng;

  explicit Builder(uint64_t seed) : rng(seed) {}

  void input(std::vector<int64_t> dims) {
    g.input_tensor = "input";
    g.tensors["input"] = grid_input(rng, dims);
    g.input_shape.dims = std::move(dims);
  }

  Layer& add(std::string id, LayerKind kind, LayerParams params,
             std::vector<std::string> inputs) {
    Layer l;
    l.id = std::move(id);
    l.kind = kind;
    l.params = std::move(params);
    l.inputs = std::move(inputs);
    g.nodes.push_back(std::move(l));
    return g.nodes.back();
  }

  void conv(const std::string& id, const std::string& in, int c_in, int c_out, int k,
            int stride, int padding, int nnz) {
    g.tensors[id + "_w"] = conv_weights(rng, c_out, c_in, k, nnz);
    Layer& l = add(id, LayerKind::Conv,
                   ConvParams{c_in, c_out, k, k, stride, padding}, {in});
    l.weights = id + "_w";
  }

  void linear(const std::string& id, const std::string& in, int f_in, int f_out,
              int nnz, bool nonneg = false) {
    g.tensors[id + "_w"] = linear_weights(rng, f_in, f_out, nnz, nonneg);
    Layer& l = add(id, LayerKind::Linear, LinearParams{f_in, f_out}, {in});
    l.weights = id + "_w";
  }

  // Power-of-two scale keeps the affine step exact; the optional half-unit
  // shifts stay on the activation grid.
  void norm(const std::string& id, const std::string& in, int rows, float scale,
            bool shifts) {
    NormParams n;
    n.scale.assign(static_cast<size_t>(rows), scale);
    n.shift.assign(static_cast<size_t>(rows), 0.0f);
    if (shifts)
      for (float& s : n.shift) s = rand_below(rng, 2) ? 0.5f : 0.0f;
    add(id, LayerKind::Norm, std::move(n), {in});
  }

  void relu(const std::string& id, const std::string& in) {
    add(id, LayerKind::Activation, ActivationParams{}, {in});
  }

  void pool(const std::string& id, const std::string& in, PoolKind kind, int window,
            int stride) {
    add(id, LayerKind::Pool, PoolParams{kind, window, stride}, {in});
  }

  void graph_const(const std::string& id, int v, int deg) {
    g.graphs[id] = adjacency(rng, v, deg);
  }

  void mp(const std::string& id, std::vector<std::string> ins, const std::string& adj,
          std::optional<std::pair<int, int>> patch = std::nullopt) {
    MpParams p;
    p.reduction = Reduction::Sum;
    p.adjacency = adj;
    p.patch = patch;
    add(id, LayerKind::MP, std::move(p), std::move(ins));
  }

  void vip(const std::string& id, const std::string& in, const std::string& pattern,
           bool softmax) {
    VipParams p;
    p.edge_pattern = pattern;
    p.softmax = softmax;
    add(id, LayerKind::VIP, std::move(p), {in});
  }

  ComputationGraph finish() {
    for (const Layer& l : g.nodes)
      if (g.consumers(l.id).empty()) g.outputs.push_back(l.id);
    infer_shapes(g);
    return std::move(g);
  }
};

ComputationGraph gen_tiny_cnn(uint64_t seed) {
  Builder b(seed);
  b.input({3, 16, 16});
  b.conv("conv1", "@input", 3, 8, 3, 1, 1, 6);
  b.norm("norm1", "conv1", 8, 0.125f, true);
  b.relu("relu1", "norm1");
  b.pool("pool1", "relu1", PoolKind::Max, 2, 2);
  b.conv("conv2", "pool1", 8, 8, 3, 2, 1, 4);
  b.norm("norm2", "conv2", 8, 0.03125f, false);
  b.relu("relu2", "norm2");
  b.pool("pool2", "relu2", PoolKind::Avg, 2, 2);
  b.linear("fc", "pool2", 4, 4, 2);
  return b.finish();
}

ComputationGraph gen_tiny_gcn(uint64_t seed) {
  Builder b(seed);
  b.input({1024, 8});
  b.graph_const("adj", 1024, 4);
  b.mp("mp1", {"@input"}, "adj");
  b.linear("lin1", "mp1", 8, 16, 3);
  b.norm("norm1", "lin1", 1024, 0.0625f, false);
  b.relu("relu1", "norm1");
  b.mp("mp2", {"relu1"}, "adj");
  b.linear("lin2", "mp2", 16, 8, 4);
  return b.finish();
}

ComputationGraph gen_tiny_gat(uint64_t seed) {
  Builder b(seed);
  b.input({64, 8});
  b.graph_const("edges", 64, 4);
  b.vip("att", "@input", "edges", true);
  b.mp("mp1", {"@input", "att"}, "");
  // Nonnegative head weights: every sum downstream of the softmax is a sum
  // of nonnegative terms, so rounding errors cannot be amplified.
  b.linear("head", "mp1", 8, 8, 4, true);
  b.norm("norm1", "head", 64, 0.25f, false);
  b.relu("relu1", "norm1");
  return b.finish();
}

ComputationGraph gen_tiny_fewshot(uint64_t seed) {
  Builder b(seed);
  b.input({4, 8, 8});
  b.conv("conv1", "@input", 4, 25, 3, 1, 1, 6);
  b.norm("norm1", "conv1", 25, 0.125f, true);
  b.relu("relu1", "norm1");
  b.pool("pool1", "relu1", PoolKind::Max, 2, 2);
  b.graph_const("adj", 25, 2);
  b.mp("mp1", {"pool1"}, "adj");
  b.mp("mp2", {"mp1"}, "adj");
  b.linear("lin1", "mp2", 16, 8, 2);
  return b.finish();
}

ComputationGraph gen_tiny_stgcn(uint64_t seed) {
  Builder b(seed);
  b.input({3, 5, 9});
  b.conv("conv1", "@input", 3, 25, 3, 1, 1, 6);
  b.norm("norm1", "conv1", 25, 0.125f, false);
  b.relu("relu1", "norm1");
  b.graph_const("adj", 25, 4);
  b.mp("mp1", {"relu1"}, "adj");
  b.conv("conv2", "mp1", 25, 8, 3, 2, 1, 3);
  b.norm("norm2", "conv2", 8, 0.03125f, false);
  b.relu("relu2", "norm2");
  b.pool("pool2", "relu2", PoolKind::Avg, 2, 2);
  return b.finish();
}

ComputationGraph gen_tiny_patch(uint64_t seed) {
  Builder b(seed);
  b.input({4, 8, 8});
  b.graph_const("adj", 16, 4);
  b.mp("mp1", {"@input"}, "adj", std::pair<int, int>{2, 2});
  b.linear("lin1", "mp1", 16, 8, 2);
  b.norm("norm1", "lin1", 16, 0.25f, false);
  b.relu("relu1", "norm1");
  return b.finish();
}

}  // namespace

std::vector<std::string> builtin_models() {
  return {"tiny-cnn", "tiny-gcn", "tiny-gat", "tiny-fewshot", "tiny-stgcn",
          "tiny-patch"};
}

bool is_builtin_model(const std::string& name) {
  auto m = builtin_models();
  return std::find(m.begin(), m.end(), name) != m.end();
}

ComputationGraph generate_model(const std::string& name, uint64_t seed) {
  if (name == "tiny-cnn") return gen_tiny_cnn(seed);
  if (name == "tiny-gcn") return gen_tiny_gcn(seed);
  if (name == "tiny-gat") return gen_tiny_gat(seed);
  if (name == "tiny-fewshot") return gen_tiny_fewshot(seed);
  if (name == "tiny-stgcn") return gen_tiny_stgcn(seed);
  if (name == "tiny-patch") return gen_tiny_patch(seed);
  throw gcvt_error("unknown model " + name);
}

}  // namespace gcv
