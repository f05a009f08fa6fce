#include "gcvt/lowering.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gcvt/fp16.hpp"

namespace gcv {

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return "MatMul";
    case OpKind::SparseMatMul: return "SparseMatMul";
    case OpKind::SampledMatMul: return "SampledMatMul";
    case OpKind::ScaleRows: return "ScaleRows";
    case OpKind::Add: return "Add";
    case OpKind::Transpose: return "Transpose";
  }
  return "?";
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::CNN: return "CNN";
    case Provenance::GNN: return "GNN";
    case Provenance::DM: return "DM";
    case Provenance::Other: return "Other";
  }
  return "?";
}

// --------------------------------------------------------------------
// Shared kernels
// --------------------------------------------------------------------

float shift_read_f32(const float* v, int64_t row_stride, int64_t row,
                     const ShiftRead& s, int64_t y, int64_t x) {
  int64_t sy = y * s.stride + s.dy;
  int64_t sx = x * s.stride + s.dx;
  if (sy < 0 || sy >= s.h_src || sx < 0 || sx >= s.w_src) return 0.0f;
  return v[row * row_stride + sy * s.w_src + sx];
}

void spdmm_col_acc(std::span<const Triple> triples, Reduction red, const float* y,
                   int64_t y_stride, int64_t rows, float* acc, int64_t acc_stride) {
  for (const Triple& t : triples)
    for (int64_t r = 0; r < rows; ++r) {
      float m = t.val * y[r * y_stride + t.src];
      float& z = acc[r * acc_stride + t.dst];
      if (red == Reduction::Sum) z += m;
      else z = std::max(z, m);
    }
}

void apply_epilogue_f32(const std::vector<EpilogueOp>& eps, float* acc,
                        int64_t acc_stride, int64_t i0, int64_t m, int64_t n) {
  for (const EpilogueOp& e : eps) {
    switch (e.kind) {
      case EpilogueOp::ReLU:
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            acc[i * acc_stride + j] = std::max(0.0f, acc[i * acc_stride + j]);
        break;
      case EpilogueOp::NormAffine:
        for (int64_t i = 0; i < m; ++i) {
          float s = e.scale[static_cast<size_t>(i0 + i)];
          float b = e.shift[static_cast<size_t>(i0 + i)];
          for (int64_t j = 0; j < n; ++j)
            acc[i * acc_stride + j] = s * acc[i * acc_stride + j] + b;
        }
        break;
      case EpilogueOp::RowSoftmax:
        throw gcvt_error("RowSoftmax epilogue outside a sampled matmul");
    }
  }
}

void apply_row_softmax(std::span<const Triple> pattern, float* vals) {
  size_t e = 0;
  const size_t n = pattern.size();
  while (e < n) {
    size_t begin = e;
    while (e < n && pattern[e].dst == pattern[begin].dst) ++e;
    double m = -HUGE_VAL;
    for (size_t i = begin; i < e; ++i) m = std::max(m, static_cast<double>(vals[i]));
    double denom = 0.0;
    for (size_t i = begin; i < e; ++i) denom += std::exp(vals[i] - m);
    for (size_t i = begin; i < e; ++i)
      vals[i] = static_cast<float>(std::exp(vals[i] - m) / denom);
  }
}

std::vector<float> transpose_f32(const float* x, int64_t rows, int64_t cols) {
  std::vector<float> out(static_cast<size_t>(rows * cols));
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j)
      out[static_cast<size_t>(j * rows + i)] = x[i * cols + j];
  return out;
}

void patch_to_node_f32(const float* in, int64_t c, int64_t h, int64_t w,
                       int64_t ph, int64_t pw, float* out) {
  const int64_t gw = w / pw;
  const int64_t f = c * ph * pw;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        int64_t node = (y / ph) * gw + (x / pw);
        int64_t feat = ch * ph * pw + (y % ph) * pw + (x % pw);
        out[node * f + feat] = in[(ch * h + y) * w + x];
      }
}

// --------------------------------------------------------------------
// Graph transforms
// --------------------------------------------------------------------

static bool is_gnn_kind(LayerKind k) { return k == LayerKind::MP || k == LayerKind::VIP; }

static int64_t vertex_count(const ComputationGraph& g, const Layer& l) {
  if (const auto* mp = std::get_if<MpParams>(&l.params)) {
    if (!mp->adjacency.empty()) return g.graphs.at(mp->adjacency).n_rows;
    for (size_t i = 1; i < l.inputs.size(); ++i) {
      auto it = g.output_shapes.find(l.inputs[i]);
      if (it != g.output_shapes.end() && it->second.sparse) return it->second.dims[0];
    }
    throw gcvt_error("layer " + l.id + ": cannot determine vertex count");
  }
  const auto& vip = std::get<VipParams>(l.params);
  return g.graphs.at(vip.edge_pattern).n_rows;
}

static std::optional<std::pair<int, int>> layer_patch(const Layer& l) {
  if (const auto* mp = std::get_if<MpParams>(&l.params)) return mp->patch;
  if (const auto* vip = std::get_if<VipParams>(&l.params)) return vip->patch;
  return std::nullopt;
}

ComputationGraph insert_dm_layers(const ComputationGraph& g) {
  ComputationGraph out = g;
  std::vector<Layer> nodes;
  for (const Layer& l : out.nodes) {
    Layer cur = l;
    const Shape* in_shape = nullptr;
    if (!cur.inputs.empty()) {
      if (cur.inputs[0] == "@input") in_shape = &out.input_shape;
      else in_shape = &out.output_shapes.at(cur.inputs[0]);
    }
    if (in_shape && is_gnn_kind(cur.kind) && in_shape->dims.size() == 3) {
      int64_t v = vertex_count(out, cur);
      Layer dm;
      dm.id = "dm_" + cur.id;
      dm.kind = LayerKind::DM;
      dm.inputs = {cur.inputs[0]};
      DmParams dp;
      if (in_shape->dims[0] == v) {
        dp.mode = DmMode::ChannelToNode;
      } else if (auto patch = layer_patch(cur)) {
        dp.mode = DmMode::PatchToNode;
        dp.ph = patch->first;
        dp.pw = patch->second;
      } else {
        throw gcvt_error("layer " + cur.id + ": no DM mode reconciles its input");
      }
      dm.params = dp;
      cur.inputs[0] = dm.id;
      nodes.push_back(std::move(dm));
    } else if (in_shape && cur.kind == LayerKind::Conv && in_shape->dims.size() == 2 &&
               !in_shape->sparse) {
      Layer dm;
      dm.id = "dm_" + cur.id;
      dm.kind = LayerKind::DM;
      dm.inputs = {cur.inputs[0]};
      dm.params = DmParams{DmMode::NodeToChannel, 1, 1};
      cur.inputs[0] = dm.id;
      nodes.push_back(std::move(dm));
    }
    nodes.push_back(std::move(cur));
  }
  out.nodes = std::move(nodes);
  infer_shapes(out);
  return out;
}

static bool has_epilogue_kind(const Layer& l, EpilogueOp::Kind k) {
  for (const EpilogueOp& e : l.epilogue)
    if (e.kind == k) return true;
  return false;
}

ComputationGraph fuse_layers(const ComputationGraph& g) {
  ComputationGraph out = g;
  std::vector<std::string> removed;
  auto is_removed = [&](const std::string& id) {
    return std::find(removed.begin(), removed.end(), id) != removed.end();
  };
  auto live_consumers = [&](const std::string& id) {
    std::vector<std::string> cs;
    for (const std::string& c : out.consumers(id))
      if (!is_removed(c)) cs.push_back(c);
    return cs;
  };

  // Epilogue fusion: Norm / Activation folds into its sole producer.
  for (Layer& l : out.nodes) {
    if (l.kind != LayerKind::Norm && l.kind != LayerKind::Activation) continue;
    if (l.inputs.size() != 1 || l.inputs[0] == "@input") continue;
    Layer& prod = out.layer(l.inputs[0]);
    bool fusible = prod.kind == LayerKind::Conv || prod.kind == LayerKind::MP ||
                   prod.kind == LayerKind::Linear || prod.kind == LayerKind::Pool;
    if (!fusible || is_removed(prod.id)) continue;
    if (live_consumers(prod.id).size() != 1) continue;
    EpilogueOp ep;
    if (l.kind == LayerKind::Activation) {
      ep.kind = EpilogueOp::ReLU;
      if (has_epilogue_kind(prod, EpilogueOp::ReLU)) continue;
    } else {
      const auto& np = std::get<NormParams>(l.params);
      ep.kind = EpilogueOp::NormAffine;
      ep.scale = np.scale;
      ep.shift = np.shift;
      if (has_epilogue_kind(prod, EpilogueOp::NormAffine)) continue;
    }
    prod.epilogue.push_back(std::move(ep));
    for (Layer& c : out.nodes)
      for (std::string& in : c.inputs)
        if (in == l.id) in = prod.id;
    std::string alias = l.output_alias.empty() ? l.id : l.output_alias;
    for (std::string& o : out.outputs)
      if (o == l.id) {
        o = prod.id;
        prod.output_alias = alias;
      }
    removed.push_back(l.id);
  }

  // DM fusion: the layout transform becomes an attribute of the consumer.
  for (Layer& l : out.nodes) {
    if (l.kind != LayerKind::DM || is_removed(l.id)) continue;
    const auto& dp = std::get<DmParams>(l.params);
    std::vector<std::string> cs = live_consumers(l.id);
    if (cs.empty()) continue;  // DM is a sink; nothing to hide it behind
    bool fused_all = true;
    for (const std::string& cid : cs) {
      Layer& c = out.layer(cid);
      if (c.fused_dm) {
        fused_all = false;
        continue;
      }
      c.fused_dm = dp;
      if (dp.mode == DmMode::PatchToNode) {
        if (auto* mp = std::get_if<MpParams>(&c.params)) mp->patch = {dp.ph, dp.pw};
        if (auto* vip = std::get_if<VipParams>(&c.params)) vip->patch = {dp.ph, dp.pw};
      }
      for (std::string& in : c.inputs)
        if (in == l.id) in = l.inputs[0];
    }
    if (fused_all) removed.push_back(l.id);
  }

  std::vector<Layer> kept;
  for (Layer& l : out.nodes)
    if (!is_removed(l.id)) kept.push_back(std::move(l));
  out.nodes = std::move(kept);
  infer_shapes(out);
  return out;
}

// --------------------------------------------------------------------
// Lowering
// --------------------------------------------------------------------

namespace {

struct Builder {
  MatrixProgram p;

  int add_value(std::string name, int64_t rows, int64_t cols, bool sparse = false) {
    ProgramValue v;
    v.id = static_cast<int>(p.values.size());
    v.name = std::move(name);
    v.sparse = sparse;
    v.rows = rows;
    v.cols = cols;
    p.values.push_back(std::move(v));
    return p.values.back().id;
  }

  int add_const(std::string name, Tensor t) {
    int id = add_value(std::move(name), t.rows(), t.cols());
    p.values[static_cast<size_t>(id)].cdense = std::move(t);
    return id;
  }

  int add_const(std::string name, SparseMatrix s) {
    int id = add_value(std::move(name), s.n_rows, s.n_cols, true);
    p.values[static_cast<size_t>(id)].csparse = std::move(s);
    return id;
  }

  MatrixOp& add_op(MatrixOp op) {
    p.ops.push_back(std::move(op));
    return p.ops.back();
  }
};

std::optional<int64_t> exact_sqrt(int64_t n) {
  int64_t r = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  for (int64_t c = std::max<int64_t>(0, r - 1); c <= r + 1; ++c)
    if (c * c == n) return c;
  return std::nullopt;
}

std::pair<int64_t, int64_t> grid_of(const Shape& s, const std::string& id) {
  if (s.dims.size() == 3) return {s.dims[1], s.dims[2]};
  if (s.grid) return *s.grid;
  if (auto r = exact_sqrt(s.dims[1])) return {*r, *r};
  throw gcvt_error("layer " + id + ": cannot recover spatial dims from " + s.str());
}

double dense_density(const Tensor& t) {
  int64_t nnz = 0;
  for (float v : t.values)
    if (v != 0.0f) ++nnz;
  return t.size() ? static_cast<double>(nnz) / static_cast<double>(t.size()) : 0.0;
}

int lower_conv_impl(Builder& b, const ComputationGraph& g, const Layer& l, int in_v,
                    const Shape& in_shape, Provenance prov) {
  const auto& p = std::get<ConvParams>(l.params);
  auto [h_in, w_in] = grid_of(in_shape, l.id);
  const int64_t h1 = h_in + 2 * p.padding - p.k1 + 1;
  const int64_t w1 = w_in + 2 * p.padding - p.k2 + 1;
  const int64_t h_out = (h_in + 2 * p.padding - p.k1) / p.stride + 1;
  const int64_t w_out = (w_in + 2 * p.padding - p.k2) / p.stride + 1;
  const Tensor& w = g.tensors.at(l.weights);
  const int64_t taps = static_cast<int64_t>(p.k1) * p.k2;

  // kn2row: one constant matrix KM_i^T per kernel position.
  std::vector<int> ofm(static_cast<size_t>(taps));
  for (int64_t i = 0; i < taps; ++i) {
    const int64_t r = i / p.k2, c = i % p.k2;
    Tensor km = Tensor::zeros({p.c_out, p.c_in});
    for (int64_t co = 0; co < p.c_out; ++co)
      for (int64_t ci = 0; ci < p.c_in; ++ci)
        km.at2(co, ci) = w.values[((co * p.c_in + ci) * p.k1 + r) * p.k2 + c];
    double density = dense_density(km);
    int km_v = b.add_const(l.id + "/km" + std::to_string(i), std::move(km));
    MatrixOp op;
    op.kind = OpKind::MatMul;
    op.prov = prov;
    op.layer_id = l.id;
    op.a = km_v;
    op.b = in_v;
    op.s1 = p.c_out;
    op.s2 = p.c_in;
    op.s3 = h_in * w_in;
    op.sparsity_hint = density;
    op.result = b.add_value(l.id + "/ofm" + std::to_string(i), p.c_out, h_in * w_in);
    ofm[static_cast<size_t>(i)] = b.add_op(op).result;
  }

  auto tap_shift = [&](int64_t i) {
    ShiftRead s;
    s.present = true;
    s.h_src = h_in;
    s.w_src = w_in;
    s.dy = i / p.k2 - p.padding;
    s.dx = i % p.k2 - p.padding;
    return s;
  };
  auto make_add = [&](const std::string& name, int a, ShiftRead sa, int bb, ShiftRead sb,
                      int64_t hd, int64_t wd) {
    MatrixOp op;
    op.kind = OpKind::Add;
    op.prov = prov;
    op.layer_id = l.id;
    op.a = a;
    op.b = bb;
    op.shift_a = sa;
    op.shift_b = sb;
    op.h_dst = hd;
    op.w_dst = wd;
    op.s1 = p.c_out;
    op.s3 = hd * wd;
    op.result = b.add_value(name, p.c_out, hd * wd);
    return b.add_op(op).result;
  };
  auto identity_shift = [&](int64_t h, int64_t w) {
    ShiftRead s;
    s.present = true;
    s.h_src = h;
    s.w_src = w;
    return s;
  };

  int cur;
  if (taps == 1 && p.padding == 0) {
    cur = ofm[0];
  } else if (taps == 1) {
    cur = make_add(l.id + "/acc0", ofm[0], tap_shift(0), -1, {}, h1, w1);
  } else {
    cur = make_add(l.id + "/acc0", ofm[0], tap_shift(0), ofm[1], tap_shift(1), h1, w1);
    for (int64_t i = 2; i < taps; ++i)
      cur = make_add(l.id + "/acc" + std::to_string(i - 1), cur, identity_shift(h1, w1),
                     ofm[static_cast<size_t>(i)], tap_shift(i), h1, w1);
  }
  if (p.stride > 1) {
    ShiftRead s = identity_shift(h1, w1);
    s.stride = p.stride;
    cur = make_add(l.id + "/out", cur, s, -1, {}, h_out, w_out);
  }
  return cur;
}

// Resolves a GNN-side feature input: 3-D producers either already have
// node-per-channel layout or need an on-the-fly patch rearrangement.
int resolve_gnn_input(Builder& b, const Layer& l, int in_v, const Shape& in_shape,
                      int64_t n_vertices) {
  if (in_shape.dims.size() == 2) return in_v;
  const int64_t c = in_shape.dims[0], h = in_shape.dims[1], w = in_shape.dims[2];
  if (c == n_vertices) return in_v;  // (c, h*w) already is node features
  auto patch = layer_patch(l);
  if (!patch) throw gcvt_error("layer " + l.id + ": no DM mode reconciles its input");
  MatrixOp op;
  op.kind = OpKind::Transpose;
  op.prov = Provenance::DM;
  op.layer_id = l.id;
  op.dm_mode = DmMode::PatchToNode;
  op.a = in_v;
  op.ph = patch->first;
  op.pw = patch->second;
  op.src_h = h;
  op.src_w = w;
  op.s1 = n_vertices;
  op.s3 = c * patch->first * patch->second;
  op.result = b.add_value(l.id + "/nodes", op.s1, op.s3);
  return b.add_op(op).result;
}

int lower_mp_impl(Builder& b, const ComputationGraph& g, const Layer& l, int in_v,
                  const Shape& in_shape, int adj_v) {
  const auto& p = std::get<MpParams>(l.params);
  int64_t n_vertices;
  double density;
  if (adj_v < 0) {
    const SparseMatrix& a = g.graphs.at(p.adjacency);
    n_vertices = a.n_rows;
    density = a.density();
    adj_v = b.add_const(l.id + "/adj", a);
  } else {
    const ProgramValue& av = b.p.value(adj_v);
    n_vertices = av.rows;
    density = av.pattern ? av.pattern->density() : 1.0;
  }
  int h_v = resolve_gnn_input(b, l, in_v, in_shape, n_vertices);
  MatrixOp op;
  op.kind = OpKind::SparseMatMul;
  op.prov = Provenance::GNN;
  op.layer_id = l.id;
  op.a = adj_v;
  op.b = h_v;
  op.s1 = n_vertices;
  op.s2 = n_vertices;
  op.s3 = b.p.value(h_v).cols;
  op.reduction = p.reduction;
  op.sparsity_hint = density;
  op.result = b.add_value(l.id + "/out", op.s1, op.s3);
  return b.add_op(op).result;
}

int lower_vip_impl(Builder& b, const ComputationGraph& g, const Layer& l, int in_v,
                   const Shape& in_shape) {
  const auto& p = std::get<VipParams>(l.params);
  const SparseMatrix& pat = g.graphs.at(p.edge_pattern);
  int h_v = resolve_gnn_input(b, l, in_v, in_shape, pat.n_rows);
  int pat_v = b.add_const(l.id + "/pattern", pat);
  MatrixOp op;
  op.kind = OpKind::SampledMatMul;
  op.prov = Provenance::GNN;
  op.layer_id = l.id;
  op.a = pat_v;
  op.b = h_v;
  op.s1 = pat.n_rows;
  op.s2 = b.p.value(h_v).cols;
  op.s3 = pat.n_cols;
  op.sparsity_hint = pat.density();
  if (p.softmax) op.epilogue.push_back(EpilogueOp{EpilogueOp::RowSoftmax, {}, {}});
  op.result = b.add_value(l.id + "/scores", pat.n_rows, pat.n_cols, true);
  b.p.values[static_cast<size_t>(op.result)].pattern = pat;
  b.add_op(op);
  return b.p.ops.back().result;
}

int lower_linear_impl(Builder& b, const ComputationGraph& g, const Layer& l, int in_v,
                      Provenance prov) {
  const auto& p = std::get<LinearParams>(l.params);
  int w_v = b.add_const(l.id + "/w", g.tensors.at(l.weights));
  MatrixOp op;
  op.kind = OpKind::MatMul;
  op.prov = prov;
  op.layer_id = l.id;
  op.a = in_v;
  op.b = w_v;
  op.s1 = b.p.value(in_v).rows;
  op.s2 = p.f_in;
  op.s3 = p.f_out;
  op.sparsity_hint = dense_density(g.tensors.at(l.weights));
  op.result = b.add_value(l.id + "/out", op.s1, op.s3);
  return b.add_op(op).result;
}

int lower_pool_impl(Builder& b, const Layer& l, int in_v, const Shape& in_shape) {
  const auto& p = std::get<PoolParams>(l.params);
  const int64_t c = in_shape.dims[0], h = in_shape.dims[1], w = in_shape.dims[2];
  const int64_t ho = (h - p.window) / p.stride + 1;
  const int64_t wo = (w - p.window) / p.stride + 1;
  // Pixel-selection matrix applied to columns of the (c, h*w) value.
  SparseMatrix sel;
  sel.n_rows = ho * wo;
  sel.n_cols = h * w;
  const float val = p.kind == PoolKind::Max
                        ? 1.0f
                        : fp16_round(1.0f / static_cast<float>(p.window * p.window));
  for (int64_t oy = 0; oy < ho; ++oy)
    for (int64_t ox = 0; ox < wo; ++ox) {
      uint32_t dst = static_cast<uint32_t>(oy * wo + ox);
      for (int64_t r = 0; r < p.window; ++r)
        for (int64_t q = 0; q < p.window; ++q) {
          uint32_t src = static_cast<uint32_t>((oy * p.stride + r) * w + ox * p.stride + q);
          sel.triples.push_back({src, dst, val});
        }
    }
  sel.validate();
  int sel_v = b.add_const(l.id + "/sel", std::move(sel));
  MatrixOp op;
  op.kind = OpKind::SparseMatMul;
  op.prov = Provenance::CNN;
  op.layer_id = l.id;
  op.col_mode = true;
  op.a = sel_v;
  op.b = in_v;
  op.s1 = c;
  op.s2 = h * w;
  op.s3 = ho * wo;
  op.reduction = p.kind == PoolKind::Max ? Reduction::Max : Reduction::Sum;
  op.sparsity_hint = b.p.value(sel_v).csparse->density();
  op.result = b.add_value(l.id + "/out", c, ho * wo);
  return b.add_op(op).result;
}

int lower_dm_impl(Builder& b, const ComputationGraph& g, const Layer& l, int in_v,
                  const Shape& in_shape) {
  const auto& p = std::get<DmParams>(l.params);
  const Shape& out_shape = g.output_shapes.at(l.id);
  int64_t rows = out_shape.dims[0];
  int64_t cols = 1;
  for (size_t i = 1; i < out_shape.dims.size(); ++i) cols *= out_shape.dims[i];
  MatrixOp op;
  op.kind = OpKind::Transpose;
  op.prov = Provenance::DM;
  op.layer_id = l.id;
  op.dm_mode = p.mode;
  op.a = in_v;
  op.s1 = rows;
  op.s3 = cols;
  if (p.mode == DmMode::PatchToNode) {
    op.ph = p.ph;
    op.pw = p.pw;
    op.src_h = in_shape.dims[1];
    op.src_w = in_shape.dims[2];
  }
  op.result = b.add_value(l.id + "/out", rows, cols);
  return b.add_op(op).result;
}

// Standalone Norm / Activation: a copy through the vector ALU with the
// affine / ReLU work done by the epilogue stage.
int lower_eltwise_impl(Builder& b, const Layer& l, int in_v, Provenance prov) {
  MatrixOp op;
  op.kind = OpKind::Add;
  op.prov = prov;
  op.layer_id = l.id;
  op.a = in_v;
  op.b = -1;
  op.s1 = b.p.value(in_v).rows;
  op.s3 = b.p.value(in_v).cols;
  if (l.kind == LayerKind::Activation) {
    op.epilogue.push_back(EpilogueOp{EpilogueOp::ReLU, {}, {}});
  } else {
    const auto& np = std::get<NormParams>(l.params);
    op.epilogue.push_back(EpilogueOp{EpilogueOp::NormAffine, np.scale, np.shift});
  }
  op.result = b.add_value(l.id + "/out", op.s1, op.s3);
  return b.add_op(op).result;
}

void attach_layer_epilogue(Builder& b, size_t begin, const Layer& l) {
  if (l.epilogue.empty() || b.p.ops.size() == begin) return;
  MatrixOp& last = b.p.ops.back();
  for (const EpilogueOp& e : l.epilogue) last.epilogue.push_back(e);
}

int lower_layer(Builder& b, const ComputationGraph& g, const Layer& l,
                const std::vector<int>& in_vals, const std::vector<Shape>& in_shapes,
                Provenance prov) {
  size_t begin = b.p.ops.size();
  int result = -1;
  switch (l.kind) {
    case LayerKind::Conv:
      result = lower_conv_impl(b, g, l, in_vals[0], in_shapes[0], prov);
      break;
    case LayerKind::Pool: {
      result = lower_pool_impl(b, l, in_vals[0], in_shapes[0]);
      break;
    }
    case LayerKind::Linear:
      result = lower_linear_impl(b, g, l, in_vals[0], prov);
      break;
    case LayerKind::MP: {
      const auto& p = std::get<MpParams>(l.params);
      int adj_v = -1;
      if (p.adjacency.empty()) {
        for (size_t i = 1; i < in_vals.size(); ++i)
          if (in_shapes[i].sparse) adj_v = in_vals[i];
        if (adj_v < 0)
          throw gcvt_error("layer " + l.id + ": MP needs an adjacency or a VIP input");
      }
      result = lower_mp_impl(b, g, l, in_vals[0], in_shapes[0], adj_v);
      break;
    }
    case LayerKind::VIP:
      result = lower_vip_impl(b, g, l, in_vals[0], in_shapes[0]);
      break;
    case LayerKind::DM:
      result = lower_dm_impl(b, g, l, in_vals[0], in_shapes[0]);
      break;
    case LayerKind::Norm:
    case LayerKind::Activation:
      result = lower_eltwise_impl(b, l, in_vals[0], prov);
      break;
  }
  attach_layer_epilogue(b, begin, l);
  b.p.layer_ids.push_back(l.id);
  b.p.layer_op_ranges.push_back({static_cast<int>(begin), static_cast<int>(b.p.ops.size())});
  return result;
}

Provenance layer_provenance(const Layer& l, const std::map<std::string, Provenance>& prov) {
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::Pool: return Provenance::CNN;
    case LayerKind::MP:
    case LayerKind::VIP: return Provenance::GNN;
    case LayerKind::DM: return Provenance::DM;
    default: break;
  }
  for (const std::string& in : l.inputs) {
    auto it = prov.find(in);
    if (it != prov.end() && it->second != Provenance::DM) return it->second;
  }
  return Provenance::Other;
}

MatrixProgram lower_single(const ComputationGraph& g, const Layer& l,
                           const Shape& in_shape) {
  Builder b;
  int64_t rows = in_shape.dims[0];
  int64_t cols = 1;
  for (size_t i = 1; i < in_shape.dims.size(); ++i) cols *= in_shape.dims[i];
  b.p.input_value = b.add_value("input", rows, cols);
  Provenance prov = layer_provenance(l, {});
  int v = lower_layer(b, g, l, {b.p.input_value}, {in_shape}, prov);
  b.p.outputs.push_back({l.id, v});
  return std::move(b.p);
}

}  // namespace

MatrixProgram lower_conv(const ComputationGraph& g, const Layer& layer,
                         const Shape& in_shape) {
  return lower_single(g, layer, in_shape);
}
MatrixProgram lower_mp(const ComputationGraph& g, const Layer& layer,
                       const Shape& in_shape) {
  return lower_single(g, layer, in_shape);
}
MatrixProgram lower_linear(const ComputationGraph& g, const Layer& layer,
                           const Shape& in_shape) {
  return lower_single(g, layer, in_shape);
}
MatrixProgram lower_vip(const ComputationGraph& g, const Layer& layer,
                        const Shape& in_shape) {
  return lower_single(g, layer, in_shape);
}
MatrixProgram lower_pool(const ComputationGraph& g, const Layer& layer,
                         const Shape& in_shape) {
  return lower_single(g, layer, in_shape);
}

MatrixProgram lower_graph(const ComputationGraph& g) {
  Builder b;
  int64_t rows = g.input_shape.dims.empty() ? 0 : g.input_shape.dims[0];
  int64_t cols = 1;
  for (size_t i = 1; i < g.input_shape.dims.size(); ++i) cols *= g.input_shape.dims[i];
  b.p.input_value = b.add_value("input", rows, cols);

  std::map<std::string, int> val_of;
  std::map<std::string, Provenance> prov_of;
  for (const Layer& l : g.nodes) {
    std::vector<int> in_vals;
    std::vector<Shape> in_shapes;
    for (const std::string& in : l.inputs) {
      if (in == "@input") {
        in_vals.push_back(b.p.input_value);
        in_shapes.push_back(g.input_shape);
      } else {
        in_vals.push_back(val_of.at(in));
        in_shapes.push_back(g.output_shapes.at(in));
      }
    }
    Provenance prov = layer_provenance(l, prov_of);
    // NodeToChannel boundary: the producing GNN op commits its rows
    // straight to channel positions (identity in this layout).
    if (l.fused_dm && l.fused_dm->mode == DmMode::NodeToChannel && !in_vals.empty())
      for (MatrixOp& op : b.p.ops)
        if (op.result == in_vals[0] &&
            (op.kind == OpKind::SparseMatMul || op.kind == OpKind::MatMul) &&
            !op.output_shuffle) {
          Permutation perm(static_cast<size_t>(op.s1));
          for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<uint32_t>(i);
          op.output_shuffle = std::move(perm);
        }
    val_of[l.id] = lower_layer(b, g, l, in_vals, in_shapes, prov);
    prov_of[l.id] = prov;
  }
  for (const std::string& o : g.outputs) {
    const Layer& l = g.layer(o);
    std::string name = l.output_alias.empty() ? l.id : l.output_alias;
    b.p.outputs.push_back({name, val_of.at(o)});
  }
  return std::move(b.p);
}

std::string dump_program(const MatrixProgram& p) {
  std::ostringstream os;
  auto vname = [&](int id) {
    if (id < 0) return std::string("-");
    return "%" + std::to_string(id) + ":" + p.value(id).name;
  };
  for (size_t i = 0; i < p.ops.size(); ++i) {
    const MatrixOp& op = p.ops[i];
    os << "op" << i << ": " << vname(op.result) << " = " << to_string(op.kind) << "("
       << vname(op.a);
    if (op.kind != OpKind::Transpose) os << ", " << vname(op.b);
    os << ")";
    os << " s=(" << op.s1 << "," << op.s2 << "," << op.s3 << ")";
    if (op.kind == OpKind::SparseMatMul)
      os << (op.col_mode ? " cols" : " rows")
         << (op.reduction == Reduction::Max ? " max" : " sum");
    if (op.kind == OpKind::Add && op.shift_a.present)
      os << " shift(" << op.shift_a.dy << "," << op.shift_a.dx << ";" << op.shift_b.dy
         << "," << op.shift_b.dx << ")";
    if (op.kind == OpKind::Transpose) os << " " << to_string(op.dm_mode);
    if (!op.epilogue.empty()) {
      os << " epilogue=[";
      for (size_t e = 0; e < op.epilogue.size(); ++e) {
        const char* n = op.epilogue[e].kind == EpilogueOp::ReLU ? "relu"
                        : op.epilogue[e].kind == EpilogueOp::NormAffine ? "norm"
                                                                        : "softmax";
        os << (e ? "," : "") << n;
      }
      os << "]";
    }
    os << " prov=" << to_string(op.prov) << " layer=" << op.layer_id << "\n";
  }
  return os.str();
}

// --------------------------------------------------------------------
// fp16 evaluation
// --------------------------------------------------------------------

namespace {

struct Fp16Eval {
  const MatrixProgram& p;
  const Tensor& input;
  EvalResult result;

  const float* dense_data(int id, int64_t& row_stride) {
    const ProgramValue& v = p.value(id);
    row_stride = v.cols;
    if (id == p.input_value) return input.values.data();
    if (v.cdense) return v.cdense->values.data();
    return result.dense.at(id).values.data();
  }

  const SparseMatrix& sparse_of(int id) {
    const ProgramValue& v = p.value(id);
    if (v.csparse) return *v.csparse;
    return result.sparse.at(id);
  }

  void run() {
    for (const MatrixOp& op : p.ops) exec(op);
  }

  void exec(const MatrixOp& op) {
    const ProgramValue& rv = p.value(op.result);
    if (op.kind == OpKind::SampledMatMul) {
      const SparseMatrix& pat = sparse_of(op.a);
      int64_t xs;
      const float* x = dense_data(op.b, xs);
      std::vector<float> yt = transpose_f32(x, op.s1, op.s2);
      std::vector<float> acc(pat.triples.size(), 0.0f);
      sddmm_acc(pat.triples, x, xs, yt.data(), op.s1, acc.data(), 0, op.s2);
      SparseMatrix out;
      out.n_rows = pat.n_rows;
      out.n_cols = pat.n_cols;
      out.triples = pat.triples;
      bool softmax = false;
      for (const EpilogueOp& e : op.epilogue)
        if (e.kind == EpilogueOp::RowSoftmax) softmax = true;
      if (softmax) apply_row_softmax(pat.triples, acc.data());
      for (size_t i = 0; i < acc.size(); ++i)
        out.triples[i].val = fp16_round(acc[i]);
      result.sparse[op.result] = std::move(out);
      return;
    }
    if (op.kind == OpKind::Transpose) {
      int64_t xs;
      const float* x = dense_data(op.a, xs);
      Tensor out = Tensor::zeros({rv.rows, rv.cols});
      if (op.dm_mode == DmMode::PatchToNode) {
        patch_to_node_f32(x, p.value(op.a).rows, op.src_h, op.src_w, op.ph, op.pw,
                          out.values.data());
      } else {
        std::copy(x, x + rv.rows * rv.cols, out.values.begin());
      }
      result.dense[op.result] = std::move(out);
      return;
    }

    std::vector<float> acc(static_cast<size_t>(op.s1 * op.s3), 0.0f);
    switch (op.kind) {
      case OpKind::MatMul: {
        int64_t xs, ys;
        const float* x = dense_data(op.a, xs);
        const float* y = dense_data(op.b, ys);
        ddmm_acc(x, xs, y, ys, acc.data(), op.s3, 0, op.s1, 0, op.s2, 0, op.s3);
        break;
      }
      case OpKind::SparseMatMul: {
        const SparseMatrix& a = sparse_of(op.a);
        int64_t ys;
        const float* y = dense_data(op.b, ys);
        if (op.col_mode)
          spdmm_col_acc(a.triples, op.reduction, y, ys, op.s1, acc.data(), op.s3);
        else
          spdmm_acc(a.triples, op.reduction, y, ys, acc.data(), op.s3, 0, op.s3);
        break;
      }
      case OpKind::ScaleRows: {
        int64_t as, ys;
        const float* a = dense_data(op.a, as);
        const float* y = dense_data(op.b, ys);
        psvm_acc(a, y, ys, acc.data(), op.s3, 0, op.s1, op.s3);
        break;
      }
      case OpKind::Add: {
        int64_t as;
        const float* a = dense_data(op.a, as);
        if (op.shift_a.present || op.shift_b.present) {
          int64_t bs = 0;
          const float* bp = op.b >= 0 ? dense_data(op.b, bs) : nullptr;
          for (int64_t r = 0; r < op.s1; ++r)
            for (int64_t y = 0; y < op.h_dst; ++y)
              for (int64_t x = 0; x < op.w_dst; ++x) {
                float av = shift_read_f32(a, as, r, op.shift_a, y, x);
                float bv = bp ? shift_read_f32(bp, bs, r, op.shift_b, y, x) : 0.0f;
                acc[static_cast<size_t>((r * op.h_dst + y) * op.w_dst + x)] = av + bv;
              }
        } else if (op.b >= 0) {
          int64_t bs;
          const float* bp = dense_data(op.b, bs);
          pvva_acc(a, as, bp, bs, acc.data(), op.s3, 0, op.s1, op.s3);
        } else {
          for (int64_t r = 0; r < op.s1; ++r)
            for (int64_t j = 0; j < op.s3; ++j)
              acc[static_cast<size_t>(r * op.s3 + j)] = a[r * as + j];
        }
        break;
      }
      default: throw gcvt_error("unhandled op kind");
    }
    apply_epilogue_f32(op.epilogue, acc.data(), op.s3, 0, op.s1, op.s3);
    Tensor out = Tensor::zeros({rv.rows, rv.cols});
    commit_rows(acc.data(), op.s3, out.values.data(), op.s3, 0, op.s1, op.s3,
                op.output_shuffle ? &*op.output_shuffle : nullptr);
    result.dense[op.result] = std::move(out);
  }
};

}  // namespace

EvalResult evaluate_program(const MatrixProgram& p, const Tensor& input) {
  Fp16Eval ev{p, input, {}};
  ev.run();
  return std::move(ev.result);
}

// --------------------------------------------------------------------
// Wide (double) evaluation
// --------------------------------------------------------------------

namespace {

double shift_read_f64(const std::vector<double>& v, int64_t row_stride, int64_t row,
                      const ShiftRead& s, int64_t y, int64_t x) {
  int64_t sy = y * s.stride + s.dy;
  int64_t sx = x * s.stride + s.dx;
  if (sy < 0 || sy >= s.h_src || sx < 0 || sx >= s.w_src) return 0.0;
  return v[static_cast<size_t>(row * row_stride + sy * s.w_src + sx)];
}

struct WideEval {
  const MatrixProgram& p;
  const Tensor& input;
  WideEvalResult result;
  std::map<int, std::vector<double>> consts;

  const std::vector<double>& dense_of(int id) {
    const ProgramValue& v = p.value(id);
    if (id == p.input_value || v.cdense) {
      auto it = consts.find(id);
      if (it != consts.end()) return it->second;
      const std::vector<float>& src =
          id == p.input_value ? input.values : v.cdense->values;
      return consts.emplace(id, std::vector<double>(src.begin(), src.end()))
          .first->second;
    }
    return result.dense.at(id);
  }

  void run() {
    for (const MatrixOp& op : p.ops) exec(op);
  }

  void apply_epi(const MatrixOp& op, std::vector<double>& acc) {
    for (const EpilogueOp& e : op.epilogue) {
      if (e.kind == EpilogueOp::ReLU) {
        for (double& v : acc) v = std::max(0.0, v);
      } else if (e.kind == EpilogueOp::NormAffine) {
        for (int64_t i = 0; i < op.s1; ++i)
          for (int64_t j = 0; j < op.s3; ++j)
            acc[static_cast<size_t>(i * op.s3 + j)] =
                e.scale[static_cast<size_t>(i)] * acc[static_cast<size_t>(i * op.s3 + j)] +
                e.shift[static_cast<size_t>(i)];
      }
    }
  }

  void exec(const MatrixOp& op) {
    if (op.kind == OpKind::SampledMatMul) {
      const SparseMatrix& pat = *p.value(op.a).csparse;
      const std::vector<double>& x = dense_of(op.b);
      std::vector<double> vals(pat.triples.size(), 0.0);
      for (size_t e = 0; e < pat.triples.size(); ++e) {
        const Triple& t = pat.triples[e];
        double sum = 0.0;
        for (int64_t k = 0; k < op.s2; ++k)
          sum += x[static_cast<size_t>(t.dst * op.s2 + k)] *
                 x[static_cast<size_t>(t.src * op.s2 + k)];
        vals[e] = sum;
      }
      bool softmax = false;
      for (const EpilogueOp& e : op.epilogue)
        if (e.kind == EpilogueOp::RowSoftmax) softmax = true;
      if (softmax) {
        size_t e = 0;
        while (e < vals.size()) {
          size_t begin = e;
          while (e < vals.size() && pat.triples[e].dst == pat.triples[begin].dst) ++e;
          double m = -HUGE_VAL;
          for (size_t i = begin; i < e; ++i) m = std::max(m, vals[i]);
          double denom = 0.0;
          for (size_t i = begin; i < e; ++i) denom += std::exp(vals[i] - m);
          for (size_t i = begin; i < e; ++i) vals[i] = std::exp(vals[i] - m) / denom;
        }
      }
      result.sparse_vals[op.result] = std::move(vals);
      return;
    }
    if (op.kind == OpKind::Transpose) {
      const std::vector<double>& x = dense_of(op.a);
      std::vector<double> out(static_cast<size_t>(op.s1 * op.s3), 0.0);
      if (op.dm_mode == DmMode::PatchToNode) {
        const int64_t c = p.value(op.a).rows, h = op.src_h, w = op.src_w;
        const int64_t gw = w / op.pw;
        const int64_t f = c * op.ph * op.pw;
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
              int64_t node = (y / op.ph) * gw + (xx / op.pw);
              int64_t feat = ch * op.ph * op.pw + (y % op.ph) * op.pw + (xx % op.pw);
              out[static_cast<size_t>(node * f + feat)] =
                  x[static_cast<size_t>((ch * h + y) * w + xx)];
            }
      } else {
        out = x;
      }
      result.dense[op.result] = std::move(out);
      return;
    }

    std::vector<double> acc(static_cast<size_t>(op.s1 * op.s3), 0.0);
    switch (op.kind) {
      case OpKind::MatMul: {
        const std::vector<double>& x = dense_of(op.a);
        const std::vector<double>& y = dense_of(op.b);
        for (int64_t i = 0; i < op.s1; ++i)
          for (int64_t j = 0; j < op.s3; ++j) {
            double sum = 0.0;
            for (int64_t k = 0; k < op.s2; ++k)
              sum += x[static_cast<size_t>(i * op.s2 + k)] *
                     y[static_cast<size_t>(k * op.s3 + j)];
            acc[static_cast<size_t>(i * op.s3 + j)] = sum;
          }
        break;
      }
      case OpKind::SparseMatMul: {
        const ProgramValue& av = p.value(op.a);
        const SparseMatrix& pat = av.csparse ? *av.csparse : *av.pattern;
        const std::vector<double>* dyn =
            av.csparse ? nullptr : &result.sparse_vals.at(op.a);
        const std::vector<double>& y = dense_of(op.b);
        for (size_t e = 0; e < pat.triples.size(); ++e) {
          const Triple& t = pat.triples[e];
          double val = dyn ? (*dyn)[e] : static_cast<double>(t.val);
          if (op.col_mode) {
            for (int64_t r = 0; r < op.s1; ++r) {
              double m = val * y[static_cast<size_t>(r * op.s2 + t.src)];
              double& z = acc[static_cast<size_t>(r * op.s3 + t.dst)];
              if (op.reduction == Reduction::Sum) z += m;
              else z = std::max(z, m);
            }
          } else {
            for (int64_t j = 0; j < op.s3; ++j) {
              double m = val * y[static_cast<size_t>(t.src * op.s3 + j)];
              double& z = acc[static_cast<size_t>(t.dst * op.s3 + j)];
              if (op.reduction == Reduction::Sum) z += m;
              else z = std::max(z, m);
            }
          }
        }
        break;
      }
      case OpKind::ScaleRows: {
        const std::vector<double>& a = dense_of(op.a);
        const std::vector<double>& y = dense_of(op.b);
        for (int64_t i = 0; i < op.s1; ++i)
          for (int64_t j = 0; j < op.s3; ++j)
            acc[static_cast<size_t>(i * op.s3 + j)] =
                a[static_cast<size_t>(i)] * y[static_cast<size_t>(i * op.s3 + j)];
        break;
      }
      case OpKind::Add: {
        const std::vector<double>& a = dense_of(op.a);
        const int64_t as = p.value(op.a).cols;
        if (op.shift_a.present || op.shift_b.present) {
          const std::vector<double>* bp = op.b >= 0 ? &dense_of(op.b) : nullptr;
          const int64_t bs = op.b >= 0 ? p.value(op.b).cols : 0;
          for (int64_t r = 0; r < op.s1; ++r)
            for (int64_t y = 0; y < op.h_dst; ++y)
              for (int64_t x = 0; x < op.w_dst; ++x) {
                double av = shift_read_f64(a, as, r, op.shift_a, y, x);
                double bv = bp ? shift_read_f64(*bp, bs, r, op.shift_b, y, x) : 0.0;
                acc[static_cast<size_t>((r * op.h_dst + y) * op.w_dst + x)] = av + bv;
              }
        } else {
          for (int64_t r = 0; r < op.s1; ++r)
            for (int64_t j = 0; j < op.s3; ++j)
              acc[static_cast<size_t>(r * op.s3 + j)] =
                  a[static_cast<size_t>(r * as + j)];
          if (op.b >= 0) {
            const std::vector<double>& bb = dense_of(op.b);
            for (size_t i = 0; i < acc.size(); ++i) acc[i] += bb[i];
          }
        }
        break;
      }
      default: throw gcvt_error("unhandled op kind");
    }
    apply_epi(op, acc);
    if (op.output_shuffle) {
      std::vector<double> out(acc.size());
      for (int64_t i = 0; i < op.s1; ++i)
        for (int64_t j = 0; j < op.s3; ++j)
          out[static_cast<size_t>((*op.output_shuffle)[static_cast<size_t>(i)] * op.s3 + j)] =
              acc[static_cast<size_t>(i * op.s3 + j)];
      acc = std::move(out);
    }
    result.dense[op.result] = std::move(acc);
  }
};

}  // namespace

WideEvalResult evaluate_program_wide(const MatrixProgram& p, const Tensor& input) {
  WideEval ev{p, input, {}, {}};
  ev.run();
  return std::move(ev.result);
}

}  // namespace gcv
