#include "gcvt/model_ir.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gcvt/fp16.hpp"

namespace gcv {

using nlohmann::json;

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::MP: return "MP";
    case LayerKind::Linear: return "Linear";
    case LayerKind::VIP: return "VIP";
    case LayerKind::DM: return "DM";
    case LayerKind::Pool: return "Pool";
    case LayerKind::Norm: return "Norm";
    case LayerKind::Activation: return "Activation";
  }
  return "?";
}

const char* to_string(DmMode m) {
  switch (m) {
    case DmMode::ChannelToNode: return "channel_to_node";
    case DmMode::PatchToNode: return "patch_to_node";
    case DmMode::NodeToChannel: return "node_to_channel";
  }
  return "?";
}

std::string Shape::str() const {
  std::ostringstream os;
  os << (sparse ? "sparse[" : "[");
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << "]";
  if (grid) os << "(grid " << grid->first << "x" << grid->second << ")";
  return os.str();
}

const Layer& ComputationGraph::layer(const std::string& id) const {
  for (const Layer& l : nodes)
    if (l.id == id) return l;
  throw gcvt_error("no such layer: " + id);
}

Layer& ComputationGraph::layer(const std::string& id) {
  return const_cast<Layer&>(static_cast<const ComputationGraph*>(this)->layer(id));
}

std::vector<std::string> ComputationGraph::consumers(const std::string& id) const {
  std::vector<std::string> out;
  for (const Layer& l : nodes)
    for (const std::string& in : l.inputs)
      if (in == id) out.push_back(l.id);
  return out;
}

Tensor seeded_tensor(uint64_t seed, std::vector<int64_t> dims) {
  std::mt19937_64 rng(seed);
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  std::vector<float> vals;
  vals.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double u = static_cast<double>(rng() >> 40) * (1.0 / 16777216.0);
    vals.push_back(fp16_round(static_cast<float>(2.0 * u - 1.0)));
  }
  return Tensor(std::move(dims), std::move(vals));
}

// --------------------------------------------------------------------
// Parsing
// --------------------------------------------------------------------

static LayerKind kind_from_string(const std::string& s) {
  if (s == "Conv") return LayerKind::Conv;
  if (s == "MP") return LayerKind::MP;
  if (s == "Linear") return LayerKind::Linear;
  if (s == "VIP") return LayerKind::VIP;
  if (s == "DM") return LayerKind::DM;
  if (s == "Pool") return LayerKind::Pool;
  if (s == "Norm") return LayerKind::Norm;
  if (s == "Activation") return LayerKind::Activation;
  throw gcvt_error("unknown layer kind: " + s);
}

static DmMode dm_mode_from_string(const std::string& s) {
  if (s == "channel_to_node") return DmMode::ChannelToNode;
  if (s == "patch_to_node") return DmMode::PatchToNode;
  if (s == "node_to_channel") return DmMode::NodeToChannel;
  throw gcvt_error("unknown DM mode: " + s);
}

static std::optional<std::pair<int, int>> parse_patch(const json& p) {
  if (!p.contains("patch")) return std::nullopt;
  auto& a = p.at("patch");
  return std::make_pair(a.at(0).get<int>(), a.at(1).get<int>());
}

static LayerParams parse_params(LayerKind kind, const json& p, const std::string& id) {
  switch (kind) {
    case LayerKind::Conv: {
      ConvParams c;
      c.c_in = p.at("c_in").get<int>();
      c.c_out = p.at("c_out").get<int>();
      c.k1 = p.at("k1").get<int>();
      c.k2 = p.at("k2").get<int>();
      c.stride = p.value("stride", 1);
      c.padding = p.value("padding", 0);
      if (c.k1 < 1 || c.k2 < 1 || c.stride < 1 || c.padding < 0)
        throw gcvt_error("layer " + id + ": bad Conv parameters");
      return c;
    }
    case LayerKind::MP: {
      MpParams m;
      std::string red = p.value("reduction", std::string("sum"));
      if (red == "sum") m.reduction = Reduction::Sum;
      else if (red == "max") m.reduction = Reduction::Max;
      else throw gcvt_error("layer " + id + ": unknown reduction " + red);
      m.adjacency = p.value("adjacency", std::string());
      m.patch = parse_patch(p);
      return m;
    }
    case LayerKind::Linear: {
      LinearParams l;
      l.f_in = p.at("f_in").get<int>();
      l.f_out = p.at("f_out").get<int>();
      return l;
    }
    case LayerKind::VIP: {
      VipParams v;
      v.edge_pattern = p.at("edge_pattern").get<std::string>();
      v.softmax = p.value("softmax", false);
      v.patch = parse_patch(p);
      return v;
    }
    case LayerKind::DM: {
      DmParams d;
      d.mode = dm_mode_from_string(p.at("mode").get<std::string>());
      if (auto patch = parse_patch(p)) {
        d.ph = patch->first;
        d.pw = patch->second;
      }
      return d;
    }
    case LayerKind::Pool: {
      PoolParams q;
      std::string k = p.value("kind", std::string("max"));
      if (k == "max") q.kind = PoolKind::Max;
      else if (k == "avg") q.kind = PoolKind::Avg;
      else throw gcvt_error("layer " + id + ": unknown pool kind " + k);
      q.window = p.at("window").get<int>();
      q.stride = p.value("stride", q.window);
      if (q.window < 1 || q.stride < 1)
        throw gcvt_error("layer " + id + ": bad Pool parameters");
      return q;
    }
    case LayerKind::Norm: {
      NormParams n;
      for (double v : p.at("scale")) n.scale.push_back(fp16_round(static_cast<float>(v)));
      for (double v : p.at("shift")) n.shift.push_back(fp16_round(static_cast<float>(v)));
      if (n.scale.size() != n.shift.size())
        throw gcvt_error("layer " + id + ": scale/shift length mismatch");
      return n;
    }
    case LayerKind::Activation: {
      std::string k = p.value("kind", std::string("relu"));
      if (k != "relu") throw gcvt_error("layer " + id + ": unknown activation " + k);
      return ActivationParams{};
    }
  }
  throw gcvt_error("unreachable");
}

static Tensor fp16_rounded(Tensor t) {
  for (float& v : t.values) v = fp16_round(v);
  return t;
}

static void topo_sort(ComputationGraph& g) {
  std::map<std::string, int> indeg;
  for (const Layer& l : g.nodes) indeg[l.id] = 0;
  for (const Layer& l : g.nodes)
    for (const std::string& in : l.inputs)
      if (in != "@input") {
        if (!indeg.count(in)) throw gcvt_error("layer " + l.id + ": unknown input " + in);
        ++indeg[l.id];
      }
  std::deque<std::string> ready;
  for (const Layer& l : g.nodes)
    if (indeg[l.id] == 0) ready.push_back(l.id);
  std::vector<Layer> order;
  while (!ready.empty()) {
    std::string id = ready.front();
    ready.pop_front();
    order.push_back(g.layer(id));
    for (const std::string& c : g.consumers(id))
      if (--indeg[c] == 0) ready.push_back(c);
  }
  if (order.size() != g.nodes.size()) throw gcvt_error("computation graph has a cycle");
  g.nodes = std::move(order);
}

ComputationGraph parse_model(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw gcvt_error(std::string("model syntax error: ") + e.what());
  }
  ComputationGraph g;
  auto resolve = [&](const std::string& p) {
    return (base_dir.empty() || p.find('/') == 0) ? p : base_dir + "/" + p;
  };
  for (const json& t : doc.value("tensors", json::array())) {
    std::string id = t.at("id").get<std::string>();
    if (t.contains("file")) {
      g.tensors[id] = read_tensor_file(resolve(t.at("file").get<std::string>()));
    } else if (t.contains("seed")) {
      g.tensors[id] = seeded_tensor(t.at("seed").get<uint64_t>(),
                                    t.at("dims").get<std::vector<int64_t>>());
    } else if (t.contains("data")) {
      g.tensors[id] = fp16_rounded(Tensor(t.at("dims").get<std::vector<int64_t>>(),
                                          t.at("data").get<std::vector<float>>()));
    } else {
      throw gcvt_error("tensor " + id + ": need file, seed or data");
    }
  }
  for (const json& e : doc.value("graphs", json::array())) {
    std::string id = e.at("id").get<std::string>();
    int64_t rows = e.at("rows").get<int64_t>();
    int64_t cols = e.at("cols").get<int64_t>();
    SparseMatrix s;
    if (e.contains("edge_file")) {
      s = read_edge_list(resolve(e.at("edge_file").get<std::string>()), rows, cols);
    } else {
      s.n_rows = rows;
      s.n_cols = cols;
      for (const json& tr : e.at("triples"))
        s.triples.push_back({tr.at(0).get<uint32_t>(), tr.at(1).get<uint32_t>(),
                             fp16_round(tr.at(2).get<float>())});
      s.sort_triples();
      s.validate();
    }
    g.graphs[id] = std::move(s);
  }
  for (const json& l : doc.at("layers")) {
    Layer layer;
    layer.id = l.at("id").get<std::string>();
    layer.kind = kind_from_string(l.at("kind").get<std::string>());
    layer.params = parse_params(layer.kind, l.value("params", json::object()), layer.id);
    layer.inputs = l.value("inputs", std::vector<std::string>{});
    if (l.contains("params") && l.at("params").contains("weights"))
      layer.weights = l.at("params").at("weights").get<std::string>();
    for (const Layer& other : g.nodes)
      if (other.id == layer.id) throw gcvt_error("duplicate layer id: " + layer.id);
    g.nodes.push_back(std::move(layer));
  }
  if (doc.contains("input")) {
    const json& in = doc.at("input");
    g.input_tensor = in.value("tensor", std::string());
    g.input_shape.dims = in.at("shape").get<std::vector<int64_t>>();
  }
  if (!g.input_tensor.empty() && !g.tensors.count(g.input_tensor))
    throw gcvt_error("dangling input tensor reference: " + g.input_tensor);
  for (const Layer& l : g.nodes) {
    if (!l.weights.empty() && !g.tensors.count(l.weights))
      throw gcvt_error("layer " + l.id + ": dangling tensor reference " + l.weights);
    if (const auto* mp = std::get_if<MpParams>(&l.params))
      if (!mp->adjacency.empty() && !g.graphs.count(mp->adjacency))
        throw gcvt_error("layer " + l.id + ": dangling graph reference " + mp->adjacency);
    if (const auto* vip = std::get_if<VipParams>(&l.params))
      if (!g.graphs.count(vip->edge_pattern))
        throw gcvt_error("layer " + l.id + ": dangling graph reference " + vip->edge_pattern);
  }
  topo_sort(g);
  for (const Layer& l : g.nodes)
    if (g.consumers(l.id).empty()) g.outputs.push_back(l.id);
  infer_shapes(g);
  return g;
}

ComputationGraph parse_model_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw gcvt_error("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto slash = path.find_last_of('/');
  return parse_model(text, slash == std::string::npos ? "" : path.substr(0, slash));
}

// --------------------------------------------------------------------
// Serialization
// --------------------------------------------------------------------

static json params_to_json(const Layer& l) {
  json p = json::object();
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ConvParams>) {
          p["c_in"] = v.c_in;
          p["c_out"] = v.c_out;
          p["k1"] = v.k1;
          p["k2"] = v.k2;
          p["stride"] = v.stride;
          p["padding"] = v.padding;
        } else if constexpr (std::is_same_v<T, MpParams>) {
          p["reduction"] = v.reduction == Reduction::Sum ? "sum" : "max";
          if (!v.adjacency.empty()) p["adjacency"] = v.adjacency;
          if (v.patch) p["patch"] = {v.patch->first, v.patch->second};
        } else if constexpr (std::is_same_v<T, LinearParams>) {
          p["f_in"] = v.f_in;
          p["f_out"] = v.f_out;
        } else if constexpr (std::is_same_v<T, VipParams>) {
          p["edge_pattern"] = v.edge_pattern;
          p["softmax"] = v.softmax;
          if (v.patch) p["patch"] = {v.patch->first, v.patch->second};
        } else if constexpr (std::is_same_v<T, DmParams>) {
          p["mode"] = to_string(v.mode);
          p["patch"] = {v.ph, v.pw};
        } else if constexpr (std::is_same_v<T, PoolParams>) {
          p["kind"] = v.kind == PoolKind::Max ? "max" : "avg";
          p["window"] = v.window;
          p["stride"] = v.stride;
        } else if constexpr (std::is_same_v<T, NormParams>) {
          p["scale"] = v.scale;
          p["shift"] = v.shift;
        } else if constexpr (std::is_same_v<T, ActivationParams>) {
          p["kind"] = "relu";
        }
      },
      l.params);
  if (!l.weights.empty()) p["weights"] = l.weights;
  return p;
}

std::string serialize_model(const ComputationGraph& g) {
  json doc;
  doc["layers"] = json::array();
  for (const Layer& l : g.nodes) {
    json jl;
    jl["id"] = l.id;
    jl["kind"] = to_string(l.kind);
    jl["params"] = params_to_json(l);
    jl["inputs"] = l.inputs;
    doc["layers"].push_back(jl);
  }
  doc["tensors"] = json::array();
  for (const auto& [id, t] : g.tensors)
    doc["tensors"].push_back({{"id", id}, {"dims", t.dims}, {"data", t.values}});
  doc["graphs"] = json::array();
  for (const auto& [id, s] : g.graphs) {
    json triples = json::array();
    for (const Triple& t : s.triples) triples.push_back({t.src, t.dst, t.val});
    doc["graphs"].push_back(
        {{"id", id}, {"rows", s.n_rows}, {"cols", s.n_cols}, {"triples", triples}});
  }
  if (!g.input_shape.dims.empty()) {
    doc["input"] = {{"shape", g.input_shape.dims}};
    if (!g.input_tensor.empty()) doc["input"]["tensor"] = g.input_tensor;
  }
  return doc.dump(2);
}

// --------------------------------------------------------------------
// Shape inference
// --------------------------------------------------------------------

static bool is_gnn_side(LayerKind k) { return k == LayerKind::MP || k == LayerKind::VIP; }

// Square root of a perfect square, or nullopt.
static std::optional<int64_t> exact_sqrt(int64_t n) {
  int64_t r = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  for (int64_t c = std::max<int64_t>(0, r - 1); c <= r + 1; ++c)
    if (c * c == n) return c;
  return std::nullopt;
}

// Resolves the effective node-feature shape seen by a GNN-side layer,
// applying a virtual DM when the producer is a feature-map shape.
static Shape gnn_input_shape(const Shape& in, int64_t n_vertices,
                             const std::optional<std::pair<int, int>>& patch,
                             const std::string& id, bool allow_dm) {
  if (in.dims.size() == 2 && !in.sparse) return in;
  if (in.dims.size() == 3) {
    if (!allow_dm)
      throw gcvt_error("layer " + id + ": feature-map input " + in.str() +
                       " requires a DM layer");
    int64_t c = in.dims[0], h = in.dims[1], w = in.dims[2];
    if (n_vertices == c) {
      Shape s;
      s.dims = {c, h * w};
      s.grid = {h, w};
      return s;
    }
    if (patch && h % patch->first == 0 && w % patch->second == 0 &&
        n_vertices == (h / patch->first) * (w / patch->second)) {
      Shape s;
      s.dims = {n_vertices, c * patch->first * patch->second};
      return s;
    }
    throw gcvt_error("layer " + id + ": no DM mode reconciles " + in.str() + " with " +
                     std::to_string(n_vertices) + " vertices");
  }
  throw gcvt_error("layer " + id + ": expected node features, got " + in.str());
}

static Shape infer_layer_shape(const ComputationGraph& g, const Layer& l,
                               const std::vector<Shape>& ins, bool allow_dm) {
  auto need_inputs = [&](size_t n) {
    if (ins.size() < n)
      throw gcvt_error("layer " + l.id + ": expected " + std::to_string(n) + " input(s)");
  };
  switch (l.kind) {
    case LayerKind::Conv: {
      need_inputs(1);
      const auto& p = std::get<ConvParams>(l.params);
      Shape in = ins[0];
      if (in.dims.size() == 2 && !in.sparse) {
        // GNN-side producer; a NodeToChannel DM reconciles this boundary.
        if (!allow_dm)
          throw gcvt_error("layer " + l.id + ": node-feature input " + in.str() +
                           " requires a DM layer");
        int64_t h, w;
        if (in.grid) {
          h = in.grid->first;
          w = in.grid->second;
        } else if (auto r = exact_sqrt(in.dims[1])) {
          h = w = *r;
        } else {
          throw gcvt_error("layer " + l.id + ": cannot recover spatial dims from " +
                           in.str());
        }
        if (h * w != in.dims[1])
          throw gcvt_error("layer " + l.id + ": grid does not match feature length");
        in.dims = {in.dims[0], h, w};
      }
      if (in.dims.size() != 3)
        throw gcvt_error("layer " + l.id + ": Conv expects (c,h,w), got " + in.str());
      if (in.dims[0] != p.c_in)
        throw gcvt_error("shape mismatch: layer " + l.id + " expects c_in=" +
                         std::to_string(p.c_in) + " but producer " + l.inputs[0] +
                         " provides " + in.str());
      int64_t h_out = (in.dims[1] + 2 * p.padding - p.k1) / p.stride + 1;
      int64_t w_out = (in.dims[2] + 2 * p.padding - p.k2) / p.stride + 1;
      if (in.dims[1] + 2 * p.padding < p.k1 || in.dims[2] + 2 * p.padding < p.k2 ||
          h_out < 1 || w_out < 1)
        throw gcvt_error("layer " + l.id + ": convolution produces empty output");
      if (!l.weights.empty()) {
        const Tensor& w = g.tensors.at(l.weights);
        std::vector<int64_t> want = {p.c_out, p.c_in, p.k1, p.k2};
        if (w.dims != want)
          throw gcvt_error("layer " + l.id + ": weight tensor dims mismatch");
      }
      return Shape{{p.c_out, h_out, w_out}};
    }
    case LayerKind::Pool: {
      need_inputs(1);
      const auto& p = std::get<PoolParams>(l.params);
      const Shape& in = ins[0];
      if (in.dims.size() != 3)
        throw gcvt_error("layer " + l.id + ": Pool expects (c,h,w), got " + in.str());
      int64_t h_out = (in.dims[1] - p.window) / p.stride + 1;
      int64_t w_out = (in.dims[2] - p.window) / p.stride + 1;
      if (h_out < 1 || w_out < 1)
        throw gcvt_error("layer " + l.id + ": pooling produces empty output");
      return Shape{{in.dims[0], h_out, w_out}};
    }
    case LayerKind::Linear: {
      need_inputs(1);
      const auto& p = std::get<LinearParams>(l.params);
      Shape in = ins[0];
      if (in.dims.size() == 3 && in.dims[1] * in.dims[2] == p.f_in)
        in = Shape{{in.dims[0], p.f_in}};  // free row-major reshape
      if (in.dims.size() != 2 || in.sparse || in.dims[1] != p.f_in)
        throw gcvt_error("shape mismatch: layer " + l.id + " expects f_in=" +
                         std::to_string(p.f_in) + " but producer " + l.inputs[0] +
                         " provides " + ins[0].str());
      if (!l.weights.empty()) {
        const Tensor& w = g.tensors.at(l.weights);
        if (w.dims != std::vector<int64_t>{p.f_in, p.f_out})
          throw gcvt_error("layer " + l.id + ": weight tensor dims mismatch");
      }
      return Shape{{in.dims[0], p.f_out}};
    }
    case LayerKind::MP: {
      need_inputs(1);
      const auto& p = std::get<MpParams>(l.params);
      int64_t n_vertices;
      if (!p.adjacency.empty()) {
        const SparseMatrix& a = g.graphs.at(p.adjacency);
        if (a.n_rows != a.n_cols)
          throw gcvt_error("layer " + l.id + ": adjacency must be square");
        n_vertices = a.n_rows;
      } else {
        if (ins.size() < 2 || !ins[1].sparse)
          throw gcvt_error("layer " + l.id +
                           ": MP without static adjacency needs a VIP score input");
        n_vertices = ins[1].dims[0];
      }
      Shape in = gnn_input_shape(ins[0], n_vertices, p.patch, l.id, allow_dm);
      if (in.dims[0] != n_vertices)
        throw gcvt_error("shape mismatch: layer " + l.id + " adjacency has " +
                         std::to_string(n_vertices) + " vertices but features are " +
                         in.str());
      return in;  // (V, f), spatial grid carried through
    }
    case LayerKind::VIP: {
      need_inputs(1);
      const auto& p = std::get<VipParams>(l.params);
      const SparseMatrix& pat = g.graphs.at(p.edge_pattern);
      if (pat.n_rows != pat.n_cols)
        throw gcvt_error("layer " + l.id + ": edge pattern must be square");
      Shape in = gnn_input_shape(ins[0], pat.n_rows, p.patch, l.id, allow_dm);
      if (in.dims[0] != pat.n_rows)
        throw gcvt_error("shape mismatch: layer " + l.id + " pattern has " +
                         std::to_string(pat.n_rows) + " vertices but features are " +
                         in.str());
      Shape out;
      out.dims = {pat.n_rows, pat.n_cols};
      out.sparse = true;
      return out;
    }
    case LayerKind::DM: {
      need_inputs(1);
      const auto& p = std::get<DmParams>(l.params);
      const Shape& in = ins[0];
      switch (p.mode) {
        case DmMode::ChannelToNode: {
          if (in.dims.size() != 3)
            throw gcvt_error("layer " + l.id + ": channel_to_node expects (c,h,w)");
          Shape s;
          s.dims = {in.dims[0], in.dims[1] * in.dims[2]};
          s.grid = {in.dims[1], in.dims[2]};
          return s;
        }
        case DmMode::PatchToNode: {
          if (in.dims.size() != 3 || in.dims[1] % p.ph != 0 || in.dims[2] % p.pw != 0)
            throw gcvt_error("layer " + l.id + ": patch_to_node expects (c,h,w) with h,w"
                             " divisible by the patch");
          Shape s;
          s.dims = {(in.dims[1] / p.ph) * (in.dims[2] / p.pw),
                    in.dims[0] * p.ph * p.pw};
          return s;
        }
        case DmMode::NodeToChannel: {
          if (in.dims.size() != 2 || in.sparse)
            throw gcvt_error("layer " + l.id + ": node_to_channel expects (V,f)");
          int64_t h, w;
          if (in.grid) {
            h = in.grid->first;
            w = in.grid->second;
          } else if (auto r = exact_sqrt(in.dims[1])) {
            h = w = *r;
          } else {
            throw gcvt_error("layer " + l.id + ": cannot recover spatial dims from " +
                             in.str());
          }
          return Shape{{in.dims[0], h, w}};
        }
      }
      throw gcvt_error("unreachable");
    }
    case LayerKind::Norm: {
      need_inputs(1);
      const auto& p = std::get<NormParams>(l.params);
      if (static_cast<int64_t>(p.scale.size()) != ins[0].dims[0])
        throw gcvt_error("layer " + l.id + ": scale length does not match channel count");
      return ins[0];
    }
    case LayerKind::Activation:
      need_inputs(1);
      return ins[0];
  }
  throw gcvt_error("unreachable");
}

void infer_shapes(ComputationGraph& g, bool allow_dm_boundaries) {
  g.output_shapes.clear();
  for (const Layer& l : g.nodes) {
    std::vector<Shape> ins;
    for (const std::string& in : l.inputs) {
      if (in == "@input") {
        if (g.input_shape.dims.empty())
          throw gcvt_error("layer " + l.id + " reads @input but the model declares none");
        ins.push_back(g.input_shape);
      } else {
        auto it = g.output_shapes.find(in);
        if (it == g.output_shapes.end())
          throw gcvt_error("layer " + l.id + ": input " + in + " not yet inferred");
        ins.push_back(it->second);
      }
    }
    g.output_shapes[l.id] = infer_layer_shape(g, l, ins, allow_dm_boundaries);
  }
}

std::vector<std::string> validate_graph(const ComputationGraph& g) {
  std::vector<std::string> violations;

  // Cycle detection over the id graph (nodes may not be in topo order).
  std::map<std::string, std::vector<std::string>> succ;
  std::map<std::string, int> state;  // 0 unvisited, 1 on stack, 2 done
  for (const Layer& l : g.nodes) {
    state[l.id] = 0;
    for (const std::string& in : l.inputs)
      if (in != "@input") succ[in].push_back(l.id);
  }
  std::vector<std::string> stack;
  bool cycle_found = false;
  std::function<void(const std::string&)> dfs = [&](const std::string& id) {
    state[id] = 1;
    stack.push_back(id);
    for (const std::string& s : succ[id]) {
      if (!state.count(s)) continue;
      if (state[s] == 1 && !cycle_found) {
        cycle_found = true;
        std::string msg = "cycle: [";
        auto it = std::find(stack.begin(), stack.end(), s);
        for (auto i = it; i != stack.end(); ++i)
          msg += (i == it ? "" : ",") + *i;
        violations.push_back(msg + "]");
      } else if (state[s] == 0) {
        dfs(s);
      }
    }
    stack.pop_back();
    state[id] = 2;
  };
  for (const Layer& l : g.nodes)
    if (state[l.id] == 0) dfs(l.id);

  // Reachability from the model input.
  std::set<std::string> reachable;
  std::deque<std::string> frontier;
  for (const Layer& l : g.nodes)
    if (std::find(l.inputs.begin(), l.inputs.end(), "@input") != l.inputs.end() ||
        l.inputs.empty()) {
      reachable.insert(l.id);
      frontier.push_back(l.id);
    }
  while (!frontier.empty()) {
    std::string id = frontier.front();
    frontier.pop_front();
    for (const std::string& c : succ[id])
      if (reachable.insert(c).second) frontier.push_back(c);
  }
  for (const Layer& l : g.nodes)
    if (!reachable.count(l.id)) violations.push_back("unreachable: " + l.id);

  if (!cycle_found && violations.empty()) {
    try {
      ComputationGraph copy = g;
      topo_sort(copy);
      infer_shapes(copy);
    } catch (const gcvt_error& e) {
      violations.push_back(e.what());
    }
  }
  return violations;
}

}  // namespace gcv
