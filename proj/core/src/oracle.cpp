#include "gcvt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gcvt/fp16.hpp"

namespace gcv {

DTensor to_wide(const Tensor& t) {
  DTensor d;
  d.dims = t.dims;
  d.values.assign(t.values.begin(), t.values.end());
  return d;
}

Tensor to_fp16(const DTensor& t) {
  std::vector<float> v;
  v.reserve(t.values.size());
  for (double x : t.values) v.push_back(fp16_round(static_cast<float>(x)));
  return Tensor(t.dims, std::move(v));
}

DTensor direct_conv2d(const DTensor& in, const Tensor& weights, int stride, int padding) {
  const int64_t c_in = in.dims[0], h_in = in.dims[1], w_in = in.dims[2];
  const int64_t c_out = weights.dims[0], k1 = weights.dims[2], k2 = weights.dims[3];
  const int64_t h_out = (h_in + 2 * padding - k1) / stride + 1;
  const int64_t w_out = (w_in + 2 * padding - k2) / stride + 1;
  DTensor out;
  out.dims = {c_out, h_out, w_out};
  out.values.assign(static_cast<size_t>(c_out * h_out * w_out), 0.0);
  for (int64_t co = 0; co < c_out; ++co)
    for (int64_t y = 0; y < h_out; ++y)
      for (int64_t x = 0; x < w_out; ++x) {
        double sum = 0.0;
        for (int64_t r = 0; r < k1; ++r)
          for (int64_t c = 0; c < k2; ++c) {
            int64_t iy = y * stride + r - padding;
            int64_t ix = x * stride + c - padding;
            double tap = 0.0;
            if (iy >= 0 && iy < h_in && ix >= 0 && ix < w_in)
              for (int64_t ci = 0; ci < c_in; ++ci) {
                double w = weights.values[((co * c_in + ci) * k1 + r) * k2 + c];
                tap += w * in.values[(ci * h_in + iy) * w_in + ix];
              }
            sum += tap;
          }
        out.values[(co * h_out + y) * w_out + x] = sum;
      }
  return out;
}

namespace {

DTensor channel_to_node(const DTensor& in) {
  DTensor out;
  out.dims = {in.dims[0], in.dims[1] * in.dims[2]};
  out.values = in.values;
  return out;
}

DTensor patch_to_node(const DTensor& in, int ph, int pw) {
  const int64_t c = in.dims[0], h = in.dims[1], w = in.dims[2];
  const int64_t gh = h / ph, gw = w / pw;
  DTensor out;
  out.dims = {gh * gw, c * ph * pw};
  out.values.assign(static_cast<size_t>(out.dims[0] * out.dims[1]), 0.0);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        int64_t node = (y / ph) * gw + (x / pw);
        int64_t feat = ch * ph * pw + (y % ph) * pw + (x % pw);
        out.values[node * out.dims[1] + feat] = in.values[(ch * h + y) * w + x];
      }
  return out;
}

DTensor node_to_channel(const DTensor& in, int64_t h, int64_t w) {
  DTensor out;
  out.dims = {in.dims[0], h, w};
  out.values = in.values;
  return out;
}

struct Evaluator {
  const ComputationGraph& g;
  RefResult result;

  // Resolves an input as node features, applying the implied DM for
  // feature-map producers of GNN-side layers.
  DTensor as_node_features(const DTensor& in, int64_t n_vertices,
                           const std::optional<std::pair<int, int>>& patch) {
    if (in.dims.size() == 2) return in;
    if (in.dims[0] == n_vertices) return channel_to_node(in);
    if (patch) return patch_to_node(in, patch->first, patch->second);
    throw gcvt_error("reference: cannot reconcile feature maps with vertex count");
  }

  DTensor as_feature_maps(const DTensor& in, const Shape& shape) {
    if (in.dims.size() == 3) return in;
    int64_t h, w;
    if (shape.grid) {
      h = shape.grid->first;
      w = shape.grid->second;
    } else {
      h = w = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(in.dims[1]))));
    }
    return node_to_channel(in, h, w);
  }

  void eval(const Layer& l, const Tensor& input) {
    std::vector<const DTensor*> ins;
    std::vector<Shape> in_shapes;
    DTensor model_input;
    for (const std::string& id : l.inputs) {
      if (id == "@input") {
        model_input = to_wide(input);
        model_input.dims = g.input_shape.dims;
        ins.push_back(&model_input);
        in_shapes.push_back(g.input_shape);
      } else if (result.dense.count(id)) {
        ins.push_back(&result.dense.at(id));
        in_shapes.push_back(g.output_shapes.at(id));
      } else {
        ins.push_back(nullptr);  // sparse producer (VIP)
        in_shapes.push_back(g.output_shapes.at(id));
      }
    }
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto& p = std::get<ConvParams>(l.params);
        DTensor in = as_feature_maps(*ins[0], in_shapes[0]);
        result.dense[l.id] = direct_conv2d(in, g.tensors.at(l.weights), p.stride, p.padding);
        break;
      }
      case LayerKind::Pool: {
        const auto& p = std::get<PoolParams>(l.params);
        const DTensor& in = *ins[0];
        const int64_t c = in.dims[0], h = in.dims[1], w = in.dims[2];
        const int64_t ho = (h - p.window) / p.stride + 1;
        const int64_t wo = (w - p.window) / p.stride + 1;
        DTensor out;
        out.dims = {c, ho, wo};
        out.values.assign(static_cast<size_t>(c * ho * wo), 0.0);
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t y = 0; y < ho; ++y)
            for (int64_t x = 0; x < wo; ++x) {
              double acc = p.kind == PoolKind::Max ? -HUGE_VAL : 0.0;
              for (int64_t r = 0; r < p.window; ++r)
                for (int64_t q = 0; q < p.window; ++q) {
                  double v = in.values[(ch * h + y * p.stride + r) * w + x * p.stride + q];
                  if (p.kind == PoolKind::Max) acc = std::max(acc, v);
                  else acc += v;
                }
              if (p.kind == PoolKind::Avg)
                acc /= static_cast<double>(p.window) * p.window;
              out.values[(ch * ho + y) * wo + x] = acc;
            }
        result.dense[l.id] = std::move(out);
        break;
      }
      case LayerKind::Linear: {
        const auto& p = std::get<LinearParams>(l.params);
        DTensor in = *ins[0];
        if (in.dims.size() == 3) in.dims = {in.dims[0], in.dims[1] * in.dims[2]};
        const Tensor& w = g.tensors.at(l.weights);
        DTensor out;
        out.dims = {in.dims[0], p.f_out};
        out.values.assign(static_cast<size_t>(in.dims[0] * p.f_out), 0.0);
        for (int64_t i = 0; i < in.dims[0]; ++i)
          for (int64_t j = 0; j < p.f_out; ++j) {
            double sum = 0.0;
            for (int64_t k = 0; k < p.f_in; ++k)
              sum += in.at2(i, k) * w.at2(k, j);
            out.at2(i, j) = sum;
          }
        result.dense[l.id] = std::move(out);
        break;
      }
      case LayerKind::MP: {
        const auto& p = std::get<MpParams>(l.params);
        // Adjacency: static graph, or scores from a VIP producer.
        const SparseMatrix* stat = nullptr;
        const DSparse* dyn = nullptr;
        int64_t n_vertices;
        if (!p.adjacency.empty()) {
          stat = &g.graphs.at(p.adjacency);
          n_vertices = stat->n_rows;
        } else {
          for (const std::string& id : l.inputs)
            if (result.sparse.count(id)) dyn = &result.sparse.at(id);
          if (!dyn) throw gcvt_error("reference: MP layer " + l.id + " has no adjacency");
          n_vertices = dyn->n_rows;
        }
        DTensor h = as_node_features(*ins[0], n_vertices, p.patch);
        const int64_t f = h.dims[1];
        DTensor out;
        out.dims = {n_vertices, f};
        // Reduction identity is 0 (zero-initialized result buffer).
        out.values.assign(static_cast<size_t>(n_vertices * f), 0.0);
        auto update = [&](uint32_t src, uint32_t dst, double val) {
          for (int64_t j = 0; j < f; ++j) {
            double m = val * h.at2(src, j);
            if (p.reduction == Reduction::Sum) out.at2(dst, j) += m;
            else out.at2(dst, j) = std::max(out.at2(dst, j), m);
          }
        };
        if (stat)
          for (const Triple& t : stat->triples) update(t.src, t.dst, t.val);
        else
          for (size_t e = 0; e < dyn->val.size(); ++e)
            update(dyn->src[e], dyn->dst[e], dyn->val[e]);
        out.dims = {n_vertices, f};
        result.dense[l.id] = std::move(out);
        break;
      }
      case LayerKind::VIP: {
        const auto& p = std::get<VipParams>(l.params);
        const SparseMatrix& pat = g.graphs.at(p.edge_pattern);
        DTensor h = as_node_features(*ins[0], pat.n_rows, p.patch);
        DSparse out;
        out.n_rows = pat.n_rows;
        out.n_cols = pat.n_cols;
        for (const Triple& t : pat.triples) {
          double sum = 0.0;
          for (int64_t k = 0; k < h.dims[1]; ++k)
            sum += h.at2(t.dst, k) * h.at2(t.src, k);
          out.src.push_back(t.src);
          out.dst.push_back(t.dst);
          out.val.push_back(sum);
        }
        if (p.softmax) {
          // Row-wise softmax over each dst row of the score matrix.
          size_t e = 0;
          while (e < out.val.size()) {
            size_t begin = e;
            while (e < out.val.size() && out.dst[e] == out.dst[begin]) ++e;
            double m = -HUGE_VAL;
            for (size_t i = begin; i < e; ++i) m = std::max(m, out.val[i]);
            double denom = 0.0;
            for (size_t i = begin; i < e; ++i) denom += std::exp(out.val[i] - m);
            for (size_t i = begin; i < e; ++i)
              out.val[i] = std::exp(out.val[i] - m) / denom;
          }
        }
        result.sparse[l.id] = std::move(out);
        break;
      }
      case LayerKind::DM: {
        const auto& p = std::get<DmParams>(l.params);
        const DTensor& in = *ins[0];
        if (p.mode == DmMode::ChannelToNode) {
          result.dense[l.id] = channel_to_node(in);
        } else if (p.mode == DmMode::PatchToNode) {
          result.dense[l.id] = patch_to_node(in, p.ph, p.pw);
        } else {
          result.dense[l.id] = in;
          result.dense[l.id].dims = g.output_shapes.at(l.id).dims;
        }
        break;
      }
      case LayerKind::Norm: {
        const auto& p = std::get<NormParams>(l.params);
        DTensor out = *ins[0];
        const int64_t rows = out.dims[0], cols = out.cols();
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < cols; ++j)
            out.values[i * cols + j] = p.scale[i] * out.values[i * cols + j] + p.shift[i];
        result.dense[l.id] = std::move(out);
        break;
      }
      case LayerKind::Activation: {
        DTensor out = *ins[0];
        for (double& v : out.values) v = std::max(0.0, v);
        result.dense[l.id] = std::move(out);
        break;
      }
    }
  }
};

}  // namespace

RefResult run_reference(const ComputationGraph& g, const Tensor& input,
                        uint64_t visit_seed) {
  Evaluator ev{g, {}};
  // Ready-queue evaluation; visit_seed permutes the choice among ready
  // nodes to exercise order invariance.
  std::map<std::string, size_t> remaining;
  for (const Layer& l : g.nodes) {
    size_t deps = 0;
    for (const std::string& in : l.inputs)
      if (in != "@input") ++deps;
    remaining[l.id] = deps;
  }
  std::vector<std::string> ready;
  for (const Layer& l : g.nodes)
    if (remaining[l.id] == 0) ready.push_back(l.id);
  std::mt19937_64 rng(visit_seed);
  size_t done = 0;
  while (!ready.empty()) {
    size_t pick = visit_seed == 0 ? 0 : static_cast<size_t>(rng() % ready.size());
    std::string id = ready[pick];
    ready.erase(ready.begin() + static_cast<ptrdiff_t>(pick));
    ev.eval(g.layer(id), input);
    ++done;
    for (const std::string& c : g.consumers(id))
      if (--remaining[c] == 0) ready.push_back(c);
  }
  if (done != g.nodes.size()) throw gcvt_error("reference: graph has a cycle");
  return ev.result;
}

ComparisonReport compare(const std::map<std::string, Tensor>& sim_outputs,
                         const RefResult& ref, int64_t tol_ulps) {
  ComparisonReport report;
  for (const auto& [id, sim] : sim_outputs) {
    ComparisonReport::PerOutput po;
    po.id = id;
    po.ulp_histogram.assign(9, 0);
    auto it = ref.dense.find(id);
    if (it == ref.dense.end()) {
      po.pass = false;
      po.failures.push_back("no reference output for " + id);
      report.outputs.push_back(po);
      report.pass = false;
      continue;
    }
    const DTensor& r = it->second;
    if (static_cast<int64_t>(r.values.size()) != sim.size()) {
      po.pass = false;
      po.failures.push_back("shape mismatch for " + id);
      report.outputs.push_back(po);
      report.pass = false;
      continue;
    }
    for (size_t i = 0; i < sim.values.size(); ++i) {
      float expect = fp16_round(static_cast<float>(r.values[i]));
      float got = sim.values[i];
      int64_t ulp = fp16_ulp_distance(got, expect);
      double abs_err = std::fabs(static_cast<double>(got) - r.values[i]);
      double rel_err = r.values[i] != 0.0 ? abs_err / std::fabs(r.values[i]) : abs_err;
      po.max_abs_error = std::max(po.max_abs_error, abs_err);
      po.max_rel_error = std::max(po.max_rel_error, rel_err);
      po.max_ulp = std::max(po.max_ulp, ulp);
      ++po.ulp_histogram[static_cast<size_t>(std::min<int64_t>(ulp, 8))];
      if (ulp > tol_ulps && po.failures.size() < 8) {
        std::ostringstream os;
        os << id << "[" << i << "]: got " << got << " expected " << expect << " ("
           << ulp << " ulps)";
        po.failures.push_back(os.str());
      }
    }
    po.pass = po.max_ulp <= tol_ulps;
    report.pass = report.pass && po.pass;
    report.outputs.push_back(std::move(po));
  }
  return report;
}

std::string ComparisonReport::to_json() const {
  nlohmann::json j;
  j["pass"] = pass;
  j["outputs"] = nlohmann::json::array();
  for (const PerOutput& po : outputs) {
    nlohmann::json o;
    o["id"] = po.id;
    o["max_abs_error"] = po.max_abs_error;
    o["max_rel_error"] = po.max_rel_error;
    o["max_ulp"] = po.max_ulp;
    o["ulp_histogram"] = po.ulp_histogram;
    o["pass"] = po.pass;
    o["failures"] = po.failures;
    j["outputs"].push_back(o);
  }
  return j.dump(2);
}

}  // namespace gcv
