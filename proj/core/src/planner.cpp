#include "gcvt/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace gcv {

using nlohmann::json;

const char* to_string(Primitive p) {
  switch (p) {
    case Primitive::DDMM: return "DDMM";
    case Primitive::SpDMM: return "SpDMM";
    case Primitive::SDDMM: return "SDDMM";
    case Primitive::PSVM: return "PSVM";
    case Primitive::PVVA: return "PVVA";
    case Primitive::DM: return "DM";
  }
  return "?";
}

ArchConfig arch_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw gcvt_error(std::string("arch syntax error: ") + e.what());
  }
  ArchConfig a;
  a.n_pe = doc.value("n_pe", a.n_pe);
  a.p_ca = doc.value("p_ca", a.p_ca);
  a.bank_depth = doc.value("bank_depth", a.bank_depth);
  a.external_memory_bytes = doc.value("external_memory_bytes", a.external_memory_bytes);
  a.mem_bandwidth = doc.value("mem_bandwidth", a.mem_bandwidth);
  a.clock_ratio = doc.value("clock_ratio", a.clock_ratio);
  if (a.n_pe < 1 || a.p_ca < 2 || a.p_ca % 2 || a.bank_depth < 1 || a.mem_bandwidth < 1)
    throw gcvt_error("invalid arch configuration");
  return a;
}

ArchConfig arch_from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw gcvt_error("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return arch_from_json(text);
}

std::string arch_to_json(const ArchConfig& a) {
  json doc;
  doc["n_pe"] = a.n_pe;
  doc["p_ca"] = a.p_ca;
  doc["bank_depth"] = a.bank_depth;
  doc["external_memory_bytes"] = a.external_memory_bytes;
  doc["mem_bandwidth"] = a.mem_bandwidth;
  doc["clock_ratio"] = a.clock_ratio;
  return doc.dump(2);
}

static int64_t round_up(int64_t x, int64_t p) { return (x + p - 1) / p * p; }
static int64_t floor_mult(int64_t x, int64_t p) { return x / p * p; }

// Greedy deterministic choice: maximize the reduction extent first so
// accumulate chains stay short, then rows, then columns.
static void choose_tiles(int64_t s1, int64_t s2, int64_t s3, const ArchConfig& arch,
                         int64_t& t1, int64_t& t2, int64_t& t3) {
  const int64_t p = arch.p_ca;
  const int64_t cap = arch.buffer_values();
  t2 = std::min(round_up(s2, p), floor_mult(cap / p, p));
  if (t2 < p) throw gcvt_error("reduction tile does not fit on chip");
  t1 = std::min(round_up(s1, p), floor_mult(cap / t2, p));
  if (t1 < p) throw gcvt_error("row tile does not fit on chip");
  t3 = std::min({round_up(s3, p), floor_mult(cap / t2, p), floor_mult(cap / t1, p)});
  if (t3 < p) throw gcvt_error("column tile does not fit on chip");
}

std::vector<TileTask> tile_matmul(const MatrixOp& op, const ArchConfig& arch) {
  int64_t t1, t2, t3;
  choose_tiles(op.s1, op.s2, op.s3, arch, t1, t2, t3);
  std::vector<TileTask> tasks;
  for (int64_t i0 = 0; i0 < op.s1; i0 += t1)
    for (int64_t j0 = 0; j0 < op.s3; j0 += t3)
      for (int64_t k0 = 0; k0 < op.s2; k0 += t2) {
        TileTask t;
        t.row0 = i0;
        t.col0 = j0;
        t.k0 = k0;
        t.t1 = std::min(t1, op.s1 - i0);
        t.t3 = std::min(t3, op.s3 - j0);
        t.t2 = std::min(t2, op.s2 - k0);
        t.accumulate = k0 > 0;
        t.commit = k0 + t.t2 >= op.s2;
        tasks.push_back(std::move(t));
      }
  return tasks;
}

void select_primitive(TileTask& t, const MatrixOp& op, const MatrixProgram& p,
                      const ArchConfig& arch) {
  const CostModel cm = arch.cost();
  const ProgramValue& av = p.value(op.a);
  int64_t nnz;
  if (av.cdense) {
    nnz = 0;
    for (int64_t i = t.row0; i < t.row0 + t.t1; ++i)
      for (int64_t k = t.k0; k < t.k0 + t.t2; ++k)
        if (av.cdense->at2(i, k) != 0.0f) ++nnz;
    t.nnz_exact = true;
  } else {
    nnz = std::llround(op.sparsity_hint * static_cast<double>(t.t1 * t.t2));
    nnz = std::clamp<int64_t>(nnz, 0, t.t1 * t.t2);
    t.nnz_exact = false;
  }
  t.nnz = nnz;
  const int64_t cost_dd = cm.ddmm(t.t1, t.t2, t.t3);
  const int64_t cost_sp = cm.spdmm(nnz, t.t3);
  if (cost_sp < cost_dd) {
    t.primitive = Primitive::SpDMM;
    t.cycles = cost_sp;
    if (av.cdense)
      for (int64_t i = t.row0; i < t.row0 + t.t1; ++i)
        for (int64_t k = t.k0; k < t.k0 + t.t2; ++k) {
          float v = av.cdense->at2(i, k);
          if (v != 0.0f)
            t.coo_slice.push_back({static_cast<uint32_t>(k), static_cast<uint32_t>(i), v});
        }
  } else {
    t.primitive = Primitive::DDMM;
    t.cycles = cost_dd;
  }
}

namespace {

// Record range [begin, end) of a (dst,src)-sorted triple list whose dst
// lies in [d0, d1).
std::pair<int64_t, int64_t> dst_range(const std::vector<Triple>& triples, int64_t d0,
                                      int64_t d1) {
  auto lo = std::lower_bound(triples.begin(), triples.end(), d0,
                             [](const Triple& t, int64_t d) { return t.dst < d; });
  auto hi = std::lower_bound(triples.begin(), triples.end(), d1,
                             [](const Triple& t, int64_t d) { return t.dst < d; });
  return {lo - triples.begin(), hi - triples.begin()};
}

std::vector<TileTask> plan_op(const MatrixOp& op, int op_index, const MatrixProgram& p,
                              const ArchConfig& arch) {
  const CostModel cm = arch.cost();
  const int64_t cap = arch.buffer_values();
  std::vector<TileTask> tasks;
  switch (op.kind) {
    case OpKind::MatMul: {
      tasks = tile_matmul(op, arch);
      for (TileTask& t : tasks) select_primitive(t, op, p, arch);
      break;
    }
    case OpKind::SparseMatMul: {
      const ProgramValue& av = p.value(op.a);
      if (op.col_mode) {
        const SparseMatrix& s = *av.csparse;
        if (op.s1 * op.s2 > cap || op.s1 * op.s3 > cap ||
            static_cast<int64_t>(s.triples.size()) > cap)
          throw gcvt_error("column-mode operand does not fit on chip");
        TileTask t;
        t.t1 = op.s1;
        t.t2 = op.s2;
        t.t3 = op.s3;
        t.primitive = Primitive::SpDMM;
        t.coo_slice = s.triples;
        t.nnz = static_cast<int64_t>(s.triples.size());
        t.nnz_exact = true;
        t.cycles = cm.spdmm(t.nnz, op.s1);
        tasks.push_back(std::move(t));
        break;
      }
      if (av.csparse) {
        const SparseMatrix& s = *av.csparse;
        int64_t t1, t2, t3;
        choose_tiles(op.s1, op.s2, op.s3, arch, t1, t2, t3);
        for (int64_t i0 = 0; i0 < op.s1; i0 += t1)
          for (int64_t j0 = 0; j0 < op.s3; j0 += t3)
            for (int64_t k0 = 0; k0 < op.s2; k0 += t2) {
              TileTask t;
              t.row0 = i0;
              t.col0 = j0;
              t.k0 = k0;
              t.t1 = std::min(t1, op.s1 - i0);
              t.t3 = std::min(t3, op.s3 - j0);
              t.t2 = std::min(t2, op.s2 - k0);
              t.accumulate = k0 > 0;
              t.commit = k0 + t.t2 >= op.s2;
              t.primitive = Primitive::SpDMM;
              auto [lo, hi] = dst_range(s.triples, i0, i0 + t.t1);
              for (int64_t e = lo; e < hi; ++e) {
                const Triple& tr = s.triples[static_cast<size_t>(e)];
                if (tr.src >= k0 && tr.src < k0 + t.t2) t.coo_slice.push_back(tr);
              }
              t.nnz = static_cast<int64_t>(t.coo_slice.size());
              t.nnz_exact = true;
              t.cycles = cm.spdmm(t.nnz, t.t3);
              tasks.push_back(std::move(t));
            }
      } else {
        // Runtime-valued adjacency: dst-contiguous record slices only.
        const SparseMatrix& pat = *av.pattern;
        int64_t t1, t2, t3;
        choose_tiles(op.s1, op.s2, op.s3, arch, t1, t2, t3);
        for (int64_t i0 = 0; i0 < op.s1; i0 += t1)
          for (int64_t j0 = 0; j0 < op.s3; j0 += t3) {
            TileTask t;
            t.row0 = i0;
            t.col0 = j0;
            t.t1 = std::min(t1, op.s1 - i0);
            t.t3 = std::min(t3, op.s3 - j0);
            t.t2 = op.s2;
            t.primitive = Primitive::SpDMM;
            auto [lo, hi] = dst_range(pat.triples, i0, i0 + t.t1);
            t.rec_begin = lo;
            t.rec_end = hi;
            t.nnz = hi - lo;
            t.nnz_exact = true;
            t.cycles = cm.spdmm(t.nnz, t.t3);
            tasks.push_back(std::move(t));
          }
      }
      break;
    }
    case OpKind::SampledMatMul: {
      const SparseMatrix& pat = *p.value(op.a).csparse;
      const int64_t pca = arch.p_ca;
      int64_t t2 = std::min(round_up(op.s2, pca), floor_mult(cap / pca, pca));
      if (t2 < pca) throw gcvt_error("reduction tile does not fit on chip");
      int64_t t1 = std::min(round_up(op.s1, pca), floor_mult(cap / t2, pca));
      if (t1 < pca) throw gcvt_error("row tile does not fit on chip");
      for (int64_t i0 = 0; i0 < op.s1; i0 += t1) {
        auto [lo, hi] = dst_range(pat.triples, i0, i0 + std::min(t1, op.s1 - i0));
        for (int64_t k0 = 0; k0 < op.s2; k0 += t2) {
          TileTask t;
          t.row0 = i0;
          t.k0 = k0;
          t.t1 = std::min(t1, op.s1 - i0);
          t.t3 = op.s3;
          t.t2 = std::min(t2, op.s2 - k0);
          t.accumulate = k0 > 0;
          t.commit = k0 + t.t2 >= op.s2;
          t.primitive = Primitive::SDDMM;
          t.rec_begin = lo;
          t.rec_end = hi;
          t.nnz = hi - lo;
          t.nnz_exact = true;
          t.cycles = cm.sddmm(t.nnz, t.t2);
          tasks.push_back(std::move(t));
        }
      }
      break;
    }
    case OpKind::ScaleRows:
    case OpKind::Add: {
      if (op.s3 > cap) throw gcvt_error("vector row does not fit on chip");
      int64_t t1 = std::min(op.s1, std::max<int64_t>(1, cap / op.s3));
      for (int64_t i0 = 0; i0 < op.s1; i0 += t1) {
        TileTask t;
        t.row0 = i0;
        t.t1 = std::min(t1, op.s1 - i0);
        t.t3 = op.s3;
        t.t2 = 0;
        t.primitive = op.kind == OpKind::ScaleRows ? Primitive::PSVM : Primitive::PVVA;
        t.cycles = cm.psvm_pvva(t.t1, op.s3);
        tasks.push_back(std::move(t));
      }
      break;
    }
    case OpKind::Transpose: {
      TileTask t;
      t.t1 = op.s1;
      t.t3 = op.s3;
      t.t2 = 0;
      t.primitive = Primitive::DM;
      t.is_dm = true;
      t.cycles = cm.dm_stream(op.s1 * op.s3);
      tasks.push_back(std::move(t));
      break;
    }
  }
  for (TileTask& t : tasks) t.op_index = op_index;
  return tasks;
}

}  // namespace

TiledProgram plan(const MatrixProgram& p, const ArchConfig& arch) {
  TiledProgram tp;
  tp.program = p;
  tp.arch = arch;
  for (size_t li = 0; li < p.layer_ids.size(); ++li) {
    TiledLayer layer;
    layer.layer_id = p.layer_ids[li];
    auto [begin, end] = p.layer_op_ranges[li];
    for (int oi = begin; oi < end; ++oi) {
      std::vector<TileTask> ts = plan_op(p.ops[static_cast<size_t>(oi)], oi, p, arch);
      for (TileTask& t : ts) layer.tasks.push_back(std::move(t));
    }
    tp.layers.push_back(std::move(layer));
  }
  return tp;
}

Schedule schedule(const TiledProgram& tp) {
  Schedule s;
  const MatrixProgram& p = tp.program;
  std::map<int, int> producer_of;  // value id -> op index
  for (size_t oi = 0; oi < p.ops.size(); ++oi) producer_of[p.ops[oi].result] = static_cast<int>(oi);

  for (size_t li = 0; li < tp.layers.size(); ++li) {
    const TiledLayer& layer = tp.layers[li];
    // Ops emitted in this layer (cross-layer producers finished at the
    // preceding barrier, i.e. time 0).
    auto [obegin, oend] = p.layer_op_ranges[li];
    std::map<int, int64_t> op_finish;
    std::vector<int64_t> pe_free(static_cast<size_t>(tp.arch.n_pe), 0);
    std::map<std::tuple<int, int64_t, int64_t>, std::pair<int, int64_t>> chain;
    int64_t makespan = 0, dm = 0;

    for (size_t ti = 0; ti < layer.tasks.size(); ++ti) {
      const TileTask& t = layer.tasks[ti];
      const MatrixOp& op = p.ops[static_cast<size_t>(t.op_index)];
      int64_t ready = 0;
      for (int v : {op.a, op.b}) {
        auto it = v >= 0 ? producer_of.find(v) : producer_of.end();
        if (it != producer_of.end() && it->second >= obegin && it->second < oend) {
          auto fit = op_finish.find(it->second);
          if (fit != op_finish.end()) ready = std::max(ready, fit->second);
        }
      }
      ScheduledTask st;
      st.layer = static_cast<int>(li);
      st.task = static_cast<int>(ti);
      if (t.is_dm) {
        st.pe = -1;
        st.start = ready;
        st.finish = ready;  // streamed; hidden behind the layer's compute
        dm += t.cycles;
      } else {
        auto key = std::make_tuple(t.op_index, t.row0, t.col0);
        int pe = -1;
        if (t.accumulate) {
          auto cit = chain.find(key);
          if (cit != chain.end()) {
            pe = cit->second.first;
            ready = std::max(ready, cit->second.second);
          }
        }
        if (pe < 0) {
          int64_t best = -1;
          for (int c = 0; c < tp.arch.n_pe; ++c) {
            int64_t finish = std::max(pe_free[static_cast<size_t>(c)], ready) + t.cycles;
            if (best < 0 || finish < best) {
              best = finish;
              pe = c;
            }
          }
        }
        st.pe = pe;
        st.start = std::max(pe_free[static_cast<size_t>(pe)], ready);
        st.finish = st.start + t.cycles;
        pe_free[static_cast<size_t>(pe)] = st.finish;
        chain[key] = {pe, st.finish};
        makespan = std::max(makespan, st.finish);
      }
      int64_t& of = op_finish[t.op_index];
      of = std::max(of, st.finish);
      s.tasks.push_back(st);
    }
    s.layer_makespan.push_back(makespan);
    s.layer_dm.push_back(dm);
  }
  return s;
}

std::string dump_plan(const TiledProgram& tp) {
  std::ostringstream os;
  for (const TiledLayer& l : tp.layers) {
    os << "layer " << l.layer_id << ":\n";
    for (const TileTask& t : l.tasks) {
      const MatrixOp& op = tp.program.ops[static_cast<size_t>(t.op_index)];
      os << "  op" << t.op_index << " " << to_string(op.kind) << " tile(i=" << t.row0
         << ",j=" << t.col0 << ",k=" << t.k0 << ") ext(" << t.t1 << "x" << t.t2 << "x"
         << t.t3 << ") " << to_string(t.primitive);
      if (t.primitive == Primitive::SpDMM || t.primitive == Primitive::SDDMM)
        os << " nnz=" << t.nnz << (t.nnz_exact ? "" : "~");
      if (t.accumulate) os << " acc";
      if (!t.commit) os << " nocommit";
      os << " cycles=" << t.cycles << "\n";
    }
  }
  return os.str();
}

}  // namespace gcv
