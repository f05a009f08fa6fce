#include "gcvt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "gcvt/fp16.hpp"
#include "gcvt/lowering.hpp"
#include "gcvt/primitives.hpp"

namespace gcv {

using nlohmann::json;

namespace {

struct DenseBuf {
  uint32_t rows = 0, cols = 0;
  std::vector<float> data;
};

struct CooBuf {
  std::vector<Triple> records;
};

struct Machine {
  const std::vector<uint8_t>& image;
  const ArchConfig& arch;
  CostModel cm;

  std::map<uint32_t, DenseBuf> dense;   // region base -> on-chip copy
  std::map<uint32_t, CooBuf> coo;
  std::map<uint32_t, std::vector<float>> acc;      // dense accumulators
  std::map<uint32_t, std::vector<float>> acc_sp;   // per-record accumulators

  uint16_t read_u16(uint32_t off) const {
    if (off + 2 > image.size()) throw gcvt_error("image read out of range");
    return static_cast<uint16_t>(image[off] | (image[off + 1] << 8));
  }
  uint32_t read_u32(uint32_t off) const {
    if (off + 4 > image.size()) throw gcvt_error("image read out of range");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(image[off + i]) << (8 * i);
    return v;
  }

  DenseBuf& dense_buf(const OperandDesc& d) {
    auto it = dense.find(d.base);
    if (it != dense.end()) return it->second;
    DenseBuf b;
    b.rows = d.rows;
    b.cols = d.cols;
    b.data.resize(static_cast<size_t>(d.rows) * d.cols);
    for (size_t i = 0; i < b.data.size(); ++i)
      b.data[i] = float_from_half_bits(read_u16(d.base + static_cast<uint32_t>(2 * i)));
    return dense.emplace(d.base, std::move(b)).first->second;
  }

  CooBuf& coo_buf(const OperandDesc& d) {
    auto it = coo.find(d.base);
    if (it != coo.end()) return it->second;
    CooBuf b;
    b.records.resize(d.aux[2]);
    for (uint32_t e = 0; e < d.aux[2]; ++e) {
      uint32_t ro = d.base + e * static_cast<uint32_t>(kCooRecordBytes);
      Triple t;
      t.src = read_u32(ro);
      t.dst = read_u32(ro + 4);
      t.val = float_from_half_bits(read_u16(ro + 8));
      b.records[e] = t;
    }
    return coo.emplace(d.base, std::move(b)).first->second;
  }

  std::vector<float>& acc_for(const OperandDesc& z) {
    auto it = acc.find(z.base);
    if (it != acc.end()) return it->second;
    return acc.emplace(z.base, std::vector<float>(static_cast<size_t>(z.rows) * z.cols, 0.0f))
        .first->second;
  }

  std::vector<EpilogueOp> epilogue_from(const Instruction& ins, uint32_t rows) {
    std::vector<EpilogueOp> eps;
    EpilogueOp norm;
    if (ins.flags & iflag::norm) {
      uint32_t n_tables = read_u32(0);
      if (ins.norm_id == 0 || ins.norm_id > n_tables)
        throw gcvt_error("norm table id out of range");
      uint32_t off = read_u32(4 + 8 * (ins.norm_id - 1u));
      norm.kind = EpilogueOp::NormAffine;
      for (uint32_t i = 0; i < rows; ++i)
        norm.scale.push_back(float_from_half_bits(read_u16(off + 2 * i)));
      for (uint32_t i = 0; i < rows; ++i)
        norm.shift.push_back(float_from_half_bits(read_u16(off + 2 * (rows + i))));
    }
    bool relu = ins.flags & iflag::relu;
    bool nrm = ins.flags & iflag::norm;
    if (relu && nrm) {
      if (ins.flags & iflag::relu_before_norm) {
        eps.push_back(EpilogueOp{EpilogueOp::ReLU, {}, {}});
        eps.push_back(norm);
      } else {
        eps.push_back(norm);
        eps.push_back(EpilogueOp{EpilogueOp::ReLU, {}, {}});
      }
    } else if (nrm) {
      eps.push_back(norm);
    } else if (relu) {
      eps.push_back(EpilogueOp{EpilogueOp::ReLU, {}, {}});
    }
    return eps;
  }

  Permutation shuffle_from(const Instruction& ins, uint32_t rows) {
    uint32_t n_tables = read_u32(0);
    if (ins.shuffle_id == 0 || ins.shuffle_id > n_tables)
      throw gcvt_error("shuffle table id out of range");
    uint32_t off = read_u32(4 + 8 * (ins.shuffle_id - 1u));
    Permutation p(rows);
    for (uint32_t i = 0; i < rows; ++i) p[i] = read_u32(off + 4 * i);
    return p;
  }

  void commit_dense(const Instruction& ins, const OperandDesc& z) {
    std::vector<float>& a = acc_for(z);
    DenseBuf& out = dense_buf(z);
    std::vector<EpilogueOp> eps = epilogue_from(ins, z.rows);
    apply_epilogue_f32(eps, a.data() + z.row_off * z.cols + z.col_off, z.cols,
                       z.row_off, z.ext_rows, z.ext_cols);
    std::optional<Permutation> perm;
    if (ins.flags & iflag::shuffle) perm = shuffle_from(ins, z.rows);
    commit_rows(a.data() + z.col_off, z.cols, out.data.data() + z.col_off, z.cols,
                z.row_off, z.ext_rows, z.ext_cols, perm ? &*perm : nullptr);
  }

  ShiftRead shift_from(const OperandDesc& d) {
    ShiftRead s;
    s.present = d.aux[0] != 0;
    s.h_src = d.aux[1];
    s.w_src = d.aux[2];
    s.dy = static_cast<int32_t>(d.aux[3]);
    s.dx = static_cast<int32_t>(d.aux[4]);
    s.stride = d.aux[5];
    return s;
  }

  // ---- functional execution of one compute instruction ----

  void exec(const Instruction& ins) {
    OperandDesc a = read_desc(image, ins.addr_a);
    OperandDesc z = read_desc(image, ins.addr_z);
    switch (ins.op) {
      case opcode::ddmm: {
        OperandDesc b = read_desc(image, ins.addr_b);
        DenseBuf& x = dense_buf(a);
        DenseBuf& y = dense_buf(b);
        ddmm_acc(x.data.data(), x.cols, y.data.data(), y.cols, acc_for(z).data(), z.cols,
                 a.row_off, a.ext_rows, a.col_off, a.ext_cols, b.col_off, b.ext_cols);
        break;
      }
      case opcode::spdmm: {
        OperandDesc b = read_desc(image, ins.addr_b);
        DenseBuf& y = dense_buf(b);
        Reduction red = (ins.flags & iflag::max_reduce) ? Reduction::Max : Reduction::Sum;
        std::vector<Triple> packed;
        std::span<const Triple> triples;
        if (a.kind == 1) {
          CooBuf& cb = coo_buf(a);
          triples = std::span<const Triple>(cb.records).subspan(a.aux[0], a.aux[1] - a.aux[0]);
        } else {
          // Runtime-valued operand: pack the dense tile into triples.
          DenseBuf& x = dense_buf(a);
          for (uint32_t i = a.row_off; i < a.row_off + a.ext_rows; ++i)
            for (uint32_t k = a.col_off; k < a.col_off + a.ext_cols; ++k) {
              float v = x.data[static_cast<size_t>(i) * x.cols + k];
              if (v != 0.0f) packed.push_back({k, i, v});
            }
          triples = packed;
        }
        if (ins.flags & iflag::col_mode)
          spdmm_col_acc(triples, red, y.data.data(), y.cols, z.ext_rows,
                        acc_for(z).data(), z.cols);
        else
          spdmm_acc(triples, red, y.data.data(), y.cols, acc_for(z).data(), z.cols,
                    b.col_off, b.ext_cols);
        break;
      }
      case opcode::sddmm: {
        OperandDesc b = read_desc(image, ins.addr_b);
        DenseBuf& x = dense_buf(b);
        std::vector<float> xt = transpose_f32(x.data.data(), x.rows, x.cols);
        CooBuf& pat = coo_buf(a);
        auto& asp = acc_sp[z.base];
        if (asp.empty()) asp.resize(pat.records.size(), 0.0f);
        std::span<const Triple> slice =
            std::span<const Triple>(pat.records).subspan(a.aux[0], a.aux[1] - a.aux[0]);
        sddmm_acc(slice, x.data.data(), x.cols, xt.data(), x.rows,
                  asp.data() + a.aux[0], b.col_off, b.ext_cols);
        if (ins.flags & iflag::commit) {
          CooBuf& zb = coo_buf(z);
          float* vals = asp.data() + z.aux[0];
          size_t n = z.aux[1] - z.aux[0];
          std::span<const Triple> zslice =
              std::span<const Triple>(zb.records).subspan(z.aux[0], n);
          if (ins.flags & iflag::softmax) apply_row_softmax(zslice, vals);
          for (size_t e = 0; e < n; ++e)
            zb.records[z.aux[0] + e].val = fp16_round(vals[e]);
        }
        break;
      }
      case opcode::psvm: {
        OperandDesc b = read_desc(image, ins.addr_b);
        DenseBuf& sv = dense_buf(a);
        DenseBuf& y = dense_buf(b);
        psvm_acc(sv.data.data(), y.data.data(), y.cols, acc_for(z).data(), z.cols,
                 a.row_off, a.ext_rows, b.ext_cols);
        break;
      }
      case opcode::pvva: {
        DenseBuf& x = dense_buf(a);
        std::vector<float>& zz = acc_for(z);
        ShiftRead sa = shift_from(a);
        const bool has_b = ins.addr_b != 0xffffffffu;
        OperandDesc b;
        ShiftRead sb;
        if (has_b) {
          b = read_desc(image, ins.addr_b);
          sb = shift_from(b);
        }
        if (sa.present || (has_b && sb.present)) {
          const int64_t h_dst = a.aux[6], w_dst = a.aux[7];
          DenseBuf* yb = has_b ? &dense_buf(b) : nullptr;
          for (uint32_t r = a.row_off; r < a.row_off + a.ext_rows; ++r)
            for (int64_t y = 0; y < h_dst; ++y)
              for (int64_t x2 = 0; x2 < w_dst; ++x2) {
                float av = shift_read_f32(x.data.data(), x.cols, r, sa, y, x2);
                float bv = yb ? shift_read_f32(yb->data.data(), yb->cols, r, sb, y, x2)
                              : 0.0f;
                zz[static_cast<size_t>((r * h_dst + y) * w_dst + x2)] = av + bv;
              }
        } else if (has_b) {
          DenseBuf& y = dense_buf(b);
          pvva_acc(x.data.data(), x.cols, y.data.data(), y.cols, zz.data(), z.cols,
                   a.row_off, a.ext_rows, z.ext_cols);
        } else {
          for (uint32_t r = a.row_off; r < a.row_off + a.ext_rows; ++r)
            for (uint32_t j = 0; j < z.ext_cols; ++j)
              zz[static_cast<size_t>(r) * z.cols + j] =
                  x.data[static_cast<size_t>(r) * x.cols + j];
        }
        break;
      }
      case opcode::dm: {
        DenseBuf& x = dense_buf(a);
        DenseBuf& out = dense_buf(z);
        if (static_cast<DmMode>(a.aux[0]) == DmMode::PatchToNode)
          patch_to_node_f32(x.data.data(), a.rows, a.aux[3], a.aux[4], a.aux[1], a.aux[2],
                            out.data.data());
        else
          out.data = x.data;
        return;
      }
      default: throw gcvt_error("unexpected opcode in compute slot");
    }
    if (ins.op != opcode::sddmm && (ins.flags & iflag::commit)) commit_dense(ins, z);
  }

  int64_t cycles_of(const Instruction& ins) const {
    switch (ins.op) {
      case opcode::ddmm: return cm.ddmm(ins.s1, ins.s2, ins.s3);
      case opcode::spdmm:
        return cm.spdmm(ins.nnz, (ins.flags & iflag::col_mode) ? ins.s1 : ins.s3);
      case opcode::sddmm: return cm.sddmm(ins.nnz, ins.s2);
      case opcode::psvm:
      case opcode::pvva: return cm.psvm_pvva(ins.s1, ins.s3);
      case opcode::dm: return cm.dm_stream(static_cast<int64_t>(ins.s1) * ins.s3);
    }
    return 0;
  }
};

// Largest-remainder split of total into parts proportional to weights.
std::vector<int64_t> proportional_split(int64_t total, const std::vector<int64_t>& w) {
  int64_t wsum = 0;
  for (int64_t x : w) wsum += x;
  std::vector<int64_t> parts(w.size(), 0);
  if (wsum == 0 || total == 0) return parts;
  std::vector<std::pair<double, size_t>> rem;
  int64_t assigned = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    double exact = static_cast<double>(total) * static_cast<double>(w[i]) /
                   static_cast<double>(wsum);
    parts[i] = static_cast<int64_t>(exact);
    assigned += parts[i];
    rem.push_back({exact - static_cast<double>(parts[i]), i});
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t i = 0; assigned < total; ++i, ++assigned) ++parts[rem[i % rem.size()].second];
  return parts;
}

}  // namespace

SimReport simulate(const std::vector<Instruction>& prog, std::vector<uint8_t> image,
                   const ArchConfig& arch, const std::vector<std::string>& layer_names) {
  Machine m{image, arch, arch.cost(), {}, {}, {}, {}};
  SimReport report;
  std::vector<uint32_t> written;

  size_t i = 0;
  int layer_idx = 0;
  int64_t clock = 0;
  while (i < prog.size()) {
    // One barrier-delimited layer.
    std::vector<int64_t> pe_free(static_cast<size_t>(arch.n_pe), 0);
    std::vector<uint8_t> pe_last_op(static_cast<size_t>(arch.n_pe), 0);
    std::map<uint32_t, int64_t> region_ready;  // region base -> available time
    int64_t makespan = 0, dm_total = 0, mem_total = 0, mem_clock = 0;
    int64_t prov_cycles[4] = {0, 0, 0, 0};

    for (; i < prog.size() && prog[i].op != opcode::barrier; ++i) {
      const Instruction& ins = prog[i];
      if (ins.op == opcode::mem_read || ins.op == opcode::mem_write) {
        // Single FIFO channel: transfers serialize; a write additionally
        // waits for the compute that produced its region.
        int64_t dur = (static_cast<int64_t>(ins.addr_b) + arch.mem_bandwidth - 1) /
                      arch.mem_bandwidth;
        int64_t start = mem_clock;
        if (ins.op == opcode::mem_write) {
          auto it = region_ready.find(ins.addr_a);
          if (it != region_ready.end()) start = std::max(start, it->second);
          written.push_back(ins.addr_a);
        }
        mem_clock = start + dur;
        mem_total += dur;
        if (ins.op == opcode::mem_read) {
          int64_t& r = region_ready[ins.addr_a];
          r = std::max(r, mem_clock);
        }
        continue;
      }
      m.exec(ins);
      int64_t cycles = m.cycles_of(ins);
      int64_t ready = 0;
      for (uint32_t da : {ins.addr_a, ins.addr_b}) {
        if (da == 0xffffffffu) continue;
        auto it = region_ready.find(read_desc(image, da).base);
        if (it != region_ready.end()) ready = std::max(ready, it->second);
      }
      uint32_t zbase = read_desc(image, ins.addr_z).base;
      if (ins.op == opcode::dm) {
        dm_total += cycles;
        int64_t& r = region_ready[zbase];
        r = std::max(r, ready);  // streamed on the fly, hidden behind compute
        continue;
      }
      int pe = ins.pe_hint;
      if (pe >= arch.n_pe) {
        int64_t best = -1;
        for (int c = 0; c < arch.n_pe; ++c) {
          int64_t fin = std::max(pe_free[static_cast<size_t>(c)], ready) + cycles;
          if (best < 0 || fin < best) {
            best = fin;
            pe = c;
          }
        }
      }
      int64_t start = std::max(pe_free[static_cast<size_t>(pe)], ready);
      if (pe_last_op[static_cast<size_t>(pe)] != 0 &&
          pe_last_op[static_cast<size_t>(pe)] != ins.op)
        start += 1;  // primitive-switch overhead
      int64_t finish = start + cycles;
      pe_free[static_cast<size_t>(pe)] = finish;
      pe_last_op[static_cast<size_t>(pe)] = ins.op;
      int64_t& r = region_ready[zbase];
      r = std::max(r, finish);
      makespan = std::max(makespan, finish);
      unsigned prov = (ins.flags & iflag::prov_mask) >> iflag::prov_shift;
      prov_cycles[prov & 3] += cycles;
    }
    if (i < prog.size()) ++i;  // consume the barrier

    SimReport::LayerRow row;
    row.id = layer_idx < static_cast<int>(layer_names.size())
                 ? layer_names[static_cast<size_t>(layer_idx)]
                 : "layer" + std::to_string(layer_idx);
    row.start = clock;
    row.compute = makespan;
    row.dm_total = dm_total;
    row.mem_total = mem_total;
    int64_t busy = std::max(makespan, dm_total);
    row.span = std::max(busy, mem_clock);
    row.dm = std::max<int64_t>(0, dm_total - makespan);
    row.memory = row.span - busy;
    std::vector<int64_t> split = proportional_split(
        makespan, {prov_cycles[0], prov_cycles[1], prov_cycles[3]});
    row.cnn = split[0];
    row.gnn = split[1];
    row.other = split[2];
    clock += row.span;
    report.layers.push_back(std::move(row));
    ++layer_idx;
  }
  report.total_cycles = clock;

  for (uint32_t base : written) {
    auto dit = m.dense.find(base);
    if (dit != m.dense.end()) {
      report.outputs[base] =
          Tensor({dit->second.rows, dit->second.cols}, dit->second.data);
      continue;
    }
    auto cit = m.coo.find(base);
    if (cit != m.coo.end()) report.sparse_outputs[base] = cit->second.records;
  }
  return report;
}

std::string SimReport::to_json() const {
  json j;
  j["total_cycles"] = total_cycles;
  j["layers"] = json::array();
  for (const LayerRow& r : layers)
    j["layers"].push_back({{"id", r.id},
                           {"start", r.start},
                           {"span", r.span},
                           {"compute", r.compute},
                           {"cnn", r.cnn},
                           {"gnn", r.gnn},
                           {"other", r.other},
                           {"dm", r.dm},
                           {"dm_total", r.dm_total},
                           {"memory", r.memory},
                           {"mem_total", r.mem_total}});
  return j.dump(2);
}

std::string SimReport::to_csv() const {
  std::ostringstream os;
  os << "layer,cnn,gnn,dm,memory,other,total\n";
  for (const LayerRow& r : layers)
    os << r.id << "," << r.cnn << "," << r.gnn << "," << r.dm << "," << r.memory << ","
       << r.other << "," << r.span << "\n";
  return os.str();
}

std::string SimReport::to_table() const {
  std::ostringstream os;
  os << "layer                 CNN      GNN       DM   Memory    Other    Total\n";
  int64_t c = 0, g = 0, d = 0, me = 0, o = 0, t = 0;
  char buf[160];
  for (const LayerRow& r : layers) {
    std::snprintf(buf, sizeof buf, "%-16s %8lld %8lld %8lld %8lld %8lld %8lld\n",
                  r.id.c_str(), static_cast<long long>(r.cnn),
                  static_cast<long long>(r.gnn), static_cast<long long>(r.dm),
                  static_cast<long long>(r.memory), static_cast<long long>(r.other),
                  static_cast<long long>(r.span));
    os << buf;
    c += r.cnn;
    g += r.gnn;
    d += r.dm;
    me += r.memory;
    o += r.other;
    t += r.span;
  }
  std::snprintf(buf, sizeof buf, "%-16s %8lld %8lld %8lld %8lld %8lld %8lld\n", "total",
                static_cast<long long>(c), static_cast<long long>(g),
                static_cast<long long>(d), static_cast<long long>(me),
                static_cast<long long>(o), static_cast<long long>(t));
  os << buf;
  return os.str();
}

}  // namespace gcv
