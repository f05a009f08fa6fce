#include "gcvt/isa.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "gcvt/fp16.hpp"

namespace gcv {

using nlohmann::json;

static void put_u16(uint8_t* p, uint16_t v) {
  p[0] = static_cast<uint8_t>(v);
  p[1] = static_cast<uint8_t>(v >> 8);
}
static void put_u32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}
static uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
static uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

std::array<uint8_t, kInstructionBytes> encode_instruction(const Instruction& i) {
  std::array<uint8_t, kInstructionBytes> b{};
  b[0] = i.op;
  b[1] = i.pe_hint;
  put_u16(&b[2], i.s1);
  put_u16(&b[4], i.s2);
  put_u16(&b[6], i.s3);
  put_u32(&b[8], i.nnz);
  put_u32(&b[12], i.addr_a);
  put_u32(&b[16], i.addr_b);
  put_u32(&b[20], i.addr_z);
  put_u16(&b[24], i.flags);
  put_u16(&b[26], i.shuffle_id);
  put_u16(&b[28], i.norm_id);
  return b;
}

Instruction decode_instruction(const uint8_t* b) {
  switch (b[0]) {
    case opcode::ddmm:
    case opcode::spdmm:
    case opcode::sddmm:
    case opcode::psvm:
    case opcode::pvva:
    case opcode::dm:
    case opcode::mem_read:
    case opcode::mem_write:
    case opcode::barrier: break;
    default: throw gcvt_error("unknown opcode " + std::to_string(b[0]));
  }
  if (b[30] != 0 || b[31] != 0) throw gcvt_error("nonzero reserved instruction bytes");
  constexpr uint16_t known_flags = 0x07ff;
  if (get_u16(&b[24]) & static_cast<uint16_t>(~known_flags))
    throw gcvt_error("nonzero reserved flag bits");
  Instruction i;
  i.op = b[0];
  i.pe_hint = b[1];
  i.s1 = get_u16(&b[2]);
  i.s2 = get_u16(&b[4]);
  i.s3 = get_u16(&b[6]);
  i.nnz = get_u32(&b[8]);
  i.addr_a = get_u32(&b[12]);
  i.addr_b = get_u32(&b[16]);
  i.addr_z = get_u32(&b[20]);
  i.flags = get_u16(&b[24]);
  i.shuffle_id = get_u16(&b[26]);
  i.norm_id = get_u16(&b[28]);
  return i;
}

void write_desc(std::vector<uint8_t>& image, uint32_t off, const OperandDesc& d) {
  uint8_t* p = image.data() + off;
  put_u32(p + 0, d.kind);
  put_u32(p + 4, d.base);
  put_u32(p + 8, d.rows);
  put_u32(p + 12, d.cols);
  put_u32(p + 16, d.row_off);
  put_u32(p + 20, d.col_off);
  put_u32(p + 24, d.ext_rows);
  put_u32(p + 28, d.ext_cols);
  for (int i = 0; i < 8; ++i) put_u32(p + 32 + 4 * i, d.aux[static_cast<size_t>(i)]);
}

OperandDesc read_desc(const std::vector<uint8_t>& image, uint32_t off) {
  if (off + kDescBytes > image.size()) throw gcvt_error("descriptor offset out of range");
  const uint8_t* p = image.data() + off;
  OperandDesc d;
  d.kind = get_u32(p + 0);
  d.base = get_u32(p + 4);
  d.rows = get_u32(p + 8);
  d.cols = get_u32(p + 12);
  d.row_off = get_u32(p + 16);
  d.col_off = get_u32(p + 20);
  d.ext_rows = get_u32(p + 24);
  d.ext_cols = get_u32(p + 28);
  for (int i = 0; i < 8; ++i) d.aux[static_cast<size_t>(i)] = get_u32(p + 32 + 4 * i);
  return d;
}

void write_program_file(const std::string& path, const std::vector<Instruction>& prog) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw gcvt_error("cannot open for writing: " + path);
  f.write("GCVI", 4);
  uint8_t hdr[12];
  put_u32(hdr, 1);
  put_u32(hdr + 4, static_cast<uint32_t>(prog.size()));
  put_u32(hdr + 8, 0);
  f.write(reinterpret_cast<const char*>(hdr), 12);
  for (const Instruction& i : prog) {
    auto b = encode_instruction(i);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
}

std::vector<Instruction> read_program_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw gcvt_error("cannot open: " + path);
  char magic[4];
  uint8_t hdr[12];
  if (!f.read(magic, 4) || std::memcmp(magic, "GCVI", 4) != 0)
    throw gcvt_error("bad instruction stream magic");
  if (!f.read(reinterpret_cast<char*>(hdr), 12)) throw gcvt_error("truncated header");
  if (get_u32(hdr) != 1) throw gcvt_error("unsupported instruction stream version");
  uint32_t n = get_u32(hdr + 4);
  std::vector<Instruction> prog;
  prog.reserve(n);
  std::array<uint8_t, kInstructionBytes> b;
  for (uint32_t i = 0; i < n; ++i) {
    if (!f.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size())))
      throw gcvt_error("truncated instruction stream");
    prog.push_back(decode_instruction(b.data()));
  }
  return prog;
}

// --------------------------------------------------------------------
// Emission
// --------------------------------------------------------------------

namespace {

const char* opcode_name(uint8_t op) {
  switch (op) {
    case opcode::ddmm: return "DDMM";
    case opcode::spdmm: return "SpDMM";
    case opcode::sddmm: return "SDDMM";
    case opcode::psvm: return "PSVM";
    case opcode::pvva: return "PVVA";
    case opcode::dm: return "DM";
    case opcode::mem_read: return "MemRead";
    case opcode::mem_write: return "MemWrite";
    case opcode::barrier: return "Barrier";
  }
  return "?";
}

struct Emitter {
  const TiledProgram& tp;
  const MatrixProgram& p;
  CompiledProgram out;
  uint32_t cursor = 0;

  std::map<int, uint32_t> value_off;          // value id -> region offset
  std::map<uint32_t, uint32_t> region_len;    // region offset -> byte length
  std::map<uint32_t, int> region_layer;       // producing layer, -1 = constant
  std::map<int, uint32_t> norm_table, shuffle_table;  // op index -> 1-based id

  uint32_t alloc(uint32_t bytes) {
    uint32_t off = (cursor + 63u) & ~63u;
    cursor = off + bytes;
    out.image.resize(cursor, 0);
    return off;
  }

  void put_half(uint32_t off, float v) {
    uint16_t h = half_bits_from_float(v);
    out.image[off] = static_cast<uint8_t>(h);
    out.image[off + 1] = static_cast<uint8_t>(h >> 8);
  }

  uint32_t alloc_dense(const std::vector<float>* vals, int64_t rows, int64_t cols) {
    uint32_t bytes = static_cast<uint32_t>(rows * cols * 2);
    uint32_t off = alloc(bytes);
    if (vals)
      for (int64_t i = 0; i < rows * cols; ++i)
        put_half(off + static_cast<uint32_t>(2 * i), (*vals)[static_cast<size_t>(i)]);
    region_len[off] = bytes;
    return off;
  }

  uint32_t alloc_coo(const std::vector<Triple>& triples, bool with_vals) {
    uint32_t bytes = static_cast<uint32_t>(triples.size() * kCooRecordBytes);
    uint32_t off = alloc(std::max<uint32_t>(bytes, 1));
    for (size_t e = 0; e < triples.size(); ++e) {
      uint32_t ro = off + static_cast<uint32_t>(e * kCooRecordBytes);
      put_u32(out.image.data() + ro, triples[e].src);
      put_u32(out.image.data() + ro + 4, triples[e].dst);
      put_half(ro + 8, with_vals ? triples[e].val : 0.0f);
    }
    region_len[off] = bytes;
    return off;
  }

  int producing_layer(int value) const {
    for (size_t li = 0; li < p.layer_op_ranges.size(); ++li) {
      auto [b, e] = p.layer_op_ranges[li];
      for (int oi = b; oi < e; ++oi)
        if (p.ops[static_cast<size_t>(oi)].result == value) return static_cast<int>(li);
    }
    return -1;
  }

  void build_tables() {
    // Directory is finalized after all tables are placed; reserve space
    // for it now so offset 0 stays the directory.
    std::vector<std::pair<uint32_t, uint32_t>> entries;  // placed later
    uint32_t n_tables = 0;
    for (const MatrixOp& op : p.ops) {
      for (const EpilogueOp& e : op.epilogue)
        if (e.kind == EpilogueOp::NormAffine) ++n_tables;
      if (op.output_shuffle) ++n_tables;
    }
    uint32_t dir_bytes = 4 + 8 * n_tables;
    alloc(dir_bytes);  // offset 0

    for (size_t oi = 0; oi < p.ops.size(); ++oi) {
      const MatrixOp& op = p.ops[oi];
      for (const EpilogueOp& e : op.epilogue)
        if (e.kind == EpilogueOp::NormAffine) {
          uint32_t bytes = static_cast<uint32_t>(4 * e.scale.size());
          uint32_t off = alloc(bytes);
          for (size_t i = 0; i < e.scale.size(); ++i) {
            put_half(off + static_cast<uint32_t>(2 * i), e.scale[i]);
            put_half(off + static_cast<uint32_t>(2 * (e.scale.size() + i)), e.shift[i]);
          }
          entries.push_back({off, bytes});
          norm_table[static_cast<int>(oi)] = static_cast<uint32_t>(entries.size());
        }
      if (op.output_shuffle) {
        uint32_t bytes = static_cast<uint32_t>(4 * op.output_shuffle->size());
        uint32_t off = alloc(bytes);
        for (size_t i = 0; i < op.output_shuffle->size(); ++i)
          put_u32(out.image.data() + off + 4 * i, (*op.output_shuffle)[i]);
        entries.push_back({off, bytes});
        shuffle_table[static_cast<int>(oi)] = static_cast<uint32_t>(entries.size());
      }
    }
    put_u32(out.image.data(), n_tables);
    for (size_t i = 0; i < entries.size(); ++i) {
      put_u32(out.image.data() + 4 + 8 * i, entries[i].first);
      put_u32(out.image.data() + 8 + 8 * i, entries[i].second);
    }
  }

  void place_values(const Tensor* input) {
    for (const ProgramValue& v : p.values) {
      uint32_t off;
      if (v.sparse) {
        const SparseMatrix& s = v.csparse ? *v.csparse : *v.pattern;
        off = alloc_coo(s.triples, v.csparse.has_value());
      } else if (v.cdense) {
        off = alloc_dense(&v.cdense->values, v.rows, v.cols);
      } else if (v.id == p.input_value && input) {
        if (static_cast<int64_t>(input->values.size()) != v.rows * v.cols)
          throw gcvt_error("input tensor does not match the program input shape");
        off = alloc_dense(&input->values, v.rows, v.cols);
      } else {
        off = alloc_dense(nullptr, v.rows, v.cols);
      }
      value_off[v.id] = off;
      region_layer[off] = v.cdense || v.csparse || v.id == p.input_value
                              ? -1
                              : producing_layer(v.id);
    }
  }

  uint32_t desc_of(const OperandDesc& d) {
    uint32_t off = alloc(kDescBytes);
    write_desc(out.image, off, d);
    return off;
  }

  OperandDesc dense_desc(int value, int64_t row_off, int64_t col_off, int64_t ext_rows,
                         int64_t ext_cols) {
    const ProgramValue& v = p.value(value);
    OperandDesc d;
    d.kind = 0;
    d.base = value_off.at(value);
    d.rows = static_cast<uint32_t>(v.rows);
    d.cols = static_cast<uint32_t>(v.cols);
    d.row_off = static_cast<uint32_t>(row_off);
    d.col_off = static_cast<uint32_t>(col_off);
    d.ext_rows = static_cast<uint32_t>(ext_rows);
    d.ext_cols = static_cast<uint32_t>(ext_cols);
    return d;
  }

  static void shift_aux(OperandDesc& d, const ShiftRead& s, int64_t h_dst, int64_t w_dst) {
    d.aux[0] = s.present ? 1 : 0;
    d.aux[1] = static_cast<uint32_t>(s.h_src);
    d.aux[2] = static_cast<uint32_t>(s.w_src);
    d.aux[3] = static_cast<uint32_t>(static_cast<int32_t>(s.dy));
    d.aux[4] = static_cast<uint32_t>(static_cast<int32_t>(s.dx));
    d.aux[5] = static_cast<uint32_t>(s.stride);
    d.aux[6] = static_cast<uint32_t>(h_dst);
    d.aux[7] = static_cast<uint32_t>(w_dst);
  }

  Instruction compute_instruction(const TileTask& t, int pe) {
    const MatrixOp& op = p.ops[static_cast<size_t>(t.op_index)];
    Instruction ins;
    ins.pe_hint = pe >= 0 ? static_cast<uint8_t>(pe) : 0xff;
    ins.s1 = static_cast<uint16_t>(t.t1);
    ins.s2 = static_cast<uint16_t>(t.t2);
    ins.s3 = static_cast<uint16_t>(t.t3);
    ins.nnz = static_cast<uint32_t>(t.nnz);
    if (t.accumulate) ins.flags |= iflag::accumulate;
    if (t.commit) ins.flags |= iflag::commit;
    ins.flags |= static_cast<uint16_t>(static_cast<uint16_t>(op.prov) << iflag::prov_shift) &
                 iflag::prov_mask;
    if (t.commit) {
      bool saw_relu = false;
      for (const EpilogueOp& e : op.epilogue) {
        if (e.kind == EpilogueOp::ReLU) {
          ins.flags |= iflag::relu;
          saw_relu = true;
        } else if (e.kind == EpilogueOp::NormAffine) {
          ins.flags |= iflag::norm;
          if (saw_relu) ins.flags |= iflag::relu_before_norm;
          ins.norm_id = static_cast<uint16_t>(norm_table.at(t.op_index));
        } else {
          ins.flags |= iflag::softmax;
        }
      }
      if (op.output_shuffle) {
        ins.flags |= iflag::shuffle;
        ins.shuffle_id = static_cast<uint16_t>(shuffle_table.at(t.op_index));
      }
    }

    switch (op.kind) {
      case OpKind::MatMul: {
        if (t.primitive == Primitive::SpDMM) {
          ins.op = opcode::spdmm;
          if (!t.coo_slice.empty() || p.value(op.a).cdense) {
            uint32_t slice = alloc_coo(t.coo_slice, true);
            OperandDesc a;
            a.kind = 1;
            a.base = slice;
            a.rows = static_cast<uint32_t>(p.value(op.a).rows);
            a.cols = static_cast<uint32_t>(p.value(op.a).cols);
            a.aux[0] = 0;
            a.aux[1] = static_cast<uint32_t>(t.coo_slice.size());
            a.aux[2] = a.aux[1];
            ins.addr_a = desc_of(a);
          } else {
            // Runtime-valued left operand: the PE packs the dense tile
            // into triples on the fly.
            ins.addr_a = desc_of(dense_desc(op.a, t.row0, t.k0, t.t1, t.t2));
          }
        } else {
          ins.op = opcode::ddmm;
          ins.addr_a = desc_of(dense_desc(op.a, t.row0, t.k0, t.t1, t.t2));
        }
        ins.addr_b = desc_of(dense_desc(op.b, t.k0, t.col0, t.t2, t.t3));
        ins.addr_z = desc_of(dense_desc(op.result, t.row0, t.col0, t.t1, t.t3));
        break;
      }
      case OpKind::SparseMatMul: {
        ins.op = opcode::spdmm;
        if (op.reduction == Reduction::Max) ins.flags |= iflag::max_reduce;
        if (op.col_mode) ins.flags |= iflag::col_mode;
        const ProgramValue& av = p.value(op.a);
        OperandDesc a;
        a.kind = 1;
        a.rows = static_cast<uint32_t>(av.rows);
        a.cols = static_cast<uint32_t>(av.cols);
        if (t.rec_begin >= 0) {
          const SparseMatrix& full = av.csparse ? *av.csparse : *av.pattern;
          a.base = value_off.at(op.a);
          a.aux[0] = static_cast<uint32_t>(t.rec_begin);
          a.aux[1] = static_cast<uint32_t>(t.rec_end);
          a.aux[2] = static_cast<uint32_t>(full.triples.size());
        } else {
          a.base = alloc_coo(t.coo_slice, true);
          a.aux[0] = 0;
          a.aux[1] = static_cast<uint32_t>(t.coo_slice.size());
          a.aux[2] = a.aux[1];
        }
        ins.addr_a = desc_of(a);
        if (op.col_mode) {
          ins.addr_b = desc_of(dense_desc(op.b, 0, 0, op.s1, op.s2));
          ins.addr_z = desc_of(dense_desc(op.result, 0, 0, op.s1, op.s3));
        } else {
          ins.addr_b = desc_of(dense_desc(op.b, 0, t.col0, p.value(op.b).rows, t.t3));
          ins.addr_z = desc_of(dense_desc(op.result, t.row0, t.col0, t.t1, t.t3));
        }
        break;
      }
      case OpKind::SampledMatMul: {
        ins.op = opcode::sddmm;
        OperandDesc a;
        a.kind = 1;
        a.base = value_off.at(op.a);
        a.rows = static_cast<uint32_t>(p.value(op.a).rows);
        a.cols = static_cast<uint32_t>(p.value(op.a).cols);
        a.aux[0] = static_cast<uint32_t>(t.rec_begin);
        a.aux[1] = static_cast<uint32_t>(t.rec_end);
        a.aux[2] = static_cast<uint32_t>(p.value(op.a).csparse->triples.size());
        ins.addr_a = desc_of(a);
        OperandDesc b = dense_desc(op.b, 0, t.k0, p.value(op.b).rows, t.t2);
        b.kind = 2;  // the PE also streams this operand transposed
        ins.addr_b = desc_of(b);
        OperandDesc z;
        z.kind = 1;
        z.base = value_off.at(op.result);
        z.rows = static_cast<uint32_t>(p.value(op.result).rows);
        z.cols = static_cast<uint32_t>(p.value(op.result).cols);
        z.aux[0] = static_cast<uint32_t>(t.rec_begin);
        z.aux[1] = static_cast<uint32_t>(t.rec_end);
        z.aux[2] = static_cast<uint32_t>(p.value(op.result).pattern->triples.size());
        ins.addr_z = desc_of(z);
        break;
      }
      case OpKind::ScaleRows: {
        ins.op = opcode::psvm;
        ins.addr_a = desc_of(dense_desc(op.a, t.row0, 0, t.t1, 1));
        ins.addr_b = desc_of(dense_desc(op.b, t.row0, 0, t.t1, t.t3));
        ins.addr_z = desc_of(dense_desc(op.result, t.row0, 0, t.t1, t.t3));
        break;
      }
      case OpKind::Add: {
        ins.op = opcode::pvva;
        OperandDesc a = dense_desc(op.a, t.row0, 0, t.t1, p.value(op.a).cols);
        shift_aux(a, op.shift_a, op.h_dst, op.w_dst);
        ins.addr_a = desc_of(a);
        if (op.b >= 0) {
          OperandDesc b = dense_desc(op.b, t.row0, 0, t.t1, p.value(op.b).cols);
          shift_aux(b, op.shift_b, op.h_dst, op.w_dst);
          ins.addr_b = desc_of(b);
        }
        ins.addr_z = desc_of(dense_desc(op.result, t.row0, 0, t.t1, t.t3));
        break;
      }
      case OpKind::Transpose: {
        ins.op = opcode::dm;
        OperandDesc a = dense_desc(op.a, 0, 0, p.value(op.a).rows, p.value(op.a).cols);
        a.aux[0] = static_cast<uint32_t>(op.dm_mode);
        a.aux[1] = static_cast<uint32_t>(op.ph);
        a.aux[2] = static_cast<uint32_t>(op.pw);
        a.aux[3] = static_cast<uint32_t>(op.src_h);
        a.aux[4] = static_cast<uint32_t>(op.src_w);
        ins.addr_a = desc_of(a);
        ins.addr_z = desc_of(dense_desc(op.result, 0, 0, t.t1, t.t3));
        break;
      }
    }
    return ins;
  }

  void run(const Tensor* input) {
    build_tables();
    place_values(input);

    Schedule sched = schedule(tp);
    std::map<std::pair<int, int>, int> pe_of;
    for (const ScheduledTask& st : sched.tasks) pe_of[{st.layer, st.task}] = st.pe;

    json jlayers = json::array();
    for (size_t li = 0; li < tp.layers.size(); ++li) {
      const TiledLayer& layer = tp.layers[li];
      size_t first = out.instructions.size();

      // Compute instructions first so operand slice regions exist, then
      // splice the mem_reads in front of them.
      std::vector<Instruction> computes;
      std::set<uint32_t> reads;
      for (size_t ti = 0; ti < layer.tasks.size(); ++ti) {
        const TileTask& t = layer.tasks[ti];
        Instruction ins =
            compute_instruction(t, pe_of.at({static_cast<int>(li), static_cast<int>(ti)}));
        for (uint32_t da : {ins.addr_a, ins.addr_b}) {
          if (da == 0xffffffffu) continue;
          uint32_t base = read_desc(out.image, da).base;
          auto it = region_layer.find(base);
          int prod = it == region_layer.end() ? -1 : it->second;
          if (prod != static_cast<int>(li)) reads.insert(base);
        }
        computes.push_back(std::move(ins));
      }
      for (uint32_t base : reads) {
        Instruction r;
        r.op = opcode::mem_read;
        r.addr_a = base;
        r.addr_b = region_len.at(base);
        r.addr_z = 0;
        out.instructions.push_back(r);
      }
      for (Instruction& ins : computes) out.instructions.push_back(std::move(ins));

      // Values produced here and needed later (or model outputs) go back
      // to external memory.
      auto [ob, oe] = p.layer_op_ranges[li];
      std::set<uint32_t> writes;
      for (int oi = ob; oi < oe; ++oi) {
        int v = p.ops[static_cast<size_t>(oi)].result;
        bool needed = false;
        for (size_t lj = li + 1; lj < p.layer_op_ranges.size() && !needed; ++lj) {
          auto [b2, e2] = p.layer_op_ranges[lj];
          for (int oj = b2; oj < e2 && !needed; ++oj)
            needed = p.ops[static_cast<size_t>(oj)].a == v ||
                     p.ops[static_cast<size_t>(oj)].b == v;
        }
        for (const auto& [name, ov] : p.outputs)
          if (ov == v) needed = true;
        if (needed) writes.insert(value_off.at(v));
      }
      for (uint32_t base : writes) {
        Instruction w;
        w.op = opcode::mem_write;
        w.addr_a = base;
        w.addr_b = region_len.at(base);
        w.addr_z = 0;
        out.instructions.push_back(w);
      }
      Instruction bar;
      bar.op = opcode::barrier;
      bar.addr_a = bar.addr_b = bar.addr_z = 0;
      out.instructions.push_back(bar);

      jlayers.push_back({{"id", layer.layer_id},
                         {"first_instruction", first},
                         {"n_instructions", out.instructions.size() - first}});
    }

    if (static_cast<int64_t>(out.image.size()) > tp.arch.external_memory_bytes)
      throw gcvt_error("data image exceeds external memory capacity");

    json j;
    j["total_bytes"] = out.image.size();
    j["values"] = json::array();
    for (const ProgramValue& v : p.values) {
      int64_t nnz = 0;
      if (v.sparse)
        nnz = static_cast<int64_t>((v.csparse ? *v.csparse : *v.pattern).triples.size());
      j["values"].push_back({{"id", v.id},
                             {"name", v.name},
                             {"offset", value_off.at(v.id)},
                             {"bytes", region_len.at(value_off.at(v.id))},
                             {"rows", v.rows},
                             {"cols", v.cols},
                             {"sparse", v.sparse},
                             {"nnz", nnz}});
    }
    j["input_value"] = p.input_value;
    j["outputs"] = json::array();
    for (const auto& [name, v] : p.outputs)
      j["outputs"].push_back({{"name", name}, {"value", v}});
    j["layers"] = jlayers;
    out.layout_json = j.dump(2);
  }
};

}  // namespace

CompiledProgram emit(const TiledProgram& tp, const Tensor* input) {
  Emitter e{tp, tp.program, {}, 0, {}, {}, {}, {}, {}};
  e.run(input);
  return std::move(e.out);
}

std::string dump_instructions(const std::vector<Instruction>& prog) {
  std::string s;
  for (size_t i = 0; i < prog.size(); ++i) {
    const Instruction& in = prog[i];
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%4zu %-8s pe=%3d s=(%u,%u,%u) nnz=%u a=%08x b=%08x z=%08x flags=%04x\n",
                  i, opcode_name(in.op), in.pe_hint == 0xff ? -1 : in.pe_hint, in.s1,
                  in.s2, in.s3, in.nnz, in.addr_a, in.addr_b, in.addr_z, in.flags);
    s += buf;
  }
  return s;
}

}  // namespace gcv
