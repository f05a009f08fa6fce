#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gcvt/planner.hpp"

namespace gcv {

namespace opcode {
constexpr uint8_t ddmm = 1;
constexpr uint8_t spdmm = 2;
constexpr uint8_t sddmm = 3;
constexpr uint8_t psvm = 4;
constexpr uint8_t pvva = 5;
constexpr uint8_t dm = 6;
constexpr uint8_t mem_read = 16;
constexpr uint8_t mem_write = 17;
constexpr uint8_t barrier = 32;
}  // namespace opcode

namespace iflag {
constexpr uint16_t accumulate = 0x1;
constexpr uint16_t relu = 0x2;
constexpr uint16_t norm = 0x4;
constexpr uint16_t softmax = 0x8;
constexpr uint16_t shuffle = 0x10;
constexpr uint16_t max_reduce = 0x20;
constexpr uint16_t commit = 0x40;
constexpr uint16_t relu_before_norm = 0x80;
constexpr uint16_t col_mode = 0x100;
// Bits 9-10: provenance tag (0 CNN, 1 GNN, 2 DM, 3 Other) for reports.
constexpr uint16_t prov_shift = 9;
constexpr uint16_t prov_mask = 0x600;
}  // namespace iflag

// 32-byte instruction. Compute opcodes carry byte offsets of operand
// descriptors in the data image; mem_read / mem_write carry a region
// offset in addr_a and a byte length in addr_b. The sentinel 0xffffffff
// marks an absent operand.
struct Instruction {
  uint8_t op = 0;
  uint8_t pe_hint = 0;  // 0xff = unassigned
  uint16_t s1 = 0, s2 = 0, s3 = 0;
  uint32_t nnz = 0;
  uint32_t addr_a = 0xffffffffu;
  uint32_t addr_b = 0xffffffffu;
  uint32_t addr_z = 0xffffffffu;
  uint16_t flags = 0;
  uint16_t shuffle_id = 0;  // 1-based table index, 0 = none
  uint16_t norm_id = 0;

  bool operator==(const Instruction&) const = default;
};

constexpr size_t kInstructionBytes = 32;

std::array<uint8_t, kInstructionBytes> encode_instruction(const Instruction& i);
Instruction decode_instruction(const uint8_t* bytes);

// Operand descriptor, 16 little-endian u32 words in the data image.
// kind 0: dense region (base, rows, cols == row stride, tile offsets and
// extents, aux shift metadata); kind 1: COO region with a record range in
// aux[0..1]; kind 2: dense region the consumer reads transposed.
struct OperandDesc {
  uint32_t kind = 0;
  uint32_t base = 0;
  uint32_t rows = 0, cols = 0;
  uint32_t row_off = 0, col_off = 0;
  uint32_t ext_rows = 0, ext_cols = 0;
  std::array<uint32_t, 8> aux{};

  bool operator==(const OperandDesc&) const = default;
};

constexpr size_t kDescBytes = 64;

void write_desc(std::vector<uint8_t>& image, uint32_t off, const OperandDesc& d);
OperandDesc read_desc(const std::vector<uint8_t>& image, uint32_t off);

// Dense-shift aux layout (Add operands): [present, h_src, w_src, dy, dx,
// stride, h_dst, w_dst], signed fields stored as two's complement.
// COO aux layout: [rec_begin, rec_end, rec_total]. DM aux layout on the a-operand:
// [mode, ph, pw, src_h, src_w].

// COO image record: u32 src, u32 dst, binary16 value, 2 pad bytes.
constexpr size_t kCooRecordBytes = 12;

struct CompiledProgram {
  std::vector<Instruction> instructions;
  std::vector<uint8_t> image;
  std::string layout_json;
};

// Linearizes a tiled program: per layer, mem_read of every operand
// region, one compute instruction per tile task (pe_hint from the list
// scheduler), mem_write of values that outlive the layer, one barrier.
CompiledProgram emit(const TiledProgram& tp, const Tensor* input = nullptr);

// Instruction-stream container: magic "GCVI", u32 version = 1,
// u32 instruction count, u32 zero, then 32-byte instructions.
void write_program_file(const std::string& path, const std::vector<Instruction>& prog);
std::vector<Instruction> read_program_file(const std::string& path);

std::string dump_instructions(const std::vector<Instruction>& prog);

}  // namespace gcv
