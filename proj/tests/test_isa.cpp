#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gcvt/isa.hpp"
#include "gcvt/lowering.hpp"
#include "gcvt/model_ir.hpp"
#include "gcvt/modelgen.hpp"

using namespace gcv;

namespace {

Instruction random_instruction(std::mt19937_64& rng) {
  static const uint8_t ops[] = {opcode::ddmm,  opcode::spdmm,    opcode::sddmm,
                                opcode::psvm,  opcode::pvva,     opcode::dm,
                                opcode::mem_read, opcode::mem_write, opcode::barrier};
  Instruction i;
  i.op = ops[rng() % 9];
  i.pe_hint = static_cast<uint8_t>(rng());
  i.s1 = static_cast<uint16_t>(rng());
  i.s2 = static_cast<uint16_t>(rng());
  i.s3 = static_cast<uint16_t>(rng());
  i.nnz = static_cast<uint32_t>(rng());
  i.addr_a = static_cast<uint32_t>(rng());
  i.addr_b = static_cast<uint32_t>(rng());
  i.addr_z = static_cast<uint32_t>(rng());
  i.flags = static_cast<uint16_t>(rng() & 0x07ff);  // known flag bits only
  i.shuffle_id = static_cast<uint16_t>(rng());
  i.norm_id = static_cast<uint16_t>(rng());
  return i;
}

CompiledProgram compile_builtin(const std::string& name, uint64_t seed) {
  ComputationGraph g = fuse_layers(insert_dm_layers(generate_model(name, seed)));
  MatrixProgram p = lower_graph(g);
  TiledProgram tp = plan(p, ArchConfig{});
  const Tensor& input = g.tensors.at(g.input_tensor);
  return emit(tp, &input);
}

}  // namespace

TEST_CASE("barrier encodes as opcode byte only") {
  Instruction b;
  b.op = opcode::barrier;
  b.addr_a = b.addr_b = b.addr_z = 0;
  auto bytes = encode_instruction(b);
  CHECK(bytes[0] == 0x20);
  for (size_t i = 1; i < kInstructionBytes; ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("decode rejects malformed encodings") {
  uint8_t zeros[kInstructionBytes] = {};
  CHECK_THROWS_WITH_AS(decode_instruction(zeros), doctest::Contains("opcode"),
                       gcvt_error);

  Instruction i;
  i.op = opcode::ddmm;
  auto bytes = encode_instruction(i);
  auto bad = bytes;
  bad[31] = 1;  // reserved trailing byte
  CHECK_THROWS_AS(decode_instruction(bad.data()), gcvt_error);
  bad = bytes;
  bad[25] |= 0x08;  // reserved flag bit 11
  CHECK_THROWS_AS(decode_instruction(bad.data()), gcvt_error);
  bad = bytes;
  bad[0] = 99;  // unknown opcode
  CHECK_THROWS_AS(decode_instruction(bad.data()), gcvt_error);
}

TEST_CASE("encode/decode round-trip on random valid instructions") {
  std::mt19937_64 rng(31);
  for (int c = 0; c < 5000; ++c) {
    Instruction i = random_instruction(rng);
    auto bytes = encode_instruction(i);
    CHECK(decode_instruction(bytes.data()) == i);
  }
}

TEST_CASE("decode fuzz never crashes") {
  std::mt19937_64 rng(32);
  int ok = 0, rejected = 0;
  for (int c = 0; c < 5000; ++c) {
    uint8_t bytes[kInstructionBytes];
    for (uint8_t& b : bytes) b = static_cast<uint8_t>(rng());
    try {
      decode_instruction(bytes);
      ++ok;
    } catch (const gcvt_error&) {
      ++rejected;
    }
  }
  CHECK(ok + rejected == 5000);
  CHECK(rejected > 0);  // random bytes are overwhelmingly invalid
}

TEST_CASE("operand descriptor round-trip") {
  OperandDesc d;
  d.kind = 1;
  d.base = 1024;
  d.rows = 7;
  d.cols = 9;
  d.row_off = 16;
  d.col_off = 32;
  d.ext_rows = 4;
  d.ext_cols = 5;
  d.aux = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<uint8_t> image(2048, 0);
  write_desc(image, 256, d);
  CHECK(read_desc(image, 256) == d);
}

TEST_CASE("emit instruction counts") {
  SUBCASE("empty program is an empty stream") {
    TiledProgram tp;
    tp.arch = ArchConfig{};
    CompiledProgram cp = emit(tp);
    CHECK(cp.instructions.empty());
  }
  SUBCASE("single 16-cube DDMM layer: 2 reads, compute, write, barrier") {
    MatrixProgram p;
    ProgramValue a{0, "w", false, 16, 16, Tensor::zeros({16, 16})};
    // A nonzero constant keeps the planner on the dense primitive.
    for (float& v : a.cdense->values) v = 1.0f;
    ProgramValue b{1, "x", false, 16, 16};
    ProgramValue z{2, "z", false, 16, 16};
    p.values = {a, b, z};
    p.input_value = 1;
    MatrixOp op;
    op.result = 2;
    op.kind = OpKind::MatMul;
    op.a = 0;
    op.b = 1;
    op.s1 = op.s2 = op.s3 = 16;
    p.ops = {op};
    p.outputs = {{"z", 2}};
    p.layer_ids = {"l0"};
    p.layer_op_ranges = {{0, 1}};
    TiledProgram tp = plan(p, ArchConfig{});
    REQUIRE(tp.layers.size() == 1);
    REQUIRE(tp.layers[0].tasks.size() == 1);
    tp.layers[0].tasks[0].primitive = Primitive::DDMM;  // pin for the count
    tp.layers[0].tasks[0].cycles = 48;
    tp.layers[0].tasks[0].coo_slice.clear();
    Tensor x = Tensor::zeros({16, 16});
    CompiledProgram cp = emit(tp, &x);
    REQUIRE(cp.instructions.size() == 5);
    CHECK(cp.instructions[0].op == opcode::mem_read);
    CHECK(cp.instructions[1].op == opcode::mem_read);
    CHECK(cp.instructions[2].op == opcode::ddmm);
    CHECK(cp.instructions[3].op == opcode::mem_write);
    CHECK(cp.instructions[4].op == opcode::barrier);
  }
  SUBCASE("two-layer model carries one barrier per layer") {
    CompiledProgram cp = compile_builtin("tiny-gcn", 1);
    int barriers = 0;
    for (const Instruction& i : cp.instructions) barriers += i.op == opcode::barrier;
    ComputationGraph g = fuse_layers(insert_dm_layers(generate_model("tiny-gcn", 1)));
    int layers = static_cast<int>(lower_graph(g).layer_ids.size());
    CHECK(barriers == layers);
    CHECK(cp.instructions.back().op == opcode::barrier);
  }
}

TEST_CASE("emit is deterministic and byte-stable") {
  CompiledProgram a = compile_builtin("tiny-gcn", 1);
  CompiledProgram b = compile_builtin("tiny-gcn", 1);
  CHECK(a.instructions == b.instructions);
  CHECK(a.image == b.image);
  CHECK(a.layout_json == b.layout_json);
}

TEST_CASE("program file round-trip") {
  CompiledProgram cp = compile_builtin("tiny-gat", 2);
  std::string path =
      (std::filesystem::temp_directory_path() / "gcv_isa_prog.gcvi").string();
  write_program_file(path, cp.instructions);

  // Header: magic GCVI, version, count.
  std::ifstream f(path, std::ios::binary);
  char magic[4];
  f.read(magic, 4);
  CHECK(std::string(magic, 4) == "GCVI");

  std::vector<Instruction> back = read_program_file(path);
  CHECK(back == cp.instructions);
  CHECK(!dump_instructions(back).empty());
  std::remove(path.c_str());
}
