#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcvt/lowering.hpp"

namespace gcv {

// Accelerator configuration. Buffer capacities are counted in binary16
// values: each of the three on-chip buffers (vector, weight, result)
// holds bank_depth * p_ca * p_ca of them.
struct ArchConfig {
  int n_pe = 7;
  int p_ca = 16;
  int64_t bank_depth = 512;
  int64_t external_memory_bytes = int64_t{1} << 28;
  int64_t mem_bandwidth = 128;  // bytes per accelerator cycle
  int clock_ratio = 2;          // compute : memory clock, informational

  int64_t buffer_values() const { return bank_depth * p_ca * p_ca; }
  CostModel cost() const { return CostModel{p_ca}; }

  bool operator==(const ArchConfig&) const = default;
};

ArchConfig arch_from_json(const std::string& text);
ArchConfig arch_from_file(const std::string& path);
std::string arch_to_json(const ArchConfig& a);

enum class Primitive { DDMM = 1, SpDMM = 2, SDDMM = 3, PSVM = 4, PVVA = 5, DM = 6 };

const char* to_string(Primitive p);

struct TileTask {
  int op_index = -1;
  // Global offsets and extents of this tile in the result / reduction space.
  int64_t row0 = 0, col0 = 0, k0 = 0;
  int64_t t1 = 0, t3 = 0, t2 = 0;
  Primitive primitive = Primitive::DDMM;
  int64_t nnz = 0;          // sparse-side nonzeros (exact or estimated)
  bool nnz_exact = false;
  bool accumulate = false;  // continues the fp32 accumulator of (row0, col0)
  bool commit = true;       // final reduction step: round and write back
  int64_t cycles = 0;
  bool is_dm = false;
  // Triples of a constant sparse operand restricted to this tile
  // (global indices), or a contiguous record range of a computed one.
  std::vector<Triple> coo_slice;
  int64_t rec_begin = -1, rec_end = -1;

  bool operator==(const TileTask&) const = default;
};

struct TiledLayer {
  std::string layer_id;
  std::vector<TileTask> tasks;

  bool operator==(const TiledLayer&) const = default;
};

struct TiledProgram {
  MatrixProgram program;
  ArchConfig arch;
  std::vector<TiledLayer> layers;

  bool operator==(const TiledProgram&) const = default;
};

// Deterministic greedy tile-size choice for a dense matmul under the
// buffer capacities; returns the (i, j, k) task grid in that loop order,
// k innermost, without primitive selection.
std::vector<TileTask> tile_matmul(const MatrixOp& op, const ArchConfig& arch);

// Fills primitive, nnz and cycles for a matmul tile by comparing the
// DDMM and SpDMM cost formulas on this tile's dimensions.
void select_primitive(TileTask& t, const MatrixOp& op, const MatrixProgram& p,
                      const ArchConfig& arch);

TiledProgram plan(const MatrixProgram& p, const ArchConfig& arch);

std::string dump_plan(const TiledProgram& tp);

// ---- PE assignment ----

struct ScheduledTask {
  int layer = 0;
  int task = 0;  // index into TiledLayer::tasks
  int pe = 0;    // -1 for DM streaming tasks (no PE occupied)
  int64_t start = 0, finish = 0;  // relative to the layer start
};

struct Schedule {
  std::vector<ScheduledTask> tasks;
  std::vector<int64_t> layer_makespan;  // compute tasks only
  std::vector<int64_t> layer_dm;        // DM streaming cycles per layer
};

// Greedy list scheduling in program order: earliest-finishing PE wins,
// ties go to the lowest index; a task waits for the tasks of its operand-
// producing ops and an accumulate chain stays on one PE. Layers are
// separated by barriers, so each layer schedules from time 0.
Schedule schedule(const TiledProgram& tp);

}  // namespace gcv
