#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gcvt/isa.hpp"

namespace gcv {

// Cycle-accurate replay of an instruction stream against its data image.
// The functional result depends only on program order; the timeline
// replays the static PE assignment with per-layer barriers, a single
// in-order memory channel and one cycle of overhead when a PE switches
// primitive.
struct SimReport {
  struct LayerRow {
    std::string id;
    int64_t start = 0;
    int64_t span = 0;
    int64_t compute = 0;     // compute makespan inside the layer
    int64_t cnn = 0, gnn = 0, other = 0;  // split of compute by provenance
    int64_t dm_total = 0;    // data-manipulation streaming cycles
    int64_t dm = 0;          // exposed DM cycles: max(0, dm_total - compute)
    int64_t mem_total = 0;   // memory channel occupancy
    int64_t memory = 0;      // exposed memory cycles
  };
  std::vector<LayerRow> layers;
  int64_t total_cycles = 0;

  // Regions flushed by mem_write, keyed by byte offset.
  std::map<uint32_t, Tensor> outputs;
  std::map<uint32_t, std::vector<Triple>> sparse_outputs;

  std::string to_json() const;
  std::string to_csv() const;
  std::string to_table() const;
};

SimReport simulate(const std::vector<Instruction>& prog, std::vector<uint8_t> image,
                   const ArchConfig& arch,
                   const std::vector<std::string>& layer_names = {});

}  // namespace gcv
