#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xnorforge/engine.hpp"
#include "xnorforge/netspec.hpp"

namespace xnorforge {

struct ClockConfig {
  double frequency_hz = 1.0e8;
};

enum class BramRole { InputChannel, FeatureMapChannel, DenseWeightStore };

const char* to_string(BramRole role);

/// One logical on-chip RAM allocation.
struct BramAlloc {
  BramRole role;
  std::string label;
  int word_bits = 0;
  std::int64_t depth_words = 0;
  std::int64_t occupied_bits = 0;
};

struct MemoryMap {
  /// Capacity of one per-channel store (16 Kb block).
  static constexpr std::int64_t kChannelStoreCapacityBits = 16384;

  std::vector<BramAlloc> allocations;
};

struct LayerCycles {
  std::string name;
  LayerKind kind;
  std::int64_t cycles = 0;
};

struct CycleReport {
  std::vector<LayerCycles> layers;
  std::int64_t total_cycles = 0;
  double frequency_hz = 0.0;
  double fps = 0.0;
  MemoryMap memory;
};

/// Order in which the accelerator visits output positions of a conv layer.
/// With a downstream pool the positions come in complete groups of four
/// {(2i,2j), (2i,2j+1), (2i+1,2j), (2i+1,2j+1)} so the pool module never
/// needs a frame buffer; otherwise plain row-major.
std::vector<std::pair<int, int>> context_read_order(const LayerSpec& layer,
                                                    bool followed_by_pool);

/// Context elements are read serially, one per clock, across all input
/// channels; every filter consumes the stream in parallel and the
/// XNOR/popcount/scale stages hide behind the reads.
std::int64_t conv_block_cycles(const LayerSpec& layer);

/// One clock per flattened input: weight-word read + XNOR + accumulate,
/// all neurons in parallel.
std::int64_t dense_block_cycles(const LayerSpec& layer);

/// Logical BRAM plan: one 8-bit store per input channel, one 1-bit store per
/// conv block output channel (post-pool), one weight store per dense layer
/// (word width = neuron count, depth = input count).  Throws when a channel
/// plane exceeds the 16 Kb store, naming the layer.
MemoryMap memory_map(const NetworkSpec& spec);

CycleReport simulate(const NetworkSpec& spec, const ClockConfig& clock = {});

struct CosimResult {
  CycleReport report;
  InferResult result;
};

/// Functional co-simulation: runs the same arithmetic as engine::infer in the
/// accelerator's exact event order (pool-grouped context reads, serial dense
/// reads) while counting cycles.  Scores match infer and cycles match
/// simulate.
CosimResult cosimulate(const NetworkSpec& spec, const WeightBundle& weights,
                       const FeatureMap& image, const ClockConfig& clock = {});

void to_json(nlohmann::json& j, const MemoryMap& map);
void to_json(nlohmann::json& j, const CycleReport& report);

}  // namespace xnorforge
