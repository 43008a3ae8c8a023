#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xnorforge/hwsim.hpp"  // ClockConfig
#include "xnorforge/netspec.hpp"

namespace xnorforge {

/// Folding of one layer: PE parallelizes over output channels, SIMD over the
/// elements of the input dot product.  FIFO depth is carried along but has no
/// effect on steady-state throughput.
struct LayerFolding {
  int pe = 1;
  int simd = 1;
  int fifo_depth = 1;

  auto operator<=>(const LayerFolding&) const = default;
};

/// Per-layer folding keyed by display layer name (Conv-1, FC-1, ...).
struct FoldingConfig {
  std::map<std::string, LayerFolding> layers;

  auto operator<=>(const FoldingConfig&) const = default;
};

struct FoldingIssue {
  std::string layer;
  std::string message;
};

/// Divisibility and positivity diagnostics; empty when the config is valid.
/// Every conv/dense layer must be configured, and nothing else.
std::vector<FoldingIssue> validate_folding(const NetworkSpec& spec,
                                           const FoldingConfig& config);

/// validate_folding that throws std::invalid_argument with all diagnostics.
void ensure_valid_folding(const NetworkSpec& spec, const FoldingConfig& config);

/// Cycles per frame of one folded layer:
///   conv:  out_h*out_w * (out_c/pe) * (k_h*k_w*in_c/simd)
///   dense: (out_c/pe) * (inputs/simd)
/// Maxpool layers cost nothing (folded into the upstream stream).
std::int64_t layer_fold_cycles(const LayerSpec& layer, int pe, int simd);

struct LayerThroughput {
  std::string name;
  LayerKind kind;
  LayerFolding folding;
  std::int64_t cycles_per_frame = 0;
};

struct ThroughputReport {
  std::vector<LayerThroughput> layers;  // foldable layers only
  std::size_t bottleneck_index = 0;
  std::string bottleneck;
  std::int64_t frame_interval_cycles = 0;
  double frequency_hz = 0.0;
  double fps = 0.0;
  std::int64_t cost = 0;  // sum of pe*simd over layers
};

/// Streaming dataflow: all layer stages run concurrently, so the frame
/// interval is the slowest layer's cycles per frame.
ThroughputReport throughput(const NetworkSpec& spec,
                            const FoldingConfig& config,
                            const ClockConfig& clock = {});

struct ExploreLimits {
  std::int64_t per_layer_budget = 1;  // max pe*simd of any one layer
  std::int64_t total_budget = std::int64_t{1} << 62;
};

struct ExploreEntry {
  FoldingConfig config;
  std::int64_t frame_interval_cycles = 0;
  double fps = 0.0;
  std::int64_t cost = 0;
};

/// Exhaustive divisor-valid design-space exploration under the budgets.
/// Returns the Pareto frontier over (fps up, cost down), ordered by fps
/// descending; no entry is dominated by another.
std::vector<ExploreEntry> explore(const NetworkSpec& spec,
                                  const ClockConfig& clock,
                                  const ExploreLimits& limits);

void to_json(nlohmann::json& j, const FoldingConfig& config);
void from_json(const nlohmann::json& j, FoldingConfig& config);
void to_json(nlohmann::json& j, const ThroughputReport& report);

}  // namespace xnorforge
