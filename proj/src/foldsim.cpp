#include "xnorforge/foldsim.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace xnorforge {

namespace {

bool foldable(const LayerSpec& layer) {
  return layer.is_conv() || layer.kind == LayerKind::Dense;
}

std::string divisor_list(std::int64_t n) {
  std::ostringstream os;
  for (std::int64_t d = 1; d <= n; ++d)
    if (n % d == 0) os << (os.tellp() > 0 ? " " : "") << d;
  return os.str();
}

}  // namespace

std::vector<FoldingIssue> validate_folding(const NetworkSpec& spec,
                                           const FoldingConfig& config) {
  std::vector<FoldingIssue> issues;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (!foldable(layer)) continue;
    const std::string name = layer_name(spec, i);
    seen.insert(name);
    const auto it = config.layers.find(name);
    if (it == config.layers.end()) {
      issues.push_back({name, "no folding configured"});
      continue;
    }
    const LayerFolding& f = it->second;
    if (f.pe < 1 || f.simd < 1)
      issues.push_back({name, "pe and simd must be positive"});
    if (f.fifo_depth < 1)
      issues.push_back({name, "fifo_depth must be positive"});
    const int out_c = layer.out_shape.channels;
    const std::int64_t dot = layer.dot_length();
    if (f.pe >= 1 && out_c % f.pe != 0)
      issues.push_back({name, "pe " + std::to_string(f.pe) +
                                  " does not divide " + std::to_string(out_c) +
                                  " outputs (valid: " + divisor_list(out_c) +
                                  ")"});
    if (f.simd >= 1 && dot % f.simd != 0)
      issues.push_back({name, "simd " + std::to_string(f.simd) +
                                  " does not divide " + std::to_string(dot) +
                                  " inputs (valid: " + divisor_list(dot) +
                                  ")"});
  }
  for (const auto& [name, f] : config.layers)
    if (!seen.contains(name))
      issues.push_back({name, "not a foldable layer of this network"});
  return issues;
}

void ensure_valid_folding(const NetworkSpec& spec,
                          const FoldingConfig& config) {
  const std::vector<FoldingIssue> issues = validate_folding(spec, config);
  if (issues.empty()) return;
  std::ostringstream os;
  os << "invalid folding for \"" << spec.name << "\":";
  for (const FoldingIssue& it : issues)
    os << "\n  " << it.layer << ": " << it.message;
  throw std::invalid_argument(os.str());
}

std::int64_t layer_fold_cycles(const LayerSpec& layer, int pe, int simd) {
  if (layer.kind == LayerKind::MaxPool2x2) return 0;
  if (!foldable(layer))
    throw std::invalid_argument("layer_fold_cycles: layer is not foldable");
  if (pe < 1 || simd < 1)
    throw std::invalid_argument("layer_fold_cycles: pe/simd must be positive");
  const int out_c = layer.out_shape.channels;
  const std::int64_t dot = layer.dot_length();
  if (out_c % pe != 0 || dot % simd != 0)
    throw std::invalid_argument(
        "layer_fold_cycles: pe must divide " + std::to_string(out_c) +
        " and simd must divide " + std::to_string(dot));
  const std::int64_t positions =
      layer.is_conv()
          ? std::int64_t(layer.out_shape.height) * layer.out_shape.width
          : 1;
  return positions * (out_c / pe) * (dot / simd);
}

ThroughputReport throughput(const NetworkSpec& spec,
                            const FoldingConfig& config,
                            const ClockConfig& clock) {
  ensure_valid_layers(spec);
  ensure_valid_folding(spec, config);
  if (!(clock.frequency_hz > 0))
    throw std::invalid_argument("throughput: clock frequency must be positive");
  ThroughputReport report;
  report.frequency_hz = clock.frequency_hz;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (!foldable(layer)) continue;
    const std::string name = layer_name(spec, i);
    const LayerFolding& f = config.layers.at(name);
    report.layers.push_back(
        {name, layer.kind, f, layer_fold_cycles(layer, f.pe, f.simd)});
    report.cost += std::int64_t(f.pe) * f.simd;
  }
  const auto slowest = std::max_element(
      report.layers.begin(), report.layers.end(),
      [](const LayerThroughput& a, const LayerThroughput& b) {
        return a.cycles_per_frame < b.cycles_per_frame;
      });
  report.bottleneck_index = std::size_t(slowest - report.layers.begin());
  report.bottleneck = slowest->name;
  report.frame_interval_cycles = slowest->cycles_per_frame;
  report.fps = clock.frequency_hz / double(report.frame_interval_cycles);
  return report;
}

namespace {

struct LayerOption {
  std::int64_t cost;
  std::int64_t cycles;
  int pe, simd;
};

std::vector<std::int64_t> divisors(std::int64_t n) {
  std::vector<std::int64_t> out;
  for (std::int64_t d = 1; d <= n; ++d)
    if (n % d == 0) out.push_back(d);
  return out;
}

}  // namespace

std::vector<ExploreEntry> explore(const NetworkSpec& spec,
                                  const ClockConfig& clock,
                                  const ExploreLimits& limits) {
  ensure_valid_layers(spec);
  if (limits.per_layer_budget < 1 || limits.total_budget < 1)
    throw std::invalid_argument("explore: budgets must be >= 1");

  struct FoldableLayer {
    std::string name;
    std::vector<LayerOption> options;  // cost ascending
  };
  std::vector<FoldableLayer> layers;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (!foldable(layer)) continue;
    FoldableLayer fl;
    fl.name = layer_name(spec, i);
    for (std::int64_t pe : divisors(layer.out_shape.channels)) {
      for (std::int64_t simd : divisors(layer.dot_length())) {
        const std::int64_t cost = pe * simd;
        if (cost > limits.per_layer_budget) continue;
        fl.options.push_back({cost,
                              layer_fold_cycles(layer, int(pe), int(simd)),
                              int(pe), int(simd)});
      }
    }
    if (fl.options.empty())
      throw std::invalid_argument("explore: empty search space for " +
                                  fl.name);
    std::sort(fl.options.begin(), fl.options.end(),
              [](const LayerOption& a, const LayerOption& b) {
                return std::tie(a.cost, a.cycles, a.pe, a.simd) <
                       std::tie(b.cost, b.cycles, b.pe, b.simd);
              });
    layers.push_back(std::move(fl));
  }
  if (layers.empty())
    throw std::invalid_argument("explore: network has no foldable layers");

  // Candidate frame intervals: every achievable per-layer cycle count.  For
  // each interval pick the cheapest option per layer that fits it; the
  // frontier then falls out of a dominance sweep.
  std::set<std::int64_t> intervals;
  for (const FoldableLayer& fl : layers)
    for (const LayerOption& op : fl.options) intervals.insert(op.cycles);

  std::vector<ExploreEntry> entries;
  for (const std::int64_t target : intervals) {
    FoldingConfig config;
    std::int64_t total_cost = 0;
    std::int64_t actual_interval = 0;
    bool feasible = true;
    for (const FoldableLayer& fl : layers) {
      const LayerOption* best = nullptr;
      for (const LayerOption& op : fl.options) {
        if (op.cycles > target) continue;
        // options are sorted by cost, so the first fit is the cheapest;
        // ties resolve to the lexicographically smallest (pe, simd).
        best = &op;
        break;
      }
      if (!best) {
        feasible = false;
        break;
      }
      config.layers[fl.name] = LayerFolding{best->pe, best->simd, 1};
      total_cost += best->cost;
      actual_interval = std::max(actual_interval, best->cycles);
    }
    if (!feasible || total_cost > limits.total_budget) continue;
    entries.push_back({std::move(config), actual_interval,
                       clock.frequency_hz / double(actual_interval),
                       total_cost});
  }
  if (entries.empty())
    throw std::invalid_argument(
        "explore: no feasible configuration within the budgets");

  // fps descending, then cost, then config for a deterministic order.
  std::sort(entries.begin(), entries.end(),
            [](const ExploreEntry& a, const ExploreEntry& b) {
              if (a.frame_interval_cycles != b.frame_interval_cycles)
                return a.frame_interval_cycles < b.frame_interval_cycles;
              if (a.cost != b.cost) return a.cost < b.cost;
              return a.config < b.config;
            });
  std::vector<ExploreEntry> frontier;
  std::int64_t best_cost = std::numeric_limits<std::int64_t>::max();
  for (ExploreEntry& e : entries) {
    if (!frontier.empty() &&
        frontier.back().frame_interval_cycles == e.frame_interval_cycles)
      continue;  // same fps, higher or equal cost
    if (e.cost >= best_cost) continue;  // dominated by a faster entry
    best_cost = e.cost;
    frontier.push_back(std::move(e));
  }
  return frontier;
}

void to_json(nlohmann::json& j, const FoldingConfig& config) {
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [name, f] : config.layers)
    layers[name] = {{"pe", f.pe},
                    {"simd", f.simd},
                    {"fifo_depth", f.fifo_depth}};
  j = nlohmann::json{
      {"format", "xnor-folding"}, {"version", 1}, {"layers", std::move(layers)}};
}

void from_json(const nlohmann::json& j, FoldingConfig& config) {
  if (j.value("format", "xnor-folding") != "xnor-folding")
    throw std::invalid_argument("not a xnor-folding document");
  if (j.value("version", 1) != 1)
    throw std::invalid_argument("unsupported xnor-folding version");
  config = {};
  for (const auto& [name, f] : j.at("layers").items()) {
    LayerFolding folding;
    folding.pe = f.at("pe").get<int>();
    folding.simd = f.at("simd").get<int>();
    folding.fifo_depth = f.value("fifo_depth", 1);
    config.layers[name] = folding;
  }
}

void to_json(nlohmann::json& j, const ThroughputReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerThroughput& l : report.layers)
    layers.push_back({{"name", l.name},
                      {"kind", to_string(l.kind)},
                      {"pe", l.folding.pe},
                      {"simd", l.folding.simd},
                      {"fifo_depth", l.folding.fifo_depth},
                      {"cycles_per_frame", l.cycles_per_frame}});
  j = nlohmann::json{{"clock_hz", report.frequency_hz},
                     {"layers", std::move(layers)},
                     {"bottleneck", report.bottleneck},
                     {"frame_interval_cycles", report.frame_interval_cycles},
                     {"fps", report.fps},
                     {"cost", report.cost}};
}

}  // namespace xnorforge
