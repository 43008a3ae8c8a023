#include "xnorforge/hwsim.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xnorforge/modelio.hpp"

namespace xnorforge {

const char* to_string(BramRole role) {
  switch (role) {
    case BramRole::InputChannel: return "input_channel";
    case BramRole::FeatureMapChannel: return "feature_map_channel";
    case BramRole::DenseWeightStore: return "dense_weight_store";
  }
  return "?";
}

std::vector<std::pair<int, int>> context_read_order(const LayerSpec& layer,
                                                    bool followed_by_pool) {
  if (!layer.is_conv())
    throw std::invalid_argument("context_read_order: not a conv layer");
  const int oh = layer.out_shape.height;
  const int ow = layer.out_shape.width;
  std::vector<std::pair<int, int>> order;
  order.reserve(std::size_t(oh) * ow);
  if (!followed_by_pool) {
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) order.emplace_back(r, c);
    return order;
  }
  if (oh % 2 != 0 || ow % 2 != 0)
    throw std::invalid_argument(
        "context_read_order: pooled conv output has odd dimensions");
  for (int bi = 0; bi < oh / 2; ++bi) {
    for (int bj = 0; bj < ow / 2; ++bj) {
      order.emplace_back(2 * bi, 2 * bj);
      order.emplace_back(2 * bi, 2 * bj + 1);
      order.emplace_back(2 * bi + 1, 2 * bj);
      order.emplace_back(2 * bi + 1, 2 * bj + 1);
    }
  }
  return order;
}

std::int64_t conv_block_cycles(const LayerSpec& layer) {
  if (!layer.is_conv())
    throw std::invalid_argument("conv_block_cycles: not a conv layer");
  const Kernel& k = *layer.kernel;
  return std::int64_t(layer.out_shape.height) * layer.out_shape.width *
         k.height * k.width * layer.in_shape.channels;
}

std::int64_t dense_block_cycles(const LayerSpec& layer) {
  if (layer.kind != LayerKind::Dense)
    throw std::invalid_argument("dense_block_cycles: not a dense layer");
  return layer.in_shape.flat();
}

namespace {

/// Output spatial dims of a conv block, after the fused pool if present.
std::pair<int, int> block_output_dims(const NetworkSpec& spec,
                                      std::size_t conv_index) {
  const LayerSpec& layer = spec.layers[conv_index];
  int oh = layer.out_shape.height, ow = layer.out_shape.width;
  if (conv_index + 1 < spec.layers.size() &&
      spec.layers[conv_index + 1].kind == LayerKind::MaxPool2x2) {
    oh /= 2;
    ow /= 2;
  }
  return {oh, ow};
}

}  // namespace

MemoryMap memory_map(const NetworkSpec& spec) {
  ensure_valid_layers(spec);
  MemoryMap map;
  const auto channel_store = [&map](BramRole role, const std::string& label,
                                    int word_bits, std::int64_t depth,
                                    const std::string& owner) {
    BramAlloc alloc{role, label, word_bits, depth, word_bits * depth};
    if (alloc.occupied_bits > MemoryMap::kChannelStoreCapacityBits)
      throw std::invalid_argument(
          "memory_map: channel store of " + owner + " needs " +
          std::to_string(alloc.occupied_bits) + " bits, capacity is " +
          std::to_string(MemoryMap::kChannelStoreCapacityBits));
    map.allocations.push_back(std::move(alloc));
  };

  const Shape& in = spec.layers.front().in_shape;
  for (int ch = 0; ch < in.channels; ++ch)
    channel_store(BramRole::InputChannel, "input/ch" + std::to_string(ch), 8,
                  std::int64_t(in.height) * in.width, "input");

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (layer.is_conv()) {
      const auto [oh, ow] = block_output_dims(spec, i);
      const std::string name = layer_name(spec, i);
      for (int f = 0; f < layer.out_shape.channels; ++f)
        channel_store(BramRole::FeatureMapChannel,
                      name + "/ch" + std::to_string(f), 1,
                      std::int64_t(oh) * ow, name);
    } else if (layer.kind == LayerKind::Dense) {
      // One memory word holds the weights of one input for all neurons.
      const std::string name = layer_name(spec, i);
      const int neurons = layer.out_shape.channels;
      const std::int64_t inputs = layer.in_shape.flat();
      map.allocations.push_back(BramAlloc{BramRole::DenseWeightStore,
                                          name + "/weights", neurons, inputs,
                                          neurons * inputs});
    }
  }
  return map;
}

CycleReport simulate(const NetworkSpec& spec, const ClockConfig& clock) {
  ensure_valid_layers(spec);
  if (!(clock.frequency_hz > 0))
    throw std::invalid_argument("simulate: clock frequency must be positive");
  CycleReport report;
  report.frequency_hz = clock.frequency_hz;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    std::int64_t cycles = 0;
    if (layer.is_conv())
      cycles = conv_block_cycles(layer);
    else if (layer.kind == LayerKind::Dense)
      cycles = dense_block_cycles(layer);
    // Maxpool, batch norm, and activation stream behind the conv pipeline
    // and cost no dedicated cycles.
    report.layers.push_back({layer_name(spec, i), layer.kind, cycles});
    report.total_cycles += cycles;
  }
  report.fps = clock.frequency_hz / double(report.total_cycles);
  report.memory = memory_map(spec);
  return report;
}

namespace {

void check_cosim_image(const NetworkSpec& spec, const FeatureMap& image) {
  const Shape& expect = spec.layers.front().in_shape;
  if (image.shape != expect)
    throw std::invalid_argument("input image is " + to_string(image.shape) +
                                ", network expects " + to_string(expect));
  const double lo = spec.input_range == InputRange::SymmetricUnit ? -1.0 : 0.0;
  for (double v : image.data)
    if (!(v >= lo && v <= 1.0))
      throw std::invalid_argument("input value outside declared range");
}

}  // namespace

CosimResult cosimulate(const NetworkSpec& spec, const WeightBundle& weights,
                       const FeatureMap& image, const ClockConfig& clock) {
  ensure_valid(spec);
  validate_bundle(weights, spec);
  check_cosim_image(spec, image);
  if (!(clock.frequency_hz > 0))
    throw std::invalid_argument("cosimulate: clock frequency must be positive");

  CosimResult out;
  out.report.frequency_hz = clock.frequency_hz;

  BinaryFeatureMap state;  // feature-map BRAM contents after each conv block
  std::vector<double> scores;

  const std::size_t n = spec.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& layer = spec.layers[i];
    const LayerWeights& lw = weights.layers[i];
    std::int64_t cycles = 0;

    switch (layer.kind) {
      case LayerKind::ConvFirst:
      case LayerKind::ConvBinary: {
        const ConvWeights& w = *lw.conv;
        const bool pooled = i + 1 < n &&
                            spec.layers[i + 1].kind == LayerKind::MaxPool2x2;
        if (!layer.has_activation)
          throw std::invalid_argument(
              "conv layer without activation is not executable");
        const auto [oh, ow] = block_output_dims(spec, i);
        BinaryFeatureMap next(Shape{oh, ow, w.filters});

        const auto order = context_read_order(layer, pooled);
        // Running per-filter max of the current pool group; positions of one
        // group arrive consecutively, so a single column of registers is
        // enough (no frame buffer).
        std::vector<double> group_max(w.filters);
        int group_fill = 0;
        std::vector<double> acc(w.filters);
        BitVector ctx;

        for (const auto& [r, c] : order) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (int ch = 0; ch < w.in_channels; ++ch) {
            cycles += std::int64_t(w.kernel_h) * w.kernel_w;  // serial reads
            if (layer.kind == LayerKind::ConvFirst) {
              for (int f = 0; f < w.filters; ++f) {
                const BitVector& tap = w.tap(f, ch);
                double a = acc[f];
                for (int kr = 0; kr < w.kernel_h; ++kr)
                  for (int kc = 0; kc < w.kernel_w; ++kc) {
                    const double x = image.at(r + kr, c + kc, ch);
                    a += tap.bit(std::size_t(kr) * w.kernel_w + kc) ? x : -x;
                  }
                acc[f] = a;
              }
            } else {
              ctx.reset(std::size_t(w.kernel_h) * w.kernel_w);
              for (int kr = 0; kr < w.kernel_h; ++kr)
                for (int kc = 0; kc < w.kernel_w; ++kc)
                  if (state.bit(r + kr, c + kc, ch))
                    ctx.set_bit(std::size_t(kr) * w.kernel_w + kc, true);
              for (int f = 0; f < w.filters; ++f)
                acc[f] += double(xnor_dot(ctx, w.tap(f, ch)));
            }
          }
          // Bias, then the streaming pool / norm / activation stages.
          for (int f = 0; f < w.filters; ++f) acc[f] += lw.bias[f];
          if (pooled) {
            if (group_fill == 0) {
              group_max = acc;
            } else {
              for (int f = 0; f < w.filters; ++f)
                group_max[f] = std::max(group_max[f], acc[f]);
            }
            if (++group_fill == 4) {
              group_fill = 0;
              for (int f = 0; f < w.filters; ++f) {
                double v = group_max[f];
                if (layer.has_batchnorm)
                  v = affine_eval(lw.norm->a[f], v, lw.norm->b[f]);
                if (sign_bit(v))
                  next.channels[f].set_bit(
                      std::size_t(r / 2) * (ow) + (c / 2), true);
              }
            }
          } else {
            for (int f = 0; f < w.filters; ++f) {
              double v = acc[f];
              if (layer.has_batchnorm)
                v = affine_eval(lw.norm->a[f], v, lw.norm->b[f]);
              if (sign_bit(v))
                next.channels[f].set_bit(std::size_t(r) * ow + c, true);
            }
          }
        }
        state = std::move(next);
        out.report.layers.push_back({layer_name(spec, i), layer.kind, cycles});
        if (pooled) {
          ++i;
          out.report.layers.push_back(
              {layer_name(spec, i), LayerKind::MaxPool2x2, 0});
        }
        break;
      }
      case LayerKind::MaxPool2x2:
        throw std::invalid_argument(
            "maxpool layer must directly follow a conv layer");
      case LayerKind::Dense: {
        const DenseWeights& dw = *lw.dense;
        std::vector<std::int64_t> acc(dw.neurons, 0);
        // Serial feature-map reads in channel-planar row-major order; each
        // read also fetches the weight word covering all neurons.
        std::int64_t idx = 0;
        for (int ch = 0; ch < state.shape.channels; ++ch) {
          const std::int64_t plane =
              std::int64_t(state.shape.height) * state.shape.width;
          for (std::int64_t p = 0; p < plane; ++p, ++idx) {
            ++cycles;
            const bool in_bit = state.channels[ch].bit(std::size_t(p));
            for (int j = 0; j < dw.neurons; ++j)
              acc[j] += in_bit == dw.rows[j].bit(std::size_t(idx)) ? 1 : -1;
          }
        }
        if (idx != dw.inputs)
          throw std::invalid_argument("dense: input length mismatch");
        // Serialize neuron outputs: bias, then norm if present.
        std::vector<double> s(dw.neurons);
        for (int j = 0; j < dw.neurons; ++j) {
          double v = double(acc[j]) + lw.bias[j];
          if (lw.norm) v = affine_eval(lw.norm->a[j], v, lw.norm->b[j]);
          s[j] = v;
        }
        out.report.layers.push_back({layer_name(spec, i), layer.kind, cycles});
        if (layer.has_activation) {
          if (i + 1 == n)
            throw std::invalid_argument(
                "final dense layer must not carry an activation");
          BinaryFeatureMap next(Shape{1, 1, dw.neurons});
          for (int j = 0; j < dw.neurons; ++j)
            if (sign_bit(s[j])) next.channels[j].set_bit(0, true);
          state = std::move(next);
        } else {
          if (i + 1 != n)
            throw std::invalid_argument(
                "dense layer without activation must be the final layer");
          scores = std::move(s);
        }
        break;
      }
    }
  }

  if (scores.empty())
    throw std::invalid_argument("network produced no scores");
  for (const LayerCycles& l : out.report.layers)
    out.report.total_cycles += l.cycles;
  out.report.fps = clock.frequency_hz / double(out.report.total_cycles);
  out.report.memory = memory_map(spec);
  out.result.argmax = int(std::max_element(scores.begin(), scores.end()) -
                          scores.begin());
  out.result.scores = std::move(scores);
  return out;
}

void to_json(nlohmann::json& j, const MemoryMap& map) {
  nlohmann::json allocs = nlohmann::json::array();
  for (const BramAlloc& a : map.allocations)
    allocs.push_back({{"role", to_string(a.role)},
                      {"label", a.label},
                      {"word_bits", a.word_bits},
                      {"depth_words", a.depth_words},
                      {"occupied_bits", a.occupied_bits}});
  j = nlohmann::json{
      {"channel_store_capacity_bits", MemoryMap::kChannelStoreCapacityBits},
      {"allocations", std::move(allocs)}};
}

void to_json(nlohmann::json& j, const CycleReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerCycles& l : report.layers)
    layers.push_back({{"name", l.name},
                      {"kind", to_string(l.kind)},
                      {"cycles", l.cycles}});
  j = nlohmann::json{{"clock_hz", report.frequency_hz},
                     {"layers", std::move(layers)},
                     {"total_cycles", report.total_cycles},
                     {"fps", report.fps},
                     {"memory_map", report.memory}};
}

}  // namespace xnorforge
