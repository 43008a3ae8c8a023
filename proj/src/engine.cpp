#include "xnorforge/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "xnorforge/modelio.hpp"

namespace xnorforge {

BitVector BinaryFeatureMap::flatten() const {
  BitVector out;
  out.reset(std::size_t(shape.flat()));
  std::size_t idx = 0;
  for (const BitVector& plane : channels) {
    for (std::size_t i = 0; i < plane.size(); ++i, ++idx)
      if (plane.bit(i)) out.set_bit(idx, true);
  }
  return out;
}

BatchNormParams BatchNormParams::from_variance(std::vector<double> gamma,
                                               std::vector<double> beta,
                                               std::vector<double> mu,
                                               std::span<const double> variance,
                                               double epsilon) {
  BatchNormParams p;
  p.gamma = std::move(gamma);
  p.beta = std::move(beta);
  p.mu = std::move(mu);
  p.epsilon = epsilon;
  p.sigma.reserve(variance.size());
  for (double v : variance) p.sigma.push_back(std::sqrt(v + epsilon));
  return p;
}

AffineNorm fold_batchnorm(const BatchNormParams& params) {
  const std::size_t n = params.gamma.size();
  if (params.beta.size() != n || params.mu.size() != n ||
      params.sigma.size() != n)
    throw std::invalid_argument("fold_batchnorm: channel count mismatch");
  AffineNorm norm;
  norm.a.resize(n);
  norm.b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(params.sigma[i] > 0.0))
      throw std::invalid_argument("fold_batchnorm: sigma must be positive");
    norm.a[i] = params.gamma[i] / params.sigma[i];
    norm.b[i] = -(params.gamma[i] / params.sigma[i]) * params.mu[i] +
                params.beta[i];
  }
  return norm;
}

namespace {

void check_conv_input(const Shape& in, const ConvWeights& w,
                      std::span<const double> bias) {
  if (in.channels != w.in_channels)
    throw std::invalid_argument("conv: input has " +
                                std::to_string(in.channels) +
                                " channels, weights expect " +
                                std::to_string(w.in_channels));
  if (w.kernel_h > in.height || w.kernel_w > in.width)
    throw std::invalid_argument("conv: kernel larger than input");
  if (static_cast<int>(bias.size()) != w.filters)
    throw std::invalid_argument("conv: bias count != filter count");
  if (w.taps.size() != std::size_t(w.filters) * w.in_channels)
    throw std::invalid_argument("conv: tap table size mismatch");
  const std::size_t klen = std::size_t(w.kernel_h) * w.kernel_w;
  for (const BitVector& t : w.taps)
    if (t.size() != klen)
      throw std::invalid_argument("conv: tap length mismatch");
}

/// Pre-bias accumulators of the first-layer conv.  Tap order is
/// (channel, row, col), matching the serial context reads of the hardware
/// model; the reference path accumulates in the same order so the partial
/// sums round identically.
FeatureMap conv_first_prebias(const FeatureMap& input, const ConvWeights& w) {
  const Shape out_shape{input.shape.height - w.kernel_h + 1,
                        input.shape.width - w.kernel_w + 1, w.filters};
  FeatureMap out(out_shape);
  for (int r = 0; r < out_shape.height; ++r) {
    for (int c = 0; c < out_shape.width; ++c) {
      for (int f = 0; f < w.filters; ++f) {
        double acc = 0.0;
        for (int ch = 0; ch < w.in_channels; ++ch) {
          const BitVector& tap = w.tap(f, ch);
          for (int kr = 0; kr < w.kernel_h; ++kr) {
            for (int kc = 0; kc < w.kernel_w; ++kc) {
              const double x = input.at(r + kr, c + kc, ch);
              acc += tap.bit(std::size_t(kr) * w.kernel_w + kc) ? x : -x;
            }
          }
        }
        out.at(r, c, f) = acc;
      }
    }
  }
  return out;
}

/// Copies the k x k window of one channel plane at (r0, c0) into `ctx`,
/// row-major.  `ctx` is caller-provided scratch to keep the hot loop free of
/// allocations.
void gather_context(const BitVector& plane, int plane_width, int r0, int c0,
                    int kh, int kw, BitVector& ctx) {
  ctx.reset(std::size_t(kh) * kw);
  for (int kr = 0; kr < kh; ++kr) {
    const std::size_t row = std::size_t(r0 + kr) * plane_width + c0;
    for (int kc = 0; kc < kw; ++kc)
      if (plane.bit(row + kc)) ctx.set_bit(std::size_t(kr) * kw + kc, true);
  }
}

FeatureMap conv_binary_prebias(const BinaryFeatureMap& input,
                               const ConvWeights& w) {
  const Shape out_shape{input.shape.height - w.kernel_h + 1,
                        input.shape.width - w.kernel_w + 1, w.filters};
  FeatureMap out(out_shape);
  BitVector ctx;
  std::vector<std::int64_t> acc(w.filters);
  for (int r = 0; r < out_shape.height; ++r) {
    for (int c = 0; c < out_shape.width; ++c) {
      std::fill(acc.begin(), acc.end(), 0);
      for (int ch = 0; ch < w.in_channels; ++ch) {
        gather_context(input.channels[ch], input.shape.width, r, c,
                       w.kernel_h, w.kernel_w, ctx);
        for (int f = 0; f < w.filters; ++f)
          acc[f] += xnor_dot(ctx, w.tap(f, ch));
      }
      for (int f = 0; f < w.filters; ++f)
        out.at(r, c, f) = double(acc[f]);
    }
  }
  return out;
}

FeatureMap add_bias(FeatureMap map, std::span<const double> bias) {
  const int channels = map.shape.channels;
  std::size_t i = 0;
  for (double& v : map.data) {
    v += bias[i % channels];
    ++i;
  }
  return map;
}

std::vector<std::int64_t> dense_prebias(const BitVector& input,
                                        const DenseWeights& w) {
  if (static_cast<int>(input.size()) != w.inputs)
    throw std::invalid_argument("dense: input length " +
                                std::to_string(input.size()) +
                                " != expected " + std::to_string(w.inputs));
  if (w.rows.size() != std::size_t(w.neurons))
    throw std::invalid_argument("dense: weight row count mismatch");
  std::vector<std::int64_t> acc(w.neurons);
  for (int j = 0; j < w.neurons; ++j) acc[j] = xnor_dot(input, w.rows[j]);
  return acc;
}

std::vector<double> dense_postprocess(std::span<const std::int64_t> acc,
                                      std::span<const double> bias,
                                      const AffineNorm* norm) {
  if (bias.size() != acc.size())
    throw std::invalid_argument("dense: bias count != neuron count");
  if (norm && norm->channels() != acc.size())
    throw std::invalid_argument("dense: norm channel count mismatch");
  std::vector<double> out(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) {
    double s = double(acc[j]) + bias[j];
    if (norm) s = affine_eval(norm->a[j], s, norm->b[j]);
    out[j] = s;
  }
  return out;
}

}  // namespace

FeatureMap conv_first(const FeatureMap& input, const ConvWeights& weights,
                      std::span<const double> bias) {
  check_conv_input(input.shape, weights, bias);
  return add_bias(conv_first_prebias(input, weights), bias);
}

FeatureMap conv_binary(const BinaryFeatureMap& input,
                       const ConvWeights& weights,
                       std::span<const double> bias) {
  check_conv_input(input.shape, weights, bias);
  return add_bias(conv_binary_prebias(input, weights), bias);
}

FeatureMap maxpool2x2(const FeatureMap& input) {
  const Shape& s = input.shape;
  if (s.height % 2 != 0 || s.width % 2 != 0)
    throw std::invalid_argument("maxpool2x2: odd spatial dimensions " +
                                to_string(s));
  FeatureMap out(Shape{s.height / 2, s.width / 2, s.channels});
  for (int r = 0; r < out.shape.height; ++r) {
    for (int c = 0; c < out.shape.width; ++c) {
      for (int ch = 0; ch < s.channels; ++ch) {
        const double m = std::max(
            std::max(input.at(2 * r, 2 * c, ch), input.at(2 * r, 2 * c + 1, ch)),
            std::max(input.at(2 * r + 1, 2 * c, ch),
                     input.at(2 * r + 1, 2 * c + 1, ch)));
        out.at(r, c, ch) = m;
      }
    }
  }
  return out;
}

FeatureMap batchnorm_affine(const FeatureMap& input, const AffineNorm& norm) {
  if (norm.channels() != std::size_t(input.shape.channels))
    throw std::invalid_argument("batchnorm_affine: norm has " +
                                std::to_string(norm.channels()) +
                                " channels, map has " +
                                std::to_string(input.shape.channels));
  FeatureMap out(input.shape);
  const int channels = input.shape.channels;
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const std::size_t ch = i % channels;
    out.data[i] = affine_eval(norm.a[ch], input.data[i], norm.b[ch]);
  }
  return out;
}

BinaryFeatureMap binarize(const FeatureMap& input) {
  BinaryFeatureMap out(input.shape);
  for (int r = 0; r < input.shape.height; ++r)
    for (int c = 0; c < input.shape.width; ++c)
      for (int ch = 0; ch < input.shape.channels; ++ch)
        if (sign_bit(input.at(r, c, ch)))
          out.channels[ch].set_bit(std::size_t(r) * input.shape.width + c,
                                   true);
  return out;
}

std::int64_t integer_threshold(double a, double b) {
  if (a == 0.0 || std::isnan(a) || std::isnan(b))
    throw std::invalid_argument("integer_threshold: need finite a != 0");
  // Exactly-representable integer window; crossovers beyond it saturate.
  const double kLimit = 9.0e15;
  double t = -b / a;
  t = std::clamp(t, -kLimit, kLimit);
  std::int64_t tau =
      a > 0 ? std::int64_t(std::ceil(t)) : std::int64_t(std::floor(t));
  // -b/a rounds once; nudge tau until it agrees with the affine + sign path
  // at integer points.  Never more than a step or two.
  const auto on = [&](std::int64_t x) {
    return sign_bit(affine_eval(a, double(x), b));
  };
  if (a > 0) {
    for (int i = 0; i < 64 && tau > -std::int64_t(kLimit) && on(tau - 1); ++i)
      --tau;
    for (int i = 0; i < 64 && tau < std::int64_t(kLimit) && !on(tau); ++i)
      ++tau;
  } else {
    for (int i = 0; i < 64 && tau < std::int64_t(kLimit) && on(tau + 1); ++i)
      ++tau;
    for (int i = 0; i < 64 && tau > -std::int64_t(kLimit) && !on(tau); ++i)
      --tau;
  }
  return tau;
}

BinaryFeatureMap threshold_activation(const FeatureMap& preact,
                                      const AffineNorm& norm) {
  const int channels = preact.shape.channels;
  if (norm.channels() != std::size_t(channels))
    throw std::invalid_argument("threshold_activation: norm channel mismatch");
  std::vector<std::int64_t> tau(channels);
  for (int ch = 0; ch < channels; ++ch) tau[ch] = integer_threshold(
      norm.a[ch], norm.b[ch]);

  BinaryFeatureMap out(preact.shape);
  for (int r = 0; r < preact.shape.height; ++r) {
    for (int c = 0; c < preact.shape.width; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        const double v = preact.at(r, c, ch);
        if (v != std::nearbyint(v) || std::abs(v) > 9.0e15)
          throw std::invalid_argument(
              "threshold_activation: pre-activation is not integral");
        const auto x = std::int64_t(v);
        const bool hit = norm.a[ch] > 0 ? x >= tau[ch] : x <= tau[ch];
        if (hit)
          out.channels[ch].set_bit(std::size_t(r) * preact.shape.width + c,
                                   true);
      }
    }
  }
  return out;
}

std::vector<double> dense_binary(const BitVector& input,
                                 const DenseWeights& weights,
                                 std::span<const double> bias,
                                 const AffineNorm* norm) {
  return dense_postprocess(dense_prebias(input, weights), bias, norm);
}

std::vector<double> dense_binary(const BinaryFeatureMap& input,
                                 const DenseWeights& weights,
                                 std::span<const double> bias,
                                 const AffineNorm* norm) {
  return dense_binary(input.flatten(), weights, bias, norm);
}

namespace {

void check_image(const NetworkSpec& spec, const FeatureMap& image) {
  const Shape& expect = spec.layers.front().in_shape;
  if (image.shape != expect)
    throw std::invalid_argument("input image is " + to_string(image.shape) +
                                ", network expects " + to_string(expect));
  const double lo = spec.input_range == InputRange::SymmetricUnit ? -1.0 : 0.0;
  for (double v : image.data)
    if (!(v >= lo && v <= 1.0))
      throw std::invalid_argument("input value " + std::to_string(v) +
                                  " outside declared range");
}

int argmax_index(std::span<const double> scores) {
  // Ties break to the lowest class index.
  return int(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

/// Reference real-arithmetic convolution: +-1 weights as doubles, same
/// (channel, row, col) accumulation order as the packed path.
FeatureMap conv_real_prebias(const FeatureMap& input, const ConvWeights& w) {
  const Shape out_shape{input.shape.height - w.kernel_h + 1,
                        input.shape.width - w.kernel_w + 1, w.filters};
  FeatureMap out(out_shape);
  for (int r = 0; r < out_shape.height; ++r) {
    for (int c = 0; c < out_shape.width; ++c) {
      for (int f = 0; f < w.filters; ++f) {
        double acc = 0.0;
        for (int ch = 0; ch < w.in_channels; ++ch) {
          const BitVector& tap = w.tap(f, ch);
          for (int kr = 0; kr < w.kernel_h; ++kr) {
            for (int kc = 0; kc < w.kernel_w; ++kc) {
              const double wv =
                  tap.bit(std::size_t(kr) * w.kernel_w + kc) ? 1.0 : -1.0;
              acc += wv * input.at(r + kr, c + kc, ch);
            }
          }
        }
        out.at(r, c, f) = acc;
      }
    }
  }
  return out;
}

FeatureMap sign_map(const FeatureMap& input) {
  FeatureMap out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    out.data[i] = sign_bit(input.data[i]) ? 1.0 : -1.0;
  return out;
}

std::vector<double> flatten_planar(const FeatureMap& map) {
  // Channel-planar row-major, mirroring BinaryFeatureMap::flatten.
  std::vector<double> out;
  out.reserve(map.data.size());
  for (int ch = 0; ch < map.shape.channels; ++ch)
    for (int r = 0; r < map.shape.height; ++r)
      for (int c = 0; c < map.shape.width; ++c) out.push_back(map.at(r, c, ch));
  return out;
}

enum class Route { Packed, Reference };

InferResult run_network(Route route, const NetworkSpec& spec,
                        const WeightBundle& weights, const FeatureMap& image,
                        InferTrace* trace) {
  ensure_valid(spec);
  validate_bundle(weights, spec);
  check_image(spec, image);

  BinaryFeatureMap bin;    // packed route state after each activation
  FeatureMap real;         // reference route state (+-1 values after activation)
  std::vector<double> scores;

  const std::size_t n = spec.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& layer = spec.layers[i];
    const LayerWeights& lw = weights.layers[i];
    switch (layer.kind) {
      case LayerKind::ConvFirst:
      case LayerKind::ConvBinary: {
        FeatureMap pre;
        if (layer.kind == LayerKind::ConvFirst)
          pre = route == Route::Packed ? conv_first_prebias(image, *lw.conv)
                                       : conv_real_prebias(image, *lw.conv);
        else
          pre = route == Route::Packed ? conv_binary_prebias(bin, *lw.conv)
                                       : conv_real_prebias(real, *lw.conv);
        if (trace) trace->layers.push_back({i, pre.data});
        FeatureMap m = add_bias(std::move(pre), lw.bias);
        if (i + 1 < n && spec.layers[i + 1].kind == LayerKind::MaxPool2x2) {
          m = maxpool2x2(m);
          ++i;  // the pool layer is fused into this block
        }
        if (layer.has_batchnorm) m = batchnorm_affine(m, *lw.norm);
        if (!layer.has_activation)
          throw std::invalid_argument(
              "conv layer without activation is not executable");
        if (route == Route::Packed)
          bin = binarize(m);
        else
          real = sign_map(m);
        break;
      }
      case LayerKind::MaxPool2x2:
        throw std::invalid_argument(
            "maxpool layer must directly follow a conv layer");
      case LayerKind::Dense: {
        const DenseWeights& dw = *lw.dense;
        std::vector<std::int64_t> acc;
        if (route == Route::Packed) {
          acc = dense_prebias(bin.flatten(), dw);
        } else {
          const std::vector<double> flat = flatten_planar(real);
          if (static_cast<int>(flat.size()) != dw.inputs)
            throw std::invalid_argument("dense: input length mismatch");
          acc.resize(dw.neurons);
          for (int j = 0; j < dw.neurons; ++j) {
            double sum = 0.0;
            for (int k = 0; k < dw.inputs; ++k)
              sum += (dw.rows[j].bit(k) ? 1.0 : -1.0) * flat[k];
            acc[j] = std::int64_t(sum);
          }
        }
        if (trace)
          trace->layers.push_back(
              {i, std::vector<double>(acc.begin(), acc.end())});
        std::vector<double> s = dense_postprocess(
            acc, lw.bias, lw.norm ? &*lw.norm : nullptr);
        if (layer.has_activation) {
          if (i + 1 == n)
            throw std::invalid_argument(
                "final dense layer must not carry an activation");
          const int out_c = layer.out_shape.channels;
          if (route == Route::Packed) {
            bin = BinaryFeatureMap(Shape{1, 1, out_c});
            for (int j = 0; j < out_c; ++j)
              if (sign_bit(s[j])) bin.channels[j].set_bit(0, true);
          } else {
            real = FeatureMap(Shape{1, 1, out_c});
            for (int j = 0; j < out_c; ++j)
              real.at(0, 0, j) = sign_bit(s[j]) ? 1.0 : -1.0;
          }
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
  InferResult result;
  result.argmax = argmax_index(scores);
  result.scores = std::move(scores);
  return result;
}

}  // namespace

InferResult infer(const NetworkSpec& spec, const WeightBundle& weights,
                  const FeatureMap& image, InferTrace* trace) {
  return run_network(Route::Packed, spec, weights, image, trace);
}

InferResult infer_reference(const NetworkSpec& spec,
                            const WeightBundle& weights,
                            const FeatureMap& image, InferTrace* trace) {
  return run_network(Route::Reference, spec, weights, image, trace);
}

}  // namespace xnorforge
