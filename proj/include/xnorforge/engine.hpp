#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xnorforge/bitcore.hpp"
#include "xnorforge/netspec.hpp"

namespace xnorforge {

struct WeightBundle;  // modelio.hpp

/// Real-valued feature map, (row, col, channel) interleaved.
struct FeatureMap {
  Shape shape;
  std::vector<double> data;

  FeatureMap() = default;
  explicit FeatureMap(Shape s) : shape(s), data(s.flat(), 0.0) {}

  double at(int r, int c, int ch) const {
    return data[(std::size_t(r) * shape.width + c) * shape.channels + ch];
  }
  double& at(int r, int c, int ch) {
    return data[(std::size_t(r) * shape.width + c) * shape.channels + ch];
  }
};

/// Binarized feature map: one canonical BitVector of H*W row-major bits per
/// channel (channel-planar layout).
struct BinaryFeatureMap {
  Shape shape;
  std::vector<BitVector> channels;

  BinaryFeatureMap() = default;
  explicit BinaryFeatureMap(Shape s)
      : shape(s),
        channels(s.channels, BitVector(std::size_t(s.height) * s.width)) {}

  bool bit(int r, int c, int ch) const {
    return channels[ch].bit(std::size_t(r) * shape.width + c);
  }
  int sign(int r, int c, int ch) const { return bit(r, c, ch) ? +1 : -1; }

  /// Channel-planar row-major flattening (channel outermost) — the serial
  /// read order of the dense stage.
  BitVector flatten() const;
};

/// Raw per-channel batch-norm statistics.  `sigma` is the already-stabilized
/// standard deviation (any epsilon folded in by the exporter); `epsilon`
/// records the value used.  from_variance() builds params from raw variances.
struct BatchNormParams {
  std::vector<double> gamma, beta, mu, sigma;
  double epsilon = 1e-5;

  static BatchNormParams from_variance(std::vector<double> gamma,
                                       std::vector<double> beta,
                                       std::vector<double> mu,
                                       std::span<const double> variance,
                                       double epsilon = 1e-5);
};

/// Batch norm folded to per-channel out = a*x + b.
struct AffineNorm {
  std::vector<double> a, b;

  std::size_t channels() const { return a.size(); }
  friend bool operator==(const AffineNorm&, const AffineNorm&) = default;
};

/// The one affine expression shared by batchnorm_affine and the integer
/// threshold search, so both round identically.
inline double affine_eval(double a, double x, double b) { return a * x + b; }

/// Deterministic sign rule: >= 0 maps to +1 (ties at exactly 0 go high).
inline bool sign_bit(double x) { return x >= 0.0; }

/// +-1 conv kernels: taps[filter * in_channels + channel] holds the k_h*k_w
/// window bits row-major.
struct ConvWeights {
  int kernel_h = 0, kernel_w = 0;
  int in_channels = 0, filters = 0;
  std::vector<BitVector> taps;

  const BitVector& tap(int filter, int channel) const {
    return taps[std::size_t(filter) * in_channels + channel];
  }
};

/// +-1 dense weights: rows[neuron] has one bit per flattened input.
struct DenseWeights {
  int inputs = 0, neurons = 0;
  std::vector<BitVector> rows;
};

/// First-layer convolution over a real-valued input: the +-1 weights select
/// add or subtract of each pixel.  Bias is added after channel accumulation.
FeatureMap conv_first(const FeatureMap& input, const ConvWeights& weights,
                      std::span<const double> bias);

/// Binary convolution via the XNOR-popcount identity, exact integer
/// accumulators; bias added afterwards.
FeatureMap conv_binary(const BinaryFeatureMap& input,
                       const ConvWeights& weights,
                       std::span<const double> bias);

/// Max over disjoint 2x2 blocks, per channel.  Requires even spatial dims.
FeatureMap maxpool2x2(const FeatureMap& input);

/// Collapses batch norm into out = a*x + b with a = gamma/sigma and
/// b = -gamma*mu/sigma + beta.
AffineNorm fold_batchnorm(const BatchNormParams& params);

FeatureMap batchnorm_affine(const FeatureMap& input, const AffineNorm& norm);

BinaryFeatureMap binarize(const FeatureMap& input);

/// Smallest (a > 0) or largest (a < 0) integer x with a*x + b >= 0, agreeing
/// with affine_eval + sign_bit at every integer.
std::int64_t integer_threshold(double a, double b);

/// Threshold form of batchnorm + binarize for integer pre-activations;
/// equals binarize(batchnorm_affine(x)) exactly.
BinaryFeatureMap threshold_activation(const FeatureMap& preact,
                                      const AffineNorm& norm);

/// Per-neuron xnor_dot + bias, then the optional affine norm.
std::vector<double> dense_binary(const BitVector& input,
                                 const DenseWeights& weights,
                                 std::span<const double> bias,
                                 const AffineNorm* norm = nullptr);
std::vector<double> dense_binary(const BinaryFeatureMap& input,
                                 const DenseWeights& weights,
                                 std::span<const double> bias,
                                 const AffineNorm* norm = nullptr);

/// Pre-bias accumulators of every conv/dense layer, in layer order.  Conv
/// entries are (row, col, filter) interleaved; dense entries are per neuron.
struct LayerTrace {
  std::size_t layer_index = 0;
  std::vector<double> pre_bias;
};

struct InferTrace {
  std::vector<LayerTrace> layers;
};

struct InferResult {
  std::vector<double> scores;
  int argmax = 0;
};

/// Packed inference over the full network.  Block order per conv layer is
/// conv -> (maxpool) -> batchnorm -> binarize; a maxpool layer is fused with
/// the conv layer immediately before it.
InferResult infer(const NetworkSpec& spec, const WeightBundle& weights,
                  const FeatureMap& image, InferTrace* trace = nullptr);

/// Same computation in plain real arithmetic (+-1 weights as doubles, sign
/// activation on real maps).  Pre-bias accumulators match infer exactly.
InferResult infer_reference(const NetworkSpec& spec,
                            const WeightBundle& weights,
                            const FeatureMap& image,
                            InferTrace* trace = nullptr);

}  // namespace xnorforge
