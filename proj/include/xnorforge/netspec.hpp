#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace xnorforge {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::int64_t flat() const {
    return std::int64_t{height} * width * channels;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

enum class LayerKind { ConvFirst, ConvBinary, MaxPool2x2, Dense };

const char* to_string(LayerKind k);

struct Kernel {
  int height = 0;
  int width = 0;
  int filters = 0;
  friend bool operator==(const Kernel&, const Kernel&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::ConvBinary;
  Shape in_shape;
  Shape out_shape;
  std::optional<Kernel> kernel;  // conv layers only
  bool has_batchnorm = false;
  bool has_activation = false;

  bool is_conv() const {
    return kind == LayerKind::ConvFirst || kind == LayerKind::ConvBinary;
  }
  /// Taps of one output element: k_h*k_w*in_c for conv, flat input for dense.
  std::int64_t dot_length() const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class InputRange { SymmetricUnit, UnitInterval };  // [-1,1] or [0,1]

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  InputRange input_range = InputRange::SymmetricUnit;
  int num_classes = 0;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Output shape of `layer` applied to `in_shape`.  Throws std::invalid_argument
/// on shape mismatch, odd spatial dims before a maxpool, or a kernel larger
/// than its input.
Shape layer_output_shape(const LayerSpec& layer, const Shape& in_shape);

struct LayerStats {
  std::int64_t flat_in = 0;
  std::int64_t flat_out = 0;
  std::int64_t binary_ops = 0;  // XNOR-accumulate (or add/sub) ops of the layer
};

struct ValidationIssue {
  std::size_t layer_index = 0;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  std::vector<LayerStats> stats;  // valid entries only when issues is empty

  bool ok() const { return issues.empty(); }
};

/// Per-layer shape arithmetic and chaining only; what the timing models
/// need.  validate_network adds the classifier head rules on top.
ValidationReport validate_layers(const NetworkSpec& spec);

ValidationReport validate_network(const NetworkSpec& spec);

/// validate_layers that throws std::invalid_argument listing every issue.
void ensure_valid_layers(const NetworkSpec& spec);

/// validate_network that throws std::invalid_argument listing every issue.
void ensure_valid(const NetworkSpec& spec);

/// Stable per-layer display names: Conv-1, Max-1, Conv-2, ..., FC-1.
/// These are the keys of the folding-config JSON format.
std::string layer_name(const NetworkSpec& spec, std::size_t index);

/// 6-layer architecture run by the custom streaming accelerator model.
NetworkSpec builtin_custom();

/// Fully convolutional variant whose last conv output is 1x1, as the folded
/// dataflow flow requires.
NetworkSpec builtin_finn();

/// Resolves "builtin:custom" / "builtin:finn"; anything else is a file path
/// to a NetworkSpec JSON document.
NetworkSpec load_network(const std::string& name_or_path);

void to_json(nlohmann::json& j, const NetworkSpec& spec);
void from_json(const nlohmann::json& j, NetworkSpec& spec);

}  // namespace xnorforge
