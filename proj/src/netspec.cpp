#include "xnorforge/netspec.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace xnorforge {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s.height << "x" << s.width << "x" << s.channels;
  return os.str();
}

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::ConvFirst: return "conv_first";
    case LayerKind::ConvBinary: return "conv_binary";
    case LayerKind::MaxPool2x2: return "maxpool2x2";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

static LayerKind kind_from_string(const std::string& s) {
  if (s == "conv_first") return LayerKind::ConvFirst;
  if (s == "conv_binary") return LayerKind::ConvBinary;
  if (s == "maxpool2x2") return LayerKind::MaxPool2x2;
  if (s == "dense") return LayerKind::Dense;
  throw std::invalid_argument("unknown layer kind \"" + s + "\"");
}

std::int64_t LayerSpec::dot_length() const {
  if (is_conv()) {
    if (!kernel) throw std::invalid_argument("conv layer without kernel");
    return std::int64_t{kernel->height} * kernel->width * in_shape.channels;
  }
  if (kind == LayerKind::Dense) return in_shape.flat();
  throw std::invalid_argument("layer kind has no dot product");
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& in_shape) {
  if (in_shape != layer.in_shape)
    throw std::invalid_argument("input shape " + to_string(in_shape) +
                                " does not match declared " +
                                to_string(layer.in_shape));
  if (in_shape.height < 1 || in_shape.width < 1 || in_shape.channels < 1)
    throw std::invalid_argument("non-positive input shape " +
                                to_string(in_shape));
  switch (layer.kind) {
    case LayerKind::ConvFirst:
    case LayerKind::ConvBinary: {
      if (!layer.kernel)
        throw std::invalid_argument("conv layer is missing its kernel");
      const Kernel& k = *layer.kernel;
      if (k.height < 1 || k.width < 1 || k.filters < 1)
        throw std::invalid_argument("non-positive kernel");
      if (k.height > in_shape.height || k.width > in_shape.width)
        throw std::invalid_argument("kernel " + std::to_string(k.height) + "x" +
                                    std::to_string(k.width) +
                                    " larger than input " + to_string(in_shape));
      // Valid (no-padding) convolution, stride 1.
      return {in_shape.height - k.height + 1, in_shape.width - k.width + 1,
              k.filters};
    }
    case LayerKind::MaxPool2x2: {
      if (in_shape.height % 2 != 0 || in_shape.width % 2 != 0)
        throw std::invalid_argument("maxpool2x2 input " + to_string(in_shape) +
                                    " has odd spatial dimensions");
      return {in_shape.height / 2, in_shape.width / 2, in_shape.channels};
    }
    case LayerKind::Dense: {
      if (layer.out_shape.height != 1 || layer.out_shape.width != 1 ||
          layer.out_shape.channels < 1)
        throw std::invalid_argument("dense output must be 1x1xN, got " +
                                    to_string(layer.out_shape));
      return layer.out_shape;
    }
  }
  throw std::invalid_argument("unsupported layer kind");
}

ValidationReport validate_layers(const NetworkSpec& spec) {
  ValidationReport report;
  auto issue = [&](std::size_t i, const std::string& msg) {
    report.issues.push_back({i, msg});
  };

  if (spec.layers.empty()) {
    issue(0, "network has no layers");
    return report;
  }

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (i > 0 && layer.kind == LayerKind::ConvFirst)
      issue(i, "conv_first is only valid as the first layer");
    if (!layer.is_conv() && layer.kernel)
      issue(i, "non-conv layer must not carry a kernel");
    if (i + 1 < spec.layers.size() &&
        layer.out_shape != spec.layers[i + 1].in_shape)
      issue(i + 1, "layer " + std::to_string(i + 1) + " expects input " +
                       to_string(spec.layers[i + 1].in_shape) +
                       " but layer " + std::to_string(i) + " produces " +
                       to_string(layer.out_shape));
    try {
      const Shape out = layer_output_shape(layer, layer.in_shape);
      if (out != layer.out_shape)
        issue(i, "declared output " + to_string(layer.out_shape) +
                     " does not match computed " + to_string(out));
    } catch (const std::invalid_argument& e) {
      issue(i, e.what());
    }
  }

  if (!report.ok()) return report;

  for (const LayerSpec& layer : spec.layers) {
    LayerStats st;
    st.flat_in = layer.in_shape.flat();
    st.flat_out = layer.out_shape.flat();
    if (layer.is_conv())
      st.binary_ops = layer.out_shape.flat() * layer.kernel->height *
                      layer.kernel->width * layer.in_shape.channels;
    else if (layer.kind == LayerKind::Dense)
      st.binary_ops = st.flat_in * layer.out_shape.channels;
    report.stats.push_back(st);
  }
  return report;
}

ValidationReport validate_network(const NetworkSpec& spec) {
  ValidationReport report = validate_layers(spec);
  if (spec.layers.empty()) return report;
  auto issue = [&](std::size_t i, const std::string& msg) {
    report.issues.push_back({i, msg});
  };
  if (spec.num_classes < 1) issue(0, "num_classes must be positive");
  if (spec.layers.front().kind != LayerKind::ConvFirst)
    issue(0, "first layer must be conv_first");
  const LayerSpec& last = spec.layers.back();
  if (last.kind != LayerKind::Dense)
    issue(spec.layers.size() - 1, "last layer must be dense");
  else if (last.out_shape.channels != spec.num_classes)
    issue(spec.layers.size() - 1,
          "final dense outputs " + std::to_string(last.out_shape.channels) +
              " classes, expected " + std::to_string(spec.num_classes));
  if (!report.ok()) report.stats.clear();
  return report;
}

namespace {

void throw_issues(const NetworkSpec& spec, const ValidationReport& report) {
  std::ostringstream os;
  os << "network \"" << spec.name << "\" is invalid:";
  for (const ValidationIssue& it : report.issues)
    os << "\n  layer " << it.layer_index << ": " << it.message;
  throw std::invalid_argument(os.str());
}

}  // namespace

void ensure_valid_layers(const NetworkSpec& spec) {
  const ValidationReport report = validate_layers(spec);
  if (!report.ok()) throw_issues(spec, report);
}

void ensure_valid(const NetworkSpec& spec) {
  const ValidationReport report = validate_network(spec);
  if (!report.ok()) throw_issues(spec, report);
}

std::string layer_name(const NetworkSpec& spec, std::size_t index) {
  if (index >= spec.layers.size())
    throw std::out_of_range("layer_name: index out of range");
  int conv = 0, pool = 0, dense = 0;
  std::string name;
  for (std::size_t i = 0; i <= index; ++i) {
    switch (spec.layers[i].kind) {
      case LayerKind::ConvFirst:
      case LayerKind::ConvBinary:
        name = "Conv-" + std::to_string(++conv);
        break;
      case LayerKind::MaxPool2x2:
        name = "Max-" + std::to_string(++pool);
        break;
      case LayerKind::Dense:
        name = "FC-" + std::to_string(++dense);
        break;
    }
  }
  return name;
}

static LayerSpec conv_layer(LayerKind kind, Shape in, int k, int filters) {
  LayerSpec layer;
  layer.kind = kind;
  layer.in_shape = in;
  layer.kernel = Kernel{k, k, filters};
  layer.out_shape = {in.height - k + 1, in.width - k + 1, filters};
  layer.has_batchnorm = true;
  layer.has_activation = true;
  return layer;
}

static LayerSpec pool_layer(Shape in) {
  LayerSpec layer;
  layer.kind = LayerKind::MaxPool2x2;
  layer.in_shape = in;
  layer.out_shape = {in.height / 2, in.width / 2, in.channels};
  return layer;
}

static LayerSpec dense_layer(Shape in, int out, bool activation) {
  LayerSpec layer;
  layer.kind = LayerKind::Dense;
  layer.in_shape = in;
  layer.out_shape = {1, 1, out};
  layer.has_batchnorm = true;
  layer.has_activation = activation;
  return layer;
}

NetworkSpec builtin_custom() {
  NetworkSpec spec;
  spec.name = "custom";
  spec.input_range = InputRange::SymmetricUnit;
  spec.num_classes = 43;
  spec.layers = {
      conv_layer(LayerKind::ConvFirst, {32, 32, 3}, 5, 64),
      pool_layer({28, 28, 64}),
      conv_layer(LayerKind::ConvBinary, {14, 14, 64}, 5, 128),
      pool_layer({10, 10, 128}),
      dense_layer({5, 5, 128}, 512, true),
      dense_layer({1, 1, 512}, 43, false),
  };
  return spec;
}

NetworkSpec builtin_finn() {
  NetworkSpec spec;
  spec.name = "finn";
  spec.input_range = InputRange::UnitInterval;
  spec.num_classes = 43;
  spec.layers = {
      conv_layer(LayerKind::ConvFirst, {32, 32, 3}, 5, 64),
      pool_layer({28, 28, 64}),
      conv_layer(LayerKind::ConvBinary, {14, 14, 64}, 5, 128),
      pool_layer({10, 10, 128}),
      // Last conv collapses the 5x5 map to 1x1 so the dense stage consumes a
      // plain 512-vector.
      conv_layer(LayerKind::ConvBinary, {5, 5, 128}, 5, 512),
      dense_layer({1, 1, 512}, 43, false),
  };
  return spec;
}

static const char* to_string(InputRange r) {
  return r == InputRange::SymmetricUnit ? "symmetric_unit" : "unit_interval";
}

static InputRange range_from_string(const std::string& s) {
  if (s == "symmetric_unit") return InputRange::SymmetricUnit;
  if (s == "unit_interval") return InputRange::UnitInterval;
  throw std::invalid_argument("unknown input_range \"" + s + "\"");
}

void to_json(nlohmann::json& j, const NetworkSpec& spec) {
  j = nlohmann::json{{"format", "xnor-netspec"},
                     {"version", 1},
                     {"name", spec.name},
                     {"input_range", to_string(spec.input_range)},
                     {"num_classes", spec.num_classes}};
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& layer : spec.layers) {
    nlohmann::json l{
        {"kind", to_string(layer.kind)},
        {"in_shape", {layer.in_shape.height, layer.in_shape.width,
                      layer.in_shape.channels}},
        {"out_shape", {layer.out_shape.height, layer.out_shape.width,
                       layer.out_shape.channels}},
        {"batchnorm", layer.has_batchnorm},
        {"activation", layer.has_activation}};
    if (layer.kernel)
      l["kernel"] = {layer.kernel->height, layer.kernel->width,
                     layer.kernel->filters};
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
}

static Shape shape_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument("shape must be a [h, w, c] array");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

void from_json(const nlohmann::json& j, NetworkSpec& spec) {
  if (j.contains("format") && j.at("format") != "xnor-netspec")
    throw std::invalid_argument("not a xnor-netspec document");
  if (j.contains("version") && j.at("version").get<int>() != 1)
    throw std::invalid_argument("unsupported xnor-netspec version");
  spec = {};
  spec.name = j.value("name", "");
  spec.input_range = range_from_string(j.at("input_range").get<std::string>());
  spec.num_classes = j.at("num_classes").get<int>();
  for (const nlohmann::json& l : j.at("layers")) {
    LayerSpec layer;
    layer.kind = kind_from_string(l.at("kind").get<std::string>());
    layer.in_shape = shape_from_json(l.at("in_shape"));
    layer.out_shape = shape_from_json(l.at("out_shape"));
    if (l.contains("kernel")) {
      const nlohmann::json& k = l.at("kernel");
      if (!k.is_array() || k.size() != 3)
        throw std::invalid_argument("kernel must be a [kh, kw, filters] array");
      layer.kernel = Kernel{k[0].get<int>(), k[1].get<int>(), k[2].get<int>()};
    }
    layer.has_batchnorm = l.value("batchnorm", false);
    layer.has_activation = l.value("activation", false);
    spec.layers.push_back(layer);
  }
}

NetworkSpec load_network(const std::string& name_or_path) {
  if (name_or_path == "builtin:custom") return builtin_custom();
  if (name_or_path == "builtin:finn") return builtin_finn();
  std::ifstream in(name_or_path);
  if (!in)
    throw std::ios_base::failure("cannot open network spec \"" + name_or_path +
                                 "\"");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("spec \"" + name_or_path +
                                "\": " + e.what());
  }
  NetworkSpec spec = j.get<NetworkSpec>();
  ensure_valid(spec);
  return spec;
}

}  // namespace xnorforge
