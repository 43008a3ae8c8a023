#include "xnorforge/modelio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

namespace xnorforge {

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt-sized chunks; feed large spans piecewise.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (key + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr char kMagic[8] = {'X', 'N', 'O', 'R', 'N', 'E', 'T', '1'};
constexpr std::uint16_t kVersion = 1;

std::uint8_t kind_tag(LayerKind k) {
  switch (k) {
    case LayerKind::ConvFirst: return 0;
    case LayerKind::ConvBinary: return 1;
    case LayerKind::MaxPool2x2: return 2;
    case LayerKind::Dense: return 3;
  }
  throw std::invalid_argument("unknown layer kind");
}

struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct ByteReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size())
      throw BundleError(BundleError::Kind::Truncated,
                        "bundle stream truncated");
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= std::uint16_t(bytes[pos++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

struct LayerDims {
  LayerKind kind;
  // conv
  Shape in;
  Kernel kernel;
  // dense
  std::int64_t inputs = 0;
  int outputs = 0;
};

LayerDims dims_of(const LayerSpec& layer) {
  LayerDims d{};
  d.kind = layer.kind;
  d.in = layer.in_shape;
  if (layer.is_conv()) d.kernel = *layer.kernel;
  if (layer.kind == LayerKind::Dense) {
    d.inputs = layer.in_shape.flat();
    d.outputs = layer.out_shape.channels;
  }
  return d;
}

/// Concatenates the per-(filter, channel) taps (or per-neuron rows) into the
/// single (filter, channel, row, col) bit stream of the container.
BitVector concat_weights(const std::vector<BitVector>& parts) {
  BitVector all;
  for (const BitVector& p : parts) all.append(p);
  return all;
}

void write_words(ByteWriter& w, const BitVector& bits) {
  for (std::uint64_t word : bits.words()) w.u64(word);
}

BitVector read_words(ByteReader& r, std::size_t nbits) {
  BitVector out(nbits);
  const std::size_t nwords = (nbits + 63) / 64;
  for (std::size_t i = 0; i < nwords; ++i) {
    const std::uint64_t word = r.u64();
    for (std::size_t b = 0; b < 64; ++b) {
      const std::size_t idx = i * 64 + b;
      if (idx >= nbits) {
        if ((word >> b) & 1u)
          throw BundleError(BundleError::Kind::Checksum,
                            "non-canonical weight words (tail bits set)");
        continue;
      }
      if ((word >> b) & 1u) out.set_bit(idx, true);
    }
  }
  return out;
}

std::vector<BitVector> split_bits(const BitVector& all, std::size_t count,
                                  std::size_t each) {
  std::vector<BitVector> parts(count, BitVector(each));
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t i = 0; i < each; ++i)
      if (all.bit(p * each + i)) parts[p].set_bit(i, true);
  return parts;
}

void spec_mismatch(std::size_t layer, const std::string& what) {
  throw BundleError(BundleError::Kind::SpecMismatch,
                    "layer " + std::to_string(layer) +
                        ": bundle does not match spec (" + what + ")");
}

}  // namespace

void validate_bundle(const WeightBundle& bundle, const NetworkSpec& spec) {
  if (bundle.layers.size() != spec.layers.size())
    throw std::invalid_argument(
        "bundle has " + std::to_string(bundle.layers.size()) +
        " layers, spec has " + std::to_string(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const LayerWeights& lw = bundle.layers[i];
    const std::string at = "layer " + std::to_string(i) + ": ";
    if (layer.is_conv()) {
      if (!lw.conv || lw.dense)
        throw std::invalid_argument(at + "expected conv weights");
      const ConvWeights& w = *lw.conv;
      const Kernel& k = *layer.kernel;
      if (w.kernel_h != k.height || w.kernel_w != k.width ||
          w.filters != k.filters || w.in_channels != layer.in_shape.channels)
        throw std::invalid_argument(at + "conv weight geometry mismatch");
      if (w.taps.size() != std::size_t(w.filters) * w.in_channels)
        throw std::invalid_argument(at + "conv tap count mismatch");
      for (const BitVector& t : w.taps)
        if (t.size() != std::size_t(k.height) * k.width)
          throw std::invalid_argument(at + "conv tap length mismatch");
      if (lw.bias.size() != std::size_t(k.filters))
        throw std::invalid_argument(at + "bias count mismatch");
    } else if (layer.kind == LayerKind::Dense) {
      if (!lw.dense || lw.conv)
        throw std::invalid_argument(at + "expected dense weights");
      const DenseWeights& w = *lw.dense;
      if (w.inputs != layer.in_shape.flat() ||
          w.neurons != layer.out_shape.channels)
        throw std::invalid_argument(at + "dense weight geometry mismatch");
      if (w.rows.size() != std::size_t(w.neurons))
        throw std::invalid_argument(at + "dense row count mismatch");
      for (const BitVector& r : w.rows)
        if (r.size() != std::size_t(w.inputs))
          throw std::invalid_argument(at + "dense row length mismatch");
      if (lw.bias.size() != std::size_t(w.neurons))
        throw std::invalid_argument(at + "bias count mismatch");
    } else {
      if (lw.conv || lw.dense || !lw.bias.empty() || lw.norm)
        throw std::invalid_argument(at + "maxpool layer must carry no data");
      continue;
    }
    const int out_c = layer.out_shape.channels;
    if (layer.has_batchnorm) {
      if (!lw.norm || lw.norm->channels() != std::size_t(out_c))
        throw std::invalid_argument(at + "norm channel count mismatch");
      if (lw.norm->b.size() != lw.norm->a.size())
        throw std::invalid_argument(at + "norm a/b size mismatch");
      for (double a : lw.norm->a)
        if (a == 0.0)
          throw std::invalid_argument(at + "norm scale must be nonzero");
    } else if (lw.norm) {
      throw std::invalid_argument(at + "spec has no batchnorm here");
    }
  }
}

std::vector<std::uint8_t> save_bundle(const WeightBundle& bundle,
                                      const NetworkSpec& spec) {
  ensure_valid(spec);
  validate_bundle(bundle, spec);
  ByteWriter w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 8);
  w.u16(kVersion);
  w.u16(std::uint16_t(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const LayerWeights& lw = bundle.layers[i];
    w.u8(kind_tag(layer.kind));
    if (layer.is_conv()) {
      const ConvWeights& cw = *lw.conv;
      w.u32(std::uint32_t(layer.in_shape.height));
      w.u32(std::uint32_t(layer.in_shape.width));
      w.u32(std::uint32_t(layer.in_shape.channels));
      w.u32(std::uint32_t(cw.kernel_h));
      w.u32(std::uint32_t(cw.kernel_w));
      w.u32(std::uint32_t(cw.filters));
      w.u8(lw.norm ? 1 : 0);
      write_words(w, concat_weights(cw.taps));
      for (double b : lw.bias) w.f64(b);
      if (lw.norm) {
        for (double a : lw.norm->a) w.f64(a);
        for (double b : lw.norm->b) w.f64(b);
      }
    } else if (layer.kind == LayerKind::MaxPool2x2) {
      w.u32(std::uint32_t(layer.in_shape.height));
      w.u32(std::uint32_t(layer.in_shape.width));
      w.u32(std::uint32_t(layer.in_shape.channels));
    } else {
      const DenseWeights& dw = *lw.dense;
      w.u32(std::uint32_t(dw.inputs));
      w.u32(std::uint32_t(dw.neurons));
      w.u8(lw.norm ? 1 : 0);
      write_words(w, concat_weights(dw.rows));
      for (double b : lw.bias) w.f64(b);
      if (lw.norm) {
        for (double a : lw.norm->a) w.f64(a);
        for (double b : lw.norm->b) w.f64(b);
      }
    }
  }
  w.u32(crc32_bytes(w.bytes));
  return std::move(w.bytes);
}

WeightBundle load_bundle(std::span<const std::uint8_t> bytes,
                         const NetworkSpec& spec) {
  ensure_valid(spec);
  if (bytes.size() < 8 + 2 + 2 + 4)
    throw BundleError(BundleError::Kind::Truncated, "bundle stream too short");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw BundleError(BundleError::Kind::BadMagic, "bad bundle magic");
  const std::uint32_t stored_crc =
      std::uint32_t(bytes[bytes.size() - 4]) |
      std::uint32_t(bytes[bytes.size() - 3]) << 8 |
      std::uint32_t(bytes[bytes.size() - 2]) << 16 |
      std::uint32_t(bytes[bytes.size() - 1]) << 24;
  if (crc32_bytes(bytes.first(bytes.size() - 4)) != stored_crc)
    throw BundleError(BundleError::Kind::Checksum, "bundle checksum mismatch");

  ByteReader r{bytes.first(bytes.size() - 4), 8};
  if (r.u16() != kVersion)
    throw BundleError(BundleError::Kind::BadVersion,
                      "unsupported bundle version");
  const std::uint16_t count = r.u16();
  if (count != spec.layers.size())
    spec_mismatch(0, "layer count " + std::to_string(count) + " != " +
                         std::to_string(spec.layers.size()));

  WeightBundle bundle;
  bundle.spec_name = spec.name;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    LayerWeights lw;
    if (r.u8() != kind_tag(layer.kind)) spec_mismatch(i, "layer kind");
    if (layer.is_conv()) {
      const Kernel& k = *layer.kernel;
      const Shape& in = layer.in_shape;
      if (r.u32() != std::uint32_t(in.height) ||
          r.u32() != std::uint32_t(in.width) ||
          r.u32() != std::uint32_t(in.channels))
        spec_mismatch(i, "conv input shape");
      if (r.u32() != std::uint32_t(k.height) ||
          r.u32() != std::uint32_t(k.width) ||
          r.u32() != std::uint32_t(k.filters))
        spec_mismatch(i, "conv kernel");
      const bool has_norm = r.u8() != 0;
      if (has_norm != layer.has_batchnorm) spec_mismatch(i, "norm presence");
      const std::size_t klen = std::size_t(k.height) * k.width;
      const std::size_t nbits = klen * in.channels * k.filters;
      ConvWeights cw;
      cw.kernel_h = k.height;
      cw.kernel_w = k.width;
      cw.in_channels = in.channels;
      cw.filters = k.filters;
      cw.taps = split_bits(read_words(r, nbits),
                           std::size_t(k.filters) * in.channels, klen);
      lw.conv = std::move(cw);
      lw.bias.resize(k.filters);
      for (double& b : lw.bias) b = r.f64();
      if (has_norm) {
        AffineNorm norm;
        norm.a.resize(k.filters);
        norm.b.resize(k.filters);
        for (double& a : norm.a) a = r.f64();
        for (double& b : norm.b) b = r.f64();
        lw.norm = std::move(norm);
      }
    } else if (layer.kind == LayerKind::MaxPool2x2) {
      if (r.u32() != std::uint32_t(layer.in_shape.height) ||
          r.u32() != std::uint32_t(layer.in_shape.width) ||
          r.u32() != std::uint32_t(layer.in_shape.channels))
        spec_mismatch(i, "maxpool input shape");
    } else {
      const auto inputs = std::int64_t(r.u32());
      const auto neurons = int(r.u32());
      if (inputs != layer.in_shape.flat() ||
          neurons != layer.out_shape.channels)
        spec_mismatch(i, "dense geometry");
      const bool has_norm = r.u8() != 0;
      if (has_norm != layer.has_batchnorm) spec_mismatch(i, "norm presence");
      DenseWeights dw;
      dw.inputs = int(inputs);
      dw.neurons = neurons;
      dw.rows = split_bits(read_words(r, std::size_t(inputs) * neurons),
                           std::size_t(neurons), std::size_t(inputs));
      lw.dense = std::move(dw);
      lw.bias.resize(neurons);
      for (double& b : lw.bias) b = r.f64();
      if (has_norm) {
        AffineNorm norm;
        norm.a.resize(neurons);
        norm.b.resize(neurons);
        for (double& a : norm.a) a = r.f64();
        for (double& b : norm.b) b = r.f64();
        lw.norm = std::move(norm);
      }
    }
    bundle.layers.push_back(std::move(lw));
  }
  if (r.pos != r.bytes.size())
    throw BundleError(BundleError::Kind::Truncated,
                      "trailing bytes after last layer record");
  validate_bundle(bundle, spec);
  return bundle;
}

void save_bundle_file(const std::filesystem::path& path,
                      const WeightBundle& bundle, const NetworkSpec& spec) {
  const std::vector<std::uint8_t> bytes = save_bundle(bundle, spec);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::ios_base::failure("cannot write \"" + path.string() + "\"");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw std::ios_base::failure("short write to " + path.string());
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::ios_base::failure("cannot open \"" + path.string() + "\"");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

WeightBundle load_bundle_file(const std::filesystem::path& path,
                              const NetworkSpec& spec) {
  return load_bundle(read_file(path), spec);
}

WeightBundle load_bundle_any(const std::filesystem::path& path,
                             const NetworkSpec& spec) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kMagic, 8) == 0)
    return load_bundle(bytes, spec);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("\"" + path.string() +
                                "\" is neither a bundle container nor JSON: " +
                                e.what());
  }
  return import_bundle_json(doc, spec);
}

namespace {

std::vector<double> doubles_from(const nlohmann::json& j,
                                 const std::string& what) {
  if (!j.is_array())
    throw std::invalid_argument(what + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const nlohmann::json& v : j) out.push_back(v.get<double>());
  return out;
}

AffineNorm norm_from_json(const nlohmann::json& j, std::size_t layer_index) {
  const std::string at = "layer " + std::to_string(layer_index) + " norm: ";
  if (j.contains("a") && j.contains("b")) {
    AffineNorm norm;
    norm.a = doubles_from(j.at("a"), at + "a");
    norm.b = doubles_from(j.at("b"), at + "b");
    return norm;
  }
  if (j.contains("gamma")) {
    BatchNormParams p;
    p.gamma = doubles_from(j.at("gamma"), at + "gamma");
    p.beta = doubles_from(j.at("beta"), at + "beta");
    p.mu = doubles_from(j.at("mu"), at + "mu");
    if (j.contains("variance")) {
      return fold_batchnorm(BatchNormParams::from_variance(
          p.gamma, p.beta, p.mu,
          doubles_from(j.at("variance"), at + "variance"),
          j.value("epsilon", 1e-5)));
    }
    p.sigma = doubles_from(j.at("sigma"), at + "sigma");
    return fold_batchnorm(p);
  }
  throw std::invalid_argument(at + "expected {a,b} or {gamma,beta,mu,...}");
}

int pm_one(const nlohmann::json& v, const std::string& at) {
  const int x = v.get<int>();
  if (x != 1 && x != -1)
    throw std::invalid_argument(at + ": weight must be +1 or -1");
  return x;
}

}  // namespace

WeightBundle import_bundle_json(const nlohmann::json& doc,
                                const NetworkSpec& spec) {
  ensure_valid(spec);
  if (doc.value("format", "xnor-bundle") != "xnor-bundle")
    throw std::invalid_argument("not a xnor-bundle document");
  if (doc.value("version", 1) != 1)
    throw std::invalid_argument("unsupported xnor-bundle version");
  const nlohmann::json& layers = doc.at("layers");
  if (!layers.is_array() || layers.size() != spec.layers.size())
    throw std::invalid_argument("bundle document must list " +
                                std::to_string(spec.layers.size()) +
                                " layers");
  WeightBundle bundle;
  bundle.spec_name = doc.value("name", spec.name);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const nlohmann::json& l = layers[i];
    const std::string at = "layer " + std::to_string(i);
    LayerWeights lw;
    if (layer.kind == LayerKind::MaxPool2x2) {
      if (!l.is_null() && !(l.is_object() && l.empty()))
        throw std::invalid_argument(at + ": maxpool entry must be empty");
      bundle.layers.push_back(std::move(lw));
      continue;
    }
    if (layer.is_conv()) {
      const Kernel& k = *layer.kernel;
      const int in_c = layer.in_shape.channels;
      const nlohmann::json& ws = l.at("weights");
      if (!ws.is_array() || int(ws.size()) != k.filters)
        throw std::invalid_argument(at + ": expected " +
                                    std::to_string(k.filters) + " filters");
      ConvWeights cw;
      cw.kernel_h = k.height;
      cw.kernel_w = k.width;
      cw.in_channels = in_c;
      cw.filters = k.filters;
      for (int f = 0; f < k.filters; ++f) {
        const nlohmann::json& per_ch = ws[f];
        if (!per_ch.is_array() || int(per_ch.size()) != in_c)
          throw std::invalid_argument(at + ": filter " + std::to_string(f) +
                                      " must list " + std::to_string(in_c) +
                                      " channels");
        for (int ch = 0; ch < in_c; ++ch) {
          const nlohmann::json& rows = per_ch[ch];
          if (!rows.is_array() || int(rows.size()) != k.height)
            throw std::invalid_argument(at + ": bad kernel row count");
          BitVector tap(std::size_t(k.height) * k.width);
          for (int kr = 0; kr < k.height; ++kr) {
            const nlohmann::json& row = rows[kr];
            if (!row.is_array() || int(row.size()) != k.width)
              throw std::invalid_argument(at + ": bad kernel col count");
            for (int kc = 0; kc < k.width; ++kc)
              if (pm_one(row[kc], at) == 1)
                tap.set_bit(std::size_t(kr) * k.width + kc, true);
          }
          cw.taps.push_back(std::move(tap));
        }
      }
      lw.conv = std::move(cw);
    } else {
      const auto inputs = int(layer.in_shape.flat());
      const int neurons = layer.out_shape.channels;
      const nlohmann::json& ws = l.at("weights");
      if (!ws.is_array() || int(ws.size()) != neurons)
        throw std::invalid_argument(at + ": expected " +
                                    std::to_string(neurons) + " neurons");
      DenseWeights dw;
      dw.inputs = inputs;
      dw.neurons = neurons;
      for (int j = 0; j < neurons; ++j) {
        const nlohmann::json& row = ws[j];
        if (!row.is_array() || int(row.size()) != inputs)
          throw std::invalid_argument(at + ": neuron " + std::to_string(j) +
                                      " must list " + std::to_string(inputs) +
                                      " weights");
        BitVector bits{std::size_t(inputs)};
        for (int kk = 0; kk < inputs; ++kk)
          if (pm_one(row[kk], at) == 1) bits.set_bit(std::size_t(kk), true);
        dw.rows.push_back(std::move(bits));
      }
      lw.dense = std::move(dw);
    }
    lw.bias = doubles_from(l.at("bias"), at + " bias");
    if (l.contains("norm")) lw.norm = norm_from_json(l.at("norm"), i);
    bundle.layers.push_back(std::move(lw));
  }
  validate_bundle(bundle, spec);
  return bundle;
}

WeightBundle random_bundle(const NetworkSpec& spec, std::uint64_t seed) {
  ensure_valid(spec);
  DetRng rng(seed);
  // Draw order per layer: weight words (64 bits per engine draw, tail
  // masked), then biases, then norm scale (magnitude, sign) and offset per
  // channel.
  const auto draw_bits = [&rng](std::size_t nbits) {
    BitVector v(nbits);
    for (std::size_t i = 0; i < nbits; i += 64) {
      std::uint64_t word = rng.bits();
      const std::size_t take = std::min<std::size_t>(64, nbits - i);
      if (take < 64) word &= (std::uint64_t{1} << take) - 1;
      for (std::size_t b = 0; b < take; ++b)
        if ((word >> b) & 1u) v.set_bit(i + b, true);
    }
    return v;
  };

  WeightBundle bundle;
  bundle.spec_name = spec.name;
  bundle.seed = seed;
  for (const LayerSpec& layer : spec.layers) {
    LayerWeights lw;
    int out_c = 0;
    if (layer.is_conv()) {
      const Kernel& k = *layer.kernel;
      ConvWeights cw;
      cw.kernel_h = k.height;
      cw.kernel_w = k.width;
      cw.in_channels = layer.in_shape.channels;
      cw.filters = k.filters;
      const std::size_t klen = std::size_t(k.height) * k.width;
      for (int f = 0; f < k.filters; ++f)
        for (int ch = 0; ch < cw.in_channels; ++ch)
          cw.taps.push_back(draw_bits(klen));
      lw.conv = std::move(cw);
      out_c = k.filters;
    } else if (layer.kind == LayerKind::Dense) {
      DenseWeights dw;
      dw.inputs = int(layer.in_shape.flat());
      dw.neurons = layer.out_shape.channels;
      for (int j = 0; j < dw.neurons; ++j)
        dw.rows.push_back(draw_bits(std::size_t(dw.inputs)));
      lw.dense = std::move(dw);
      out_c = dw.neurons;
    } else {
      bundle.layers.push_back(std::move(lw));
      continue;
    }
    lw.bias.resize(out_c);
    for (double& b : lw.bias) b = rng.uniform(-1.0, 1.0);
    if (layer.has_batchnorm) {
      AffineNorm norm;
      norm.a.resize(out_c);
      norm.b.resize(out_c);
      for (double& a : norm.a) {
        const double mag = rng.uniform(0.25, 4.0);
        a = rng.coin() ? mag : -mag;
      }
      for (double& b : norm.b) b = rng.uniform(-8.0, 8.0);
      lw.norm = std::move(norm);
    }
    bundle.layers.push_back(std::move(lw));
  }
  return bundle;
}

}  // namespace xnorforge
