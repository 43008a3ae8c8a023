#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xnorforge/engine.hpp"
#include "xnorforge/netspec.hpp"

namespace xnorforge {

/// Parameters of one layer.  Exactly one of conv/dense is set for conv/dense
/// layers; maxpool entries are empty.
struct LayerWeights {
  std::optional<ConvWeights> conv;
  std::optional<DenseWeights> dense;
  std::vector<double> bias;       // per filter / neuron
  std::optional<AffineNorm> norm; // folded batch norm
};

struct WeightBundle {
  std::string spec_name;
  std::optional<std::uint64_t> seed;  // set for synthetic bundles
  std::vector<LayerWeights> layers;
};

class BundleError : public std::runtime_error {
public:
  enum class Kind { BadMagic, BadVersion, Truncated, Checksum, SpecMismatch };

  BundleError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

/// Structural check of a bundle against a spec: layer kinds, weight and bias
/// counts, norm presence and channel counts.  Throws std::invalid_argument.
void validate_bundle(const WeightBundle& bundle, const NetworkSpec& spec);

/// Serializes to the XNORNET1 container: magic, version u16, layer count u16,
/// per-layer records (kind u8, u32 dims, weight bits as 64-bit LE words
/// LSB-first in (filter, channel, row, col) order, binary64 LE biases and
/// norm constants), then a trailing CRC-32 of all preceding bytes.
std::vector<std::uint8_t> save_bundle(const WeightBundle& bundle,
                                      const NetworkSpec& spec);
WeightBundle load_bundle(std::span<const std::uint8_t> bytes,
                         const NetworkSpec& spec);

void save_bundle_file(const std::filesystem::path& path,
                      const WeightBundle& bundle, const NetworkSpec& spec);
WeightBundle load_bundle_file(const std::filesystem::path& path,
                              const NetworkSpec& spec);

/// Reads either the binary container or the JSON import document, sniffing
/// the leading bytes.
WeightBundle load_bundle_any(const std::filesystem::path& path,
                             const NetworkSpec& spec);

/// JSON import path for externally trained weights: nested +-1 arrays per
/// layer, norm as folded {a,b}, raw {gamma,beta,mu,sigma} (sigma =
/// stabilized stddev), or {gamma,beta,mu,variance[,epsilon]}.
WeightBundle import_bundle_json(const nlohmann::json& doc,
                                const NetworkSpec& spec);

/// Deterministic draws used for every synthetic input in the project.
/// Bits come from std::mt19937_64 (sequence fixed by the standard); doubles
/// use the 53-bit mantissa construction; so any seed reproduces bit-identical
/// results on every platform.
class DetRng {
public:
  explicit DetRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  bool coin() { return engine_() & 1u; }
  /// Uniform in [0, 1).
  double unit() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + unit() * (hi - lo); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

private:
  std::mt19937_64 engine_;
};

/// SplitMix64 step; used to derive independent stream seeds from (seed, key)
/// pairs without correlating the streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

/// Synthetic bundle for a validated spec: i.i.d. +-1 weights, biases uniform
/// in [-1,1], norm scale +-[0.25,4], norm offset [-8,8].  Identical across
/// platforms for a given seed.
WeightBundle random_bundle(const NetworkSpec& spec, std::uint64_t seed);

/// CRC-32 (IEEE) of a byte span; the checksum used by the bundle container
/// and the run-manifest input digests.
std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes);

}  // namespace xnorforge
