#include "xnorforge/bitcore.hpp"

#include <bit>
#include <stdexcept>
#include <string>

namespace xnorforge {

void BitVector::clear_tail() {
  const std::size_t rem = length_ % 64;
  if (rem != 0 && !words_.empty())
    words_.back() &= (std::uint64_t{1} << rem) - 1;
}

BitVector BitVector::pack(std::span<const int> values) {
  BitVector v(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 1) {
      v.words_[i / 64] |= std::uint64_t{1} << (i % 64);
    } else if (values[i] != -1) {
      throw std::invalid_argument("BitVector::pack: element " +
                                  std::to_string(i) + " is " +
                                  std::to_string(values[i]) + ", expected +-1");
    }
  }
  return v;
}

void BitVector::append(const BitVector& other) {
  const std::size_t base = length_;
  length_ += other.length_;
  words_.resize((length_ + 63) / 64, 0);
  for (std::size_t i = 0; i < other.length_; ++i)
    if (other.bit(i)) set_bit(base + i, true);
}

std::vector<int> BitVector::unpack() const {
  std::vector<int> out(length_);
  for (std::size_t i = 0; i < length_; ++i) out[i] = sign(i);
  return out;
}

bool BitVector::is_canonical() const {
  const std::size_t rem = length_ % 64;
  if (rem == 0 || words_.empty()) return true;
  return (words_.back() & ~((std::uint64_t{1} << rem) - 1)) == 0;
}

BitVector xnor(const BitVector& a, const BitVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("xnor: length mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  BitVector out(a.size());
  for (std::size_t w = 0; w < out.words_.size(); ++w)
    out.words_[w] = ~(a.words_[w] ^ b.words_[w]);
  // XNOR turns the zero tail into ones; re-canonicalize so popcount stays honest.
  out.clear_tail();
  return out;
}

std::size_t popcount(const BitVector& v) {
  std::size_t n = 0;
  for (std::uint64_t w : v.words()) n += std::popcount(w);
  return n;
}

std::int64_t xnor_dot(const BitVector& a, const BitVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("xnor_dot: length mismatch");
  if (a.empty())
    throw std::invalid_argument("xnor_dot: empty vectors have no dot product");
  // Fused ~(a ^ b) + popcount with the tail masked in-place; equivalent to
  // 2 * popcount(xnor(a, b)) - N without materializing the intermediate.
  const auto wa = a.words();
  const auto wb = b.words();
  std::int64_t p = 0;
  for (std::size_t i = 0; i + 1 < wa.size(); ++i)
    p += std::popcount(~(wa[i] ^ wb[i]));
  const std::size_t rem = a.size() % 64;
  std::uint64_t last = ~(wa.back() ^ wb.back());
  if (rem != 0) last &= (std::uint64_t{1} << rem) - 1;
  p += std::popcount(last);
  const auto n = static_cast<std::int64_t>(a.size());
  return 2 * p - n;
}

int hamming_tree_stages(std::size_t n) {
  if (n == 0)
    throw std::invalid_argument("hamming_tree_stages: n must be >= 1");
  return static_cast<int>(std::bit_width(n - 1));
}

}  // namespace xnorforge
