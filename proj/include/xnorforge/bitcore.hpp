#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace xnorforge {

/// Packed {-1,+1} vector.  Logical +1 is stored as bit 1, -1 as bit 0.
/// Bit i lives in words()[i / 64] at position i % 64 (LSB-first).  Bits past
/// size() in the last word are always zero (canonical form); every mutating
/// operation re-establishes this.
class BitVector {
public:
  BitVector() = default;
  explicit BitVector(std::size_t length)
      : words_((length + 63) / 64, 0), length_(length) {}

  /// Packs a sequence of +-1 values; rejects anything else.
  static BitVector pack(std::span<const int> values);

  std::size_t size() const { return length_; }
  bool empty() const { return length_ == 0; }
  std::span<const std::uint64_t> words() const { return words_; }

  bool bit(std::size_t i) const {
    return (words_[i / 64] >> (i % 64)) & 1u;
  }
  void set_bit(std::size_t i, bool v) {
    const std::uint64_t mask = std::uint64_t{1} << (i % 64);
    if (v)
      words_[i / 64] |= mask;
    else
      words_[i / 64] &= ~mask;
  }
  /// Logical value at bit i: +1 or -1.
  int sign(std::size_t i) const { return bit(i) ? +1 : -1; }

  /// Re-sizes to `length` bits, all zero.
  void reset(std::size_t length) {
    words_.assign((length + 63) / 64, 0);
    length_ = length;
  }

  /// Appends the bits of `other` after this vector's bits.
  void append(const BitVector& other);

  std::vector<int> unpack() const;

  /// True when the tail bits beyond size() are all zero.
  bool is_canonical() const;

  friend bool operator==(const BitVector&, const BitVector&) = default;

private:
  friend BitVector xnor(const BitVector&, const BitVector&);
  void clear_tail();

  std::vector<std::uint64_t> words_;
  std::size_t length_ = 0;
};

/// Bitwise XNOR of two equal-length vectors; result is canonical.
BitVector xnor(const BitVector& a, const BitVector& b);

/// Number of 1-bits among the first size() bits.
std::size_t popcount(const BitVector& v);

/// Integer dot product of two +-1 vectors of equal length N >= 1,
/// computed as 2 * popcount(xnor(a, b)) - N.
std::int64_t xnor_dot(const BitVector& a, const BitVector& b);

/// Depth of a balanced adder tree that sums n bits: ceil(log2(n)).
/// This is the popcount latency in clock cycles of the modeled hardware.
int hamming_tree_stages(std::size_t n);

}  // namespace xnorforge
