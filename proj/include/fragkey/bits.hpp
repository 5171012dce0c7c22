#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fragkey {

/// A bit-string stored MSB-first in bytes; trailing pad bits of the last byte are always zero.
class BitString {
 public:
  BitString() = default;
  BitString(std::vector<std::uint8_t> bytes, std::size_t bit_length);

  static BitString from_text(std::string_view zeros_and_ones);

  std::size_t size() const noexcept { return bit_length_; }
  bool empty() const noexcept { return bit_length_ == 0; }
  bool bit(std::size_t i) const;
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

  /// Bits [offset, offset + count) as a new string.
  BitString slice(std::size_t offset, std::size_t count) const;
  void append(const BitString& tail);

  std::string to_text() const;
  std::string to_hex() const;

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_length_ = 0;
};

}  // namespace fragkey
