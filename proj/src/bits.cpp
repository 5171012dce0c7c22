#include "fragkey/bits.hpp"

#include <cstdio>

#include "fragkey/error.hpp"

namespace fragkey {

namespace {

std::size_t byte_count(std::size_t bits) { return (bits + 7) / 8; }

}  // namespace

BitString::BitString(std::vector<std::uint8_t> bytes, std::size_t bit_length)
    : bytes_(std::move(bytes)), bit_length_(bit_length) {
  if (bytes_.size() != byte_count(bit_length_))
    throw Error(Errc::parameter, "bit-string byte count does not match bit length");
  if (bit_length_ % 8 != 0) {
    const auto pad_mask = static_cast<std::uint8_t>(0xFFu >> (bit_length_ % 8));
    if (bytes_.back() & pad_mask) throw Error(Errc::parameter, "bit-string padding bits must be zero");
  }
}

BitString BitString::from_text(std::string_view text) {
  std::vector<std::uint8_t> bytes(byte_count(text.size()), 0);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '1')
      bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    else if (text[i] != '0')
      throw Error(Errc::parameter, "bit-string text may only contain '0' and '1'");
  }
  return BitString(std::move(bytes), text.size());
}

bool BitString::bit(std::size_t i) const {
  if (i >= bit_length_) throw Error(Errc::parameter, "bit index out of range");
  return (bytes_[i / 8] >> (7 - i % 8)) & 1u;
}

BitString BitString::slice(std::size_t offset, std::size_t count) const {
  if (offset > bit_length_ || count > bit_length_ - offset)
    throw Error(Errc::parameter, "bit slice out of range");
  std::vector<std::uint8_t> out(byte_count(count), 0);
  const std::size_t shift = offset % 8;
  const std::size_t first = offset / 8;
  for (std::size_t b = 0; b < out.size(); ++b) {
    unsigned v = static_cast<unsigned>(bytes_[first + b]) << shift;
    if (shift && first + b + 1 < bytes_.size()) v |= bytes_[first + b + 1] >> (8 - shift);
    out[b] = static_cast<std::uint8_t>(v);
  }
  if (count % 8) out.back() &= static_cast<std::uint8_t>(0xFFu << (8 - count % 8));
  return BitString(std::move(out), count);
}

void BitString::append(const BitString& tail) {
  const std::size_t shift = bit_length_ % 8;
  if (shift == 0) {
    bytes_.insert(bytes_.end(), tail.bytes_.begin(), tail.bytes_.end());
  } else {
    for (auto byte : tail.bytes_) {
      bytes_.back() |= static_cast<std::uint8_t>(byte >> shift);
      bytes_.push_back(static_cast<std::uint8_t>(byte << (8 - shift)));
    }
  }
  bit_length_ += tail.bit_length_;
  bytes_.resize(byte_count(bit_length_));
}

std::string BitString::to_text() const {
  std::string s(bit_length_, '0');
  for (std::size_t i = 0; i < bit_length_; ++i)
    if ((bytes_[i / 8] >> (7 - i % 8)) & 1u) s[i] = '1';
  return s;
}

std::string BitString::to_hex() const {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes_.size() * 2);
  for (auto b : bytes_) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

}  // namespace fragkey
