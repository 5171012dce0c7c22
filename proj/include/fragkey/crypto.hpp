#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Thin wrappers over OpenSSL primitives shared by the fragment envelope and the session cipher.
namespace fragkey::crypto {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kGcmNonceBytes = 12;
inline constexpr std::size_t kGcmTagBytes = 16;
inline constexpr std::size_t kAes256KeyBytes = 32;

Bytes random_bytes(std::size_t count);

std::string base64_encode(std::span<const std::uint8_t> data);
/// Throws Errc::parameter on malformed input.
Bytes base64_decode(std::string_view text);

/// Returns ciphertext || tag.
Bytes aes256gcm_seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                     std::span<const std::uint8_t> aad, std::span<const std::uint8_t> plaintext);
/// Throws Errc::decryption when the tag does not verify.
Bytes aes256gcm_open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                     std::span<const std::uint8_t> aad, std::span<const std::uint8_t> sealed);

Bytes hkdf_sha256(std::span<const std::uint8_t> ikm, std::span<const std::uint8_t> salt,
                  std::string_view info, std::size_t length);

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);

}  // namespace fragkey::crypto
