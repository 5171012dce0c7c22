#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "fragkey/crypto.hpp"
#include "fragkey/keycore.hpp"

namespace fragkey {

using crypto::Bytes;

/// Recipient-side asymmetric scheme. The RSA binding below is the only implementation today;
/// a hybrid KEM can slot in behind the same two classes.
class PublicKey {
 public:
  virtual ~PublicKey() = default;
  virtual std::string scheme() const = 0;
  /// Printable form carried in the "public_key" request field.
  virtual std::string to_text() const = 0;
  virtual std::size_t max_direct_plaintext() const = 0;
  virtual Bytes encrypt_direct(std::span<const std::uint8_t> plaintext) const = 0;
};

class PrivateKey {
 public:
  virtual ~PrivateKey() = default;
  virtual std::size_t direct_ciphertext_size() const = 0;
  /// Throws Errc::decryption on any failure.
  virtual Bytes decrypt_direct(std::span<const std::uint8_t> ciphertext) const = 0;
  virtual std::shared_ptr<const PublicKey> public_key() const = 0;
  virtual std::string to_pem() const = 0;
};

struct RecipientKeyPair {
  std::shared_ptr<const PublicKey> public_key;
  std::shared_ptr<const PrivateKey> private_key;
};

inline constexpr int kDefaultRsaBits = 2048;

RecipientKeyPair generate_rsa_keypair(int bits = kDefaultRsaBits);
/// Parses base64(DER SubjectPublicKeyInfo). Throws Errc::key.
std::shared_ptr<const PublicKey> parse_public_key(std::string_view text);
/// Throws Errc::key.
RecipientKeyPair load_private_key_pem(std::string_view pem);

struct EncryptedFragment {
  Bytes ciphertext;
  std::string session_tag;
  friend bool operator==(const EncryptedFragment&, const EncryptedFragment&) = default;
};

struct DecryptedFragment {
  Fragment fragment;
  double seconds = 0.0;  // wall-clock, trace only
};

/// index:u16 | total:u16 | bit_length:u16 (big-endian) | payload bytes
Bytes encode_fragment_plaintext(const Fragment& f);
/// Throws Errc::decryption on a malformed header.
Fragment decode_fragment_plaintext(std::span<const std::uint8_t> plaintext);

// Ciphertext layouts (first byte selects the mode):
//   0x01 | asym(plaintext)
//   0x02 | asym(content key) | nonce | aes-256-gcm(plaintext) | tag
inline constexpr std::uint8_t kModeDirect = 0x01;
inline constexpr std::uint8_t kModeEnvelope = 0x02;

EncryptedFragment encrypt_fragment(const Fragment& f, const PublicKey& pk, std::string session_tag = {});
DecryptedFragment decrypt_fragment(const EncryptedFragment& ef, const PrivateKey& sk);

}  // namespace fragkey
