#include "fragkey/envelope.hpp"

#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>

#include <chrono>

#include "fragkey/error.hpp"

namespace fragkey {

namespace {

struct PkeyFree {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct PkeyCtxFree {
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct BioFree {
  void operator()(BIO* p) const { BIO_free(p); }
};
using Pkey = std::shared_ptr<EVP_PKEY>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxFree>;

constexpr std::size_t kOaepOverhead = 2 * 32 + 2;  // OAEP with SHA-256
constexpr std::size_t kHeaderBytes = 6;

void configure_oaep(EVP_PKEY_CTX* ctx) {
  if (EVP_PKEY_CTX_set_rsa_padding(ctx, RSA_PKCS1_OAEP_PADDING) != 1 ||
      EVP_PKEY_CTX_set_rsa_oaep_md(ctx, EVP_sha256()) != 1 || EVP_PKEY_CTX_set_rsa_mgf1_md(ctx, EVP_sha256()) != 1)
    throw Error(Errc::key, "cannot configure RSA-OAEP");
}

class RsaPublicKey final : public PublicKey {
 public:
  explicit RsaPublicKey(Pkey key) : key_(std::move(key)) {}

  std::string scheme() const override {
    return "RSA-" + std::to_string(EVP_PKEY_get_bits(key_.get())) + "-OAEP-SHA256/AES-256-GCM";
  }

  std::string to_text() const override {
    unsigned char* der = nullptr;
    const int len = i2d_PUBKEY(key_.get(), &der);
    if (len <= 0) throw Error(Errc::key, "cannot serialize public key");
    std::string text = crypto::base64_encode({der, static_cast<std::size_t>(len)});
    OPENSSL_free(der);
    return text;
  }

  std::size_t max_direct_plaintext() const override {
    return static_cast<std::size_t>(EVP_PKEY_get_size(key_.get())) - kOaepOverhead;
  }

  Bytes encrypt_direct(std::span<const std::uint8_t> plaintext) const override {
    if (plaintext.size() > max_direct_plaintext())
      throw Error(Errc::parameter, "plaintext exceeds the direct RSA-OAEP limit");
    PkeyCtx ctx(EVP_PKEY_CTX_new(key_.get(), nullptr));
    if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) != 1) throw Error(Errc::key, "RSA encrypt init failed");
    configure_oaep(ctx.get());
    std::size_t outlen = 0;
    if (EVP_PKEY_encrypt(ctx.get(), nullptr, &outlen, plaintext.data(), plaintext.size()) != 1)
      throw Error(Errc::key, "RSA encrypt sizing failed");
    Bytes out(outlen);
    if (EVP_PKEY_encrypt(ctx.get(), out.data(), &outlen, plaintext.data(), plaintext.size()) != 1)
      throw Error(Errc::key, "RSA encrypt failed");
    out.resize(outlen);
    return out;
  }

 private:
  Pkey key_;
};

class RsaPrivateKey final : public PrivateKey {
 public:
  explicit RsaPrivateKey(Pkey key) : key_(std::move(key)) {}

  std::size_t direct_ciphertext_size() const override {
    return static_cast<std::size_t>(EVP_PKEY_get_size(key_.get()));
  }

  Bytes decrypt_direct(std::span<const std::uint8_t> ciphertext) const override {
    if (ciphertext.size() != direct_ciphertext_size())
      throw Error(Errc::decryption, "RSA ciphertext has the wrong length");
    PkeyCtx ctx(EVP_PKEY_CTX_new(key_.get(), nullptr));
    if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) != 1) throw Error(Errc::decryption, "RSA decrypt init failed");
    configure_oaep(ctx.get());
    std::size_t outlen = 0;
    if (EVP_PKEY_decrypt(ctx.get(), nullptr, &outlen, ciphertext.data(), ciphertext.size()) != 1)
      throw Error(Errc::decryption, "RSA decrypt sizing failed");
    Bytes out(outlen);
    if (EVP_PKEY_decrypt(ctx.get(), out.data(), &outlen, ciphertext.data(), ciphertext.size()) != 1)
      throw Error(Errc::decryption, "RSA-OAEP decryption failed");
    out.resize(outlen);
    return out;
  }

  std::shared_ptr<const PublicKey> public_key() const override { return std::make_shared<RsaPublicKey>(key_); }

  std::string to_pem() const override {
    std::unique_ptr<BIO, BioFree> bio(BIO_new(BIO_s_mem()));
    if (PEM_write_bio_PrivateKey(bio.get(), key_.get(), nullptr, nullptr, 0, nullptr, nullptr) != 1)
      throw Error(Errc::key, "cannot write private key");
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio.get(), &data);
    return std::string(data, static_cast<std::size_t>(len));
  }

 private:
  Pkey key_;
};

Pkey wrap(EVP_PKEY* raw) { return Pkey(raw, PkeyFree{}); }

RecipientKeyPair pair_from(Pkey key) {
  auto priv = std::make_shared<RsaPrivateKey>(key);
  return {priv->public_key(), priv};
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

void write_u16(Bytes& out, std::size_t value) {
  out.push_back(static_cast<std::uint8_t>(value >> 8));
  out.push_back(static_cast<std::uint8_t>(value & 0xFF));
}

}  // namespace

RecipientKeyPair generate_rsa_keypair(int bits) {
  if (bits < 1024) throw Error(Errc::parameter, "RSA modulus below 1024 bits");
  PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_RSA, nullptr));
  if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 || EVP_PKEY_CTX_set_rsa_keygen_bits(ctx.get(), bits) != 1)
    throw Error(Errc::key, "RSA keygen init failed");
  EVP_PKEY* raw = nullptr;
  if (EVP_PKEY_keygen(ctx.get(), &raw) != 1) throw Error(Errc::key, "RSA keygen failed");
  return pair_from(wrap(raw));
}

std::shared_ptr<const PublicKey> parse_public_key(std::string_view text) {
  Bytes der;
  try {
    der = crypto::base64_decode(text);
  } catch (const Error&) {
    throw Error(Errc::key, "public key is not valid base64");
  }
  const unsigned char* p = der.data();
  EVP_PKEY* raw = d2i_PUBKEY(nullptr, &p, static_cast<long>(der.size()));
  if (!raw) throw Error(Errc::key, "public key is not a DER SubjectPublicKeyInfo");
  auto key = wrap(raw);
  if (EVP_PKEY_get_base_id(raw) != EVP_PKEY_RSA) throw Error(Errc::key, "unsupported public key algorithm");
  if (p != der.data() + der.size()) throw Error(Errc::key, "trailing bytes after public key");
  return std::make_shared<RsaPublicKey>(std::move(key));
}

RecipientKeyPair load_private_key_pem(std::string_view pem) {
  std::unique_ptr<BIO, BioFree> bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* raw = PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr);
  if (!raw) throw Error(Errc::key, "cannot parse PEM private key");
  auto key = wrap(raw);
  if (EVP_PKEY_get_base_id(raw) != EVP_PKEY_RSA) throw Error(Errc::key, "unsupported private key algorithm");
  return pair_from(std::move(key));
}

Bytes encode_fragment_plaintext(const Fragment& f) {
  if (f.index < 1 || f.index > f.total || f.total > 0xFFFF || f.payload.empty() || f.payload.size() > 0xFFFF)
    throw Error(Errc::parameter, "fragment does not fit the 16-bit header fields");
  Bytes out;
  out.reserve(kHeaderBytes + f.payload.bytes().size());
  write_u16(out, f.index);
  write_u16(out, f.total);
  write_u16(out, f.payload.size());
  out.insert(out.end(), f.payload.bytes().begin(), f.payload.bytes().end());
  return out;
}

Fragment decode_fragment_plaintext(std::span<const std::uint8_t> plaintext) {
  if (plaintext.size() < kHeaderBytes) throw Error(Errc::decryption, "fragment plaintext shorter than header");
  const std::size_t index = read_u16(plaintext, 0);
  const std::size_t total = read_u16(plaintext, 2);
  const std::size_t bit_length = read_u16(plaintext, 4);
  if (index < 1 || index > total || bit_length == 0)
    throw Error(Errc::decryption, "fragment header out of range");
  auto body = plaintext.subspan(kHeaderBytes);
  if (body.size() != (bit_length + 7) / 8) throw Error(Errc::decryption, "fragment length mismatch");
  try {
    return Fragment{index, total, BitString(Bytes(body.begin(), body.end()), bit_length)};
  } catch (const Error& e) {
    throw Error(Errc::decryption, std::string("fragment payload malformed: ") + e.what());
  }
}

EncryptedFragment encrypt_fragment(const Fragment& f, const PublicKey& pk, std::string session_tag) {
  const Bytes plaintext = encode_fragment_plaintext(f);
  Bytes out;
  if (plaintext.size() <= pk.max_direct_plaintext()) {
    out.push_back(kModeDirect);
    const Bytes ct = pk.encrypt_direct(plaintext);
    out.insert(out.end(), ct.begin(), ct.end());
  } else {
    const Bytes content_key = crypto::random_bytes(crypto::kAes256KeyBytes);
    const Bytes nonce = crypto::random_bytes(crypto::kGcmNonceBytes);
    const Bytes wrapped = pk.encrypt_direct(content_key);
    out.push_back(kModeEnvelope);
    out.insert(out.end(), wrapped.begin(), wrapped.end());
    out.insert(out.end(), nonce.begin(), nonce.end());
    const std::uint8_t aad[] = {kModeEnvelope};
    const Bytes sealed = crypto::aes256gcm_seal(content_key, nonce, aad, plaintext);
    out.insert(out.end(), sealed.begin(), sealed.end());
  }
  return EncryptedFragment{std::move(out), std::move(session_tag)};
}

DecryptedFragment decrypt_fragment(const EncryptedFragment& ef, const PrivateKey& sk) {
  const auto start = std::chrono::steady_clock::now();
  std::span<const std::uint8_t> ct = ef.ciphertext;
  if (ct.empty()) throw Error(Errc::decryption, "empty ciphertext");
  const std::size_t asym = sk.direct_ciphertext_size();
  Bytes plaintext;
  if (ct[0] == kModeDirect) {
    plaintext = sk.decrypt_direct(ct.subspan(1));
  } else if (ct[0] == kModeEnvelope) {
    if (ct.size() < 1 + asym + crypto::kGcmNonceBytes + crypto::kGcmTagBytes)
      throw Error(Errc::decryption, "envelope ciphertext truncated");
    const Bytes content_key = sk.decrypt_direct(ct.subspan(1, asym));
    if (content_key.size() != crypto::kAes256KeyBytes) throw Error(Errc::decryption, "wrapped key has wrong size");
    const std::uint8_t aad[] = {kModeEnvelope};
    plaintext = crypto::aes256gcm_open(content_key, ct.subspan(1 + asym, crypto::kGcmNonceBytes), aad,
                                       ct.subspan(1 + asym + crypto::kGcmNonceBytes));
  } else {
    throw Error(Errc::decryption, "unknown ciphertext mode");
  }
  DecryptedFragment out{decode_fragment_plaintext(plaintext), 0.0};
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace fragkey
