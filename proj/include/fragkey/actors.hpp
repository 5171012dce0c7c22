#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fragkey/envelope.hpp"
#include "fragkey/error.hpp"
#include "fragkey/keycore.hpp"
#include "fragkey/transport.hpp"
#include "fragkey/wire.hpp"

namespace fragkey {

// ---------------------------------------------------------------- QKMS

enum class SessionState { waiting_for_peer, issued, completed, failed };
std::string_view to_string(SessionState s) noexcept;

struct SessionEndpoint {
  std::string public_key;
  std::vector<std::string> channels;
  std::string proxy;  // endpoint that forwarded the request, informational
};

struct SessionRecord {
  std::string tagname;
  long long key_type = 0;
  long long num_of_splits = 0;
  bool shuffle = false;
  std::vector<SessionEndpoint> endpoints;  // at most 2
  SessionState state = SessionState::waiting_for_peer;
  double created_at_ms = 0.0;
  std::string failure;
  std::vector<std::size_t> bundles_per_endpoint;  // filled at issuance
};

struct Bundle {
  std::string channel;
  std::vector<EncryptedFragment> encrypted_fragments;
  long long bundle_id = 0;
};

struct DispatchAction {
  std::size_t endpoint = 0;  // 0 = first requester, 1 = peer
  Bundle bundle;
};

struct QkmsOutcome {
  SessionState state = SessionState::waiting_for_peer;
  std::vector<DispatchAction> dispatch;
};

using Splitter = std::function<FragmentSet(const SessionKey&, long long)>;

struct QkmsConfig {
  /// Logical lifetime of a waiting_for_peer record; <= 0 disables expiry.
  double session_timeout_ms = 0.0;
  double crypto_ms_per_fragment = 0.0;
  /// Fault-injection seam for the negative-control test; defaults to split_key.
  Splitter splitter;
};

/// Independent uniform channel draw for each of n dispatch positions.
std::vector<std::string> assign_channels(std::size_t n, const std::vector<std::string>& channels, Rng& rng);

/// Group fragments (dispatch order) into one bundle per non-empty channel, in channel-list order.
std::vector<Bundle> make_bundles(const std::vector<EncryptedFragment>& fragments,
                                 const std::vector<std::string>& assignment,
                                 const std::vector<std::string>& channels, long long& next_bundle_id);

class Qkms {
 public:
  Qkms(QkmsConfig config, std::uint64_t seed, SimClock* clock = nullptr);

  /// Pairs requests by tagname; the second matching request generates the key and returns the
  /// dispatch actions. Throws Errc::rejected (reuse, empty tagname) or Errc::mismatch.
  QkmsOutcome handle_request(const wire::ProxyKeyRequest& req, double now_ms = 0.0);

  /// Move expired waiting records to failed. Their tagnames stay burned.
  void expire(double now_ms);
  void mark(const std::string& tagname, SessionState state, std::string failure = {});

  const SessionRecord* session(const std::string& tagname) const;
  std::optional<SessionKey> issued_key(const std::string& tagname) const;
  std::size_t keys_generated() const noexcept { return keys_generated_; }
  /// "Part k of n: <bits>" lines in dispatch order, per endpoint.
  const std::vector<std::string>& trace() const noexcept { return trace_; }

 private:
  std::vector<DispatchAction> issue(SessionRecord& rec);

  QkmsConfig config_;
  Rng rng_;
  SimClock* clock_;
  std::map<std::string, SessionRecord> sessions_;
  std::map<std::string, SessionKey> keys_;
  std::size_t keys_generated_ = 0;
  long long next_bundle_id_ = 1;
  std::vector<std::string> trace_;
};

/// Binds a Qkms to the network: "/get-key" handler plus channel dispatch over `link`.
class QkmsService {
 public:
  QkmsService(Qkms& qkms, Transport& link, const SimClock* clock = nullptr)
      : qkms_(&qkms), link_(&link), clock_(clock) {}
  Response handle(std::string_view path, const std::string& body);

 private:
  Qkms* qkms_;
  Transport* link_;
  const SimClock* clock_;
};

// ---------------------------------------------------------------- proxy

struct ProxyConfig {
  std::string name;
  std::vector<std::string> channels;
  std::string qkms_address;
  std::string client_onion_address;  // pre-shared bootstrap
};

/// Appends the proxy's channels; nothing else changes. Throws Errc::configuration / Errc::rejected.
wire::ProxyKeyRequest proxy_handle_client_request(const wire::KeyRequest& req, const ProxyConfig& config);

struct ForwardResult {
  std::vector<DeliveryReceipt> receipts;
  bool failed = false;
  std::string error;
};

/// One NEWNYM (with its stabilization wait) then one POST per bundle; stops at the first failure.
ForwardResult proxy_forward_bundles(const std::vector<wire::FragmentDelivery>& bundles,
                                    const std::string& client_onion_address, Transport& onion);

class Proxy {
 public:
  Proxy(ProxyConfig config, Transport& qkms_link, Transport& onion);

  /// "/get-key" from the client.
  Response on_get_key(const std::string& body);
  /// Bundle arriving on one of the proxy's channels.
  Response on_channel(const std::string& body);

  const ProxyConfig& config() const noexcept { return config_; }
  bool failed(const std::string& tagname) const;
  /// Circuit ids used to deliver this session's bundles, in send order.
  std::vector<std::uint64_t> circuits_used(const std::string& tagname) const;
  std::size_t bundles_forwarded(const std::string& tagname) const;
  /// Everything the proxy holds or logged, flattened to text.
  std::string observable_state() const;

 private:
  struct Tracked {
    std::vector<std::uint64_t> circuits;
    std::size_t bundles = 0;
    bool failed = false;
  };

  ProxyConfig config_;
  Transport* qkms_link_;
  Transport* onion_;
  std::map<std::string, Tracked> sessions_;
  std::vector<std::string> log_;
};

// ---------------------------------------------------------------- client

struct ClientSessionState {
  std::string tagname;
  std::size_t expected_total = 0;
  std::map<std::size_t, Fragment> received;
  bool complete = false;
  bool failed = false;
  std::string failure;
  std::optional<SessionKey> key;
  std::size_t shares_seen = 0;
};

class Client {
 public:
  Client(std::string name, RecipientKeyPair keys, SimClock* clock = nullptr, double crypto_ms_per_fragment = 0.0);

  wire::KeyRequest make_request(const std::string& tagname, long long key_type, long long n, bool shuffle) const;
  void open_session(const wire::KeyRequest& req);

  /// Decrypt, store by index, reassemble once {1..n} is covered. Throws Errc::rejected for an unknown
  /// tagname; other failures mark the session failed and rethrow.
  const ClientSessionState& receive(const wire::FragmentDelivery& delivery);
  Response on_receive_fragment(const std::string& body);

  const ClientSessionState* session(const std::string& tagname) const;
  const std::string& name() const noexcept { return name_; }
  const RecipientKeyPair& keys() const noexcept { return keys_; }
  /// Decryption trace: received share, decrypted part, timing.
  const std::vector<std::string>& trace() const noexcept { return trace_; }

 private:
  void fail(ClientSessionState& s, const std::string& why);

  std::string name_;
  RecipientKeyPair keys_;
  SimClock* clock_;
  double crypto_ms_;
  std::map<std::string, ClientSessionState> sessions_;
  std::vector<std::string> trace_;
};

// ---------------------------------------------------------------- application cipher

/// AES-256-GCM keyed by HKDF-SHA256 over the reconstructed session key.
class SessionCipher {
 public:
  static constexpr std::string_view kInfo = "fragkey session cipher v1";
  static constexpr std::size_t kMinKeyBits = 128;

  /// Throws Errc::parameter for keys shorter than 128 bits.
  explicit SessionCipher(const SessionKey& key);

  const crypto::Bytes& working_key() const noexcept { return key_; }
  /// nonce || ciphertext || tag
  crypto::Bytes seal(std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad = {}) const;
  /// Throws Errc::decryption on authentication failure.
  crypto::Bytes open(std::span<const std::uint8_t> sealed, std::span<const std::uint8_t> aad = {}) const;

 private:
  crypto::Bytes key_;
};

SessionCipher derive_session_cipher(const SessionKey& key);

/// Maps library errors onto response codes and an ErrorReply body.
Response error_response(const Error& e);

}  // namespace fragkey
