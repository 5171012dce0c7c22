#include "fragkey/actors.hpp"

#include <cstdio>
#include <set>

#include "fragkey/error.hpp"

namespace fragkey {

namespace {

constexpr std::size_t kTraceBits = 25;
constexpr std::size_t kTraceB64 = 23;

std::string bits_preview(const BitString& bits) {
  std::string text = bits.to_text();
  if (text.size() > kTraceBits) {
    text.resize(kTraceBits);
    text += "...";
  }
  return text;
}

std::string ack_body(const std::string& tagname, std::string_view status) {
  return wire::encode(wire::KeyAck{tagname, std::string(status)});
}

wire::FragmentDelivery to_delivery(const std::string& tagname, const Bundle& bundle) {
  wire::FragmentDelivery d{tagname, bundle.bundle_id, {}};
  for (const auto& ef : bundle.encrypted_fragments) d.fragments.push_back(crypto::base64_encode(ef.ciphertext));
  return d;
}

}  // namespace

std::string_view to_string(SessionState s) noexcept {
  switch (s) {
    case SessionState::waiting_for_peer: return "waiting_for_peer";
    case SessionState::issued: return "issued";
    case SessionState::completed: return "completed";
    case SessionState::failed: return "failed";
  }
  return "unknown";
}

Response error_response(const Error& e) {
  int status = 500;
  switch (e.code()) {
    case Errc::schema:
    case Errc::parameter:
    case Errc::key:
      status = 400;
      break;
    case Errc::rejected:
    case Errc::mismatch:
    case Errc::conflict:
    case Errc::state:
      status = 409;
      break;
    case Errc::routing:
      status = 404;
      break;
    default:
      break;
  }
  return Response{status, wire::encode(wire::ErrorReply{std::string(to_string(e.code())), e.what()})};
}

// ---------------------------------------------------------------- QKMS

std::vector<std::string> assign_channels(std::size_t n, const std::vector<std::string>& channels, Rng& rng) {
  if (channels.empty()) throw Error(Errc::parameter, "channel list is empty");
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(channels[uniform_index(rng, channels.size())]);
  return out;
}

std::vector<Bundle> make_bundles(const std::vector<EncryptedFragment>& fragments,
                                 const std::vector<std::string>& assignment,
                                 const std::vector<std::string>& channels, long long& next_bundle_id) {
  if (fragments.size() != assignment.size()) throw Error(Errc::parameter, "one channel per fragment required");
  std::vector<Bundle> bundles;
  std::set<std::string> seen;
  for (const auto& channel : channels) {
    if (!seen.insert(channel).second) continue;  // a repeated channel entry is the same channel
    Bundle b{channel, {}, 0};
    for (std::size_t i = 0; i < fragments.size(); ++i)
      if (assignment[i] == channel) b.encrypted_fragments.push_back(fragments[i]);
    if (b.encrypted_fragments.empty()) continue;
    b.bundle_id = next_bundle_id++;
    bundles.push_back(std::move(b));
  }
  return bundles;
}

Qkms::Qkms(QkmsConfig config, std::uint64_t seed, SimClock* clock)
    : config_(std::move(config)), rng_(seed), clock_(clock) {
  if (!config_.splitter) config_.splitter = [](const SessionKey& k, long long n) { return split_key(k, n); };
}

void Qkms::expire(double now_ms) {
  if (config_.session_timeout_ms <= 0.0) return;
  for (auto& [tag, rec] : sessions_)
    if (rec.state == SessionState::waiting_for_peer && now_ms - rec.created_at_ms > config_.session_timeout_ms) {
      rec.state = SessionState::failed;
      rec.failure = "expired waiting for peer";
    }
}

void Qkms::mark(const std::string& tagname, SessionState state, std::string failure) {
  auto it = sessions_.find(tagname);
  if (it == sessions_.end()) return;
  it->second.state = state;
  it->second.failure = std::move(failure);
}

QkmsOutcome Qkms::handle_request(const wire::ProxyKeyRequest& req, double now_ms) {
  const auto& r = req.request;
  if (r.tagname.empty()) throw Error(Errc::rejected, "empty tagname");
  validate_key_type(r.key_type);
  if (r.num_of_splits < 1 || r.num_of_splits > r.key_type)
    throw Error(Errc::parameter, "num_of_splits must be in [1, key_type]");
  if (req.channels.empty()) throw Error(Errc::parameter, "channel list is empty");
  parse_public_key(r.public_key);

  expire(now_ms);
  auto it = sessions_.find(r.tagname);
  if (it == sessions_.end()) {
    SessionRecord rec;
    rec.tagname = r.tagname;
    rec.key_type = r.key_type;
    rec.num_of_splits = r.num_of_splits;
    rec.shuffle = r.shuffle;
    rec.endpoints.push_back({r.public_key, req.channels, {}});
    rec.created_at_ms = now_ms;
    sessions_.emplace(r.tagname, std::move(rec));
    return QkmsOutcome{SessionState::waiting_for_peer, {}};
  }
  SessionRecord& rec = it->second;
  if (rec.state != SessionState::waiting_for_peer)
    throw Error(Errc::rejected, "tagname \"" + r.tagname + "\" was already used (" +
                                    std::string(to_string(rec.state)) + ")");
  if (rec.key_type != r.key_type || rec.num_of_splits != r.num_of_splits || rec.shuffle != r.shuffle)
    throw Error(Errc::mismatch, "parameters for tagname \"" + r.tagname + "\" differ from the waiting peer");
  rec.endpoints.push_back({r.public_key, req.channels, {}});
  return QkmsOutcome{SessionState::issued, issue(rec)};
}

std::vector<DispatchAction> Qkms::issue(SessionRecord& rec) {
  const SessionKey key = generate_key(rec.key_type, rng_);
  ++keys_generated_;
  rec.state = SessionState::issued;
  keys_.emplace(rec.tagname, key);

  std::vector<DispatchAction> actions;
  for (std::size_t e = 0; e < rec.endpoints.size(); ++e) {
    const auto& endpoint = rec.endpoints[e];
    const auto pk = parse_public_key(endpoint.public_key);
    FragmentSet set = config_.splitter(key, rec.num_of_splits);
    if (rec.shuffle) set = shuffle_fragments(std::move(set), rng_);

    trace_.push_back("[QKMS] " + rec.tagname + " endpoint " + std::to_string(e + 1) + " (" + pk->scheme() + ")");
    std::vector<EncryptedFragment> encrypted;
    for (const auto& f : set.fragments) {
      trace_.push_back("Part " + std::to_string(f.index) + " of " + std::to_string(f.total) + ": " +
                       bits_preview(f.payload));
      encrypted.push_back(encrypt_fragment(f, *pk, rec.tagname));
      if (clock_) clock_->advance(Phase::crypto, config_.crypto_ms_per_fragment);
    }
    const auto assignment = assign_channels(encrypted.size(), endpoint.channels, rng_);
    auto bundles = make_bundles(encrypted, assignment, endpoint.channels, next_bundle_id_);
    rec.bundles_per_endpoint.push_back(bundles.size());
    for (auto& b : bundles) actions.push_back(DispatchAction{e, std::move(b)});
  }
  return actions;
}

const SessionRecord* Qkms::session(const std::string& tagname) const {
  auto it = sessions_.find(tagname);
  return it == sessions_.end() ? nullptr : &it->second;
}

std::optional<SessionKey> Qkms::issued_key(const std::string& tagname) const {
  auto it = keys_.find(tagname);
  if (it == keys_.end()) return std::nullopt;
  return it->second;
}

Response QkmsService::handle(std::string_view path, const std::string& body) {
  if (path != wire::kGetKeyPath) return Response{404, wire::encode(wire::ErrorReply{"routing", "no such path"})};
  std::string tagname;
  try {
    const auto req = wire::decode_proxy_key_request(body);
    tagname = req.request.tagname;
    auto outcome = qkms_->handle_request(req, clock_ ? clock_->now_ms() : 0.0);
    if (outcome.state != SessionState::issued) return Response{200, ack_body(tagname, to_string(outcome.state))};
    try {
      for (const auto& action : outcome.dispatch)
        link_->send(action.bundle.channel, wire::kReceiveFragmentPath,
                    wire::encode(to_delivery(tagname, action.bundle)));
    } catch (const Error& e) {
      qkms_->mark(tagname, SessionState::failed, std::string("dispatch failed: ") + e.what());
      return error_response(e);
    }
    qkms_->mark(tagname, SessionState::completed);
    return Response{200, ack_body(tagname, "issued")};
  } catch (const Error& e) {
    return error_response(e);
  }
}

// ---------------------------------------------------------------- proxy

wire::ProxyKeyRequest proxy_handle_client_request(const wire::KeyRequest& req, const ProxyConfig& config) {
  if (config.channels.empty()) throw Error(Errc::configuration, "proxy " + config.name + " has no channels");
  if (req.tagname.empty()) throw Error(Errc::rejected, "empty tagname");
  return wire::ProxyKeyRequest{req, config.channels};
}

ForwardResult proxy_forward_bundles(const std::vector<wire::FragmentDelivery>& bundles,
                                    const std::string& client_onion_address, Transport& onion) {
  if (bundles.empty()) throw Error(Errc::parameter, "no bundles to forward");
  ForwardResult result;
  for (const auto& bundle : bundles) {
    try {
      onion.newnym();
      result.receipts.push_back(onion.send(client_onion_address, wire::kReceiveFragmentPath, wire::encode(bundle)));
    } catch (const Error& e) {
      result.failed = true;
      result.error = e.what();
      break;
    }
  }
  return result;
}

Proxy::Proxy(ProxyConfig config, Transport& qkms_link, Transport& onion)
    : config_(std::move(config)), qkms_link_(&qkms_link), onion_(&onion) {
  if (config_.channels.empty()) throw Error(Errc::configuration, "proxy " + config_.name + " has no channels");
  for (const auto& c : config_.channels)
    if (!wire::is_channel_address(c)) throw Error(Errc::configuration, "malformed channel " + c);
}

Response Proxy::on_get_key(const std::string& body) {
  try {
    const auto req = wire::decode_key_request(body);
    const auto forwarded = proxy_handle_client_request(req, config_);
    std::string bytes = wire::encode(forwarded);
    log_.push_back("forward /get-key " + bytes);
    sessions_[req.tagname];
    qkms_link_->send(config_.qkms_address, wire::kGetKeyPath, std::move(bytes));
    return Response{202, ack_body(req.tagname, "forwarded")};
  } catch (const Error& e) {
    log_.push_back(std::string("reject /get-key: ") + e.what());
    return error_response(e);
  }
}

Response Proxy::on_channel(const std::string& body) {
  try {
    const auto delivery = wire::decode_fragment_delivery(body);
    auto it = sessions_.find(delivery.tagname);
    if (it == sessions_.end()) throw Error(Errc::rejected, "bundle for unknown session " + delivery.tagname);
    Tracked& t = it->second;
    if (t.failed) throw Error(Errc::rejected, "session " + delivery.tagname + " already failed");
    log_.push_back("bundle " + std::to_string(delivery.bundle_id) + " " + body);
    const auto result = proxy_forward_bundles({delivery}, config_.client_onion_address, *onion_);
    for (const auto& r : result.receipts) {
      t.circuits.push_back(r.circuit_id.value_or(0));
      ++t.bundles;
      log_.push_back("sent bundle " + std::to_string(delivery.bundle_id) + " on circuit " +
                     std::to_string(r.circuit_id.value_or(0)));
    }
    if (result.failed) {
      t.failed = true;
      log_.push_back("session " + delivery.tagname + " failed: " + result.error);
      return error_response(Error(Errc::transport, result.error));
    }
    return Response{202, ack_body(delivery.tagname, "forwarded")};
  } catch (const Error& e) {
    log_.push_back(std::string("reject bundle: ") + e.what());
    return error_response(e);
  }
}

bool Proxy::failed(const std::string& tagname) const {
  auto it = sessions_.find(tagname);
  return it != sessions_.end() && it->second.failed;
}

std::vector<std::uint64_t> Proxy::circuits_used(const std::string& tagname) const {
  auto it = sessions_.find(tagname);
  return it == sessions_.end() ? std::vector<std::uint64_t>{} : it->second.circuits;
}

std::size_t Proxy::bundles_forwarded(const std::string& tagname) const {
  auto it = sessions_.find(tagname);
  return it == sessions_.end() ? 0 : it->second.bundles;
}

std::string Proxy::observable_state() const {
  std::string s = "proxy " + config_.name + " client=" + config_.client_onion_address + "\n";
  for (const auto& c : config_.channels) s += "channel " + c + "\n";
  for (const auto& [tag, t] : sessions_) {
    s += "session " + tag + " bundles=" + std::to_string(t.bundles) + (t.failed ? " failed" : "") + " circuits=";
    for (auto c : t.circuits) s += std::to_string(c) + ",";
    s += "\n";
  }
  for (const auto& line : log_) s += line + "\n";
  return s;
}

// ---------------------------------------------------------------- client

Client::Client(std::string name, RecipientKeyPair keys, SimClock* clock, double crypto_ms_per_fragment)
    : name_(std::move(name)), keys_(std::move(keys)), clock_(clock), crypto_ms_(crypto_ms_per_fragment) {
  if (!keys_.public_key || !keys_.private_key) throw Error(Errc::key, "client needs a key pair");
}

wire::KeyRequest Client::make_request(const std::string& tagname, long long key_type, long long n,
                                      bool shuffle) const {
  return wire::KeyRequest{tagname, key_type, n, shuffle, keys_.public_key->to_text()};
}

void Client::open_session(const wire::KeyRequest& req) {
  if (req.tagname.empty()) throw Error(Errc::rejected, "empty tagname");
  validate_key_type(req.key_type);
  if (req.num_of_splits < 1 || req.num_of_splits > req.key_type)
    throw Error(Errc::parameter, "num_of_splits must be in [1, key_type]");
  if (sessions_.contains(req.tagname)) throw Error(Errc::rejected, "session " + req.tagname + " already open");
  ClientSessionState s;
  s.tagname = req.tagname;
  s.expected_total = static_cast<std::size_t>(req.num_of_splits);
  sessions_.emplace(req.tagname, std::move(s));
}

void Client::fail(ClientSessionState& s, const std::string& why) {
  s.failed = true;
  s.failure = why;
  trace_.push_back("[CLIENT] Session " + s.tagname + " failed: " + why);
}

const ClientSessionState& Client::receive(const wire::FragmentDelivery& delivery) {
  auto it = sessions_.find(delivery.tagname);
  if (it == sessions_.end()) throw Error(Errc::rejected, "no open session " + delivery.tagname);
  ClientSessionState& s = it->second;
  if (s.failed) throw Error(Errc::rejected, "session " + s.tagname + " already failed");
  if (s.complete) return s;

  for (const auto& b64 : delivery.fragments) {
    ++s.shares_seen;
    trace_.push_back("[CLIENT] Received share (idx=" + std::to_string(s.shares_seen) + "): " +
                     b64.substr(0, kTraceB64) + (b64.size() > kTraceB64 ? "..." : ""));
    DecryptedFragment d;
    try {
      d = decrypt_fragment(EncryptedFragment{crypto::base64_decode(b64), delivery.tagname}, *keys_.private_key);
    } catch (const Error& e) {
      fail(s, std::string("decryption failed: ") + e.what());
      throw Error(Errc::decryption, s.failure);
    }
    if (clock_) clock_->advance(Phase::crypto, crypto_ms_);
    const Fragment& f = d.fragment;
    trace_.push_back("Decrypted: part " + std::to_string(f.index) + " of " + std::to_string(f.total) + ", " +
                     bits_preview(f.payload));
    char timing[64];
    std::snprintf(timing, sizeof timing, "Decryption time: %.3f s", d.seconds);
    trace_.push_back(timing);
    trace_.push_back("");
    if (f.total != s.expected_total) {
      fail(s, "fragment claims " + std::to_string(f.total) + " parts, expected " + std::to_string(s.expected_total));
      throw Error(Errc::conflict, s.failure);
    }
    auto [slot, inserted] = s.received.emplace(f.index, f);
    if (!inserted && slot->second != f) {
      fail(s, "conflicting duplicate of part " + std::to_string(f.index));
      throw Error(Errc::conflict, s.failure);
    }
  }

  if (s.received.size() == s.expected_total) {
    trace_.push_back("[CLIENT] All " + std::to_string(s.expected_total) + " fragments received; reassembling.");
    std::vector<Fragment> parts;
    for (const auto& [index, f] : s.received) parts.push_back(f);
    s.key = reassemble(parts);
    s.complete = true;
  }
  return s;
}

Response Client::on_receive_fragment(const std::string& body) {
  try {
    const auto delivery = wire::decode_fragment_delivery(body);
    const auto& s = receive(delivery);
    return Response{200, ack_body(s.tagname, s.complete ? "complete" : "waiting")};
  } catch (const Error& e) {
    return error_response(e);
  }
}

const ClientSessionState* Client::session(const std::string& tagname) const {
  auto it = sessions_.find(tagname);
  return it == sessions_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------- application cipher

SessionCipher::SessionCipher(const SessionKey& key) {
  if (key.key_type() < kMinKeyBits) throw Error(Errc::parameter, "session key shorter than 128 bits");
  key_ = crypto::hkdf_sha256(key.bits.bytes(), {}, kInfo, crypto::kAes256KeyBytes);
}

crypto::Bytes SessionCipher::seal(std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad) const {
  crypto::Bytes out = crypto::random_bytes(crypto::kGcmNonceBytes);
  const auto sealed = crypto::aes256gcm_seal(key_, out, aad, plaintext);
  out.insert(out.end(), sealed.begin(), sealed.end());
  return out;
}

crypto::Bytes SessionCipher::open(std::span<const std::uint8_t> sealed, std::span<const std::uint8_t> aad) const {
  if (sealed.size() < crypto::kGcmNonceBytes + crypto::kGcmTagBytes)
    throw Error(Errc::decryption, "sealed message too short");
  return crypto::aes256gcm_open(key_, sealed.first(crypto::kGcmNonceBytes), aad,
                                sealed.subspan(crypto::kGcmNonceBytes));
}

SessionCipher derive_session_cipher(const SessionKey& key) { return SessionCipher(key); }

}  // namespace fragkey
