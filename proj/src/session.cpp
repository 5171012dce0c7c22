#include "fragkey/session.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "fragkey/error.hpp"

namespace fragkey {

namespace {

using Json = nlohmann::json;

constexpr std::string_view kQkmsAddress = "qkms.internal";
constexpr std::string_view kProxyA = "proxy-a.onion";
constexpr std::string_view kProxyB = "proxy-b.onion";
constexpr std::string_view kClientA = "client-a.onion";
constexpr std::string_view kClientB = "client-b.onion";

Json parse_config_json(std::string_view text) {
  try {
    Json j = Json::parse(text.begin(), text.end());
    if (!j.is_object()) throw Error(Errc::configuration, "config must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::configuration, std::string("config is not valid JSON: ") + e.what());
  }
}

void only_fields(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  const std::set<std::string_view> ok(allowed);
  for (const auto& [name, _] : j.items())
    if (!ok.contains(name))
      throw Error(Errc::configuration, "unknown config member \"" + name + "\" in " + std::string(where));
}

template <typename T>
T get_as(const Json& j, const char* field) {
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::configuration, std::string("config member \"") + field + "\" has the wrong type");
  }
}

LatencyModel parse_latency(const Json& j) {
  only_fields(j, {"per_hop_ms", "circuit_build_ms", "stabilization_ms", "crypto_ms_per_fragment", "direct_link_ms"},
              "latency");
  LatencyModel m;
  if (j.contains("per_hop_ms")) m.per_hop_ms = get_as<double>(j, "per_hop_ms");
  if (j.contains("circuit_build_ms")) m.circuit_build_ms = get_as<double>(j, "circuit_build_ms");
  if (j.contains("stabilization_ms")) m.stabilization_ms = get_as<double>(j, "stabilization_ms");
  if (j.contains("crypto_ms_per_fragment")) m.crypto_ms_per_fragment = get_as<double>(j, "crypto_ms_per_fragment");
  if (j.contains("direct_link_ms")) m.direct_link_ms = get_as<double>(j, "direct_link_ms");
  validate(m);
  return m;
}

NetworkConfig network_from_json(const Json& j) {
  only_fields(j, {"P", "f", "compromised", "weights", "selection_policy", "guard_policy", "latency", "seed"},
              "network");
  NetworkConfig c;
  if (j.contains("P")) c.relay_count = get_as<std::size_t>(j, "P");
  if (j.contains("f")) c.f = get_as<double>(j, "f");
  if (j.contains("compromised")) c.compromised = get_as<std::vector<std::size_t>>(j, "compromised");
  if (j.contains("weights")) c.weights = get_as<std::vector<double>>(j, "weights");
  if (j.contains("selection_policy")) c.selection = parse_selection_policy(get_as<std::string>(j, "selection_policy"));
  if (j.contains("guard_policy")) c.guards = parse_guard_policy(get_as<std::string>(j, "guard_policy"));
  if (j.contains("latency")) c.latency = parse_latency(j.at("latency"));
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
  if (c.f && !c.compromised.empty())
    throw Error(Errc::configuration, "give either f or compromised ids, not both");
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::configuration, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  for (auto b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

std::string join_ids(const std::vector<std::uint64_t>& ids) {
  std::string s = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s + "]";
}

}  // namespace

RelayNetwork build_network(const NetworkConfig& config, std::uint64_t fallback_seed) {
  const std::uint64_t seed = config.seed.value_or(fallback_seed);
  std::vector<Relay> relays;
  if (config.compromised.empty()) {
    auto base = RelayNetwork::with_fraction(config.relay_count, config.f.value_or(0.0), config.selection,
                                            config.guards, seed);
    relays.assign(base.relays().begin(), base.relays().end());
  } else {
    relays.resize(config.relay_count);
    for (std::size_t i = 0; i < relays.size(); ++i) relays[i].id = i;
    for (auto id : config.compromised) {
      if (id >= relays.size()) throw Error(Errc::configuration, "compromised id out of range");
      relays[id].compromised = true;
    }
  }
  if (!config.weights.empty()) {
    if (config.weights.size() != relays.size())
      throw Error(Errc::configuration, "weights must list one value per relay");
    for (std::size_t i = 0; i < relays.size(); ++i) relays[i].bandwidth_weight = config.weights[i];
  }
  return RelayNetwork(std::move(relays), config.selection, config.guards);
}

NetworkConfig parse_network_config(std::string_view json_text) { return network_from_json(parse_config_json(json_text)); }

SessionConfig parse_session_config(std::string_view json_text) {
  const Json j = parse_config_json(json_text);
  only_fields(j,
              {"tagname", "key_type", "num_of_splits", "shuffle", "channels", "network", "seed", "session_timeout_ms",
               "client_keys"},
              "session");
  SessionConfig c;
  if (j.contains("tagname")) c.tagname = get_as<std::string>(j, "tagname");
  if (j.contains("key_type")) c.key_type = get_as<long long>(j, "key_type");
  if (j.contains("num_of_splits")) c.num_of_splits = get_as<long long>(j, "num_of_splits");
  if (j.contains("shuffle")) c.shuffle = get_as<bool>(j, "shuffle");
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("session_timeout_ms")) c.session_timeout_ms = get_as<double>(j, "session_timeout_ms");
  if (j.contains("channels")) {
    const auto& ch = j.at("channels");
    only_fields(ch, {"a", "b"}, "channels");
    if (ch.contains("a")) c.channels_a = get_as<std::vector<std::string>>(ch, "a");
    if (ch.contains("b")) c.channels_b = get_as<std::vector<std::string>>(ch, "b");
  }
  if (j.contains("network")) c.network = network_from_json(j.at("network"));
  if (j.contains("client_keys")) {
    const auto& keys = j.at("client_keys");
    only_fields(keys, {"a", "b"}, "client_keys");
    if (keys.contains("a")) c.client_a_key_pem = get_as<std::string>(keys, "a");
    if (keys.contains("b")) c.client_b_key_pem = get_as<std::string>(keys, "b");
  }
  return c;
}

std::string to_json(const RunReport& r) {
  std::string s = "{";
  s += "\"key_reconstructed\":" + std::string(r.key_reconstructed ? "true" : "false");
  s += ",\"keys_agree\":" + std::string(r.keys_agree ? "true" : "false");
  s += ",\"failure_phase\":" + Json(r.failure_phase).dump();
  s += ",\"failure\":" + Json(r.failure).dump();
  s += ",\"crypto_ms\":" + format_ms(r.crypto_ms);
  s += ",\"transport_ms\":" + format_ms(r.transport_ms);
  s += ",\"other_ms\":" + format_ms(r.other_ms);
  s += ",\"total_ms\":" + format_ms(r.total_ms);
  char frac[32];
  std::snprintf(frac, sizeof frac, "%.6f", r.fraction_transport);
  s += ",\"fraction_transport\":" + std::string(frac);
  s += ",\"bundles_a\":" + std::to_string(r.bundles_a);
  s += ",\"bundles_b\":" + std::to_string(r.bundles_b);
  s += ",\"bundle_count\":" + std::to_string(r.bundle_count);
  s += ",\"circuits_a\":" + join_ids(r.circuits_a);
  s += ",\"circuits_b\":" + join_ids(r.circuits_b);
  s += ",\"key_digest\":\"" + r.key_digest + "\"}";
  return s;
}

SessionKeys load_session_keys(const SessionConfig& config) {
  auto load = [](const std::optional<std::string>& path) {
    return path ? load_private_key_pem(read_file(*path)) : generate_rsa_keypair();
  };
  return SessionKeys{load(config.client_a_key_pem), load(config.client_b_key_pem)};
}

SessionRun run_session(const SessionConfig& config, const SessionKeys& keys) {
  SessionRun run;
  RunReport& report = run.report;

  SimNetwork net(build_network(config.network, derive_seed(config.seed, {0x6e6574})), config.network.latency,
                 derive_seed(config.seed, {0x70617468}));
  SimClock* clock = &net.clock();
  const double crypto_ms = config.network.latency.crypto_ms_per_fragment;

  Qkms qkms(QkmsConfig{config.session_timeout_ms, crypto_ms, config.splitter}, derive_seed(config.seed, {0x716b6d73}),
            clock);
  auto qkms_link = net.direct_transport(std::string(kQkmsAddress));
  QkmsService qkms_service(qkms, *qkms_link, clock);
  net.register_endpoint(std::string(kQkmsAddress),
                        [&](std::string_view path, const std::string& body) { return qkms_service.handle(path, body); });

  auto proxy_a_link = net.direct_transport(std::string(kProxyA));
  auto proxy_b_link = net.direct_transport(std::string(kProxyB));
  auto proxy_a_onion = net.onion_transport(std::string(kProxyA));
  auto proxy_b_onion = net.onion_transport(std::string(kProxyB));
  Proxy proxy_a({"A", config.channels_a, std::string(kQkmsAddress), std::string(kClientA)}, *proxy_a_link,
                *proxy_a_onion);
  Proxy proxy_b({"B", config.channels_b, std::string(kQkmsAddress), std::string(kClientB)}, *proxy_b_link,
                *proxy_b_onion);
  for (Proxy* p : {&proxy_a, &proxy_b}) {
    const std::string onion = p == &proxy_a ? std::string(kProxyA) : std::string(kProxyB);
    net.register_endpoint(onion, [p](std::string_view path, const std::string& body) {
      if (path != wire::kGetKeyPath) return Response{404, "{}"};
      return p->on_get_key(body);
    });
    for (const auto& ch : std::set<std::string>(p->config().channels.begin(), p->config().channels.end()))
      net.register_endpoint(ch, [p](std::string_view, const std::string& body) { return p->on_channel(body); });
  }

  Client client_a("A", keys.client_a, clock, crypto_ms);
  Client client_b("B", keys.client_b, clock, crypto_ms);
  auto client_a_onion = net.onion_transport(std::string(kClientA));
  auto client_b_onion = net.onion_transport(std::string(kClientB));
  for (Client* c : {&client_a, &client_b}) {
    const std::string onion = c == &client_a ? std::string(kClientA) : std::string(kClientB);
    net.register_endpoint(onion, [c](std::string_view path, const std::string& body) {
      if (path != wire::kReceiveFragmentPath) return Response{404, "{}"};
      return c->on_receive_fragment(body);
    });
  }
  run.key_scheme = keys.client_a.public_key->scheme();

  auto fail = [&](std::string phase, std::string why) {
    if (report.failure_phase.empty()) {
      report.failure_phase = std::move(phase);
      report.failure = std::move(why);
    }
  };

  // The tagname is pre-shared; each client posts /get-key to its proxy over the onion network.
  try {
    const auto req_a = client_a.make_request(config.tagname, config.key_type, config.num_of_splits, config.shuffle);
    const auto req_b = client_b.make_request(config.tagname, config.key_type, config.num_of_splits, config.shuffle);
    client_a.open_session(req_a);
    client_b.open_session(req_b);
    const auto sent_a = client_a_onion->send(kProxyA, wire::kGetKeyPath, wire::encode(req_a));
    const auto sent_b = client_b_onion->send(kProxyB, wire::kGetKeyPath, wire::encode(req_b));
    // Forwarding, pairing, dispatch and delivery all happen inside the scheduler.
    net.pump();
    for (auto id : {sent_a.message_id, sent_b.message_id}) {
      const auto resp = net.response(id);
      if (!resp || resp->status >= 300) fail("request", resp ? resp->body : "no response");
    }
  } catch (const Error& e) {
    fail("request", e.what());
  }

  const SessionRecord* rec = qkms.session(config.tagname);
  if (!rec) {
    fail("pairing", "QKMS holds no session for the tagname");
  } else if (rec->state == SessionState::waiting_for_peer) {
    fail("pairing", "QKMS still waiting for a peer");
  } else if (rec->state == SessionState::failed) {
    fail("dispatch", rec->failure);
  }
  if (rec) run.dispatched_bundles = rec->bundles_per_endpoint;
  if (proxy_a.failed(config.tagname) || proxy_b.failed(config.tagname)) fail("delivery", "proxy delivery failed");

  run.qkms_key = qkms.issued_key(config.tagname);
  const ClientSessionState* sa = client_a.session(config.tagname);
  const ClientSessionState* sb = client_b.session(config.tagname);
  if (sa && sa->key) run.key_a = sa->key;
  if (sb && sb->key) run.key_b = sb->key;
  for (const ClientSessionState* s : {sa, sb})
    if (s && s->failed) fail("reconstruction", s->failure);

  report.key_reconstructed = run.key_a.has_value() && run.key_b.has_value();
  report.keys_agree = report.key_reconstructed && run.qkms_key && *run.key_a == *run.qkms_key &&
                      *run.key_b == *run.qkms_key;
  if (!report.key_reconstructed)
    fail("reconstruction", "a client did not reconstruct the key");
  else if (!report.keys_agree)
    fail("agreement", "reconstructed keys differ from the issued key");

  report.crypto_ms = clock->spent_ms(Phase::crypto);
  report.transport_ms = clock->spent_ms(Phase::transport);
  report.other_ms = clock->spent_ms(Phase::other);
  report.total_ms = report.crypto_ms + report.transport_ms + report.other_ms;
  report.fraction_transport = report.total_ms > 0.0 ? report.transport_ms / report.total_ms : 0.0;
  report.circuits_a = proxy_a.circuits_used(config.tagname);
  report.circuits_b = proxy_b.circuits_used(config.tagname);
  report.bundles_a = proxy_a.bundles_forwarded(config.tagname);
  report.bundles_b = proxy_b.bundles_forwarded(config.tagname);
  report.bundle_count = report.bundles_a + report.bundles_b;
  if (run.qkms_key) report.key_digest = hex(crypto::sha256(run.qkms_key->bits.bytes()));

  run.qkms_trace = qkms.trace();
  run.client_a_trace = client_a.trace();
  run.client_b_trace = client_b.trace();
  run.proxy_a_state = proxy_a.observable_state();
  run.proxy_b_state = proxy_b.observable_state();
  std::ostringstream log;
  net.write_observation_log(log);
  run.observation_log = log.str();
  return run;
}

}  // namespace fragkey
