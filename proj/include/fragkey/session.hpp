#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fragkey/actors.hpp"
#include "fragkey/network.hpp"

namespace fragkey {

struct NetworkConfig {
  std::size_t relay_count = 100;
  std::optional<double> f;                // either f ...
  std::vector<std::size_t> compromised;  // ... or explicit compromised ids
  std::vector<double> weights;            // empty = unit weights
  SelectionPolicy selection = SelectionPolicy::uniform;
  GuardPolicy guards = GuardPolicy::fresh_per_circuit;
  LatencyModel latency;
  std::optional<std::uint64_t> seed;  // compromised-subset draw; falls back to the session seed
};

RelayNetwork build_network(const NetworkConfig& config, std::uint64_t fallback_seed);
/// Strict JSON reader; unknown members are a configuration error.
NetworkConfig parse_network_config(std::string_view json_text);

struct SessionConfig {
  std::string tagname = "session-2026-05-12-001";
  long long key_type = 768;
  long long num_of_splits = 10;
  bool shuffle = true;
  std::vector<std::string> channels_a{"http://10.0.0.5:4000/", "http://10.0.0.5:4001/"};
  std::vector<std::string> channels_b{"http://10.0.0.6:4000/", "http://10.0.0.6:4001/"};
  NetworkConfig network;
  std::uint64_t seed = 1;
  double session_timeout_ms = 0.0;
  std::optional<std::string> client_a_key_pem;  // paths; generated when absent
  std::optional<std::string> client_b_key_pem;
  Splitter splitter;  // test seam, defaults to split_key
};

/// Strict JSON reader for run-session configs.
SessionConfig parse_session_config(std::string_view json_text);

struct RunReport {
  bool key_reconstructed = false;
  bool keys_agree = false;
  std::string failure_phase;  // empty on success
  std::string failure;
  double crypto_ms = 0.0;
  double transport_ms = 0.0;
  double other_ms = 0.0;
  double total_ms = 0.0;
  double fraction_transport = 0.0;
  std::size_t bundles_a = 0;
  std::size_t bundles_b = 0;
  std::size_t bundle_count = 0;
  std::vector<std::uint64_t> circuits_a;  // bundle deliveries to client A
  std::vector<std::uint64_t> circuits_b;
  std::string key_digest;  // sha256 of the QKMS key, hex
};

/// Deterministic JSON rendering (fixed member order and number formatting).
std::string to_json(const RunReport& report);

struct SessionRun {
  RunReport report;
  std::optional<SessionKey> qkms_key;
  std::optional<SessionKey> key_a;
  std::optional<SessionKey> key_b;
  std::vector<std::size_t> dispatched_bundles;  // per endpoint, as issued by the QKMS
  std::vector<std::string> qkms_trace;
  std::vector<std::string> client_a_trace;
  std::vector<std::string> client_b_trace;
  std::string proxy_a_state;
  std::string proxy_b_state;
  std::string observation_log;  // JSON lines
  std::string key_scheme;
};

struct SessionKeys {
  RecipientKeyPair client_a;
  RecipientKeyPair client_b;
};

/// Key pairs from the config's PEM paths, generating fresh RSA keys where none is given.
SessionKeys load_session_keys(const SessionConfig& config);

/// Runs the full two-client flow on a fresh simulated network.
SessionRun run_session(const SessionConfig& config, const SessionKeys& keys);

}  // namespace fragkey
