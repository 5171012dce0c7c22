#include <gtest/gtest.h>

#include <set>

#include "fragkey/error.hpp"
#include "fragkey/session.hpp"

using namespace fragkey;

namespace {

const SessionKeys& keys() {
  static const SessionKeys k{generate_rsa_keypair(), generate_rsa_keypair()};
  return k;
}

}  // namespace

TEST(RunSession, DefaultsReconstructAndAgree) {
  const auto run = run_session(SessionConfig{}, keys());
  EXPECT_TRUE(run.report.key_reconstructed);
  EXPECT_TRUE(run.report.keys_agree);
  EXPECT_EQ(run.report.failure_phase, "");
  ASSERT_TRUE(run.qkms_key.has_value());
  EXPECT_EQ(run.qkms_key->key_type(), 768u);
  EXPECT_EQ(*run.key_a, *run.qkms_key);
  EXPECT_EQ(*run.key_b, *run.qkms_key);
  EXPECT_EQ(run.report.key_digest.size(), 64u);
  EXPECT_EQ(run.key_scheme, "RSA-2048-OAEP-SHA256/AES-256-GCM");
}

TEST(RunSession, QkmsTraceListsEveryPart) {
  const auto run = run_session(SessionConfig{}, keys());
  std::set<std::string> parts;
  for (const auto& line : run.qkms_trace)
    if (line.rfind("Part ", 0) == 0) parts.insert(line.substr(0, line.find(':')));
  EXPECT_EQ(parts.size(), 10u);
  EXPECT_TRUE(parts.contains("Part 7 of 10"));
  EXPECT_EQ(run.client_a_trace.back(), "[CLIENT] All 10 fragments received; reassembling.");
}

TEST(RunSession, OneFragmentMeansOneBundlePerClient) {
  SessionConfig c;
  c.num_of_splits = 1;
  const auto run = run_session(c, keys());
  EXPECT_TRUE(run.report.keys_agree);
  EXPECT_EQ(run.report.bundles_a, 1u);
  EXPECT_EQ(run.report.bundles_b, 1u);
  EXPECT_EQ(run.report.circuits_a.size(), 1u);
}

TEST(RunSession, CircuitPerBundle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SessionConfig c;
    c.seed = seed;
    const auto run = run_session(c, keys());
    ASSERT_EQ(run.dispatched_bundles.size(), 2u);
    EXPECT_EQ(std::set<std::uint64_t>(run.report.circuits_a.begin(), run.report.circuits_a.end()).size(),
              run.dispatched_bundles[0]);
    EXPECT_EQ(std::set<std::uint64_t>(run.report.circuits_b.begin(), run.report.circuits_b.end()).size(),
              run.dispatched_bundles[1]);
    EXPECT_EQ(run.report.bundles_a, run.dispatched_bundles[0]);
  }
}

// Hand-computed phase sums: each client's /get-key costs one circuit build plus six hops
// (2000 + 300); each bundle costs a NEWNYM wait, a build and six hops (500 + 2000 + 300);
// crypto is 10 ms per fragment encryption and per decryption, 10 fragments x 2 clients.
TEST(RunSession, LatencyDecompositionMatchesHandSums) {
  SessionConfig c;
  c.network.latency = LatencyModel{50, 2000, 500, 10, 0};
  const auto run = run_session(c, keys());
  const auto& r = run.report;
  ASSERT_TRUE(r.keys_agree);
  EXPECT_DOUBLE_EQ(r.transport_ms, 2 * 2300.0 + static_cast<double>(r.bundle_count) * 2800.0);
  EXPECT_DOUBLE_EQ(r.crypto_ms, 400.0);
  EXPECT_DOUBLE_EQ(r.other_ms, 0.0);
  EXPECT_DOUBLE_EQ(r.total_ms, r.crypto_ms + r.transport_ms + r.other_ms);
  EXPECT_DOUBLE_EQ(r.fraction_transport, r.transport_ms / r.total_ms);
  EXPECT_GT(r.fraction_transport, 0.8);
}

TEST(RunSession, DeterministicReportAndLog) {
  SessionConfig c;
  c.seed = 99;
  c.network.f = 0.2;
  c.network.latency = LatencyModel{50, 2000, 500, 10, 1};
  const auto a = run_session(c, keys());
  const auto b = run_session(c, keys());
  EXPECT_EQ(to_json(a.report), to_json(b.report));
  EXPECT_EQ(a.observation_log, b.observation_log);
  c.seed = 100;
  EXPECT_NE(to_json(run_session(c, keys()).report), to_json(a.report));
}

TEST(RunSession, BrokenSplitIsCaught) {
  SessionConfig c;
  c.splitter = [](const SessionKey& key, long long n) {
    auto set = split_key(key, n);
    set.fragments.pop_back();
    return set;
  };
  const auto run = run_session(c, keys());
  EXPECT_FALSE(run.report.keys_agree);
  EXPECT_FALSE(run.report.failure_phase.empty());
}

TEST(RunSession, InvalidParametersFailAtRequest) {
  SessionConfig c;
  c.key_type = 12;
  const auto run = run_session(c, keys());
  EXPECT_FALSE(run.report.key_reconstructed);
  EXPECT_EQ(run.report.failure_phase, "request");
}

TEST(Config, SessionJson) {
  const auto c = parse_session_config(R"({
    "tagname": "t-1", "key_type": 256, "num_of_splits": 4, "shuffle": false, "seed": 5,
    "channels": {"a": ["http://10.0.0.5:4000/"], "b": ["http://10.0.0.6:4000/", "http://10.0.0.6:4001/"]},
    "network": {"P": 50, "f": 0.2, "selection_policy": "uniform", "guard_policy": "pinned_service_side",
                "latency": {"per_hop_ms": 50, "circuit_build_ms": 2000, "stabilization_ms": 500}}
  })");
  EXPECT_EQ(c.tagname, "t-1");
  EXPECT_EQ(c.key_type, 256);
  EXPECT_EQ(c.num_of_splits, 4);
  EXPECT_FALSE(c.shuffle);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.channels_a.size(), 1u);
  EXPECT_EQ(c.network.relay_count, 50u);
  EXPECT_EQ(c.network.guards, GuardPolicy::pinned_service_side);
  EXPECT_DOUBLE_EQ(c.network.latency.stabilization_ms, 500);
  EXPECT_TRUE(run_session(c, keys()).report.keys_agree);
}

TEST(Config, RejectsUnknownMembersAndBadValues) {
  const auto code = [](std::string_view json) {
    try {
      parse_session_config(json);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::state;
  };
  EXPECT_EQ(code(R"({"tagnme": "x"})"), Errc::configuration);
  EXPECT_EQ(code(R"({"network": {"P": 10, "latency": {"hop_ms": 1}}})"), Errc::configuration);
  EXPECT_EQ(code("not json"), Errc::configuration);
}

TEST(Config, NetworkValidationHappensAtBuild) {
  const auto code = [](std::string_view json) {
    try {
      build_network(parse_network_config(json), 1);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::state;
  };
  EXPECT_EQ(code(R"({"P": 10, "f": 0.25})"), Errc::parameter);
  EXPECT_EQ(code(R"({"P": 4})"), Errc::network);
  EXPECT_EQ(code(R"({"P": 10, "compromised": [10]})"), Errc::configuration);
  EXPECT_EQ(code(R"({"P": 10, "f": 0.2})"), Errc::state);
}

TEST(Config, ExplicitCompromisedIds) {
  const auto cfg = parse_network_config(R"({"P": 10, "compromised": [0, 3], "weights": [9,1,1,1,1,1,1,1,1,1],
                                             "selection_policy": "bandwidth_weighted"})");
  const auto net = build_network(cfg, 1);
  EXPECT_EQ(net.compromised_count(), 2u);
  EXPECT_TRUE(net.relay(3).compromised);
  EXPECT_DOUBLE_EQ(net.compromised_weight_share(), 10.0 / 18.0);
}
