#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "fragkey/error.hpp"
#include "fragkey/network.hpp"

using namespace fragkey;

namespace {

std::vector<Relay> unit_relays(std::size_t p, std::set<std::size_t> compromised = {}) {
  std::vector<Relay> out;
  for (std::size_t i = 0; i < p; ++i) out.push_back({i, 1.0, compromised.contains(i)});
  return out;
}

double se(double p, double n) { return std::sqrt(p * (1 - p) / n); }

}  // namespace

TEST(RelayNetwork, ValidatesPopulation) {
  const auto expect_network_error = [](auto fn) {
    try {
      fn();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::network);
    }
  };
  expect_network_error([] { RelayNetwork(unit_relays(5), SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit); });
  expect_network_error([] {
    auto r = unit_relays(6);
    r[2].bandwidth_weight = 0;
    RelayNetwork(r, SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit);
  });
  expect_network_error([] {
    RelayNetwork(unit_relays(6, {0, 1, 2, 3, 4, 5}), SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit);
  });
  try {
    RelayNetwork::with_fraction(10, 0.25, SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit, 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parameter);
  }
}

TEST(RelayNetwork, WithFractionMarksExactCount) {
  const auto net = RelayNetwork::with_fraction(100, 0.2, SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit, 9);
  EXPECT_EQ(net.compromised_count(), 20u);
  EXPECT_DOUBLE_EQ(net.compromised_fraction(), 0.2);
  EXPECT_DOUBLE_EQ(net.compromised_draw_probability(), 0.2);
  const auto again = RelayNetwork::with_fraction(100, 0.2, SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit, 9);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(net.relay(i).compromised, again.relay(i).compromised);
}

TEST(RelayNetwork, PolicyNames) {
  EXPECT_EQ(parse_selection_policy("bandwidth_weighted"), SelectionPolicy::bandwidth_weighted);
  EXPECT_EQ(parse_guard_policy("pinned_service_side"), GuardPolicy::pinned_service_side);
  EXPECT_EQ(parse_guard_policy(to_string(GuardPolicy::pinned_per_endpoint)), GuardPolicy::pinned_per_endpoint);
  EXPECT_THROW(parse_guard_policy("sometimes"), Error);
}

TEST(CircuitBuilder, SixRelaysUseEveryRelayPerHalf) {
  const RelayNetwork net(unit_relays(6), SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit);
  CircuitBuilder builder(net);
  Rng rng(1);
  std::uint64_t last_id = 0;
  for (int i = 0; i < 200; ++i) {
    const auto c = builder.build("proxy", "client.onion", rng);
    EXPECT_GT(c.circuit_id, last_id);
    last_id = c.circuit_id;
    for (const auto& half : {c.client_half, c.service_half}) {
      std::set<std::size_t> ids(half.begin(), half.end());
      EXPECT_EQ(ids.size(), 3u);
    }
    std::multiset<std::size_t> all(c.client_half.begin(), c.client_half.end());
    all.insert(c.service_half.begin(), c.service_half.end());
    EXPECT_EQ(all.size(), 6u);
  }
}

TEST(CircuitBuilder, UniformGuardMarginal) {
  const RelayNetwork net(unit_relays(100), SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit);
  CircuitBuilder builder(net);
  Rng rng(100);
  constexpr int kBuilds = 100000;
  std::vector<int> counts(100);
  for (int i = 0; i < kBuilds; ++i) counts[builder.build("a", "b", rng).client_guard()]++;
  for (int c : counts) EXPECT_NEAR(c / double(kBuilds), 0.01, 3 * se(0.01, kBuilds));
}

TEST(CircuitBuilder, WeightedGuardMarginal) {
  auto relays = unit_relays(100);
  relays[0].bandwidth_weight = 99.0;
  const RelayNetwork net(relays, SelectionPolicy::bandwidth_weighted, GuardPolicy::fresh_per_circuit);
  CircuitBuilder builder(net);
  Rng rng(7);
  constexpr int kBuilds = 100000;
  int heavy = 0;
  for (int i = 0; i < kBuilds; ++i) heavy += builder.build("a", "b", rng).client_guard() == 0;
  EXPECT_NEAR(heavy / double(kBuilds), 0.5, 3 * se(0.5, kBuilds));
}

TEST(CircuitBuilder, PinnedGuardsSurviveNewCircuits) {
  const RelayNetwork net(unit_relays(100), SelectionPolicy::uniform, GuardPolicy::pinned_per_endpoint);
  CircuitBuilder builder(net);
  Rng rng(3);
  const auto first = builder.build("proxy-a.onion", "client-a.onion", rng);
  std::set<std::size_t> middles;
  for (int epoch = 0; epoch < 100; ++epoch) {
    const auto c = builder.build("proxy-a.onion", "client-a.onion", rng);
    EXPECT_EQ(c.client_guard(), first.client_guard());
    EXPECT_EQ(c.service_guard(), first.service_guard());
    middles.insert(c.client_half[1]);
  }
  EXPECT_GT(middles.size(), 1u);
  EXPECT_EQ(builder.pinned_guard("client-a.onion"), first.service_guard());
  builder.reset_pins();
  EXPECT_FALSE(builder.pinned_guard("client-a.onion").has_value());
}

TEST(CircuitBuilder, ServiceSidePinningLeavesClientGuardFresh) {
  const RelayNetwork net(unit_relays(100), SelectionPolicy::uniform, GuardPolicy::pinned_service_side);
  CircuitBuilder builder(net);
  Rng rng(4);
  const auto first = builder.build("proxy", "client.onion", rng);
  std::set<std::size_t> client_guards;
  for (int i = 0; i < 100; ++i) {
    const auto c = builder.build("proxy", "client.onion", rng);
    EXPECT_EQ(c.service_guard(), first.service_guard());
    client_guards.insert(c.client_guard());
  }
  EXPECT_GT(client_guards.size(), 10u);
}

TEST(CircuitBuilder, FreshCorrelationConvergesToFSquared) {
  for (double f : {0.1, 0.3}) {
    const auto net =
        RelayNetwork::with_fraction(100, f, SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit, 21);
    CircuitBuilder builder(net);
    Rng rng(22);
    constexpr int kBuilds = 200000;
    int both = 0;
    for (int i = 0; i < kBuilds; ++i) {
      const auto rec = observe(net, builder.build("proxy", "client.onion", rng), 0, 0);
      both += rec.client_guard_compromised() && rec.service_guard_compromised();
    }
    EXPECT_NEAR(both / double(kBuilds), f * f, 3 * se(f * f, kBuilds)) << "f=" << f;
  }
}

TEST(CircuitBuilder, DeterministicForSeed) {
  const auto net = RelayNetwork::with_fraction(50, 0.2, SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit, 1);
  const auto run = [&] {
    CircuitBuilder builder(net);
    Rng rng(55);
    std::ostringstream log;
    for (int i = 0; i < 50; ++i) log << to_json_line(observe(net, builder.build("x", "y", rng), i, 10)) << '\n';
    return log.str();
  };
  EXPECT_EQ(run(), run());
}

TEST(Observation, FlagsAndJson) {
  const RelayNetwork net(unit_relays(8, {0, 3}), SelectionPolicy::uniform, GuardPolicy::fresh_per_circuit);
  CircuitPath path{{0, 1, 2}, {3, 4, 5}, 42};
  const auto rec = observe(net, path, 12.5, 300);
  EXPECT_TRUE(rec.client_guard_compromised());
  EXPECT_TRUE(rec.service_guard_compromised());
  EXPECT_EQ(rec.compromised_positions(), 2u);
  EXPECT_EQ(to_json_line(rec).find('\n'), std::string::npos);
  EXPECT_NE(to_json_line(rec).find("\"circuit_id\":42"), std::string::npos);

  const auto clean = observe(net, CircuitPath{{1, 2, 4}, {5, 6, 7}, 43}, 0, 1);
  EXPECT_EQ(clean.compromised_positions(), 0u);
  EXPECT_FALSE(clean.client_guard_compromised());
}

TEST(LatencyModel, RejectsNegative) {
  EXPECT_THROW(validate(LatencyModel{-1, 0, 0, 0, 0}), Error);
  EXPECT_NO_THROW(validate(LatencyModel{50, 2000, 500, 10, 0}));
}
