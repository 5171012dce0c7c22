#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fragkey/error.hpp"
#include "fragkey/transport.hpp"

using namespace fragkey;

namespace {

RelayNetwork small_network(std::set<std::size_t> compromised = {}, GuardPolicy guards = GuardPolicy::fresh_per_circuit) {
  std::vector<Relay> relays;
  for (std::size_t i = 0; i < 20; ++i) relays.push_back({i, 1.0, compromised.contains(i)});
  return RelayNetwork(relays, SelectionPolicy::uniform, guards);
}

Handler echo_into(std::vector<std::string>& inbox) {
  return [&inbox](std::string_view, const std::string& body) {
    inbox.push_back(body);
    return Response{200, "ok"};
  };
}

}  // namespace

TEST(SimNetwork, CircuitReusedUntilNewnym) {
  SimNetwork net(small_network(), LatencyModel{}, 1);
  std::vector<std::string> inbox;
  net.register_endpoint("client.onion", echo_into(inbox));
  auto t = net.onion_transport("proxy.onion");
  const auto r1 = t->send("client.onion", "/receive-key-fragment", "one");
  const auto r2 = t->send("client.onion", "/receive-key-fragment", "two");
  EXPECT_EQ(r1.circuit_id, r2.circuit_id);
  t->newnym();
  const auto r3 = t->send("client.onion", "/receive-key-fragment", "three");
  EXPECT_NE(r3.circuit_id, r1.circuit_id);
  EXPECT_EQ(net.pump(), 3u);
  EXPECT_EQ(inbox, (std::vector<std::string>{"one", "two", "three"}));
  EXPECT_EQ(net.response(r1.message_id)->body, "ok");
  EXPECT_EQ(net.observations().size(), 3u);
}

TEST(SimNetwork, LatencyOfOneBundleOnFreshCircuit) {
  SimNetwork net(small_network(), LatencyModel{50, 2000, 0, 0, 0}, 1);
  std::vector<std::string> inbox;
  net.register_endpoint("client.onion", echo_into(inbox));
  auto t = net.onion_transport("proxy.onion");
  t->send("client.onion", "/receive-key-fragment", "bundle");
  EXPECT_DOUBLE_EQ(net.clock().spent_ms(Phase::transport), 2300.0);
  t->send("client.onion", "/receive-key-fragment", "bundle");
  EXPECT_DOUBLE_EQ(net.clock().spent_ms(Phase::transport), 2600.0);
}

TEST(SimNetwork, NewnymChargesStabilization) {
  SimNetwork net(small_network(), LatencyModel{50, 2000, 500, 0, 0}, 1);
  std::vector<std::string> inbox;
  net.register_endpoint("client.onion", echo_into(inbox));
  auto t = net.onion_transport("proxy.onion");
  t->newnym();
  t->send("client.onion", "/receive-key-fragment", "bundle");
  EXPECT_DOUBLE_EQ(net.clock().spent_ms(Phase::transport), 2800.0);
  EXPECT_DOUBLE_EQ(net.clock().now_ms(), 2800.0);
}

TEST(SimNetwork, DirectLinkIsNotObserved) {
  SimNetwork net(small_network(), LatencyModel{50, 2000, 0, 0, 3}, 1);
  std::vector<std::string> inbox;
  net.register_endpoint("qkms.internal", echo_into(inbox));
  auto t = net.direct_transport("proxy.onion");
  const auto r = t->send("qkms.internal", "/get-key", "{}");
  EXPECT_FALSE(r.circuit_id.has_value());
  net.pump();
  EXPECT_TRUE(net.observations().empty());
  EXPECT_DOUBLE_EQ(net.clock().spent_ms(Phase::other), 3.0);
  EXPECT_DOUBLE_EQ(net.clock().spent_ms(Phase::transport), 0.0);
}

TEST(SimNetwork, UnknownDestinationIsRoutingError) {
  SimNetwork net(small_network(), LatencyModel{}, 1);
  auto t = net.onion_transport("proxy.onion");
  try {
    t->send("nowhere.onion", "/get-key", "{}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::routing);
  }
  EXPECT_TRUE(net.observations().empty());
}

TEST(SimNetwork, ObservationCarriesCompromisedFlags) {
  std::set<std::size_t> all;
  for (std::size_t i = 0; i < 19; ++i) all.insert(i);
  // Relay 19 is the only clean relay; with 19 of 20 compromised both guards are usually flagged.
  SimNetwork net(small_network(all), LatencyModel{}, 2);
  std::vector<std::string> inbox;
  net.register_endpoint("client.onion", echo_into(inbox));
  auto t = net.onion_transport("proxy.onion");
  for (int i = 0; i < 30; ++i) {
    t->newnym();
    t->send("client.onion", "/receive-key-fragment", std::string(100, 'x'));
  }
  int both = 0;
  for (const auto& rec : net.observations()) {
    EXPECT_EQ(rec.message_size, 100u);
    const bool expect_client = rec.relays[0].relay_id != 19;
    const bool expect_service = rec.relays[3].relay_id != 19;
    EXPECT_EQ(rec.client_guard_compromised(), expect_client);
    EXPECT_EQ(rec.service_guard_compromised(), expect_service);
    both += expect_client && expect_service;
  }
  EXPECT_GT(both, 0);
}

TEST(SimNetwork, HandlersCanReplyThroughTheQueue) {
  SimNetwork net(small_network(), LatencyModel{}, 1);
  std::vector<std::string> inbox;
  auto back = net.onion_transport("b.onion");
  net.register_endpoint("a.onion", echo_into(inbox));
  net.register_endpoint("b.onion", [&](std::string_view, const std::string& body) {
    back->send("a.onion", "/reply", body + "!");
    return Response{202, ""};
  });
  auto t = net.onion_transport("a.onion");
  t->send("b.onion", "/ping", "hi");
  EXPECT_EQ(net.pump(), 2u);
  EXPECT_EQ(inbox, std::vector<std::string>{"hi!"});
}

TEST(SimNetwork, ObservationLogIsDeterministic) {
  const auto run = [] {
    SimNetwork net(small_network({1, 2, 3}), LatencyModel{50, 2000, 500, 0, 0}, 77);
    std::vector<std::string> inbox;
    net.register_endpoint("client.onion", echo_into(inbox));
    auto t = net.onion_transport("proxy.onion");
    for (int i = 0; i < 10; ++i) {
      t->newnym();
      t->send("client.onion", "/receive-key-fragment", "m");
    }
    net.pump();
    std::ostringstream out;
    net.write_observation_log(out);
    return out.str();
  };
  const auto log = run();
  EXPECT_EQ(log, run());
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 10);
}
