#include "fragkey/transport.hpp"

#include <cmath>

#include "fragkey/error.hpp"

namespace fragkey {

void SimClock::advance(Phase p, double ms) {
  if (!(ms >= 0.0) || !std::isfinite(ms)) throw Error(Errc::parameter, "clock advance must be >= 0");
  now_ms_ += ms;
  by_phase_[static_cast<std::size_t>(p)] += ms;
}

class SimOnionTransport final : public Transport {
 public:
  SimOnionTransport(SimNetwork& net, std::string endpoint) : net_(&net), endpoint_(std::move(endpoint)) {}

  std::string_view endpoint() const override { return endpoint_; }

  DeliveryReceipt send(std::string_view destination, std::string_view path, std::string body) override {
    if (!net_->has_endpoint(destination))
      throw Error(Errc::routing, "unknown destination " + std::string(destination));
    const LatencyModel& lat = net_->latency_;
    auto it = circuits_.find(destination);
    if (it == circuits_.end()) {
      CircuitPath circuit = net_->builder_.build(endpoint_, destination, net_->rng_);
      net_->clock_.advance(Phase::transport, lat.circuit_build_ms);
      it = circuits_.emplace(std::string(destination), circuit).first;
    }
    net_->clock_.advance(Phase::transport, 6.0 * lat.per_hop_ms);
    DeliveryReceipt receipt;
    receipt.circuit_id = it->second.circuit_id;
    receipt.observation = observe(net_->relays_, it->second, net_->clock_.now_ms(), body.size());
    net_->observations_.push_back(*receipt.observation);
    receipt.message_id = net_->enqueue(destination, path, std::move(body));
    return receipt;
  }

  void newnym() override {
    circuits_.clear();
    net_->clock_.advance(Phase::transport, net_->latency_.stabilization_ms);
  }

 private:
  SimNetwork* net_;
  std::string endpoint_;
  std::map<std::string, CircuitPath, std::less<>> circuits_;  // current epoch, keyed by destination
};

class SimDirectTransport final : public Transport {
 public:
  SimDirectTransport(SimNetwork& net, std::string endpoint) : net_(&net), endpoint_(std::move(endpoint)) {}

  std::string_view endpoint() const override { return endpoint_; }

  DeliveryReceipt send(std::string_view destination, std::string_view path, std::string body) override {
    if (!net_->has_endpoint(destination))
      throw Error(Errc::routing, "unknown destination " + std::string(destination));
    net_->clock_.advance(Phase::other, net_->latency_.direct_link_ms);
    DeliveryReceipt receipt;
    receipt.message_id = net_->enqueue(destination, path, std::move(body));
    return receipt;
  }

  void newnym() override {}

 private:
  SimNetwork* net_;
  std::string endpoint_;
};

SimNetwork::SimNetwork(RelayNetwork relays, LatencyModel latency, std::uint64_t seed)
    : relays_(std::move(relays)), latency_(latency), rng_(seed), builder_(relays_) {
  validate(latency_);
}

void SimNetwork::register_endpoint(std::string address, Handler handler) {
  if (endpoints_.contains(address)) throw Error(Errc::configuration, "endpoint already registered: " + address);
  endpoints_.emplace(std::move(address), std::move(handler));
}

bool SimNetwork::has_endpoint(std::string_view address) const { return endpoints_.find(address) != endpoints_.end(); }

std::unique_ptr<Transport> SimNetwork::onion_transport(std::string endpoint) {
  return std::make_unique<SimOnionTransport>(*this, std::move(endpoint));
}

std::unique_ptr<Transport> SimNetwork::direct_transport(std::string endpoint) {
  return std::make_unique<SimDirectTransport>(*this, std::move(endpoint));
}

std::uint64_t SimNetwork::enqueue(std::string_view destination, std::string_view path, std::string body) {
  const std::uint64_t id = next_message_id_++;
  queue_.push_back(Envelope{id, std::string(destination), std::string(path), std::move(body)});
  return id;
}

std::size_t SimNetwork::pump() {
  std::size_t delivered = 0;
  while (!queue_.empty()) {
    Envelope env = std::move(queue_.front());
    queue_.pop_front();
    auto it = endpoints_.find(env.destination);
    Response resp;
    if (it == endpoints_.end()) {
      resp = Response{404, "{\"error\":\"routing\",\"message\":\"endpoint vanished\"}"};
    } else {
      resp = it->second(env.path, env.body);
    }
    responses_[env.id] = std::move(resp);
    ++delivered;
  }
  return delivered;
}

std::optional<Response> SimNetwork::response(std::uint64_t message_id) const {
  auto it = responses_.find(message_id);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

void SimNetwork::write_observation_log(std::ostream& out) const {
  for (const auto& rec : observations_) out << to_json_line(rec) << '\n';
}

}  // namespace fragkey
