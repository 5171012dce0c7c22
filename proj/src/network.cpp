#include "fragkey/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fragkey/error.hpp"

namespace fragkey {

std::string_view to_string(SelectionPolicy p) noexcept {
  return p == SelectionPolicy::uniform ? "uniform" : "bandwidth_weighted";
}

std::string_view to_string(GuardPolicy p) noexcept {
  switch (p) {
    case GuardPolicy::fresh_per_circuit: return "fresh_per_circuit";
    case GuardPolicy::pinned_service_side: return "pinned_service_side";
    case GuardPolicy::pinned_per_endpoint: return "pinned_per_endpoint";
  }
  return "unknown";
}

SelectionPolicy parse_selection_policy(std::string_view text) {
  if (text == "uniform") return SelectionPolicy::uniform;
  if (text == "bandwidth_weighted" || text == "bandwidth" || text == "weighted")
    return SelectionPolicy::bandwidth_weighted;
  throw Error(Errc::configuration, "unknown selection policy \"" + std::string(text) + "\"");
}

GuardPolicy parse_guard_policy(std::string_view text) {
  if (text == "fresh_per_circuit" || text == "fresh") return GuardPolicy::fresh_per_circuit;
  if (text == "pinned_service_side" || text == "pinned") return GuardPolicy::pinned_service_side;
  if (text == "pinned_per_endpoint" || text == "pinned-both") return GuardPolicy::pinned_per_endpoint;
  throw Error(Errc::configuration, "unknown guard policy \"" + std::string(text) + "\"");
}

RelayNetwork::RelayNetwork(std::vector<Relay> relays, SelectionPolicy selection, GuardPolicy guards)
    : relays_(std::move(relays)), selection_(selection), guards_(guards) {
  if (relays_.size() < 6) throw Error(Errc::network, "a relay network needs at least 6 relays");
  cumulative_.reserve(relays_.size());
  for (std::size_t i = 0; i < relays_.size(); ++i) {
    auto& r = relays_[i];
    if (r.id != i) throw Error(Errc::network, "relay ids must be 0..P-1 in order");
    if (!(r.bandwidth_weight > 0.0) || !std::isfinite(r.bandwidth_weight))
      throw Error(Errc::network, "relay " + std::to_string(i) + " has a non-positive bandwidth weight");
    total_weight_ += r.bandwidth_weight;
    cumulative_.push_back(total_weight_);
    if (r.compromised) {
      ++compromised_count_;
      compromised_weight_ += r.bandwidth_weight;
    }
  }
  if (compromised_count_ == relays_.size()) throw Error(Errc::network, "compromised fraction must be below 1");
}

RelayNetwork RelayNetwork::with_fraction(std::size_t relay_count, double f, SelectionPolicy selection,
                                         GuardPolicy guards, std::uint64_t seed) {
  if (!(f >= 0.0 && f < 1.0)) throw Error(Errc::parameter, "f must be in [0, 1)");
  const double exact = f * static_cast<double>(relay_count);
  const auto count = static_cast<std::size_t>(std::llround(exact));
  if (std::abs(exact - static_cast<double>(count)) > 1e-9)
    throw Error(Errc::parameter, "f * P must be an integer (f=" + std::to_string(f) +
                                     ", P=" + std::to_string(relay_count) + ")");
  std::vector<Relay> relays(relay_count);
  std::vector<std::size_t> order(relay_count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < relay_count; ++i) relays[i].id = i;
  // Partial Fisher-Yates picks the compromised subset.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniform_index(rng, relay_count - i);
    std::swap(order[i], order[j]);
    relays[order[i]].compromised = true;
  }
  return RelayNetwork(std::move(relays), selection, guards);
}

double RelayNetwork::compromised_fraction() const noexcept {
  return static_cast<double>(compromised_count_) / static_cast<double>(relays_.size());
}

double RelayNetwork::compromised_weight_share() const noexcept { return compromised_weight_ / total_weight_; }

double RelayNetwork::compromised_draw_probability() const noexcept {
  return selection_ == SelectionPolicy::uniform ? compromised_fraction() : compromised_weight_share();
}

std::size_t RelayNetwork::draw_once(Rng& rng) const {
  if (selection_ == SelectionPolicy::uniform) return uniform_index(rng, relays_.size());
  const double u = std::uniform_real_distribution<double>(0.0, total_weight_)(rng);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<std::size_t>(it - cumulative_.begin());
}

std::size_t RelayNetwork::sample(Rng& rng, std::span<const std::size_t> taken) const {
  if (taken.size() >= relays_.size()) throw Error(Errc::network, "no eligible relay left");
  // Rejecting duplicates is the same as drawing from the renormalized remainder.
  for (;;) {
    const std::size_t id = draw_once(rng);
    if (std::find(taken.begin(), taken.end(), id) == taken.end()) return id;
  }
}

std::optional<std::size_t> CircuitBuilder::pinned_guard(std::string_view endpoint) const {
  for (const auto& [name, guard] : pins_)
    if (name == endpoint) return guard;
  return std::nullopt;
}

std::size_t CircuitBuilder::guard_for(std::string_view endpoint, bool pinned, Rng& rng) {
  if (!pinned) return network_->sample(rng);
  if (auto g = pinned_guard(endpoint)) return *g;
  const std::size_t g = network_->sample(rng);
  pins_.emplace_back(std::string(endpoint), g);
  return g;
}

std::array<std::size_t, 3> CircuitBuilder::build_half(std::string_view endpoint, bool pinned, Rng& rng) {
  if (network_->size() < 3) throw Error(Errc::network, "fewer than 3 eligible relays for a circuit half");
  std::array<std::size_t, 3> half{};
  half[0] = guard_for(endpoint, pinned, rng);
  half[1] = network_->sample(rng, std::span<const std::size_t>(half.data(), 1));
  half[2] = network_->sample(rng, std::span<const std::size_t>(half.data(), 2));
  return half;
}

CircuitPath CircuitBuilder::build(std::string_view client_endpoint, std::string_view service_endpoint, Rng& rng) {
  const GuardPolicy policy = network_->guard_policy();
  CircuitPath path;
  path.client_half = build_half(client_endpoint, policy == GuardPolicy::pinned_per_endpoint, rng);
  path.service_half = build_half(service_endpoint, policy != GuardPolicy::fresh_per_circuit, rng);
  path.circuit_id = next_circuit_id_++;
  return path;
}

std::size_t ObservationRecord::compromised_positions() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(relays.begin(), relays.end(), [](const RelayObservation& r) { return r.compromised; }));
}

ObservationRecord observe(const RelayNetwork& network, const CircuitPath& path, double timestamp_ms,
                          std::size_t message_size) {
  ObservationRecord rec;
  rec.circuit_id = path.circuit_id;
  rec.timestamp_ms = timestamp_ms;
  rec.message_size = message_size;
  for (std::size_t i = 0; i < 3; ++i) {
    rec.relays[i] = {path.client_half[i], network.relay(path.client_half[i]).compromised};
    rec.relays[3 + i] = {path.service_half[i], network.relay(path.service_half[i]).compromised};
  }
  return rec;
}

std::string to_json_line(const ObservationRecord& r) {
  std::string s = "{\"circuit_id\":" + std::to_string(r.circuit_id) + ",\"relays\":[";
  for (std::size_t i = 0; i < r.relays.size(); ++i) {
    if (i) s += ",";
    s += "{\"id\":" + std::to_string(r.relays[i].relay_id) +
         ",\"compromised\":" + (r.relays[i].compromised ? "true" : "false") + "}";
  }
  char ts[64];
  std::snprintf(ts, sizeof ts, "%.3f", r.timestamp_ms);
  s += "],\"timestamp_ms\":";
  s += ts;
  s += ",\"message_size\":" + std::to_string(r.message_size) + "}";
  return s;
}

void validate(const LatencyModel& m) {
  for (double v : {m.per_hop_ms, m.circuit_build_ms, m.stabilization_ms, m.crypto_ms_per_fragment, m.direct_link_ms})
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::configuration, "latency model values must be >= 0");
}

}  // namespace fragkey
