#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fragkey/random.hpp"

namespace fragkey {

enum class SelectionPolicy { uniform, bandwidth_weighted };

// pinned_service_side pins only the guard of the half built by the onion service being reached;
// pinned_per_endpoint pins the guard of both halves.
enum class GuardPolicy { fresh_per_circuit, pinned_service_side, pinned_per_endpoint };

std::string_view to_string(SelectionPolicy p) noexcept;
std::string_view to_string(GuardPolicy p) noexcept;
SelectionPolicy parse_selection_policy(std::string_view text);
GuardPolicy parse_guard_policy(std::string_view text);

struct Relay {
  std::size_t id = 0;
  double bandwidth_weight = 1.0;
  bool compromised = false;
};

class RelayNetwork {
 public:
  RelayNetwork(std::vector<Relay> relays, SelectionPolicy selection, GuardPolicy guards);

  /// P relays of unit weight with round(f*P) of them compromised; f*P must be integral.
  /// The compromised subset is drawn with the given seed.
  static RelayNetwork with_fraction(std::size_t relay_count, double f, SelectionPolicy selection, GuardPolicy guards,
                                    std::uint64_t seed);

  std::span<const Relay> relays() const noexcept { return relays_; }
  std::size_t size() const noexcept { return relays_.size(); }
  const Relay& relay(std::size_t id) const { return relays_.at(id); }
  SelectionPolicy selection() const noexcept { return selection_; }
  GuardPolicy guard_policy() const noexcept { return guards_; }

  std::size_t compromised_count() const noexcept { return compromised_count_; }
  double compromised_fraction() const noexcept;
  /// W_S / W.
  double compromised_weight_share() const noexcept;
  /// Probability a single draw lands in the compromised set under the selection policy.
  double compromised_draw_probability() const noexcept;

  /// One draw under the selection policy, rejecting ids already in `taken`.
  std::size_t sample(Rng& rng, std::span<const std::size_t> taken = {}) const;

 private:
  std::size_t draw_once(Rng& rng) const;

  std::vector<Relay> relays_;
  std::vector<double> cumulative_;
  double total_weight_ = 0.0;
  double compromised_weight_ = 0.0;
  std::size_t compromised_count_ = 0;
  SelectionPolicy selection_;
  GuardPolicy guards_;
};

struct CircuitPath {
  std::array<std::size_t, 3> client_half{};   // guard, middle, rendezvous
  std::array<std::size_t, 3> service_half{};  // guard, middle, hop to rendezvous
  std::uint64_t circuit_id = 0;

  std::size_t client_guard() const noexcept { return client_half[0]; }
  std::size_t service_guard() const noexcept { return service_half[0]; }
};

/// Path selection state: circuit counter plus each endpoint's pinned guard.
class CircuitBuilder {
 public:
  explicit CircuitBuilder(const RelayNetwork& network) : network_(&network) {}

  CircuitPath build(std::string_view client_endpoint, std::string_view service_endpoint, Rng& rng);

  /// Forget pinned guards (a new session for the experiment harness).
  void reset_pins() { pins_.clear(); }
  std::optional<std::size_t> pinned_guard(std::string_view endpoint) const;
  const RelayNetwork& network() const noexcept { return *network_; }

 private:
  std::size_t guard_for(std::string_view endpoint, bool pinned, Rng& rng);
  std::array<std::size_t, 3> build_half(std::string_view endpoint, bool pinned, Rng& rng);

  const RelayNetwork* network_;
  std::vector<std::pair<std::string, std::size_t>> pins_;
  std::uint64_t next_circuit_id_ = 1;
};

struct RelayObservation {
  std::size_t relay_id = 0;
  bool compromised = false;
};

/// What the adversary log holds for one send: positions 0-2 client half, 3-5 service half.
struct ObservationRecord {
  std::uint64_t circuit_id = 0;
  std::array<RelayObservation, 6> relays{};
  double timestamp_ms = 0.0;
  std::size_t message_size = 0;

  bool client_guard_compromised() const noexcept { return relays[0].compromised; }
  bool service_guard_compromised() const noexcept { return relays[3].compromised; }
  std::size_t compromised_positions() const noexcept;
};

ObservationRecord observe(const RelayNetwork& network, const CircuitPath& path, double timestamp_ms,
                          std::size_t message_size);

std::string to_json_line(const ObservationRecord& record);

struct LatencyModel {
  double per_hop_ms = 0.0;
  double circuit_build_ms = 0.0;
  double stabilization_ms = 0.0;
  // Session-level cost knobs used by the report.
  double crypto_ms_per_fragment = 0.0;
  double direct_link_ms = 0.0;
};

void validate(const LatencyModel& model);

}  // namespace fragkey
