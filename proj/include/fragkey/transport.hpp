#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fragkey/network.hpp"

namespace fragkey {

struct Response {
  int status = 200;
  std::string body;
};

using Handler = std::function<Response(std::string_view path, const std::string& body)>;

struct DeliveryReceipt {
  std::uint64_t message_id = 0;
  std::optional<std::uint64_t> circuit_id;        // onion sends only
  std::optional<ObservationRecord> observation;  // onion sends only
  std::optional<Response> response;              // synchronous transports only
};

/// Request/response messaging between named endpoints.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string_view endpoint() const = 0;
  /// Throws Errc::routing for an unknown destination and Errc::transport for delivery failures.
  virtual DeliveryReceipt send(std::string_view destination, std::string_view path, std::string body) = 0;
  /// Subsequent sends use a fresh circuit. No-op for transports without circuits.
  virtual void newnym() = 0;
};

enum class Phase : std::size_t { crypto = 0, transport = 1, other = 2 };

/// Logical clock; every advance is attributed to one phase so reports can decompose latency.
class SimClock {
 public:
  double now_ms() const noexcept { return now_ms_; }
  double spent_ms(Phase p) const noexcept { return by_phase_[static_cast<std::size_t>(p)]; }
  void advance(Phase p, double ms);

 private:
  double now_ms_ = 0.0;
  std::array<double, 3> by_phase_{};
};

/// Single-scheduler simulation of onion routing plus conventional links. Sends are queued and
/// delivered in FIFO order by pump(); handlers may send further messages.
class SimNetwork {
 public:
  SimNetwork(RelayNetwork relays, LatencyModel latency, std::uint64_t seed);

  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  void register_endpoint(std::string address, Handler handler);
  bool has_endpoint(std::string_view address) const;

  /// Circuit-routed transport owned by `endpoint` (an onion service address).
  std::unique_ptr<Transport> onion_transport(std::string endpoint);
  /// Conventional point-to-point link; no circuits, no adversary observation.
  std::unique_ptr<Transport> direct_transport(std::string endpoint);

  /// Deliver queued messages until the queue is empty. Returns the number delivered.
  std::size_t pump();

  std::optional<Response> response(std::uint64_t message_id) const;
  const std::vector<ObservationRecord>& observations() const noexcept { return observations_; }
  void write_observation_log(std::ostream& out) const;

  SimClock& clock() noexcept { return clock_; }
  const SimClock& clock() const noexcept { return clock_; }
  const RelayNetwork& relays() const noexcept { return relays_; }
  const LatencyModel& latency() const noexcept { return latency_; }

 private:
  friend class SimOnionTransport;
  friend class SimDirectTransport;

  struct Envelope {
    std::uint64_t id;
    std::string destination;
    std::string path;
    std::string body;
  };

  std::uint64_t enqueue(std::string_view destination, std::string_view path, std::string body);

  RelayNetwork relays_;
  LatencyModel latency_;
  Rng rng_;
  CircuitBuilder builder_;
  SimClock clock_;
  std::map<std::string, Handler, std::less<>> endpoints_;
  std::deque<Envelope> queue_;
  std::map<std::uint64_t, Response> responses_;
  std::vector<ObservationRecord> observations_;
  std::uint64_t next_message_id_ = 1;
};

}  // namespace fragkey
