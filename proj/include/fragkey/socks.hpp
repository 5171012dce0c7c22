#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

#include "fragkey/transport.hpp"

namespace fragkey {

/// Connection to an onion-routing daemon's control port (cookie authentication).
class ControlConnection {
 public:
  ControlConnection(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);
  ~ControlConnection();
  ControlConnection(const ControlConnection&) = delete;
  ControlConnection& operator=(const ControlConnection&) = delete;

  /// AUTHENTICATE with the hex-encoded cookie file contents.
  void authenticate_with_cookie_file(const std::string& cookie_path);
  void authenticate_with_cookie(std::string_view cookie_bytes);
  void signal_newnym();
  /// Sends one command line and returns the final reply line; throws Errc::transport unless it is "250 ...".
  std::string command(std::string_view line);

 private:
  std::string read_line();

  int fd_ = -1;
  std::string buffer_;
};

struct SocksConfig {
  std::string socks_host = "127.0.0.1";
  std::uint16_t socks_port = 8005;
  std::string control_host = "127.0.0.1";
  std::uint16_t control_port = 8006;
  std::string cookie_path;
  std::uint16_t default_onion_port = 5000;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds stabilization{0};
};

/// Real-network transport: HTTP POSTs through a local SOCKS5 port, NEWNYM over the control port.
/// Blocking; never call it from the simulator's scheduler.
class SocksTransport final : public Transport {
 public:
  SocksTransport(std::string endpoint, SocksConfig config);

  std::string_view endpoint() const override { return endpoint_; }
  /// destination is "name.onion" or "name.onion:port". The HTTP reply is in receipt.response.
  DeliveryReceipt send(std::string_view destination, std::string_view path, std::string body) override;
  void newnym() override;

 private:
  std::string endpoint_;
  SocksConfig config_;
  std::uint64_t next_message_id_ = 1;
};

}  // namespace fragkey
