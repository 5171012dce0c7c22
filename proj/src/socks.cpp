#include "fragkey/socks.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "fragkey/error.hpp"

namespace fragkey {

namespace {

class Socket {
 public:
  Socket(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
      throw Error(Errc::transport, "cannot resolve " + host);
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd_ < 0) continue;
      timeval tv{static_cast<time_t>(timeout.count() / 1000), static_cast<suseconds_t>(timeout.count() % 1000 * 1000)};
      setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    freeaddrinfo(res);
    if (fd_ < 0) throw Error(Errc::transport, "cannot connect to " + host + ":" + std::to_string(port));
  }
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw Error(Errc::transport, std::string("send failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string read_exact(int fd, std::size_t count) {
  std::string out(count, '\0');
  std::size_t got = 0;
  while (got < count) {
    const ssize_t n = ::recv(fd, out.data() + got, count - got, 0);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw Error(Errc::transport, "connection closed during read");
    }
    got += static_cast<std::size_t>(n);
  }
  return out;
}

std::string read_to_eof(int fd) {
  std::string out;
  char buf[4096];
  for (;;) {
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n == 0) break;
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::transport, std::string("recv failed: ") + std::strerror(errno));
    }
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

std::string socks_error(std::uint8_t code) {
  switch (code) {
    case 1: return "general failure";
    case 2: return "connection not allowed by ruleset";
    case 3: return "network unreachable";
    case 4: return "host unreachable";
    case 5: return "connection refused";
    case 6: return "TTL expired";
    case 7: return "command not supported";
    case 8: return "address type not supported";
  }
  return "error " + std::to_string(code);
}

// RFC 1928 CONNECT by domain name, no authentication.
void socks5_connect(int fd, const std::string& host, std::uint16_t port) {
  if (host.empty() || host.size() > 255) throw Error(Errc::transport, "SOCKS5 host name length out of range");
  write_all(fd, std::string("\x05\x01\x00", 3));
  const std::string method = read_exact(fd, 2);
  if (method[0] != 0x05 || method[1] != 0x00) throw Error(Errc::transport, "SOCKS5 proxy refused no-auth method");
  std::string req("\x05\x01\x00\x03", 4);
  req.push_back(static_cast<char>(host.size()));
  req += host;
  req.push_back(static_cast<char>(port >> 8));
  req.push_back(static_cast<char>(port & 0xFF));
  write_all(fd, req);
  const std::string head = read_exact(fd, 4);
  if (head[0] != 0x05) throw Error(Errc::transport, "malformed SOCKS5 reply");
  if (head[1] != 0x00)
    throw Error(Errc::transport, "SOCKS5 CONNECT failed: " + socks_error(static_cast<std::uint8_t>(head[1])));
  std::size_t addr_len = 0;
  switch (head[3]) {
    case 0x01: addr_len = 4; break;
    case 0x04: addr_len = 16; break;
    case 0x03: addr_len = static_cast<std::uint8_t>(read_exact(fd, 1)[0]); break;
    default: throw Error(Errc::transport, "SOCKS5 reply has unknown address type");
  }
  read_exact(fd, addr_len + 2);
}

Response parse_http_response(const std::string& raw) {
  const auto header_end = raw.find("\r\n\r\n");
  if (raw.rfind("HTTP/1.", 0) != 0 || header_end == std::string::npos)
    throw Error(Errc::transport, "malformed HTTP response");
  Response resp;
  resp.status = std::stoi(raw.substr(9, 3));
  resp.body = raw.substr(header_end + 4);
  return resp;
}

}  // namespace

ControlConnection::ControlConnection(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  Socket s(host, port, timeout);
  fd_ = s.release();
}

ControlConnection::~ControlConnection() {
  if (fd_ >= 0) ::close(fd_);
}

std::string ControlConnection::read_line() {
  for (;;) {
    const auto pos = buffer_.find("\r\n");
    if (pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 2);
      return line;
    }
    char buf[512];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) throw Error(Errc::transport, "control connection closed");
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

std::string ControlConnection::command(std::string_view line) {
  write_all(fd_, std::string(line) + "\r\n");
  // Multi-line replies use "250-" / "250+"; the final line has a space after the code.
  for (;;) {
    std::string reply = read_line();
    if (reply.size() >= 4 && reply[3] == ' ') {
      if (reply.rfind("250", 0) != 0) throw Error(Errc::transport, "control command failed: " + reply);
      return reply;
    }
    if (reply.size() < 4) throw Error(Errc::transport, "malformed control reply: " + reply);
  }
}

void ControlConnection::authenticate_with_cookie(std::string_view cookie) {
  static constexpr char digits[] = "0123456789ABCDEF";
  std::string hex;
  for (unsigned char c : cookie) {
    hex.push_back(digits[c >> 4]);
    hex.push_back(digits[c & 0xF]);
  }
  command("AUTHENTICATE " + hex);
}

void ControlConnection::authenticate_with_cookie_file(const std::string& cookie_path) {
  std::ifstream in(cookie_path, std::ios::binary);
  if (!in) throw Error(Errc::transport, "cannot read control cookie " + cookie_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  authenticate_with_cookie(ss.str());
}

void ControlConnection::signal_newnym() { command("SIGNAL NEWNYM"); }

SocksTransport::SocksTransport(std::string endpoint, SocksConfig config)
    : endpoint_(std::move(endpoint)), config_(std::move(config)) {}

DeliveryReceipt SocksTransport::send(std::string_view destination, std::string_view path, std::string body) {
  std::string host(destination);
  std::uint16_t port = config_.default_onion_port;
  if (const auto colon = host.rfind(':'); colon != std::string::npos) {
    port = static_cast<std::uint16_t>(std::stoi(host.substr(colon + 1)));
    host.resize(colon);
  }
  Socket sock(config_.socks_host, config_.socks_port, config_.timeout);
  socks5_connect(sock.fd(), host, port);
  std::string request = "POST " + std::string(path) + " HTTP/1.1\r\nHost: " + host +
                        "\r\nContent-Type: application/json\r\nContent-Length: " + std::to_string(body.size()) +
                        "\r\nConnection: close\r\n\r\n" + body;
  write_all(sock.fd(), request);
  DeliveryReceipt receipt;
  receipt.message_id = next_message_id_++;
  receipt.response = parse_http_response(read_to_eof(sock.fd()));
  return receipt;
}

void SocksTransport::newnym() {
  ControlConnection control(config_.control_host, config_.control_port, config_.timeout);
  if (config_.cookie_path.empty()) throw Error(Errc::transport, "no control cookie configured");
  control.authenticate_with_cookie_file(config_.cookie_path);
  control.signal_newnym();
  if (config_.stabilization.count() > 0) std::this_thread::sleep_for(config_.stabilization);
}

}  // namespace fragkey
