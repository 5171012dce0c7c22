#include <arpa/inet.h>
#include <gtest/gtest.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "fragkey/error.hpp"
#include "fragkey/socks.hpp"
#include "fragkey/wire.hpp"

using namespace fragkey;

namespace {

// One-connection loopback server; the script runs on its own thread against the accepted fd.
class FakeServer {
 public:
  explicit FakeServer(std::function<void(int)> script) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    ::listen(listen_fd_, 4);
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this, script = std::move(script)] {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      timeval tv{5, 0};
      setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      script(fd);
      ::close(fd);
    });
  }
  ~FakeServer() {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    thread_.join();
  }
  std::uint16_t port() const { return port_; }

 private:
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread thread_;
};

std::string recv_n(int fd, std::size_t n) {
  std::string out(n, '\0');
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, out.data() + got, n - got, 0);
    if (r <= 0) break;
    got += static_cast<std::size_t>(r);
  }
  out.resize(got);
  return out;
}

std::string recv_line(int fd) {
  std::string line;
  char c;
  while (::recv(fd, &c, 1, 0) == 1) {
    line.push_back(c);
    if (line.ends_with("\r\n")) break;
  }
  return line;
}

void send_str(int fd, std::string_view s) { ::send(fd, s.data(), s.size(), MSG_NOSIGNAL); }

std::string write_cookie(std::string_view bytes) {
  const auto path = std::filesystem::temp_directory_path() / ("fragkey_cookie_" + std::to_string(::getpid()));
  std::ofstream(path, std::ios::binary) << bytes;
  return path.string();
}

std::uint16_t unused_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

}  // namespace

TEST(Socks, PostsThroughSocks5ByDomainName) {
  std::string greeting, connect_req, http;
  FakeServer server([&](int fd) {
    greeting = recv_n(fd, 3);
    send_str(fd, std::string("\x05\x00", 2));
    connect_req = recv_n(fd, 5);
    connect_req += recv_n(fd, static_cast<unsigned char>(connect_req[4]) + 2u);
    send_str(fd, std::string("\x05\x00\x00\x01\x00\x00\x00\x00\x00\x00", 10));
    std::string line;
    std::size_t content_length = 0;
    while ((line = recv_line(fd)) != "\r\n" && !line.empty()) {
      http += line;
      if (line.rfind("Content-Length: ", 0) == 0) content_length = std::stoul(line.substr(16));
    }
    http += "\r\n" + recv_n(fd, content_length);
    send_str(fd, "HTTP/1.1 202 Accepted\r\nContent-Length: 4\r\n\r\nwait");
  });

  SocksConfig cfg;
  cfg.socks_port = server.port();
  cfg.timeout = std::chrono::milliseconds(5000);
  SocksTransport t("proxy-a", cfg);
  const std::string body = wire::encode(wire::KeyRequest{"session-2026-05-12-001", 768, 10, true, "pk"});
  const auto receipt = t.send("abcdefghijklmnop.onion:5000", wire::kGetKeyPath, body);

  EXPECT_EQ(greeting, std::string("\x05\x01\x00", 3));
  const std::string host = "abcdefghijklmnop.onion";
  std::string expected_connect("\x05\x01\x00\x03", 4);
  expected_connect.push_back(static_cast<char>(host.size()));
  expected_connect += host + std::string("\x13\x88", 2);
  EXPECT_EQ(connect_req, expected_connect);
  EXPECT_EQ(http.rfind("POST /get-key HTTP/1.1\r\n", 0), 0u);
  EXPECT_TRUE(http.ends_with("\r\n\r\n" + body));
  ASSERT_TRUE(receipt.response.has_value());
  EXPECT_EQ(receipt.response->status, 202);
  EXPECT_EQ(receipt.response->body, "wait");
  EXPECT_FALSE(receipt.circuit_id.has_value());
}

TEST(Socks, ConnectRefusedBySocksIsTransportError) {
  FakeServer server([](int fd) {
    recv_n(fd, 3);
    send_str(fd, std::string("\x05\x00", 2));
    const auto head = recv_n(fd, 5);
    recv_n(fd, static_cast<unsigned char>(head[4]) + 2u);
    send_str(fd, std::string("\x05\x04\x00\x01\x00\x00\x00\x00\x00\x00", 10));
  });
  SocksConfig cfg;
  cfg.socks_port = server.port();
  cfg.timeout = std::chrono::milliseconds(5000);
  SocksTransport t("proxy-a", cfg);
  try {
    t.send("missing.onion", "/get-key", "{}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::transport);
    EXPECT_NE(std::string(e.what()).find("host unreachable"), std::string::npos);
  }
}

TEST(Socks, NewnymAuthenticatesWithCookie) {
  const std::string cookie("\x01\xab\xff\x10", 4);
  std::vector<std::string> lines;
  FakeServer control([&](int fd) {
    lines.push_back(recv_line(fd));
    send_str(fd, "250 OK\r\n");
    lines.push_back(recv_line(fd));
    send_str(fd, "250 OK\r\n");
  });
  SocksConfig cfg;
  cfg.control_port = control.port();
  cfg.cookie_path = write_cookie(cookie);
  cfg.timeout = std::chrono::milliseconds(5000);
  SocksTransport t("proxy-a", cfg);
  t.newnym();
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "AUTHENTICATE 01ABFF10\r\n");
  EXPECT_EQ(lines[1], "SIGNAL NEWNYM\r\n");
  std::filesystem::remove(cfg.cookie_path);
}

TEST(Socks, WrongCookieIsTransportError) {
  FakeServer control([](int fd) {
    recv_line(fd);
    send_str(fd, "515 Authentication failed: Wrong length on authentication cookie.\r\n");
  });
  SocksConfig cfg;
  cfg.control_port = control.port();
  cfg.cookie_path = write_cookie("nope");
  cfg.timeout = std::chrono::milliseconds(5000);
  SocksTransport t("proxy-a", cfg);
  try {
    t.newnym();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::transport);
    EXPECT_NE(std::string(e.what()).find("515"), std::string::npos);
  }
  std::filesystem::remove(cfg.cookie_path);
}

TEST(Socks, UnreachableDaemonIsTransportError) {
  SocksConfig cfg;
  cfg.socks_port = unused_port();
  cfg.control_port = unused_port();
  cfg.cookie_path = "/nonexistent/cookie";
  cfg.timeout = std::chrono::milliseconds(1000);
  SocksTransport t("proxy-a", cfg);
  for (auto fn : std::vector<std::function<void()>>{[&] { t.send("x.onion", "/get-key", "{}"); }, [&] { t.newnym(); }}) {
    try {
      fn();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::transport);
    }
  }
}

TEST(Socks, MultiLineControlReply) {
  FakeServer control([](int fd) {
    recv_line(fd);
    send_str(fd, "250-version=0.4.8\r\n250 OK\r\n");
  });
  ControlConnection conn("127.0.0.1", control.port(), std::chrono::milliseconds(5000));
  EXPECT_EQ(conn.command("GETINFO version"), "250 OK");
}
