#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fragkey::wire {

inline constexpr std::string_view kGetKeyPath = "/get-key";
inline constexpr std::string_view kReceiveFragmentPath = "/receive-key-fragment";

// Client -> proxy, POST /get-key.
struct KeyRequest {
  std::string tagname;
  long long key_type = 0;
  long long num_of_splits = 0;
  bool shuffle = false;
  std::string public_key;
  friend bool operator==(const KeyRequest&, const KeyRequest&) = default;
};

// Proxy -> QKMS, POST /get-key: the client request plus the proxy's channels.
struct ProxyKeyRequest {
  KeyRequest request;
  std::vector<std::string> channels;
  friend bool operator==(const ProxyKeyRequest&, const ProxyKeyRequest&) = default;
};

// QKMS -> proxy channel, and proxy -> client POST /receive-key-fragment.
struct FragmentDelivery {
  std::string tagname;
  long long bundle_id = 0;
  std::vector<std::string> fragments;  // base64 ciphertexts
  friend bool operator==(const FragmentDelivery&, const FragmentDelivery&) = default;
};

// Synchronous reply to /get-key.
struct KeyAck {
  std::string tagname;
  std::string status;
  friend bool operator==(const KeyAck&, const KeyAck&) = default;
};

struct ErrorReply {
  std::string error;
  std::string message;
  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

using Message = std::variant<KeyRequest, ProxyKeyRequest, FragmentDelivery, KeyAck, ErrorReply>;

/// Compact UTF-8 JSON, fields in a fixed order. Throws SchemaError if the message breaks a type invariant.
std::string encode(const KeyRequest& m);
std::string encode(const ProxyKeyRequest& m);
std::string encode(const FragmentDelivery& m);
std::string encode(const KeyAck& m);
std::string encode(const ErrorReply& m);
std::string encode(const Message& m);

/// Indented form for humans; same field order.
std::string pretty(const Message& m);

KeyRequest decode_key_request(std::string_view bytes);
ProxyKeyRequest decode_proxy_key_request(std::string_view bytes);
FragmentDelivery decode_fragment_delivery(std::string_view bytes);
KeyAck decode_key_ack(std::string_view bytes);
ErrorReply decode_error_reply(std::string_view bytes);
/// Picks the message type from the member set, then decodes strictly.
Message decode(std::string_view bytes);

/// "scheme://host:port/" with an http(s) scheme and a port in [1, 65535].
bool is_channel_address(std::string_view channel);

}  // namespace fragkey::wire
