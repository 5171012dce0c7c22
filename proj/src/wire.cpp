#include "fragkey/wire.hpp"

#include <climits>
#include <json.hpp>
#include <regex>
#include <set>

#include "fragkey/crypto.hpp"
#include "fragkey/error.hpp"

namespace fragkey::wire {

namespace {

using Json = nlohmann::ordered_json;

Json parse_object(std::string_view bytes) {
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("$", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("$", "top level must be an object");
  return j;
}

void require_exact_fields(const Json& j, std::initializer_list<std::string_view> fields) {
  const std::set<std::string_view> allowed(fields);
  for (const auto& [name, _] : j.items())
    if (!allowed.contains(name)) throw SchemaError(name, "unknown field");
  for (auto name : fields)
    if (!j.contains(name)) throw SchemaError(std::string(name), "missing field");
}

std::string get_string(const Json& j, const char* field) {
  const auto& v = j.at(field);
  if (!v.is_string()) throw SchemaError(field, "expected a string");
  return v.get<std::string>();
}

long long get_integer(const Json& j, const char* field) {
  const auto& v = j.at(field);
  if (!v.is_number_integer()) throw SchemaError(field, "expected an integer");
  if (v.is_number_unsigned() && v.get<unsigned long long>() > static_cast<unsigned long long>(LLONG_MAX))
    throw SchemaError(field, "integer out of range");
  return v.get<long long>();
}

long long get_positive(const Json& j, const char* field) {
  const long long v = get_integer(j, field);
  if (v <= 0) throw SchemaError(field, "must be positive");
  return v;
}

bool get_bool(const Json& j, const char* field) {
  const auto& v = j.at(field);
  if (!v.is_boolean()) throw SchemaError(field, "expected a boolean");
  return v.get<bool>();
}

std::vector<std::string> get_string_list(const Json& j, const char* field) {
  const auto& v = j.at(field);
  if (!v.is_array()) throw SchemaError(field, "expected an array");
  if (v.empty()) throw SchemaError(field, "must not be empty");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) throw SchemaError(field, "expected an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

void check_channels(const std::vector<std::string>& channels) {
  if (channels.empty()) throw SchemaError("channels", "must not be empty");
  for (const auto& c : channels)
    if (!is_channel_address(c)) throw SchemaError("channels", "malformed channel address \"" + c + "\"");
}

void check_fragments(const std::vector<std::string>& fragments) {
  if (fragments.empty()) throw SchemaError("fragments", "must not be empty");
  for (const auto& f : fragments) {
    try {
      if (crypto::base64_decode(f).empty()) throw SchemaError("fragments", "empty ciphertext");
    } catch (const SchemaError&) {
      throw;
    } catch (const Error&) {
      throw SchemaError("fragments", "ciphertext is not base64");
    }
  }
}

void check_request(const KeyRequest& m) {
  if (m.key_type <= 0) throw SchemaError("key_type", "must be positive");
  if (m.num_of_splits <= 0) throw SchemaError("num_of_splits", "must be positive");
}

Json to_json(const KeyRequest& m) {
  check_request(m);
  Json j;
  j["tagname"] = m.tagname;
  j["key_type"] = m.key_type;
  j["num_of_splits"] = m.num_of_splits;
  j["shuffle"] = m.shuffle;
  j["public_key"] = m.public_key;
  return j;
}

Json to_json(const ProxyKeyRequest& m) {
  check_channels(m.channels);
  Json j = to_json(m.request);
  j["channels"] = m.channels;
  return j;
}

Json to_json(const FragmentDelivery& m) {
  check_fragments(m.fragments);
  if (m.bundle_id < 0) throw SchemaError("bundle_id", "must be non-negative");
  Json j;
  j["tagname"] = m.tagname;
  j["bundle_id"] = m.bundle_id;
  j["fragments"] = m.fragments;
  return j;
}

Json to_json(const KeyAck& m) {
  Json j;
  j["tagname"] = m.tagname;
  j["status"] = m.status;
  return j;
}

Json to_json(const ErrorReply& m) {
  Json j;
  j["error"] = m.error;
  j["message"] = m.message;
  return j;
}

KeyRequest request_fields(const Json& j) {
  KeyRequest m;
  m.tagname = get_string(j, "tagname");
  m.key_type = get_positive(j, "key_type");
  m.num_of_splits = get_positive(j, "num_of_splits");
  m.shuffle = get_bool(j, "shuffle");
  m.public_key = get_string(j, "public_key");
  return m;
}

}  // namespace

bool is_channel_address(std::string_view channel) {
  static const std::regex pattern(R"(^https?://([A-Za-z0-9-]+(\.[A-Za-z0-9-]+)*|\[[0-9A-Fa-f:.]+\]):([0-9]{1,5})/?$)");
  std::cmatch m;
  if (!std::regex_match(channel.begin(), channel.end(), m, pattern)) return false;
  const long port = std::stol(m[3].str());
  return port >= 1 && port <= 65535;
}

std::string encode(const KeyRequest& m) { return to_json(m).dump(); }
std::string encode(const ProxyKeyRequest& m) { return to_json(m).dump(); }
std::string encode(const FragmentDelivery& m) { return to_json(m).dump(); }
std::string encode(const KeyAck& m) { return to_json(m).dump(); }
std::string encode(const ErrorReply& m) { return to_json(m).dump(); }

std::string encode(const Message& m) {
  return std::visit([](const auto& v) { return encode(v); }, m);
}

std::string pretty(const Message& m) {
  return std::visit([](const auto& v) { return to_json(v).dump(2); }, m);
}

KeyRequest decode_key_request(std::string_view bytes) {
  const Json j = parse_object(bytes);
  require_exact_fields(j, {"tagname", "key_type", "num_of_splits", "shuffle", "public_key"});
  return request_fields(j);
}

ProxyKeyRequest decode_proxy_key_request(std::string_view bytes) {
  const Json j = parse_object(bytes);
  require_exact_fields(j, {"tagname", "key_type", "num_of_splits", "shuffle", "public_key", "channels"});
  ProxyKeyRequest m{request_fields(j), get_string_list(j, "channels")};
  check_channels(m.channels);
  return m;
}

FragmentDelivery decode_fragment_delivery(std::string_view bytes) {
  const Json j = parse_object(bytes);
  require_exact_fields(j, {"tagname", "bundle_id", "fragments"});
  FragmentDelivery m;
  m.tagname = get_string(j, "tagname");
  m.bundle_id = get_integer(j, "bundle_id");
  if (m.bundle_id < 0) throw SchemaError("bundle_id", "must be non-negative");
  m.fragments = get_string_list(j, "fragments");
  check_fragments(m.fragments);
  return m;
}

KeyAck decode_key_ack(std::string_view bytes) {
  const Json j = parse_object(bytes);
  require_exact_fields(j, {"tagname", "status"});
  return KeyAck{get_string(j, "tagname"), get_string(j, "status")};
}

ErrorReply decode_error_reply(std::string_view bytes) {
  const Json j = parse_object(bytes);
  require_exact_fields(j, {"error", "message"});
  return ErrorReply{get_string(j, "error"), get_string(j, "message")};
}

Message decode(std::string_view bytes) {
  const Json j = parse_object(bytes);
  if (j.contains("channels")) return decode_proxy_key_request(bytes);
  if (j.contains("fragments") || j.contains("bundle_id")) return decode_fragment_delivery(bytes);
  if (j.contains("error")) return decode_error_reply(bytes);
  if (j.contains("status")) return decode_key_ack(bytes);
  return decode_key_request(bytes);
}

}  // namespace fragkey::wire
