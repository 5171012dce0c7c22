#include "fragkey/error.hpp"

namespace fragkey {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::parameter: return "parameter";
    case Errc::state: return "state";
    case Errc::incomplete_set: return "incomplete_set";
    case Errc::conflict: return "conflict";
    case Errc::key: return "key";
    case Errc::decryption: return "decryption";
    case Errc::schema: return "schema";
    case Errc::network: return "network";
    case Errc::routing: return "routing";
    case Errc::transport: return "transport";
    case Errc::configuration: return "configuration";
    case Errc::rejected: return "rejected";
    case Errc::mismatch: return "mismatch";
  }
  return "unknown";
}

namespace {

std::string describe_missing(const std::vector<std::size_t>& missing, std::size_t total) {
  std::string s = "incomplete fragment set: missing part";
  s += missing.size() == 1 ? " " : "s ";
  for (std::size_t i = 0; i < missing.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(missing[i]);
  }
  s += " of " + std::to_string(total);
  return s;
}

}  // namespace

IncompleteSetError::IncompleteSetError(std::vector<std::size_t> missing, std::size_t total)
    : Error(Errc::incomplete_set, describe_missing(missing, total)), missing_(std::move(missing)) {}

}  // namespace fragkey
