#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fragkey {

enum class Errc {
  parameter,
  state,
  incomplete_set,
  conflict,
  key,
  decryption,
  schema,
  network,
  routing,
  transport,
  configuration,
  rejected,
  mismatch,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Thrown by reassemble when some part indices never arrived.
class IncompleteSetError : public Error {
 public:
  IncompleteSetError(std::vector<std::size_t> missing, std::size_t total);
  const std::vector<std::size_t>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::size_t> missing_;
};

// Thrown by wire decoding; field() names the offending JSON member.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& what)
      : Error(Errc::schema, "schema error at \"" + field + "\": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace fragkey
