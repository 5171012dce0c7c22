#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fragkey/actors.hpp"
#include "fragkey/session.hpp"

namespace fragkey {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;  // human summary
  std::string output;  // canonical bytes compared by the determinism criterion
};

struct AcceptanceOptions {
  std::uint64_t seed = 20260512;
  long long mc_trials = 1'000'000;
  int seeds_per_cell = 50;
  int pairing_orderings = 1000;
  unsigned workers = 0;
  /// Criterion 10 reruns 1-9; disable for quick runs.
  bool check_determinism = true;
  /// Fault-injection seam (negative control): replaces the QKMS split rule.
  Splitter splitter;
  /// Key pairs reused for every simulated session; generated when empty.
  std::optional<SessionKeys> keys;
  std::function<void(const CriterionResult&)> on_result;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

/// One "PASS|FAIL  [id] name: detail" line per criterion.
std::string format_summary(const std::vector<CriterionResult>& results);

}  // namespace fragkey
