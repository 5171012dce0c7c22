// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.

#include <algorithm>
#include <iostream>

#include "fragkey/acceptance.hpp"

int main() {
  fragkey::AcceptanceOptions options;
  options.on_result = [](const fragkey::CriterionResult& r) { std::cout << fragkey::format_summary({r}) << std::flush; };
  const auto results = fragkey::run_acceptance(options);
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
