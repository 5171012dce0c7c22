#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fragkey/network.hpp"

namespace fragkey {

/// Probability the adversary holds both guards of one circuit: f^2.
double per_circuit_corr(double f);
/// All n independent circuits correlated: f^(2n).
double multi_circuit_bound(double f, long long n);
/// Service-side guard pinned for the session, client side fresh: f^(n+1).
/// With both sides pinned the n circuits share both guards: f^2.
double pinned_guard_analytic(double f, long long n, GuardPolicy policy = GuardPolicy::pinned_service_side);
/// (W_S / W)^2 for bandwidth-weighted guard selection.
double weighted_per_circuit_corr(const RelayNetwork& network);
/// Analytic all-n linkage probability for the network's selection and guard policies.
double analytic_linkage(const RelayNetwork& network, long long n);

/// The correlation event: both guards observed. Reads only the log's compromised flags.
inline bool is_correlated(const ObservationRecord& record) noexcept {
  return record.client_guard_compromised() && record.service_guard_compromised();
}

struct LinkageExperiment {
  RelayNetwork network;
  long long n = 1;
  long long trials = 1;
  std::uint64_t seed = 0;
  unsigned workers = 0;  // 0 = hardware concurrency; results do not depend on it
};

enum class EstimateStatus { point_estimate, upper_bound_only };

struct LinkageEstimate {
  long long successes = 0;
  long long trials = 0;
  double p_hat = 0.0;
  double std_err = 0.0;
  double analytic_bound = 0.0;
  EstimateStatus status = EstimateStatus::point_estimate;
  double upper_bound_95 = 1.0;                 // Clopper-Pearson, two-sided 95%
  std::vector<long long> correlated_histogram;  // [k] = trials with exactly k of n circuits correlated
};

inline constexpr std::size_t kExperimentShards = 64;
inline constexpr double kMinExpectedSuccesses = 10.0;

LinkageEstimate run_linkage_experiment(const LinkageExperiment& exp);

/// Upper end of the two-sided Clopper-Pearson interval at the given confidence.
double clopper_pearson_upper(long long successes, long long trials, double confidence = 0.95);

struct PolicySpec {
  std::string label;
  SelectionPolicy selection = SelectionPolicy::uniform;
  GuardPolicy guards = GuardPolicy::fresh_per_circuit;
};

/// "fresh", "pinned", "pinned-both", optionally prefixed "bw-" for bandwidth-weighted selection.
PolicySpec parse_policy(std::string_view label);

struct SweepSpec {
  std::vector<double> f_values;
  std::vector<long long> n_values;
  std::vector<PolicySpec> policies;
  long long trials = 0;
  std::uint64_t seed = 0;
  std::size_t relay_count = 100;
  /// Optional per-relay bandwidth weights (size relay_count) for bandwidth-weighted policies.
  std::vector<double> weights;
  unsigned workers = 0;
};

struct SweepRow {
  std::string policy;
  double f = 0.0;
  long long n = 0;
  LinkageEstimate estimate;
  double ratio = 0.0;
};

std::vector<SweepRow> sweep(const SweepSpec& spec);

inline constexpr std::string_view kSweepCsvHeader = "policy,f,n,trials,successes,p_hat,std_err,analytic,ratio";
std::string to_csv(const std::vector<SweepRow>& rows);

}  // namespace fragkey
