#include "fragkey/adversary.hpp"

#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <cstdio>
#include <thread>

#include "fragkey/error.hpp"

namespace fragkey {

namespace {

void check_fraction(double f) {
  if (!(f >= 0.0 && f < 1.0)) throw Error(Errc::parameter, "f must be in [0, 1)");
}

void check_circuits(long long n) {
  if (n < 1) throw Error(Errc::parameter, "n must be >= 1");
}

double linkage_from_draw_probability(double q, long long n, GuardPolicy policy) {
  switch (policy) {
    case GuardPolicy::fresh_per_circuit: return std::pow(q, 2.0 * static_cast<double>(n));
    case GuardPolicy::pinned_service_side: return std::pow(q, static_cast<double>(n) + 1.0);
    case GuardPolicy::pinned_per_endpoint: return q * q;
  }
  return 0.0;
}

struct ShardResult {
  long long successes = 0;
  std::vector<long long> histogram;
};

constexpr std::string_view kExperimentClient = "proxy";
constexpr std::string_view kExperimentService = "client.onion";

ShardResult run_shard(const RelayNetwork& network, long long n, long long trials, std::uint64_t seed) {
  ShardResult out;
  out.histogram.assign(static_cast<std::size_t>(n) + 1, 0);
  Rng rng(seed);
  CircuitBuilder builder(network);
  for (long long t = 0; t < trials; ++t) {
    builder.reset_pins();
    std::size_t correlated = 0;
    for (long long c = 0; c < n; ++c) {
      const CircuitPath path = builder.build(kExperimentClient, kExperimentService, rng);
      if (is_correlated(observe(network, path, 0.0, 0))) ++correlated;
    }
    ++out.histogram[correlated];
    if (correlated == static_cast<std::size_t>(n)) ++out.successes;
  }
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double per_circuit_corr(double f) {
  check_fraction(f);
  return f * f;
}

double multi_circuit_bound(double f, long long n) {
  check_fraction(f);
  check_circuits(n);
  return std::pow(f, 2.0 * static_cast<double>(n));
}

double pinned_guard_analytic(double f, long long n, GuardPolicy policy) {
  check_fraction(f);
  check_circuits(n);
  return linkage_from_draw_probability(f, n, policy);
}

double weighted_per_circuit_corr(const RelayNetwork& network) {
  const double share = network.compromised_weight_share();
  return share * share;
}

double analytic_linkage(const RelayNetwork& network, long long n) {
  check_circuits(n);
  return linkage_from_draw_probability(network.compromised_draw_probability(), n, network.guard_policy());
}

double clopper_pearson_upper(long long successes, long long trials, double confidence) {
  if (trials < 1 || successes < 0 || successes > trials) throw Error(Errc::parameter, "invalid binomial counts");
  if (successes == trials) return 1.0;
  const double alpha = 1.0 - confidence;
  boost::math::beta_distribution<double> dist(static_cast<double>(successes + 1),
                                              static_cast<double>(trials - successes));
  return boost::math::quantile(dist, 1.0 - alpha / 2.0);
}

LinkageEstimate run_linkage_experiment(const LinkageExperiment& exp) {
  check_circuits(exp.n);
  if (exp.trials < 1) throw Error(Errc::parameter, "trials must be >= 1");

  const std::size_t shards = kExperimentShards;
  std::vector<ShardResult> results(shards);
  auto run_range = [&](std::size_t first, std::size_t stride) {
    for (std::size_t s = first; s < shards; s += stride) {
      const long long base = exp.trials / static_cast<long long>(shards);
      const long long extra = static_cast<long long>(s) < exp.trials % static_cast<long long>(shards) ? 1 : 0;
      results[s] = run_shard(exp.network, exp.n, base + extra, derive_seed(exp.seed, {s}));
    }
  };
  unsigned workers = exp.workers ? exp.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(shards));
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
  }

  LinkageEstimate est;
  est.trials = exp.trials;
  est.correlated_histogram.assign(static_cast<std::size_t>(exp.n) + 1, 0);
  for (const auto& r : results) {
    est.successes += r.successes;
    for (std::size_t k = 0; k < r.histogram.size(); ++k) est.correlated_histogram[k] += r.histogram[k];
  }
  est.p_hat = static_cast<double>(est.successes) / static_cast<double>(est.trials);
  est.std_err = std::sqrt(est.p_hat * (1.0 - est.p_hat) / static_cast<double>(est.trials));
  est.analytic_bound = analytic_linkage(exp.network, exp.n);
  est.upper_bound_95 = clopper_pearson_upper(est.successes, est.trials);
  if (est.analytic_bound * static_cast<double>(est.trials) < kMinExpectedSuccesses)
    est.status = EstimateStatus::upper_bound_only;
  return est;
}

PolicySpec parse_policy(std::string_view label) {
  PolicySpec spec;
  spec.label = std::string(label);
  std::string_view guard = label;
  if (guard.starts_with("bw-")) {
    spec.selection = SelectionPolicy::bandwidth_weighted;
    guard.remove_prefix(3);
  }
  if (guard == "fresh")
    spec.guards = GuardPolicy::fresh_per_circuit;
  else if (guard == "pinned")
    spec.guards = GuardPolicy::pinned_service_side;
  else if (guard == "pinned-both")
    spec.guards = GuardPolicy::pinned_per_endpoint;
  else
    throw Error(Errc::parameter, "unknown policy \"" + std::string(label) + "\"");
  return spec;
}

std::vector<SweepRow> sweep(const SweepSpec& spec) {
  if (spec.f_values.empty() || spec.n_values.empty() || spec.policies.empty())
    throw Error(Errc::parameter, "sweep grids must be non-empty");
  if (spec.trials < 1) throw Error(Errc::parameter, "trials must be >= 1");
  if (!spec.weights.empty() && spec.weights.size() != spec.relay_count)
    throw Error(Errc::parameter, "weights must list one value per relay");

  std::vector<SweepRow> rows;
  for (std::size_t fi = 0; fi < spec.f_values.size(); ++fi) {
    const double f = spec.f_values[fi];
    const std::uint64_t network_seed = derive_seed(spec.seed, {0x6e6574, fi});
    for (std::size_t ni = 0; ni < spec.n_values.size(); ++ni) {
      const long long n = spec.n_values[ni];
      const std::uint64_t cell_seed = derive_seed(spec.seed, {fi, ni});
      for (const auto& policy : spec.policies) {
        RelayNetwork base =
            RelayNetwork::with_fraction(spec.relay_count, f, policy.selection, policy.guards, network_seed);
        std::vector<Relay> relays(base.relays().begin(), base.relays().end());
        if (!spec.weights.empty())
          for (std::size_t i = 0; i < relays.size(); ++i) relays[i].bandwidth_weight = spec.weights[i];
        LinkageExperiment exp{RelayNetwork(std::move(relays), policy.selection, policy.guards), n, spec.trials,
                              cell_seed, spec.workers};
        SweepRow row{policy.label, f, n, run_linkage_experiment(exp), 0.0};
        row.ratio = row.estimate.analytic_bound > 0.0 ? row.estimate.p_hat / row.estimate.analytic_bound
                                                      : std::nan("");
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string to_csv(const std::vector<SweepRow>& rows) {
  std::string out(kSweepCsvHeader);
  out += "\n";
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    out += r.policy + "," + format_number(r.f) + "," + std::to_string(r.n) + "," + std::to_string(e.trials) + "," +
           std::to_string(e.successes) + "," + format_number(e.p_hat) + "," + format_number(e.std_err) + "," +
           format_number(e.analytic_bound) + "," + format_number(r.ratio) + "\n";
  }
  return out;
}

}  // namespace fragkey
