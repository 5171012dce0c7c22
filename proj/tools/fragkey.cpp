// fragkey: run simulated key-establishment sessions, linkage experiments and the acceptance gate.

#include <CLI11.hpp>
#include <json.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fragkey/acceptance.hpp"
#include "fragkey/adversary.hpp"
#include "fragkey/error.hpp"
#include "fragkey/session.hpp"
#include "fragkey/socks.hpp"
#include "fragkey/wire.hpp"

namespace {

using namespace fragkey;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::configuration, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

// Flips the final bit of the last fragment; used to prove the gate catches a broken split.
FragmentSet corrupted_split(const SessionKey& key, long long n) {
  FragmentSet set = split_key(key, n);
  auto& last = set.fragments.back().payload;
  std::string text = last.to_text();
  text.back() = text.back() == '0' ? '1' : '0';
  last = BitString::from_text(text);
  return set;
}

struct RunSessionArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> tagname;
  std::optional<long long> key_type;
  std::optional<long long> splits;
  std::optional<bool> shuffle;
  std::optional<double> f;
  std::optional<std::size_t> relays;
  std::optional<double> per_hop, build, stabilization, crypto;
  std::string trace_dir;
  std::string observation_log;
};

int cmd_run_session(const RunSessionArgs& a) {
  SessionConfig c = a.config.empty() ? SessionConfig{} : parse_session_config(read_file(a.config));
  if (a.seed) c.seed = *a.seed;
  if (a.tagname) c.tagname = *a.tagname;
  if (a.key_type) c.key_type = *a.key_type;
  if (a.splits) c.num_of_splits = *a.splits;
  if (a.shuffle) c.shuffle = *a.shuffle;
  if (a.f) {
    c.network.f = *a.f;
    c.network.compromised.clear();
  }
  if (a.relays) c.network.relay_count = *a.relays;
  if (a.per_hop) c.network.latency.per_hop_ms = *a.per_hop;
  if (a.build) c.network.latency.circuit_build_ms = *a.build;
  if (a.stabilization) c.network.latency.stabilization_ms = *a.stabilization;
  if (a.crypto) c.network.latency.crypto_ms_per_fragment = *a.crypto;

  const auto keys = load_session_keys(c);
  const auto run = run_session(c, keys);

  if (!a.trace_dir.empty()) {
    std::filesystem::create_directories(a.trace_dir);
    const std::filesystem::path dir(a.trace_dir);
    auto qkms = run.qkms_trace;
    qkms.insert(qkms.begin(), "# scheme: " + run.key_scheme);
    write_lines(dir / "qkms_fragments.txt", qkms);
    write_lines(dir / "client_a_trace.txt", run.client_a_trace);
    write_lines(dir / "client_b_trace.txt", run.client_b_trace);
  }
  if (!a.observation_log.empty()) {
    std::ofstream out(a.observation_log);
    out << run.observation_log;
  }
  std::cout << to_json(run.report) << '\n';
  if (!run.report.failure_phase.empty()) {
    std::cerr << "session failed in phase " << run.report.failure_phase << ": " << run.report.failure << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct ExperimentArgs {
  std::string config;
  std::vector<double> f;
  std::vector<long long> n;
  std::vector<std::string> policies;
  std::optional<long long> trials;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> relays;
  std::string weights;
  std::vector<double> inline_weights;
  std::string out;
  unsigned workers = 0;
};

std::vector<double> read_weights(const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  const auto& arr = j.is_object() ? j.at("weights") : j;
  return arr.get<std::vector<double>>();
}

int cmd_experiment(ExperimentArgs a) {
  if (!a.config.empty()) {
    const auto j = nlohmann::json::parse(read_file(a.config));
    for (const auto& [k, _] : j.items())
      if (k != "f" && k != "n" && k != "policies" && k != "trials" && k != "seed" && k != "P" && k != "weights")
        throw Error(Errc::configuration, "unknown experiment config member \"" + k + "\"");
    if (a.f.empty() && j.contains("f")) a.f = j.at("f").get<std::vector<double>>();
    if (a.n.empty() && j.contains("n")) a.n = j.at("n").get<std::vector<long long>>();
    if (a.policies.empty() && j.contains("policies")) a.policies = j.at("policies").get<std::vector<std::string>>();
    if (!a.trials && j.contains("trials")) a.trials = j.at("trials").get<long long>();
    if (!a.seed && j.contains("seed")) a.seed = j.at("seed").get<std::uint64_t>();
    if (!a.relays && j.contains("P")) a.relays = j.at("P").get<std::size_t>();
    if (j.contains("weights")) a.inline_weights = j.at("weights").get<std::vector<double>>();
  }
  if (!a.trials) throw CLI::RequiredError("--trials");
  if (!a.seed) throw CLI::RequiredError("--seed");
  if (a.policies.empty()) a.policies = {"fresh"};

  SweepSpec spec;
  spec.f_values = a.f;
  spec.n_values = a.n;
  for (const auto& p : a.policies) spec.policies.push_back(parse_policy(p));
  spec.trials = *a.trials;
  spec.seed = *a.seed;
  spec.relay_count = a.relays.value_or(100);
  spec.workers = a.workers;
  spec.weights = a.weights.empty() ? a.inline_weights : read_weights(a.weights);

  std::cerr << "running " << spec.f_values.size() * spec.n_values.size() * spec.policies.size() << " cells x "
            << spec.trials << " trials\n";
  const auto rows = sweep(spec);
  for (const auto& r : rows)
    if (r.estimate.status == EstimateStatus::upper_bound_only)
      std::cerr << "warning: " << r.policy << " f=" << r.f << " n=" << r.n
                << ": analytic value is below " << kMinExpectedSuccesses << "/trials; report only the 95% upper bound "
                << r.estimate.upper_bound_95 << '\n';
  const std::string csv = to_csv(rows);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream(a.out) << csv;
    std::cerr << "wrote " << rows.size() << " rows to " << a.out << '\n';
  }
  return kExitOk;
}

struct ValidateArgs {
  std::uint64_t seed = 20260512;
  long long trials = 1'000'000;
  bool no_determinism = false;
  std::string inject_fault;
};

int cmd_validate(const ValidateArgs& a) {
  AcceptanceOptions o;
  o.seed = a.seed;
  o.mc_trials = a.trials;
  o.check_determinism = !a.no_determinism;
  if (a.inject_fault == "split")
    o.splitter = corrupted_split;
  else if (!a.inject_fault.empty())
    throw CLI::ValidationError("--inject-fault", "only \"split\" is supported");
  o.on_result = [](const CriterionResult& r) { std::cout << format_summary({r}) << std::flush; };
  const auto results = run_acceptance(o);
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  std::cout << (failed == 0 ? "all " + std::to_string(results.size()) + " criteria passed"
                            : std::to_string(failed) + " criteria failed")
            << '\n';
  return failed == 0 ? kExitOk : kExitFailure;
}

int cmd_dump_message(const std::string& kind, const std::string& file) {
  if (!file.empty()) {
    std::cout << wire::pretty(wire::decode(read_file(file))) << '\n';
    return kExitOk;
  }
  const wire::KeyRequest client{"session-2026-05-12-001", 768, 10, true, "<client RSA public key>"};
  if (kind == "client") {
    std::cout << wire::pretty(client) << '\n';
  } else if (kind == "proxy") {
    std::cout << wire::pretty(wire::ProxyKeyRequest{client, {"http://10.0.0.5:4000/", "http://10.0.0.5:4001/"}})
              << '\n';
  } else {
    throw CLI::ValidationError("--type", "expected client or proxy (or pass a file)");
  }
  return kExitOk;
}

struct SocksArgs {
  SocksConfig config;
  std::string onion;
  std::string message_file;
  bool newnym = true;
};

int cmd_socks_send(const SocksArgs& a) {
  SocksTransport transport("cli", a.config);
  if (a.newnym) transport.newnym();
  const std::string body = read_file(a.message_file);
  wire::decode(body);
  const auto receipt = transport.send(a.onion, wire::kGetKeyPath, body);
  std::cout << receipt.response->status << ' ' << receipt.response->body << '\n';
  return receipt.response->status < 300 ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fragmented session-key establishment over a simulated onion-routing network"};
  app.require_subcommand(1);

  RunSessionArgs rs;
  auto* run = app.add_subcommand("run-session", "Run the two-client protocol once and print the run report");
  run->add_option("--config", rs.config, "Session config JSON")->check(CLI::ExistingFile);
  run->add_option("--seed", rs.seed, "Master seed");
  run->add_option("--tagname", rs.tagname);
  run->add_option("--key-type", rs.key_type, "Key length in bits");
  run->add_option("--splits", rs.splits, "Number of fragments n");
  run->add_option("--shuffle", rs.shuffle, "true/false");
  run->add_option("--f", rs.f, "Compromised relay fraction");
  run->add_option("--relays", rs.relays, "Relay count P");
  run->add_option("--per-hop-ms", rs.per_hop);
  run->add_option("--build-ms", rs.build);
  run->add_option("--stabilization-ms", rs.stabilization);
  run->add_option("--crypto-ms", rs.crypto, "Crypto cost stub per fragment operation");
  run->add_option("--trace-dir", rs.trace_dir, "Write fragment and decryption traces here");
  run->add_option("--observation-log", rs.observation_log, "Write the adversary observation log (JSON lines)");

  ExperimentArgs ex;
  auto* exp = app.add_subcommand("experiment", "Monte Carlo linkage sweep, CSV output");
  exp->add_option("--config", ex.config, "Experiment config JSON")->check(CLI::ExistingFile);
  exp->add_option("--f", ex.f, "Compromised fractions")->delimiter(',');
  exp->add_option("--n", ex.n, "Circuits per session")->delimiter(',');
  exp->add_option("--policy", ex.policies, "fresh, pinned, pinned-both (prefix bw- for bandwidth weighting)")
      ->delimiter(',');
  exp->add_option("--trials", ex.trials, "Trials per cell");
  exp->add_option("--seed", ex.seed, "Master seed (required)");
  exp->add_option("--relays", ex.relays, "Relay count P (default 100)");
  exp->add_option("--weights", ex.weights, "JSON array of per-relay bandwidth weights")->check(CLI::ExistingFile);
  exp->add_option("--out", ex.out, "CSV output file (default stdout)");
  exp->add_option("--workers", ex.workers, "Worker threads (0 = all cores)");

  ValidateArgs va;
  auto* val = app.add_subcommand("validate", "Run the acceptance criteria and print a pass/fail table");
  val->add_option("--seed", va.seed);
  val->add_option("--trials", va.trials, "Monte Carlo trials per estimate");
  val->add_flag("--no-determinism", va.no_determinism, "Skip the rerun-and-compare criterion");
  val->add_option("--inject-fault", va.inject_fault, "Negative control: \"split\" corrupts the split rule");

  std::string dump_kind = "client";
  std::string dump_file;
  auto* dump = app.add_subcommand("dump-message", "Print a protocol message as canonical JSON");
  dump->add_option("--type", dump_kind, "client or proxy example payload");
  dump->add_option("file", dump_file, "Decode and pretty-print a message file")->check(CLI::ExistingFile);

  SocksArgs sa;
  auto* socks = app.add_subcommand("socks-send", "Integration only: POST a message through a real SOCKS5 daemon");
  socks->add_option("--socks-port", sa.config.socks_port);
  socks->add_option("--control-port", sa.config.control_port);
  socks->add_option("--cookie", sa.config.cookie_path, "Control auth cookie file")->required();
  socks->add_option("--onion", sa.onion, "Destination name.onion[:port]")->required();
  socks->add_option("--message", sa.message_file, "Message JSON file")->required()->check(CLI::ExistingFile);
  socks->add_flag("!--no-newnym", sa.newnym, "Skip SIGNAL NEWNYM before sending");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run_session(rs);
    if (*exp) return cmd_experiment(ex);
    if (*val) return cmd_validate(va);
    if (*dump) return cmd_dump_message(dump_kind, dump_file);
    if (*socks) return cmd_socks_send(sa);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fragkey::Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return e.code() == Errc::parameter || e.code() == Errc::configuration ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
