// Command-line front end: run sessions, compare conditions, replay and
// summarize event logs.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "metaclaw/metaclaw.hpp"

namespace mc = metaclaw;

namespace {

mc::RuntimeConfig load(const std::string& path) {
  const auto env = mc::process_environment();
  if (!path.empty()) return mc::load_config(path, env);
  nlohmann::json j = nlohmann::json::object();
  mc::apply_env_overrides(j, env);
  return mc::config_from_json(j);
}

int cmd_run(const std::string& config, const std::optional<std::string>& condition,
            const std::optional<std::uint64_t>& seed, const std::string& events_out) {
  auto cfg = load(config);
  if (condition) cfg.condition = mc::parse_condition(*condition);
  if (seed) cfg.stream.seed = *seed;
  if (!events_out.empty()) cfg.paths.events_out = events_out;
  const auto report = mc::run_session(cfg);
  std::cout << mc::to_json(report).dump(2) << "\n";
  return report.incomplete ? 1 : 0;
}

int cmd_compare(const std::string& config, const std::optional<std::uint64_t>& seed, int seeds) {
  auto cfg = load(config);
  if (seed) cfg.stream.seed = *seed;
  nlohmann::json out = nlohmann::json::array();
  bool incomplete = false;
  for (int i = 0; i < seeds; ++i) {
    auto c = cfg;
    c.stream.seed = cfg.stream.seed + static_cast<std::uint64_t>(i);
    const auto r = mc::compare_conditions(c);
    incomplete = incomplete || r.incomplete;
    out.push_back(mc::to_json(r));
  }
  std::cout << (seeds == 1 ? out[0] : out).dump(2) << "\n";
  return incomplete ? 1 : 0;
}

int cmd_replay(const std::string& events, bool assert_invariants) {
  const auto result = mc::replay(mc::parse_events(mc::detail::read_file(events)));
  std::cout << "events: " << result.events << "\n"
            << "tasks scored: " << result.scores.size() << "\n"
            << "violations: " << result.violations.size() << "\n";
  for (const auto& v : result.violations) std::cout << "  seq " << v.seq << ": " << v.message << "\n";
  return assert_invariants && !result.ok() ? 1 : 0;
}

int cmd_report(const std::string& in, const std::string& format) {
  const auto result = mc::replay(mc::parse_events(mc::detail::read_file(in)));
  if (format == "csv")
    std::cout << mc::scores_csv(result.scores);
  else
    std::cout << mc::to_json(mc::aggregate(result.scores)).dump(2) << "\n";
  return 0;
}

int cmd_stream(const std::string& config, const std::optional<std::uint64_t>& seed) {
  auto cfg = load(config);
  if (seed) cfg.stream.seed = *seed;
  std::cout << mc::export_stream(mc::generate_stream(cfg.stream));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual skill-evolution and opportunistic-training agent runtime (simulated benchmark)."};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> condition;
  std::optional<std::uint64_t> seed;
  std::string events_out;

  auto* run = app.add_subcommand("run", "Run one session and print its report");
  run->add_option("--config", config, "Runtime config (JSON)");
  run->add_option("--condition", condition, "baseline | skills_only | full");
  run->add_option("--seed", seed, "Stream seed");
  run->add_option("--events", events_out, "Write the event log (JSON-lines) here");

  auto* bench = app.add_subcommand("bench", "Benchmark commands");
  bench->require_subcommand(1);
  int seeds = 1;
  auto* compare = bench->add_subcommand("compare", "Run every condition on the same stream");
  compare->add_option("--config", config, "Runtime config (JSON)");
  compare->add_option("--seed", seed, "Stream seed (first of --seeds consecutive seeds)");
  compare->add_option("--seeds", seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);

  std::string events_in;
  bool assert_invariants = false;
  auto* replay = app.add_subcommand("replay", "Re-check invariants from an event log");
  replay->add_option("--events", events_in, "Event log (JSON-lines)")->required();
  replay->add_flag("--assert-invariants", assert_invariants, "Exit non-zero on any violation");

  std::string report_in, report_format = "json";
  auto* report = app.add_subcommand("report", "Metrics from an event log");
  report->add_option("--in", report_in, "Event log (JSON-lines)")->required();
  report->add_option("--out", report_format, "json | csv")->check(CLI::IsMember({"json", "csv"}));

  auto* stream = app.add_subcommand("stream", "Export the task stream as JSON-lines");
  stream->add_option("--config", config, "Runtime config (JSON)");
  stream->add_option("--seed", seed, "Stream seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, condition, seed, events_out);
    if (*compare) return cmd_compare(config, seed, seeds);
    if (*replay) return cmd_replay(events_in, assert_invariants);
    if (*report) return cmd_report(report_in, report_format);
    if (*stream) return cmd_stream(config, seed);
  } catch (const mc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
