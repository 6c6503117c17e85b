// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any
// failure. Oracles here are written independently of the library code.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "metaclaw/metaclaw.hpp"

namespace mc = metaclaw;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const mc::Timestamp kT0 = mc::parse_rfc3339("2026-03-16T01:00:00Z");

mc::Trajectory trajectory(std::string id, mc::Generation gen, mc::TaskKind kind, double reward) {
  mc::Trajectory t;
  t.task_id = std::move(id);
  t.generation = gen;
  t.task_kind = kind;
  t.reward = reward;
  t.day_index = 1;
  t.collected_at = kT0;
  t.actions = {{"user", "task"}, {"echo ok", "ok"}};
  if (reward < 1.0) t.feedback = std::string(mc::info(mc::Rule::P1).feedback);
  return t;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("metaclaw-accept-" + std::to_string(::getpid()) + "-" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// 1. support/query separation

Verdict separation() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::size_t violations = 0, advances = 0;
  for (int run = 0; run < 1000; ++run) {
    mc::SkillLibrary lib;
    mc::SupportSet support;
    mc::RlBuffer buffer;
    std::set<std::string> support_ids;
    const std::size_t threshold = 1 + rng() % 5;
    const int ops = 20 + static_cast<int>(rng() % 60);
    for (int op = 0; op < ops; ++op) {
      const auto kind = rng() % 2 ? mc::TaskKind::file_check : mc::TaskKind::multi_choice;
      const double reward = kind == mc::TaskKind::file_check ? double(rng() % 2) : (rng() % 5) / 4.0;
      const auto id = "r" + std::to_string(run) + "-" + std::to_string(op);
      const bool failure = kind == mc::TaskKind::file_check ? reward < 1.0 : reward < 0.5;
      const auto routing = mc::record(buffer, support, trajectory(id, lib.generation(), kind, reward), lib.generation());
      if ((routing == mc::Routing::to_support) != failure) ++violations;
      if (routing == mc::Routing::to_support) support_ids.insert(id);

      // Evolution fires at the threshold, or at random once there is anything to consume.
      if (mc::should_evolve(support.size(), threshold) || (!support.empty() && rng() % 7 == 0)) {
        const auto outcome = mc::evolve_rule_based(lib, support.records(), 3, kT0);
        const auto flush = mc::apply_outcome(lib, support, buffer, outcome);
        ++advances;
        if (const auto m = buffer.min_generation(); m && *m <= flush.generation) ++violations;
      }
      for (const auto& t : buffer.snapshot())
        if (support_ids.count(t.task_id) || t.role != mc::Role::query) ++violations;
    }
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = violations == 0 && advances > 0 && secs < 10.0;
  v.detail = "1000 interleavings, " + std::to_string(advances) + " generation advances, " +
             std::to_string(violations) + " violations, " + fmt("%.2fs", secs);
  return v;
}

// ---------------------------------------------------------------------------
// 2. flush correctness

Verdict flush() {
  auto fill = [](std::initializer_list<mc::Generation> gens) {
    mc::RlBuffer b;
    int i = 0;
    for (auto g : gens) {
      auto t = trajectory("q" + std::to_string(i++), g, mc::TaskKind::file_check, 1.0);
      t.role = mc::Role::query;
      b.append(t);
    }
    return b;
  };
  auto a = fill({0, 0, 1});
  const auto removed_a = a.flush_stale(1);
  auto b = fill({2, 2});
  const auto removed_b = b.flush_stale(1);
  std::vector<mc::Generation> left;
  for (const auto& t : b.snapshot()) left.push_back(t.generation);
  Verdict v;
  v.pass = a.size() == 0 && removed_a == 3 && removed_b == 0 && left == std::vector<mc::Generation>{2, 2};
  v.detail = "[0,0,1] flush(1) left " + std::to_string(a.size()) + "; [2,2] flush(1) left " + std::to_string(b.size());
  return v;
}

// ---------------------------------------------------------------------------
// 3. scheduler window soundness

std::vector<mc::Trajectory> query_pool(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<mc::Trajectory> pool;
  for (std::size_t i = 0; i < n; ++i) {
    auto t = trajectory("p" + std::to_string(i), 0, mc::TaskKind::multi_choice, (rng() % 5) / 4.0);
    t.role = mc::Role::query;
    for (auto r : mc::kAllRules)
      if (rng() % 2) t.checks[std::string(mc::rule_id(r))] = rng() % 3 != 0;
    pool.push_back(t);
  }
  return pool;
}

/// Window oracle: fresh input closes; otherwise any absence signal opens.
bool oracle_open(const mc::IdleSignalState& s, const mc::SchedulerConfig& c) {
  if (s.input_idle_minutes < c.activity_epsilon_minutes) return false;
  return s.sleep_idle || s.input_idle_minutes >= c.idle_delta_minutes || s.calendar_busy;
}

struct TraceOutcome {
  std::size_t steps = 0;
  std::size_t steps_outside = 0;
  std::size_t pauses = 0;
  std::size_t mid_batch_pauses = 0;
  bool finished = false;
  mc::PolicyState theta;
};

/// Drives one trainer through a signal trace; `steps_per_tick` steps run in
/// each tick the scheduler leaves the trainer running.
TraceOutcome drive(const std::vector<mc::IdleSignalState>& trace, const mc::TrainConfig& tc,
                   const std::vector<mc::Trajectory>& pool, std::size_t steps_per_tick) {
  mc::SchedulerConfig cfg;
  mc::Scheduler sched(cfg);
  mc::SteppedTrainer trainer([&](std::uint64_t id) { return mc::TrainRun(tc, pool, {}, 0, id); });
  TraceOutcome out;
  for (const auto& s : trace) {
    const bool open = oracle_open(s, cfg);
    const auto cmd = sched.on_tick(mc::decide(s, cfg), trainer, {true, 0});
    if (cmd.kind == mc::CommandKind::pause) {
      ++out.pauses;
      if (cmd.checkpoint->step_within_batch != 0) ++out.mid_batch_pauses;
    }
    for (std::size_t k = 0; k < steps_per_tick && trainer.running(); ++k) {
      trainer.run().step();
      ++out.steps;
      if (!open) ++out.steps_outside;
      if (trainer.run().done()) {
        out.finished = true;
        out.theta = trainer.run().theta();
        trainer.reset();
        sched.on_run_finished();
        return out;
      }
    }
  }
  return out;
}

Verdict window_soundness() {
  std::mt19937_64 rng(3003);
  const int traces = 60;
  std::size_t bad = 0, outside = 0, mid_batch = 0, pauses = 0;
  for (int i = 0; i < traces; ++i) {
    mc::TrainConfig tc{1 + rng() % 4, 4 + rng() % 6, 0.2 + 0.6 * ((rng() % 100) / 100.0), rng()};
    const auto pool = query_pool(tc.batch_size + rng() % 20, rng());
    const std::size_t per_tick = 1 + rng() % 3;

    // Contiguous: one long open stretch.
    std::vector<mc::IdleSignalState> contiguous(2000, mc::IdleSignalState{true, 90.0, false, {}});
    // Fragmented: random open/closed runs mixing every signal.
    std::vector<mc::IdleSignalState> fragmented;
    while (fragmented.size() < 20000) {
      const auto len = 1 + rng() % 6;
      mc::IdleSignalState s;
      switch (rng() % 5) {
        case 0: s = {true, 5.0, false, {}}; break;      // asleep, recent but not fresh input
        case 1: s = {false, 45.0, false, {}}; break;    // inactive
        case 2: s = {false, 10.0, true, {}}; break;     // in a meeting
        case 3: s = {false, 0.2, rng() % 2 == 0, {}}; break;  // at the keyboard
        default: s = {false, 12.0, false, {}}; break;   // present, no signal
      }
      fragmented.insert(fragmented.end(), len, s);
    }
    const auto a = drive(contiguous, tc, pool, per_tick);
    const auto b = drive(fragmented, tc, pool, per_tick);
    const auto total = tc.batches_total * tc.batch_size;
    outside += a.steps_outside + b.steps_outside;
    mid_batch += b.mid_batch_pauses;
    pauses += b.pauses;
    if (!a.finished || !b.finished || a.steps != total || b.steps != total || !(a.theta == b.theta)) ++bad;
  }
  Verdict v;
  v.pass = bad == 0 && outside == 0 && mid_batch > 0;
  v.detail = std::to_string(traces) + " traces, " + std::to_string(pauses) + " pauses (" + std::to_string(mid_batch) +
             " mid-batch), " + std::to_string(outside) + " steps outside a window, " + std::to_string(bad) +
             " fragmented/contiguous mismatches";

  // The same property through the full runtime, checked from the event log.
  std::size_t session_violations = 0, session_steps = 0, session_pauses = 0;
  for (int i = 0; i < 5; ++i) {
    std::vector<mc::IdleSignalState> trace;
    auto t = mc::parse_rfc3339("2026-03-15T16:00:00Z");
    const auto end = mc::parse_rfc3339("2026-03-19T16:00:00Z");
    while (t < end) {
      const bool idle = rng() % 3 == 0;
      trace.push_back({false, idle ? 60.0 : 0.0, false, t});
      t += std::chrono::seconds(15 * (1 + rng() % 8));
    }
    mc::RuntimeConfig cfg;
    cfg.stream.days = 4;
    cfg.stream.seed = 40 + static_cast<std::uint64_t>(i);
    mc::SessionOptions opts;
    opts.signals = std::make_shared<mc::TraceSignalProvider>(trace);
    const auto report = mc::run_session(cfg, opts);
    for (const auto& e : report.events) {
      session_steps += e["type"] == "train_step";
      session_pauses += e["type"] == "train_pause";
    }
    session_violations += mc::replay(report.events).violations.size() + (report.incomplete ? 1 : 0);
  }
  v.pass = v.pass && session_violations == 0 && session_steps > 0;
  v.detail += "; 5 runtime traces, " + std::to_string(session_steps) + " steps, " + std::to_string(session_pauses) +
              " pauses, " + std::to_string(session_violations) + " replay violations";
  return v;
}

// ---------------------------------------------------------------------------
// 4. pause/resume determinism

Verdict pause_resume() {
  std::mt19937_64 rng(4004);
  const auto dir = scratch_dir("pause");
  std::size_t mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    mc::TrainConfig tc{1 + rng() % 6, 2 + rng() % 10, 0.05 + 0.9 * ((rng() % 1000) / 1000.0), rng()};
    const auto pool = query_pool(tc.batch_size + rng() % 30, rng());
    mc::TrainRun straight(tc, pool, {}, 0, 1);
    while (!straight.done()) straight.step();

    // Interrupt at a random step, persist the checkpoint, resume from disk.
    const auto pause_at = rng() % (tc.batches_total * tc.batch_size + 1);
    mc::TrainRun first(tc, pool, {}, 0, 1);
    for (std::size_t s = 0; s < pause_at; ++s) first.step();
    const auto file = dir / ("cp" + std::to_string(i) + ".json");
    mc::save_checkpoint(file, first.checkpoint(), tc, pool);
    auto resumed = mc::resume_from(mc::load_checkpoint(file));
    while (!resumed.done()) resumed.step();
    if (!(resumed.theta() == straight.theta())) ++mismatches;
  }
  std::filesystem::remove_all(dir);
  Verdict v;
  v.pass = mismatches == 0;
  v.detail = "100 random pause points, " + std::to_string(mismatches) + " inexact resumes";
  return v;
}

// ---------------------------------------------------------------------------
// 5. multi-choice scoring oracle

Verdict multichoice_oracle() {
  std::size_t pairs = 0, mismatches = 0;
  for (int n = 2; n <= 5; ++n) {
    for (unsigned tm = 0; tm < (1u << n); ++tm)
      for (unsigned pm = 0; pm < (1u << n); ++pm) {
        std::set<char> truth, pred;
        int wrong = 0;
        for (int k = 0; k < n; ++k) {
          const bool in_t = tm >> k & 1, in_p = pm >> k & 1;
          if (in_t) truth.insert(char('A' + k));
          if (in_p) pred.insert(char('A' + k));
          wrong += in_t != in_p;
        }
        const double expected = std::max(0.0, 1.0 - double(wrong) / n);
        ++pairs;
        if (mc::score_multichoice(truth, pred, n) != expected) ++mismatches;
      }
  }
  Verdict v;
  v.pass = mismatches == 0 && pairs == 16 + 64 + 256 + 1024;
  v.detail = std::to_string(pairs) + " (truth, predicted) pairs, " + std::to_string(mismatches) + " mismatches";
  return v;
}

// ---------------------------------------------------------------------------
// 6. checker fixtures

struct Fixture {
  std::string name;
  mc::Rule rule;
  bool modifies = false;
  std::string out_path;
  std::string body;
  std::map<std::string, std::string> extra;
  bool expect_pass;
};

Verdict checker_fixtures() {
  auto doc = [](const std::string& created_at) {
    return nlohmann::json{{"title", "Sprint board"}, {"created_at", created_at}, {"author", "metaclaw_agent"},
                          {"status", "done"}}
        .dump(2);
  };
  const std::string good = doc("2026-03-16T09:30:00+08:00");
  const std::string create = "day01/20260316_weekly_report.json";
  const std::string done_ok = "[DONE] 2026-03-16T09:30:00+08:00 | d01-r02 | wrote weekly report\n";
  std::vector<Fixture> fx = {
      {"P1 correct", mc::Rule::P1, false, create, good, {}, true},
      {"P1 date only", mc::Rule::P1, false, create, doc("2026-03-16"), {}, false},
      {"P1 natural language", mc::Rule::P1, false, create, doc("March 16 at 3pm"), {}, false},
      {"P1 UTC suffix", mc::Rule::P1, false, create, doc("2026-03-16T09:30:00Z"), {}, false},
      {"P1 nested due_date", mc::Rule::P1, false, create,
       R"({"title":"t","meta":{"due_date":"2026-03-17"}})", {}, false},
      {"P1 wrong offset", mc::Rule::P1, false, create, doc("2026-03-16T09:30:00+09:00"), {}, false},
      {"P2 dated snake case", mc::Rule::P2, false, create, good, {}, true},
      {"P2 date suffix", mc::Rule::P2, false, "day01/weekly_report_20260316.json", good, {}, false},
      {"P2 no date", mc::Rule::P2, false, "day01/weekly_report.json", good, {}, false},
      {"P3 all metadata", mc::Rule::P3, false, create, good, {}, true},
      {"P3 missing author", mc::Rule::P3, false, create,
       R"({"title":"t","created_at":"2026-03-16T09:30:00+08:00","status":"done"})", {}, false},
      {"P3 missing status", mc::Rule::P3, false, create,
       R"({"title":"t","created_at":"2026-03-16T09:30:00+08:00","author":"a"})", {}, false},
      {"P4 backup present", mc::Rule::P4, true, "day01/20260316_sprint_board.json", good,
       {{"day01/20260316_sprint_board.json.bak", "{}"}}, true},
      {"P4 backup missing", mc::Rule::P4, true, "day01/20260316_sprint_board.json", good, {}, false},
      {"P4 wrong backup name", mc::Rule::P4, true, "day01/20260316_sprint_board.json", good,
       {{"day01/20260316_sprint_board.bak", "{}"}}, false},
      {"P5 log line", mc::Rule::P5, false, create, good, {{"done.log", done_ok}}, true},
      {"P5 no log", mc::Rule::P5, false, create, good, {}, false},
      {"P5 other task", mc::Rule::P5, false, create, good,
       {{"done.log", "[DONE] 2026-03-16T09:30:00+08:00 | d01-r01 | other\n"}}, false},
      {"P5 missing summary", mc::Rule::P5, false, create, good,
       {{"done.log", "[DONE] 2026-03-16T09:30:00+08:00 | d01-r02\n"}}, false},
  };
  std::size_t correct = 0;
  std::string wrong;
  for (const auto& f : fx) {
    mc::TaskSpec t;
    t.id = "d01-r02";
    t.kind = mc::TaskKind::file_check;
    t.date = "2026-03-16";
    t.applicable_rules = {f.rule};
    t.required_fields = {"title"};
    t.modifies_existing = f.modifies;
    t.expected_output_path = f.modifies ? f.out_path : create;
    mc::Workspace ws;
    ws.files[f.out_path] = f.body;
    for (const auto& [p, b] : f.extra) ws.files[p] = b;
    const auto r = mc::check_file(t, ws);
    const auto it = r.per_rule.find(std::string(mc::rule_id(f.rule)));
    if (it != r.per_rule.end() && it->second == f.expect_pass) {
      ++correct;
    } else {
      wrong += " [" + f.name + "]";
    }
  }
  Verdict v;
  v.pass = correct == fx.size();
  v.detail = std::to_string(correct) + "/" + std::to_string(fx.size()) + " fixtures classified correctly" + wrong;
  return v;
}

// ---------------------------------------------------------------------------
// 7 and 8. directional reproduction and inflection

struct Reproduction {
  std::map<mc::Condition, double> accuracy, completion, completion_multi_rule;
  std::map<int, double> full_per_day;
  std::vector<mc::SessionReport> reports;
  double seconds = 0;
  int seeds = 0;
};

const Reproduction& reproduction() {
  static const Reproduction r = [] {
    Reproduction out;
    const auto t0 = Clock::now();
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      for (auto c : mc::kAllConditions) {
        mc::RuntimeConfig cfg;
        cfg.condition = c;
        cfg.stream.seed = seed;
        auto report = mc::run_session(cfg);
        const auto& m = *report.metrics;
        out.accuracy[c] += m.overall_accuracy / 10;
        out.completion[c] += m.completion_rate / 10;
        out.completion_multi_rule[c] += mc::completion_on_days(m, 4) / 10;
        if (c == mc::Condition::full)
          for (auto [day, v] : m.per_day_completion) out.full_per_day[day] += v / 10;
        report.events.clear();  // keep memory flat; library growth is retained
        out.reports.push_back(std::move(report));
      }
      ++out.seeds;
    }
    out.seconds = seconds_since(t0);
    return out;
  }();
  return r;
}

Verdict directional() {
  const auto& r = reproduction();
  using C = mc::Condition;
  const double acc_b = r.accuracy.at(C::baseline), acc_s = r.accuracy.at(C::skills_only), acc_f = r.accuracy.at(C::full);
  const double comp_s = r.completion.at(C::skills_only), comp_f = r.completion.at(C::full);
  const double multi_b = r.completion_multi_rule.at(C::baseline), multi_s = r.completion_multi_rule.at(C::skills_only);
  bool incomplete = false;
  for (const auto& rep : r.reports) incomplete = incomplete || rep.incomplete;
  Verdict v;
  v.pass = !incomplete && acc_s - acc_b >= 0.05 && acc_f - acc_s >= 0.05 && comp_f >= 2 * comp_s &&
           std::abs(multi_s - multi_b) <= 0.05 && r.seconds < 120.0;
  v.detail = "10 seeds, accuracy baseline " + fmt("%.3f", acc_b) + " < skills_only " + fmt("%.3f", acc_s) +
             " < full " + fmt("%.3f", acc_f) + "; completion full " + fmt("%.3f", comp_f) + " vs skills_only " +
             fmt("%.3f", comp_s) + "; >=4-rule-day completion skills_only " + fmt("%.3f", multi_s) +
             " vs baseline " + fmt("%.3f", multi_b) + "; " + fmt("%.1fs", r.seconds);
  return v;
}

Verdict inflection() {
  const auto& r = reproduction();
  double first = 0, last = 0;
  const int days = static_cast<int>(r.full_per_day.size());
  for (auto [day, v] : r.full_per_day) {
    if (day <= 5) first += v / 5;
    if (day > days - 5) last += v / 5;
  }
  Verdict v;
  v.pass = days >= 10 && last - first >= 0.20;
  v.detail = "full, mean over " + std::to_string(r.seeds) + " seeds: first 5 days " + fmt("%.3f", first) +
             ", last 5 days " + fmt("%.3f", last) + ", gap " + fmt("%+.1fpp", 100 * (last - first));
  return v;
}

// ---------------------------------------------------------------------------
// 9. monotone skill library

Verdict monotone_library() {
  std::size_t violations = 0;
  for (const auto& rep : reproduction().reports)
    for (std::size_t i = 1; i < rep.library_growth.size(); ++i) {
      const auto& a = rep.library_growth[i - 1];
      const auto& b = rep.library_growth[i];
      if (b.generation < a.generation || b.size < a.size) ++violations;
    }

  // Name sets per served task, plus persistence round trips along the way.
  const auto dir = scratch_dir("library");
  std::size_t checkpoints = 0, round_trip_failures = 0;
  for (auto c : {mc::Condition::skills_only, mc::Condition::full}) {
    mc::RuntimeConfig cfg;
    cfg.condition = c;
    cfg.stream.seed = 3;
    mc::Session s(cfg);
    std::set<std::string> names;
    mc::Generation gen = 0;
    while (!s.finished()) {
      s.step();
      std::set<std::string> now;
      for (const auto& k : s.library().skills()) now.insert(k.name);
      if (s.library().generation() < gen || !std::includes(now.begin(), now.end(), names.begin(), names.end()))
        ++violations;
      if (s.library().generation() != gen) {
        const auto sub = dir / (std::string(mc::to_string(c)) + "-" + std::to_string(s.library().generation()));
        mc::save(s.library(), sub);
        const auto back = mc::load(sub);
        if (!(back == s.library())) ++round_trip_failures;
        ++checkpoints;
      }
      names = std::move(now);
      gen = s.library().generation();
    }
  }
  std::filesystem::remove_all(dir);
  Verdict v;
  v.pass = violations == 0 && round_trip_failures == 0 && checkpoints > 0;
  v.detail = std::to_string(reproduction().reports.size()) + " runs plus 2 stepped sessions, " +
             std::to_string(violations) + " monotonicity violations, " + std::to_string(checkpoints) +
             " persistence round trips, " + std::to_string(round_trip_failures) + " inexact";
  return v;
}

// ---------------------------------------------------------------------------
// 10. replay determinism

Verdict replay_determinism() {
  std::mt19937_64 rng(1010);
  std::vector<mc::IdleSignalState> trace;
  auto t = mc::parse_rfc3339("2026-03-15T16:00:00Z");
  const auto end = mc::parse_rfc3339("2026-03-29T16:00:00Z");
  while (t < end) {
    trace.push_back({rng() % 4 == 0, double(rng() % 50), rng() % 6 == 0, t});
    t += std::chrono::minutes(1 + rng() % 20);
  }
  std::size_t identical = 0, runs = 0;
  std::size_t events = 0;
  for (auto c : mc::kAllConditions) {
    mc::RuntimeConfig cfg;
    cfg.condition = c;
    cfg.stream.seed = 99;
    std::string logs[2];
    for (auto& log : logs) {
      mc::SessionOptions opts;
      opts.signals = std::make_shared<mc::TraceSignalProvider>(trace);
      log = mc::events_jsonl(mc::run_session(cfg, opts).events);
    }
    ++runs;
    identical += logs[0] == logs[1];
    events += std::count(logs[0].begin(), logs[0].end(), '\n');
  }
  Verdict v;
  v.pass = identical == runs;
  v.detail = std::to_string(identical) + "/" + std::to_string(runs) + " condition pairs byte-identical (" +
             std::to_string(events) + " events)";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"support/query separation", separation},
      {"flush correctness", flush},
      {"scheduler window soundness", window_soundness},
      {"pause/resume determinism", pause_resume},
      {"multi-choice scoring oracle", multichoice_oracle},
      {"checker fixtures", checker_fixtures},
      {"directional reproduction", directional},
      {"inflection shape", inflection},
      {"monotone skill library", monotone_library},
      {"replay determinism", replay_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  return failures ? 1 : 0;
}
