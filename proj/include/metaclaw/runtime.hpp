#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metaclaw/buffer.hpp"
#include "metaclaw/core/error.hpp"
#include "metaclaw/core/rng.hpp"
#include "metaclaw/core/time.hpp"
#include "metaclaw/evolution.hpp"
#include "metaclaw/http.hpp"
#include "metaclaw/policy.hpp"
#include "metaclaw/scheduler.hpp"
#include "metaclaw/simbench.hpp"
#include "metaclaw/skill_store.hpp"
#include "metaclaw/trainer.hpp"
#include "metaclaw/trajectory.hpp"

extern char** environ;

namespace metaclaw {

enum class Condition { baseline, skills_only, full };

inline constexpr Condition kAllConditions[] = {Condition::baseline, Condition::skills_only, Condition::full};

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::baseline: return "baseline";
    case Condition::skills_only: return "skills_only";
    case Condition::full: return "full";
  }
  return "?";
}

inline Condition parse_condition(std::string_view s) {
  for (Condition c : kAllConditions)
    if (to_string(c) == s) return c;
  throw Error(Errc::invalid_config, "unknown condition '" + std::string(s) + "'");
}

inline bool evolution_enabled(Condition c) { return c != Condition::baseline; }
inline bool training_enabled(Condition c) { return c == Condition::full; }

struct RuntimePaths {
  std::string skills_dir;
  std::string buffer_snapshot;
  std::string report_out;
  std::string events_out;
  std::string training_log;
};

struct RuntimeConfig {
  Condition condition = Condition::full;
  StreamConfig stream;
  std::size_t retrieval_k = kDefaultRetrievalK;
  std::size_t evolve_threshold = kDefaultEvolveThreshold;
  std::size_t max_new_skills = kDefaultMaxNewSkills;
  std::size_t batch_size = 8;
  std::size_t batches_per_run = 4;
  double alpha = 0.3;
  FlushMode flush_mode = FlushMode::algorithm1;
  std::optional<std::size_t> buffer_capacity;
  SchedulerConfig scheduler = default_scheduler();
  SimParams sim;
  PolicyState initial_policy;
  SuccessThresholds thresholds;
  TimeOfDay workday_start{9 * 60};
  TimeOfDay workday_end{18 * 60};
  /// rule_based | fixture:<json file> | http(s)://<endpoint>
  std::string evolver = "rule_based";
  RuntimePaths paths;

  static SchedulerConfig default_scheduler() {
    SchedulerConfig s;
    s.utc_offset_minutes = kBenchOffsetMinutes;
    return s;
  }

  void validate() const {
    stream.validate();
    if (retrieval_k == 0) throw Error(Errc::invalid_config, "retrieval_k must be at least 1");
    if (evolve_threshold == 0) throw Error(Errc::invalid_config, "evolve_threshold must be at least 1");
    if (max_new_skills == 0) throw Error(Errc::invalid_config, "max_new_skills must be at least 1");
    TrainConfig{batches_per_run, batch_size, alpha, 0}.validate();
    if (buffer_capacity && *buffer_capacity == 0) throw Error(Errc::invalid_config, "buffer capacity must be positive");
    if (scheduler.tick_seconds <= 0) throw Error(Errc::invalid_config, "tick_seconds must be positive");
    if (!(scheduler.idle_delta_minutes > 0.0)) throw Error(Errc::invalid_config, "idle_delta_minutes must be positive");
    if (!(workday_start < workday_end)) throw Error(Errc::invalid_config, "workday must start before it ends");
    metaclaw::validate(initial_policy);
    if (!(sim.skill_adherence >= 0.0 && sim.skill_adherence <= 1.0) || !(sim.skill_boost >= 0.0))
      throw Error(Errc::invalid_config, "sim parameters out of range");
  }
};

// ---------------------------------------------------------------------------
// Config JSON and environment overrides

inline nlohmann::json to_json(const RuntimeConfig& c) {
  nlohmann::json ramp = nlohmann::json::array();
  for (auto [d, n] : c.stream.difficulty_ramp) ramp.push_back({d, n});
  return {
      {"condition", std::string(to_string(c.condition))},
      {"stream",
       {{"seed", c.stream.seed},
        {"days", c.stream.days},
        {"per_day", c.stream.per_day},
        {"mix", c.stream.mix},
        {"difficulty_ramp", ramp},
        {"start_date", c.stream.start_date}}},
      {"retrieval_k", c.retrieval_k},
      {"evolve_threshold", c.evolve_threshold},
      {"max_new_skills", c.max_new_skills},
      {"batch_size", c.batch_size},
      {"batches_per_run", c.batches_per_run},
      {"alpha", c.alpha},
      {"flush_mode", std::string(to_string(c.flush_mode))},
      {"buffer_capacity", c.buffer_capacity ? nlohmann::json(*c.buffer_capacity) : nlohmann::json(nullptr)},
      {"scheduler",
       {{"sleep_start", c.scheduler.sleep.start.str()},
        {"sleep_end", c.scheduler.sleep.end.str()},
        {"idle_delta_minutes", c.scheduler.idle_delta_minutes},
        {"activity_epsilon_minutes", c.scheduler.activity_epsilon_minutes},
        {"tick_seconds", c.scheduler.tick_seconds},
        {"utc_offset_minutes", c.scheduler.utc_offset_minutes},
        {"calendar_source", c.scheduler.calendar_source},
        {"idle_source", c.scheduler.idle_source},
        {"pause_grace_ms", c.scheduler.pause_grace.count()}}},
      {"sim", {{"skill_adherence", c.sim.skill_adherence}, {"skill_boost", c.sim.skill_boost}}},
      {"initial_policy", to_json(c.initial_policy)},
      {"thresholds", {{"file_check", c.thresholds.file_check}, {"multi_choice", c.thresholds.multi_choice}}},
      {"workday", {{"start", c.workday_start.str()}, {"end", c.workday_end.str()}}},
      {"evolver", c.evolver},
      {"paths",
       {{"skills_dir", c.paths.skills_dir},
        {"buffer_snapshot", c.paths.buffer_snapshot},
        {"report_out", c.paths.report_out},
        {"events_out", c.paths.events_out},
        {"training_log", c.paths.training_log}}},
  };
}

/// Keys absent from `j` keep their defaults; unknown keys are rejected.
inline RuntimeConfig config_from_json(const nlohmann::json& j) {
  RuntimeConfig c;
  static const std::set<std::string> known{"condition", "stream",       "retrieval_k",  "evolve_threshold",
                                           "max_new_skills", "batch_size", "batches_per_run", "alpha",
                                           "flush_mode", "buffer_capacity", "scheduler",  "sim",
                                           "initial_policy", "thresholds", "workday",    "evolver",
                                           "paths"};
  try {
    if (!j.is_object()) throw Error(Errc::invalid_config, "config must be a JSON object");
    for (auto& [k, _] : j.items())
      if (!known.count(k)) throw Error(Errc::invalid_config, "unknown config key '" + k + "'");
    auto get = [&](const nlohmann::json& o, const char* key, auto& out) {
      if (o.contains(key)) out = o.at(key).get<std::decay_t<decltype(out)>>();
    };
    if (j.contains("condition")) c.condition = parse_condition(j["condition"].get<std::string>());
    if (j.contains("stream")) {
      const auto& s = j["stream"];
      get(s, "seed", c.stream.seed);
      get(s, "days", c.stream.days);
      get(s, "per_day", c.stream.per_day);
      get(s, "mix", c.stream.mix);
      get(s, "start_date", c.stream.start_date);
      if (s.contains("difficulty_ramp")) {
        c.stream.difficulty_ramp.clear();
        for (const auto& e : s["difficulty_ramp"]) c.stream.difficulty_ramp.emplace_back(e.at(0), e.at(1));
      }
    }
    get(j, "retrieval_k", c.retrieval_k);
    get(j, "evolve_threshold", c.evolve_threshold);
    get(j, "max_new_skills", c.max_new_skills);
    get(j, "batch_size", c.batch_size);
    get(j, "batches_per_run", c.batches_per_run);
    get(j, "alpha", c.alpha);
    if (j.contains("flush_mode")) c.flush_mode = parse_flush_mode(j["flush_mode"].get<std::string>());
    if (j.contains("buffer_capacity") && !j["buffer_capacity"].is_null())
      c.buffer_capacity = j["buffer_capacity"].get<std::size_t>();
    if (j.contains("scheduler")) {
      const auto& s = j["scheduler"];
      auto start = c.scheduler.sleep.start, end = c.scheduler.sleep.end;
      if (s.contains("sleep_start")) start = TimeOfDay::parse(s["sleep_start"].get<std::string>());
      if (s.contains("sleep_end")) end = TimeOfDay::parse(s["sleep_end"].get<std::string>());
      c.scheduler.sleep = SleepWindow(start, end);
      get(s, "idle_delta_minutes", c.scheduler.idle_delta_minutes);
      get(s, "activity_epsilon_minutes", c.scheduler.activity_epsilon_minutes);
      get(s, "tick_seconds", c.scheduler.tick_seconds);
      get(s, "utc_offset_minutes", c.scheduler.utc_offset_minutes);
      get(s, "calendar_source", c.scheduler.calendar_source);
      get(s, "idle_source", c.scheduler.idle_source);
      if (s.contains("pause_grace_ms")) c.scheduler.pause_grace = std::chrono::milliseconds(s["pause_grace_ms"].get<long>());
    }
    if (j.contains("sim")) {
      get(j["sim"], "skill_adherence", c.sim.skill_adherence);
      get(j["sim"], "skill_boost", c.sim.skill_boost);
    }
    if (j.contains("initial_policy")) c.initial_policy = policy_from_json(j["initial_policy"], c.initial_policy);
    if (j.contains("thresholds")) {
      get(j["thresholds"], "file_check", c.thresholds.file_check);
      get(j["thresholds"], "multi_choice", c.thresholds.multi_choice);
    }
    if (j.contains("workday")) {
      if (j["workday"].contains("start")) c.workday_start = TimeOfDay::parse(j["workday"]["start"].get<std::string>());
      if (j["workday"].contains("end")) c.workday_end = TimeOfDay::parse(j["workday"]["end"].get<std::string>());
    }
    get(j, "evolver", c.evolver);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      get(p, "skills_dir", c.paths.skills_dir);
      get(p, "buffer_snapshot", c.paths.buffer_snapshot);
      get(p, "report_out", c.paths.report_out);
      get(p, "events_out", c.paths.events_out);
      get(p, "training_log", c.paths.training_log);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_config, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline constexpr std::string_view kEnvPrefix = "METACLAW_";

/// `METACLAW_STREAM__SEED=3` sets `stream.seed`. Keys are lower-cased, `__`
/// separates levels, and values are parsed as JSON when they parse, else
/// taken as strings.
inline void apply_env_overrides(nlohmann::json& config, const std::vector<std::pair<std::string, std::string>>& env) {
  for (const auto& [name, value] : env) {
    if (name.rfind(kEnvPrefix, 0) != 0 || name.size() == kEnvPrefix.size()) continue;
    std::string key = name.substr(kEnvPrefix.size());
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
    std::vector<std::string> path;
    for (std::size_t pos = 0;;) {
      const auto sep = key.find("__", pos);
      path.push_back(key.substr(pos, sep - pos));
      if (sep == std::string::npos) break;
      pos = sep + 2;
    }
    nlohmann::json* node = &config;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->contains(path[i]) || !(*node)[path[i]].is_object()) (*node)[path[i]] = nlohmann::json::object();
      node = &(*node)[path[i]];
    }
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    (*node)[path.back()] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
}

inline std::vector<std::pair<std::string, std::string>> process_environment() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline RuntimeConfig load_config(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, std::string>>& env) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_config, path.string() + ": " + e.what());
  }
  apply_env_overrides(j, env);
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Plugins named in the config

inline std::string strip_prefix(const std::string& s, std::string_view prefix) {
  return s.substr(prefix.size());
}

inline std::unique_ptr<EvolverClient> make_evolver_client(const std::string& spec) {
  if (spec.rfind("fixture:", 0) == 0)
    return std::make_unique<FixtureEvolverClient>(FixtureEvolverClient::from_file(strip_prefix(spec, "fixture:")));
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) return std::make_unique<HttpEvolverClient>(spec);
  if (spec == "rule_based") return nullptr;
  throw Error(Errc::invalid_config, "unknown evolver '" + spec + "'");
}

inline std::unique_ptr<CalendarSource> make_calendar(const std::string& spec) {
  if (spec.empty() || spec == "none") return std::make_unique<NoCalendar>();
  if (spec.rfind("fixture:", 0) == 0)
    return std::make_unique<FixtureCalendar>(FixtureCalendar::from_file(strip_prefix(spec, "fixture:")));
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) return std::make_unique<HttpCalendarSource>(spec);
  if (spec.rfind("http:", 0) == 0) return std::make_unique<HttpCalendarSource>("http://" + strip_prefix(spec, "http:"));
  throw Error(Errc::invalid_config, "unknown calendar source '" + spec + "'");
}

inline std::unique_ptr<SignalProvider> make_signal_provider(const SchedulerConfig& cfg) {
  const auto& idle = cfg.idle_source;
  if (idle.rfind("trace:", 0) == 0)
    return std::make_unique<TraceSignalProvider>(TraceSignalProvider::from_file(strip_prefix(idle, "trace:")));
  std::unique_ptr<IdleSource> source;
  if (idle == "activity")
    source = std::make_unique<ActivityIdleSource>();
  else if (idle == "os")
    source = std::make_unique<OsIdleSource>();
  else if (idle.rfind("constant:", 0) == 0)
    try {
      source = std::make_unique<ConstantIdleSource>(std::stod(strip_prefix(idle, "constant:")));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_config, "bad constant idle source '" + idle + "'");
    }
  else
    throw Error(Errc::invalid_config, "unknown idle source '" + idle + "'");
  return std::make_unique<ComposedSignalProvider>(cfg, std::move(source), make_calendar(cfg.calendar_source));
}

// ---------------------------------------------------------------------------
// Session

struct LibraryPoint {
  int day = 0;
  Generation generation = 0;
  std::size_t size = 0;
};

struct SessionReport {
  Condition condition = Condition::full;
  std::uint64_t seed = 0;
  std::vector<TaskScore> scores;
  std::optional<Metrics> metrics;
  std::vector<LibraryPoint> library_growth;
  /// The raw event log; every other field can be recomputed from it.
  std::vector<nlohmann::json> events;
  std::size_t hot_swaps = 0;
  std::size_t evolutions = 0;
  PolicyState final_policy;
  bool incomplete = false;
  std::string error;
};

inline std::string events_jsonl(const std::vector<nlohmann::json>& events) {
  std::string out;
  for (const auto& e : events) out += e.dump() + "\n";
  return out;
}

inline nlohmann::json to_json(const SessionReport& r) {
  nlohmann::json growth = nlohmann::json::array(), training = nlohmann::json::array(),
                 flushes = nlohmann::json::array();
  for (const auto& p : r.library_growth)
    growth.push_back({{"day", p.day}, {"generation", p.generation}, {"size", p.size}});
  for (const auto& e : r.events) {
    const auto type = e.at("type").get<std::string>();
    if (type == "train_start" || type == "train_pause" || type == "train_resume" || type == "train_discard" ||
        type == "train_abort" || type == "hot_swap")
      training.push_back({{"type", type}, {"t", e.at("t")}});
    else if (type == "flush")
      flushes.push_back({{"t", e.at("t")}, {"generation", e.at("generation")}, {"flushed", e.at("flushed")}});
  }
  nlohmann::json j{{"condition", std::string(to_string(r.condition))},
                   {"seed", r.seed},
                   {"library_growth", growth},
                   {"training_events", training},
                   {"flush_events", flushes},
                   {"hot_swaps", r.hot_swaps},
                   {"evolutions", r.evolutions},
                   {"final_policy", to_json(r.final_policy)},
                   {"incomplete", r.incomplete}};
  j["metrics"] = r.metrics ? to_json(*r.metrics) : nlohmann::json(nullptr);
  if (r.incomplete) j["error"] = r.error;
  return j;
}

/// Options that are not part of the config file.
struct SessionOptions {
  /// Replaces the signal provider the config would build.
  std::shared_ptr<SignalProvider> signals;
  /// Replaces the evolver client the config would build.
  std::shared_ptr<EvolverClient> evolver;
  /// Starting library (defaults to empty at generation 0).
  std::optional<SkillLibrary> library;
};

/// Algorithm-1 orchestrator over a virtual clock. Single-threaded; every
/// output is a function of (config, seed, signal source).
class Session {
 public:
  explicit Session(RuntimeConfig cfg, SessionOptions opts = {})
      : cfg_(std::move(cfg)),
        tasks_(generate_stream(cfg_.stream)),
        registry_(tasks_),
        buffer_(cfg_.flush_mode, cfg_.buffer_capacity),
        slot_(cfg_.initial_policy),
        scheduler_(cfg_.scheduler),
        trainer_([this](std::uint64_t id) { return make_run(id); }) {
    cfg_.validate();
    library_ = opts.library ? std::move(*opts.library) : SkillLibrary{};
    support_ = SupportSet(library_.generation());
    signals_ = opts.signals ? std::move(opts.signals) : std::shared_ptr<SignalProvider>(make_signal_provider(cfg_.scheduler));
    evolver_ = opts.evolver ? std::move(opts.evolver) : std::shared_ptr<EvolverClient>(make_evolver_client(cfg_.evolver));
    report_.condition = cfg_.condition;
    report_.seed = cfg_.stream.seed;
    clock_ = day_start(1);
  }

  const RuntimeConfig& config() const { return cfg_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const SkillLibrary& library() const { return library_; }
  const RlBuffer& buffer() const { return buffer_; }
  const SupportSet& support() const { return support_; }
  const PolicySlot& policy() const { return slot_; }
  const SessionReport& report() const { return report_; }
  std::size_t next_task() const { return next_; }
  bool finished() const { return next_ >= tasks_.size(); }

  /// Serves the next task: scheduler ticks up to its start time, then
  /// retrieve, execute, score, route and (if due) evolve.
  TaskScore step() {
    if (finished()) throw Error(Errc::invalid_config, "stream exhausted");
    auto& task = tasks_[next_];
    const auto at = task_time(task);
    if (task.round_index == 1) begin_day(task.day_index);
    advance_to(at);
    signals_->note_activity(at);
    tick(at, at);

    if (task.round_index > 1) task.context_feedback = last_feedback_;
    const auto theta = slot_.load();
    std::vector<Skill> injected;
    if (evolution_enabled(cfg_.condition) && !library_.skills().empty())
      injected = retrieve(library_, task.prompt + "\n" + task.context_feedback, cfg_.retrieval_k);
    std::vector<std::string> names;
    for (const auto& s : injected) names.push_back(s.name);
    emit(at, "serve",
         {{"task_id", task.id}, {"generation", library_.generation()}, {"policy_version", theta.version},
          {"skills", names}});

    auto traj = simulate_policy(theta, task, injected, derive_seed(cfg_.stream.seed, {fnv1a64(task.id)}), cfg_.sim);
    traj.generation = library_.generation();
    traj.collected_at = at;
    auto s = score(traj, registry_);
    traj.reward = s.value;
    traj.checks = s.components;
    traj.feedback = s.feedback;
    last_feedback_ = s.value == 1.0 ? "All checks passed." : s.feedback;

    const auto routing = record(buffer_, support_, traj, library_.generation(), cfg_.thresholds);
    emit(at, "score",
         {{"task_id", task.id}, {"day", task.day_index}, {"round", task.round_index},
          {"kind", std::string(to_string(task.kind))}, {"reward", s.value}, {"generation", traj.generation},
          {"routing", std::string(to_string(routing))}, {"buffer_size", buffer_.size()},
          {"support_size", support_.size()}});

    if (evolution_enabled(cfg_.condition) && should_evolve(support_.size(), cfg_.evolve_threshold)) evolve(at);

    TaskScore ts{task.id, task.day_index, task.round_index, task.kind, s.value};
    report_.scores.push_back(ts);
    ++next_;
    if (finished() || tasks_[next_].day_index != task.day_index) end_day(task.day_index);
    return ts;
  }

  /// Runs the remaining stream. Module errors end the session early with the
  /// report flagged incomplete.
  const SessionReport& run() {
    try {
      while (!finished()) step();
      advance_to(day_start(cfg_.stream.days + 1));
    } catch (const Error& e) {
      report_.incomplete = true;
      report_.error = e.what();
      emit(clock_, "abort", {{"error", report_.error}});
    }
    if (!report_.scores.empty()) report_.metrics = aggregate(report_.scores);
    report_.final_policy = slot_.load();
    persist();
    return report_;
  }

 private:
  // -- clock ----------------------------------------------------------------

  Timestamp day_start(int day) const {
    const auto local_midnight = parse_rfc3339(detail::add_days(cfg_.stream.start_date, day - 1) + "T00:00:00Z");
    return local_midnight - std::chrono::minutes(cfg_.scheduler.utc_offset_minutes);
  }

  Timestamp task_time(const TaskSpec& t) const {
    const auto span = std::chrono::minutes(cfg_.workday_end.minutes - cfg_.workday_start.minutes);
    const auto offset = std::chrono::duration_cast<std::chrono::seconds>(span) * (t.round_index - 1) / cfg_.stream.per_day;
    return day_start(t.day_index) + std::chrono::minutes(cfg_.workday_start.minutes) + offset;
  }

  std::string stamp(Timestamp t) const { return format_rfc3339(t, cfg_.scheduler.utc_offset_minutes); }

  void emit(Timestamp t, const char* type, nlohmann::json fields = nlohmann::json::object()) {
    nlohmann::json e{{"seq", report_.events.size()}, {"t", stamp(t)}, {"type", type}};
    for (auto& [k, v] : fields.items()) e[k] = v;
    report_.events.push_back(std::move(e));
  }

  // -- scheduler and trainer ------------------------------------------------

  TrainRun make_run(std::uint64_t id) {
    TrainConfig tc{cfg_.batches_per_run, cfg_.batch_size, cfg_.alpha,
                   derive_seed(cfg_.stream.seed, {fnv1a64("train"), id})};
    return TrainRun(tc, buffer_.snapshot(), slot_.load(), library_.generation(), id);
  }

  /// Ticks every tick_seconds from the clock up to (excluding) `until`.
  void advance_to(Timestamp until) {
    const auto tick_len = std::chrono::seconds(cfg_.scheduler.tick_seconds);
    while (clock_ < until) {
      const auto next = std::min(clock_ + tick_len, until);
      tick(clock_, next);
      clock_ = next;
    }
  }

  /// One scheduler evaluation at `now`; a running trainer may then step once
  /// per simulated second until `budget_end`.
  void tick(Timestamp now, Timestamp budget_end) {
    const auto decision = decide(signals_->sample(now), cfg_.scheduler);
    if (!training_enabled(cfg_.condition)) return;
    if (!window_open_ || *window_open_ != decision.open) {
      nlohmann::json reasons = nlohmann::json::array();
      for (Signal s : decision.reasons) reasons.push_back(std::string(to_string(s)));
      nlohmann::json f{{"open", decision.open}, {"reasons", reasons}};
      if (decision.closed_by) f["closed_by"] = std::string(to_string(*decision.closed_by));
      emit(now, "window", f);
      window_open_ = decision.open;
    }
    TickContext ctx;
    ctx.generation = library_.generation();
    ctx.train_ready = buffer_.count_after(run_start_seq_) >= cfg_.batch_size;
    const auto cmd = scheduler_.on_tick(decision, trainer_, ctx);
    if (cmd.discarded_stale) {
      trainer_.reset();
      emit(now, "train_discard", {{"generation", ctx.generation}});
    }
    switch (cmd.kind) {
      case CommandKind::start:
        run_start_seq_ = buffer_.last_sequence();
        emit(now, "train_start",
             {{"run", trainer_.run().id()}, {"generation", ctx.generation}, {"pool", trainer_.run().pool().size()}});
        break;
      case CommandKind::pause:
        emit(now, "train_pause",
             {{"run", cmd.checkpoint->id}, {"batch_index", cmd.checkpoint->batch_index},
              {"step_within_batch", cmd.checkpoint->step_within_batch}});
        break;
      case CommandKind::resume:
        emit(now, "train_resume",
             {{"run", cmd.checkpoint->id}, {"batch_index", cmd.checkpoint->batch_index},
              {"step_within_batch", cmd.checkpoint->step_within_batch}});
        break;
      case CommandKind::noop:
        break;
    }
    for (auto t = now; trainer_.running() && t < budget_end; t += std::chrono::seconds(1)) train_step(t);
  }

  void train_step(Timestamp t) {
    auto& run = trainer_.run();
    if (library_.generation() != run.source_generation()) {
      emit(t, "train_abort", {{"run", run.id()}, {"reason", "StaleGeneration"}});
      trainer_.reset();
      scheduler_.on_run_finished();
      return;
    }
    const auto batch = run.step();
    emit(t, "train_step", {{"run", run.id()}, {"batch_index", run.batches_done()}, {"step", run.step_within_batch()}});
    if (batch) {
      auto line = to_json(*batch);
      line["run"] = run.id();
      line["wall_clock"] = stamp(t);
      training_log_ += line.dump() + "\n";
      emit(t, "train_batch", line);
    }
    if (run.done()) {
      const auto next = swap_candidate(run.theta(), slot_.version());
      slot_.hot_swap(next);
      ++report_.hot_swaps;
      emit(t, "hot_swap", {{"run", run.id()}, {"version", next.version}, {"policy", to_json(next)}});
      trainer_.reset();
      scheduler_.on_run_finished();
    }
  }

  // -- evolution ------------------------------------------------------------

  void evolve(Timestamp now) {
    EvolutionOutcome outcome;
    if (evolver_)
      outcome = evolve_llm(*evolver_, library_, support_.records(), cfg_.max_new_skills, now);
    else
      outcome = evolve_rule_based(library_, support_.records(), cfg_.max_new_skills, now);
    const auto before = library_.generation();
    const auto flush = apply_outcome(library_, support_, buffer_, outcome);
    ++report_.evolutions;
    std::vector<std::string> names;
    for (const auto& s : outcome.new_skills) names.push_back(s.name);
    nlohmann::json f{{"from_generation", before}, {"generation", library_.generation()}, {"new_skills", names},
                     {"consumed", outcome.consumed}, {"library_size", library_.skills().size()}};
    if (outcome.malformed) f["malformed"] = *outcome.malformed;
    emit(now, "evolve", f);
    emit(now, "flush", {{"generation", flush.generation}, {"flushed", flush.flushed_count},
                        {"buffer_size", buffer_.size()}, {"mode", std::string(to_string(buffer_.mode()))}});
  }

  // -- days -----------------------------------------------------------------

  void begin_day(int day) {
    last_feedback_.clear();
    if (auto* composed = dynamic_cast<ComposedSignalProvider*>(signals_.get()); composed && day > 1)
      composed->refresh_calendar();
  }

  void end_day(int day) {
    report_.library_growth.push_back({day, library_.generation(), library_.skills().size()});
    emit(clock_, "day_end",
         {{"day", day}, {"generation", library_.generation()}, {"library_size", library_.skills().size()},
          {"buffer_size", buffer_.size()}, {"policy_version", slot_.version()}});
  }

  void persist() {
    const auto& p = cfg_.paths;
    if (!p.skills_dir.empty()) save(library_, p.skills_dir);
    if (!p.buffer_snapshot.empty()) save_snapshot(buffer_, p.buffer_snapshot);
    if (!p.events_out.empty()) detail::write_file(p.events_out, events_jsonl(report_.events));
    if (!p.training_log.empty()) detail::write_file(p.training_log, training_log_);
    if (!p.report_out.empty()) detail::write_file(p.report_out, to_json(report_).dump(2) + "\n");
  }

  RuntimeConfig cfg_;
  std::vector<TaskSpec> tasks_;
  TaskRegistry registry_;
  SkillLibrary library_;
  SupportSet support_;
  RlBuffer buffer_;
  PolicySlot slot_;
  Scheduler scheduler_;
  SteppedTrainer trainer_;
  std::shared_ptr<SignalProvider> signals_;
  std::shared_ptr<EvolverClient> evolver_;
  SessionReport report_;
  Timestamp clock_{};
  std::optional<bool> window_open_;
  std::uint64_t run_start_seq_ = 0;
  std::size_t next_ = 0;
  std::string last_feedback_;
  std::string training_log_;
};

inline SessionReport run_session(const RuntimeConfig& cfg, SessionOptions opts = {}) {
  Session s(cfg, std::move(opts));
  return s.run();
}

// ---------------------------------------------------------------------------
// Condition comparison

struct ConditionResult {
  Condition condition;
  Metrics metrics;
  bool incomplete = false;
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  std::vector<ConditionResult> results;
  bool incomplete = false;

  const ConditionResult& at(Condition c) const {
    for (const auto& r : results)
      if (r.condition == c) return r;
    throw Error(Errc::empty_results, "condition missing from comparison");
  }
};

/// Runs every condition on the same stream and seed. Output paths in
/// `base` are ignored.
inline ComparisonReport compare_conditions(RuntimeConfig base, const SessionOptions& opts = {}) {
  base.paths = {};
  ComparisonReport out;
  out.seed = base.stream.seed;
  for (Condition c : kAllConditions) {
    auto cfg = base;
    cfg.condition = c;
    const auto report = run_session(cfg, opts);
    if (!report.metrics) throw Error(Errc::empty_results, "condition " + std::string(to_string(c)) + " produced no scores");
    out.results.push_back({c, *report.metrics, report.incomplete});
    out.incomplete = out.incomplete || report.incomplete;
  }
  return out;
}

/// Completion restricted to days with at least `min_rules` active rules.
inline double completion_on_days(const Metrics& m, std::size_t min_rules) {
  double s = 0.0;
  int n = 0;
  for (auto& [day, v] : m.per_day_completion)
    if (active_rules(day).size() >= min_rules) {
      s += v;
      ++n;
    }
  return n ? s / n : 0.0;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json conds = nlohmann::json::object();
  for (const auto& c : r.results) {
    auto m = to_json(c.metrics);
    m["completion_multi_rule_days"] = completion_on_days(c.metrics, 4);
    m["incomplete"] = c.incomplete;
    conds[std::string(to_string(c.condition))] = m;
  }
  auto delta = [&](Condition a, Condition b) {
    const auto& ma = r.at(a).metrics;
    const auto& mb = r.at(b).metrics;
    return nlohmann::json{{"overall_accuracy", ma.overall_accuracy - mb.overall_accuracy},
                          {"completion_rate", ma.completion_rate - mb.completion_rate}};
  };
  return {{"seed", r.seed},
          {"conditions", conds},
          {"deltas",
           {{"skills_only_vs_baseline", delta(Condition::skills_only, Condition::baseline)},
            {"full_vs_baseline", delta(Condition::full, Condition::baseline)},
            {"full_vs_skills_only", delta(Condition::full, Condition::skills_only)}}},
          {"incomplete", r.incomplete}};
}

// ---------------------------------------------------------------------------
// Offline replay of an event log

struct ReplayFinding {
  std::size_t seq = 0;
  std::string message;
};

struct ReplayResult {
  std::size_t events = 0;
  std::vector<ReplayFinding> violations;
  std::vector<TaskScore> scores;

  bool ok() const { return violations.empty(); }
};

inline std::vector<nlohmann::json> parse_events(std::string_view text) {
  std::vector<nlohmann::json> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, "event line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Re-checks the runtime invariants from the event log alone: training only
/// inside open windows, no swap between serve and score, buffer purity and
/// flush counts, support/query disjointness, generation steps of +1, and a
/// library that never shrinks.
inline ReplayResult replay(const std::vector<nlohmann::json>& events) {
  ReplayResult r;
  r.events = events.size();
  auto fail = [&](std::size_t seq, std::string msg) { r.violations.push_back({seq, std::move(msg)}); };

  bool window_open = false;
  std::optional<std::string> in_flight;  // task served but not yet scored
  std::vector<Generation> buffer;        // generations of query entries
  Generation generation = 0;
  bool generation_known = false;
  std::size_t library_size = 0;
  std::set<std::string> support_ids, query_ids;
  std::optional<Timestamp> last_t;

  for (const auto& e : events) {
    const auto seq = e.value("seq", std::size_t{0});
    const auto type = e.at("type").get<std::string>();
    const auto t = parse_rfc3339(e.at("t").get<std::string>());
    if (last_t && t < *last_t) fail(seq, "event time goes backwards");
    last_t = t;

    if (type == "window") {
      window_open = e.at("open").get<bool>();
    } else if (type.rfind("train_", 0) == 0 || type == "hot_swap") {
      const bool needs_open = type == "train_start" || type == "train_resume" || type == "train_step" ||
                              type == "train_batch" || type == "hot_swap";
      if (needs_open && !window_open) fail(seq, type + " outside an open window");
      if (type == "hot_swap" && in_flight) fail(seq, "hot swap while " + *in_flight + " is in flight");
    } else if (type == "serve") {
      if (in_flight) fail(seq, "task " + *in_flight + " served twice without a score");
      in_flight = e.at("task_id").get<std::string>();
      const auto g = e.at("generation").get<Generation>();
      if (generation_known && g != generation) fail(seq, "serve under unexpected generation");
      generation = g;
      generation_known = true;
    } else if (type == "score") {
      const auto id = e.at("task_id").get<std::string>();
      if (!in_flight || *in_flight != id) fail(seq, "score for " + id + " without a matching serve");
      in_flight.reset();
      const auto routing = e.at("routing").get<std::string>();
      const auto g = e.at("generation").get<Generation>();
      if (routing == "to_query") {
        if (support_ids.count(id)) fail(seq, id + " routed to both stores");
        query_ids.insert(id);
        buffer.push_back(g);
        const auto size = e.at("buffer_size").get<std::size_t>();
        if (size < buffer.size()) {
          // capacity eviction drops the oldest entries
          buffer.erase(buffer.begin(), buffer.begin() + static_cast<long>(buffer.size() - size));
        }
      } else {
        if (query_ids.count(id)) fail(seq, id + " routed to both stores");
        support_ids.insert(id);
      }
      if (e.at("buffer_size").get<std::size_t>() != buffer.size()) fail(seq, "buffer size diverges from replay");
      r.scores.push_back({id, e.at("day").get<int>(), e.at("round").get<int>(),
                          parse_task_kind(e.at("kind").get<std::string>()), e.at("reward").get<double>()});
    } else if (type == "evolve") {
      const auto from = e.at("from_generation").get<Generation>();
      const auto to = e.at("generation").get<Generation>();
      if (to != from + 1) fail(seq, "generation jumped from " + std::to_string(from) + " to " + std::to_string(to));
      if (generation_known && from != generation) fail(seq, "evolution from a stale generation");
      generation = to;
      generation_known = true;
      const auto size = e.at("library_size").get<std::size_t>();
      if (size < library_size) fail(seq, "skill library shrank");
      library_size = size;
    } else if (type == "flush") {
      const auto g = e.at("generation").get<Generation>();
      const bool retain = e.value("mode", std::string("algorithm1")) == "retain_multi_generation";
      std::size_t removed = 0;
      if (!retain) {
        const auto before = buffer.size();
        std::erase_if(buffer, [&](Generation x) { return x <= g; });
        removed = before - buffer.size();
        for (Generation x : buffer)
          if (x <= g) fail(seq, "buffer not pure after flush");
      }
      if (removed != e.at("flushed").get<std::size_t>()) fail(seq, "flush count diverges from replay");
      if (e.at("buffer_size").get<std::size_t>() != buffer.size()) fail(seq, "post-flush size diverges from replay");
    }
  }
  return r;
}

}  // namespace metaclaw
