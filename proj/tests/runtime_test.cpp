#include <gtest/gtest.h>

#include "support.hpp"

namespace {

/// Absent whenever `open(now)` says so, present otherwise.
class ScriptedSignals final : public mc::SignalProvider {
 public:
  explicit ScriptedSignals(std::function<bool(mc::Timestamp)> open) : open_(std::move(open)) {}
  mc::IdleSignalState sample(mc::Timestamp now) override {
    mc::IdleSignalState s;
    s.sampled_at = now;
    s.input_idle_minutes = open_(now) ? 120.0 : 0.0;
    return s;
  }

 private:
  std::function<bool(mc::Timestamp)> open_;
};

mc::RuntimeConfig short_config(mc::Condition c, int days = 3, std::uint64_t seed = 7) {
  mc::RuntimeConfig cfg;
  cfg.condition = c;
  cfg.stream.seed = seed;
  cfg.stream.days = days;
  return cfg;
}

bool idle_always(mc::Timestamp) { return true; }

mc::SessionOptions always_idle() {
  mc::SessionOptions o;
  o.signals = std::make_shared<ScriptedSignals>(idle_always);
  return o;
}

std::size_t count_type(const mc::SessionReport& r, const std::string& type) {
  std::size_t n = 0;
  for (const auto& e : r.events) n += e.at("type") == type;
  return n;
}

}  // namespace

TEST(Condition, NamesRoundTrip) {
  for (auto c : mc::kAllConditions) EXPECT_EQ(mc::parse_condition(mc::to_string(c)), c);
  EXPECT_THROW(mc::parse_condition("nonsense"), mc::Error);
  EXPECT_FALSE(mc::evolution_enabled(mc::Condition::baseline));
  EXPECT_TRUE(mc::evolution_enabled(mc::Condition::skills_only));
  EXPECT_FALSE(mc::training_enabled(mc::Condition::skills_only));
  EXPECT_TRUE(mc::training_enabled(mc::Condition::full));
}

TEST(Session, BaselineNeverEvolvesOrTrains) {
  const auto r = mc::run_session(short_config(mc::Condition::baseline), always_idle());
  EXPECT_FALSE(r.incomplete) << r.error;
  EXPECT_EQ(r.scores.size(), 3u * 42u);
  EXPECT_EQ(r.evolutions, 0u);
  EXPECT_EQ(r.hot_swaps, 0u);
  EXPECT_EQ(count_type(r, "train_step"), 0u);
  EXPECT_EQ(count_type(r, "evolve"), 0u);
  for (const auto& p : r.library_growth) EXPECT_EQ(p.size, 0u);
  EXPECT_EQ(r.final_policy, mc::RuntimeConfig{}.initial_policy);
}

TEST(Session, SkillsOnlyGrowsLibraryWithoutTraining) {
  const auto r = mc::run_session(short_config(mc::Condition::skills_only), always_idle());
  EXPECT_FALSE(r.incomplete) << r.error;
  ASSERT_GE(r.library_growth.size(), 2u);
  EXPECT_GE(r.library_growth[1].generation, 1u);
  EXPECT_GT(r.library_growth.back().size, 0u);
  EXPECT_EQ(r.hot_swaps, 0u);
  EXPECT_EQ(count_type(r, "train_start"), 0u);
  EXPECT_EQ(count_type(r, "window"), 0u);
  for (std::size_t i = 1; i < r.library_growth.size(); ++i) {
    EXPECT_GE(r.library_growth[i].size, r.library_growth[i - 1].size);
    EXPECT_GE(r.library_growth[i].generation, r.library_growth[i - 1].generation);
  }
}

TEST(Session, FullConditionTrainsAndSwaps) {
  const auto r = mc::run_session(short_config(mc::Condition::full), always_idle());
  EXPECT_FALSE(r.incomplete) << r.error;
  EXPECT_GE(r.hot_swaps, 1u);
  EXPECT_EQ(r.final_policy.version, r.hot_swaps);
  const auto rep = mc::replay(r.events);
  EXPECT_TRUE(rep.ok()) << rep.violations.front().message;
  EXPECT_EQ(rep.scores, r.scores);
}

TEST(Session, NoTrainingWhileUserIsPresent) {
  auto opts = always_idle();
  opts.signals = std::make_shared<ScriptedSignals>([](mc::Timestamp) { return false; });
  const auto r = mc::run_session(short_config(mc::Condition::full), opts);
  EXPECT_EQ(count_type(r, "train_step"), 0u);
  EXPECT_EQ(r.hot_swaps, 0u);
}

TEST(Session, FlickeringWindowReplaysCleanly) {
  // Windows of a few minutes force pauses mid-run.
  auto opts = always_idle();
  opts.signals = std::make_shared<ScriptedSignals>([](mc::Timestamp t) {
    const auto s = std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
    return (s / 20) % 3 == 0;
  });
  auto cfg = short_config(mc::Condition::full, 4);
  cfg.scheduler.tick_seconds = 5;
  const auto r = mc::run_session(cfg, opts);
  EXPECT_FALSE(r.incomplete) << r.error;
  EXPECT_GT(count_type(r, "train_pause"), 0u);
  EXPECT_GT(count_type(r, "train_resume"), 0u);
  const auto rep = mc::replay(r.events);
  EXPECT_TRUE(rep.ok()) << rep.violations.front().message;
}

TEST(Session, StepServesTasksInOrder) {
  mc::Session s(short_config(mc::Condition::skills_only, 1), always_idle());
  EXPECT_EQ(s.tasks().size(), 42u);
  const auto first = s.step();
  EXPECT_EQ(first.task_id, "d01-r01");
  EXPECT_EQ(first.day_index, 1);
  EXPECT_EQ(first.round_index, 1);
  EXPECT_EQ(s.next_task(), 1u);
  const auto& e = s.report().events;
  ASSERT_GE(e.size(), 2u);
  EXPECT_EQ(e[0]["type"], "serve");
  EXPECT_EQ(e[0]["t"], "2026-03-16T09:00:00+08:00");
  EXPECT_EQ(e[1]["type"], "score");
  EXPECT_EQ(e[1]["reward"], first.value);
  while (!s.finished()) s.step();
  EXPECT_THROW(s.step(), mc::Error);
}

TEST(Session, RoutesEveryTrajectoryExactlyOnce) {
  mc::Session s(short_config(mc::Condition::baseline, 1), always_idle());
  std::size_t query = 0, support = 0;
  while (!s.finished()) {
    const auto score = s.step();
    // The day_end event may follow the score.
    const auto& events = s.report().events;
    const auto& e = *std::find_if(events.rbegin(), events.rend(), [](const auto& x) { return x["type"] == "score"; });
    (e["routing"] == "to_query" ? query : support)++;
    if (score.kind == mc::TaskKind::file_check) {
      EXPECT_EQ(e["routing"] == "to_query", score.value == 1.0);
    }
  }
  EXPECT_EQ(query + support, 42u);
  EXPECT_EQ(s.buffer().size(), query);
  EXPECT_EQ(s.support().size(), support);
}

TEST(Session, EventLogIsDeterministic) {
  auto cfg = short_config(mc::Condition::full, 3, 11);
  const auto a = mc::run_session(cfg, always_idle());
  const auto b = mc::run_session(cfg, always_idle());
  EXPECT_EQ(mc::events_jsonl(a.events), mc::events_jsonl(b.events));
  cfg.stream.seed = 12;
  const auto c = mc::run_session(cfg, always_idle());
  EXPECT_NE(mc::events_jsonl(a.events), mc::events_jsonl(c.events));
}

TEST(Session, PersistsOutputs) {
  TempDir dir;
  auto cfg = short_config(mc::Condition::full, 2);
  cfg.paths.skills_dir = (dir / "skills").string();
  cfg.paths.buffer_snapshot = (dir / "buffer.json").string();
  cfg.paths.report_out = (dir / "report.json").string();
  cfg.paths.events_out = (dir / "events.jsonl").string();
  cfg.paths.training_log = (dir / "train.jsonl").string();
  const auto r = mc::run_session(cfg, always_idle());
  const auto lib = mc::load(dir / "skills");
  EXPECT_EQ(lib.skills().size(), r.library_growth.back().size);
  EXPECT_EQ(mc::load_snapshot(dir / "buffer.json").size(), r.events.back().value("buffer_size", std::size_t{0}));
  const auto report = nlohmann::json::parse(mc::detail::read_file(dir / "report.json"));
  EXPECT_EQ(report["condition"], "full");
  EXPECT_EQ(mc::parse_events(mc::detail::read_file(dir / "events.jsonl")).size(), r.events.size());
  EXPECT_FALSE(mc::detail::read_file(dir / "train.jsonl").empty());
}

TEST(Session, StartingLibraryIsKept) {
  const auto lib = mc::add_skills({}, {mc::canonical_skill(mc::Rule::P1, 0, ts("2026-03-15T00:00:00Z"))});
  mc::SessionOptions opts = always_idle();
  opts.library = lib;
  const auto r = mc::run_session(short_config(mc::Condition::skills_only, 1), opts);
  EXPECT_GE(r.library_growth.back().size, 1u);
}

TEST(Session, MalformedEvolverStillAdvancesGeneration) {
  auto opts = always_idle();
  opts.evolver = std::make_shared<mc::FixtureEvolverClient>(std::vector<std::string>(50, "no json here"));
  const auto r = mc::run_session(short_config(mc::Condition::skills_only, 2), opts);
  EXPECT_FALSE(r.incomplete) << r.error;
  ASSERT_GT(r.evolutions, 0u);
  EXPECT_EQ(r.library_growth.back().size, 0u);
  EXPECT_EQ(r.library_growth.back().generation, r.evolutions);
  EXPECT_TRUE(mc::replay(r.events).ok());
}

TEST(Session, ExhaustedEvolverMarksReportIncomplete) {
  auto opts = always_idle();
  opts.evolver = std::make_shared<mc::FixtureEvolverClient>(std::vector<std::string>{});
  const auto r = mc::run_session(short_config(mc::Condition::skills_only, 2), opts);
  EXPECT_TRUE(r.incomplete);
  EXPECT_NE(r.error.find("ClientError"), std::string::npos);
  EXPECT_TRUE(r.metrics);
  EXPECT_EQ(r.events.back()["type"], "abort");
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const mc::RuntimeConfig d;
  const auto back = mc::config_from_json(mc::to_json(d));
  EXPECT_EQ(mc::to_json(back), mc::to_json(d));
  EXPECT_EQ(d.scheduler.utc_offset_minutes, 480);
  EXPECT_EQ(d.condition, mc::Condition::full);
}

TEST(Config, PartialJsonKeepsDefaults) {
  const auto c = mc::config_from_json(nlohmann::json::parse(R"({"condition":"baseline","stream":{"seed":9}})"));
  EXPECT_EQ(c.condition, mc::Condition::baseline);
  EXPECT_EQ(c.stream.seed, 9u);
  EXPECT_EQ(c.stream.days, mc::RuntimeConfig{}.stream.days);
}

TEST(Config, RejectsBadInput) {
  auto code = [](const char* text) {
    try {
      mc::config_from_json(nlohmann::json::parse(text));
    } catch (const mc::Error& e) {
      return e.code();
    }
    return mc::Errc::parse_error;
  };
  EXPECT_EQ(code(R"({"colour":"red"})"), mc::Errc::invalid_config);
  EXPECT_EQ(code(R"({"condition":"everything"})"), mc::Errc::invalid_config);
  EXPECT_EQ(code(R"({"retrieval_k":0})"), mc::Errc::invalid_config);
  EXPECT_EQ(code(R"({"alpha":"fast"})"), mc::Errc::invalid_config);
  EXPECT_EQ(code(R"({"scheduler":{"tick_seconds":0}})"), mc::Errc::invalid_config);
  EXPECT_EQ(code(R"({"workday":{"start":"18:00","end":"09:00"}})"), mc::Errc::invalid_config);
  EXPECT_EQ(code("[]"), mc::Errc::invalid_config);
}

TEST(Config, EnvironmentOverrides) {
  nlohmann::json j = nlohmann::json::object();
  mc::apply_env_overrides(j, {{"METACLAW_STREAM__SEED", "3"},
                              {"METACLAW_CONDITION", "skills_only"},
                              {"METACLAW_SCHEDULER__IDLE_SOURCE", "constant:45"},
                              {"OTHER_VAR", "1"},
                              {"METACLAW_", "x"}});
  EXPECT_EQ(j["stream"]["seed"], 3);
  EXPECT_EQ(j["condition"], "skills_only");
  EXPECT_EQ(j["scheduler"]["idle_source"], "constant:45");
  EXPECT_EQ(j.size(), 3u);
  const auto c = mc::config_from_json(j);
  EXPECT_EQ(c.stream.seed, 3u);
  EXPECT_EQ(c.condition, mc::Condition::skills_only);
}

TEST(Config, LoadFileAppliesEnvironment) {
  TempDir dir;
  mc::detail::write_file(dir / "c.json", R"({"condition":"baseline","alpha":0.5})");
  const auto c = mc::load_config(dir / "c.json", {{"METACLAW_ALPHA", "0.25"}});
  EXPECT_EQ(c.alpha, 0.25);
  EXPECT_EQ(c.condition, mc::Condition::baseline);
  mc::detail::write_file(dir / "bad.json", "{");
  EXPECT_THROW(mc::load_config(dir / "bad.json", {}), mc::Error);
}

TEST(Config, PluginSpecs) {
  EXPECT_EQ(mc::make_evolver_client("rule_based"), nullptr);
  EXPECT_THROW(mc::make_evolver_client("telepathy"), mc::Error);
  EXPECT_THROW(mc::make_calendar("outlook"), mc::Error);
  mc::SchedulerConfig s;
  s.idle_source = "constant:abc";
  EXPECT_THROW(mc::make_signal_provider(s), mc::Error);
  s.idle_source = "constant:45";
  auto p = mc::make_signal_provider(s);
  EXPECT_EQ(p->sample(ts("2026-03-16T05:00:00Z")).input_idle_minutes, 45.0);
}

TEST(Compare, RunsAllConditionsOnOneStream) {
  auto cfg = short_config(mc::Condition::full, 2);
  const auto cmp = mc::compare_conditions(cfg, always_idle());
  ASSERT_EQ(cmp.results.size(), 3u);
  EXPECT_EQ(cmp.results[0].condition, mc::Condition::baseline);
  const auto j = mc::to_json(cmp);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_TRUE(j["conditions"].contains("skills_only"));
  EXPECT_DOUBLE_EQ(j["deltas"]["full_vs_baseline"]["overall_accuracy"].get<double>(),
                   cmp.at(mc::Condition::full).metrics.overall_accuracy -
                       cmp.at(mc::Condition::baseline).metrics.overall_accuracy);
}

TEST(Compare, CompletionOnDaysFiltersByRuleCount) {
  mc::Metrics m;
  m.per_day_completion = {{1, 0.0}, {2, 0.5}, {9, 0.2}, {10, 0.6}};
  EXPECT_DOUBLE_EQ(mc::completion_on_days(m, 4), 0.4);
  EXPECT_DOUBLE_EQ(mc::completion_on_days(m, 99), 0.0);
}

TEST(Replay, DetectsTamperedLogs) {
  const auto r = mc::run_session(short_config(mc::Condition::full), always_idle());
  ASSERT_TRUE(mc::replay(r.events).ok());

  auto tampered = r.events;
  for (auto& e : tampered)
    if (e["type"] == "window" && e["open"] == true) {
      e["open"] = false;
      break;
    }
  EXPECT_FALSE(mc::replay(tampered).ok());

  tampered = r.events;
  for (auto& e : tampered)
    if (e["type"] == "evolve") {
      e["generation"] = e["from_generation"].get<int>() + 2;
      break;
    }
  EXPECT_FALSE(mc::replay(tampered).ok());

  tampered = r.events;
  for (auto& e : tampered)
    if (e["type"] == "flush") {
      e["flushed"] = e["flushed"].get<int>() + 1;
      break;
    }
  EXPECT_FALSE(mc::replay(tampered).ok());

  // Swap between a serve and its score.
  tampered = r.events;
  for (std::size_t i = 0; i < tampered.size(); ++i)
    if (tampered[i]["type"] == "hot_swap") {
      auto swap = tampered[i];
      tampered.erase(tampered.begin() + static_cast<long>(i));
      for (std::size_t k = 0; k < tampered.size(); ++k)
        if (tampered[k]["type"] == "serve" && tampered[k]["t"] >= swap["t"]) {
          swap["t"] = tampered[k]["t"];
          tampered.insert(tampered.begin() + static_cast<long>(k) + 1, swap);
          break;
        }
      break;
    }
  EXPECT_FALSE(mc::replay(tampered).ok());
}

TEST(Replay, ParseEventsReportsLine) {
  EXPECT_EQ(mc::parse_events("{\"a\":1}\n\n{\"b\":2}\n").size(), 2u);
  try {
    mc::parse_events("{\"a\":1}\nnot json\n");
    FAIL();
  } catch (const mc::Error& e) {
    EXPECT_EQ(e.code(), mc::Errc::parse_error);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}
