#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "metaclaw/core/error.hpp"
#include "metaclaw/core/time.hpp"
#include "metaclaw/skill_store.hpp"

namespace metaclaw {

// ---------------------------------------------------------------------------
// Idle signals

struct TimeOfDay {
  int minutes = 0;  // since midnight, [0, 1440)

  static TimeOfDay parse(std::string_view hhmm) {
    if (hhmm.size() != 5 || hhmm[2] != ':' || !detail::all_digits(hhmm.substr(0, 2)) ||
        !detail::all_digits(hhmm.substr(3, 2)))
      throw Error(Errc::invalid_config, "expected HH:MM, got '" + std::string(hhmm) + "'");
    const int h = detail::to_int(hhmm.substr(0, 2)), m = detail::to_int(hhmm.substr(3, 2));
    if (h > 23 || m > 59) throw Error(Errc::invalid_config, "time of day out of range: '" + std::string(hhmm) + "'");
    return {h * 60 + m};
  }

  std::string str() const {
    const int h = minutes / 60, m = minutes % 60;
    return {char('0' + h / 10), char('0' + h % 10), ':', char('0' + m / 10), char('0' + m % 10)};
  }

  friend auto operator<=>(const TimeOfDay&, const TimeOfDay&) = default;
};

/// Configured sleep schedule; may wrap midnight.
struct SleepWindow {
  TimeOfDay start{23 * 60};
  TimeOfDay end{7 * 60};

  SleepWindow() = default;
  SleepWindow(TimeOfDay s, TimeOfDay e) : start(s), end(e) {
    if (start == end) throw Error(Errc::invalid_config, "sleep window start and end coincide");
  }
};

/// Half-open [start, end), wrapping past midnight when start > end.
inline bool sleep_window_contains(TimeOfDay now, const SleepWindow& w) {
  if (w.start < w.end) return w.start <= now && now < w.end;
  return now >= w.start || now < w.end;
}

inline constexpr double kDefaultIdleDeltaMinutes = 30.0;

inline bool inactivity_idle(double idle_minutes, double delta) {
  if (!(delta > 0.0)) throw Error(Errc::invalid_config, "inactivity delta must be positive");
  return idle_minutes >= delta;
}

struct CalendarEvent {
  Timestamp start;
  Timestamp end;
};

/// Whether `now` falls inside any event, each taken half-open.
inline bool calendar_busy(Timestamp now, std::span<const CalendarEvent> events) {
  for (const auto& e : events)
    if (e.start <= now && now < e.end) return true;
  return false;
}

struct IdleSignalState {
  bool sleep_idle = false;
  double input_idle_minutes = 0.0;
  bool calendar_busy = false;
  Timestamp sampled_at{};

  friend bool operator==(const IdleSignalState&, const IdleSignalState&) = default;
};

enum class Signal { sleep, inactivity, calendar };

inline std::string_view to_string(Signal s) {
  switch (s) {
    case Signal::sleep: return "sleep";
    case Signal::inactivity: return "inactivity";
    case Signal::calendar: return "calendar";
  }
  return "?";
}

struct WindowDecision {
  bool open = false;
  std::set<Signal> reasons;
  std::optional<Signal> closed_by;

  friend bool operator==(const WindowDecision&, const WindowDecision&) = default;
};

struct SchedulerConfig {
  SleepWindow sleep;
  double idle_delta_minutes = kDefaultIdleDeltaMinutes;
  /// Input idle below this means the user is at the keyboard right now.
  double activity_epsilon_minutes = 1.0;
  int tick_seconds = 15;
  /// Local time = UTC + offset; used to place the sleep window.
  int utc_offset_minutes = 0;
  std::string calendar_source = "none";
  std::string idle_source = "activity";
  std::chrono::milliseconds pause_grace{2000};
};

/// Any absence signal opens the window, except that fresh input always
/// closes it: presence outranks the schedule and the calendar.
inline WindowDecision decide(const IdleSignalState& s, const SchedulerConfig& cfg) {
  WindowDecision d;
  if (s.input_idle_minutes < cfg.activity_epsilon_minutes) {
    d.closed_by = Signal::inactivity;
    return d;
  }
  if (s.sleep_idle) d.reasons.insert(Signal::sleep);
  if (inactivity_idle(s.input_idle_minutes, cfg.idle_delta_minutes)) d.reasons.insert(Signal::inactivity);
  if (s.calendar_busy) d.reasons.insert(Signal::calendar);
  d.open = !d.reasons.empty();
  return d;
}

inline nlohmann::json to_json(const IdleSignalState& s) {
  return {{"sleep_idle", s.sleep_idle},
          {"input_idle_minutes", s.input_idle_minutes},
          {"calendar_busy", s.calendar_busy},
          {"sampled_at", format_rfc3339(s.sampled_at)}};
}

inline IdleSignalState idle_state_from_json(const nlohmann::json& j) {
  IdleSignalState s;
  s.sleep_idle = j.at("sleep_idle").get<bool>();
  s.input_idle_minutes = j.at("input_idle_minutes").get<double>();
  s.calendar_busy = j.at("calendar_busy").get<bool>();
  s.sampled_at = parse_rfc3339(j.at("sampled_at").get<std::string>());
  if (s.input_idle_minutes < 0) throw Error(Errc::parse_error, "negative input_idle_minutes");
  return s;
}

// ---------------------------------------------------------------------------
// Signal sources

class IdleSource {
 public:
  virtual ~IdleSource() = default;
  virtual double idle_minutes(Timestamp now) = 0;
};

class ConstantIdleSource final : public IdleSource {
 public:
  explicit ConstantIdleSource(double minutes) : minutes_(minutes) {}
  double idle_minutes(Timestamp) override { return minutes_; }

 private:
  double minutes_;
};

/// Idle time derived from recorded user activity (simulation).
class ActivityIdleSource final : public IdleSource {
 public:
  void note_activity(Timestamp t) { last_ = t; }
  double idle_minutes(Timestamp now) override {
    if (!last_) return 0.0;
    return std::chrono::duration<double, std::ratio<60>>(now - *last_).count();
  }

 private:
  std::optional<Timestamp> last_;
};

/// Queries the platform's input idle timer. Reports 0 (present) when the
/// query is unavailable, so an unknown state never opens a window.
class OsIdleSource final : public IdleSource {
 public:
  double idle_minutes(Timestamp) override {
#if defined(__APPLE__)
    const auto out = run("ioreg -c IOHIDSystem | awk '/HIDIdleTime/ {print $NF; exit}'");
    const double per_minute = 1e9 * 60.0;  // nanoseconds
#else
    const auto out = run("xprintidle 2>/dev/null");
    const double per_minute = 1000.0 * 60.0;  // milliseconds
#endif
    if (out.empty()) return 0.0;
    try {
      return std::stod(out) / per_minute;
    } catch (const std::exception&) {
      return 0.0;
    }
  }

 private:
  static std::string run(const char* cmd) {
    std::string out;
    if (FILE* p = popen(cmd, "r")) {
      char buf[128];
      while (std::fgets(buf, sizeof(buf), p)) out += buf;
      pclose(p);
    }
    return out;
  }
};

class CalendarSource {
 public:
  virtual ~CalendarSource() = default;
  virtual std::vector<CalendarEvent> events() = 0;
};

class NoCalendar final : public CalendarSource {
 public:
  std::vector<CalendarEvent> events() override { return {}; }
};

/// Parses a JSON array of {start, end} RFC 3339 objects.
inline std::vector<CalendarEvent> parse_calendar_events(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("calendar payload: ") + e.what());
  }
  if (!j.is_array()) throw Error(Errc::parse_error, "calendar payload must be an array");
  std::vector<CalendarEvent> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("start") || !e.contains("end"))
      throw Error(Errc::parse_error, "calendar event needs start and end");
    CalendarEvent ev{parse_rfc3339(e["start"].get<std::string>()), parse_rfc3339(e["end"].get<std::string>())};
    if (!(ev.start < ev.end)) throw Error(Errc::parse_error, "calendar event ends before it starts");
    out.push_back(ev);
  }
  return out;
}

class FixtureCalendar final : public CalendarSource {
 public:
  explicit FixtureCalendar(std::vector<CalendarEvent> events) : events_(std::move(events)) {}
  static FixtureCalendar from_file(const std::filesystem::path& p) {
    return FixtureCalendar(parse_calendar_events(detail::read_file(p)));
  }
  std::vector<CalendarEvent> events() override { return events_; }

 private:
  std::vector<CalendarEvent> events_;
};

class SignalProvider {
 public:
  virtual ~SignalProvider() = default;
  virtual IdleSignalState sample(Timestamp now) = 0;
  /// Called when the user submits work (simulation hook).
  virtual void note_activity(Timestamp) {}
};

/// Builds signal state from the sleep schedule plus idle and calendar sources.
class ComposedSignalProvider final : public SignalProvider {
 public:
  ComposedSignalProvider(SchedulerConfig cfg, std::unique_ptr<IdleSource> idle, std::unique_ptr<CalendarSource> cal)
      : cfg_(std::move(cfg)), idle_(std::move(idle)), cal_(std::move(cal)) {
    if (cal_) events_ = cal_->events();
  }

  IdleSignalState sample(Timestamp now) override {
    IdleSignalState s;
    s.sampled_at = now;
    s.sleep_idle = sleep_window_contains(TimeOfDay{minute_of_day(now, cfg_.utc_offset_minutes)}, cfg_.sleep);
    s.input_idle_minutes = idle_ ? idle_->idle_minutes(now) : 0.0;
    s.calendar_busy = calendar_busy(now, events_);
    return s;
  }

  void note_activity(Timestamp t) override {
    if (auto* a = dynamic_cast<ActivityIdleSource*>(idle_.get())) a->note_activity(t);
  }

  /// Re-query the calendar (e.g. once per day for HTTP sources).
  void refresh_calendar() {
    if (cal_) events_ = cal_->events();
  }

 private:
  SchedulerConfig cfg_;
  std::unique_ptr<IdleSource> idle_;
  std::unique_ptr<CalendarSource> cal_;
  std::vector<CalendarEvent> events_;
};

/// Replays a recorded trace: the state in force at `now` is the last sample
/// taken at or before it. Before the first sample the user counts as present.
class TraceSignalProvider final : public SignalProvider {
 public:
  explicit TraceSignalProvider(std::vector<IdleSignalState> states) : states_(std::move(states)) {
    std::stable_sort(states_.begin(), states_.end(),
                     [](const auto& a, const auto& b) { return a.sampled_at < b.sampled_at; });
  }

  static TraceSignalProvider from_file(const std::filesystem::path& p) {
    std::vector<IdleSignalState> states;
    std::istringstream in(detail::read_file(p));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        states.push_back(idle_state_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::parse_error, p.string() + ": " + e.what());
      }
    }
    return TraceSignalProvider(std::move(states));
  }

  IdleSignalState sample(Timestamp now) override {
    auto it = std::upper_bound(states_.begin(), states_.end(), now,
                               [](Timestamp t, const IdleSignalState& s) { return t < s.sampled_at; });
    if (it == states_.begin()) return IdleSignalState{false, 0.0, false, now};
    auto s = *std::prev(it);
    s.sampled_at = now;
    return s;
  }

  const std::vector<IdleSignalState>& states() const { return states_; }

 private:
  std::vector<IdleSignalState> states_;
};

// ---------------------------------------------------------------------------
// Training window state machine

/// Mid-batch trainer state. A checkpoint may be resumed at most once.
struct TrainerCheckpoint {
  std::size_t batch_index = 0;
  std::size_t step_within_batch = 0;
  std::string accumulated_state;
  Generation generation = 0;
  std::uint64_t id = 0;

  friend bool operator==(const TrainerCheckpoint&, const TrainerCheckpoint&) = default;
};

/// What the scheduler can ask of a trainer.
class TrainerHandle {
 public:
  virtual ~TrainerHandle() = default;
  virtual bool running() const = 0;
  virtual void start() = 0;
  virtual void resume(const TrainerCheckpoint& cp) = 0;
  /// Requests a pause; returns the checkpoint once acknowledged, or nullopt
  /// if the trainer did not stop within the grace period.
  virtual std::optional<TrainerCheckpoint> pause(std::chrono::milliseconds grace) = 0;
};

enum class CommandKind { start, pause, resume, noop };

inline std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::start: return "start";
    case CommandKind::pause: return "pause";
    case CommandKind::resume: return "resume";
    case CommandKind::noop: return "noop";
  }
  return "?";
}

struct TickCommand {
  CommandKind kind = CommandKind::noop;
  std::optional<TrainerCheckpoint> checkpoint;
  /// A stale checkpoint was dropped while producing this command.
  bool discarded_stale = false;
};

struct TickContext {
  /// Buffer holds enough fresh query data for a run.
  bool train_ready = false;
  Generation generation = 0;
};

/// OMLS: turns window decisions into trainer commands.
class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig cfg = {}) : cfg_(std::move(cfg)) {}

  const SchedulerConfig& config() const { return cfg_; }
  bool window_open() const { return open_; }
  const std::optional<TrainerCheckpoint>& checkpoint() const { return checkpoint_; }

  /// Evaluates one tick. Commands are dispatched to the trainer before
  /// returning; a pause that is not acknowledged raises TrainerUnresponsive.
  TickCommand on_tick(const WindowDecision& decision, TrainerHandle& trainer, const TickContext& ctx) {
    open_ = decision.open;
    TickCommand cmd;
    if (!decision.open) {
      if (trainer.running()) {
        auto cp = trainer.pause(cfg_.pause_grace);
        if (!cp) throw Error(Errc::trainer_unresponsive, "trainer did not acknowledge pause");
        checkpoint_ = *cp;
        cmd.kind = CommandKind::pause;
        cmd.checkpoint = cp;
      }
      return cmd;
    }
    if (trainer.running()) return cmd;
    if (checkpoint_ && checkpoint_->generation != ctx.generation) {
      checkpoint_.reset();
      cmd.discarded_stale = true;
    }
    if (!ctx.train_ready && !checkpoint_) return cmd;
    if (checkpoint_) {
      cmd.kind = CommandKind::resume;
      cmd.checkpoint = checkpoint_;
      trainer.resume(*checkpoint_);
      checkpoint_.reset();
    } else {
      cmd.kind = CommandKind::start;
      trainer.start();
    }
    return cmd;
  }

  /// The trainer finished or aborted its run; any checkpoint is obsolete.
  void on_run_finished() { checkpoint_.reset(); }

 private:
  SchedulerConfig cfg_;
  bool open_ = false;
  std::optional<TrainerCheckpoint> checkpoint_;
};

}  // namespace metaclaw
