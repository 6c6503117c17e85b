#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metaclaw/core/error.hpp"
#include "metaclaw/core/rng.hpp"
#include "metaclaw/core/time.hpp"
#include "metaclaw/evolution.hpp"
#include "metaclaw/policy.hpp"
#include "metaclaw/rules.hpp"
#include "metaclaw/skill_store.hpp"
#include "metaclaw/trajectory.hpp"

namespace metaclaw {

inline constexpr int kBenchOffsetMinutes = 8 * 60;  // workspace timestamps are +08:00

// ---------------------------------------------------------------------------
// Tasks and streams

struct TaskSpec {
  std::string id;
  int day_index = 1;
  int round_index = 1;
  TaskKind kind = TaskKind::file_check;
  std::string prompt;
  std::vector<Rule> applicable_rules;
  /// Workday calendar date, YYYY-MM-DD.
  std::string date;
  std::string feedback_on_fail;
  /// Outcome of the previous round of the same day, attached when served.
  std::string context_feedback;

  // multi_choice
  std::set<char> truth;
  int n_options = 0;
  std::optional<Rule> topic_rule;

  // file_check
  std::string expected_output_path;
  std::vector<std::string> required_fields;
  bool modifies_existing = false;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct StreamConfig {
  std::uint64_t seed = 7;
  int days = 14;
  int per_day = 42;
  /// Fraction of each day's tasks that are multi-choice.
  double mix = 31.0 / 42.0;
  /// Step function (from_day, distractors), non-decreasing in both.
  std::vector<std::pair<int, int>> difficulty_ramp{{1, 2}, {6, 3}, {11, 4}};
  std::string start_date = "2026-03-16";

  int distractors(int day) const {
    int d = 0;
    for (auto [from, n] : difficulty_ramp)
      if (day >= from) d = n;
    return d;
  }

  void validate() const {
    if (days < 1) throw Error(Errc::invalid_config, "stream days must be >= 1");
    if (per_day < 1) throw Error(Errc::invalid_config, "stream per_day must be >= 1");
    if (!(mix >= 0.0 && mix <= 1.0)) throw Error(Errc::invalid_config, "stream mix must lie in [0,1]");
    for (std::size_t i = 1; i < difficulty_ramp.size(); ++i)
      if (difficulty_ramp[i].first <= difficulty_ramp[i - 1].first ||
          difficulty_ramp[i].second < difficulty_ramp[i - 1].second)
        throw Error(Errc::invalid_config, "difficulty ramp must be monotone");
    parse_rfc3339(start_date + "T00:00:00Z");
  }
};

namespace detail {

struct FileTemplate {
  std::string_view stem;
  std::string_view what;
  std::vector<std::string_view> fields;
  bool modifies_existing;
};

inline const std::vector<FileTemplate>& file_templates() {
  static const std::vector<FileTemplate> t{
      {"decision_log", "create a decision log tracking key decisions from the documents", {"title", "decisions", "review_date"}, false},
      {"meeting_notes", "summarize the stand-up transcript into meeting notes", {"title", "attendees", "meeting_date"}, false},
      {"deploy_record", "append a deployment record for today's release", {"timestamp", "env", "changes"}, false},
      {"incident_report", "write an incident report for the outage described in the ticket", {"incident_id", "severity", "detected_at"}, false},
      {"budget_summary", "produce a budget summary from the expense sheets", {"quarter", "total", "reviewed_date"}, false},
      {"sprint_board", "update the sprint board: mark finished items done", {"tasks", "updated_at"}, true},
      {"vendor_contacts", "update the vendor contact sheet with the new account managers", {"contacts", "updated_at"}, true},
      {"project_timeline", "move the milestones slipped in the review to their new dates", {"milestones", "due_date"}, true},
  };
  return t;
}

inline std::string_view topic_phrase(Rule r) {
  switch (r) {
    case Rule::P1: return "how timestamps are recorded in project files";
    case Rule::P2: return "how output files are named and filed";
    case Rule::P3: return "which metadata each deliverable must carry";
    case Rule::P4: return "how existing records are changed safely";
    case Rule::P5: return "how finished work is logged";
  }
  return "";
}

inline std::string two_digits(int v) {
  auto s = std::to_string(v);
  return s.size() < 2 ? std::string(2 - s.size(), '0') + s : s;
}

inline std::string add_days(const std::string& date, int n) {
  const auto t = parse_rfc3339(date + "T00:00:00Z") + std::chrono::days{n};
  return format_rfc3339(t).substr(0, 10);
}

inline std::string compact(const std::string& date) { return date.substr(0, 4) + date.substr(5, 2) + date.substr(8, 2); }

}  // namespace detail

inline std::string task_id_for(int day, int round) {
  return "d" + detail::two_digits(day) + "-r" + detail::two_digits(round);
}

inline std::string day_dir(int day) { return "day" + detail::two_digits(day); }

/// Path of the pre-existing file a modify task edits.
inline std::string existing_file_path(int day, const std::string& date, std::string_view stem) {
  return day_dir(day) + "/" + detail::compact(date) + "_" + std::string(stem) + ".json";
}

inline std::vector<TaskSpec> generate_stream(const StreamConfig& cfg) {
  cfg.validate();
  std::vector<TaskSpec> out;
  out.reserve(static_cast<std::size_t>(cfg.days) * static_cast<std::size_t>(cfg.per_day));
  const auto& templates = detail::file_templates();
  for (int day = 1; day <= cfg.days; ++day) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(day)}));
    const auto date = detail::add_days(cfg.start_date, day - 1);
    const auto rules = active_rules(day);
    const int n_mc = static_cast<int>(std::lround(cfg.mix * cfg.per_day));
    std::vector<TaskKind> kinds(static_cast<std::size_t>(cfg.per_day), TaskKind::file_check);
    std::fill_n(kinds.begin(), n_mc, TaskKind::multi_choice);
    for (std::size_t i = kinds.size(); i > 1; --i) std::swap(kinds[i - 1], kinds[uniform_index(rng, i)]);

    for (int round = 1; round <= cfg.per_day; ++round) {
      TaskSpec t;
      t.id = task_id_for(day, round);
      t.day_index = day;
      t.round_index = round;
      t.kind = kinds[static_cast<std::size_t>(round - 1)];
      t.date = date;
      if (t.kind == TaskKind::file_check) {
        const auto& tpl = templates[uniform_index(rng, templates.size())];
        t.applicable_rules = rules;
        t.modifies_existing = tpl.modifies_existing;
        for (auto f : tpl.fields) t.required_fields.emplace_back(f);
        std::string fields;
        for (std::size_t i = 0; i < t.required_fields.size(); ++i)
          fields += (i ? ", " : "") + t.required_fields[i];
        if (tpl.modifies_existing) {
          t.expected_output_path = existing_file_path(day, date, tpl.stem);
          t.prompt = "Based on the reference documents in " + day_dir(day) + "/, " + std::string(tpl.what) +
                     " in " + t.expected_output_path + ". Keep these fields: " + fields + ".";
        } else {
          t.expected_output_path = day_dir(day) + "/" + std::string(tpl.stem) + "_r" + detail::two_digits(round) + ".json";
          t.prompt = "Based on the reference documents in " + day_dir(day) + "/, " + std::string(tpl.what) +
                     ". Save as " + t.expected_output_path + ". Include these fields: " + fields + ".";
        }
        t.feedback_on_fail = "Output must contain the fields: " + fields + ".";
      } else {
        const Rule topic = rules[uniform_index(rng, rules.size())];
        const int truth_size = 1 + static_cast<int>(uniform_index(rng, 2));
        t.n_options = std::clamp(truth_size + cfg.distractors(day), 2, 6);
        t.topic_rule = topic;
        t.applicable_rules = {topic};
        std::vector<char> labels;
        for (int i = 0; i < t.n_options; ++i) labels.push_back(static_cast<char>('A' + i));
        for (int i = 0; i < truth_size; ++i) {
          const auto j = static_cast<std::size_t>(i) + uniform_index(rng, labels.size() - static_cast<std::size_t>(i));
          std::swap(labels[static_cast<std::size_t>(i)], labels[j]);
          t.truth.insert(labels[static_cast<std::size_t>(i)]);
        }
        std::string prompt = "Regarding " + std::string(detail::topic_phrase(topic)) + " in the " + day_dir(day) +
                             " documents, which of the following descriptions are consistent with the project "
                             "documentation? (Select all correct options)\n\n";
        for (int i = 0; i < t.n_options; ++i) {
          const char l = static_cast<char>('A' + i);
          prompt += std::string(1, l) + ". Statement " + std::to_string(i + 1) + " about " +
                    std::string(info(topic).category) + " conventions (ref " + t.id + "-" + std::string(1, l) + ")\n";
        }
        prompt += "\nPlease answer using \\bbox{X} or \\bbox{X,Y} format.";
        t.prompt = std::move(prompt);
        t.feedback_on_fail = std::string(info(topic).feedback);
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

inline nlohmann::json to_json(const TaskSpec& t) {
  nlohmann::json rules = nlohmann::json::array();
  for (Rule r : t.applicable_rules) rules.push_back(std::string(rule_id(r)));
  nlohmann::json j{{"id", t.id},
                   {"day_index", t.day_index},
                   {"round_index", t.round_index},
                   {"kind", std::string(to_string(t.kind))},
                   {"prompt", t.prompt},
                   {"applicable_rules", rules},
                   {"date", t.date},
                   {"feedback_on_fail", t.feedback_on_fail}};
  if (t.kind == TaskKind::multi_choice) {
    std::string truth;
    for (char c : t.truth) truth += c;
    j["truth"] = truth;
    j["n_options"] = t.n_options;
    j["topic_rule"] = t.topic_rule ? std::string(rule_id(*t.topic_rule)) : "";
  } else {
    j["expected_output_path"] = t.expected_output_path;
    j["required_fields"] = t.required_fields;
    j["modifies_existing"] = t.modifies_existing;
  }
  return j;
}

/// JSON-lines export of a stream.
inline std::string export_stream(const std::vector<TaskSpec>& tasks) {
  std::string out;
  for (const auto& t : tasks) out += to_json(t).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Workspace: an in-memory file tree mutated by shell-like agent commands.

struct Workspace {
  std::map<std::string, std::string> files;

  bool exists(const std::string& p) const { return files.count(p) > 0; }

  /// Understands `cat > P <<'EOF'`, `cat >> P <<'EOF'` (heredoc bodies) and
  /// `cp SRC DST`. Anything else is treated as a read-only command.
  void apply(const Step& step) {
    const auto& c = step.command;
    auto heredoc = [&](std::size_t redirect_len) {
      const auto nl = c.find('\n');
      if (nl == std::string::npos) return;
      const auto head = c.substr(redirect_len, nl - redirect_len);
      const auto marker = head.find(" <<'EOF'");
      if (marker == std::string::npos) return;
      const auto path = head.substr(0, marker);
      auto body = c.substr(nl + 1);
      const std::string terminator = "EOF";
      if (body.size() >= terminator.size() && body.compare(body.size() - terminator.size(), terminator.size(), terminator) == 0)
        body.erase(body.size() - terminator.size());
      if (redirect_len == 6)
        files[path] = body;
      else
        files[path] += body;
    };
    if (c.rfind("cat > ", 0) == 0) {
      heredoc(6);
    } else if (c.rfind("cat >> ", 0) == 0) {
      heredoc(7);
    } else if (c.rfind("cp ", 0) == 0) {
      std::istringstream in(c.substr(3));
      std::string src, dst;
      if (in >> src >> dst) {
        auto it = files.find(src);
        if (it != files.end()) files[dst] = it->second;
      }
    }
  }

  void apply(const std::vector<Step>& steps) {
    for (const auto& s : steps) apply(s);
  }
};

inline std::string write_command(const std::string& path, const std::string& body) {
  return "cat > " + path + " <<'EOF'\n" + body + "\nEOF";
}

inline std::string append_command(const std::string& path, const std::string& line) {
  return "cat >> " + path + " <<'EOF'\n" + line + "\nEOF";
}

/// Files that exist before a task starts. A modify task finds its record
/// there; every task is checked in its own copy so earlier backups or
/// outputs cannot satisfy a later task's checks.
inline Workspace initial_workspace(const TaskSpec& t) {
  Workspace ws;
  if (t.kind != TaskKind::file_check || !t.modifies_existing) return ws;
  nlohmann::json doc;
  for (const auto& f : t.required_fields) doc[f] = "pending";
  ws.files[t.expected_output_path] = doc.dump(2);
  return ws;
}

// ---------------------------------------------------------------------------
// Checkers

struct CheckResult {
  bool passed = false;
  /// Rule ids plus "schema" (required task fields present).
  std::map<std::string, bool> per_rule;
  std::string feedback;
  bool missing_output = false;
};

namespace detail {

inline const std::regex& iso_offset_re() {
  static const std::regex re(R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\+08:00$)");
  return re;
}

inline const std::regex& snake_dated_name_re() {
  static const std::regex re(R"(^\d{8}_[a-z0-9]+(_[a-z0-9]+)*\.[a-z0-9]+$)");
  return re;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline bool is_datetime_key(std::string_view key) {
  return key == "date" || key == "time" || key == "timestamp" || ends_with(key, "_at") || ends_with(key, "_date") ||
         ends_with(key, "_time") || ends_with(key, "_timestamp");
}

inline void collect_datetime_values(const nlohmann::json& j, std::vector<std::string>& out) {
  if (j.is_object()) {
    for (auto& [k, v] : j.items()) {
      if (is_datetime_key(k) && v.is_string()) out.push_back(v.get<std::string>());
      collect_datetime_values(v, out);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) collect_datetime_values(v, out);
  }
}

inline std::string basename(const std::string& p) {
  const auto s = p.rfind('/');
  return s == std::string::npos ? p : p.substr(s + 1);
}

inline std::string dirname(const std::string& p) {
  const auto s = p.rfind('/');
  return s == std::string::npos ? std::string() : p.substr(0, s);
}

}  // namespace detail

/// P1: every date/time field is `YYYY-MM-DDTHH:MM:SS+08:00`.
inline bool check_timestamp_value(const std::string& v) { return std::regex_match(v, detail::iso_offset_re()); }

/// P2: `YYYYMMDD_<snake_case>.<ext>`.
inline bool check_file_name(const std::string& filename) {
  return std::regex_match(filename, detail::snake_dated_name_re());
}

/// P5: a `[DONE] <timestamp> | <task_id> | <summary>` line for this task.
inline bool check_done_log(const std::string& log, const std::string& task_id) {
  static const std::regex line_re(R"(^\[DONE\] (\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(?:Z|[+-]\d{2}:\d{2})) \| ([^|]+?) \| (.+)$)");
  std::istringstream in(log);
  std::string line;
  std::smatch m;
  while (std::getline(in, line))
    if (std::regex_match(line, m, line_re) && m[2] == task_id) return true;
  return false;
}

/// Where a create task's output landed: the expected name, optionally with
/// a date prefix or suffix. Modify tasks always use the existing path.
inline std::optional<std::string> locate_output(const TaskSpec& task, const Workspace& ws) {
  if (task.modifies_existing) {
    if (ws.exists(task.expected_output_path)) return task.expected_output_path;
    return std::nullopt;
  }
  const auto dir = detail::dirname(task.expected_output_path);
  const auto base = detail::basename(task.expected_output_path);
  const auto dot = base.rfind('.');
  const auto stem = base.substr(0, dot), ext = dot == std::string::npos ? std::string() : base.substr(dot);
  const std::regex re("^(\\d{8}_)?" + stem + "(_\\d{8})?" + std::regex_replace(ext, std::regex(R"(\.)"), R"(\.)") + "$");
  const auto prefix = dir.empty() ? std::string() : dir + "/";
  for (const auto& [path, _] : ws.files) {
    if (path.rfind(prefix, 0) != 0) continue;
    const auto name = path.substr(prefix.size());
    if (name.find('/') != std::string::npos) continue;
    if (std::regex_match(name, re)) return path;
  }
  return std::nullopt;
}

inline CheckResult check_file(const TaskSpec& task, const Workspace& ws) {
  if (task.kind != TaskKind::file_check) throw Error(Errc::unknown_task, task.id + " is not a file-check task");
  CheckResult r;
  auto fail_all = [&](const std::string& why) {
    r.missing_output = true;
    r.per_rule["schema"] = false;
    r.feedback = why;
    for (Rule rule : task.applicable_rules) {
      r.per_rule[std::string(rule_id(rule))] = false;
      r.feedback += " " + std::string(info(rule).feedback);
    }
    r.passed = false;
    return r;
  };
  const auto path = locate_output(task, ws);
  if (!path) return fail_all("Expected output " + task.expected_output_path + " was not produced.");

  nlohmann::json doc;
  bool parsed = true;
  try {
    doc = nlohmann::json::parse(ws.files.at(*path));
  } catch (const nlohmann::json::exception&) {
    parsed = false;
  }
  std::vector<std::string> missing;
  if (parsed && doc.is_object()) {
    for (const auto& f : task.required_fields)
      if (!doc.contains(f)) missing.push_back(f);
  }
  const bool schema_ok = parsed && doc.is_object() && missing.empty();
  r.per_rule["schema"] = schema_ok;
  std::vector<std::string> notes;
  if (!schema_ok) {
    std::string m;
    for (std::size_t i = 0; i < missing.size(); ++i) m += (i ? ", " : "") + missing[i];
    notes.push_back(parsed ? "Output is missing required fields: " + m + "." : "Output is not valid JSON.");
  }
  for (Rule rule : task.applicable_rules) {
    bool ok = false;
    switch (rule) {
      case Rule::P1: {
        std::vector<std::string> values;
        if (parsed) detail::collect_datetime_values(doc, values);
        ok = parsed && std::all_of(values.begin(), values.end(), check_timestamp_value);
        break;
      }
      case Rule::P2:
        ok = check_file_name(detail::basename(*path));
        break;
      case Rule::P3:
        ok = parsed && doc.is_object() && doc.contains("created_at") && doc.contains("author") && doc.contains("status");
        break;
      case Rule::P4:
        ok = !task.modifies_existing || ws.exists(*path + ".bak");
        break;
      case Rule::P5: {
        auto it = ws.files.find("done.log");
        ok = it != ws.files.end() && check_done_log(it->second, task.id);
        break;
      }
    }
    r.per_rule[std::string(rule_id(rule))] = ok;
    if (!ok) notes.emplace_back(info(rule).feedback);
  }
  r.passed = std::all_of(r.per_rule.begin(), r.per_rule.end(), [](const auto& kv) { return kv.second; });
  for (std::size_t i = 0; i < notes.size(); ++i) r.feedback += (i ? " " : "") + notes[i];
  return r;
}

// ---------------------------------------------------------------------------
// Multi-choice scoring

/// max(0, 1 - (FP + FN) / n_options) over option labels 'A'.. .
inline double score_multichoice(const std::set<char>& truth, const std::set<char>& predicted, int n_options) {
  if (n_options < 1) throw Error(Errc::invalid_option, "n_options must be positive");
  auto in_universe = [&](char c) { return c >= 'A' && c < static_cast<char>('A' + n_options); };
  for (char c : predicted)
    if (!in_universe(c)) throw Error(Errc::invalid_option, std::string("option '") + c + "' outside the universe");
  for (char c : truth)
    if (!in_universe(c)) throw Error(Errc::invalid_option, std::string("truth option '") + c + "' outside the universe");
  int fp = 0, fn = 0;
  for (char c : predicted) fp += truth.count(c) ? 0 : 1;
  for (char c : truth) fn += predicted.count(c) ? 0 : 1;
  return std::max(0.0, 1.0 - static_cast<double>(fp + fn) / n_options);
}

inline std::string format_answer(const std::set<char>& options) {
  std::string out = "\\bbox{";
  bool first = true;
  for (char c : options) {
    if (!first) out += ",";
    out += c;
    first = false;
  }
  return out + "}";
}

/// Extracts the last `\bbox{...}` answer; nullopt when absent.
inline std::optional<std::set<char>> parse_answer(std::string_view text) {
  const auto at = text.rfind("\\bbox{");
  if (at == std::string_view::npos) return std::nullopt;
  const auto close = text.find('}', at);
  if (close == std::string_view::npos) return std::nullopt;
  std::set<char> out;
  for (char c : text.substr(at + 6, close - at - 6))
    if (c != ',' && c != ' ') out.insert(c);
  return out;
}

// ---------------------------------------------------------------------------
// Simulated agent policy

struct SimParams {
  /// Compliance a rule reaches when a skill teaching it is injected.
  double skill_adherence = 0.9;
  /// Additive per-option accuracy gain from a relevant injected skill.
  double skill_boost = 0.25;
};

inline std::string bench_time(const TaskSpec& t) {
  const int minutes = 9 * 60 + 10 * t.round_index;
  return t.date + "T" + detail::two_digits((minutes / 60) % 24) + ":" + detail::two_digits(minutes % 60) + ":00+08:00";
}

/// Runs the simulated agent on a task. Random draws happen in a fixed order
/// regardless of policy or skills, so conditions sharing a seed share luck.
inline Trajectory simulate_policy(const PolicyState& theta, const TaskSpec& task, const std::vector<Skill>& injected,
                                  std::uint64_t seed, const SimParams& params = {}) {
  Rng rng(seed);
  std::array<double, 5> u_rule{};
  for (double& u : u_rule) u = uniform01(rng);
  const double u_schema = uniform01(rng);
  const double u_variant = uniform01(rng);
  std::array<double, 6> u_option{};
  for (double& u : u_option) u = uniform01(rng);

  std::set<Rule> taught;
  for (const auto& s : injected)
    if (auto r = rule_for_skill(s)) taught.insert(*r);

  Trajectory traj;
  traj.task_id = task.id;
  traj.day_index = task.day_index;
  traj.task_kind = task.kind;
  for (const auto& s : injected) traj.skill_names_used.push_back(s.name);
  std::string user = task.prompt;
  if (!task.context_feedback.empty()) user += "\n\nPrevious round feedback: " + task.context_feedback;
  if (!injected.empty()) user = format_injection(injected) + "\n" + user;
  traj.actions.push_back({"user", user});

  if (task.kind == TaskKind::multi_choice) {
    double p = theta.competence(TaskKind::multi_choice);
    if (task.topic_rule && taught.count(*task.topic_rule)) p += params.skill_boost;
    p = clamp01(p);
    std::set<char> predicted;
    for (int i = 0; i < task.n_options; ++i) {
      const char label = static_cast<char>('A' + i);
      const bool correct = u_option[static_cast<std::size_t>(i)] < p;
      if (task.truth.count(label) == static_cast<std::size_t>(correct)) predicted.insert(label);
    }
    traj.actions.push_back({format_answer(predicted), ""});
    return traj;
  }

  auto complies = [&](Rule r) {
    double c = theta.compliance(r);
    if (taught.count(r)) c = std::max(c, params.skill_adherence);
    return u_rule[static_cast<std::size_t>(r)] < c;
  };
  auto applies = [&](Rule r) {
    return std::find(task.applicable_rules.begin(), task.applicable_rules.end(), r) != task.applicable_rules.end();
  };
  const bool p1 = !applies(Rule::P1) || complies(Rule::P1);
  const bool p2 = !applies(Rule::P2) || complies(Rule::P2);
  const bool p3 = !applies(Rule::P3) || complies(Rule::P3);
  const bool p4 = !applies(Rule::P4) || complies(Rule::P4);
  const bool p5 = !applies(Rule::P5) || complies(Rule::P5);
  const bool schema = u_schema < theta.competence(TaskKind::file_check);

  const auto good_time = bench_time(task);
  std::string bad_time;
  if (u_variant < 1.0 / 3.0)
    bad_time = task.date;
  else if (u_variant < 2.0 / 3.0)
    bad_time = good_time.substr(0, 19) + "Z";
  else
    bad_time = "today at " + good_time.substr(11, 5);
  const auto& stamp = p1 ? good_time : bad_time;

  nlohmann::json doc;
  for (const auto& f : task.required_fields)
    doc[f] = detail::is_datetime_key(f) ? nlohmann::json(stamp) : nlohmann::json("value for " + f);
  if (!schema) {
    auto it = std::find_if(task.required_fields.begin(), task.required_fields.end(),
                           [](const auto& f) { return !detail::is_datetime_key(f); });
    if (it != task.required_fields.end()) doc.erase(*it);
  }
  if (applies(Rule::P3) && p3) {
    doc["created_at"] = stamp;
    doc["author"] = "agent";
    doc["status"] = "final";
  }

  std::string path = task.expected_output_path;
  if (!task.modifies_existing && applies(Rule::P2) && p2) {
    const auto dir = detail::dirname(path);
    path = (dir.empty() ? "" : dir + "/") + detail::compact(task.date) + "_" + detail::basename(path);
  }
  if (task.modifies_existing) {
    traj.actions.push_back({"cat " + path, ""});
    if (applies(Rule::P4) && p4) traj.actions.push_back({"cp " + path + " " + path + ".bak", ""});
  }
  traj.actions.push_back({write_command(path, doc.dump(2)), ""});
  if (applies(Rule::P5)) {
    if (p5)
      traj.actions.push_back({append_command("done.log", "[DONE] " + good_time + " | " + task.id + " | completed"), ""});
    else if (u_variant < 0.5)
      traj.actions.push_back({append_command("done.log", "DONE " + task.id), ""});
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Metrics

struct TaskScore {
  std::string task_id;
  int day_index = 1;
  int round_index = 1;
  TaskKind kind = TaskKind::file_check;
  double value = 0.0;

  friend bool operator==(const TaskScore&, const TaskScore&) = default;
};

struct Metrics {
  double overall_accuracy = 0.0;
  /// Share of file-check tasks scoring 1.0 (0 when there were none).
  double completion_rate = 0.0;
  std::map<int, double> per_day_accuracy;
  std::map<int, double> rolling_3day;
  std::map<int, double> per_day_completion;
};

inline Metrics aggregate(const std::vector<TaskScore>& results) {
  if (results.empty()) throw Error(Errc::empty_results, "no results to aggregate");
  Metrics m;
  double sum = 0.0;
  std::size_t fc = 0, fc_done = 0;
  std::map<int, std::pair<double, std::size_t>> day_acc;
  std::map<int, std::pair<std::size_t, std::size_t>> day_fc;
  for (const auto& r : results) {
    sum += r.value;
    auto& d = day_acc[r.day_index];
    d.first += r.value;
    ++d.second;
    if (r.kind == TaskKind::file_check) {
      ++fc;
      auto& c = day_fc[r.day_index];
      ++c.second;
      if (r.value == 1.0) {
        ++fc_done;
        ++c.first;
      }
    }
  }
  m.overall_accuracy = sum / static_cast<double>(results.size());
  m.completion_rate = fc ? static_cast<double>(fc_done) / static_cast<double>(fc) : 0.0;
  for (auto& [day, acc] : day_acc) m.per_day_accuracy[day] = acc.first / static_cast<double>(acc.second);
  for (auto& [day, c] : day_fc) m.per_day_completion[day] = static_cast<double>(c.first) / static_cast<double>(c.second);
  for (auto& [day, _] : m.per_day_accuracy) {
    double s = 0.0;
    int n = 0;
    for (int d = day - 2; d <= day; ++d)
      if (auto it = m.per_day_accuracy.find(d); it != m.per_day_accuracy.end()) {
        s += it->second;
        ++n;
      }
    m.rolling_3day[day] = s / n;
  }
  return m;
}

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json per_day = nlohmann::json::array(), rolling = nlohmann::json::array(),
                 completion = nlohmann::json::array();
  for (auto& [d, v] : m.per_day_accuracy) per_day.push_back({{"day", d}, {"accuracy", v}});
  for (auto& [d, v] : m.rolling_3day) rolling.push_back({{"day", d}, {"accuracy", v}});
  for (auto& [d, v] : m.per_day_completion) completion.push_back({{"day", d}, {"completion", v}});
  return {{"overall_accuracy", m.overall_accuracy},
          {"completion_rate", m.completion_rate},
          {"per_day", per_day},
          {"rolling_3day", rolling},
          {"per_day_completion", completion}};
}

inline std::string scores_csv(const std::vector<TaskScore>& results) {
  std::ostringstream out;
  out << "task_id,day,round,kind,score\n";
  for (const auto& r : results)
    out << r.task_id << "," << r.day_index << "," << r.round_index << "," << to_string(r.kind) << "," << r.value
        << "\n";
  return out.str();
}

}  // namespace metaclaw
