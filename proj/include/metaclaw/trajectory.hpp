#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "metaclaw/core/error.hpp"
#include "metaclaw/core/time.hpp"
#include "metaclaw/skill_store.hpp"

namespace metaclaw {

enum class TaskKind { file_check, multi_choice };

inline std::string_view to_string(TaskKind k) { return k == TaskKind::file_check ? "file_check" : "multi_choice"; }

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "file_check") return TaskKind::file_check;
  if (s == "multi_choice") return TaskKind::multi_choice;
  throw Error(Errc::parse_error, "unknown task kind '" + std::string(s) + "'");
}

enum class Role { support, query };

inline std::string_view to_string(Role r) { return r == Role::support ? "support" : "query"; }

inline Role parse_role(std::string_view s) {
  if (s == "support") return Role::support;
  if (s == "query") return Role::query;
  throw Error(Errc::parse_error, "unknown role '" + std::string(s) + "'");
}

struct Step {
  std::string command;
  std::string observation;

  friend bool operator==(const Step&, const Step&) = default;
};

/// One task execution, stamped with the skill generation it ran under.
struct Trajectory {
  std::string task_id;
  Generation generation = 0;
  std::vector<Step> actions;
  double reward = 0.0;
  std::optional<Role> role;
  std::vector<std::string> skill_names_used;
  int day_index = 0;
  Timestamp collected_at{};
  TaskKind task_kind = TaskKind::file_check;
  /// Individual checker outcomes behind `reward` (rule ids, "schema", options).
  std::map<std::string, bool> checks;
  std::string feedback;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Full conversation text: the user turn followed by agent commands and observations.
inline std::string conversation_text(const Trajectory& t) {
  std::string out;
  for (const auto& s : t.actions) {
    out += s.command;
    out += "\n";
    if (!s.observation.empty()) {
      out += s.observation;
      out += "\n";
    }
  }
  return out;
}

/// Agent-authored part of the conversation (every step after the user turn).
inline std::string response_text(const Trajectory& t) {
  std::string out;
  for (std::size_t i = 1; i < t.actions.size(); ++i) {
    out += t.actions[i].command;
    out += "\n";
  }
  return out;
}

inline constexpr std::size_t kTrajectoryExcerptChars = 600;
inline constexpr std::size_t kResponseExcerptChars = 500;

/// A support-set element: what the skill evolver gets to see of a failure.
struct FailureRecord {
  std::string task_id;
  Generation generation = 0;
  std::string feedback;
  std::string trajectory_excerpt;
  std::string response_excerpt;
  double reward = 0.0;

  static FailureRecord from(const Trajectory& t) {
    FailureRecord r;
    r.task_id = t.task_id;
    r.generation = t.generation;
    r.feedback = t.feedback;
    const auto conv = conversation_text(t);
    r.trajectory_excerpt =
        conv.size() > kTrajectoryExcerptChars ? conv.substr(conv.size() - kTrajectoryExcerptChars) : conv;
    r.response_excerpt = response_text(t).substr(0, kResponseExcerptChars);
    r.reward = t.reward;
    return r;
  }

  friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

/// Rewards strictly below the threshold count as failures.
struct SuccessThresholds {
  double file_check = 1.0;
  double multi_choice = 0.5;

  double for_kind(TaskKind k) const { return k == TaskKind::file_check ? file_check : multi_choice; }
  bool is_failure(TaskKind k, double reward) const { return reward < for_kind(k); }
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Trajectory& t) {
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& s : t.actions) actions.push_back({{"command", s.command}, {"observation", s.observation}});
  nlohmann::json j;
  j["task_id"] = t.task_id;
  j["generation"] = t.generation;
  j["actions"] = std::move(actions);
  j["reward"] = t.reward;
  j["role"] = t.role ? nlohmann::json(std::string(to_string(*t.role))) : nlohmann::json(nullptr);
  j["skill_names_used"] = t.skill_names_used;
  j["day_index"] = t.day_index;
  j["collected_at"] = format_rfc3339(t.collected_at);
  j["task_kind"] = std::string(to_string(t.task_kind));
  j["checks"] = t.checks;
  j["feedback"] = t.feedback;
  return j;
}

/// Throws nlohmann::json exceptions or Error(parse_error) on bad input.
inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.task_id = j.at("task_id").get<std::string>();
  t.generation = j.at("generation").get<Generation>();
  for (const auto& a : j.at("actions"))
    t.actions.push_back({a.at("command").get<std::string>(), a.at("observation").get<std::string>()});
  t.reward = j.at("reward").get<double>();
  if (!j.at("role").is_null()) t.role = parse_role(j.at("role").get<std::string>());
  t.skill_names_used = j.at("skill_names_used").get<std::vector<std::string>>();
  t.day_index = j.at("day_index").get<int>();
  t.collected_at = parse_rfc3339(j.at("collected_at").get<std::string>());
  t.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
  t.checks = j.at("checks").get<std::map<std::string, bool>>();
  t.feedback = j.at("feedback").get<std::string>();
  if (t.reward < 0.0 || t.reward > 1.0) throw Error(Errc::parse_error, "reward outside [0,1]");
  return t;
}

}  // namespace metaclaw
