#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "metaclaw/core/error.hpp"
#include "metaclaw/rules.hpp"
#include "metaclaw/trajectory.hpp"

namespace metaclaw {

/// Simulated policy parameters: per-rule compliance and per-task-type base
/// competence, all probabilities.
struct PolicyState {
  std::array<double, 5> rule_compliance{0.3, 0.3, 0.3, 0.3, 0.3};
  std::array<double, 2> base_competence{0.05, 0.45};  // file_check, multi_choice
  std::uint64_t version = 0;

  double compliance(Rule r) const { return rule_compliance[static_cast<std::size_t>(r)]; }
  double& compliance(Rule r) { return rule_compliance[static_cast<std::size_t>(r)]; }
  double competence(TaskKind k) const { return base_competence[static_cast<std::size_t>(k)]; }
  double& competence(TaskKind k) { return base_competence[static_cast<std::size_t>(k)]; }

  friend bool operator==(const PolicyState&, const PolicyState&) = default;
};

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

inline void validate(const PolicyState& p) {
  for (double v : p.rule_compliance)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::invalid_config, "rule compliance outside [0,1]");
  for (double v : p.base_competence)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::invalid_config, "base competence outside [0,1]");
}

inline nlohmann::json to_json(const PolicyState& p) {
  nlohmann::json rc, bc;
  for (Rule r : kAllRules) rc[std::string(rule_id(r))] = p.compliance(r);
  bc["file_check"] = p.competence(TaskKind::file_check);
  bc["multi_choice"] = p.competence(TaskKind::multi_choice);
  return {{"rule_compliance", rc}, {"base_competence", bc}, {"version", p.version}};
}

/// Missing keys keep their defaults.
inline PolicyState policy_from_json(const nlohmann::json& j, PolicyState base = {}) {
  if (j.contains("rule_compliance"))
    for (auto& [k, v] : j["rule_compliance"].items()) {
      auto r = parse_rule(k);
      if (!r) throw Error(Errc::invalid_config, "unknown rule id '" + k + "'");
      base.compliance(*r) = v.get<double>();
    }
  if (j.contains("base_competence"))
    for (auto& [k, v] : j["base_competence"].items()) base.competence(parse_task_kind(k)) = v.get<double>();
  if (j.contains("version")) base.version = j["version"].get<std::uint64_t>();
  validate(base);
  return base;
}

/// Bit-exact encoding (doubles as IEEE-754 bit patterns) for checkpoints.
inline nlohmann::json to_exact_json(const PolicyState& p) {
  nlohmann::json rc = nlohmann::json::array(), bc = nlohmann::json::array();
  for (double v : p.rule_compliance) rc.push_back(std::bit_cast<std::uint64_t>(v));
  for (double v : p.base_competence) bc.push_back(std::bit_cast<std::uint64_t>(v));
  return {{"rc", rc}, {"bc", bc}, {"version", p.version}};
}

inline PolicyState policy_from_exact_json(const nlohmann::json& j) {
  PolicyState p;
  for (std::size_t i = 0; i < p.rule_compliance.size(); ++i)
    p.rule_compliance[i] = std::bit_cast<double>(j.at("rc").at(i).get<std::uint64_t>());
  for (std::size_t i = 0; i < p.base_competence.size(); ++i)
    p.base_competence[i] = std::bit_cast<double>(j.at("bc").at(i).get<std::uint64_t>());
  p.version = j.at("version").get<std::uint64_t>();
  return p;
}

}  // namespace metaclaw
