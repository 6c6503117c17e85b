#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metaclaw {

/// The five implicit workspace preference rules of the benchmark.
enum class Rule { P1 = 0, P2, P3, P4, P5 };

inline constexpr std::array<Rule, 5> kAllRules{Rule::P1, Rule::P2, Rule::P3, Rule::P4, Rule::P5};

struct RuleInfo {
  Rule rule;
  std::string_view id;
  std::string_view category;
  int active_from_day;
  /// Checker feedback shown when the rule is violated.
  std::string_view feedback;
  /// Feedback substrings the rule-based evolver keys on (matched case-insensitively).
  std::array<std::string_view, 2> signatures;
  /// Name of the canonical skill that teaches the rule.
  std::string_view skill_name;
};

// Table order is also the evolver's category scan order.
inline constexpr std::array<RuleInfo, 5> kRuleTable{{
    {Rule::P1, "P1", "timestamp", 1,
     "Time/date fields must use ISO 8601 with +08:00 timezone: YYYY-MM-DDTHH:MM:SS+08:00.",
     {"ISO 8601", "timezone"}, "iso8601-timezone-format"},
    {Rule::P2, "P2", "file naming", 4,
     "Output files must follow the naming convention YYYYMMDD_description.ext (snake_case).",
     {"YYYYMMDD", "naming"}, "naming-convention-dateprefix"},
    {Rule::P3, "P3", "metadata", 6,
     "Every output file must carry the metadata fields created_at, author and status.",
     {"created_at", "metadata"}, "required-metadata-fields"},
    {Rule::P4, "P4", "backup", 8,
     "Create <file>.bak before modifying any existing file.",
     {".bak", "backup"}, "backup-before-modify"},
    {Rule::P5, "P5", "completion log", 10,
     "Append a [DONE] <timestamp> | <task_id> | <summary> line to done.log when a task is finished.",
     {"done.log", "[DONE]"}, "completion-log-append"},
}};

inline const RuleInfo& info(Rule r) { return kRuleTable[static_cast<std::size_t>(r)]; }

inline std::string_view rule_id(Rule r) { return info(r).id; }

inline std::optional<Rule> parse_rule(std::string_view id) {
  for (const auto& ri : kRuleTable)
    if (ri.id == id) return ri.rule;
  return std::nullopt;
}

/// Rules in force on a (1-based) workday, in table order.
inline std::vector<Rule> active_rules(int day) {
  std::vector<Rule> out;
  for (const auto& ri : kRuleTable)
    if (day >= ri.active_from_day) out.push_back(ri.rule);
  return out;
}

inline bool contains_icase(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  });
  return it != haystack.end();
}

/// Rules whose signatures occur in `text`, in table order.
inline std::vector<Rule> rules_signalled_by(std::string_view text) {
  std::vector<Rule> out;
  for (const auto& ri : kRuleTable)
    for (auto sig : ri.signatures)
      if (contains_icase(text, sig)) {
        out.push_back(ri.rule);
        break;
      }
  return out;
}

}  // namespace metaclaw
