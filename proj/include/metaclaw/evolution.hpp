#pragma once

#include <cstdio>
#include <deque>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaclaw/buffer.hpp"
#include "metaclaw/core/error.hpp"
#include "metaclaw/rules.hpp"
#include "metaclaw/skill_store.hpp"
#include "metaclaw/trajectory.hpp"

namespace metaclaw {

inline constexpr std::size_t kDefaultEvolveThreshold = 3;
inline constexpr std::size_t kDefaultMaxNewSkills = 3;
inline constexpr std::size_t kMaxRenderedFailures = 6;

struct EvolutionOutcome {
  std::vector<Skill> new_skills;
  Generation new_generation = 0;
  std::vector<std::string> consumed;
  /// Set when an evolver response could not be used; the step still counts.
  std::optional<std::string> malformed;
};

inline bool should_evolve(std::size_t support_count, std::size_t threshold) {
  if (threshold == 0) throw Error(Errc::invalid_config, "evolution threshold must be at least 1");
  return support_count >= threshold;
}

// ---------------------------------------------------------------------------
// Canonical skills taught by the rule-based evolver, one per preference rule.

inline Skill canonical_skill(Rule r, Generation generation, Timestamp created_at) {
  Skill s;
  s.name = std::string(info(r).skill_name);
  s.created_generation = generation;
  s.created_at = created_at;
  s.category = Category::common_mistakes;
  switch (r) {
    case Rule::P1:
      s.description = "Use when writing any date/time field to a file.";
      s.content =
          "## ISO 8601 Timestamp with Timezone\n\n"
          "Always format timestamps as: YYYY-MM-DDTHH:MM:SS+08:00\n\n"
          "- Correct:   2026-03-16T09:30:00+08:00\n"
          "- Incorrect: 2026-03-16, March 16 at 3pm, 2026-03-16T09:30:00Z\n\n"
          "**Anti-pattern:** Omitting the timezone offset or using natural-language dates.\n";
      break;
    case Rule::P2:
      s.description = "Use when saving a new output file; prefix its name with the workday date.";
      s.content =
          "## Date-Prefixed File Names\n\n"
          "1. Take the workday date as YYYYMMDD.\n"
          "2. Name the file YYYYMMDD_<snake_case_description>.<ext>.\n"
          "3. Keep the description lowercase with underscores.\n\n"
          "Example: 20260408_decision_log.json\n\n"
          "**Anti-pattern:** report_20260408.json or DecisionLog.json.\n";
      s.category = Category::productivity;
      break;
    case Rule::P3:
      s.description = "Use when producing any output file; include the required metadata fields.";
      s.content =
          "## Required Metadata Fields\n\n"
          "Every output document carries these top-level keys:\n"
          "1. created_at (ISO timestamp with offset)\n"
          "2. author\n"
          "3. status\n\n"
          "**Anti-pattern:** Writing only the task payload without metadata.\n";
      s.category = Category::data_analysis;
      break;
    case Rule::P4:
      s.description = "Always create a .bak copy before modifying any existing file.";
      s.content =
          "## Backup Before Modify\n\n"
          "1. Before editing any file, create a backup:\n"
          "   cp <filename> <filename>.bak\n"
          "2. Verify the backup exists before proceeding.\n"
          "3. Apply all modifications to the original file.\n\n"
          "**Anti-pattern:** Overwriting a file without a backup, leaving no recovery path.\n";
      s.category = Category::coding;
      break;
    case Rule::P5:
      s.description = "Use when a task is finished; record it in the completion log.";
      s.content =
          "## Completion Log Entry\n\n"
          "After finishing, append one line to done.log:\n"
          "[DONE] <timestamp> | <task_id> | <summary>\n\n"
          "Example: [DONE] 2026-03-25T17:02:00+08:00 | d10-r03 | wrote incident report\n\n"
          "**Anti-pattern:** Finishing silently or rewriting done.log instead of appending.\n";
      s.category = Category::automation;
      break;
  }
  return s;
}

/// The preference rule a skill teaches, if any: canonical names first, then
/// rule signatures in the skill's name and description.
inline std::optional<Rule> rule_for_skill(const Skill& s) {
  for (const auto& ri : kRuleTable)
    if (ri.skill_name == s.name) return ri.rule;
  auto hits = rules_signalled_by(s.name + " " + s.description);
  if (!hits.empty()) return hits.front();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Evolver prompt

namespace detail {

inline std::string json_string_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += nlohmann::json(items[i]).dump();
  }
  return out + "]";
}

inline std::string format_reward(double r) {
  char buf[32];
  if (r == static_cast<double>(static_cast<long long>(r)))
    std::snprintf(buf, sizeof(buf), "%.1f", r);
  else
    std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

}  // namespace detail

inline std::string render_evolver_prompt(const SkillLibrary& library, const std::vector<FailureRecord>& failures,
                                         std::size_t max_new) {
  if (failures.empty()) throw Error(Errc::empty_failures, "the evolver needs at least one failure");
  std::string p;
  p += "You are a skill engineer for an AI assistant trained with RL.\n";
  p += "Your job: analyze the failed conversations below and generate\n";
  p += "NEW skills that would have prevented those failures.\n\n";
  p += "---\n## Failed Conversations\n";
  const std::size_t shown = std::min(failures.size(), kMaxRenderedFailures);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& f = failures[i];
    p += "\n### Failure " + std::to_string(i + 1) + "  (reward=" + detail::format_reward(f.reward) + ")\n";
    p += "**Conversation context (last 600 chars):**\n```\n" + f.trajectory_excerpt + "\n```\n";
    p += "**Assistant response (first 500 chars):**\n```\n" + f.response_excerpt + "\n```\n";
    if (!f.feedback.empty()) p += "**Feedback:** " + f.feedback + "\n";
  }
  p += "\n---\n## Existing Skills (do NOT duplicate any of these)\n";
  p += detail::json_string_list(library.names()) + "\n\n";
  p += "---\n## Instructions\n\n";
  p += "Generate **1 to " + std::to_string(max_new) + "** new skills that directly\n";
  p += "address the failure patterns observed above. Focus on\n";
  p += "actionable, concrete guidance for future conversations.\n\n";
  p += "Each skill must follow Claude skill format:\n";
  p += "- `name`: a lowercase hyphenated slug\n";
  p += "- `description`: one sentence — when to trigger this skill\n  and what it achieves\n";
  p += "- `content`: 6-15 lines of actionable Markdown. Include:\n";
  p += "  a heading, numbered steps or bullet points, a concrete\n";
  p += "  example or code snippet, and an Anti-pattern section.\n";
  p += "- `category`: one of [coding, research, data_analysis,\n";
  p += "  security, communication, automation, productivity, agentic]\n";
  p += "  or \"general\" or \"common_mistakes\"\n\n";
  p += "**Output:** Return ONLY a valid JSON array.\n\n";
  p += "**Example output:**\n";
  p += "[\n  {\n    \"name\": \"dyn-001\",\n";
  p += "    \"description\": \"Always verify file existence before reading or writing.\",\n";
  p += "    \"content\": \"## Verify File Existence Before Acting\\n\\n1. Check: os.path.exists(path)\\n";
  p += "2. If missing, ask the user for the correct path.\\n**Anti-pattern:** Calling open(path) without checking.\",\n";
  p += "    \"category\": \"coding\"\n  }\n]\n";
  return p;
}

// ---------------------------------------------------------------------------
// Evolvers

/// Deterministic evolver: maps feedback signatures to canonical skills.
inline EvolutionOutcome evolve_rule_based(const SkillLibrary& library, const std::vector<FailureRecord>& failures,
                                          std::size_t max_new, Timestamp now) {
  if (failures.empty()) throw Error(Errc::empty_failures, "the evolver needs at least one failure");
  EvolutionOutcome out;
  out.new_generation = library.generation() + 1;
  std::set<Rule> chosen;
  for (const auto& f : failures) {
    out.consumed.push_back(f.task_id);
    for (Rule r : rules_signalled_by(f.feedback)) {
      if (out.new_skills.size() >= max_new) break;
      if (chosen.count(r) || library.contains(info(r).skill_name)) continue;
      chosen.insert(r);
      out.new_skills.push_back(canonical_skill(r, out.new_generation, now));
    }
  }
  return out;
}

/// Text-in/text-out completion endpoint used by the LLM evolver.
class EvolverClient {
 public:
  virtual ~EvolverClient() = default;
  /// Throws Error(client_error) on transport failure.
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Replays canned completions in order; records the prompts it was given.
class FixtureEvolverClient final : public EvolverClient {
 public:
  explicit FixtureEvolverClient(std::vector<std::string> responses) : responses_(responses.begin(), responses.end()) {}

  /// A JSON file holding an array of response strings.
  static FixtureEvolverClient from_file(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_config, path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw Error(Errc::invalid_config, path.string() + ": expected an array of strings");
    std::vector<std::string> r;
    for (const auto& e : j) r.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    return FixtureEvolverClient(std::move(r));
  }

  std::string complete(const std::string& prompt) override {
    prompts_.push_back(prompt);
    if (responses_.empty()) throw Error(Errc::client_error, "fixture client has no responses left");
    auto r = std::move(responses_.front());
    responses_.pop_front();
    return r;
  }

  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  std::deque<std::string> responses_;
  std::vector<std::string> prompts_;
};

namespace detail {

/// Drops a surrounding ```/```json fence if the model added one.
inline std::string strip_code_fence(std::string s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return s;
  if (s.compare(first, 3, "```") != 0) return s;
  auto nl = s.find('\n', first);
  auto close = s.rfind("```");
  if (nl == std::string::npos || close <= nl) return s;
  return s.substr(nl + 1, close - nl - 1);
}

}  // namespace detail

/// Parses an evolver completion into validated, deduplicated skills.
/// Throws Error(malformed_output) if the shape is wrong.
inline std::vector<Skill> parse_evolver_output(const std::string& completion, const SkillLibrary& library,
                                               std::size_t max_new, Generation generation, Timestamp now) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::strip_code_fence(completion));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_output, std::string("not JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error(Errc::malformed_output, "expected a JSON array");
  for (const auto& e : j) {
    if (!e.is_object()) throw Error(Errc::malformed_output, "array element is not an object");
    for (const char* key : {"name", "description", "content", "category"})
      if (!e.contains(key) || !e[key].is_string())
        throw Error(Errc::malformed_output, std::string("element lacks string field '") + key + "'");
  }
  std::vector<Skill> out;
  std::set<std::string> seen;
  for (const auto& e : j) {
    if (out.size() >= max_new) break;
    auto cat = parse_category(e["category"].get<std::string>());
    if (!cat) continue;
    Skill s;
    s.name = e["name"].get<std::string>();
    s.description = e["description"].get<std::string>();
    s.content = e["content"].get<std::string>();
    s.category = *cat;
    s.created_generation = generation;
    s.created_at = now;
    if (!skill_violation(s).empty() || library.contains(s.name) || seen.count(s.name)) continue;
    seen.insert(s.name);
    out.push_back(std::move(s));
  }
  return out;
}

/// LLM-backed evolver. Transport errors propagate; unusable output yields an
/// outcome with no skills and `malformed` set, and the generation still advances.
inline EvolutionOutcome evolve_llm(EvolverClient& client, const SkillLibrary& library,
                                   const std::vector<FailureRecord>& failures, std::size_t max_new, Timestamp now) {
  const auto prompt = render_evolver_prompt(library, failures, max_new);
  EvolutionOutcome out;
  out.new_generation = library.generation() + 1;
  for (const auto& f : failures) out.consumed.push_back(f.task_id);
  const auto completion = client.complete(prompt);
  try {
    out.new_skills = parse_evolver_output(completion, library, max_new, out.new_generation, now);
  } catch (const Error& e) {
    if (e.code() != Errc::malformed_output) throw;
    out.malformed = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Emitted to the buffer whenever the generation advances.
struct FlushStale {
  Generation generation = 0;
  std::size_t flushed_count = 0;
};

/// Commit an evolution step: extend the library, flush superseded buffer
/// entries, advance the generation and clear the consumed support set.
inline FlushStale apply_outcome(SkillLibrary& library, SupportSet& support, RlBuffer& buffer,
                                const EvolutionOutcome& outcome) {
  const Generation old = library.generation();
  if (outcome.new_generation != old + 1)
    throw Error(Errc::generation_mismatch, "outcome targets generation " + std::to_string(outcome.new_generation) +
                                               " but the library is at " + std::to_string(old));
  SkillLibrary next = add_skills(library, outcome.new_skills);
  next.set_generation(outcome.new_generation);
  FlushStale event{old, buffer.flush_stale(old)};
  library = std::move(next);
  support.reset(outcome.new_generation);
  return event;
}

}  // namespace metaclaw
