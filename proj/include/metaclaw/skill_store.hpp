#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "metaclaw/core/error.hpp"
#include "metaclaw/core/rng.hpp"
#include "metaclaw/core/time.hpp"

namespace metaclaw {

using Generation = std::uint64_t;

enum class Category {
  coding,
  research,
  data_analysis,
  security,
  communication,
  automation,
  productivity,
  agentic,
  general,
  common_mistakes,
};

inline constexpr std::array<std::string_view, 10> kCategoryNames{
    "coding",    "research", "data_analysis", "security", "communication",
    "automation", "productivity", "agentic",   "general",  "common_mistakes"};

inline std::string_view to_string(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

inline std::optional<Category> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
    if (kCategoryNames[i] == s) return static_cast<Category>(i);
  return std::nullopt;
}

/// A natural-language behavioral instruction injected into the agent prompt.
struct Skill {
  std::string name;
  std::string description;
  std::string content;
  Category category = Category::general;
  Generation created_generation = 0;
  Timestamp created_at{};

  friend bool operator==(const Skill&, const Skill&) = default;
};

/// Lowercase-hyphenated slug: `[a-z0-9]+(-[a-z0-9]+)*`.
inline bool is_valid_slug(std::string_view name) {
  if (name.empty() || name.front() == '-' || name.back() == '-') return false;
  char prev = 0;
  for (char c : name) {
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (!alnum && c != '-') return false;
    if (c == '-' && prev == '-') return false;
    prev = c;
  }
  return true;
}

/// Empty string when valid, otherwise the first violated invariant.
inline std::string skill_violation(const Skill& s) {
  if (!is_valid_slug(s.name)) return "name '" + s.name + "' is not a lowercase hyphenated slug";
  if (s.description.empty()) return "skill '" + s.name + "' has an empty description";
  if (s.description.find('\n') != std::string::npos)
    return "skill '" + s.name + "' description spans several lines";
  if (s.content.empty()) return "skill '" + s.name + "' has no content";
  return {};
}

inline void validate(const Skill& s) {
  if (auto why = skill_violation(s); !why.empty()) throw Error(Errc::invalid_skill, why);
}

/// The skill library S: skills in insertion order plus the generation index.
class SkillLibrary {
 public:
  SkillLibrary() = default;
  explicit SkillLibrary(Generation generation) : generation_(generation) {}

  const std::vector<Skill>& skills() const { return skills_; }
  Generation generation() const { return generation_; }
  std::size_t size() const { return skills_.size(); }
  bool empty() const { return skills_.empty(); }

  const Skill* find(std::string_view name) const {
    auto it = std::find_if(skills_.begin(), skills_.end(), [&](const Skill& s) { return s.name == name; });
    return it == skills_.end() ? nullptr : &*it;
  }
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(skills_.size());
    for (const auto& s : skills_) out.push_back(s.name);
    return out;
  }

  void set_generation(Generation g) {
    if (g < generation_)
      throw Error(Errc::generation_mismatch,
                  "generation may not decrease (" + std::to_string(generation_) + " -> " + std::to_string(g) + ")");
    generation_ = g;
  }

  /// Appends unless the name is taken; returns whether the skill was added.
  bool insert(Skill s) {
    validate(s);
    if (contains(s.name)) return false;
    skills_.push_back(std::move(s));
    return true;
  }

  friend bool operator==(const SkillLibrary&, const SkillLibrary&) = default;

 private:
  std::vector<Skill> skills_;
  Generation generation_ = 0;
};

/// Union of the library with new skills. Existing names win; the generation
/// is left alone (advancing it is the evolution step's job).
inline SkillLibrary add_skills(const SkillLibrary& library, const std::vector<Skill>& fresh) {
  for (const auto& s : fresh) validate(s);
  SkillLibrary out = library;
  for (const auto& s : fresh) out.insert(s);
  return out;
}

// ---------------------------------------------------------------------------
// Embedding and retrieval

struct SkillEmbedding {
  std::vector<double> vector;
  double norm = 0.0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual SkillEmbedding embed(std::string_view text) const = 0;
};

/// Lowercased alphanumeric runs.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Feature-hashing bag of tokens: FNV-1a bucket counts, L2-normalized.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256) : dim_(dimension) {}

  std::size_t dimension() const override { return dim_; }

  std::size_t bucket(std::string_view token) const { return static_cast<std::size_t>(fnv1a64(token) % dim_); }

  SkillEmbedding embed(std::string_view text) const override {
    SkillEmbedding e;
    e.vector.assign(dim_, 0.0);
    for (const auto& tok : tokenize(text)) e.vector[bucket(tok)] += 1.0;
    double sq = 0.0;
    for (double v : e.vector) sq += v * v;
    const double n = std::sqrt(sq);
    if (n > 0.0)
      for (double& v : e.vector) v /= n;
    sq = 0.0;
    for (double v : e.vector) sq += v * v;
    e.norm = std::sqrt(sq);
    return e;
  }

 private:
  std::size_t dim_;
};

inline const HashingEmbedder& default_embedder() {
  static const HashingEmbedder instance{};
  return instance;
}

/// Cosine similarity; zero when either side has zero norm.
inline double cosine(const SkillEmbedding& a, const SkillEmbedding& b) {
  if (a.norm == 0.0 || b.norm == 0.0 || a.vector.size() != b.vector.size()) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.vector.size(); ++i) dot += a.vector[i] * b.vector[i];
  return dot / (a.norm * b.norm);
}

/// Text a skill is embedded from.
inline std::string retrieval_text(const Skill& s) { return s.name + "\n" + s.description + "\n" + s.content; }

inline constexpr std::size_t kDefaultRetrievalK = 5;

/// Top-k skills by cosine similarity to the task text. Ties go to the
/// earlier created_at, then the lexicographically smaller name.
inline std::vector<Skill> retrieve(const SkillLibrary& library, std::string_view task_text, std::size_t k,
                                   const Embedder& embedder = default_embedder()) {
  if (k == 0) throw Error(Errc::invalid_config, "retrieval k must be at least 1");
  const auto query = embedder.embed(task_text);
  struct Scored {
    double sim;
    const Skill* skill;
  };
  std::vector<Scored> scored;
  scored.reserve(library.size());
  for (const auto& s : library.skills()) scored.push_back({cosine(query, embedder.embed(retrieval_text(s))), &s});
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (a.skill->created_at != b.skill->created_at) return a.skill->created_at < b.skill->created_at;
    return a.skill->name < b.skill->name;
  });
  std::vector<Skill> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(*scored[i].skill);
  return out;
}

/// The "## Active Skills" block appended to the agent system prompt.
inline std::string format_injection(const std::vector<Skill>& skills) {
  if (skills.empty()) return {};
  std::string out = "## Active Skills\n";
  for (std::size_t i = 0; i < skills.size(); ++i) {
    const auto& s = skills[i];
    if (i > 0) out += "\n";
    out += "### " + s.name + "\n";
    out += "_" + s.description + "_\n\n";
    out += s.content;
    if (s.content.empty() || s.content.back() != '\n') out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/index.json and <dir>/skills/<name>.md

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::io_error, "short write to " + p.string());
}

}  // namespace detail

inline std::string render_skill_file(const Skill& s) {
  std::string out;
  out += "name: " + s.name + "\n";
  out += "description: " + s.description + "\n";
  out += "category: " + std::string(to_string(s.category)) + "\n";
  out += "created_generation: " + std::to_string(s.created_generation) + "\n";
  out += "created_at: " + format_rfc3339(s.created_at) + "\n";
  out += "---\n";
  out += s.content;
  return out;
}

inline Skill parse_skill_file(std::string_view text, const std::string& origin) {
  auto corrupt = [&](const std::string& why) { return Error(Errc::corrupt_library, origin + ": " + why); };
  Skill s;
  bool have[5] = {};
  std::size_t pos = 0;
  bool terminated = false;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) break;
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line == "---") {
      terminated = true;
      break;
    }
    const auto colon = line.find(": ");
    if (colon == std::string_view::npos) throw corrupt("malformed header line '" + std::string(line) + "'");
    const auto key = line.substr(0, colon);
    const std::string value(line.substr(colon + 2));
    if (key == "name") {
      s.name = value;
      have[0] = true;
    } else if (key == "description") {
      s.description = value;
      have[1] = true;
    } else if (key == "category") {
      auto c = parse_category(value);
      if (!c) throw corrupt("unknown category '" + value + "'");
      s.category = *c;
      have[2] = true;
    } else if (key == "created_generation") {
      if (!detail::all_digits(value)) throw corrupt("bad created_generation");
      s.created_generation = std::stoull(value);
      have[3] = true;
    } else if (key == "created_at") {
      try {
        s.created_at = parse_rfc3339(value);
      } catch (const Error&) {
        throw corrupt("bad created_at");
      }
      have[4] = true;
    } else {
      throw corrupt("unknown header key '" + std::string(key) + "'");
    }
  }
  if (!terminated) throw corrupt("header not terminated by ---");
  for (bool h : have)
    if (!h) throw corrupt("missing header key");
  s.content = std::string(text.substr(pos));
  if (auto why = skill_violation(s); !why.empty()) throw corrupt(why);
  return s;
}

inline void save(const SkillLibrary& library, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "skills", ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + (dir / "skills").string() + ": " + ec.message());
  for (const auto& s : library.skills()) detail::write_file(dir / "skills" / (s.name + ".md"), render_skill_file(s));
  nlohmann::json index{{"generation", library.generation()}, {"names", library.names()}};
  detail::write_file(dir / "index.json", index.dump(2) + "\n");
}

inline SkillLibrary load(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(Errc::io_error, dir.string() + " is not a directory");
  const auto index_path = dir / "index.json";
  if (!fs::exists(index_path)) throw Error(Errc::corrupt_library, "missing " + index_path.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(detail::read_file(index_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corrupt_library, index_path.string() + ": " + e.what());
  }
  if (!index.is_object() || !index.contains("generation") || !index["generation"].is_number_unsigned() ||
      !index.contains("names") || !index["names"].is_array())
    throw Error(Errc::corrupt_library, index_path.string() + ": expected {generation, names}");
  SkillLibrary library(index["generation"].get<Generation>());
  for (const auto& n : index["names"]) {
    if (!n.is_string()) throw Error(Errc::corrupt_library, "non-string skill name in index");
    const auto name = n.get<std::string>();
    const auto file = dir / "skills" / (name + ".md");
    if (!fs::exists(file)) throw Error(Errc::corrupt_library, "index lists '" + name + "' but " + file.string() + " is missing");
    auto skill = parse_skill_file(detail::read_file(file), file.string());
    if (skill.name != name) throw Error(Errc::corrupt_library, file.string() + " declares name '" + skill.name + "'");
    if (!library.insert(std::move(skill))) throw Error(Errc::corrupt_library, "duplicate skill '" + name + "' in index");
  }
  return library;
}

/// Library shared between the orchestrator (writer) and concurrent readers.
class SharedSkillLibrary {
 public:
  SharedSkillLibrary() = default;
  explicit SharedSkillLibrary(SkillLibrary lib) : lib_(std::move(lib)) {}

  SkillLibrary snapshot() const {
    std::shared_lock lock(mu_);
    return lib_;
  }

  template <class Fn>
  auto read(Fn&& fn) const {
    std::shared_lock lock(mu_);
    return std::forward<Fn>(fn)(static_cast<const SkillLibrary&>(lib_));
  }

  template <class Fn>
  auto write(Fn&& fn) {
    std::unique_lock lock(mu_);
    return std::forward<Fn>(fn)(lib_);
  }

 private:
  mutable std::shared_mutex mu_;
  SkillLibrary lib_;
};

}  // namespace metaclaw
