#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "metaclaw/metaclaw.hpp"

namespace mc = metaclaw;

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("metaclaw-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline mc::Timestamp ts(const char* rfc3339) { return mc::parse_rfc3339(rfc3339); }

inline mc::Skill make_skill(std::string name, std::string description = "Use when testing.",
                            std::string content = "Do the thing.\n", mc::Generation gen = 0,
                            mc::Timestamp at = mc::parse_rfc3339("2026-03-16T00:00:00Z")) {
  mc::Skill s;
  s.name = std::move(name);
  s.description = std::move(description);
  s.content = std::move(content);
  s.category = mc::Category::general;
  s.created_generation = gen;
  s.created_at = at;
  return s;
}

inline mc::Trajectory make_traj(std::string id, mc::Generation gen, double reward,
                                mc::TaskKind kind = mc::TaskKind::file_check) {
  mc::Trajectory t;
  t.task_id = std::move(id);
  t.generation = gen;
  t.reward = reward;
  t.task_kind = kind;
  t.day_index = 1;
  t.collected_at = mc::parse_rfc3339("2026-03-16T01:00:00Z");
  t.actions = {{"user", "do it"}, {"echo done", "done"}};
  t.feedback = reward < 1.0 ? "Time/date fields must use ISO 8601 with +08:00 timezone." : "";
  return t;
}

inline mc::Trajectory query_traj(std::string id, mc::Generation gen, double reward,
                                 std::map<std::string, bool> checks = {}) {
  auto t = make_traj(std::move(id), gen, reward, mc::TaskKind::multi_choice);
  t.role = mc::Role::query;
  t.checks = std::move(checks);
  return t;
}
