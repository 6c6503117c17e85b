#pragma once

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaclaw/core/error.hpp"
#include "metaclaw/core/rng.hpp"
#include "metaclaw/trajectory.hpp"

namespace metaclaw {

enum class FlushMode {
  /// Drop every sample stamped with a generation <= the superseded one.
  algorithm1,
  /// Keep everything; only the watermark of superseded generations moves.
  retain_multi_generation,
};

inline std::string_view to_string(FlushMode m) {
  return m == FlushMode::algorithm1 ? "algorithm1" : "retain_multi_generation";
}

inline FlushMode parse_flush_mode(std::string_view s) {
  if (s == "algorithm1") return FlushMode::algorithm1;
  if (s == "retain_multi_generation") return FlushMode::retain_multi_generation;
  throw Error(Errc::invalid_config, "unknown flush mode '" + std::string(s) + "'");
}

/// D^sup_g: failures collected under the current generation.
class SupportSet {
 public:
  explicit SupportSet(Generation generation = 0) : generation_(generation) {}

  Generation generation() const { return generation_; }
  const std::vector<FailureRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  void add(FailureRecord r) {
    if (r.generation != generation_)
      throw Error(Errc::generation_mismatch, "support record from generation " + std::to_string(r.generation) +
                                                 " but support set is at " + std::to_string(generation_));
    records_.push_back(std::move(r));
  }

  /// Consumed by evolution: empties the set and moves it to the next generation.
  void reset(Generation next) {
    records_.clear();
    generation_ = next;
  }

 private:
  Generation generation_;
  std::vector<FailureRecord> records_;
};

/// The RL buffer B of query trajectories. One writer and one reader may use
/// it concurrently; every member call is atomic with respect to the others.
class RlBuffer {
 public:
  explicit RlBuffer(FlushMode mode = FlushMode::algorithm1, std::optional<std::size_t> capacity = std::nullopt)
      : mode_(mode), capacity_(capacity) {
    if (capacity_ && *capacity_ == 0) throw Error(Errc::invalid_config, "buffer capacity must be positive");
  }

  RlBuffer(const RlBuffer& other) {
    std::lock_guard lock(other.mu_);
    mode_ = other.mode_;
    capacity_ = other.capacity_;
    entries_ = other.entries_;
    seq_ = other.seq_;
    appended_ = other.appended_;
    flushed_through_ = other.flushed_through_;
  }
  RlBuffer& operator=(const RlBuffer& other) {
    if (this != &other) {
      RlBuffer tmp(other);
      std::scoped_lock lock(mu_);
      mode_ = tmp.mode_;
      capacity_ = tmp.capacity_;
      entries_ = std::move(tmp.entries_);
      seq_ = std::move(tmp.seq_);
      appended_ = tmp.appended_;
      flushed_through_ = tmp.flushed_through_;
    }
    return *this;
  }

  FlushMode mode() const { return mode_; }
  std::optional<std::size_t> capacity() const { return capacity_; }

  void append(Trajectory t) {
    if (t.role != Role::query) throw Error(Errc::role_violation, "only query trajectories enter the RL buffer");
    std::lock_guard lock(mu_);
    if (capacity_ && entries_.size() == *capacity_) {
      entries_.pop_front();
      seq_.pop_front();
    }
    entries_.push_back(std::move(t));
    seq_.push_back(++appended_);
  }

  /// Supersede generation g. Returns how many entries were removed.
  std::size_t flush_stale(Generation g) {
    std::lock_guard lock(mu_);
    if (!flushed_through_ || *flushed_through_ < g) flushed_through_ = g;
    if (mode_ == FlushMode::retain_multi_generation) return 0;
    std::size_t removed = 0;
    std::deque<Trajectory> kept;
    std::deque<std::uint64_t> kept_seq;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].generation <= g) {
        ++removed;
      } else {
        kept.push_back(std::move(entries_[i]));
        kept_seq.push_back(seq_[i]);
      }
    }
    entries_ = std::move(kept);
    seq_ = std::move(kept_seq);
    return removed;
  }

  /// Highest generation passed to flush_stale so far.
  std::optional<Generation> flushed_through() const {
    std::lock_guard lock(mu_);
    return flushed_through_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  bool empty() const { return size() == 0; }

  bool is_train_ready(std::size_t batch_size) const {
    if (batch_size == 0) throw Error(Errc::invalid_config, "batch size must be at least 1");
    return size() >= batch_size;
  }

  std::optional<Generation> min_generation() const {
    std::lock_guard lock(mu_);
    std::optional<Generation> m;
    for (const auto& e : entries_)
      if (!m || e.generation < *m) m = e.generation;
    return m;
  }

  /// Sequence number of the most recent append (0 when nothing was ever added).
  std::uint64_t last_sequence() const {
    std::lock_guard lock(mu_);
    return appended_;
  }

  /// Entries appended after sequence number `seq` that are still present.
  std::size_t count_after(std::uint64_t seq) const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(seq_.begin(), seq_.end(), [&](auto s) { return s > seq; }));
  }

  std::vector<Trajectory> snapshot() const {
    std::lock_guard lock(mu_);
    return {entries_.begin(), entries_.end()};
  }

  /// Uniform sample of n distinct entries; the buffer is left untouched.
  std::vector<Trajectory> sample_batch(std::size_t n, std::uint64_t seed) const {
    std::lock_guard lock(mu_);
    return sample_from(entries_, n, seed);
  }

  template <class Container>
  static std::vector<Trajectory> sample_from(const Container& pool, std::size_t n, std::uint64_t seed) {
    if (n > pool.size())
      throw Error(Errc::insufficient_data,
                  "requested " + std::to_string(n) + " samples from " + std::to_string(pool.size()) + " entries");
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    // Partial Fisher-Yates: the first n slots end up a uniform n-subset.
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<Trajectory> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[idx[i]]);
    return out;
  }

  /// Replace the contents wholesale (snapshot restore).
  void restore(std::vector<Trajectory> entries) {
    for (const auto& e : entries)
      if (e.role != Role::query) throw Error(Errc::role_violation, "snapshot holds a non-query trajectory");
    std::lock_guard lock(mu_);
    entries_.assign(std::make_move_iterator(entries.begin()), std::make_move_iterator(entries.end()));
    seq_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) seq_.push_back(++appended_);
  }

 private:
  mutable std::mutex mu_;
  FlushMode mode_ = FlushMode::algorithm1;
  std::optional<std::size_t> capacity_;
  std::deque<Trajectory> entries_;
  std::deque<std::uint64_t> seq_;
  std::uint64_t appended_ = 0;
  std::optional<Generation> flushed_through_;
};

enum class Routing { to_support, to_query };

inline std::string_view to_string(Routing r) { return r == Routing::to_support ? "to_support" : "to_query"; }

/// Route a freshly scored trajectory: failures feed the support set, the
/// rest become query data. Assigns the trajectory's role.
inline Routing record(RlBuffer& buffer, SupportSet& support, Trajectory t, Generation current,
                      const SuccessThresholds& thresholds = {}) {
  if (t.generation != current)
    throw Error(Errc::generation_mismatch, "trajectory " + t.task_id + " stamped with generation " +
                                               std::to_string(t.generation) + ", current is " +
                                               std::to_string(current));
  if (t.role) throw Error(Errc::role_violation, "trajectory " + t.task_id + " already has a role");
  if (thresholds.is_failure(t.task_kind, t.reward)) {
    t.role = Role::support;
    support.add(FailureRecord::from(t));
    return Routing::to_support;
  }
  t.role = Role::query;
  buffer.append(std::move(t));
  return Routing::to_query;
}

// ---------------------------------------------------------------------------
// Snapshots: JSON-lines, one trajectory per line.

inline void save_snapshot(const RlBuffer& buffer, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  for (const auto& t : buffer.snapshot()) out << to_json(t).dump() << "\n";
  if (!out) throw Error(Errc::io_error, "short write to " + path.string());
}

inline std::vector<Trajectory> read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (!text.empty() && text.back() != '\n') throw Error(Errc::corrupt_snapshot, path.string() + " is truncated");
  std::vector<Trajectory> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      auto t = trajectory_from_json(nlohmann::json::parse(line));
      if (t.role != Role::query) throw Error(Errc::corrupt_snapshot, "non-query entry");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::corrupt_snapshot, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::corrupt_snapshot, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline RlBuffer load_snapshot(const std::filesystem::path& path, FlushMode mode = FlushMode::algorithm1,
                              std::optional<std::size_t> capacity = std::nullopt) {
  RlBuffer b(mode, capacity);
  b.restore(read_snapshot(path));
  return b;
}

}  // namespace metaclaw
