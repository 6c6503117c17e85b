#pragma once

#include <atomic>
#include <bitset>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "metaclaw/buffer.hpp"
#include "metaclaw/core/error.hpp"
#include "metaclaw/core/rng.hpp"
#include "metaclaw/policy.hpp"
#include "metaclaw/rules.hpp"
#include "metaclaw/scheduler.hpp"
#include "metaclaw/simbench.hpp"
#include "metaclaw/trajectory.hpp"

namespace metaclaw {

// ---------------------------------------------------------------------------
// Reward

struct RewardScore {
  double value = 0.0;
  /// Checker id -> pass. Rule ids and "schema" for file checks; "opt:X" per
  /// option plus the topic rule id for multi-choice.
  std::map<std::string, bool> components;
  std::string feedback;
};

class TaskRegistry {
 public:
  TaskRegistry() = default;
  explicit TaskRegistry(const std::vector<TaskSpec>& tasks) {
    for (const auto& t : tasks) add(t);
  }

  void add(TaskSpec t) {
    auto id = t.id;
    tasks_.insert_or_assign(std::move(id), std::move(t));
  }

  const TaskSpec& at(const std::string& id) const {
    auto it = tasks_.find(id);
    if (it == tasks_.end()) throw Error(Errc::unknown_task, "unknown task '" + id + "'");
    return it->second;
  }

  bool contains(const std::string& id) const { return tasks_.count(id) > 0; }
  std::size_t size() const { return tasks_.size(); }

 private:
  std::unordered_map<std::string, TaskSpec> tasks_;
};

inline RewardScore score(const Trajectory& traj, const TaskSpec& task) {
  RewardScore s;
  if (task.kind == TaskKind::file_check) {
    auto ws = initial_workspace(task);
    for (std::size_t i = 1; i < traj.actions.size(); ++i) ws.apply(traj.actions[i]);
    auto check = check_file(task, ws);
    s.value = check.passed ? 1.0 : 0.0;
    s.components = std::move(check.per_rule);
    s.feedback = std::move(check.feedback);
    return s;
  }
  std::set<char> predicted;
  for (std::size_t i = traj.actions.size(); i-- > 1;)
    if (auto a = parse_answer(traj.actions[i].command)) {
      predicted = *a;
      break;
    }
  s.value = score_multichoice(task.truth, predicted, task.n_options);
  for (int i = 0; i < task.n_options; ++i) {
    const char label = static_cast<char>('A' + i);
    s.components["opt:" + std::string(1, label)] = task.truth.count(label) == predicted.count(label);
  }
  const bool exact = predicted == task.truth;
  if (task.topic_rule) s.components[std::string(rule_id(*task.topic_rule))] = exact;
  if (!exact) s.feedback = task.feedback_on_fail;
  return s;
}

inline RewardScore score(const Trajectory& traj, const TaskRegistry& registry) {
  return score(traj, registry.at(traj.task_id));
}

// ---------------------------------------------------------------------------
// Surrogate update

/// Running summary of the trajectories seen so far in a batch. Applying it
/// once at the batch boundary makes stepwise and one-shot updates identical.
struct UpdateAccumulator {
  std::bitset<5> violated;
  double reward_sum = 0.0;
  std::size_t count = 0;

  void add(const Trajectory& t) {
    if (t.role != Role::query)
      throw Error(Errc::role_violation, "trajectory " + t.task_id + " is not query data");
    for (const auto& [check, ok] : t.checks)
      if (!ok)
        if (auto r = parse_rule(check)) violated.set(static_cast<std::size_t>(*r));
    reward_sum += t.reward;
    ++count;
  }

  friend bool operator==(const UpdateAccumulator&, const UpdateAccumulator&) = default;
};

inline void check_learning_rate(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::invalid_config, "learning rate must lie in [0,1]");
}

inline PolicyState apply_update(PolicyState theta, const UpdateAccumulator& acc, double alpha) {
  check_learning_rate(alpha);
  if (acc.count == 0) throw Error(Errc::empty_batch, "no trajectories in batch");
  for (Rule r : kAllRules)
    if (acc.violated.test(static_cast<std::size_t>(r))) {
      auto& c = theta.compliance(r);
      c = clamp01(c + alpha * (1.0 - c));
    }
  const double mean_reward = acc.reward_sum / static_cast<double>(acc.count);
  for (auto& bc : theta.base_competence) bc = clamp01(bc + alpha * mean_reward * (1.0 - bc));
  return theta;
}

inline PolicyState sim_update(const PolicyState& theta, const std::vector<Trajectory>& batch, double alpha) {
  if (batch.empty()) throw Error(Errc::empty_batch, "no trajectories in batch");
  UpdateAccumulator acc;
  for (const auto& t : batch) acc.add(t);
  return apply_update(theta, acc, alpha);
}

// ---------------------------------------------------------------------------
// Training runs

struct TrainConfig {
  std::size_t batches_total = 4;
  std::size_t batch_size = 8;
  double alpha = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (batches_total == 0) throw Error(Errc::invalid_config, "batches per run must be at least 1");
    if (batch_size == 0) throw Error(Errc::invalid_config, "batch size must be at least 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::invalid_config, "learning rate must lie in (0,1]");
  }
};

struct BatchSummary {
  std::size_t batch_index = 0;
  double mean_reward = 0.0;
  std::vector<std::string> updated_rules;
  Generation generation = 0;
};

inline nlohmann::json to_json(const BatchSummary& b) {
  return {{"batch_index", b.batch_index},
          {"mean_reward", b.mean_reward},
          {"updated_rules", b.updated_rules},
          {"generation", b.generation}};
}

/// One training run over a snapshot of query data. Each step consumes one
/// trajectory; a batch's update lands on its last step.
class TrainRun {
 public:
  TrainRun(TrainConfig cfg, std::vector<Trajectory> pool, PolicyState theta, Generation source_generation,
           std::uint64_t id = 0)
      : cfg_(cfg), pool_(std::move(pool)), theta_(theta), source_generation_(source_generation), id_(id) {
    cfg_.validate();
    for (const auto& t : pool_)
      if (t.role != Role::query) throw Error(Errc::role_violation, "training pool holds non-query data");
    if (pool_.size() < cfg_.batch_size)
      throw Error(Errc::insufficient_data, "pool of " + std::to_string(pool_.size()) + " is smaller than a batch");
  }

  const TrainConfig& config() const { return cfg_; }
  std::uint64_t id() const { return id_; }
  Generation source_generation() const { return source_generation_; }
  std::size_t batches_total() const { return cfg_.batches_total; }
  std::size_t batches_done() const { return batch_index_; }
  std::size_t step_within_batch() const { return step_; }
  std::size_t total_steps() const { return cfg_.batches_total * cfg_.batch_size; }
  std::size_t steps_done() const { return batch_index_ * cfg_.batch_size + step_; }
  bool done() const { return batch_index_ >= cfg_.batches_total; }
  const PolicyState& theta() const { return theta_; }
  const std::vector<Trajectory>& pool() const { return pool_; }

  /// Advances one step. Returns the batch summary when this step closed a batch.
  std::optional<BatchSummary> step() {
    if (done()) throw Error(Errc::invalid_config, "training run already finished");
    if (step_ == 0) batch_ = RlBuffer::sample_from(pool_, cfg_.batch_size, batch_seed(batch_index_));
    acc_.add(batch_[step_]);
    ++step_;
    if (step_ < cfg_.batch_size) return std::nullopt;
    BatchSummary summary;
    summary.batch_index = batch_index_;
    summary.mean_reward = acc_.reward_sum / static_cast<double>(acc_.count);
    summary.generation = source_generation_;
    for (Rule r : kAllRules)
      if (acc_.violated.test(static_cast<std::size_t>(r)) && theta_.compliance(r) < 1.0)
        summary.updated_rules.emplace_back(rule_id(r));
    theta_ = apply_update(theta_, acc_, cfg_.alpha);
    acc_ = {};
    batch_.clear();
    step_ = 0;
    ++batch_index_;
    return summary;
  }

  /// Captures the state at the current step boundary.
  TrainerCheckpoint checkpoint() const {
    TrainerCheckpoint cp;
    cp.batch_index = batch_index_;
    cp.step_within_batch = step_;
    cp.generation = source_generation_;
    cp.id = id_;
    nlohmann::json state{{"theta", to_exact_json(theta_)},
                         {"violated", acc_.violated.to_ulong()},
                         {"reward_sum", std::bit_cast<std::uint64_t>(acc_.reward_sum)},
                         {"count", acc_.count}};
    cp.accumulated_state = state.dump();
    return cp;
  }

  /// Rewinds or fast-forwards to a checkpoint taken from a run with the same
  /// id, configuration and pool.
  void restore(const TrainerCheckpoint& cp) {
    if (cp.id != id_ || cp.generation != source_generation_)
      throw Error(Errc::stale_generation, "checkpoint does not belong to this run");
    if (cp.batch_index > cfg_.batches_total || cp.step_within_batch >= cfg_.batch_size)
      throw Error(Errc::corrupt_snapshot, "checkpoint position outside the run");
    const auto state = nlohmann::json::parse(cp.accumulated_state);
    theta_ = policy_from_exact_json(state.at("theta"));
    acc_.violated = std::bitset<5>(state.at("violated").get<unsigned long>());
    acc_.reward_sum = std::bit_cast<double>(state.at("reward_sum").get<std::uint64_t>());
    acc_.count = state.at("count").get<std::size_t>();
    batch_index_ = cp.batch_index;
    step_ = cp.step_within_batch;
    batch_.clear();
    if (step_ > 0) batch_ = RlBuffer::sample_from(pool_, cfg_.batch_size, batch_seed(batch_index_));
  }

 private:
  std::uint64_t batch_seed(std::size_t b) const { return derive_seed(cfg_.seed, {static_cast<std::uint64_t>(b)}); }

  TrainConfig cfg_;
  std::vector<Trajectory> pool_;
  PolicyState theta_;
  Generation source_generation_;
  std::uint64_t id_;
  std::size_t batch_index_ = 0;
  std::size_t step_ = 0;
  UpdateAccumulator acc_;
  std::vector<Trajectory> batch_;
};

/// Cooperative pause request, honoured at the next step boundary.
class PauseChannel {
 public:
  void request() { requested_.store(true); }
  void clear() { requested_.store(false); }
  bool requested() const { return requested_.load(); }

 private:
  std::atomic<bool> requested_{false};
};

struct RunResult {
  bool completed = false;
  PolicyState theta;
  std::optional<TrainerCheckpoint> checkpoint;
};

/// Steps the run until it finishes or a pause is requested. The generation
/// probe is consulted before every step.
inline RunResult run_batches(TrainRun& run, const std::function<Generation()>& current_generation,
                             const PauseChannel& pause,
                             const std::function<void(const BatchSummary&)>& on_batch = {}) {
  while (!run.done()) {
    if (pause.requested()) return {false, run.theta(), run.checkpoint()};
    if (current_generation() != run.source_generation())
      throw Error(Errc::stale_generation, "skill generation moved from " + std::to_string(run.source_generation()) +
                                              " to " + std::to_string(current_generation()));
    if (auto b = run.step(); b && on_batch) on_batch(*b);
  }
  return {true, run.theta(), std::nullopt};
}

// ---------------------------------------------------------------------------
// Serving slot

/// The policy the orchestrator serves from. Reads and swaps are atomic.
class PolicySlot {
 public:
  explicit PolicySlot(PolicyState initial = {}) : current_(initial) { validate(initial); }

  PolicyState load() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  std::uint64_t version() const {
    std::lock_guard lock(mu_);
    return current_.version;
  }

  /// Installs `next`, whose version must be exactly one past the current one.
  void hot_swap(const PolicyState& next) {
    validate(next);
    std::lock_guard lock(mu_);
    if (next.version != current_.version + 1)
      throw Error(Errc::version_race, "swap to version " + std::to_string(next.version) + " over version " +
                                          std::to_string(current_.version));
    current_ = next;
  }

 private:
  mutable std::mutex mu_;
  PolicyState current_;
};

/// Result of a finished run, ready to be swapped in.
inline PolicyState swap_candidate(const PolicyState& trained, std::uint64_t base_version) {
  PolicyState next = trained;
  next.version = base_version + 1;
  return next;
}

// ---------------------------------------------------------------------------
// Checkpoint files

inline constexpr int kCheckpointFormatVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const TrainerCheckpoint& cp, const TrainConfig& cfg,
                            const std::vector<Trajectory>& pool) {
  nlohmann::json pool_json = nlohmann::json::array();
  for (const auto& t : pool) pool_json.push_back(to_json(t));
  nlohmann::json doc{{"format_version", kCheckpointFormatVersion},
                     {"generation", cp.generation},
                     {"batch_index", cp.batch_index},
                     {"step_within_batch", cp.step_within_batch},
                     {"id", cp.id},
                     {"state", cp.accumulated_state},
                     {"config",
                      {{"batches_total", cfg.batches_total},
                       {"batch_size", cfg.batch_size},
                       {"alpha", std::bit_cast<std::uint64_t>(cfg.alpha)},
                       {"seed", cfg.seed}}},
                     {"pool", pool_json}};
  detail::write_file(path, doc.dump() + "\n");
}

struct LoadedCheckpoint {
  TrainerCheckpoint checkpoint;
  TrainConfig config;
  std::vector<Trajectory> pool;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto text = detail::read_file(path);
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw Error(Errc::corrupt_snapshot, "unsupported checkpoint format");
    LoadedCheckpoint out;
    out.checkpoint.generation = doc.at("generation").get<Generation>();
    out.checkpoint.batch_index = doc.at("batch_index").get<std::size_t>();
    out.checkpoint.step_within_batch = doc.at("step_within_batch").get<std::size_t>();
    out.checkpoint.id = doc.at("id").get<std::uint64_t>();
    out.checkpoint.accumulated_state = doc.at("state").get<std::string>();
    const auto& c = doc.at("config");
    out.config.batches_total = c.at("batches_total").get<std::size_t>();
    out.config.batch_size = c.at("batch_size").get<std::size_t>();
    out.config.alpha = std::bit_cast<double>(c.at("alpha").get<std::uint64_t>());
    out.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto& t : doc.at("pool")) out.pool.push_back(trajectory_from_json(t));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corrupt_snapshot, path.string() + ": " + e.what());
  }
}

inline TrainRun resume_from(const LoadedCheckpoint& loaded, const PolicyState& fallback_theta = {}) {
  TrainRun run(loaded.config, loaded.pool, fallback_theta, loaded.checkpoint.generation, loaded.checkpoint.id);
  run.restore(loaded.checkpoint);
  return run;
}

// ---------------------------------------------------------------------------
// Trainer handles

/// Stepped by the caller on a virtual clock. Holds at most one run; a
/// checkpoint can be resumed once.
class SteppedTrainer : public TrainerHandle {
 public:
  using RunFactory = std::function<TrainRun(std::uint64_t id)>;

  explicit SteppedTrainer(RunFactory factory) : factory_(std::move(factory)) {}

  bool running() const override { return run_.has_value() && !paused_; }
  bool has_run() const { return run_.has_value(); }
  TrainRun& run() { return *run_; }
  const TrainRun& run() const { return *run_; }

  void start() override {
    if (running()) throw Error(Errc::invalid_config, "a training run is already active");
    run_.emplace(factory_(++next_id_));
    paused_ = false;
    pending_.reset();
  }

  std::optional<TrainerCheckpoint> pause(std::chrono::milliseconds) override {
    if (!running()) return std::nullopt;
    paused_ = true;
    pending_ = run_->checkpoint();
    return pending_;
  }

  void resume(const TrainerCheckpoint& cp) override {
    if (!run_ || !paused_ || !pending_ || !(cp == *pending_))
      throw Error(Errc::stale_generation, "checkpoint " + std::to_string(cp.id) + " is not resumable");
    run_->restore(cp);
    pending_.reset();
    paused_ = false;
  }

  /// Drops the held run (finished, aborted or superseded).
  void reset() {
    run_.reset();
    pending_.reset();
    paused_ = false;
  }

 private:
  RunFactory factory_;
  std::optional<TrainRun> run_;
  std::optional<TrainerCheckpoint> pending_;
  bool paused_ = false;
  std::uint64_t next_id_ = 0;
};

/// Runs training on a background thread for live mode. The thread stops at
/// step boundaries when asked and hands back a checkpoint.
class ThreadedTrainer : public TrainerHandle {
 public:
  struct Hooks {
    std::function<TrainRun(std::uint64_t id)> make_run;
    std::function<Generation()> current_generation;
    std::function<void(const PolicyState&)> on_complete;
    std::function<void(const BatchSummary&)> on_batch;
    std::function<void(const Error&)> on_abort;
    /// Wall time per step; zero runs flat out.
    std::chrono::milliseconds step_delay{0};
  };

  explicit ThreadedTrainer(Hooks hooks) : hooks_(std::move(hooks)) {}
  ~ThreadedTrainer() override { stop(); }

  ThreadedTrainer(const ThreadedTrainer&) = delete;
  ThreadedTrainer& operator=(const ThreadedTrainer&) = delete;

  bool running() const override {
    std::lock_guard lock(mu_);
    return active_;
  }

  void start() override {
    join_worker();
    std::lock_guard lock(mu_);
    run_.emplace(hooks_.make_run(++next_id_));
    launch_locked();
  }

  void resume(const TrainerCheckpoint& cp) override {
    join_worker();
    std::lock_guard lock(mu_);
    if (!run_ || !pending_ || !(cp == *pending_))
      throw Error(Errc::stale_generation, "checkpoint " + std::to_string(cp.id) + " is not resumable");
    run_->restore(cp);
    pending_.reset();
    launch_locked();
  }

  std::optional<TrainerCheckpoint> pause(std::chrono::milliseconds grace) override {
    std::unique_lock lock(mu_);
    if (!active_) return pending_;
    pause_.request();
    if (!cv_.wait_for(lock, grace, [&] { return !active_; })) return std::nullopt;
    return pending_;
  }

  /// Blocks until the current run stops on its own or is paused.
  void wait_idle() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !active_; });
  }

  void stop() {
    pause_.request();
    join_worker();
  }

 private:
  void launch_locked() {
    pause_.clear();
    active_ = true;
    worker_ = std::thread([this] { work(); });
  }

  void join_worker() {
    if (worker_.joinable()) worker_.join();
  }

  void work() {
    std::optional<RunResult> result;
    std::optional<Error> failure;
    try {
      auto probe = [&] {
        if (hooks_.step_delay.count() > 0) std::this_thread::sleep_for(hooks_.step_delay);
        return hooks_.current_generation();
      };
      result = run_batches(*run_, probe, pause_, hooks_.on_batch);
    } catch (const Error& e) {
      failure = e;
    }
    {
      std::lock_guard lock(mu_);
      if (result && !result->completed) {
        pending_ = result->checkpoint;
      } else {
        if (result && hooks_.on_complete) hooks_.on_complete(result->theta);
        if (failure && hooks_.on_abort) hooks_.on_abort(*failure);
        run_.reset();
        pending_.reset();
      }
      active_ = false;
    }
    cv_.notify_all();
  }

  Hooks hooks_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::thread worker_;
  PauseChannel pause_;
  std::optional<TrainRun> run_;
  std::optional<TrainerCheckpoint> pending_;
  bool active_ = false;
  std::uint64_t next_id_ = 0;
};

}  // namespace metaclaw
