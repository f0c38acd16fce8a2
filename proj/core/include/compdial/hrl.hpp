#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "compdial/episode.hpp"
#include "compdial/qfunction.hpp"
#include "compdial/rng.hpp"

namespace compdial {

struct LowTransition {
  Vector input;  // belief (+) subtask one-hot
  int action = 0;
  double reward = 0.0;
  Vector next_input;
  bool subtask_done = false;
  int subtask = 0;
};

struct TopTransition {
  Vector observation;  // belief when the subtask was chosen
  int subtask = 0;
  double discounted_return = 0.0;
  int duration = 0;
  Vector next_observation;
  bool dialogue_done = false;
  std::vector<bool> mask_next;
};

/// Bounded FIFO with uniform sampling (with replacement).
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  void push(T item) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(item));
  }

  std::vector<const T*> sample(std::size_t batch, Rng& rng) const {
    if (items_.size() < batch) throw std::logic_error("ReplayBuffer: fewer items than batch size");
    std::vector<const T*> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(&items_[rng.index(items_.size())]);
    return out;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const T& oldest() const { return items_.front(); }
  const T& newest() const { return items_.back(); }
  const T& operator[](std::size_t i) const { return items_[i]; }
  void clear() { items_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

struct TrainConfig {
  double gamma = 0.99;
  AdamConfig adam;
  int low_batch = 64;
  int top_batch = 16;
  std::size_t low_capacity = 50000;
  std::size_t top_capacity = 5000;
  int low_sync_period = 100;  // low updates between target syncs
  int top_sync_period = 20;
  double eps_start = 0.3;
  double eps_end = 0.0;
  int eps_dialogues = 4000;
  int warmup_dialogues = 200;
  bool mask_completed = true;
  /// One low-level update every this many training turns.
  int low_update_every = 1;
};

/// Linear from eps_start at dialogue 0 to eps_end at eps_dialogues, then flat.
double epsilon_at(const TrainConfig& config, long dialogue);

/// Epsilon-greedy over legal subtasks; ties go to the lowest index. Draws no
/// random numbers when eps == 0.
int select_subtask(const Vector& q_top, const std::vector<bool>& mask, double eps, Rng& rng);
/// Epsilon-greedy restricted to `range`.
int select_action(const Vector& q_low, ActionRange range, double eps, Rng& rng);

/// sum_t gamma^t r_t by Horner's rule.
double discounted_sum(std::span<const double> rewards, double gamma);

TopTransition close_subtask(std::span<const double> extrinsic_rewards, double gamma, Vector observation, int subtask,
                            Vector next_observation, bool dialogue_done, std::vector<bool> mask_next);

/// Mean squared TD error on the chosen subtask, then one Adam step on `online`.
double top_update(QFunction& online, const QFunction& target, const std::vector<const TopTransition*>& batch,
                  double gamma, const AdamConfig& adam);
/// Mean squared TD error on the taken action; bootstrap max stays inside the
/// subtask's action range.
double low_update(QFunction& online, const QFunction& target, const std::vector<const LowTransition*>& batch,
                  const std::vector<ActionRange>& ranges, double gamma, const AdamConfig& adam);

void sync_targets(const QFunction& online, QFunction& target);

/// Observation followed by the one-hot of `subtask`.
Vector low_input(const Vector& observation, int subtask, int num_subtasks);

struct EpisodeStats {
  bool success = false;
  int turns = 0;
  double extrinsic_return = 0.0;
  double intrinsic_return = 0.0;
};

/// Two-level Q-learner: online/target networks for both levels, replay
/// buffers and the training RNG.
class HierarchicalAgent {
 public:
  HierarchicalAgent(std::unique_ptr<QFunction> top, std::unique_ptr<QFunction> low, TaskShape shape,
                    TrainConfig config, std::uint64_t seed);

  /// Runs one training dialogue. While in warm-up no gradient steps are taken
  /// and `teacher` (if given) chooses every action.
  EpisodeStats train_episode(Episode& episode, Controller* teacher = nullptr);
  /// Greedy rollout; touches neither parameters nor the training RNG.
  EpisodeStats run_greedy(Episode& episode) const;

  int greedy_subtask(const Vector& observation, const std::vector<bool>& mask) const;
  int greedy_action(const Vector& observation, int subtask) const;
  std::vector<bool> subtask_mask(const Episode& episode) const;

  bool in_warmup() const { return dialogues_ < config_.warmup_dialogues; }
  double epsilon() const { return epsilon_at(config_, dialogues_); }

  /// Mean losses since the previous call (NaN when no update happened).
  std::pair<double, double> take_losses();

  /// Clears optimizer state, buffers, counters (used after transfer).
  void reset_training_state();
  void sync_all_targets();

  QFunction& top() { return *top_; }
  QFunction& low() { return *low_; }
  QFunction& top_target() { return *top_target_; }
  QFunction& low_target() { return *low_target_; }
  const QFunction& top() const { return *top_; }
  const QFunction& low() const { return *low_; }
  const QFunction& top_target() const { return *top_target_; }
  const QFunction& low_target() const { return *low_target_; }

  const TaskShape& shape() const { return shape_; }
  const TrainConfig& config() const { return config_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  long dialogues() const { return dialogues_; }
  long low_updates() const { return low_updates_; }
  long top_updates() const { return top_updates_; }
  long turns() const { return turns_; }
  void set_counters(long dialogues, long low_updates, long top_updates, long turns);

  const ReplayBuffer<LowTransition>& low_buffer() const { return low_buffer_; }
  const ReplayBuffer<TopTransition>& top_buffer() const { return top_buffer_; }

 private:
  std::unique_ptr<QFunction> top_, low_, top_target_, low_target_;
  TaskShape shape_;
  TrainConfig config_;
  Rng rng_;
  ReplayBuffer<LowTransition> low_buffer_;
  ReplayBuffer<TopTransition> top_buffer_;
  long dialogues_ = 0;
  long low_updates_ = 0;
  long top_updates_ = 0;
  long turns_ = 0;
  double low_loss_sum_ = 0.0, top_loss_sum_ = 0.0;
  long low_loss_count_ = 0, top_loss_count_ = 0;
};

}  // namespace compdial
