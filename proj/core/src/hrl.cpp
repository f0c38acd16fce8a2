#include "compdial/hrl.hpp"

#include <cmath>
#include <limits>

namespace compdial {

double epsilon_at(const TrainConfig& config, long dialogue) {
  if (config.eps_dialogues <= 0 || dialogue >= config.eps_dialogues) return config.eps_end;
  const double frac = static_cast<double>(dialogue) / static_cast<double>(config.eps_dialogues);
  return config.eps_start + (config.eps_end - config.eps_start) * frac;
}

int select_subtask(const Vector& q_top, const std::vector<bool>& mask, double eps, Rng& rng) {
  std::vector<int> legal;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) legal.push_back(static_cast<int>(k));
  }
  if (legal.empty()) throw std::runtime_error("no subtask available");
  if (eps > 0.0 && rng.uniform() < eps) return legal[rng.index(legal.size())];
  int best = legal.front();
  for (int k : legal) {
    if (q_top(k) > q_top(best)) best = k;
  }
  return best;
}

int select_action(const Vector& q_low, ActionRange range, double eps, Rng& rng) {
  if (range.size() <= 0) throw std::invalid_argument("select_action: empty action range");
  if (eps > 0.0 && rng.uniform() < eps) return range.begin + static_cast<int>(rng.index(static_cast<std::size_t>(range.size())));
  int best = range.begin;
  for (int a = range.begin; a < range.end; ++a) {
    if (q_low(a) > q_low(best)) best = a;
  }
  return best;
}

double discounted_sum(std::span<const double> rewards, double gamma) {
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) acc = rewards[t] + gamma * acc;
  return acc;
}

TopTransition close_subtask(std::span<const double> extrinsic_rewards, double gamma, Vector observation, int subtask,
                            Vector next_observation, bool dialogue_done, std::vector<bool> mask_next) {
  if (extrinsic_rewards.empty()) throw std::invalid_argument("close_subtask: subtask lasted zero turns");
  TopTransition t;
  t.observation = std::move(observation);
  t.subtask = subtask;
  t.discounted_return = discounted_sum(extrinsic_rewards, gamma);
  t.duration = static_cast<int>(extrinsic_rewards.size());
  t.next_observation = std::move(next_observation);
  t.dialogue_done = dialogue_done;
  t.mask_next = std::move(mask_next);
  return t;
}

double top_update(QFunction& online, const QFunction& target, const std::vector<const TopTransition*>& batch,
                  double gamma, const AdamConfig& adam) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix x(online.input_dim(), n), xn(online.input_dim(), n);
  for (Eigen::Index b = 0; b < n; ++b) {
    x.col(b) = batch[static_cast<std::size_t>(b)]->observation;
    xn.col(b) = batch[static_cast<std::size_t>(b)]->next_observation;
  }
  std::unique_ptr<ForwardTape> tape;
  const Matrix q = online.forward(x, &tape);
  const Matrix qn = target.forward(xn);
  Matrix grad = Matrix::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const TopTransition& t = *batch[static_cast<std::size_t>(b)];
    double y = t.discounted_return;
    if (!t.dialogue_done) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < t.mask_next.size(); ++k) {
        if (t.mask_next[k]) best = std::max(best, qn(static_cast<Eigen::Index>(k), b));
      }
      if (std::isfinite(best)) y += std::pow(gamma, t.duration) * best;
    }
    const double err = q(t.subtask, b) - y;
    loss += err * err;
    grad(t.subtask, b) = 2.0 * err / static_cast<double>(n);
  }
  online.backward(*tape, grad);
  adam_step(online.params(), adam);
  return loss / static_cast<double>(n);
}

double low_update(QFunction& online, const QFunction& target, const std::vector<const LowTransition*>& batch,
                  const std::vector<ActionRange>& ranges, double gamma, const AdamConfig& adam) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix x(online.input_dim(), n), xn(online.input_dim(), n);
  for (Eigen::Index b = 0; b < n; ++b) {
    x.col(b) = batch[static_cast<std::size_t>(b)]->input;
    xn.col(b) = batch[static_cast<std::size_t>(b)]->next_input;
  }
  std::unique_ptr<ForwardTape> tape;
  const Matrix q = online.forward(x, &tape);
  const Matrix qn = target.forward(xn);
  Matrix grad = Matrix::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const LowTransition& t = *batch[static_cast<std::size_t>(b)];
    double y = t.reward;
    if (!t.subtask_done) {
      const ActionRange r = ranges[static_cast<std::size_t>(t.subtask)];
      y += gamma * qn.col(b).segment(r.begin, r.size()).maxCoeff();
    }
    const double err = q(t.action, b) - y;
    loss += err * err;
    grad(t.action, b) = 2.0 * err / static_cast<double>(n);
  }
  online.backward(*tape, grad);
  adam_step(online.params(), adam);
  return loss / static_cast<double>(n);
}

void sync_targets(const QFunction& online, QFunction& target) { target.params().copy_values_from(online.params()); }

Vector low_input(const Vector& observation, int subtask, int num_subtasks) {
  Vector x = Vector::Zero(observation.size() + num_subtasks);
  x.head(observation.size()) = observation;
  x(observation.size() + subtask) = 1.0;
  return x;
}

HierarchicalAgent::HierarchicalAgent(std::unique_ptr<QFunction> top, std::unique_ptr<QFunction> low, TaskShape shape,
                                     TrainConfig config, std::uint64_t seed)
    : top_(std::move(top)),
      low_(std::move(low)),
      shape_(std::move(shape)),
      config_(config),
      rng_(seed),
      low_buffer_(config.low_capacity),
      top_buffer_(config.top_capacity) {
  if (!(config.gamma > 0.0 && config.gamma <= 1.0)) throw std::invalid_argument("TrainConfig: gamma must be in (0, 1]");
  if (top_->input_dim() != shape_.observation_dim || top_->output_dim() != shape_.num_subtasks) {
    throw std::invalid_argument("HierarchicalAgent: top network does not match the task shape");
  }
  if (low_->input_dim() != shape_.low_input_dim() || low_->output_dim() != shape_.num_actions()) {
    throw std::invalid_argument("HierarchicalAgent: low network does not match the task shape");
  }
  top_target_ = top_->clone();
  low_target_ = low_->clone();
}

std::vector<bool> HierarchicalAgent::subtask_mask(const Episode& episode) const {
  if (config_.mask_completed) return episode.legal_subtasks();
  return std::vector<bool>(static_cast<std::size_t>(shape_.num_subtasks), true);
}

int HierarchicalAgent::greedy_subtask(const Vector& observation, const std::vector<bool>& mask) const {
  Rng unused(0);
  return select_subtask(top_->forward(observation).col(0), mask, 0.0, unused);
}

int HierarchicalAgent::greedy_action(const Vector& observation, int subtask) const {
  Rng unused(0);
  const Vector x = low_input(observation, subtask, shape_.num_subtasks);
  return select_action(low_->forward(x).col(0), shape_.subtask_actions[static_cast<std::size_t>(subtask)], 0.0,
                       unused);
}

EpisodeStats HierarchicalAgent::train_episode(Episode& episode, Controller* teacher) {
  const bool warmup = in_warmup();
  Controller* driver = warmup ? teacher : nullptr;
  const double eps = epsilon();
  const int k_total = shape_.num_subtasks;
  EpisodeStats stats;
  if (driver) driver->begin_episode(episode);

  while (!episode.finished()) {
    const Vector obs0 = episode.observation();
    const std::vector<bool> mask = subtask_mask(episode);
    const int g = driver ? driver->choose_subtask(episode) : select_subtask(top_->forward(obs0).col(0), mask, eps, rng_);
    const ActionRange range = shape_.subtask_actions[static_cast<std::size_t>(g)];
    std::vector<double> extrinsic;
    StepResult res;
    do {
      Vector x = low_input(episode.observation(), g, k_total);
      const int a = driver ? driver->choose_action(episode, g) : select_action(low_->forward(x).col(0), range, eps, rng_);
      res = episode.step(a);
      ++stats.turns;
      ++turns_;
      stats.extrinsic_return += res.extrinsic_reward;
      stats.intrinsic_return += res.intrinsic_reward;
      extrinsic.push_back(res.extrinsic_reward);
      low_buffer_.push({std::move(x), a, res.intrinsic_reward, low_input(res.observation, g, k_total),
                        res.subtask_terminated, g});

      if (!warmup && turns_ % config_.low_update_every == 0 &&
          low_buffer_.size() >= static_cast<std::size_t>(config_.low_batch)) {
        low_loss_sum_ += low_update(*low_, *low_target_, low_buffer_.sample(static_cast<std::size_t>(config_.low_batch), rng_),
                                    shape_.subtask_actions, config_.gamma, config_.adam);
        ++low_loss_count_;
        if (++low_updates_ % config_.low_sync_period == 0) sync_targets(*low_, *low_target_);
      }
    } while (!res.subtask_terminated);

    top_buffer_.push(close_subtask(extrinsic, config_.gamma, obs0, g, res.observation, res.dialogue_terminated,
                                   subtask_mask(episode)));
    if (!warmup && top_buffer_.size() >= static_cast<std::size_t>(config_.top_batch)) {
      top_loss_sum_ += top_update(*top_, *top_target_, top_buffer_.sample(static_cast<std::size_t>(config_.top_batch), rng_),
                                  config_.gamma, config_.adam);
      ++top_loss_count_;
      if (++top_updates_ % config_.top_sync_period == 0) sync_targets(*top_, *top_target_);
    }
    stats.success = res.dialogue_success;
  }
  ++dialogues_;
  return stats;
}

EpisodeStats HierarchicalAgent::run_greedy(Episode& episode) const {
  EpisodeStats stats;
  while (!episode.finished()) {
    const int g = greedy_subtask(episode.observation(), subtask_mask(episode));
    StepResult res;
    do {
      res = episode.step(greedy_action(episode.observation(), g));
      ++stats.turns;
      stats.extrinsic_return += res.extrinsic_reward;
      stats.intrinsic_return += res.intrinsic_reward;
    } while (!res.subtask_terminated);
    stats.success = res.dialogue_success;
  }
  return stats;
}

std::pair<double, double> HierarchicalAgent::take_losses() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double low = low_loss_count_ ? low_loss_sum_ / static_cast<double>(low_loss_count_) : nan;
  const double top = top_loss_count_ ? top_loss_sum_ / static_cast<double>(top_loss_count_) : nan;
  low_loss_sum_ = top_loss_sum_ = 0.0;
  low_loss_count_ = top_loss_count_ = 0;
  return {low, top};
}

void HierarchicalAgent::reset_training_state() {
  top_->params().reset_optimizer_state();
  low_->params().reset_optimizer_state();
  top_target_->params().reset_optimizer_state();
  low_target_->params().reset_optimizer_state();
  low_buffer_.clear();
  top_buffer_.clear();
  dialogues_ = low_updates_ = top_updates_ = turns_ = 0;
  take_losses();
}

void HierarchicalAgent::sync_all_targets() {
  sync_targets(*top_, *top_target_);
  sync_targets(*low_, *low_target_);
}

void HierarchicalAgent::set_counters(long dialogues, long low_updates, long top_updates, long turns) {
  dialogues_ = dialogues;
  low_updates_ = low_updates;
  top_updates_ = top_updates;
  turns_ = turns;
}

}  // namespace compdial
