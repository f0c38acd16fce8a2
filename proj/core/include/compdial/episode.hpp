#pragma once

#include <vector>

#include <Eigen/Core>

namespace compdial {

/// Contiguous range of primitive action indices owned by one subtask.
struct ActionRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool contains(int a) const { return a >= begin && a < end; }
};

/// Dimensions shared by a task and the Q-functions trained on it.
struct TaskShape {
  int observation_dim = 0;
  int num_subtasks = 0;
  std::vector<ActionRange> subtask_actions;

  int num_actions() const { return subtask_actions.empty() ? 0 : subtask_actions.back().end; }
  /// Low-level input: observation followed by the subtask one-hot.
  int low_input_dim() const { return observation_dim + num_subtasks; }
};

struct StepResult {
  Eigen::VectorXd observation;
  double intrinsic_reward = 0.0;
  double extrinsic_reward = 0.0;
  bool subtask_terminated = false;
  bool subtask_success = false;
  bool dialogue_terminated = false;
  bool dialogue_success = false;
};

/// One episode of a hierarchical task: the top level picks a subtask, the
/// low level emits primitive actions from that subtask's range until
/// `subtask_terminated`.
class Episode {
 public:
  virtual ~Episode() = default;

  virtual const Eigen::VectorXd& observation() const = 0;
  /// True for subtasks that can still be selected.
  virtual std::vector<bool> legal_subtasks() const = 0;
  virtual StepResult step(int action) = 0;
  virtual bool finished() const = 0;
};

/// A hand-written policy that can drive an episode (warm-up teacher, baseline).
class Controller {
 public:
  virtual ~Controller() = default;

  virtual void begin_episode(const Episode& /*episode*/) {}
  virtual int choose_subtask(const Episode& episode) = 0;
  virtual int choose_action(const Episode& episode, int subtask) = 0;
};

}  // namespace compdial
