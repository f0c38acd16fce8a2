#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "compdial/belief.hpp"
#include "compdial/mlp_policy.hpp"
#include "compdial/rule_agent.hpp"

namespace compdial::oracle {

Ontology random_ontology(Rng& rng, int subtasks, int max_informable) {
  Ontology o;
  for (int k = 0; k < subtasks; ++k) {
    SubtaskSpec sub;
    sub.name = "task" + std::to_string(k);
    sub.entity_count = 30;
    const int n = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_informable)));
    for (int j = 0; j < n; ++j) {
      SlotSpec slot;
      slot.name = "s" + std::to_string(j);
      slot.informable = true;
      slot.requestable = rng.bernoulli(0.5);
      const int values = 2 + static_cast<int>(rng.index(4));
      for (int v = 0; v < values; ++v) slot.values.push_back("v" + std::to_string(v));
      sub.slots.push_back(slot);
    }
    sub.slots.push_back({"phone", false, true, {}});
    o.subtasks.push_back(sub);
  }
  return o;
}

Ontology permute_subtasks(const Ontology& o, const std::vector<int>& perm) {
  Ontology out;
  for (int p : perm) out.subtasks.push_back(o.subtasks[static_cast<std::size_t>(p)]);
  return out;
}

Ontology permute_slots(const Ontology& o, int subtask, const std::vector<int>& perm) {
  Ontology out = o;
  SubtaskSpec& sub = out.subtasks[static_cast<std::size_t>(subtask)];
  const std::vector<int> informable = o.subtasks[static_cast<std::size_t>(subtask)].informable_slots();
  for (std::size_t i = 0; i < informable.size(); ++i) {
    sub.slots[static_cast<std::size_t>(informable[i])] =
        o.subtasks[static_cast<std::size_t>(subtask)].slots[static_cast<std::size_t>(informable[static_cast<std::size_t>(perm[i])])];
  }
  return out;
}

Vector permute_belief_subtasks(const Ontology& o, int top_m, const Vector& x, const std::vector<int>& perm) {
  const BeliefLayout layout(o, top_m);
  Vector out(x.size());
  int cursor = 0;
  for (int p : perm) {
    const int size = layout.subtask_size(p);
    out.segment(cursor, size) = x.segment(layout.subtask_offset(p), size);
    cursor += size;
  }
  return out;
}

Vector permute_belief_slots(const Ontology& o, int top_m, const Vector& x, int subtask, const std::vector<int>& perm) {
  const BeliefLayout layout(o, top_m);
  Vector out = x;
  const int block = layout.slot_block_size();
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.segment(layout.slot_offset(subtask, static_cast<int>(i)), block) =
        x.segment(layout.slot_offset(subtask, perm[i]), block);
  }
  return out;
}

std::vector<int> random_permutation(Rng& rng, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)], p[rng.index(static_cast<std::size_t>(i) + 1)]);
  return p;
}

namespace {

ComNetConfig small_config() {
  ComNetConfig c;
  c.embed_width = 8;
  c.layers = 2;
  c.head_hidden = 8;
  return c;
}

void randomize_gates(ParamRegistry& params, Rng& rng) {
  for (auto& [key, p] : params) {
    if (p.unit_interval) p.value.setConstant(rng.uniform(0.05, 0.95));
  }
}

Vector random_input(Rng& rng, int n) {
  Vector x(n);
  for (int i = 0; i < n; ++i) x(i) = rng.uniform(-1.0, 1.0);
  return x;
}

struct Case {
  Ontology ontology;
  int top_m = 1;
};

Case random_case(Rng& rng) {
  Case c;
  c.top_m = 1 + static_cast<int>(rng.index(3));
  c.ontology = random_ontology(rng, 2 + static_cast<int>(rng.index(3)));
  return c;
}

// Output rows of the relabeled network, expressed as rows of the original.
std::vector<int> action_map_subtasks(const Ontology& o, const std::vector<int>& perm) {
  const ActionSpace a(o);
  std::vector<int> rows;
  for (int p : perm) {
    for (int r = a.range(p).begin; r < a.range(p).end; ++r) rows.push_back(r);
  }
  return rows;
}

std::vector<int> action_map_slots(const Ontology& o, int subtask, const std::vector<int>& perm) {
  const ActionSpace a(o);
  std::vector<int> rows(static_cast<std::size_t>(a.size()));
  std::iota(rows.begin(), rows.end(), 0);
  const int begin = a.range(subtask).begin;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (int j = 0; j < kSlotActions; ++j) {
      rows[static_cast<std::size_t>(begin + static_cast<int>(i) * kSlotActions + j)] = begin + perm[i] * kSlotActions + j;
    }
  }
  return rows;
}

double mapped_error(const Vector& q_new, const Vector& q_old, const std::vector<int>& rows) {
  double err = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    err = std::max(err, std::abs(q_new(static_cast<Eigen::Index>(i)) - q_old(rows[i])));
  }
  return err;
}

Parameter& find_param(ParamRegistry& params, const std::string& key) { return params.at(ParamKey::parse(key)); }

}  // namespace

double top_subtask_equivariance_error(std::uint64_t seed) {
  Rng rng(seed);
  const Case c = random_case(rng);
  const auto perm = random_permutation(rng, c.ontology.num_subtasks());
  const Ontology permuted = permute_subtasks(c.ontology, perm);
  Rng init(seed + 1);
  ComNetTop net(build_top_graph(c.ontology, c.top_m), small_config(), init);
  randomize_gates(net.params(), rng);
  Rng init2(seed + 2);
  ComNetTop net2(build_top_graph(permuted, c.top_m), small_config(), init2);
  net2.params().copy_values_from(net.params());

  const Vector x = random_input(rng, net.input_dim());
  const Vector q = net.forward(x).col(0);
  const Vector q2 = net2.forward(permute_belief_subtasks(c.ontology, c.top_m, x, perm)).col(0);
  return mapped_error(q2, q, perm);
}

double low_subtask_equivariance_error(std::uint64_t seed) {
  Rng rng(seed);
  const Case c = random_case(rng);
  const int k = c.ontology.num_subtasks();
  const auto perm = random_permutation(rng, k);
  const Ontology permuted = permute_subtasks(c.ontology, perm);
  Rng init(seed + 1);
  ComNetLow net(build_low_graph(c.ontology, c.top_m), small_config(), init);
  randomize_gates(net.params(), rng);
  Rng init2(seed + 2);
  ComNetLow net2(build_low_graph(permuted, c.top_m), small_config(), init2);
  net2.params().copy_values_from(net.params());

  // The subtask one-hot is the only subtask-indexed input, so relabel the
  // parameters that read it (T input columns) and write per-subtask values (subt head rows).
  Parameter& t_in = find_param(net2.params(), "input/T/W0");
  Parameter& subt_w = find_param(net2.params(), "head/subt/W1");
  Parameter& subt_b = find_param(net2.params(), "head/subt/b1");
  const Matrix w0 = t_in.value, w1 = subt_w.value, b1 = subt_b.value;
  for (int j = 0; j < k; ++j) {
    t_in.value.col(j) = w0.col(perm[static_cast<std::size_t>(j)]);
    subt_w.value.row(j) = w1.row(perm[static_cast<std::size_t>(j)]);
    subt_b.value.row(j) = b1.row(perm[static_cast<std::size_t>(j)]);
  }

  const int obs = BeliefLayout(c.ontology, c.top_m).size();
  const Vector belief = random_input(rng, obs);
  double err = 0.0;
  for (int g = 0; g < k; ++g) {
    const Vector x = low_input(belief, g, k);
    const int g2 = static_cast<int>(std::find(perm.begin(), perm.end(), g) - perm.begin());
    const Vector x2 = low_input(permute_belief_subtasks(c.ontology, c.top_m, belief, perm), g2, k);
    err = std::max(err, mapped_error(net2.forward(x2).col(0), net.forward(x).col(0), action_map_subtasks(c.ontology, perm)));
  }
  return err;
}

double top_slot_equivariance_error(std::uint64_t seed) {
  Rng rng(seed);
  const Case c = random_case(rng);
  const int k = static_cast<int>(rng.index(static_cast<std::size_t>(c.ontology.num_subtasks())));
  const auto perm = random_permutation(rng, c.ontology.subtasks[static_cast<std::size_t>(k)].num_informable());
  Rng init(seed + 1);
  ComNetTop net(build_top_graph(c.ontology, c.top_m), small_config(), init);
  randomize_gates(net.params(), rng);
  const Vector x = random_input(rng, net.input_dim());
  const Vector q = net.forward(x).col(0);
  const Vector q2 = net.forward(permute_belief_slots(c.ontology, c.top_m, x, k, perm)).col(0);
  return (q2 - q).cwiseAbs().maxCoeff();
}

double low_slot_equivariance_error(std::uint64_t seed) {
  Rng rng(seed);
  const Case c = random_case(rng);
  const int nk = c.ontology.num_subtasks();
  const int k = static_cast<int>(rng.index(static_cast<std::size_t>(nk)));
  const auto perm = random_permutation(rng, c.ontology.subtasks[static_cast<std::size_t>(k)].num_informable());
  Rng init(seed + 1);
  ComNetLow net(build_low_graph(c.ontology, c.top_m), small_config(), init);
  randomize_gates(net.params(), rng);
  const int obs = BeliefLayout(c.ontology, c.top_m).size();
  const Vector belief = random_input(rng, obs);
  double err = 0.0;
  for (int g = 0; g < nk; ++g) {
    const Vector q = net.forward(low_input(belief, g, nk)).col(0);
    const Vector q2 = net.forward(low_input(permute_belief_slots(c.ontology, c.top_m, belief, k, perm), g, nk)).col(0);
    err = std::max(err, mapped_error(q2, q, action_map_slots(c.ontology, k, perm)));
  }
  return err;
}

LossClosure td_loss_closure(QFunction& net, int batch, Rng& rng) {
  Matrix x(net.input_dim(), batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  std::vector<int> actions;
  std::vector<double> targets;
  for (int b = 0; b < batch; ++b) {
    actions.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(net.output_dim()))));
    targets.push_back(rng.uniform(-1.0, 1.0));
  }
  return [&net, x, actions, targets](ParamRegistry&, bool accumulate) {
    std::unique_ptr<ForwardTape> tape;
    const Matrix q = net.forward(x, accumulate ? &tape : nullptr);
    const double n = static_cast<double>(x.cols());
    Matrix grad = Matrix::Zero(q.rows(), q.cols());
    double loss = 0.0;
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      const double err = q(actions[static_cast<std::size_t>(b)], b) - targets[static_cast<std::size_t>(b)];
      loss += err * err / n;
      grad(actions[static_cast<std::size_t>(b)], b) = 2.0 * err / n;
    }
    if (accumulate) net.backward(*tape, grad);
    return loss;
  };
}

namespace {

struct TableTape : ForwardTape {
  Matrix input;
};

const ParamKey kTableKey{"table", "flat", -1, "W"};

}  // namespace

TabularQ::TabularQ(int states, int actions) : states_(states), actions_(actions) {
  params_.add(kTableKey, Matrix::Zero(actions, states));
}

Matrix TabularQ::forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape) const {
  if (tape) {
    auto t = std::make_unique<TableTape>();
    t->input = input;
    *tape = std::move(t);
  }
  return params_.at(kTableKey).value * input;
}

void TabularQ::backward(const ForwardTape& tape, const Matrix& grad_output) {
  params_.at(kTableKey).grad += grad_output * dynamic_cast<const TableTape&>(tape).input.transpose();
}

const Matrix& TabularQ::table() const { return params_.at(kTableKey).value; }

int TwoStateMdp::next(int /*s*/, int a) { return a; }

double TwoStateMdp::reward(int s, int a) {
  if (s == 1 && a == 1) return 1.0;
  if (s == 0 && a == 0) return 0.25;
  return 0.0;
}

Matrix TwoStateMdp::value_iteration(double gamma) {
  Matrix q = Matrix::Zero(kActions, kStates);
  for (int it = 0; it < 10000; ++it) {
    Matrix nq(kActions, kStates);
    for (int s = 0; s < kStates; ++s) {
      for (int a = 0; a < kActions; ++a) nq(a, s) = reward(s, a) + gamma * q.col(next(s, a)).maxCoeff();
    }
    const double delta = (nq - q).cwiseAbs().maxCoeff();
    q = nq;
    if (delta == 0.0) break;
  }
  return q;
}

double two_state_low_update_error(int steps, double gamma, double lr) {
  TabularQ online(TwoStateMdp::kStates, TwoStateMdp::kActions);
  std::unique_ptr<QFunction> target = online.clone();
  std::vector<LowTransition> transitions;
  for (int s = 0; s < TwoStateMdp::kStates; ++s) {
    for (int a = 0; a < TwoStateMdp::kActions; ++a) {
      LowTransition t;
      t.input = Vector::Unit(TwoStateMdp::kStates, s);
      t.action = a;
      t.reward = TwoStateMdp::reward(s, a);
      t.next_input = Vector::Unit(TwoStateMdp::kStates, TwoStateMdp::next(s, a));
      transitions.push_back(t);
    }
  }
  std::vector<const LowTransition*> batch;
  for (const auto& t : transitions) batch.push_back(&t);
  AdamConfig adam;
  adam.lr = lr;
  const std::vector<ActionRange> ranges{{0, TwoStateMdp::kActions}};
  for (int i = 0; i < steps; ++i) {
    low_update(online, *target, batch, ranges, gamma, adam);
    if ((i + 1) % 5 == 0) sync_targets(online, *target);
  }
  return (online.table() - TwoStateMdp::value_iteration(gamma)).cwiseAbs().maxCoeff();
}

OrderedToyTask::OrderedToyTask() { refresh(); }

std::vector<bool> OrderedToyTask::legal_subtasks() const { return {!done_[0], !done_[1]}; }

void OrderedToyTask::refresh() {
  obs_ = Vector(3);
  obs_ << (done_[0] ? 1.0 : 0.0), (done_[1] ? 1.0 : 0.0), static_cast<double>(progress_);
}

StepResult OrderedToyTask::step(int action) {
  if (finished_) throw std::logic_error("OrderedToyTask: episode finished");
  const int k = action / 2;
  if (active_ != k) {
    active_ = k;
    progress_ = 0;
    subtask_turns_ = 0;
  }
  ++turns_;
  ++subtask_turns_;
  const bool correct = action == 1 || action == 2;
  const int need = (k == 0 && done_[1]) ? 2 : 1;
  if (correct && !done_[k]) ++progress_;
  const bool success_now = !done_[k] && progress_ >= need;
  if (success_now) done_[k] = true;
  const bool all_done = done_[0] && done_[1];

  StepResult r;
  r.dialogue_terminated = all_done || turns_ >= kMaxTurns;
  r.dialogue_success = all_done;
  r.subtask_success = success_now;
  r.subtask_terminated = success_now || subtask_turns_ >= kMaxSubtaskTurns || r.dialogue_terminated;
  r.intrinsic_reward = kTurnPenalty + (success_now ? 1.0 : 0.0);
  r.extrinsic_reward = kTurnPenalty + (success_now && all_done ? 2.0 : 0.0);
  if (r.subtask_terminated) {
    active_ = -1;
    progress_ = 0;
    subtask_turns_ = 0;
  }
  finished_ = r.dialogue_terminated;
  refresh();
  r.observation = obs_;
  return r;
}

TaskShape OrderedToyTask::shape() {
  TaskShape s;
  s.observation_dim = 3;
  s.num_subtasks = 2;
  s.subtask_actions = {{0, 2}, {2, 4}};
  return s;
}

double ordered_toy_optimal_return() {
  // g < 0: the top level picks next; otherwise the low level continues subtask g.
  std::function<double(const OrderedToyTask&, int)> best = [&](const OrderedToyTask& task, int g) {
    if (task.finished()) return 0.0;
    double out = -1e300;
    const auto legal = task.legal_subtasks();
    for (int k = 0; k < 2; ++k) {
      if (g >= 0 ? k != g : !legal[static_cast<std::size_t>(k)]) continue;
      for (int a = 2 * k; a < 2 * k + 2; ++a) {
        OrderedToyTask copy = task;
        const StepResult r = copy.step(a);
        out = std::max(out, r.extrinsic_reward + best(copy, r.subtask_terminated ? -1 : k));
      }
    }
    return out;
  };
  return best(OrderedToyTask(), -1);
}

double ordered_toy_greedy_return(const HierarchicalAgent& agent) {
  OrderedToyTask task;
  return agent.run_greedy(task).extrinsic_return;
}

std::unique_ptr<HierarchicalAgent> train_ordered_toy(int dialogues, std::uint64_t seed) {
  const TaskShape shape = OrderedToyTask::shape();
  Rng init(derive_seed(seed, 1));
  auto top = std::make_unique<MlpQFunction>(shape.observation_dim, shape.num_subtasks, std::vector<int>{16}, init);
  auto low = std::make_unique<MlpQFunction>(shape.low_input_dim(), shape.num_actions(), std::vector<int>{16}, init);
  TrainConfig cfg;
  cfg.gamma = 0.95;
  cfg.adam.lr = 5e-3;
  cfg.low_batch = 16;
  cfg.top_batch = 8;
  cfg.low_sync_period = 20;
  cfg.top_sync_period = 10;
  cfg.eps_start = 0.5;
  cfg.eps_end = 0.0;
  cfg.eps_dialogues = dialogues * 3 / 4;
  cfg.warmup_dialogues = 0;
  auto agent = std::make_unique<HierarchicalAgent>(std::move(top), std::move(low), shape, cfg, derive_seed(seed, 2));
  for (int d = 0; d < dialogues; ++d) {
    OrderedToyTask task;
    agent->train_episode(task);
  }
  return agent;
}

RewardAudit audit_rewards(const std::string& preset, int dialogues, double ser, std::uint64_t seed, double guided) {
  const auto domain = DialogueDomain::create(preset_ontology(preset), 1);
  EnvConfig env;
  env.ser = ser;
  const int k_total = domain->ontology.num_subtasks();
  Rng policy(derive_seed(seed, 7));
  RewardAudit audit;
  for (int d = 0; d < dialogues; ++d) {
    Session s(domain, env, derive_seed(seed, 8, static_cast<std::uint64_t>(d)));
    RuleState rule;
    double extrinsic = 0.0;
    std::vector<double> intrinsic(static_cast<std::size_t>(k_total), 0.0);
    while (!s.finished()) {
      const auto legal = s.legal_subtasks();
      std::vector<int> options;
      for (int k = 0; k < k_total; ++k) {
        if (legal[static_cast<std::size_t>(k)]) options.push_back(k);
      }
      const int g = policy.uniform() < guided ? rule_top(s) : options[policy.index(options.size())];
      const ActionRange range = domain->actions.range(g);
      StepResult r;
      do {
        const int a = policy.uniform() < guided
                          ? domain->actions.encode(rule_low(s, g, rule))
                          : range.begin + static_cast<int>(policy.index(static_cast<std::size_t>(range.size())));
        r = s.step(a);
        extrinsic += r.extrinsic_reward;
        intrinsic[static_cast<std::size_t>(g)] += r.intrinsic_reward;
      } while (!r.subtask_terminated);
    }
    ++audit.dialogues;
    audit.successes += s.succeeded() ? 1 : 0;
    const double want_e = (s.succeeded() ? k_total : 0) + env.turn_penalty * s.turn();
    audit.max_extrinsic_error = std::max(audit.max_extrinsic_error, std::abs(extrinsic - want_e));
    for (int k = 0; k < k_total; ++k) {
      const double want_i = (s.subtask_succeeded(k) ? 1.0 : 0.0) + env.turn_penalty * s.subtask_turns(k);
      audit.max_intrinsic_error =
          std::max(audit.max_intrinsic_error, std::abs(intrinsic[static_cast<std::size_t>(k)] - want_i));
    }
  }
  return audit;
}

}  // namespace compdial::oracle
