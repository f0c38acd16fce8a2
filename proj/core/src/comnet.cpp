#include "compdial/comnet.hpp"

#include <algorithm>
#include <stdexcept>

namespace compdial {

namespace {

Matrix hstack(const std::vector<Matrix>& blocks, const std::vector<int>& ids) {
  const Eigen::Index rows = blocks[static_cast<std::size_t>(ids.front())].rows();
  const Eigen::Index batch = blocks[static_cast<std::size_t>(ids.front())].cols();
  Matrix out(rows, batch * static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.middleCols(static_cast<Eigen::Index>(i) * batch, batch) = blocks[static_cast<std::size_t>(ids[i])];
  }
  return out;
}

void split_add(const Matrix& stacked, const std::vector<int>& ids, std::vector<Matrix>& out) {
  const Eigen::Index batch = stacked.cols() / static_cast<Eigen::Index>(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[static_cast<std::size_t>(ids[i])] += stacked.middleCols(static_cast<Eigen::Index>(i) * batch, batch);
  }
}

std::string type_name(NodeType t) { return std::string(1, node_type_char(t)); }

}  // namespace

ParamKey GraphEncoder::input_key(NodeType type, const std::string& name) {
  return {"input", type_name(type), -1, name};
}

ParamKey GraphEncoder::message_key(const EdgeType& type, int layer) { return {"message", type.str(), layer, "W"}; }

ParamKey GraphEncoder::update_key(NodeType type, int layer) { return {"update", type_name(type), layer, "W"}; }

ParamKey GraphEncoder::lambda_key(int layer) { return {"update", "shared", layer, "lambda"}; }

GraphEncoder::GraphEncoder(const GraphSpec& graph, const ComNetConfig& config, ParamRegistry& params, Rng& rng)
    : graph_(graph), config_(config) {
  if (config.embed_width < 1 || config.layers < 0) throw std::invalid_argument("ComNetConfig: bad width or layers");
  const int d = config.embed_width;
  node_types_ = graph.node_types();
  for (NodeType t : node_types_) {
    std::vector<int> ids;
    int in = -1;
    for (const auto& n : graph.nodes) {
      if (n.type != t) continue;
      if (in >= 0 && n.input_size != in) {
        throw std::invalid_argument("input dimension mismatch at node " + std::to_string(n.id));
      }
      in = n.input_size;
      ids.push_back(n.id);
    }
    nodes_of_type_.push_back(std::move(ids));
    input_modules_.emplace_back(params, "input", type_name(t), MlpSpec{{in, d}}, rng);
  }

  edge_types_ = graph.edge_types();
  sources_of_edge_type_.resize(edge_types_.size());
  in_edges_.resize(graph.nodes.size());
  for (const auto& e : graph.edges) {
    const auto ci = static_cast<std::size_t>(
        std::lower_bound(edge_types_.begin(), edge_types_.end(), e.type) - edge_types_.begin());
    auto& srcs = sources_of_edge_type_[ci];
    auto it = std::find(srcs.begin(), srcs.end(), e.src);
    const int pos = static_cast<int>(it - srcs.begin());
    if (it == srcs.end()) srcs.push_back(e.src);
    in_edges_[static_cast<std::size_t>(e.dst)].emplace_back(static_cast<int>(ci), pos);
  }

  for (int l = 0; l < config.layers; ++l) {
    for (const EdgeType& c : edge_types_) params.add(message_key(c, l), glorot_uniform(d, d, rng));
    for (NodeType t : node_types_) params.add(update_key(t, l), glorot_uniform(d, d, rng));
    params.add(lambda_key(l), Matrix::Constant(1, 1, 0.5), true);
  }
}

std::vector<Matrix> GraphEncoder::embed(const ParamRegistry& params, const Matrix& input, Tape* tape) const {
  const Eigen::Index batch = input.cols();
  std::vector<Matrix> h(graph_.nodes.size());
  for (std::size_t t = 0; t < node_types_.size(); ++t) {
    const auto& ids = nodes_of_type_[t];
    const int in = input_modules_[t].input_dim();
    Matrix x(in, batch * static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const GraphNode& n = graph_.nodes[static_cast<std::size_t>(ids[i])];
      if (n.input_offset + n.input_size > input.rows()) {
        throw std::invalid_argument("input dimension mismatch at node " + std::to_string(n.id) + ": input has " +
                                    std::to_string(input.rows()) + " rows, node reads [" +
                                    std::to_string(n.input_offset) + ", " +
                                    std::to_string(n.input_offset + n.input_size) + ")");
      }
      x.middleCols(static_cast<Eigen::Index>(i) * batch, batch) = input.middleRows(n.input_offset, n.input_size);
    }
    Mlp::Tape* mt = nullptr;
    if (tape) {
      tape->input_tapes.emplace_back();
      mt = &tape->input_tapes.back();
    }
    const Matrix y = input_modules_[t].forward(params, x, mt);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      h[static_cast<std::size_t>(ids[i])] = y.middleCols(static_cast<Eigen::Index>(i) * batch, batch);
    }
    if (tape) tape->type_inputs.push_back(std::move(x));
  }
  return h;
}

std::vector<Matrix> GraphEncoder::propagate(const ParamRegistry& params, int layer, const std::vector<Matrix>& h,
                                            Tape* tape) const {
  const std::size_t n = graph_.nodes.size();
  const Eigen::Index d = config_.embed_width;
  const Eigen::Index batch = h.front().cols();
  const double lambda = params.at(lambda_key(layer)).value(0, 0);

  std::vector<Matrix> messages(edge_types_.size());
  for (std::size_t c = 0; c < edge_types_.size(); ++c) {
    messages[c] = params.at(message_key(edge_types_[c], layer)).value * hstack(h, sources_of_edge_type_[c]);
  }
  std::vector<Matrix> mean(n, Matrix::Zero(d, batch));
  for (std::size_t i = 0; i < n; ++i) {
    if (in_edges_[i].empty()) continue;
    for (const auto& [c, pos] : in_edges_[i]) {
      mean[i] += messages[static_cast<std::size_t>(c)].middleCols(pos * batch, batch);
    }
    mean[i] /= static_cast<double>(in_edges_[i].size());
  }
  std::vector<Matrix> update(n);
  for (std::size_t t = 0; t < node_types_.size(); ++t) {
    const Matrix u = params.at(update_key(node_types_[t], layer)).value * hstack(h, nodes_of_type_[t]);
    const auto& ids = nodes_of_type_[t];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      update[static_cast<std::size_t>(ids[i])] = u.middleCols(static_cast<Eigen::Index>(i) * batch, batch);
    }
  }
  std::vector<Matrix> pre(n);
  std::vector<Matrix> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    pre[i] = lambda * update[i] + (1.0 - lambda) * mean[i];
    out[i] = pre[i].cwiseMax(0.0);
  }
  if (tape) {
    tape->update_terms.push_back(std::move(update));
    tape->mean_messages.push_back(std::move(mean));
    tape->pre.push_back(std::move(pre));
  }
  return out;
}

std::vector<Matrix> GraphEncoder::forward(const ParamRegistry& params, const Matrix& input, Tape* tape) const {
  if (input.rows() != graph_.input_dim) {
    throw std::invalid_argument("GraphEncoder: input has " + std::to_string(input.rows()) + " rows, graph expects " +
                                std::to_string(graph_.input_dim));
  }
  if (tape) *tape = Tape{};
  std::vector<Matrix> h = embed(params, input, tape);
  for (int l = 0; l < config_.layers; ++l) {
    if (tape) {
      tape->h.push_back(std::move(h));
      h = propagate(params, l, tape->h.back(), tape);
    } else {
      h = propagate(params, l, h, tape);
    }
  }
  return h;
}

void GraphEncoder::layer_backward(ParamRegistry& params, const Tape& tape, int layer,
                                  std::vector<Matrix>& grad) const {
  const auto l = static_cast<std::size_t>(layer);
  const std::size_t n = graph_.nodes.size();
  const std::vector<Matrix>& prev = tape.h[l];
  const Eigen::Index batch = prev.front().cols();
  Parameter& lambda_param = params.at(lambda_key(layer));
  const double lambda = lambda_param.value(0, 0);

  std::vector<Matrix> dpre(n);
  double dlambda = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dpre[i] = grad[i].cwiseProduct((tape.pre[l][i].array() > 0.0).cast<double>().matrix());
    dlambda += dpre[i].cwiseProduct(tape.update_terms[l][i] - tape.mean_messages[l][i]).sum();
  }
  lambda_param.grad(0, 0) += dlambda;

  std::vector<Matrix> dprev(n, Matrix::Zero(config_.embed_width, batch));
  for (std::size_t t = 0; t < node_types_.size(); ++t) {
    Parameter& w = params.at(update_key(node_types_[t], layer));
    const Matrix du = lambda * hstack(dpre, nodes_of_type_[t]);
    w.grad.noalias() += du * hstack(prev, nodes_of_type_[t]).transpose();
    split_add(w.value.transpose() * du, nodes_of_type_[t], dprev);
  }

  std::vector<Matrix> dmessages(edge_types_.size());
  for (std::size_t c = 0; c < edge_types_.size(); ++c) {
    dmessages[c] = Matrix::Zero(config_.embed_width,
                                batch * static_cast<Eigen::Index>(sources_of_edge_type_[c].size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (in_edges_[i].empty()) continue;
    const double scale = (1.0 - lambda) / static_cast<double>(in_edges_[i].size());
    for (const auto& [c, pos] : in_edges_[i]) {
      dmessages[static_cast<std::size_t>(c)].middleCols(pos * batch, batch) += scale * dpre[i];
    }
  }
  for (std::size_t c = 0; c < edge_types_.size(); ++c) {
    Parameter& w = params.at(message_key(edge_types_[c], layer));
    w.grad.noalias() += dmessages[c] * hstack(prev, sources_of_edge_type_[c]).transpose();
    split_add(w.value.transpose() * dmessages[c], sources_of_edge_type_[c], dprev);
  }
  grad = std::move(dprev);
}

void GraphEncoder::backward(ParamRegistry& params, const Tape& tape, std::vector<Matrix> grad) const {
  for (int l = config_.layers; l-- > 0;) layer_backward(params, tape, l, grad);
  for (std::size_t t = 0; t < node_types_.size(); ++t) {
    input_modules_[t].backward(params, tape.input_tapes[t], hstack(grad, nodes_of_type_[t]));
  }
}

namespace {

struct TopTape : ForwardTape {
  GraphEncoder::Tape encoder;
  Mlp::Tape head;
  Eigen::Index batch = 0;
};

struct LowTape : ForwardTape {
  GraphEncoder::Tape encoder;
  Mlp::Tape subt, slot_s, prim_s, slot_i, prim_i;
  Eigen::Index batch = 0;
};

}  // namespace

ComNetTop::ComNetTop(const GraphSpec& graph, const ComNetConfig& config, Rng& rng)
    : encoder_(graph, config, params_, rng),
      head_(params_, "head", "top", MlpSpec{{2 * config.embed_width, config.head_hidden, 1}}, rng) {}

Matrix ComNetTop::forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape) const {
  TopTape* t = nullptr;
  if (tape) {
    auto owned = std::make_unique<TopTape>();
    t = owned.get();
    *tape = std::move(owned);
  }
  const GraphSpec& g = encoder_.graph();
  const Eigen::Index batch = input.cols();
  const Eigen::Index d = encoder_.width();
  const std::vector<Matrix> h = encoder_.forward(params_, input, t ? &t->encoder : nullptr);

  Matrix x(2 * d, batch * g.num_subtasks);
  for (int k = 0; k < g.num_subtasks; ++k) {
    auto top = x.block(0, k * batch, d, batch);
    top.setZero();
    for (int s : g.s_nodes(k)) top += h[static_cast<std::size_t>(s)];
    x.block(d, k * batch, d, batch) = h[static_cast<std::size_t>(g.i_node(k))];
  }
  const Matrix out = head_.forward(params_, x, t ? &t->head : nullptr);
  Matrix q(g.num_subtasks, batch);
  for (int k = 0; k < g.num_subtasks; ++k) q.row(k) = out.block(0, k * batch, 1, batch);
  if (t) t->batch = batch;
  return q;
}

void ComNetTop::backward(const ForwardTape& tape, const Matrix& grad_output) {
  const auto& t = dynamic_cast<const TopTape&>(tape);
  const GraphSpec& g = encoder_.graph();
  const Eigen::Index batch = t.batch;
  const Eigen::Index d = encoder_.width();
  Matrix dout(1, batch * g.num_subtasks);
  for (int k = 0; k < g.num_subtasks; ++k) dout.block(0, k * batch, 1, batch) = grad_output.row(k);
  const Matrix dx = head_.backward(params_, t.head, dout);

  std::vector<Matrix> grad(g.nodes.size(), Matrix::Zero(d, batch));
  for (int k = 0; k < g.num_subtasks; ++k) {
    for (int s : g.s_nodes(k)) grad[static_cast<std::size_t>(s)] += dx.block(0, k * batch, d, batch);
    grad[static_cast<std::size_t>(g.i_node(k))] += dx.block(d, k * batch, d, batch);
  }
  encoder_.backward(params_, t.encoder, std::move(grad));
}

ComNetLow::ComNetLow(const GraphSpec& graph, const ComNetConfig& config, Rng& rng)
    : encoder_(graph, config, params_, rng) {
  if (graph.t_node() < 0) throw std::invalid_argument("ComNetLow needs a graph with a T-node");
  const int d = config.embed_width;
  const int hh = config.head_hidden;
  subt_head_ = Mlp(params_, "head", "subt", MlpSpec{{d, hh, graph.num_subtasks}}, rng);
  slot_head_s_ = Mlp(params_, "head", "slot.S", MlpSpec{{d, hh, 1}}, rng);
  prim_head_s_ = Mlp(params_, "head", "prim.S", MlpSpec{{d, hh, 3}}, rng);
  slot_head_i_ = Mlp(params_, "head", "slot.I", MlpSpec{{d, hh, 1}}, rng);
  prim_head_i_ = Mlp(params_, "head", "prim.I", MlpSpec{{d, hh, 5}}, rng);

  block_begin_.assign(graph.nodes.size(), -1);
  int cursor = 0;
  for (const auto& n : graph.nodes) {
    if (n.type == NodeType::S) {
      s_nodes_.push_back(n.id);
      block_begin_[static_cast<std::size_t>(n.id)] = cursor;
      cursor += 3;
    } else if (n.type == NodeType::I) {
      i_nodes_.push_back(n.id);
      block_begin_[static_cast<std::size_t>(n.id)] = cursor;
      cursor += 5;
    }
  }
  num_actions_ = cursor;
}

Matrix ComNetLow::forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape) const {
  LowTape* t = nullptr;
  if (tape) {
    auto owned = std::make_unique<LowTape>();
    t = owned.get();
    *tape = std::move(owned);
  }
  const GraphSpec& g = encoder_.graph();
  const Eigen::Index batch = input.cols();
  const std::vector<Matrix> h = encoder_.forward(params_, input, t ? &t->encoder : nullptr);

  const Matrix q_subt = subt_head_.forward(params_, h[static_cast<std::size_t>(g.t_node())], t ? &t->subt : nullptr);
  const Matrix xs = hstack(h, s_nodes_);
  const Matrix xi = hstack(h, i_nodes_);
  const Matrix slot_s = slot_head_s_.forward(params_, xs, t ? &t->slot_s : nullptr);
  const Matrix prim_s = prim_head_s_.forward(params_, xs, t ? &t->prim_s : nullptr);
  const Matrix slot_i = slot_head_i_.forward(params_, xi, t ? &t->slot_i : nullptr);
  const Matrix prim_i = prim_head_i_.forward(params_, xi, t ? &t->prim_i : nullptr);

  Matrix q(num_actions_, batch);
  const auto fill = [&](const std::vector<int>& ids, const Matrix& slot, const Matrix& prim) {
    for (std::size_t idx = 0; idx < ids.size(); ++idx) {
      const GraphNode& n = g.nodes[static_cast<std::size_t>(ids[idx])];
      const Eigen::Index col = static_cast<Eigen::Index>(idx) * batch;
      const int begin = block_begin_[static_cast<std::size_t>(n.id)];
      for (Eigen::Index a = 0; a < prim.rows(); ++a) {
        q.row(begin + a) = q_subt.row(n.subtask) + slot.block(0, col, 1, batch) + prim.block(a, col, 1, batch);
      }
    }
  };
  fill(s_nodes_, slot_s, prim_s);
  fill(i_nodes_, slot_i, prim_i);
  if (t) t->batch = batch;
  return q;
}

void ComNetLow::backward(const ForwardTape& tape, const Matrix& grad_output) {
  const auto& t = dynamic_cast<const LowTape&>(tape);
  const GraphSpec& g = encoder_.graph();
  const Eigen::Index batch = t.batch;
  const Eigen::Index d = encoder_.width();

  Matrix dsubt = Matrix::Zero(g.num_subtasks, batch);
  const auto gather = [&](const std::vector<int>& ids, Eigen::Index width, Matrix& dslot, Matrix& dprim) {
    dslot.resize(1, batch * static_cast<Eigen::Index>(ids.size()));
    dprim.resize(width, batch * static_cast<Eigen::Index>(ids.size()));
    for (std::size_t idx = 0; idx < ids.size(); ++idx) {
      const GraphNode& n = g.nodes[static_cast<std::size_t>(ids[idx])];
      const Eigen::Index col = static_cast<Eigen::Index>(idx) * batch;
      const auto block = grad_output.middleRows(block_begin_[static_cast<std::size_t>(n.id)], width);
      dprim.middleCols(col, batch) = block;
      const Eigen::RowVectorXd total = block.colwise().sum();
      dslot.middleCols(col, batch) = total;
      dsubt.row(n.subtask) += total;
    }
  };
  Matrix dslot_s, dprim_s, dslot_i, dprim_i;
  gather(s_nodes_, 3, dslot_s, dprim_s);
  gather(i_nodes_, 5, dslot_i, dprim_i);

  std::vector<Matrix> grad(g.nodes.size(), Matrix::Zero(d, batch));
  split_add(slot_head_s_.backward(params_, t.slot_s, dslot_s) + prim_head_s_.backward(params_, t.prim_s, dprim_s),
            s_nodes_, grad);
  split_add(slot_head_i_.backward(params_, t.slot_i, dslot_i) + prim_head_i_.backward(params_, t.prim_i, dprim_i),
            i_nodes_, grad);
  grad[static_cast<std::size_t>(g.t_node())] += subt_head_.backward(params_, t.subt, dsubt);
  encoder_.backward(params_, t.encoder, std::move(grad));
}

}  // namespace compdial
