#pragma once

#include <memory>
#include <string>
#include <vector>

#include "compdial/graph.hpp"
#include "compdial/qfunction.hpp"
#include "compdial/tensor.hpp"

namespace compdial {

struct ComNetConfig {
  int embed_width = 32;
  int layers = 2;
  int head_hidden = 32;
  /// Adds S>S self-loop edges to the top-level graph (a fourth edge type).
  bool top_self_loops = false;
};

/// Input module and L extraction layers over a typed graph. Parameters are
/// shared per node type (input, update) and per edge type (message); the
/// gate lambda is one scalar per layer.
class GraphEncoder {
 public:
  struct Tape {
    std::vector<Matrix> type_inputs;                // stacked raw inputs per node type
    std::vector<Mlp::Tape> input_tapes;             // per node type
    std::vector<std::vector<Matrix>> h;             // [layer 0..L][node]
    std::vector<std::vector<Matrix>> update_terms;  // [layer 1..L][node]: W_p h^{l-1}
    std::vector<std::vector<Matrix>> mean_messages; // [layer 1..L][node]
    std::vector<std::vector<Matrix>> pre;           // [layer 1..L][node]
  };

  GraphEncoder() = default;
  GraphEncoder(const GraphSpec& graph, const ComNetConfig& config, ParamRegistry& params, Rng& rng);

  /// Final node embeddings, one (width x batch) block per node.
  std::vector<Matrix> forward(const ParamRegistry& params, const Matrix& input, Tape* tape = nullptr) const;
  /// `grad` holds d(loss)/d(final embedding) per node; accumulates into params.
  void backward(ParamRegistry& params, const Tape& tape, std::vector<Matrix> grad) const;

  /// h^0 per node.
  std::vector<Matrix> embed(const ParamRegistry& params, const Matrix& input, Tape* tape = nullptr) const;
  /// One extraction layer (layer is 0-based).
  std::vector<Matrix> propagate(const ParamRegistry& params, int layer, const std::vector<Matrix>& h,
                                Tape* tape = nullptr) const;

  const GraphSpec& graph() const { return graph_; }
  int width() const { return config_.embed_width; }
  int layers() const { return config_.layers; }

  static ParamKey input_key(NodeType type, const std::string& name);
  static ParamKey message_key(const EdgeType& type, int layer);
  static ParamKey update_key(NodeType type, int layer);
  static ParamKey lambda_key(int layer);

 private:
  void layer_backward(ParamRegistry& params, const Tape& tape, int layer, std::vector<Matrix>& grad) const;

  GraphSpec graph_;
  ComNetConfig config_;
  std::vector<NodeType> node_types_;
  std::vector<std::vector<int>> nodes_of_type_;  // parallel to node_types_
  std::vector<Mlp> input_modules_;                // parallel to node_types_
  std::vector<EdgeType> edge_types_;
  std::vector<std::vector<int>> sources_of_edge_type_;  // distinct sources, parallel to edge_types_
  // Per node: (edge type index, position of the source inside sources_of_edge_type_).
  std::vector<std::vector<std::pair<int, int>>> in_edges_;
};

/// Top-level ComNet: q_top[k] = O_top([sum of subtask k's S embeddings ; I embedding]).
class ComNetTop : public QFunction {
 public:
  ComNetTop(const GraphSpec& graph, const ComNetConfig& config, Rng& rng);

  std::string family() const override { return "comnet"; }
  int input_dim() const override { return encoder_.graph().input_dim; }
  int output_dim() const override { return encoder_.graph().num_subtasks; }

  Matrix forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape = nullptr) const override;
  void backward(const ForwardTape& tape, const Matrix& grad_output) override;

  ParamRegistry& params() override { return params_; }
  const ParamRegistry& params() const override { return params_; }
  std::unique_ptr<QFunction> clone() const override { return std::make_unique<ComNetTop>(*this); }

  const GraphEncoder& encoder() const { return encoder_; }

 private:
  ParamRegistry params_;
  GraphEncoder encoder_;
  Mlp head_;
};

/// Low-level ComNet over the graph with a T-node. The block of node (k, i) is
/// q_subt[k] + O_slot(h_{k,i}) + O_prim(h_{k,i}); blocks follow node order, so
/// the output matches the flat primitive action layout.
class ComNetLow : public QFunction {
 public:
  ComNetLow(const GraphSpec& graph, const ComNetConfig& config, Rng& rng);

  std::string family() const override { return "comnet"; }
  int input_dim() const override { return encoder_.graph().input_dim; }
  int output_dim() const override { return num_actions_; }

  Matrix forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape = nullptr) const override;
  void backward(const ForwardTape& tape, const Matrix& grad_output) override;

  ParamRegistry& params() override { return params_; }
  const ParamRegistry& params() const override { return params_; }
  std::unique_ptr<QFunction> clone() const override { return std::make_unique<ComNetLow>(*this); }

  const GraphEncoder& encoder() const { return encoder_; }

 private:
  ParamRegistry params_;
  GraphEncoder encoder_;
  Mlp subt_head_;
  Mlp slot_head_s_, prim_head_s_, slot_head_i_, prim_head_i_;
  std::vector<int> s_nodes_, i_nodes_;
  std::vector<int> block_begin_;  // first action row of every node (graph order), -1 for T
  int num_actions_ = 0;
};

}  // namespace compdial
