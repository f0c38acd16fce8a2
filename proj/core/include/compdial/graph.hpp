#pragma once

#include <compare>
#include <string>
#include <vector>

#include "compdial/ontology.hpp"

namespace compdial {

enum class NodeType { S, I, T };

char node_type_char(NodeType type);

/// Edge type is fixed by the endpoint node types.
struct EdgeType {
  NodeType from = NodeType::S;
  NodeType to = NodeType::I;

  std::string str() const;  // e.g. "S>I"

  friend auto operator<=>(const EdgeType&, const EdgeType&) = default;
};

struct GraphNode {
  int id = 0;
  NodeType type = NodeType::S;
  int subtask = -1;  // -1 for the T-node
  int slot = -1;     // informable ordinal for S-nodes, -1 otherwise
  /// Slice of the flat network input read by this node.
  int input_offset = 0;
  int input_size = 0;
};

struct GraphEdge {
  int src = 0;
  int dst = 0;
  EdgeType type;
};

/// Nodes are ordered by subtask, each subtask as [S-nodes..., I-node], with
/// the T-node (low-level graphs only) last.
struct GraphSpec {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  int num_subtasks = 0;
  int input_dim = 0;

  /// Z with z[i][j] = 1 iff there is an edge i -> j.
  std::vector<std::vector<int>> adjacency() const;
  std::vector<NodeType> node_types() const;  // sorted, unique
  std::vector<EdgeType> edge_types() const;  // sorted, unique
  int in_degree(int node) const;

  int i_node(int subtask) const;
  std::vector<int> s_nodes(int subtask) const;
  int t_node() const;  // -1 when absent
};

/// S-nodes <-> own I-node, I-nodes fully interconnected. With `self_loops`
/// every S-node also gets an S>S edge to itself.
GraphSpec build_top_graph(const Ontology& ontology, int top_m, bool self_loops = false);

/// S-nodes <-> own I-node, every I-node <-> the single T-node. The T-node
/// reads the subtask one-hot appended after the belief vector.
GraphSpec build_low_graph(const Ontology& ontology, int top_m);

/// {"version":1,"nodes":[{id,type,subtask,slot}],"edges":[{src,dst,type}]}
std::string graph_to_json(const GraphSpec& graph);

}  // namespace compdial
