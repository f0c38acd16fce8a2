#include "compdial/graph.hpp"

#include <algorithm>
#include <set>

#include "compdial/belief.hpp"
#include "json.hpp"

namespace compdial {

char node_type_char(NodeType type) {
  switch (type) {
    case NodeType::S:
      return 'S';
    case NodeType::I:
      return 'I';
    case NodeType::T:
      return 'T';
  }
  return '?';
}

std::string EdgeType::str() const {
  return std::string{node_type_char(from), '>', node_type_char(to)};
}

std::vector<std::vector<int>> GraphSpec::adjacency() const {
  std::vector<std::vector<int>> z(nodes.size(), std::vector<int>(nodes.size(), 0));
  for (const auto& e : edges) z[static_cast<std::size_t>(e.src)][static_cast<std::size_t>(e.dst)] = 1;
  return z;
}

std::vector<NodeType> GraphSpec::node_types() const {
  std::set<NodeType> types;
  for (const auto& n : nodes) types.insert(n.type);
  return {types.begin(), types.end()};
}

std::vector<EdgeType> GraphSpec::edge_types() const {
  std::set<EdgeType> types;
  for (const auto& e : edges) types.insert(e.type);
  return {types.begin(), types.end()};
}

int GraphSpec::in_degree(int node) const {
  return static_cast<int>(std::count_if(edges.begin(), edges.end(), [&](const GraphEdge& e) { return e.dst == node; }));
}

int GraphSpec::i_node(int subtask) const {
  for (const auto& n : nodes) {
    if (n.type == NodeType::I && n.subtask == subtask) return n.id;
  }
  return -1;
}

std::vector<int> GraphSpec::s_nodes(int subtask) const {
  std::vector<int> out;
  for (const auto& n : nodes) {
    if (n.type == NodeType::S && n.subtask == subtask) out.push_back(n.id);
  }
  return out;
}

int GraphSpec::t_node() const {
  for (const auto& n : nodes) {
    if (n.type == NodeType::T) return n.id;
  }
  return -1;
}

namespace {

void add_pair(GraphSpec& g, int a, int b) {
  const auto& na = g.nodes[static_cast<std::size_t>(a)];
  const auto& nb = g.nodes[static_cast<std::size_t>(b)];
  g.edges.push_back({a, b, {na.type, nb.type}});
  g.edges.push_back({b, a, {nb.type, na.type}});
}

GraphSpec subtask_nodes(const Ontology& ontology, int top_m) {
  const BeliefLayout layout(ontology, top_m);
  GraphSpec g;
  g.num_subtasks = ontology.num_subtasks();
  g.input_dim = layout.size();
  for (int k = 0; k < g.num_subtasks; ++k) {
    const int first = static_cast<int>(g.nodes.size());
    for (int j = 0; j < layout.num_informable(k); ++j) {
      g.nodes.push_back({static_cast<int>(g.nodes.size()), NodeType::S, k, j, layout.slot_offset(k, j),
                         layout.slot_block_size()});
    }
    const int inode = static_cast<int>(g.nodes.size());
    g.nodes.push_back({inode, NodeType::I, k, -1, layout.independent_offset(k), BeliefLayout::kIndependentSize});
    for (int s = first; s < inode; ++s) add_pair(g, s, inode);
  }
  return g;
}

}  // namespace

GraphSpec build_top_graph(const Ontology& ontology, int top_m, bool self_loops) {
  GraphSpec g = subtask_nodes(ontology, top_m);
  for (int a = 0; a < g.num_subtasks; ++a) {
    for (int b = a + 1; b < g.num_subtasks; ++b) add_pair(g, g.i_node(a), g.i_node(b));
  }
  if (self_loops) {
    for (const auto& n : g.nodes) {
      if (n.type == NodeType::S) g.edges.push_back({n.id, n.id, {NodeType::S, NodeType::S}});
    }
  }
  return g;
}

GraphSpec build_low_graph(const Ontology& ontology, int top_m) {
  GraphSpec g = subtask_nodes(ontology, top_m);
  const int t = static_cast<int>(g.nodes.size());
  g.nodes.push_back({t, NodeType::T, -1, -1, g.input_dim, g.num_subtasks});
  g.input_dim += g.num_subtasks;
  for (int k = 0; k < g.num_subtasks; ++k) add_pair(g, g.i_node(k), t);
  return g;
}

std::string graph_to_json(const GraphSpec& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : graph.nodes) {
    nodes.push_back({{"id", n.id},
                     {"type", std::string(1, node_type_char(n.type))},
                     {"subtask", n.subtask >= 0 ? nlohmann::json(n.subtask) : nlohmann::json(nullptr)},
                     {"slot", n.slot >= 0 ? nlohmann::json(n.slot) : nlohmann::json(nullptr)}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"type", e.type.str()}});
  nlohmann::json doc{{"version", 1}, {"nodes", nodes}, {"edges", edges}};
  return doc.dump(2) + "\n";
}

}  // namespace compdial
