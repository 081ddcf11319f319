#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace handseg {

enum class CutSide : std::uint8_t { kSource = 0, kSink = 1 };

// Directed capacity graph with implicit source and sink terminals. Non-terminal
// nodes are 0..num_nodes-1; every n-link is stored as an arc pair so the
// residual graph is available to the solver.
class FlowNetwork {
 public:
  struct Arc {
    int head = 0;
    int next = -1;     // next arc leaving the same tail
    int sister = 0;    // reverse arc
    double capacity = 0.0;
  };

  explicit FlowNetwork(int num_nodes);

  int num_nodes() const noexcept { return static_cast<int>(first_arc_.size()); }
  int num_arcs() const noexcept { return static_cast<int>(arcs_.size()); }

  // Adds from->to with `capacity` and to->from with `reverse_capacity`.
  // Returns the index of the forward arc.
  int add_edge(int from, int to, double capacity, double reverse_capacity = 0.0);
  // Accumulates terminal capacities source->node and node->sink.
  void add_terminal(int node, double source_capacity, double sink_capacity);

  double source_capacity(int node) const { return source_cap_[node]; }
  double sink_capacity(int node) const { return sink_cap_[node]; }
  const Arc& arc(int index) const { return arcs_[index]; }
  int first_arc(int node) const { return first_arc_[node]; }
  int tail(int arc_index) const { return arcs_[arcs_[arc_index].sister].head; }
  // Sum of capacities of arcs from->to; nullopt when no arc links them.
  std::optional<double> capacity_between(int from, int to) const;

 private:
  std::vector<int> first_arc_;
  std::vector<Arc> arcs_;
  std::vector<double> source_cap_;
  std::vector<double> sink_cap_;
};

struct MinCut {
  double flow = 0.0;
  // Nodes that can still reach the sink in the final residual graph are on
  // the sink side; all others (including isolated nodes) are on the source
  // side.
  std::vector<CutSide> side;
};

// Exact maximum flow (Boykov-Kolmogorov augmenting trees). Capacities must be
// finite and non-negative.
MinCut max_flow(const FlowNetwork& network);

// Capacity of the s/t cut induced by `side`.
double cut_capacity(const FlowNetwork& network, const std::vector<CutSide>& side);

}  // namespace handseg
