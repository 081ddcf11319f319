#include "handseg/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "handseg/error.hpp"

namespace handseg {

FlowNetwork::FlowNetwork(int num_nodes)
    : first_arc_(num_nodes, -1), source_cap_(num_nodes, 0.0), sink_cap_(num_nodes, 0.0) {
  if (num_nodes < 0) throw Error(ErrorCode::kInvalidParameter, "negative node count");
}

int FlowNetwork::add_edge(int from, int to, double capacity, double reverse_capacity) {
  if (from < 0 || to < 0 || from >= num_nodes() || to >= num_nodes() || from == to) {
    throw Error(ErrorCode::kInvalidParameter, "invalid flow edge endpoints");
  }
  if (!(capacity >= 0.0) || !(reverse_capacity >= 0.0) || !std::isfinite(capacity) ||
      !std::isfinite(reverse_capacity)) {
    throw Error(ErrorCode::kInvalidParameter, "edge capacities must be finite and >= 0");
  }
  const int forward = num_arcs();
  const int backward = forward + 1;
  arcs_.push_back({to, first_arc_[from], backward, capacity});
  first_arc_[from] = forward;
  arcs_.push_back({from, first_arc_[to], forward, reverse_capacity});
  first_arc_[to] = backward;
  return forward;
}

void FlowNetwork::add_terminal(int node, double source_capacity, double sink_capacity) {
  if (!(source_capacity >= 0.0) || !(sink_capacity >= 0.0) || !std::isfinite(source_capacity) ||
      !std::isfinite(sink_capacity)) {
    throw Error(ErrorCode::kInvalidParameter, "terminal capacities must be finite and >= 0");
  }
  source_cap_[node] += source_capacity;
  sink_cap_[node] += sink_capacity;
}

std::optional<double> FlowNetwork::capacity_between(int from, int to) const {
  std::optional<double> total;
  for (int a = first_arc_[from]; a >= 0; a = arcs_[a].next) {
    if (arcs_[a].head == to) total = total.value_or(0.0) + arcs_[a].capacity;
  }
  return total;
}

double cut_capacity(const FlowNetwork& network, const std::vector<CutSide>& side) {
  double total = 0.0;
  for (int v = 0; v < network.num_nodes(); ++v) {
    if (side[v] == CutSide::kSink) {
      total += network.source_capacity(v);
    } else {
      total += network.sink_capacity(v);
      for (int a = network.first_arc(v); a >= 0; a = network.arc(a).next) {
        if (side[network.arc(a).head] == CutSide::kSink) total += network.arc(a).capacity;
      }
    }
  }
  return total;
}

namespace {

constexpr int kFree = -1;
constexpr int kTerminal = -2;
constexpr int kOrphan = -3;
constexpr int kInfiniteDistance = std::numeric_limits<int>::max();

class BkSolver {
 public:
  explicit BkSolver(const FlowNetwork& net)
      : net_(net),
        n_(net.num_nodes()),
        r_cap_(net.num_arcs()),
        tr_cap_(n_),
        parent_(n_, kFree),
        is_sink_(n_, 0),
        queued_(n_, 0),
        ts_(n_, 0),
        dist_(n_, 0) {
    for (int a = 0; a < net.num_arcs(); ++a) r_cap_[a] = net.arc(a).capacity;
    for (int v = 0; v < n_; ++v) {
      const double s = net.source_capacity(v);
      const double t = net.sink_capacity(v);
      flow_ += std::min(s, t);
      tr_cap_[v] = s - t;
      if (tr_cap_[v] > 0.0) {
        parent_[v] = kTerminal;
        is_sink_[v] = 0;
      } else if (tr_cap_[v] < 0.0) {
        parent_[v] = kTerminal;
        is_sink_[v] = 1;
      }
      if (parent_[v] == kTerminal) {
        dist_[v] = 1;
        set_active(v);
      }
    }
  }

  MinCut run() {
    while (true) {
      const int i = next_active();
      if (i < 0) break;
      const int bridge = grow(i);
      ++time_;
      if (bridge >= 0) {
        augment(bridge);
        adopt_orphans();
        if (parent_[i] != kFree && !queued_[i]) {
          queued_[i] = 1;
          active_.push_front(i);
        }
      }
    }
    return {flow_, cut_sides()};
  }

 private:
  int head(int a) const { return net_.arc(a).head; }
  int sister(int a) const { return net_.arc(a).sister; }
  int tail(int a) const { return head(sister(a)); }

  void set_active(int v) {
    if (!queued_[v]) {
      queued_[v] = 1;
      active_.push_back(v);
    }
  }

  int next_active() {
    while (!active_.empty()) {
      const int v = active_.front();
      active_.pop_front();
      queued_[v] = 0;
      if (parent_[v] != kFree) return v;
    }
    return -1;
  }

  // Expands the tree containing `i`. Returns an arc from a source-tree node
  // to a sink-tree node when the trees touch, otherwise -1.
  int grow(int i) {
    if (!is_sink_[i]) {
      for (int a = net_.first_arc(i); a >= 0; a = net_.arc(a).next) {
        if (r_cap_[a] <= 0.0) continue;
        const int j = head(a);
        if (parent_[j] == kFree) {
          is_sink_[j] = 0;
          parent_[j] = sister(a);
          ts_[j] = ts_[i];
          dist_[j] = dist_[i] + 1;
          set_active(j);
        } else if (is_sink_[j]) {
          return a;
        } else if (ts_[j] <= ts_[i] && dist_[j] > dist_[i]) {
          parent_[j] = sister(a);
          ts_[j] = ts_[i];
          dist_[j] = dist_[i] + 1;
        }
      }
    } else {
      for (int a = net_.first_arc(i); a >= 0; a = net_.arc(a).next) {
        if (r_cap_[sister(a)] <= 0.0) continue;
        const int j = head(a);
        if (parent_[j] == kFree) {
          is_sink_[j] = 1;
          parent_[j] = sister(a);
          ts_[j] = ts_[i];
          dist_[j] = dist_[i] + 1;
          set_active(j);
        } else if (!is_sink_[j]) {
          return sister(a);
        } else if (ts_[j] <= ts_[i] && dist_[j] > dist_[i]) {
          parent_[j] = sister(a);
          ts_[j] = ts_[i];
          dist_[j] = dist_[i] + 1;
        }
      }
    }
    return -1;
  }

  void make_orphan(int v) {
    parent_[v] = kOrphan;
    orphans_.push_back(v);
  }

  void augment(int bridge) {
    double bottleneck = r_cap_[bridge];
    // Source side: parent arcs point toward the root; flow runs root->leaf
    // through their sisters.
    int v = tail(bridge);
    for (;;) {
      const int a = parent_[v];
      if (a == kTerminal) break;
      bottleneck = std::min(bottleneck, r_cap_[sister(a)]);
      v = head(a);
    }
    bottleneck = std::min(bottleneck, tr_cap_[v]);
    v = head(bridge);
    for (;;) {
      const int a = parent_[v];
      if (a == kTerminal) break;
      bottleneck = std::min(bottleneck, r_cap_[a]);
      v = head(a);
    }
    bottleneck = std::min(bottleneck, -tr_cap_[v]);

    r_cap_[sister(bridge)] += bottleneck;
    r_cap_[bridge] -= bottleneck;

    v = tail(bridge);
    for (;;) {
      const int a = parent_[v];
      if (a == kTerminal) break;
      r_cap_[a] += bottleneck;
      r_cap_[sister(a)] -= bottleneck;
      if (r_cap_[sister(a)] <= 0.0) make_orphan(v);
      v = head(a);
    }
    tr_cap_[v] -= bottleneck;
    if (tr_cap_[v] <= 0.0) make_orphan(v);

    v = head(bridge);
    for (;;) {
      const int a = parent_[v];
      if (a == kTerminal) break;
      r_cap_[sister(a)] += bottleneck;
      r_cap_[a] -= bottleneck;
      if (r_cap_[a] <= 0.0) make_orphan(v);
      v = head(a);
    }
    tr_cap_[v] += bottleneck;
    if (tr_cap_[v] >= 0.0) make_orphan(v);

    flow_ += bottleneck;
  }

  // Distance of `j` to its terminal along parent links, or kInfiniteDistance
  // when the chain ends at an orphan. Marks visited nodes with the current
  // timestamp.
  int origin_distance(int start) {
    int d = 0;
    int j = start;
    for (;;) {
      if (ts_[j] == time_) {
        d += dist_[j];
        break;
      }
      const int a = parent_[j];
      ++d;
      if (a == kTerminal) {
        ts_[j] = time_;
        dist_[j] = 1;
        break;
      }
      if (a == kOrphan) return kInfiniteDistance;
      j = head(a);
    }
    int dd = d;
    for (j = start; ts_[j] != time_; j = head(parent_[j])) {
      ts_[j] = time_;
      dist_[j] = dd--;
    }
    return d;
  }

  void process_orphan(int i) {
    const bool sink_tree = is_sink_[i];
    int best_arc = -1;
    int best_dist = kInfiniteDistance;
    for (int a = net_.first_arc(i); a >= 0; a = net_.arc(a).next) {
      const double residual = sink_tree ? r_cap_[a] : r_cap_[sister(a)];
      if (residual <= 0.0) continue;
      const int j = head(a);
      if (static_cast<bool>(is_sink_[j]) != sink_tree || parent_[j] == kFree) continue;
      const int d = origin_distance(j);
      if (d < best_dist) {
        best_dist = d;
        best_arc = a;
      }
    }
    if (best_arc >= 0) {
      parent_[i] = best_arc;
      ts_[i] = time_;
      dist_[i] = best_dist + 1;
      return;
    }
    for (int a = net_.first_arc(i); a >= 0; a = net_.arc(a).next) {
      const int j = head(a);
      if (static_cast<bool>(is_sink_[j]) != sink_tree || parent_[j] == kFree) continue;
      const double residual = sink_tree ? r_cap_[a] : r_cap_[sister(a)];
      if (residual > 0.0) set_active(j);
      const int pa = parent_[j];
      if (pa != kTerminal && pa != kOrphan && head(pa) == i) make_orphan(j);
    }
    parent_[i] = kFree;
  }

  void adopt_orphans() {
    while (!orphans_.empty()) {
      const int v = orphans_.front();
      orphans_.pop_front();
      process_orphan(v);
    }
  }

  std::vector<CutSide> cut_sides() const {
    std::vector<CutSide> side(n_, CutSide::kSource);
    std::vector<int> stack;
    for (int v = 0; v < n_; ++v) {
      if (tr_cap_[v] < 0.0) {
        side[v] = CutSide::kSink;
        stack.push_back(v);
      }
    }
    // Walk residual arcs backwards: u joins the sink side if u->v has
    // residual capacity and v is already there.
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int a = net_.first_arc(v); a >= 0; a = net_.arc(a).next) {
        const int u = head(a);
        if (side[u] == CutSide::kSink) continue;
        if (r_cap_[sister(a)] > 0.0) {
          side[u] = CutSide::kSink;
          stack.push_back(u);
        }
      }
    }
    return side;
  }

  const FlowNetwork& net_;
  int n_;
  std::vector<double> r_cap_;
  std::vector<double> tr_cap_;
  std::vector<int> parent_;
  std::vector<std::uint8_t> is_sink_;
  std::vector<std::uint8_t> queued_;
  std::vector<int> ts_;
  std::vector<int> dist_;
  std::deque<int> active_;
  std::deque<int> orphans_;
  double flow_ = 0.0;
  int time_ = 0;
};

}  // namespace

MinCut max_flow(const FlowNetwork& network) {
  return BkSolver(network).run();
}

}  // namespace handseg
