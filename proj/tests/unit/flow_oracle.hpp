#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "handseg/maxflow.hpp"

namespace testutil {

struct EdgeSpec {
  int from, to;
  double cap, rev;
};

struct RandomNetwork {
  int n = 0;
  std::vector<double> src, snk;
  std::vector<EdgeSpec> edges;

  handseg::FlowNetwork build() const {
    handseg::FlowNetwork net(n);
    for (int i = 0; i < n; ++i) net.add_terminal(i, src[i], snk[i]);
    for (const auto& e : edges) net.add_edge(e.from, e.to, e.cap, e.rev);
    return net;
  }

  // Capacity of the cut where bit i of `sink_set` puts node i on the sink side.
  double cut(std::uint32_t sink_set) const {
    double c = 0;
    for (int i = 0; i < n; ++i) {
      const bool t = (sink_set >> i) & 1u;
      c += t ? src[i] : snk[i];
    }
    for (const auto& e : edges) {
      const bool a = (sink_set >> e.from) & 1u, b = (sink_set >> e.to) & 1u;
      if (!a && b) c += e.cap;
      if (a && !b) c += e.rev;
    }
    return c;
  }

  // Exhaustive minimum over all 2^n partitions.
  double brute_min_cut() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t s = 0; s < (1u << n); ++s) best = std::min(best, cut(s));
    return best;
  }
};

inline RandomNetwork random_network(std::mt19937_64& rng, int max_nodes, int max_cap) {
  std::uniform_int_distribution<int> nodes(1, max_nodes), cap(0, max_cap), coin(0, 2);
  RandomNetwork r;
  r.n = nodes(rng);
  r.src.resize(r.n);
  r.snk.resize(r.n);
  for (int i = 0; i < r.n; ++i) {
    r.src[i] = coin(rng) ? cap(rng) : 0;
    r.snk[i] = coin(rng) ? cap(rng) : 0;
  }
  std::uniform_int_distribution<int> pick(0, r.n - 1);
  const int m = r.n * 2;
  for (int k = 0; k < m && r.n > 1; ++k) {
    const int a = pick(rng), b = pick(rng);
    if (a == b) continue;
    r.edges.push_back({a, b, double(cap(rng)), coin(rng) ? double(cap(rng)) : 0.0});
  }
  return r;
}

}  // namespace testutil
