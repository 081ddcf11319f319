#include "handseg/grabcut.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace handseg {

namespace {

struct NeighborOffset {
  int dx;
  int dy;
  bool diagonal;
};

// Each undirected 8-neighbor pair is visited once through these offsets.
constexpr NeighborOffset kForwardNeighbors[] = {
    {1, 0, false}, {0, 1, false}, {1, 1, true}, {-1, 1, true}};

double squared_distance(Rgb a, Rgb b) {
  const double dr = double(a.r) - b.r;
  const double dg = double(a.g) - b.g;
  const double db = double(a.b) - b.b;
  return dr * dr + dg * dg + db * db;
}

template <typename Fn>
void for_each_neighbor_pair(int width, int height, Fn&& fn) {
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (const auto& off : kForwardNeighbors) {
        const int nx = x + off.dx, ny = y + off.dy;
        if (nx < 0 || nx >= width || ny >= height) continue;
        fn(x, y, nx, ny, off.diagonal);
      }
    }
  }
}

std::vector<Eigen::Vector3d> collect(const ColorFrame& frame, const BinaryMask& labeling,
                                     std::uint8_t value) {
  std::vector<Eigen::Vector3d> out;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (labeling[i] == value) out.push_back(to_vec(frame[i]));
  }
  return out;
}

GmmModel refit(const ColorFrame& frame, const BinaryMask& labeling, std::uint8_t value,
               const GmmModel& current, double regularization) {
  std::vector<Eigen::Vector3d> samples;
  std::vector<int> assignment;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (labeling[i] != value) continue;
    samples.push_back(to_vec(frame[i]));
    assignment.push_back(current.best_component(samples.back()));
  }
  if (samples.empty()) return current;
  return fit_gmm_hard(samples, assignment, current.size(), regularization, &current);
}

}  // namespace

void GrabCutConfig::validate() const {
  if (components < 1) throw Error(ErrorCode::kInvalidParameter, "GrabCut K must be >= 1");
  if (!(gamma > 0.0)) throw Error(ErrorCode::kInvalidParameter, "GrabCut gamma must be > 0");
  if (iterations < 1) {
    throw Error(ErrorCode::kInvalidParameter, "GrabCut iterations must be >= 1");
  }
  if (!(regularization > 0.0)) {
    throw Error(ErrorCode::kInvalidParameter, "GrabCut regularization must be > 0");
  }
}

Trimap make_trimap(const BinaryMask& rough, const SeedRect& rect) {
  Trimap trimap(rough.width(), rough.height(), TrimapState::kBackground);
  for (int y = 0; y < rough.height(); ++y) {
    for (int x = 0; x < rough.width(); ++x) {
      if (!rect.contains(x, y)) continue;
      trimap(x, y) = rough(x, y) ? TrimapState::kForeground : TrimapState::kUnknown;
    }
  }
  return trimap;
}

double contrast_beta(const ColorFrame& frame) {
  double total = 0.0;
  std::size_t pairs = 0;
  for_each_neighbor_pair(frame.width(), frame.height(), [&](int x, int y, int nx, int ny, bool) {
    total += squared_distance(frame(x, y), frame(nx, ny));
    ++pairs;
  });
  if (pairs == 0 || total <= 0.0) return 0.0;
  return 1.0 / (2.0 * total / static_cast<double>(pairs));
}

double nlink_weight(Rgb a, Rgb b, double gamma, double beta, bool diagonal) {
  const double w = gamma * std::exp(-beta * squared_distance(a, b));
  return diagonal ? w / std::numbers::sqrt2 : w;
}

double data_cost(const GmmModel& model, Rgb color) {
  const Eigen::Vector3d z = to_vec(color);
  return -model.component_log_density(model.best_component(z), z);
}

GrabCutNetwork build_network(const ColorFrame& frame, const Trimap& trimap,
                             const GmmModel& foreground, const GmmModel& background,
                             const GrabCutConfig& config, double beta) {
  if (!frame.same_shape(trimap)) {
    throw Error(ErrorCode::kDimensionMismatch, "trimap and frame differ in size");
  }
  const int w = frame.width();
  const int h = frame.height();
  GrabCutNetwork out{FlowNetwork(w * h), 0.0};
  std::vector<double> incident(frame.size(), 0.0);
  for_each_neighbor_pair(w, h, [&](int x, int y, int nx, int ny, bool diagonal) {
    const double weight = nlink_weight(frame(x, y), frame(nx, ny), config.gamma, beta, diagonal);
    const int p = y * w + x;
    const int q = ny * w + nx;
    out.network.add_edge(p, q, weight, weight);
    incident[p] += weight;
    incident[q] += weight;
  });
  out.hard_capacity = 1.0 + *std::max_element(incident.begin(), incident.end());

  for (int p = 0; p < w * h; ++p) {
    switch (trimap[p]) {
      case TrimapState::kForeground:
        out.network.add_terminal(p, 0.0, out.hard_capacity);
        break;
      case TrimapState::kBackground:
        out.network.add_terminal(p, out.hard_capacity, 0.0);
        break;
      case TrimapState::kUnknown: {
        const double fg = data_cost(foreground, frame[p]);
        const double bg = data_cost(background, frame[p]);
        const double shift = std::min(fg, bg);
        out.network.add_terminal(p, fg - shift, bg - shift);
        break;
      }
    }
  }
  return out;
}

double grabcut_energy(const ColorFrame& frame, const Trimap& trimap, const BinaryMask& labeling,
                      const GmmModel& foreground, const GmmModel& background,
                      const GrabCutConfig& config, double beta) {
  double energy = 0.0;
  for (std::size_t p = 0; p < frame.size(); ++p) {
    if (trimap[p] != TrimapState::kUnknown) continue;
    energy += labeling[p] ? data_cost(foreground, frame[p]) : data_cost(background, frame[p]);
  }
  for_each_neighbor_pair(frame.width(), frame.height(),
                         [&](int x, int y, int nx, int ny, bool diagonal) {
                           if (labeling(x, y) == labeling(nx, ny)) return;
                           energy += nlink_weight(frame(x, y), frame(nx, ny), config.gamma, beta,
                                                  diagonal);
                         });
  return energy;
}

GrabCutResult grabcut_refine(const ColorFrame& frame, const BinaryMask& rough,
                             const SeedRect& rect, const GrabCutConfig& config) {
  config.validate();
  if (!frame.same_shape(rough)) {
    throw Error(ErrorCode::kDimensionMismatch, "rough mask and frame differ in size");
  }
  GrabCutResult result;
  result.mask = rough;

  const Trimap trimap = make_trimap(rough, rect);
  BinaryMask labeling(frame.width(), frame.height(), 0);
  for (std::size_t p = 0; p < frame.size(); ++p) {
    labeling[p] = trimap[p] == TrimapState::kForeground ? 1 : 0;
  }
  const auto fg_samples = collect(frame, labeling, 1);
  const auto bg_samples = collect(frame, labeling, 0);
  if (fg_samples.empty() || bg_samples.empty()) {
    result.degenerate_seed = true;
    return result;
  }

  GmmFitOptions options;
  options.components = config.components;
  options.max_iterations = config.init_em_iterations;
  options.regularization = config.regularization;
  options.seed = config.seed;
  result.foreground = fit_gmm(fg_samples, options).model;
  options.seed = config.seed + 1;
  result.background = fit_gmm(bg_samples, options).model;

  const double beta = contrast_beta(frame);
  double energy = grabcut_energy(frame, trimap, labeling, result.foreground, result.background,
                                 config, beta);
  result.energy.push_back(energy);

  for (int iter = 0; iter < config.iterations; ++iter) {
    GmmModel fg = refit(frame, labeling, 1, result.foreground, config.regularization);
    GmmModel bg = refit(frame, labeling, 0, result.background, config.regularization);
    const double refit_energy = grabcut_energy(frame, trimap, labeling, fg, bg, config, beta);
    if (refit_energy <= energy) {
      result.foreground = std::move(fg);
      result.background = std::move(bg);
    }

    const GrabCutNetwork net =
        build_network(frame, trimap, result.foreground, result.background, config, beta);
    const MinCut cut = max_flow(net.network);
    BinaryMask next(frame.width(), frame.height(), 0);
    for (std::size_t p = 0; p < frame.size(); ++p) {
      next[p] = cut.side[p] == CutSide::kSink ? 1 : 0;
    }
    energy = grabcut_energy(frame, trimap, next, result.foreground, result.background, config,
                            beta);
    result.energy.push_back(energy);
    ++result.iterations;
    const bool unchanged = next == labeling;
    labeling = std::move(next);
    if (unchanged) {
      result.converged = true;
      break;
    }
  }
  result.mask = std::move(labeling);
  return result;
}

void resolve_overlap(const ColorFrame& frame, BinaryMask& left, BinaryMask& right,
                     const GmmModel& left_model, const GmmModel& right_model) {
  for (std::size_t p = 0; p < frame.size(); ++p) {
    if (!left[p] || !right[p]) continue;
    const Eigen::Vector3d z = to_vec(frame[p]);
    if (left_model.log_density(z) >= right_model.log_density(z)) {
      right[p] = 0;
    } else {
      left[p] = 0;
    }
  }
}

}  // namespace handseg
