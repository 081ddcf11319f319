#include "handseg/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "handseg/color.hpp"

namespace handseg {

FeatureVector extract_features(const ColorFrame& frame, int x, int y) {
  if (!frame.in_bounds(x, y)) {
    throw Error(ErrorCode::kOutOfRange, "feature coordinates outside the frame");
  }
  const Rgb c = frame(x, y);
  const HsvPixel hsv = rgb_to_hsv(c);
  const Xyz xyz = rgb_to_xyz(c);
  const Lab lab = xyz_to_lab(xyz);
  const double sx = frame.width() > 1 ? double(x) / (frame.width() - 1) : 0.0;
  const double sy = frame.height() > 1 ? double(y) / (frame.height() - 1) : 0.0;
  return {c.r / 255.0,
          c.g / 255.0,
          c.b / 255.0,
          hsv.h / 180.0,
          hsv.s / 255.0,
          hsv.v / 255.0,
          xyz.x / kD65White.x,
          xyz.y / kD65White.y,
          xyz.z / kD65White.z,
          lab.l / 100.0,
          (lab.a + 128.0) / 255.0,
          (lab.b + 128.0) / 255.0,
          sx,
          sy};
}

std::vector<FeatureVector> extract_all_features(const ColorFrame& frame) {
  std::vector<FeatureVector> out;
  out.reserve(frame.size());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) out.push_back(extract_features(frame, x, y));
  }
  return out;
}

namespace {

double dot(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  for (int k = 0; k < kFeatureDim; ++k) s += a[k] * b[k];
  return s;
}

// Moves the bias to the nearest minimizer of the hinge sum for fixed w. The
// hinge sum is piecewise linear in b with slope -P + (#breakpoints left of b),
// so the minimizers are [bp_(P), bp_(P+1)] of the sorted breakpoints y - w.x.
double polish_bias(const SvmModel& model, std::span<const FeatureVector> samples,
                   std::span<const int> labels, double bias) {
  std::vector<double> breakpoints(samples.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    breakpoints[i] = labels[i] - (model.decision(samples[i]) - model.bias);
    if (labels[i] > 0) ++positives;
  }
  std::sort(breakpoints.begin(), breakpoints.end());
  const double lo = breakpoints[positives - 1];
  const double hi = breakpoints[positives];
  return std::clamp(bias, lo, hi);
}

}  // namespace

double svm_objective(const SvmModel& model, std::span<const FeatureVector> samples,
                     std::span<const int> labels) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    hinge += std::max(0.0, 1.0 - labels[i] * model.decision(samples[i]));
  }
  return 0.5 * dot(model.weights, model.weights) + model.c * hinge;
}

SvmModel train_svm(std::span<const FeatureVector> samples, std::span<const int> labels,
                   const SvmOptions& options, SvmTrainInfo* info) {
  if (samples.size() != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "sample and label counts differ");
  }
  if (!(options.c > 0.0)) throw Error(ErrorCode::kInvalidParameter, "SVM C must be > 0");
  bool has_pos = false, has_neg = false;
  for (int y : labels) {
    if (y == 1) {
      has_pos = true;
    } else if (y == -1) {
      has_neg = true;
    } else {
      throw Error(ErrorCode::kInvalidParameter, "SVM labels must be +1 or -1");
    }
  }
  if (!has_pos || !has_neg) {
    throw Error(ErrorCode::kSingleClass, "SVM training needs both classes");
  }

  // Primal-dual interior point (Mehrotra predictor-corrector) on
  //   min 0.5|w|^2 + C sum(xi)  s.t.  y(w.x + b) + xi - 1 = s >= 0, xi >= 0
  // with z = (w, b). Eliminating the per-sample variables leaves a
  // (d+1)x(d+1) system per step, so each iteration is O(n d^2).
  constexpr int m = kFeatureDim + 1;
  using Vec = Eigen::VectorXd;
  using Mat = Eigen::Matrix<double, m, m>;
  using Zvec = Eigen::Matrix<double, m, 1>;
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  const double c = options.c;
  Eigen::Matrix<double, Eigen::Dynamic, m> a(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < kFeatureDim; ++k) a(i, k) = labels[i] * samples[i][k];
    a(i, kFeatureDim) = labels[i];
  }
  Zvec h_diag = Zvec::Ones();
  h_diag(kFeatureDim) = 0.0;  // bias is not regularized

  Zvec z = Zvec::Zero();
  Vec alpha = Vec::Constant(n, c / 2), mu = Vec::Constant(n, c / 2);
  Vec s = Vec::Ones(n), xi = Vec::Ones(n);

  const auto max_step = [](const Vec& v, const Vec& dv) {
    double t = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (dv[i] < 0) t = std::min(t, -v[i] / dv[i]);
    }
    return t;
  };

  // Degenerate problems can stall short of the residual targets while the
  // complementarity products underflow; the best finite iterate is kept.
  Zvec best_z = z;
  double best_primal = std::numeric_limits<double>::infinity();

  SvmTrainInfo local;
  for (; local.iterations < options.max_iterations; ++local.iterations) {
    const Vec az = a * z;
    const Zvec r_d = h_diag.cwiseProduct(z) - a.transpose() * alpha;
    const Vec r_c = Vec::Constant(n, c) - alpha - mu;
    const Vec r_p = az + xi - Vec::Ones(n) - s;
    const double gap = alpha.dot(s) + mu.dot(xi);
    const double nu = gap / (2.0 * n);

    double primal = 0.5 * z.head<kFeatureDim>().squaredNorm();
    for (Eigen::Index i = 0; i < n; ++i) primal += c * std::max(0.0, 1.0 - az[i]);
    if (!std::isfinite(primal) || !std::isfinite(gap) || !(gap > 0.0)) break;
    if (primal < best_primal) {
      best_primal = primal;
      best_z = z;
    }
    const double scale = 1.0 + primal;
    if (gap / scale < options.tolerance && r_p.lpNorm<Eigen::Infinity>() < 1e-9 &&
        r_d.lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + c) &&
        r_c.lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + c)) {
      local.converged = true;
      break;
    }

    const Vec d = xi.cwiseQuotient(mu) + s.cwiseQuotient(alpha);
    const Vec dinv = d.cwiseInverse();
    Mat lhs = a.transpose() * dinv.asDiagonal() * a;
    lhs.diagonal() += h_diag;
    const Eigen::LDLT<Mat> ldlt(lhs);

    struct Step {
      Zvec z;
      Vec alpha, s, mu, xi;
    };
    const auto solve = [&](const Vec& r_as, const Vec& r_mx) {
      Step st;
      const Vec g = -r_p + (r_mx + xi.cwiseProduct(r_c)).cwiseQuotient(mu) -
                    r_as.cwiseQuotient(alpha);
      st.z = ldlt.solve(-r_d + a.transpose() * dinv.cwiseProduct(g));
      st.alpha = dinv.cwiseProduct(g - a * st.z);
      st.s = -(r_as + s.cwiseProduct(st.alpha)).cwiseQuotient(alpha);
      st.mu = r_c - st.alpha;
      st.xi = -(r_mx + xi.cwiseProduct(st.mu)).cwiseQuotient(mu);
      return st;
    };
    const auto step_length = [&](const Step& st) {
      return std::min({max_step(alpha, st.alpha), max_step(s, st.s), max_step(mu, st.mu),
                       max_step(xi, st.xi)});
    };

    const Vec as = alpha.cwiseProduct(s), mx = mu.cwiseProduct(xi);
    const Step aff = solve(as, mx);
    const double t_aff = step_length(aff);
    const double gap_aff = (alpha + t_aff * aff.alpha).dot(s + t_aff * aff.s) +
                           (mu + t_aff * aff.mu).dot(xi + t_aff * aff.xi);
    const double sigma = std::pow(gap_aff / gap, 3);
    const Vec target = Vec::Constant(n, sigma * nu);
    const Step st = solve(as + aff.alpha.cwiseProduct(aff.s) - target,
                          mx + aff.mu.cwiseProduct(aff.xi) - target);
    const double t = std::min(1.0, 0.995 * step_length(st));
    if (!std::isfinite(t) || !st.z.allFinite() || !st.alpha.allFinite() ||
        !st.s.allFinite() || !st.mu.allFinite() || !st.xi.allFinite()) {
      break;
    }
    z += t * st.z;
    alpha += t * st.alpha;
    s += t * st.s;
    mu += t * st.mu;
    xi += t * st.xi;
  }

  if (!local.converged && std::isfinite(best_primal)) z = best_z;
  FeatureVector w{};
  for (int k = 0; k < kFeatureDim; ++k) w[k] = z[k];

  SvmModel model;
  model.weights = w;
  model.c = c;
  model.bias = 0.0;
  model.bias = polish_bias(model, samples, labels, z[kFeatureDim]);
  if (info != nullptr) *info = local;
  return model;
}

namespace {

std::vector<std::size_t> sample_indices(std::vector<std::size_t> pool, int cap,
                                        std::mt19937_64& rng) {
  if (static_cast<int>(pool.size()) <= cap) return pool;
  std::vector<std::size_t> out;
  out.reserve(cap);
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), cap, rng);
  return out;
}

HandRefinement refine_hand(const std::vector<FeatureVector>& features, const BinaryMask& mask,
                           const RefineConfig& config, std::uint64_t seed,
                           std::vector<double>& decision) {
  HandRefinement out;
  std::vector<std::size_t> pos, neg;
  for (std::size_t p = 0; p < mask.size(); ++p) (mask[p] ? pos : neg).push_back(p);
  out.input_pixels = static_cast<int>(pos.size());
  out.present = !pos.empty();
  decision.assign(mask.size(), -std::numeric_limits<double>::infinity());
  if (!out.present) return out;
  if (neg.empty()) {
    // Nothing to separate from; the GrabCut mask stands.
    for (std::size_t p : pos) decision[p] = 0.0;
    out.kept_pixels = out.input_pixels;
    return out;
  }
  std::mt19937_64 rng(seed);
  const auto pos_s = sample_indices(pos, config.max_samples_per_side, rng);
  const auto neg_s = sample_indices(neg, config.max_samples_per_side, rng);
  std::vector<FeatureVector> x;
  std::vector<int> y;
  x.reserve(pos_s.size() + neg_s.size());
  for (std::size_t p : pos_s) {
    x.push_back(features[p]);
    y.push_back(1);
  }
  for (std::size_t p : neg_s) {
    x.push_back(features[p]);
    y.push_back(-1);
  }
  out.model = train_svm(x, y, config.svm);
  out.trained = true;
  for (std::size_t p : pos) {
    const double d = out.model.decision(features[p]);
    if (d >= 0.0) {
      decision[p] = d;
      ++out.kept_pixels;
    }
  }
  return out;
}

}  // namespace

RefineResult refine_labels(const ColorFrame& frame, const BinaryMask& left,
                           const BinaryMask& right, const RefineConfig& config) {
  if (!frame.same_shape(left) || !frame.same_shape(right)) {
    throw Error(ErrorCode::kDimensionMismatch, "GrabCut masks and frame differ in size");
  }
  RefineResult result;
  result.labels = LabelMask(frame.width(), frame.height(), Label::kBackground);
  const auto features = extract_all_features(frame);
  std::vector<double> left_d, right_d;
  result.left = refine_hand(features, left, config, config.seed, left_d);
  result.right = refine_hand(features, right, config, config.seed + 1, right_d);
  constexpr double kAbsent = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < frame.size(); ++p) {
    const bool l = left_d[p] != kAbsent;
    const bool r = right_d[p] != kAbsent;
    if (l && r) {
      result.labels[p] = left_d[p] >= right_d[p] ? Label::kLeft : Label::kRight;
    } else if (l) {
      result.labels[p] = Label::kLeft;
    } else if (r) {
      result.labels[p] = Label::kRight;
    }
  }
  return result;
}

}  // namespace handseg
