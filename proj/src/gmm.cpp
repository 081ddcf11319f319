#include "handseg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

namespace handseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) return kNegInf;
  const double m = *std::max_element(v.begin(), v.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

GmmModel::GmmModel(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  refresh();
}

void GmmModel::refresh() {
  for (auto& c : components_) {
    Eigen::LLT<Eigen::Matrix3d> llt(c.covariance);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kInvalidParameter, "GMM covariance is not positive definite");
    }
    const Eigen::Matrix3d l = llt.matrixL();
    const double log_det = 2.0 * (std::log(l(0, 0)) + std::log(l(1, 1)) + std::log(l(2, 2)));
    c.inverse = llt.solve(Eigen::Matrix3d::Identity());
    c.log_norm = -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + log_det);
  }
}

double GmmModel::component_log_density(int k, const Eigen::Vector3d& x) const {
  const auto& c = components_[k];
  if (c.weight <= 0.0) return kNegInf;
  const Eigen::Vector3d d = x - c.mean;
  return std::log(c.weight) + c.log_norm - 0.5 * d.dot(c.inverse * d);
}

double GmmModel::log_density(const Eigen::Vector3d& x) const {
  std::vector<double> terms(components_.size());
  for (int k = 0; k < size(); ++k) terms[k] = component_log_density(k, x);
  return log_sum_exp(terms);
}

int GmmModel::best_component(const Eigen::Vector3d& x) const {
  if (components_.empty()) throw Error(ErrorCode::kEmptyInput, "empty GMM");
  int best = 0;
  double best_value = kNegInf;
  for (int k = 0; k < size(); ++k) {
    const double v = component_log_density(k, x);
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return best;
}

double total_log_likelihood(const GmmModel& model, std::span<const Eigen::Vector3d> samples) {
  double total = 0.0;
  for (const auto& x : samples) total += model.log_density(x);
  return total;
}

GmmModel fit_gmm_hard(std::span<const Eigen::Vector3d> samples, std::span<const int> assignment,
                      int num_components, double regularization, const GmmModel* previous) {
  std::vector<double> count(num_components, 0.0);
  std::vector<Eigen::Vector3d> sum(num_components, Eigen::Vector3d::Zero());
  std::vector<Eigen::Matrix3d> outer(num_components, Eigen::Matrix3d::Zero());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int k = assignment[i];
    count[k] += 1.0;
    sum[k] += samples[i];
  }
  std::vector<Eigen::Vector3d> mean(num_components);
  for (int k = 0; k < num_components; ++k) {
    mean[k] = count[k] > 0 ? Eigen::Vector3d(sum[k] / count[k]) : Eigen::Vector3d::Zero();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int k = assignment[i];
    const Eigen::Vector3d d = samples[i] - mean[k];
    outer[k] += d * d.transpose();
  }
  std::vector<GaussianComponent> comps(num_components);
  const double n = static_cast<double>(samples.size());
  for (int k = 0; k < num_components; ++k) {
    if (count[k] > 0) {
      comps[k].weight = count[k] / n;
      comps[k].mean = mean[k];
      comps[k].covariance =
          outer[k] / count[k] + regularization * Eigen::Matrix3d::Identity();
    } else {
      if (previous != nullptr && k < previous->size()) {
        comps[k].mean = previous->component(k).mean;
        comps[k].covariance = previous->component(k).covariance;
      } else {
        comps[k].covariance = regularization * Eigen::Matrix3d::Identity();
      }
      comps[k].weight = 0.0;
    }
  }
  return GmmModel(std::move(comps));
}

namespace {

// k-means++ seeding followed by Lloyd iterations. Returns the assignment and
// the number of distinct centers found (may be below `k` for duplicate data).
std::vector<int> kmeans(std::span<const Eigen::Vector3d> samples, int& k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = samples.size();
  std::vector<Eigen::Vector3d> centers;
  centers.push_back(samples[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centers) best = std::min(best, (samples[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) break;
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (d2[pick] <= 0.0) break;
    centers.push_back(samples[pick]);
  }
  k = static_cast<int>(centers.size());

  std::vector<int> assignment(n, -1);
  for (int iter = 0; iter < 20; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::max();
      for (int c = 0; c < k; ++c) {
        const double d = (samples[i] - centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Eigen::Vector3d> sum(k, Eigen::Vector3d::Zero());
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assignment[i]] += samples[i];
      ++count[assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) centers[c] = sum[c] / count[c];
    }
  }
  return assignment;
}

}  // namespace

GmmFit fit_gmm(std::span<const Eigen::Vector3d> samples, const GmmFitOptions& options) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyInput, "GMM fit needs at least one sample");
  if (options.components < 1) {
    throw Error(ErrorCode::kInvalidParameter, "GMM needs at least one component");
  }
  if (!(options.regularization > 0.0)) {
    throw Error(ErrorCode::kInvalidParameter, "GMM regularization must be > 0");
  }
  GmmFit fit;
  int k = std::min<int>(options.components, static_cast<int>(samples.size()));
  const int requested = options.components;
  const std::vector<int> assignment = kmeans(samples, k, options.seed);
  fit.reduced_components = k < requested;
  fit.model = fit_gmm_hard(samples, assignment, k, options.regularization, nullptr);

  const std::size_t n = samples.size();
  std::vector<double> resp(n * k);
  std::vector<double> terms(k);
  double current = total_log_likelihood(fit.model, samples);
  fit.log_likelihood.push_back(current);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // E-step.
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) terms[c] = fit.model.component_log_density(c, samples[i]);
      const double norm = log_sum_exp(terms);
      for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(terms[c] - norm);
    }
    // M-step.
    std::vector<GaussianComponent> comps(k);
    for (int c = 0; c < k; ++c) {
      double nk = 0.0;
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * k + c];
        mean += resp[i * k + c] * samples[i];
      }
      if (nk <= 1e-12) {
        comps[c] = fit.model.component(c);
        comps[c].weight = 0.0;
        continue;
      }
      mean /= nk;
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d d = samples[i] - mean;
        cov += resp[i * k + c] * (d * d.transpose());
      }
      comps[c].weight = nk / static_cast<double>(n);
      comps[c].mean = mean;
      comps[c].covariance = cov / nk + options.regularization * Eigen::Matrix3d::Identity();
    }
    GmmModel candidate(std::move(comps));
    const double next = total_log_likelihood(candidate, samples);
    if (next < current) break;
    fit.model = std::move(candidate);
    fit.log_likelihood.push_back(next);
    const bool converged = next - current <= options.tolerance * std::max(1.0, std::abs(current));
    current = next;
    if (converged) break;
  }
  return fit;
}

GmmFit fit_gmm(std::span<const Rgb> pixels, const GmmFitOptions& options) {
  std::vector<Eigen::Vector3d> samples;
  samples.reserve(pixels.size());
  for (const Rgb& p : pixels) samples.push_back(to_vec(p));
  return fit_gmm(std::span<const Eigen::Vector3d>(samples), options);
}

}  // namespace handseg
