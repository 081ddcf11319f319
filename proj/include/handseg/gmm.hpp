#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "handseg/image.hpp"

namespace handseg {

struct GaussianComponent {
  double weight = 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
  // Cached from covariance by GmmModel::refresh().
  Eigen::Matrix3d inverse = Eigen::Matrix3d::Identity();
  double log_norm = 0.0;  // -0.5 * (3 log 2pi + log det covariance)
};

// Mixture of full-covariance Gaussians over RGB.
class GmmModel {
 public:
  GmmModel() = default;
  explicit GmmModel(std::vector<GaussianComponent> components);

  int size() const noexcept { return static_cast<int>(components_.size()); }
  const GaussianComponent& component(int k) const { return components_[k]; }
  const std::vector<GaussianComponent>& components() const noexcept { return components_; }

  // log(weight_k * N(x | component k)); -inf for zero-weight components.
  double component_log_density(int k, const Eigen::Vector3d& x) const;
  double log_density(const Eigen::Vector3d& x) const;
  // Component with the highest weighted density; lowest index on ties.
  int best_component(const Eigen::Vector3d& x) const;

 private:
  void refresh();

  std::vector<GaussianComponent> components_;
};

inline Eigen::Vector3d to_vec(Rgb c) { return {double(c.r), double(c.g), double(c.b)}; }

struct GmmFitOptions {
  int components = 5;
  int max_iterations = 100;
  double tolerance = 1e-9;       // relative log-likelihood improvement to stop
  double regularization = 1.0;   // lambda added to every covariance diagonal
  std::uint64_t seed = 0;
};

struct GmmFit {
  GmmModel model;
  // Total log-likelihood after initialization and after each accepted EM step.
  std::vector<double> log_likelihood;
  bool reduced_components = false;
};

// EM from a k-means++ initialization. With fewer samples than components the
// component count drops to the sample count and `reduced_components` is set.
// An EM step that would lower the likelihood (possible because of the
// covariance regularization) is rejected and ends the fit, so the returned
// trace is non-decreasing.
GmmFit fit_gmm(std::span<const Eigen::Vector3d> samples, const GmmFitOptions& options);
GmmFit fit_gmm(std::span<const Rgb> pixels, const GmmFitOptions& options);

// Maximum-likelihood parameters for a fixed hard assignment of samples to
// `num_components` components (covariance regularized by `regularization`).
// Components left without samples get weight 0 and keep `previous` params.
GmmModel fit_gmm_hard(std::span<const Eigen::Vector3d> samples, std::span<const int> assignment,
                      int num_components, double regularization, const GmmModel* previous);

double total_log_likelihood(const GmmModel& model, std::span<const Eigen::Vector3d> samples);

}  // namespace handseg
