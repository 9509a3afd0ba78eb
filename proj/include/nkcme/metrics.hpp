#pragma once

#include "nkcme/cme.hpp"
#include "nkcme/kernels.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nkcme::metrics {

/// Mean |a_(i) - b_(i)| over sorted samples. Equal, nonzero sizes.
double wasserstein1(std::span<const double> a, std::span<const double> b);

/// Linearly interpolated empirical quantile of sorted values at level p.
double interpolated_quantile(std::span<const double> sorted, double p);

/// Quantile interval coverage error. truth[i] is the observed y at point i,
/// samples[i] the generated samples there (at least `bins` of them).
double qice(std::span<const double> truth, const std::vector<std::vector<double>>& samples, int bins = 10);

/// Per-bin coverage fractions r_j behind qice().
std::vector<double> qice_coverage(std::span<const double> truth, const std::vector<std::vector<double>>& samples,
                                  int bins = 10);

/// sqrt(mean_i (truth_i - mean(samples_i))^2).
double rmse(std::span<const double> truth, const std::vector<std::vector<double>>& samples);

struct WeightedAtoms {
  Eigen::VectorXd atoms;
  Eigen::VectorXd weights;
};

/// |sum_a w_a phi(a) - sum_b v_b phi(b)|^2 under kernel k.
double squared_mmd(const WeightedAtoms& a, const WeightedAtoms& b, const kernels::GaussianDensityKernel& k);

/// Equal weights 1/n on the given points.
WeightedAtoms empirical(const Eigen::Ref<const Eigen::VectorXd>& points);

inline WeightedAtoms as_atoms(const cme::CMEmbedding& e) { return {e.atoms, e.weights}; }

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::optional<double> dispersion;
  int n_conditioning_points = 0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

}  // namespace nkcme::metrics
