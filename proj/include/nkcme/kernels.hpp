#pragma once

// Gaussian density kernel k_s(y, y') = (2 pi s^2)^{-d/2} exp(-|y - y'|^2 / (2 s^2))
// and the kernel-matrix utilities built on it. Point sets are (dim x n)
// matrices with one point per column.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace nkcme::kernels {

class GaussianDensityKernel {
 public:
  explicit GaussianDensityKernel(double sigma, int dim = 1);

  double sigma() const { return sigma_; }
  int dim() const { return dim_; }

  /// Value at zero separation, (2 pi sigma^2)^{-d/2}.
  double peak() const { return peak_; }

  double at_sq_distance(double sq_dist) const;

  /// d k / d(log sigma) at the given squared distance.
  double dlog_sigma_at_sq_distance(double sq_dist) const;

  /// Same kernel with the bandwidth multiplied by `factor`.
  GaussianDensityKernel scaled(double factor) const { return GaussianDensityKernel(sigma_ * factor, dim_); }

 private:
  double sigma_;
  int dim_;
  double peak_;
  double inv_two_var_;
};

/// Uniformly weighted collection of Gaussian density kernels.
struct KernelFamily {
  std::vector<GaussianDensityKernel> kernels;
  std::vector<double> weights;

  explicit KernelFamily(std::vector<GaussianDensityKernel> ks);
  std::size_t size() const { return kernels.size(); }
};

double eval(const GaussianDensityKernel& k, std::span<const double> y, std::span<const double> y2);
double eval(const GaussianDensityKernel& k, double y, double y2);

/// G(i, j) = k(a_i, b_j). OpenMP-parallel over columns of the result.
Eigen::MatrixXd gram(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& a,
                     const Eigen::Ref<const Eigen::MatrixXd>& b);

/// Element-wise d/d(log sigma) of gram(k, a, b).
Eigen::MatrixXd gram_dlog_sigma(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& a,
                                const Eigen::Ref<const Eigen::MatrixXd>& b);

/// 1-D conveniences: points given as plain vectors.
Eigen::MatrixXd gram_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                        const Eigen::Ref<const Eigen::VectorXd>& b);
Eigen::MatrixXd gram_dlog_sigma_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                                   const Eigen::Ref<const Eigen::VectorXd>& b);

struct GramWithDerivative {
  Eigen::MatrixXd value;
  Eigen::MatrixXd dlog_sigma;
};

/// Both matrices from one pass over the pairs (one exp per entry).
GramWithDerivative gram_with_dlog_sigma_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                                           const Eigen::Ref<const Eigen::VectorXd>& b);

/// w^T G w with G = gram(k, eta, eta); eta is (dim x M).
double quadratic_form(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& eta,
                      const Eigen::Ref<const Eigen::VectorXd>& w);
double quadratic_form_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& eta,
                         const Eigen::Ref<const Eigen::VectorXd>& w);

struct ConvolutionCheck {
  double closed_form;
  double quadrature;
  double abs_difference;
};

/// Compares int k_s(a, y) k_s(y, b) dy against k_{sqrt(2) s}(a, b) in 1-D.
ConvolutionCheck convolution_identity_check(double sigma, double eta_a, double eta_b);

/// Adaptive Simpson quadrature with Richardson correction.
double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi, double abs_tol,
                        int max_depth = 50);

/// Median pairwise Euclidean distance over at most `cap` uniformly subsampled points.
double median_heuristic(const Eigen::Ref<const Eigen::MatrixXd>& points, std::uint64_t seed = 0,
                        std::size_t cap = 1000);
double median_heuristic_1d(const Eigen::Ref<const Eigen::VectorXd>& points, std::uint64_t seed = 0,
                           std::size_t cap = 1000);

/// Nearest-rank empirical quantile of already sorted values, p in [0, 1].
double nearest_rank_quantile(std::span<const double> sorted, double p);

/// `count` bandwidths evenly spaced between half the 5th and half the 95th
/// percentile of the pairwise atom distances.
KernelFamily fuse_bandwidth_grid(const Eigen::Ref<const Eigen::VectorXd>& eta, int count = 10);

namespace serial {

// Single-threaded references for the parallel kernels above.
Eigen::MatrixXd gram(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& a,
                     const Eigen::Ref<const Eigen::MatrixXd>& b);

}  // namespace serial

}  // namespace nkcme::kernels
