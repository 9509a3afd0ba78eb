#include "nkcme/metrics.hpp"

#include "nkcme/error.hpp"

#include <algorithm>
#include <cmath>

namespace nkcme::metrics {

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("wasserstein1 of an empty sample set");
  if (a.size() != b.size()) throw ShapeError("wasserstein1 needs equal sample sizes");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double s = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) s += std::abs(sa[i] - sb[i]);
  return s / static_cast<double>(sa.size());
}

double interpolated_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> qice_coverage(std::span<const double> truth, const std::vector<std::vector<double>>& samples,
                                  int bins) {
  if (bins < 2) throw DomainError("QICE needs at least two bins");
  if (truth.empty()) throw DomainError("QICE needs at least one conditioning point");
  if (truth.size() != samples.size()) throw ShapeError("one sample set per conditioning point is required");
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> bounds(static_cast<std::size_t>(bins) + 1);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (samples[i].size() < static_cast<std::size_t>(bins))
      throw DomainError("QICE needs at least " + std::to_string(bins) + " samples per point, point " +
                        std::to_string(i) + " has " + std::to_string(samples[i].size()));
    std::vector<double> s = samples[i];
    std::sort(s.begin(), s.end());
    for (int j = 0; j <= bins; ++j) bounds[j] = interpolated_quantile(s, static_cast<double>(j) / bins);
    const double y = truth[i];
    for (int j = 0; j < bins; ++j) {
      const bool last = j == bins - 1;
      if (y >= bounds[j] && (y < bounds[j + 1] || (last && y <= bounds[j + 1]))) {
        counts[j] += 1.0;
        break;
      }
    }
  }
  for (double& c : counts) c /= static_cast<double>(truth.size());
  return counts;
}

double qice(std::span<const double> truth, const std::vector<std::vector<double>>& samples, int bins) {
  const auto r = qice_coverage(truth, samples, bins);
  double s = 0.0;
  for (double rj : r) s += std::abs(rj - 1.0 / bins);
  return s / bins;
}

double rmse(std::span<const double> truth, const std::vector<std::vector<double>>& samples) {
  if (truth.empty()) throw DomainError("RMSE of no points");
  if (truth.size() != samples.size()) throw ShapeError("one sample set per conditioning point is required");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (samples[i].empty()) throw DomainError("RMSE needs at least one sample per point");
    double m = 0.0;
    for (double v : samples[i]) m += v;
    m /= static_cast<double>(samples[i].size());
    s += (truth[i] - m) * (truth[i] - m);
  }
  return std::sqrt(s / static_cast<double>(truth.size()));
}

double squared_mmd(const WeightedAtoms& a, const WeightedAtoms& b, const kernels::GaussianDensityKernel& k) {
  if (a.atoms.size() != a.weights.size() || b.atoms.size() != b.weights.size())
    throw ShapeError("atoms and weights differ in length");
  if (a.atoms.size() == 0 || b.atoms.size() == 0) throw DomainError("MMD of an empty embedding");
  const double aa = a.weights.dot(kernels::gram_1d(k, a.atoms, a.atoms) * a.weights);
  const double ab = a.weights.dot(kernels::gram_1d(k, a.atoms, b.atoms) * b.weights);
  const double bb = b.weights.dot(kernels::gram_1d(k, b.atoms, b.atoms) * b.weights);
  return aa - 2.0 * ab + bb;
}

WeightedAtoms empirical(const Eigen::Ref<const Eigen::VectorXd>& points) {
  if (points.size() == 0) throw DomainError("empirical embedding of no points");
  return {points, Eigen::VectorXd::Constant(points.size(), 1.0 / static_cast<double>(points.size()))};
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw DomainError("mean of no values");
  double m = 0.0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  if (values.size() == 1) return {m, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

}  // namespace nkcme::metrics
