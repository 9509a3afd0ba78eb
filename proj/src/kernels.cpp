#include "nkcme/kernels.hpp"

#include "nkcme/error.hpp"
#include "nkcme/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace nkcme::kernels {

GaussianDensityKernel::GaussianDensityKernel(double sigma, int dim) : sigma_(sigma), dim_(dim) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw DomainError("kernel bandwidth must be positive and finite, got " + std::to_string(sigma));
  if (dim <= 0) throw DomainError("kernel dimension must be positive");
  peak_ = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.5 * dim);
  inv_two_var_ = 1.0 / (2.0 * sigma * sigma);
}

double GaussianDensityKernel::at_sq_distance(double sq_dist) const {
  return peak_ * std::exp(-sq_dist * inv_two_var_);
}

double GaussianDensityKernel::dlog_sigma_at_sq_distance(double sq_dist) const {
  // k = c s^{-d} exp(-r^2 / (2 s^2))  =>  dk/dlog s = k (r^2 / s^2 - d)
  return at_sq_distance(sq_dist) * (sq_dist / (sigma_ * sigma_) - dim_);
}

KernelFamily::KernelFamily(std::vector<GaussianDensityKernel> ks) : kernels(std::move(ks)) {
  if (kernels.empty()) throw DomainError("kernel family must be nonempty");
  for (std::size_t i = 1; i < kernels.size(); ++i)
    if (kernels[i].sigma() < kernels[i - 1].sigma())
      throw DomainError("kernel family bandwidths must be non-decreasing");
  weights.assign(kernels.size(), 1.0 / static_cast<double>(kernels.size()));
}

double eval(const GaussianDensityKernel& k, std::span<const double> y, std::span<const double> y2) {
  if (y.size() != y2.size() || static_cast<int>(y.size()) != k.dim())
    throw ShapeError("kernel arguments must both have dimension " + std::to_string(k.dim()));
  double sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sq += (y[i] - y2[i]) * (y[i] - y2[i]);
  return k.at_sq_distance(sq);
}

double eval(const GaussianDensityKernel& k, double y, double y2) {
  if (k.dim() != 1) throw ShapeError("scalar kernel evaluation needs a 1-D kernel");
  return k.at_sq_distance((y - y2) * (y - y2));
}

namespace {

void check_point_sets(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& a,
                      const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.cols() == 0 || b.cols() == 0) throw ShapeError("gram matrix of an empty point set");
  if (a.rows() != k.dim() || b.rows() != k.dim())
    throw ShapeError("point dimension does not match the kernel dimension");
}

template <class Entry>
Eigen::MatrixXd fill_parallel(Eigen::Index rows, Eigen::Index cols, Entry&& entry) {
  Eigen::MatrixXd g(rows, cols);
  parallel::for_each_index(cols, [&](std::ptrdiff_t j) {
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = entry(i, j);
  });
  return g;
}

}  // namespace

Eigen::MatrixXd gram(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& a,
                     const Eigen::Ref<const Eigen::MatrixXd>& b) {
  check_point_sets(k, a, b);
  return fill_parallel(a.cols(), b.cols(), [&](Eigen::Index i, Eigen::Index j) {
    return k.at_sq_distance((a.col(i) - b.col(j)).squaredNorm());
  });
}

Eigen::MatrixXd gram_dlog_sigma(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& a,
                                const Eigen::Ref<const Eigen::MatrixXd>& b) {
  check_point_sets(k, a, b);
  return fill_parallel(a.cols(), b.cols(), [&](Eigen::Index i, Eigen::Index j) {
    return k.dlog_sigma_at_sq_distance((a.col(i) - b.col(j)).squaredNorm());
  });
}

namespace {

// Column-wise 1-D fill; Eigen's array exp is vectorized. Packet and scalar
// lanes of exp may differ in the last bit, so a square gram of one point set
// is mirrored from its upper triangle to stay exactly symmetric.
template <bool WithDerivative>
void fill_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& a,
             const Eigen::Ref<const Eigen::VectorXd>& b, Eigen::MatrixXd& g, Eigen::MatrixXd* dg) {
  if (k.dim() != 1) throw ShapeError("1-D gram needs a 1-D kernel");
  if (a.size() == 0 || b.size() == 0) throw ShapeError("gram matrix of an empty point set");
  const Eigen::Index n = a.size(), m = b.size();
  g.resize(n, m);
  if constexpr (WithDerivative) dg->resize(n, m);
  const double peak = k.peak();
  const double inv_var = 1.0 / (k.sigma() * k.sigma());
  const Eigen::ArrayXd av = a;
  parallel::for_each_index(m, [&](std::ptrdiff_t j) {
    const Eigen::ArrayXd sq = (av - b[j]).square();
    g.col(j) = peak * (-0.5 * inv_var * sq).exp();
    if constexpr (WithDerivative) dg->col(j) = g.col(j).array() * (sq * inv_var - 1.0);
  });
  if (a.data() == b.data() && n == m) {
    g.triangularView<Eigen::StrictlyLower>() = g.transpose();
    if constexpr (WithDerivative) dg->triangularView<Eigen::StrictlyLower>() = dg->transpose();
  }
}

}  // namespace

Eigen::MatrixXd gram_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                        const Eigen::Ref<const Eigen::VectorXd>& b) {
  Eigen::MatrixXd g;
  fill_1d<false>(k, a, b, g, nullptr);
  return g;
}

Eigen::MatrixXd gram_dlog_sigma_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                                   const Eigen::Ref<const Eigen::VectorXd>& b) {
  return gram_with_dlog_sigma_1d(k, a, b).dlog_sigma;
}

GramWithDerivative gram_with_dlog_sigma_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& a,
                                           const Eigen::Ref<const Eigen::VectorXd>& b) {
  GramWithDerivative out;
  fill_1d<true>(k, a, b, out.value, &out.dlog_sigma);
  return out;
}

double quadratic_form(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& eta,
                      const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (eta.cols() != w.size()) throw ShapeError("quadratic form needs one weight per location");
  if (w.size() == 0) return 0.0;
  const Eigen::MatrixXd g = gram(k, eta, eta);
  return w.dot(g * w);
}

double quadratic_form_1d(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::VectorXd>& eta,
                         const Eigen::Ref<const Eigen::VectorXd>& w) {
  return quadratic_form(k, eta.transpose(), w);
}

namespace {

struct SimpsonStep {
  double lo, hi, f_lo, f_mid, f_hi, whole;
};

double simpson_recurse(const std::function<double(double)>& f, const SimpsonStep& s, double tol, int depth) {
  const double mid = 0.5 * (s.lo + s.hi);
  const double left_mid = 0.5 * (s.lo + mid);
  const double right_mid = 0.5 * (mid + s.hi);
  const double f_lm = f(left_mid);
  const double f_rm = f(right_mid);
  const double left = (mid - s.lo) / 6.0 * (s.f_lo + 4.0 * f_lm + s.f_mid);
  const double right = (s.hi - mid) / 6.0 * (s.f_mid + 4.0 * f_rm + s.f_hi);
  const double delta = left + right - s.whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_recurse(f, {s.lo, mid, s.f_lo, f_lm, s.f_mid, left}, 0.5 * tol, depth - 1) +
         simpson_recurse(f, {mid, s.hi, s.f_mid, f_rm, s.f_hi, right}, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi, double abs_tol,
                        int max_depth) {
  // Split into a few panels first so a narrow peak cannot slip between the
  // initial sample points.
  constexpr int panels = 16;
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    const double b = (p + 1 == panels) ? hi : a + width;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson_recurse(f, {a, b, fa, fm, fb, whole}, abs_tol / panels, max_depth);
  }
  return total;
}

ConvolutionCheck convolution_identity_check(double sigma, double eta_a, double eta_b) {
  const GaussianDensityKernel k(sigma);
  const double closed = eval(k.scaled(std::numbers::sqrt2), eta_a, eta_b);
  const double centre = 0.5 * (eta_a + eta_b);
  const double half_width = 10.0 * sigma * std::numbers::sqrt2 + 0.5 * std::abs(eta_a - eta_b);
  const double quad = adaptive_simpson([&](double y) { return eval(k, eta_a, y) * eval(k, y, eta_b); },
                                       centre - half_width, centre + half_width, 1e-13);
  return {closed, quad, std::abs(closed - quad)};
}

double nearest_rank_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile of an empty set");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::ptrdiff_t>(std::ceil(p * n));
  rank = std::clamp<std::ptrdiff_t>(rank, 1, static_cast<std::ptrdiff_t>(sorted.size()));
  return sorted[static_cast<std::size_t>(rank - 1)];
}

double median_heuristic(const Eigen::Ref<const Eigen::MatrixXd>& points, std::uint64_t seed, std::size_t cap) {
  const auto n = static_cast<std::size_t>(points.cols());
  if (n < 2) throw DomainError("median heuristic needs at least two points");
  std::vector<Eigen::Index> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<Eigen::Index>(i);
  if (n > cap) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<double> d;
  d.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j) d.push_back((points.col(idx[i]) - points.col(idx[j])).norm());
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) throw DomainError("median pairwise distance is zero; points are (mostly) identical");
  return median;
}

double median_heuristic_1d(const Eigen::Ref<const Eigen::VectorXd>& points, std::uint64_t seed, std::size_t cap) {
  return median_heuristic(points.transpose(), seed, cap);
}

KernelFamily fuse_bandwidth_grid(const Eigen::Ref<const Eigen::VectorXd>& eta, int count) {
  if (count < 1) throw DomainError("bandwidth count must be at least 1");
  if (eta.size() < 2) throw DomainError("bandwidth grid needs at least two atoms");
  std::vector<double> d;
  for (Eigen::Index a = 0; a < eta.size(); ++a)
    for (Eigen::Index b = a + 1; b < eta.size(); ++b) d.push_back(std::abs(eta[a] - eta[b]));
  std::sort(d.begin(), d.end());
  if (!(d.back() > 0.0)) throw DomainError("degenerate atom grid: all atoms coincide");
  const double lo = 0.5 * nearest_rank_quantile(d, 0.05);
  const double hi = 0.5 * nearest_rank_quantile(d, 0.95);
  if (!(lo > 0.0)) throw DomainError("degenerate atom grid: 5th percentile distance is zero");
  std::vector<GaussianDensityKernel> ks;
  if (count == 1) {
    ks.emplace_back(0.5 * (lo + hi));
  } else {
    for (int i = 0; i < count; ++i) ks.emplace_back(lo + (hi - lo) * i / (count - 1));
  }
  return KernelFamily(std::move(ks));
}

namespace serial {

Eigen::MatrixXd gram(const GaussianDensityKernel& k, const Eigen::Ref<const Eigen::MatrixXd>& a,
                     const Eigen::Ref<const Eigen::MatrixXd>& b) {
  check_point_sets(k, a, b);
  Eigen::MatrixXd g(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i) g(i, j) = k.at_sq_distance((a.col(i) - b.col(j)).squaredNorm());
  return g;
}

}  // namespace serial

}  // namespace nkcme::kernels
