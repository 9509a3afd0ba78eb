#pragma once

// Seeded generators for property tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace nkcme::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }

  Eigen::VectorXd normal_vector(Eigen::Index n, double sd = 1.0) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = normal(0.0, sd);
    return v;
  }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(lo, hi);
    return m;
  }

  /// n strictly increasing points in [lo, hi] with gaps of at least min_gap.
  Eigen::VectorXd increasing(Eigen::Index n, double lo, double hi, double min_gap = 1e-3) {
    for (;;) {
      std::vector<double> p(static_cast<std::size_t>(n));
      for (auto& x : p) x = uniform(lo, hi);
      std::sort(p.begin(), p.end());
      bool ok = true;
      for (std::size_t i = 1; i < p.size(); ++i) ok = ok && p[i] - p[i - 1] >= min_gap;
      if (ok) return Eigen::Map<Eigen::VectorXd>(p.data(), n);
    }
  }

  std::vector<double> samples(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace nkcme::testing
