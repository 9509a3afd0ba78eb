#include "../support/gradcheck.hpp"

#include "nkcme/baselines.hpp"
#include "nkcme/error.hpp"

#include <doctest.h>

using namespace nkcme;
using namespace nkcme::baselines;
using nkcme::testing::Gen;

namespace {

Eigen::MatrixXd random_psd(Gen& g, int n) {
  const Eigen::MatrixXd a = g.matrix(n, n, -1, 1);
  return a * a.transpose();
}

}  // namespace

TEST_CASE("deep-feature loss examples") {
  Gen g(1);
  const Eigen::MatrixXd k = random_psd(g, 5);
  CHECK(df_loss_from_features(Eigen::MatrixXd::Zero(3, 5), k, 0.1).value == doctest::Approx(k.trace()).epsilon(1e-14));

  const double c = 0.37;
  const auto one = df_loss_from_features(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, c), 0.1);
  CHECK(one.value == doctest::Approx(c * (1.0 - 1.0 / 1.1)).epsilon(1e-14));
  CHECK(one.value / c == doctest::Approx(0.0909090909090909).epsilon(1e-13));

  CHECK_THROWS_AS(df_loss_from_features(Eigen::MatrixXd::Ones(1, 2), Eigen::MatrixXd::Ones(3, 3), 0.1), ShapeError);
  CHECK_THROWS_AS(df_loss_from_features(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1), 0.0), DomainError);
}

TEST_CASE("deep-feature loss against an n x n oracle") {
  Gen g(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = g.integer(1, 6), n = g.integer(1, 8);
    const Eigen::MatrixXd psi = g.matrix(d, n, -2, 2), k = random_psd(g, n);
    const double lambda = g.uniform(0.01, 2);
    // tr(K (I - Psi^T (Psi Psi^T + l I)^{-1} Psi)) = l tr(K (Psi^T Psi + l I)^{-1})
    const Eigen::MatrixXd inner = psi.transpose() * psi + lambda * Eigen::MatrixXd::Identity(n, n);
    const double oracle = lambda * (k * inner.inverse()).trace();
    const auto lv = df_loss_from_features(psi, k, lambda);
    CHECK(lv.value == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(lv.value >= -1e-10);

    // feature gradient by central differences
    Eigen::MatrixXd p = psi;
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p(i);
      p(i) = saved + h;
      const double up = df_loss_from_features(p, k, lambda).value;
      p(i) = saved - h;
      const double down = df_loss_from_features(p, k, lambda).value;
      p(i) = saved;
      CHECK(lv.grad_features(i) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("deep-feature network gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(testing::df_case(seed) <= 1e-4);
}

TEST_CASE("deep-feature weights") {
  CHECK(df_weights_from_features(Eigen::MatrixXd::Ones(2, 4), Eigen::Vector2d::Zero(), 0.1).isZero(0.0));
  CHECK(df_weights_from_features(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1), 0.1)[0] ==
        doctest::Approx(1.0 / 1.1).epsilon(1e-15));

  // ridge minimizer via the n x n normal equations: beta = (Psi^T Psi + l I)^{-1} Psi^T psi(x)
  Gen g(3);
  const int d = 7, n = 50;
  const Eigen::MatrixXd psi = g.matrix(d, n, -1, 1);
  const Eigen::VectorXd q = g.vector(d, -1, 1);
  const double lambda = 0.1;
  const Eigen::VectorXd oracle =
      (psi.transpose() * psi + lambda * Eigen::MatrixXd::Identity(n, n)).fullPivLu().solve(psi.transpose() * q);
  CHECK((df_weights_from_features(psi, q, lambda) - oracle).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(df_weights_from_features(psi, Eigen::VectorXd::Zero(3), lambda), ShapeError);
}

TEST_CASE("deep-feature model caches the training features") {
  Gen g(4);
  net::Mlp feat({2, 6, 4}, net::Head::relu(), 5);
  const Eigen::MatrixXd x = g.matrix(2, 12, -1, 1);
  const Eigen::VectorXd y = g.vector(12, -1, 1);
  const DeepFeatureModel m(feat, 0.1, kernels::GaussianDensityKernel(0.5), x, y);
  CHECK(m.train_features() == feat.forward_batch(x));
  const Eigen::Vector2d q(0.2, -0.4);
  CHECK((m.weights(q) - df_weights_from_features(m.train_features(), feat.forward(q), 0.1)).norm() <= 1e-12);
  const auto e = m.embedding(q);
  CHECK(e.atoms == y);
  CHECK(e.kernel.sigma() == 0.5);
}

TEST_CASE("deep-feature bandwidth rules") {
  Gen g(5);
  const Eigen::VectorXd y = g.normal_vector(300);
  DfConfig c;
  c.seed = 2;
  CHECK(df_bandwidth(c, y) == kernels::median_heuristic_1d(y, 2));
  c.bandwidth_rule = BandwidthRule::fixed;
  CHECK(df_bandwidth(c, y) == 0.1);
  c.fixed_bandwidth = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("deep-feature training") {
  const auto train = data::standardize(data::generate_toy({data::ToyFamily::bimodal, 400, 6}));
  DfConfig c;
  c.epochs = 20;
  c.learning_rate = 1e-3;
  c.seed = 6;
  const auto a = train_df(train, c);
  const auto b = train_df(train, c);
  REQUIRE(a.epoch_loss.size() == 20);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.model.output_kernel().sigma() == kernels::median_heuristic_1d(train.outputs, 6));
  CHECK(a.model.train_features().cols() == 400);

  c.bandwidth_rule = BandwidthRule::fixed;
  c.epochs = 0;
  CHECK(train_df(train, c).model.output_kernel().sigma() == 0.1);
}

TEST_CASE("classical weights") {
  data::LabeledDataset one;
  one.inputs = Eigen::MatrixXd::Constant(1, 1, 0.3);
  one.outputs = Eigen::VectorXd::Constant(1, 2.0);
  const ClassicalCMEModel m1(InputKernel::gaussian, 1.0, 0.1, one.inputs, one.outputs,
                             kernels::GaussianDensityKernel(1.0));
  const double c = m1.input_kernel(one.inputs.col(0), one.inputs.col(0));
  CHECK(classical_weights(m1, one.inputs.col(0))[0] == doctest::Approx(c / (c + 0.1)).epsilon(1e-15));

  Gen g(7);
  const Eigen::MatrixXd x = g.matrix(3, 20, -1, 1);
  const Eigen::VectorXd y = g.vector(20, -1, 1);
  const Eigen::Vector3d q(0.1, 0.2, -0.3);
  double previous = INFINITY;
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0, 1e4}) {
    const ClassicalCMEModel m(InputKernel::gaussian, 0.8, lambda, x, y, kernels::GaussianDensityKernel(0.5));
    const Eigen::VectorXd beta = classical_weights(m, q);
    Eigen::VectorXd kx(20);
    for (int i = 0; i < 20; ++i) kx[i] = m.input_kernel(x.col(i), q);
    CHECK(((m.input_gram() + lambda * Eigen::MatrixXd::Identity(20, 20)) * beta - kx).norm() <= 1e-9);
    CHECK(beta.norm() < previous);
    previous = beta.norm();
  }
}

TEST_CASE("classical model guards and fitting") {
  Gen g(8);
  const Eigen::MatrixXd big = g.matrix(1, classical_max_n + 1, -1, 1);
  CHECK_THROWS_AS(ClassicalCMEModel(InputKernel::gaussian, 1.0, 0.1, big, Eigen::VectorXd::Zero(big.cols()),
                                    kernels::GaussianDensityKernel(1.0)),
                  DomainError);
  const auto d = data::standardize(data::generate_toy({data::ToyFamily::skewed, 300, 8}));
  const auto m = fit_classical(d, 0.1, InputKernel::gaussian, 3);
  CHECK(m.bandwidth() == kernels::median_heuristic(d.inputs, 3));
  CHECK(m.output_kernel().sigma() == kernels::median_heuristic_1d(d.outputs, 3));
  const auto e = classical_embedding(m, d.inputs.col(0));
  CHECK(e.atoms == d.outputs);
  CHECK(e.weights.size() == 300);
}

TEST_CASE("one-hot deep features reproduce classical linear-kernel weights") {
  Gen g(9);
  for (int n = 1; n <= 20; ++n) {
    const double lambda = g.uniform(0.01, 2);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    const ClassicalCMEModel lin(InputKernel::linear, 0.0, lambda, eye, g.vector(n, -1, 1),
                                kernels::GaussianDensityKernel(1.0));
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd df = df_weights_from_features(eye, eye.col(i), lambda);
      const Eigen::VectorXd classical = classical_weights(lin, eye.col(i));
      CHECK((df - classical).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((df - eye.col(i) / (1.0 + lambda)).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}
