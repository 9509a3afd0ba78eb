#include "../support/gradcheck.hpp"

#include "nkcme/error.hpp"
#include "nkcme/net.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace nkcme;
using nkcme::testing::Gen;

namespace {

void zero_parameters(net::Mlp& m) {
  for (auto& layer : m.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

}  // namespace

TEST_CASE("forward of a zero network") {
  net::Mlp lin({3, 4, 5}, net::Head::linear(), 1);
  zero_parameters(lin);
  CHECK(lin.forward(Eigen::Vector3d(1, -2, 3)).isZero(0.0));

  net::Mlp soft({3, 4, 6}, net::Head::softmax(3), 1);
  zero_parameters(soft);
  const Eigen::VectorXd out = soft.forward(Eigen::Vector3d(1, -2, 3));
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("forward of a hand-built 1-1-1 network") {
  net::Mlp m({1, 1, 1}, net::Head::linear(), 0);
  zero_parameters(m);
  m.layers()[0].weight(0, 0) = 2.0;
  m.layers()[1].weight(0, 0) = 1.0;
  CHECK(m.forward(Eigen::VectorXd::Constant(1, 1.5))[0] == 3.0);
  CHECK(m.forward(Eigen::VectorXd::Constant(1, -1.5))[0] == 0.0);
}

TEST_CASE("forward rejects a wrong input size") {
  net::Mlp m({3, 4, 2}, net::Head::linear(), 0);
  CHECK_THROWS_AS(m.forward(Eigen::VectorXd::Zero(2)), ShapeError);
  CHECK_THROWS_AS(m.forward_batch(Eigen::MatrixXd::Zero(4, 5)), ShapeError);
}

TEST_CASE("batched and single forward agree") {
  Gen g(3);
  net::Mlp m({2, 7, 5, 4}, net::Head::softmax(2), 9);
  const Eigen::MatrixXd x = g.matrix(2, 6, -2, 2);
  const Eigen::MatrixXd batch = m.forward_batch(x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) CHECK((batch.col(j) - m.forward(x.col(j))).norm() < 1e-12);
}

TEST_CASE("softmax groups are probability vectors") {
  Gen g(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int group = g.integer(2, 6), groups = g.integer(1, 4);
    net::Mlp m({3, g.integer(2, 8), group * groups}, net::Head::softmax(group), trial);
    const Eigen::MatrixXd out = m.forward_batch(g.matrix(3, 4, -20, 20));
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      for (int a = 0; a < groups; ++a) {
        const auto seg = out.col(j).segment(a * group, group);
        CHECK(std::abs(seg.sum() - 1.0) <= 1e-12);
        CHECK(seg.minCoeff() > 0.0);
      }
  }
}

TEST_CASE("backward with zero upstream is zero") {
  Gen g(5);
  net::Mlp m({3, 6, 4, 2}, net::Head::linear(), 2);
  const auto cache = m.forward_cached(g.matrix(3, 5, -1, 1));
  const auto grads = m.backward(cache, Eigen::MatrixXd::Zero(2, 5));
  for (double v : testing::flatten(m, grads)) CHECK(v == 0.0);
}

TEST_CASE("backward of a single linear layer is g x^T") {
  Gen g(6);
  net::Mlp m({3, 2}, net::Head::linear(), 4);
  const Eigen::MatrixXd x = g.matrix(3, 4, -1, 1), up = g.matrix(2, 4, -1, 1);
  const auto grads = m.backward(m.forward_cached(x), up);
  CHECK((grads.weight[0] - up * x.transpose()).norm() < 1e-14);
  CHECK((grads.bias[0] - up.rowwise().sum()).norm() < 1e-14);
}

TEST_CASE("backward matches central differences") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Gen g(seed);
    const bool soft = seed % 2 == 1;
    net::Mlp m({3, 5, 4, 6}, soft ? net::Head::softmax(3) : net::Head::linear(), seed);
    const Eigen::MatrixXd x = g.matrix(3, 4, -1, 1), up = g.matrix(6, 4, -1, 1);
    const auto analytic = testing::flatten(m, m.backward(m.forward_cached(x), up));
    const auto numeric =
        testing::numeric_gradient(m, [&] { return m.forward_batch(x).cwiseProduct(up).sum(); });
    CHECK(testing::relative_error(analytic, numeric) <= 1e-4);
  }
}

TEST_CASE("backward rejects a mismatched upstream") {
  net::Mlp m({2, 3, 2}, net::Head::linear(), 0);
  const auto cache = m.forward_cached(Eigen::MatrixXd::Zero(2, 3));
  CHECK_THROWS_AS(m.backward(cache, Eigen::MatrixXd::Zero(2, 4)), ShapeError);
}

TEST_CASE("adamw examples") {
  std::vector<double> p{0.5};
  std::vector<double> grad{0.0};
  std::vector<net::ParamBlock> blocks{{"p", std::span<double>(p)}};
  std::vector<std::span<const double>> grads{std::span<const double>(grad)};

  SUBCASE("zero gradient, zero decay is the identity") {
    net::OptimizerState st({1e-3, 0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 5; ++i) net::adamw_step(blocks, grads, st);
    CHECK(p[0] == 0.5);
    CHECK(st.step_count == 5);
  }
  SUBCASE("unit gradient moves by the learning rate") {
    grad[0] = 1.0;
    net::OptimizerState st({1e-3, 0.9, 0.999, 1e-8, 0.0});
    net::adamw_step(blocks, grads, st);
    CHECK(0.5 - p[0] == doctest::Approx(1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("decoupled decay alone") {
    p[0] = 1.0;
    net::OptimizerState st({1e-3, 0.9, 0.999, 1e-8, 0.01});
    net::adamw_step(blocks, grads, st);
    CHECK(p[0] == doctest::Approx(0.99999).epsilon(1e-15));
  }
  SUBCASE("blocks flagged off skip decay") {
    p[0] = 1.0;
    blocks[0].weight_decay = false;
    net::OptimizerState st({1e-3, 0.9, 0.999, 1e-8, 0.01});
    net::adamw_step(blocks, grads, st);
    CHECK(p[0] == 1.0);
  }
  SUBCASE("non-finite gradient names the block and leaves parameters alone") {
    grad[0] = std::nan("");
    net::OptimizerState st;
    CHECK_THROWS_WITH_AS(net::adamw_step(blocks, grads, st), doctest::Contains("p"), OptimizerError);
    CHECK(p[0] == 0.5);
  }
}

TEST_CASE("adamw on a network names the offending layer") {
  net::Mlp m({2, 3, 2}, net::Head::linear(), 0);
  auto grads = m.zero_gradients();
  grads.bias[1][0] = INFINITY;
  net::OptimizerState st;
  CHECK_THROWS_WITH_AS(net::adamw_step(m, grads, st), doctest::Contains("layer 1 bias"), OptimizerError);
}

TEST_CASE("spectral normalization examples") {
  Eigen::VectorXd u;
  SUBCASE("diagonal") {
    net::DenseLayer layer{Eigen::Vector2d(3, 1).asDiagonal(), Eigen::VectorXd::Zero(2)};
    const auto r = net::spectral_normalize(layer, u, 30);
    CHECK(r.sigma == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(layer.weight(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(layer.weight(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  }
  SUBCASE("identity") {
    net::DenseLayer layer{Eigen::Matrix3d::Identity(), Eigen::VectorXd::Zero(3)};
    net::spectral_normalize(layer, u, 5);
    CHECK((layer.weight - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  }
  SUBCASE("random 5x5 against a dense SVD") {
    Gen g(42);
    net::DenseLayer layer{g.matrix(5, 5, -1, 1), Eigen::VectorXd::Zero(5)};
    net::spectral_normalize(layer, u, 30);
    const double top = Eigen::JacobiSVD<Eigen::MatrixXd>(layer.weight).singularValues()[0];
    CHECK(std::abs(top - 1.0) <= 1e-3);
  }
  SUBCASE("zero matrix is flagged and unchanged") {
    net::DenseLayer layer{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)};
    const auto r = net::spectral_normalize(layer, u, 3);
    CHECK(r.zero_matrix);
    CHECK(layer.weight.isZero(0.0));
  }
}

TEST_CASE("spectral norm stays near one during training") {
  Gen g(8);
  net::Mlp m({2, 8, 8, 5}, net::Head::linear(), 3, {1, 2});
  m.apply_spectral_norm(20);
  net::OptimizerState st({1e-2, 0.9, 0.999, 1e-8, 0.0});
  for (int step = 0; step < 200; ++step) {
    const Eigen::MatrixXd x = g.matrix(2, 8, -1, 1);
    const auto grads = m.backward(m.forward_cached(x), g.matrix(5, 8, -1, 1));
    net::adamw_step(m, grads, st);
    m.apply_spectral_norm();
    for (int l : {1, 2}) {
      const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(m.layers()[static_cast<std::size_t>(l)].weight)
                           .singularValues()[0];
      CHECK(std::abs(s - 1.0) <= 1e-2);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "nkcme_ckpt_test";
  std::filesystem::create_directories(dir);
  net::Mlp m({3, 4, 6}, net::Head::softmax(3), 77, {1});
  const auto bin = (dir / "model.bin").string(), js = (dir / "model.json").string();
  net::save_checkpoint(m, bin, js);
  CHECK(std::filesystem::file_size(bin) == m.parameter_count() * sizeof(double));

  // first stored double is layer 0 weight (0, 0), little-endian
  std::ifstream in(bin, std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  double first;
  std::memcpy(&first, &bits, 8);
  CHECK(first == m.layers()[0].weight(0, 0));

  const net::Mlp back = net::load_checkpoint(bin, js);
  CHECK(back.layer_sizes() == m.layer_sizes());
  CHECK(back.head().kind == net::HeadKind::softmax_per_group);
  CHECK(back.spectral_norm_layers() == m.spectral_norm_layers());
  CHECK(back.seed() == 77);
  const Eigen::Vector3d x(0.3, -0.2, 1.0);
  CHECK(back.forward(x) == m.forward(x));
  CHECK_THROWS_AS(net::load_checkpoint((dir / "missing.bin").string(), js), IoError);
  std::filesystem::remove_all(dir);
}
