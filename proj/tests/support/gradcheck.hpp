#pragma once

// Central-difference gradient checks shared by the unit tests and the
// acceptance runner. Each *_case builds one random small instance from a
// seed and returns the relative error ||analytic - numeric|| / max(norms).

#include "generators.hpp"

#include "nkcme/baselines.hpp"
#include "nkcme/cme.hpp"
#include "nkcme/net.hpp"
#include "nkcme/rl_agent.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace nkcme::testing {

constexpr double fd_step = 1e-5;

inline std::vector<double> flatten(const net::Mlp& model, const net::Gradients& g) {
  std::vector<double> out;
  for (auto block : model.gradient_blocks(g)) out.insert(out.end(), block.begin(), block.end());
  return out;
}

/// Central differences of loss() over every parameter of model.
inline std::vector<double> numeric_gradient(net::Mlp& model, const std::function<double()>& loss,
                                            double h = fd_step) {
  std::vector<double> out;
  for (auto& block : model.parameter_blocks()) {
    for (double& p : block.values) {
      const double saved = p;
      p = saved + h;
      const double up = loss();
      p = saved - h;
      const double down = loss();
      p = saved;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return a.size() == b.size() ? std::sqrt(diff) / scale : INFINITY;
}

namespace detail {

// Zero biases put units whose inputs are all inactive exactly on the ReLU
// kink, where central differences are meaningless; random biases avoid that.
inline void randomize_biases(net::Mlp& model, Gen& g) {
  for (auto& layer : model.layers())
    for (auto& b : layer.bias) b = g.uniform(-0.5, 0.5);
}

struct DensityInstance {
  net::Mlp model;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  cme::LocationGrid grid;
  double sigma;
};

inline DensityInstance density_instance(std::uint64_t seed) {
  Gen g(seed);
  const int dx = g.integer(1, 3), m = g.integer(3, 9), b = g.integer(2, 7);
  net::Mlp model({dx, g.integer(3, 7), g.integer(3, 7), m}, net::Head::linear(), seed);
  randomize_biases(model, g);
  const Eigen::VectorXd eta = g.increasing(m, -2.0, 2.0, 0.05);
  return {std::move(model), g.matrix(dx, b, -1.5, 1.5), g.vector(b, -2.5, 2.5), cme::LocationGrid(eta),
          g.uniform(0.3, 2.0)};
}

using DensityLossFn = cme::NetLoss (*)(const net::Mlp&, const Eigen::Ref<const Eigen::MatrixXd>&,
                                       const Eigen::Ref<const Eigen::VectorXd>&, const cme::LocationGrid&, double);

inline double density_case(std::uint64_t seed, DensityLossFn fn) {
  auto inst = density_instance(seed);
  const auto analytic = fn(inst.model, inst.x, inst.y, inst.grid, inst.sigma);
  std::vector<double> a = flatten(inst.model, analytic.grads);
  a.push_back(analytic.grad_log_sigma);
  auto value = [&](double sigma) { return fn(inst.model, inst.x, inst.y, inst.grid, sigma).value; };
  std::vector<double> n = numeric_gradient(inst.model, [&] { return value(inst.sigma); });
  const double ls = std::log(inst.sigma);
  n.push_back((value(std::exp(ls + fd_step)) - value(std::exp(ls - fd_step))) / (2.0 * fd_step));
  return relative_error(a, n);
}

struct RlInstance {
  std::unique_ptr<rl::ZDistributionModel> model, target;
  std::vector<rl::Transition> transitions;
  std::vector<const rl::Transition*> batch;
  Eigen::VectorXd atoms;
  double gamma;
};

inline std::vector<rl::Transition> random_transitions(Gen& g, int count, int state_dim, int actions) {
  std::vector<rl::Transition> out;
  for (int i = 0; i < count; ++i) {
    rl::Transition t;
    t.state = g.vector(state_dim, -1.0, 1.0);
    t.action = g.integer(0, actions - 1);
    t.reward = g.uniform(-1.0, 1.0);
    t.next_state = g.vector(state_dim, -1.0, 1.0);
    t.terminal = g.coin(0.25);
    out.push_back(std::move(t));
  }
  return out;
}

inline RlInstance rl_instance(std::uint64_t seed) {
  Gen g(seed);
  const int sd = g.integer(2, 4), actions = g.integer(2, 3), m = g.integer(3, 7);
  const int hidden = g.integer(3, 6);
  RlInstance inst;
  inst.atoms = Eigen::VectorXd::LinSpaced(m, -3.0, 3.0);
  inst.model = std::make_unique<rl::ZDistributionModel>(
      net::Mlp({sd, hidden, m * actions}, net::Head::softmax(m), seed), inst.atoms, actions);
  inst.target = std::make_unique<rl::ZDistributionModel>(
      net::Mlp({sd, hidden, m * actions}, net::Head::softmax(m), seed + 1000), inst.atoms, actions);
  randomize_biases(inst.model->net(), g);
  randomize_biases(inst.target->net(), g);
  inst.transitions = random_transitions(g, g.integer(1, 6), sd, actions);
  for (const auto& t : inst.transitions) inst.batch.push_back(&t);
  inst.gamma = g.uniform(0.5, 1.0);
  return inst;
}

}  // namespace detail

inline double rkhs_case(std::uint64_t seed) { return detail::density_case(seed, &cme::rkhs_loss); }
inline double sq_case(std::uint64_t seed) { return detail::density_case(seed, &cme::sq_loss); }

inline double df_case(std::uint64_t seed) {
  Gen g(seed);
  const int dx = g.integer(1, 3), d = g.integer(2, 5), b = g.integer(2, 7);
  net::Mlp model({dx, g.integer(3, 7), d}, net::Head::relu(), seed);
  detail::randomize_biases(model, g);
  const Eigen::MatrixXd x = g.matrix(dx, b, -1.5, 1.5);
  const Eigen::VectorXd y = g.vector(b, -2.0, 2.0);
  const double lambda = g.uniform(0.05, 1.0);
  const kernels::GaussianDensityKernel k(g.uniform(0.3, 2.0));
  const auto analytic = baselines::df_loss(model, x, y, lambda, k);
  const auto n = numeric_gradient(model, [&] { return baselines::df_loss(model, x, y, lambda, k).value; });
  return relative_error(flatten(model, analytic.grads), n);
}

inline double mmd2_case(std::uint64_t seed) {
  auto inst = detail::rl_instance(seed);
  const kernels::GaussianDensityKernel k(Gen(seed ^ 0x5eed).uniform(0.5, 3.0));
  auto loss = [&] { return rl::mmd2_bellman_loss(inst.batch, *inst.model, *inst.target, k, inst.gamma); };
  const auto analytic = loss();
  const auto n = numeric_gradient(inst.model->net(), [&] { return loss().value; });
  return relative_error(flatten(inst.model->net(), analytic.grads), n);
}

inline double fuse_case(std::uint64_t seed) {
  auto inst = detail::rl_instance(seed);
  const auto family = kernels::fuse_bandwidth_grid(inst.atoms, Gen(seed ^ 0xf00d).integer(1, 5));
  auto loss = [&] { return rl::fuse_loss(inst.batch, *inst.model, *inst.target, family, inst.gamma); };
  const auto analytic = loss();
  const auto n = numeric_gradient(inst.model->net(), [&] { return loss().value; });
  return relative_error(flatten(inst.model->net(), analytic.grads), n);
}

inline double dqn_case(std::uint64_t seed) {
  Gen g(seed);
  const int sd = g.integer(2, 4), actions = g.integer(2, 3), hidden = g.integer(3, 6);
  rl::ExpectationModel model(net::Mlp({sd, hidden, actions}, net::Head::linear(), seed), actions);
  rl::ExpectationModel target(net::Mlp({sd, hidden, actions}, net::Head::linear(), seed + 1000), actions);
  detail::randomize_biases(model.net(), g);
  const auto transitions = detail::random_transitions(g, g.integer(1, 6), sd, actions);
  std::vector<const rl::Transition*> batch;
  for (const auto& t : transitions) batch.push_back(&t);
  const double gamma = g.uniform(0.5, 1.0);
  const auto analytic = rl::dqn_loss(batch, model, target, gamma);
  const auto n = numeric_gradient(model.net(), [&] { return rl::dqn_loss(batch, model, target, gamma).value; });
  return relative_error(flatten(model.net(), analytic.grads), n);
}

}  // namespace nkcme::testing
