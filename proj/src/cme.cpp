#include "nkcme/cme.hpp"

#include "nkcme/error.hpp"
#include "nkcme/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace nkcme::cme {

LocationGrid::LocationGrid(Eigen::VectorXd points) : eta_(std::move(points)) {
  if (eta_.size() < 1) throw DomainError("location grid must be nonempty");
  for (Eigen::Index i = 1; i < eta_.size(); ++i)
    if (!(eta_[i] > eta_[i - 1])) throw DomainError("location grid must be strictly increasing");
}

LocationGrid make_grid(const Eigen::Ref<const Eigen::VectorXd>& outputs, int m) {
  if (outputs.size() == 0) throw DomainError("cannot build a grid from no outputs");
  if (m < 2) throw DomainError("grid needs at least two points");
  const double lo = outputs.minCoeff();
  const double hi = outputs.maxCoeff();
  if (!(hi > lo)) throw DomainError("all outputs are equal; the grid would be degenerate");
  Eigen::VectorXd eta(m);
  for (int a = 0; a < m; ++a) eta[a] = lo + (hi - lo) * a / (m - 1);
  eta[m - 1] = hi;
  return LocationGrid(std::move(eta));
}

Strategy parse_strategy(const std::string& s) {
  if (s == "iterative") return Strategy::iterative;
  if (s == "joint") return Strategy::joint;
  if (s == "fixed_sigma") return Strategy::fixed_sigma;
  throw ConfigError("unknown strategy '" + s + "' (valid: iterative, joint, fixed_sigma)");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::iterative: return "iterative";
    case Strategy::joint: return "joint";
    case Strategy::fixed_sigma: return "fixed_sigma";
  }
  return "joint";
}

void TrainingConfig::validate() const {
  if (!(sigma_init > 0.0)) throw ConfigError("sigma_init must be positive");
  if (sigma_update_period < 1) throw ConfigError("sigma_update_period must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (grid_size < 2) throw ConfigError("grid_size must be at least 2");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
}

namespace {

// Shared by both losses: the data-fit term is computed by the same code path.
LossValue grid_loss(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& w,
                    const LocationGrid& grid, double sigma, double norm_bandwidth_factor, bool with_sigma_grad) {
  if (y.size() == 0) throw DomainError("loss of an empty batch");
  if (w.rows() != grid.size() || w.cols() != y.size())
    throw ShapeError("weights must be (M x B) with M = grid size and B = batch size");
  if (!w.allFinite()) throw DomainError("non-finite network output in loss");
  const kernels::GaussianDensityKernel k(sigma);
  const kernels::GaussianDensityKernel k_norm = k.scaled(norm_bandwidth_factor);
  const auto& eta = grid.points();
  const double inv_b = 1.0 / static_cast<double>(y.size());

  LossValue out;
  if (!with_sigma_grad) {
    const Eigen::MatrixXd ky = kernels::gram_1d(k, y, eta);       // B x M
    const Eigen::MatrixXd g = kernels::gram_1d(k_norm, eta, eta);  // M x M
    const Eigen::MatrixXd gw = g * w;
    out.value = (-2.0 * ky.transpose().cwiseProduct(w).sum() + w.cwiseProduct(gw).sum()) * inv_b;
    out.grad_weights = (-2.0 * ky.transpose() + 2.0 * gw) * inv_b;
    return out;
  }
  const auto ky = kernels::gram_with_dlog_sigma_1d(k, y, eta);
  // log(c sigma) = log(sigma) + const, so the scaled kernel's own log-derivative applies
  const auto g = kernels::gram_with_dlog_sigma_1d(k_norm, eta, eta);
  const Eigen::MatrixXd gw = g.value * w;
  out.value = (-2.0 * ky.value.transpose().cwiseProduct(w).sum() + w.cwiseProduct(gw).sum()) * inv_b;
  out.grad_weights = (-2.0 * ky.value.transpose() + 2.0 * gw) * inv_b;
  // sum_i w_i^T dG w_i = <dG, W W^T>
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(w.rows(), w.rows());
  s.selfadjointView<Eigen::Lower>().rankUpdate(w);
  double quad = 0.0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    quad += g.dlog_sigma(j, j) * s(j, j);
    for (Eigen::Index i = j + 1; i < s.rows(); ++i) quad += 2.0 * g.dlog_sigma(i, j) * s(i, j);
  }
  out.grad_log_sigma = (-2.0 * ky.dlog_sigma.transpose().cwiseProduct(w).sum() + quad) * inv_b;
  return out;
}

NetLoss net_loss(const net::Mlp& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& y, const LocationGrid& grid, double sigma,
                 double factor) {
  const auto cache = model.forward_cached(x);
  LossValue lv = grid_loss(y, cache.output, grid, sigma, factor, true);
  return {lv.value, model.backward(cache, lv.grad_weights), lv.grad_log_sigma};
}

}  // namespace

LossValue rkhs_loss_from_weights(const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const Eigen::Ref<const Eigen::MatrixXd>& weights, const LocationGrid& grid,
                                 double sigma) {
  return grid_loss(y, weights, grid, sigma, 1.0, true);
}

LossValue sq_loss_from_weights(const Eigen::Ref<const Eigen::VectorXd>& y,
                               const Eigen::Ref<const Eigen::MatrixXd>& weights, const LocationGrid& grid,
                               double sigma) {
  if (!(sigma > 0.0)) throw DomainError("SQ loss needs a positive bandwidth");
  return grid_loss(y, weights, grid, sigma, std::numbers::sqrt2, true);
}

NetLoss rkhs_loss(const net::Mlp& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& y, const LocationGrid& grid, double sigma) {
  return net_loss(model, x, y, grid, sigma, 1.0);
}

NetLoss sq_loss(const net::Mlp& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& y, const LocationGrid& grid, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("SQ loss needs a positive bandwidth");
  return net_loss(model, x, y, grid, sigma, std::numbers::sqrt2);
}

net::Mlp make_weight_network(int input_dim, const TrainingConfig& config) {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.grid_size);
  std::vector<int> sn;
  if (config.spectral_norm) {
    const int n_layers = static_cast<int>(sizes.size()) - 1;
    if (n_layers >= 3) sn.push_back(1);
    sn.push_back(n_layers - 1);
  }
  return net::Mlp(sizes, net::Head::linear(), config.seed, sn);
}

TrainResult train(const data::LabeledDataset& data, const TrainingConfig& config) {
  config.validate();
  if (data.size() < 1) throw DomainError("training set is empty");
  TrainResult result{make_weight_network(data.input_dim(), config), config.sigma_init,
                     make_grid(data.outputs, config.grid_size), {}};
  if (config.spectral_norm) result.model.apply_spectral_norm(20);

  double log_sigma = std::log(config.sigma_init);
  net::OptimizerState theta_state({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  net::OptimizerState sigma_state({config.learning_rate, 0.9, 0.999, 1e-8, 0.0});

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  const auto n = data.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Eigen::MatrixXd xb;
  Eigen::VectorXd yb;
  long long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
      xb.resize(data.inputs.rows(), b);
      yb.resize(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const auto idx = order[static_cast<std::size_t>(start + j)];
        xb.col(j) = data.inputs.col(idx);
        yb[j] = data.outputs[idx];
      }
      ++step;
      const double sigma = std::exp(log_sigma);
      const auto cache = result.model.forward_cached(xb);
      if (!cache.output.allFinite()) throw DivergenceError("non-finite network output", step);
      const bool joint = config.strategy == Strategy::joint;
      LossValue lv = grid_loss(yb, cache.output, result.grid, sigma, 1.0, joint);
      if (!std::isfinite(lv.value)) throw DivergenceError("loss is not finite", step);
      loss_sum += lv.value;
      ++batches;
      net::Gradients g = result.model.backward(cache, lv.grad_weights);

      if (joint) {
        auto params = result.model.parameter_blocks();
        auto grads = result.model.gradient_blocks(g);
        params.push_back({"log sigma", std::span<double>(&log_sigma, 1), false});
        grads.emplace_back(&lv.grad_log_sigma, 1);
        net::adamw_step(params, grads, theta_state);
      } else {
        net::adamw_step(result.model, g, theta_state);
      }
      if (config.spectral_norm) result.model.apply_spectral_norm(1);

      if (config.strategy == Strategy::iterative && step % config.sigma_update_period == 0) {
        const Eigen::MatrixXd w = result.model.forward_batch(xb);
        LossValue sq = grid_loss(yb, w, result.grid, std::exp(log_sigma), std::numbers::sqrt2, true);
        if (!std::isfinite(sq.value)) throw DivergenceError("SQ loss is not finite", step);
        std::vector<net::ParamBlock> params{{"log sigma", std::span<double>(&log_sigma, 1), false}};
        std::vector<std::span<const double>> grads{std::span<const double>(&sq.grad_log_sigma, 1)};
        net::adamw_step(params, grads, sigma_state);
      }
      if (!std::isfinite(log_sigma)) throw DivergenceError("bandwidth is not finite", step);
    }
    result.history.push_back({epoch, loss_sum / std::max(batches, 1), std::exp(log_sigma)});
  }
  result.sigma = std::exp(log_sigma);
  return result;
}

CMEmbedding embed(const net::Mlp& model, const LocationGrid& grid, double sigma,
                  const Eigen::Ref<const Eigen::VectorXd>& x) {
  return {grid.points(), kernels::GaussianDensityKernel(sigma), model.forward(x)};
}

Eigen::MatrixXd embed_weights(const net::Mlp& model, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  return model.forward_batch(x);
}

double density_at(const CMEmbedding& emb, double y) {
  double s = 0.0;
  for (Eigen::Index a = 0; a < emb.atoms.size(); ++a) s += kernels::eval(emb.kernel, y, emb.atoms[a]) * emb.weights[a];
  return s;
}

Eigen::VectorXd density_at(const CMEmbedding& emb, const Eigen::Ref<const Eigen::VectorXd>& ys) {
  Eigen::VectorXd out(ys.size());
  parallel::for_each_index(ys.size(), [&](std::ptrdiff_t i) { out[i] = density_at(emb, ys[i]); });
  return out;
}

Eigen::VectorXd herding_candidate_grid(const CMEmbedding& emb, int count) {
  if (count < 2) throw DomainError("herding needs at least two candidates");
  const double lo = emb.atoms.minCoeff() - 3.0 * emb.kernel.sigma();
  const double hi = emb.atoms.maxCoeff() + 3.0 * emb.kernel.sigma();
  Eigen::VectorXd c(count);
  for (int i = 0; i < count; ++i) c[i] = lo + (hi - lo) * i / (count - 1);
  return c;
}

namespace {

template <class ForEach>
Eigen::VectorXd herd_impl(const CMEmbedding& emb, int n, int candidates, ForEach&& for_each) {
  if (n < 1) throw DomainError("herding needs n >= 1");
  if (emb.atoms.size() != emb.weights.size()) throw ShapeError("embedding atoms and weights differ in length");
  const Eigen::VectorXd cand = herding_candidate_grid(emb, candidates);
  const auto& k = emb.kernel;
  Eigen::VectorXd base(candidates);
  for_each(candidates, [&](std::ptrdiff_t c) {
    double s = 0.0;
    for (Eigen::Index a = 0; a < emb.atoms.size(); ++a)
      s += emb.weights[a] * k.at_sq_distance((cand[c] - emb.atoms[a]) * (cand[c] - emb.atoms[a]));
    base[c] = s;
  });
  Eigen::VectorXd penalty = Eigen::VectorXd::Zero(candidates);
  Eigen::VectorXd out(n);
  for (int t = 0; t < n; ++t) {
    const double scale = 1.0 / static_cast<double>(t + 1);
    Eigen::Index best = 0;
    double best_score = base[0] - scale * penalty[0];
    for (Eigen::Index c = 1; c < candidates; ++c) {
      const double s = base[c] - scale * penalty[c];
      if (s > best_score) best_score = s, best = c;
    }
    const double z = cand[best];
    out[t] = z;
    for_each(candidates, [&](std::ptrdiff_t c) { penalty[c] += k.at_sq_distance((cand[c] - z) * (cand[c] - z)); });
  }
  return out;
}

struct ParallelLoop {
  template <class F>
  void operator()(std::ptrdiff_t n, F&& f) const {
    parallel::for_each_index(n, std::forward<F>(f));
  }
};

struct SerialLoop {
  template <class F>
  void operator()(std::ptrdiff_t n, F&& f) const {
    for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
  }
};

}  // namespace

Eigen::VectorXd herd_samples(const CMEmbedding& emb, int n, int candidates) {
  return herd_impl(emb, n, candidates, ParallelLoop{});
}

namespace serial {

Eigen::VectorXd density_at(const CMEmbedding& emb, const Eigen::Ref<const Eigen::VectorXd>& ys) {
  Eigen::VectorXd out(ys.size());
  for (Eigen::Index i = 0; i < ys.size(); ++i) out[i] = cme::density_at(emb, ys[i]);
  return out;
}

Eigen::VectorXd herd_samples(const CMEmbedding& emb, int n, int candidates) {
  return herd_impl(emb, n, candidates, SerialLoop{});
}

}  // namespace serial

}  // namespace nkcme::cme
