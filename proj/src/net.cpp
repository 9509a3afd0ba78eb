#include "nkcme/net.hpp"

#include "nkcme/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nkcme::net {

void Gradients::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
  return *this;
}

Mlp::Mlp(std::vector<int> layer_sizes, Head head, std::uint64_t seed,
         std::vector<int> spectral_norm_layers)
    : sizes_(std::move(layer_sizes)), head_(head), sn_layers_(std::move(spectral_norm_layers)),
      seed_(seed) {
  if (sizes_.size() < 2) throw ShapeError("network needs at least an input and an output size");
  for (int s : sizes_)
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  if (head_.kind == HeadKind::softmax_per_group &&
      (head_.group_size <= 0 || sizes_.back() % head_.group_size != 0))
    throw ShapeError("softmax group size must divide the output size");

  std::mt19937_64 rng(seed);
  const std::size_t n_layers = sizes_.size() - 1;
  layers_.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int fan_in = sizes_[l];
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> uni(-limit, limit);
    auto& layer = layers_[l];
    layer.weight.resize(sizes_[l + 1], fan_in);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = uni(rng);
    layer.bias = Eigen::VectorXd::Zero(sizes_[l + 1]);
  }

  std::sort(sn_layers_.begin(), sn_layers_.end());
  sn_layers_.erase(std::unique(sn_layers_.begin(), sn_layers_.end()), sn_layers_.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int idx : sn_layers_) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= n_layers)
      throw ShapeError("spectral norm layer index out of range");
    Eigen::VectorXd u(layers_[idx].weight.rows());
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(rng);
    sn_vectors_.push_back(u.normalized());
  }
}

void Mlp::apply_head(Eigen::MatrixXd& z) const {
  switch (head_.kind) {
    case HeadKind::linear:
      return;
    case HeadKind::relu:
      z = z.cwiseMax(0.0);
      return;
    case HeadKind::softmax_per_group: {
      const int g = head_.group_size;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        for (Eigen::Index start = 0; start < z.rows(); start += g) {
          auto seg = z.col(c).segment(start, g);
          const double m = seg.maxCoeff();
          seg = (seg.array() - m).exp().matrix();
          seg /= seg.sum();
        }
      }
      return;
    }
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_size())
    throw ShapeError("input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(input_size()));
  Eigen::MatrixXd out = forward_batch(x);
  return out.col(0);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != input_size())
    throw ShapeError("input batch has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(input_size()));
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) {
      a = z.cwiseMax(0.0);
    } else {
      apply_head(z);
      a = std::move(z);
    }
  }
  return a;
}

ForwardCache Mlp::forward_cached(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != input_size())
    throw ShapeError("input batch has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(input_size()));
  ForwardCache cache;
  cache.inputs.reserve(layers_.size());
  cache.preactivation.reserve(layers_.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    cache.inputs.push_back(std::move(a));
    cache.preactivation.push_back(z);
    if (l + 1 < layers_.size()) {
      a = z.cwiseMax(0.0);
    } else {
      apply_head(z);
      cache.output = std::move(z);
    }
  }
  return cache;
}

namespace {

// Gradient with respect to the last layer's pre-activation.
Eigen::MatrixXd head_backward(const Head& head, const ForwardCache& cache,
                              const Eigen::Ref<const Eigen::MatrixXd>& upstream) {
  switch (head.kind) {
    case HeadKind::linear:
      return upstream;
    case HeadKind::relu:
      return upstream.cwiseProduct((cache.preactivation.back().array() > 0.0).cast<double>().matrix());
    case HeadKind::softmax_per_group: {
      const auto& o = cache.output;
      Eigen::MatrixXd delta(o.rows(), o.cols());
      const int g = head.group_size;
      for (Eigen::Index c = 0; c < o.cols(); ++c) {
        for (Eigen::Index start = 0; start < o.rows(); start += g) {
          auto os = o.col(c).segment(start, g);
          auto gs = upstream.col(c).segment(start, g);
          const double dot = os.dot(gs);
          delta.col(c).segment(start, g) = os.cwiseProduct((gs.array() - dot).matrix());
        }
      }
      return delta;
    }
  }
  return upstream;
}

}  // namespace

Gradients Mlp::backward(const ForwardCache& cache,
                        const Eigen::Ref<const Eigen::MatrixXd>& upstream) const {
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols())
    throw ShapeError("upstream gradient shape does not match the forward output");
  Gradients g;
  const std::size_t n = layers_.size();
  g.weight.resize(n);
  g.bias.resize(n);
  Eigen::MatrixXd delta = head_backward(head_, cache, upstream);
  for (std::size_t l = n; l-- > 0;) {
    g.weight[l].noalias() = delta * cache.inputs[l].transpose();
    g.bias[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers_[l].weight.transpose() * delta;
      delta = back.cwiseProduct((cache.preactivation[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

Eigen::MatrixXd Mlp::input_gradient(const ForwardCache& cache,
                                    const Eigen::Ref<const Eigen::MatrixXd>& upstream) const {
  Eigen::MatrixXd delta = head_backward(head_, cache, upstream);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Eigen::MatrixXd back = layers_[l].weight.transpose() * delta;
    if (l > 0)
      delta = back.cwiseProduct((cache.preactivation[l - 1].array() > 0.0).cast<double>().matrix());
    else
      delta = std::move(back);
  }
  return delta;
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (const auto& layer : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

std::vector<ParamBlock> Mlp::parameter_blocks() {
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& w = layers_[l].weight;
    auto& b = layers_[l].bias;
    blocks.push_back({"layer " + std::to_string(l) + " weight",
                      std::span<double>(w.data(), static_cast<std::size_t>(w.size()))});
    blocks.push_back({"layer " + std::to_string(l) + " bias",
                      std::span<double>(b.data(), static_cast<std::size_t>(b.size()))});
  }
  return blocks;
}

std::vector<std::span<const double>> Mlp::gradient_blocks(const Gradients& g) const {
  if (g.weight.size() != layers_.size() || g.bias.size() != layers_.size())
    throw ShapeError("gradient layer count does not match the network");
  std::vector<std::span<const double>> blocks;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (g.weight[l].rows() != layers_[l].weight.rows() || g.weight[l].cols() != layers_[l].weight.cols() ||
        g.bias[l].size() != layers_[l].bias.size())
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
    blocks.emplace_back(g.weight[l].data(), static_cast<std::size_t>(g.weight[l].size()));
    blocks.emplace_back(g.bias[l].data(), static_cast<std::size_t>(g.bias[l].size()));
  }
  return blocks;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

void Mlp::apply_spectral_norm(int iterations) {
  for (std::size_t i = 0; i < sn_layers_.size(); ++i)
    spectral_normalize(layers_[sn_layers_[i]], sn_vectors_[i], iterations);
}

bool Mlp::all_finite() const {
  for (const auto& layer : layers_)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

void adamw_step(std::span<const ParamBlock> params, std::span<const std::span<const double>> grads,
                OptimizerState& state) {
  if (params.size() != grads.size()) throw ShapeError("parameter and gradient block counts differ");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].values.size() != grads[b].size())
      throw ShapeError("gradient size mismatch in " + params[b].name);
    for (double g : grads[b])
      if (!std::isfinite(g)) throw OptimizerError("non-finite gradient in " + params[b].name);
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(p.values.size())));
      state.second_moment.push_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(p.values.size())));
    }
  } else if (state.first_moment.size() != params.size()) {
    throw ShapeError("optimizer state was built for a different parameter layout");
  }

  const auto& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    Eigen::Map<Eigen::ArrayXd> p(params[b].values.data(), static_cast<Eigen::Index>(params[b].values.size()));
    Eigen::Map<const Eigen::ArrayXd> g(grads[b].data(), static_cast<Eigen::Index>(grads[b].size()));
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    if (m.size() != p.size()) throw ShapeError("optimizer moment shape mismatch in " + params[b].name);
    if (params[b].weight_decay) p -= c.learning_rate * c.weight_decay * p;
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    p -= c.learning_rate * (m / bias1) / ((v / bias2).sqrt() + c.epsilon);
  }
}

void adamw_step(Mlp& net, const Gradients& grads, OptimizerState& state) {
  auto params = net.parameter_blocks();
  auto g = net.gradient_blocks(grads);
  adamw_step(params, g, state);
}

namespace {

// Runs power iteration in place and returns (sigma, right singular vector).
double power_iterate(const Eigen::MatrixXd& w, Eigen::VectorXd& u, int iterations) {
  if (u.size() != w.rows() || u.norm() == 0.0) u = Eigen::VectorXd::Ones(w.rows()).normalized();
  Eigen::VectorXd v;
  for (int it = 0; it < std::max(iterations, 1); ++it) {
    v = w.transpose() * u;
    if (v.norm() == 0.0) {
      // u orthogonal to the range of w: restart from the largest column
      Eigen::Index col = 0;
      w.colwise().norm().maxCoeff(&col);
      u = w.col(col).normalized();
      v = w.transpose() * u;
    }
    v.normalize();
    u = w * v;
    u.normalize();
  }
  return u.dot(w * v);
}

}  // namespace

double spectral_norm_estimate(const Eigen::MatrixXd& w, Eigen::VectorXd u, int iterations) {
  if (w.norm() == 0.0) return 0.0;
  return power_iterate(w, u, iterations);
}

SpectralNormResult spectral_normalize(DenseLayer& layer, Eigen::VectorXd& u, int iterations) {
  if (layer.weight.norm() == 0.0) return {0.0, true};
  const double sigma = power_iterate(layer.weight, u, iterations);
  layer.weight /= sigma;
  return {sigma, false};
}

}  // namespace nkcme::net
