#include "nkcme/baselines.hpp"

#include "nkcme/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace nkcme::baselines {

namespace {

Eigen::LLT<Eigen::MatrixXd> ridge_factor(const Eigen::MatrixXd& gram, double lambda, const char* what) {
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + ": ridge system is not positive definite");
  return llt;
}

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("ridge parameter lambda must be positive");
}

}  // namespace

DfLoss df_loss_from_features(const Eigen::Ref<const Eigen::MatrixXd>& features,
                             const Eigen::Ref<const Eigen::MatrixXd>& k_y, double lambda) {
  check_lambda(lambda);
  const Eigen::Index n = features.cols();
  if (n < 1) throw ShapeError("deep-feature loss needs at least one sample");
  if (k_y.rows() != n || k_y.cols() != n) throw ShapeError("K_Y must be n x n with n = number of feature columns");
  const Eigen::MatrixXd psi = features;
  const auto llt = ridge_factor(psi * psi.transpose(), lambda, "deep-feature loss");
  const Eigen::MatrixXd b = llt.solve(psi);  // A^{-1} Psi
  const Eigen::MatrixXd bk = b * k_y;
  DfLoss out;
  out.value = k_y.trace() - (k_y.array() * (psi.transpose() * b).array()).sum();
  out.grad_features = -2.0 * bk + 2.0 * (bk * b.transpose()) * psi;
  return out;
}

DfNetLoss df_loss(const net::Mlp& feature_net, const Eigen::Ref<const Eigen::MatrixXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& y, double lambda,
                  const kernels::GaussianDensityKernel& output_kernel) {
  if (x.cols() != y.size()) throw ShapeError("inputs and outputs differ in sample count");
  const auto cache = feature_net.forward_cached(x);
  const Eigen::MatrixXd k_y = kernels::gram_1d(output_kernel, y, y);
  DfLoss l = df_loss_from_features(cache.output, k_y, lambda);
  return {l.value, feature_net.backward(cache, l.grad_features)};
}

Eigen::VectorXd df_weights_from_features(const Eigen::Ref<const Eigen::MatrixXd>& train_features,
                                         const Eigen::Ref<const Eigen::VectorXd>& query_features, double lambda) {
  check_lambda(lambda);
  if (query_features.size() != train_features.rows()) throw ShapeError("query feature dimension mismatch");
  const Eigen::MatrixXd psi = train_features;
  const auto llt = ridge_factor(psi * psi.transpose(), lambda, "deep-feature weights");
  return psi.transpose() * llt.solve(Eigen::VectorXd(query_features));
}

DeepFeatureModel::DeepFeatureModel(net::Mlp feature_net, double lambda, kernels::GaussianDensityKernel output_kernel,
                                   const Eigen::Ref<const Eigen::MatrixXd>& train_inputs, Eigen::VectorXd train_outputs)
    : net_(std::move(feature_net)), lambda_(lambda), kernel_(output_kernel), y_(std::move(train_outputs)) {
  check_lambda(lambda_);
  if (train_inputs.cols() != y_.size()) throw ShapeError("training inputs and outputs differ in sample count");
  if (y_.size() < 1) throw DomainError("deep-feature model needs training data");
  psi_ = net_.forward_batch(train_inputs);
  chol_ = ridge_factor(psi_ * psi_.transpose(), lambda_, "deep-feature model");
}

Eigen::VectorXd DeepFeatureModel::weights(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd q = net_.forward(x);
  return psi_.transpose() * chol_.solve(q);
}

cme::CMEmbedding DeepFeatureModel::embedding(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return {y_, kernel_, weights(x)};
}

void DfConfig::validate() const {
  check_lambda(lambda);
  if (bandwidth_rule == BandwidthRule::fixed && !(fixed_bandwidth > 0.0))
    throw ConfigError("fixed_bandwidth must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (hidden.empty()) throw ConfigError("deep-feature network needs at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
}

double df_bandwidth(const DfConfig& config, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (config.bandwidth_rule == BandwidthRule::fixed) return config.fixed_bandwidth;
  return kernels::median_heuristic_1d(y, config.seed);
}

DfTrainResult train_df(const data::LabeledDataset& data, const DfConfig& config) {
  config.validate();
  const auto n = data.size();
  if (n < 1) throw DomainError("training set is empty");
  const kernels::GaussianDensityKernel k(df_bandwidth(config, data.outputs));

  std::vector<int> sizes{data.input_dim()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  net::Mlp model(sizes, net::Head::relu(), config.seed);
  net::OptimizerState state({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<double> losses;
  Eigen::MatrixXd xb;
  Eigen::VectorXd yb;
  long long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
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
      DfNetLoss l = df_loss(model, xb, yb, config.lambda, k);
      if (!std::isfinite(l.value)) throw DivergenceError("deep-feature loss is not finite", step);
      sum += l.value;
      ++batches;
      net::adamw_step(model, l.grads, state);
    }
    losses.push_back(sum / std::max(batches, 1));
  }
  return {DeepFeatureModel(std::move(model), config.lambda, k, data.inputs, data.outputs), std::move(losses)};
}

ClassicalCMEModel::ClassicalCMEModel(InputKernel kind, double bandwidth, double lambda, Eigen::MatrixXd train_inputs,
                                     Eigen::VectorXd train_outputs, kernels::GaussianDensityKernel output_kernel)
    : kind_(kind),
      bandwidth_(bandwidth),
      lambda_(lambda),
      x_(std::move(train_inputs)),
      y_(std::move(train_outputs)),
      out_kernel_(output_kernel) {
  check_lambda(lambda_);
  if (x_.cols() != y_.size()) throw ShapeError("training inputs and outputs differ in sample count");
  if (y_.size() < 1) throw DomainError("classical CME needs training data");
  if (y_.size() > classical_max_n)
    throw DomainError("classical CME is limited to n <= " + std::to_string(classical_max_n) + ", got " +
                      std::to_string(y_.size()));
  if (kind_ == InputKernel::gaussian && !(bandwidth_ > 0.0)) throw DomainError("input bandwidth must be positive");
  chol_ = ridge_factor(input_gram(), lambda_, "classical CME");
}

double ClassicalCMEModel::input_kernel(const Eigen::Ref<const Eigen::VectorXd>& a,
                                       const Eigen::Ref<const Eigen::VectorXd>& b) const {
  if (kind_ == InputKernel::linear) return a.dot(b);
  return std::exp(-(a - b).squaredNorm() / (2.0 * bandwidth_ * bandwidth_));
}

Eigen::MatrixXd ClassicalCMEModel::input_gram() const {
  const auto n = x_.cols();
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) g(i, j) = g(j, i) = input_kernel(x_.col(i), x_.col(j));
  return g;
}

ClassicalCMEModel fit_classical(const data::LabeledDataset& data, double lambda, InputKernel kind,
                                std::uint64_t seed) {
  const double bx = kind == InputKernel::gaussian ? kernels::median_heuristic(data.inputs, seed) : 1.0;
  const kernels::GaussianDensityKernel ky(kernels::median_heuristic_1d(data.outputs, seed));
  return ClassicalCMEModel(kind, bx, lambda, data.inputs, data.outputs, ky);
}

Eigen::VectorXd classical_weights(const ClassicalCMEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto& xs = model.train_inputs();
  if (x.size() != xs.rows()) throw ShapeError("query dimension does not match the training inputs");
  Eigen::VectorXd kx(xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) kx[i] = model.input_kernel(xs.col(i), x);
  return model.factor().solve(kx);
}

cme::CMEmbedding classical_embedding(const ClassicalCMEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return {model.train_outputs(), model.output_kernel(), classical_weights(model, x)};
}

}  // namespace nkcme::baselines
