#pragma once

// Comparison estimators: the deep-feature CME (learned features, ridge
// weights over the training set) and the classical Gram-inversion CME.

#include "nkcme/cme.hpp"
#include "nkcme/datasets.hpp"
#include "nkcme/kernels.hpp"
#include "nkcme/net.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace nkcme::baselines {

struct DfLoss {
  double value = 0.0;
  Eigen::MatrixXd grad_features;  // d x n, same shape as the features
};

/// tr(K_Y) - tr(K_Y Psi^T (Psi Psi^T + lambda I)^{-1} Psi); Psi is (d x n).
DfLoss df_loss_from_features(const Eigen::Ref<const Eigen::MatrixXd>& features,
                             const Eigen::Ref<const Eigen::MatrixXd>& k_y, double lambda);

struct DfNetLoss {
  double value = 0.0;
  net::Gradients grads;
};

/// Minibatch loss; K_Y is the Gram of the batch outputs under `output_kernel`.
DfNetLoss df_loss(const net::Mlp& feature_net, const Eigen::Ref<const Eigen::MatrixXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& y, double lambda,
                  const kernels::GaussianDensityKernel& output_kernel);

/// Psi^T (Psi Psi^T + lambda I)^{-1} psi(x) for a single query feature vector.
Eigen::VectorXd df_weights_from_features(const Eigen::Ref<const Eigen::MatrixXd>& train_features,
                                         const Eigen::Ref<const Eigen::VectorXd>& query_features, double lambda);

class DeepFeatureModel {
 public:
  DeepFeatureModel(net::Mlp feature_net, double lambda, kernels::GaussianDensityKernel output_kernel,
                   const Eigen::Ref<const Eigen::MatrixXd>& train_inputs, Eigen::VectorXd train_outputs);

  /// n-vector of weights over the training outputs.
  Eigen::VectorXd weights(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// The weighted embedding with atoms = training outputs.
  cme::CMEmbedding embedding(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  const net::Mlp& feature_net() const { return net_; }
  double lambda() const { return lambda_; }
  const kernels::GaussianDensityKernel& output_kernel() const { return kernel_; }
  const Eigen::MatrixXd& train_features() const { return psi_; }
  const Eigen::VectorXd& train_outputs() const { return y_; }

 private:
  net::Mlp net_;
  double lambda_;
  kernels::GaussianDensityKernel kernel_;
  Eigen::MatrixXd psi_;
  Eigen::VectorXd y_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
};

enum class BandwidthRule { median, fixed };

struct DfConfig {
  double lambda = 0.1;
  BandwidthRule bandwidth_rule = BandwidthRule::median;
  double fixed_bandwidth = 0.1;
  int epochs = 1000;
  int batch_size = 50;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {50, 50};  // the last entry is the feature dimension

  void validate() const;
};

struct DfTrainResult {
  DeepFeatureModel model;
  std::vector<double> epoch_loss;
};

/// Output bandwidth chosen by the config's rule on the training outputs.
double df_bandwidth(const DfConfig& config, const Eigen::Ref<const Eigen::VectorXd>& y);

DfTrainResult train_df(const data::LabeledDataset& data, const DfConfig& config);

enum class InputKernel { gaussian, linear };

constexpr Eigen::Index classical_max_n = 2000;

class ClassicalCMEModel {
 public:
  /// bandwidth is ignored for the linear kernel.
  ClassicalCMEModel(InputKernel kind, double bandwidth, double lambda, Eigen::MatrixXd train_inputs,
                    Eigen::VectorXd train_outputs, kernels::GaussianDensityKernel output_kernel);

  double input_kernel(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) const;
  Eigen::MatrixXd input_gram() const;

  InputKernel kind() const { return kind_; }
  double bandwidth() const { return bandwidth_; }
  double lambda() const { return lambda_; }
  const Eigen::MatrixXd& train_inputs() const { return x_; }
  const Eigen::VectorXd& train_outputs() const { return y_; }
  const kernels::GaussianDensityKernel& output_kernel() const { return out_kernel_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return chol_; }

 private:
  InputKernel kind_;
  double bandwidth_;
  double lambda_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  kernels::GaussianDensityKernel out_kernel_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
};

/// Gaussian input kernel with median-heuristic bandwidth, median-heuristic output kernel.
ClassicalCMEModel fit_classical(const data::LabeledDataset& data, double lambda = 0.1,
                                InputKernel kind = InputKernel::gaussian, std::uint64_t seed = 0);

/// (K_X + lambda I)^{-1} k_X(x).
Eigen::VectorXd classical_weights(const ClassicalCMEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

cme::CMEmbedding classical_embedding(const ClassicalCMEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace nkcme::baselines
