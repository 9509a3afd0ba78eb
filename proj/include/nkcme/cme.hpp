#pragma once

// Neural-network conditional mean embedding:
//
//   mu(x) = sum_a phi(eta_a) f_a(x; theta)
//
// with a fixed location grid eta, a Gaussian density kernel of bandwidth
// sigma on the output space, and an MLP f producing the M weights.

#include "nkcme/datasets.hpp"
#include "nkcme/kernels.hpp"
#include "nkcme/net.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace nkcme::cme {

/// Strictly increasing, fixed 1-D output locations.
class LocationGrid {
 public:
  explicit LocationGrid(Eigen::VectorXd points);
  const Eigen::VectorXd& points() const { return eta_; }
  Eigen::Index size() const { return eta_.size(); }

 private:
  Eigen::VectorXd eta_;
};

/// M equally spaced points from min(outputs) to max(outputs) inclusive.
LocationGrid make_grid(const Eigen::Ref<const Eigen::VectorXd>& outputs, int m = 100);

/// Finite embedding sum_a w_a phi(atom_a). Weights are unconstrained.
struct CMEmbedding {
  Eigen::VectorXd atoms;
  kernels::GaussianDensityKernel kernel;
  Eigen::VectorXd weights;
};

enum class Strategy { iterative, joint, fixed_sigma };

Strategy parse_strategy(const std::string& s);
std::string strategy_name(Strategy s);

struct TrainingConfig {
  Strategy strategy = Strategy::joint;
  double sigma_init = 1.0;
  int sigma_update_period = 1;
  int epochs = 1000;
  int batch_size = 50;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  int grid_size = 100;
  std::vector<int> hidden = {50, 50};
  bool spectral_norm = false;  // second hidden layer and output layer

  void validate() const;
};

/// Batch loss value with its gradients. grad_weights is (M x B): the
/// derivative of the batch-mean loss with respect to each sample's weights.
struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd grad_weights;
  double grad_log_sigma = 0.0;
};

/// Mean over the batch of -2 sum_a k(y_i, eta_a) w_a + sum_{a,b} k(eta_a, eta_b) w_a w_b.
/// `weights` is (M x B), one column per sample.
LossValue rkhs_loss_from_weights(const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const Eigen::Ref<const Eigen::MatrixXd>& weights, const LocationGrid& grid,
                                 double sigma);

/// Same first term; second term uses bandwidth sqrt(2) sigma.
LossValue sq_loss_from_weights(const Eigen::Ref<const Eigen::VectorXd>& y,
                               const Eigen::Ref<const Eigen::MatrixXd>& weights, const LocationGrid& grid,
                               double sigma);

struct NetLoss {
  double value = 0.0;
  net::Gradients grads;
  double grad_log_sigma = 0.0;
};

/// Network-level losses; x is (d_x x B).
NetLoss rkhs_loss(const net::Mlp& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& y, const LocationGrid& grid, double sigma);
NetLoss sq_loss(const net::Mlp& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& y, const LocationGrid& grid, double sigma);

struct EpochRow {
  int epoch;
  double loss;   // mean rkhs loss over the epoch's minibatches
  double sigma;  // bandwidth at the end of the epoch
};

struct TrainResult {
  net::Mlp model;
  double sigma;
  LocationGrid grid;
  std::vector<EpochRow> history;
};

/// Builds the network for `data` (d_x inputs, grid_size outputs).
net::Mlp make_weight_network(int input_dim, const TrainingConfig& config);

/// Trains on already standardized data. Throws DivergenceError on a NaN loss.
TrainResult train(const data::LabeledDataset& data, const TrainingConfig& config);

CMEmbedding embed(const net::Mlp& model, const LocationGrid& grid, double sigma,
                  const Eigen::Ref<const Eigen::VectorXd>& x);

/// Weights for many inputs at once, (M x T).
Eigen::MatrixXd embed_weights(const net::Mlp& model, const Eigen::Ref<const Eigen::MatrixXd>& x);

/// sum_a k(y, eta_a) w_a. May be negative.
double density_at(const CMEmbedding& emb, double y);

/// density_at over many query points; OpenMP-parallel over queries.
Eigen::VectorXd density_at(const CMEmbedding& emb, const Eigen::Ref<const Eigen::VectorXd>& ys);

constexpr int herding_candidates = 2048;

/// Equally spaced herding candidates on [min atom - 3 sigma, max atom + 3 sigma].
Eigen::VectorXd herding_candidate_grid(const CMEmbedding& emb, int count = herding_candidates);

/// Greedy kernel herding against the (signed) embedding. Deterministic;
/// ties go to the smallest candidate index.
Eigen::VectorXd herd_samples(const CMEmbedding& emb, int n, int candidates = herding_candidates);

namespace serial {

Eigen::VectorXd density_at(const CMEmbedding& emb, const Eigen::Ref<const Eigen::VectorXd>& ys);
Eigen::VectorXd herd_samples(const CMEmbedding& emb, int n, int candidates = herding_candidates);

}  // namespace serial

}  // namespace nkcme::cme
