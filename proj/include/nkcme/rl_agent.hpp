#pragma once

// Distributional Q-learning with CME-parameterized return distributions:
// Z(s, a) is embedded as sum_j k(., eta_j) w_j(s, a) with w(s, a) on the simplex.

#include "nkcme/kernels.hpp"
#include "nkcme/net.hpp"
#include "nkcme/rl_env.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nkcme::rl {

enum class LossMode { fuse, single, dqn };

LossMode parse_loss_mode(const std::string& s);
std::string loss_mode_name(LossMode m);

struct AgentConfig {
  double gamma = 0.99;
  int batch_size = 32;
  int update_period = 2;
  int target_sync_period = 100;
  double epsilon_start = 1.0;
  double epsilon_end = 0.01;
  int epsilon_decay_steps = 10000;
  double eval_epsilon = 0.001;
  int eval_period = 100;
  long long total_steps = 100000;
  double learning_rate = 0.0;  // 0 selects the per-environment default
  LossMode loss_mode = LossMode::fuse;
  double single_sigma = 10.0;
  int fuse_kernels = 10;
  std::size_t buffer_capacity = 10000;
  int atoms = 51;
  double v_min = -100.0;
  double v_max = 100.0;
  std::vector<int> hidden = {50, 50};

  void validate() const;
};

/// 1e-4 for CartPole, 1e-3 otherwise.
double default_learning_rate(EnvId env);

/// The configured rate, or the environment default when it is 0.
double effective_learning_rate(const AgentConfig& c, EnvId env);

/// Linear decay per environment step, floored at epsilon_end. step counts from 0.
double epsilon_at(const AgentConfig& c, long long step);

struct Transition {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminal = false;
};

/// FIFO ring buffer with seeded uniform sampling without replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;

  std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> data_;
};

/// Softmax-per-action head over a fixed atom grid.
class ZDistributionModel {
 public:
  ZDistributionModel(net::Mlp net, Eigen::VectorXd atoms, int num_actions);

  /// Probability vector over atoms for one action.
  Eigen::VectorXd weights(const Eigen::Ref<const Eigen::VectorXd>& state, int action) const;
  Eigen::VectorXd q_values(const Eigen::Ref<const Eigen::VectorXd>& state) const;

  net::Mlp& net() { return net_; }
  const net::Mlp& net() const { return net_; }
  const Eigen::VectorXd& atoms() const { return atoms_; }
  int num_actions() const { return actions_; }

 private:
  net::Mlp net_;
  Eigen::VectorXd atoms_;
  int actions_;
};

/// Linear head with one output per action.
class ExpectationModel {
 public:
  ExpectationModel(net::Mlp net, int num_actions);

  Eigen::VectorXd q_values(const Eigen::Ref<const Eigen::VectorXd>& state) const;

  net::Mlp& net() { return net_; }
  const net::Mlp& net() const { return net_; }
  int num_actions() const { return actions_; }

 private:
  net::Mlp net_;
  int actions_;
};

/// 51 atoms on [-100, 100] by default.
Eigen::VectorXd make_atoms(const AgentConfig& c);

ZDistributionModel make_z_model(int state_dim, int num_actions, const AgentConfig& c, std::uint64_t seed);
ExpectationModel make_expectation_model(int state_dim, int num_actions, const AgentConfig& c, std::uint64_t seed);

double q_value(const ZDistributionModel& model, const Eigen::Ref<const Eigen::VectorXd>& state, int action);

/// argmax_a q; ties go to the lowest index.
int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& q);
int greedy_action(const ZDistributionModel& model, const Eigen::Ref<const Eigen::VectorXd>& state);
int greedy_action(const ExpectationModel& model, const Eigen::Ref<const Eigen::VectorXd>& state);

/// Index of the atom closest to r; ties go to the lower index.
int nearest_atom(const Eigen::VectorXd& atoms, double r);

/// Kernel matrices reused across updates. Non-terminal targets sit at
/// r + gamma eta, so K(tau, tau) is fixed and K(tau, eta) depends only on r.
class BellmanKernelCache {
 public:
  BellmanKernelCache(Eigen::VectorXd atoms, double gamma, kernels::KernelFamily family);

  const kernels::KernelFamily& family() const { return family_; }
  const Eigen::VectorXd& atoms() const { return atoms_; }
  double gamma() const { return gamma_; }
  const Eigen::MatrixXd& k_eta_eta(std::size_t k) const { return k_ee_[k]; }
  const Eigen::MatrixXd& k_tau_tau(std::size_t k) const { return k_tt_[k]; }
  /// K(r + gamma eta, eta) for kernel k.
  const Eigen::MatrixXd& k_tau_eta(std::size_t k, double reward);

 private:
  Eigen::VectorXd atoms_;
  double gamma_;
  kernels::KernelFamily family_;
  std::vector<Eigen::MatrixXd> k_ee_, k_tt_;
  std::vector<std::map<double, Eigen::MatrixXd>> k_te_;
};

struct RlLoss {
  double value = 0.0;
  net::Gradients grads;
  std::vector<double> per_kernel;  // batch-mean squared MMD per kernel (empty for dqn)
};

/// Batch-mean squared MMD between Z_theta(s, a) and the target r + gamma Z_target(s', a*),
/// a* greedy under the target's own q-values. Gradients flow only through `model`.
RlLoss mmd2_bellman_loss(std::span<const Transition* const> batch, const ZDistributionModel& model,
                         const ZDistributionModel& target, const kernels::GaussianDensityKernel& k, double gamma);

/// log(mean_k exp(D_k)) over the family, D_k the batch-mean squared MMD under kernel k.
RlLoss fuse_loss(std::span<const Transition* const> batch, const ZDistributionModel& model,
                 const ZDistributionModel& target, const kernels::KernelFamily& family, double gamma);

/// Same as fuse_loss but reusing precomputed kernel matrices.
RlLoss fuse_loss(std::span<const Transition* const> batch, const ZDistributionModel& model,
                 const ZDistributionModel& target, BellmanKernelCache& cache);

/// Numerically stable log(mean exp(d)) and its softmax weights.
double log_mean_exp(std::span<const double> d, std::vector<double>* softmax_weights = nullptr);

/// Mean squared TD error with target r + gamma max_a' Q_target(s', a') (r alone when terminal).
RlLoss dqn_loss(std::span<const Transition* const> batch, const ExpectationModel& model,
                const ExpectationModel& target, double gamma);

struct EvalRow {
  long long step;
  double eval_return;
};

struct AgentRunResult {
  net::Mlp model;
  Eigen::VectorXd atoms;  // empty for dqn
  std::vector<EvalRow> curve;
  long long updates = 0;
};

/// Full training run; deterministic in (env, config, seed).
AgentRunResult train_agent(EnvId env, const AgentConfig& config, std::uint64_t seed);

/// Mean eval return over the last `window` curve entries.
double final_window_mean(const std::vector<EvalRow>& curve, std::size_t window = 10);

}  // namespace nkcme::rl
