#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace nkcme::rl {

enum class EnvId { cartpole, acrobot, mountaincar };

EnvId parse_env(const std::string& name);
std::string env_name(EnvId id);

struct EnvState {
  Eigen::VectorXd observation;
  int step_count = 0;
  bool terminated = false;
  bool truncated = false;
};

struct StepResult {
  Eigen::VectorXd next_observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  EnvState reset(std::uint64_t seed);
  /// Throws UsageError once the episode has ended, DomainError on a bad action.
  StepResult step(int action);

  const EnvState& state() const { return state_; }
  bool done() const { return state_.terminated || state_.truncated; }

  virtual EnvId id() const = 0;
  virtual int observation_dim() const = 0;
  virtual int num_actions() const = 0;
  virtual int max_steps() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Internal physical state (unwrapped angles for Acrobot).
  virtual Eigen::VectorXd physical_state() const = 0;

 protected:
  /// Starts a fresh episode from the current physical state.
  void restart_episode();

  virtual void reset_physics(std::uint64_t seed) = 0;
  /// Advances one tick; returns (reward, terminated).
  virtual std::pair<double, bool> advance(int action) = 0;
  virtual Eigen::VectorXd observe() const = 0;

 private:
  EnvState state_;
  bool initialized_ = false;
};

class CartPole final : public Environment {
 public:
  EnvId id() const override { return EnvId::cartpole; }
  int observation_dim() const override { return 4; }
  int num_actions() const override { return 2; }
  int max_steps() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<CartPole>(*this); }
  Eigen::VectorXd physical_state() const override { return s_; }

 protected:
  void reset_physics(std::uint64_t seed) override;
  std::pair<double, bool> advance(int action) override;
  Eigen::VectorXd observe() const override { return s_; }

 private:
  Eigen::Vector4d s_ = Eigen::Vector4d::Zero();  // x, x_dot, theta, theta_dot
};

class Acrobot final : public Environment {
 public:
  EnvId id() const override { return EnvId::acrobot; }
  int observation_dim() const override { return 6; }
  int num_actions() const override { return 3; }
  int max_steps() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Acrobot>(*this); }
  Eigen::VectorXd physical_state() const override { return s_; }

  /// Sets the physical state directly, e.g. to start from rest. Resets the step count.
  void set_physical_state(const Eigen::Vector4d& s);

 protected:
  void reset_physics(std::uint64_t seed) override;
  std::pair<double, bool> advance(int action) override;
  Eigen::VectorXd observe() const override;

 private:
  Eigen::Vector4d s_ = Eigen::Vector4d::Zero();  // theta1, theta2, dtheta1, dtheta2
};

class MountainCar final : public Environment {
 public:
  EnvId id() const override { return EnvId::mountaincar; }
  int observation_dim() const override { return 2; }
  int num_actions() const override { return 3; }
  int max_steps() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<MountainCar>(*this); }
  Eigen::VectorXd physical_state() const override { return s_; }

 protected:
  void reset_physics(std::uint64_t seed) override;
  std::pair<double, bool> advance(int action) override;
  Eigen::VectorXd observe() const override { return s_; }

 private:
  Eigen::Vector2d s_ = Eigen::Vector2d::Zero();  // position, velocity
};

std::unique_ptr<Environment> make_env(EnvId id);
std::unique_ptr<Environment> make_env(const std::string& name);

using Policy = std::function<int(const Eigen::VectorXd& observation)>;

/// Plays one episode from reset(seed) and returns the undiscounted return.
double episode_return(const Policy& policy, Environment& env, std::uint64_t seed);

/// Rolls out `actions` from reset(seed) (stopping at episode end) and
/// renders step, action, reward, terminated, truncated, obs_0.. as CSV.
std::string trajectory_csv(Environment& env, std::uint64_t seed, const std::vector<int>& actions);

}  // namespace nkcme::rl
