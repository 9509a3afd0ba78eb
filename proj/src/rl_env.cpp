#include "nkcme/rl_env.hpp"

#include "nkcme/error.hpp"
#include "nkcme/record.hpp"
#include "nkcme/rl_params.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace nkcme::rl {

EnvId parse_env(const std::string& name) {
  if (name == "cartpole") return EnvId::cartpole;
  if (name == "acrobot") return EnvId::acrobot;
  if (name == "mountaincar") return EnvId::mountaincar;
  throw ConfigError("unknown environment '" + name + "' (valid: cartpole, acrobot, mountaincar)");
}

std::string env_name(EnvId id) {
  switch (id) {
    case EnvId::cartpole: return "cartpole";
    case EnvId::acrobot: return "acrobot";
    case EnvId::mountaincar: return "mountaincar";
  }
  return "cartpole";
}

EnvState Environment::reset(std::uint64_t seed) {
  reset_physics(seed);
  restart_episode();
  return state_;
}

void Environment::restart_episode() {
  state_ = {observe(), 0, false, false};
  initialized_ = true;
}

StepResult Environment::step(int action) {
  if (!initialized_) throw UsageError("step() before reset()");
  if (done()) throw UsageError("step() after the episode has ended; call reset()");
  if (action < 0 || action >= num_actions())
    throw DomainError("action " + std::to_string(action) + " is invalid for " + env_name(id()));
  const auto [reward, terminated] = advance(action);
  state_.observation = observe();
  ++state_.step_count;
  state_.terminated = terminated;
  state_.truncated = !terminated && state_.step_count >= max_steps();
  return {state_.observation, reward, state_.terminated, state_.truncated};
}

// CartPole

int CartPole::max_steps() const { return params::cartpole::max_steps; }

void CartPole::reset_physics(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-params::cartpole::init_range, params::cartpole::init_range);
  for (int i = 0; i < 4; ++i) s_[i] = u(rng);
}

std::pair<double, bool> CartPole::advance(int action) {
  using namespace params::cartpole;
  const double f = action == 1 ? force : -force;
  const double c = std::cos(s_[2]);
  const double s = std::sin(s_[2]);
  const double temp = (f + pole_mass_length * s_[3] * s_[3] * s) / total_mass;
  const double theta_acc =
      (gravity * s - c * temp) / (half_length * (4.0 / 3.0 - mass_pole * c * c / total_mass));
  const double x_acc = temp - pole_mass_length * theta_acc * c / total_mass;
  s_[0] += tau * s_[1];
  s_[1] += tau * x_acc;
  s_[2] += tau * s_[3];
  s_[3] += tau * theta_acc;
  const bool fail = s_[0] < -x_limit || s_[0] > x_limit || s_[2] < -theta_limit || s_[2] > theta_limit;
  return {1.0, fail};
}

// Acrobot

int Acrobot::max_steps() const { return params::acrobot::max_steps; }

void Acrobot::reset_physics(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-params::acrobot::init_range, params::acrobot::init_range);
  for (int i = 0; i < 4; ++i) s_[i] = u(rng);
}

void Acrobot::set_physical_state(const Eigen::Vector4d& s) {
  s_ = s;
  restart_episode();
}

namespace {

Eigen::Vector4d acrobot_derivative(const Eigen::Vector4d& s, double torque) {
  using namespace params::acrobot;
  const double m1 = link_mass_1, m2 = link_mass_2, l1 = link_length_1;
  const double lc1 = link_com_1, lc2 = link_com_2, i1 = link_moi, i2 = link_moi, g = gravity;
  const double t1 = s[0], t2 = s[1], dt1 = s[2], dt2 = s[3];
  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(t2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(t2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(t1 + t2 - std::numbers::pi / 2.0);
  const double phi1 = -m2 * l1 * lc2 * dt2 * dt2 * std::sin(t2) - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * std::sin(t2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(t1 - std::numbers::pi / 2.0) + phi2;
  const double ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * std::sin(t2) - phi2) /
                      (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddt1 = -(d2 * ddt2 + phi1) / d1;
  return {dt1, dt2, ddt1, ddt2};
}

}  // namespace

std::pair<double, bool> Acrobot::advance(int action) {
  using namespace params::acrobot;
  const double torque = torques[action];
  const Eigen::Vector4d k1 = acrobot_derivative(s_, torque);
  const Eigen::Vector4d k2 = acrobot_derivative(s_ + 0.5 * dt * k1, torque);
  const Eigen::Vector4d k3 = acrobot_derivative(s_ + 0.5 * dt * k2, torque);
  const Eigen::Vector4d k4 = acrobot_derivative(s_ + dt * k3, torque);
  s_ += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  s_[2] = std::clamp(s_[2], -max_vel_1, max_vel_1);
  s_[3] = std::clamp(s_[3], -max_vel_2, max_vel_2);
  const bool goal = -std::cos(s_[0]) - std::cos(s_[1] + s_[0]) > 1.0;
  return {-1.0, goal};
}

Eigen::VectorXd Acrobot::observe() const {
  Eigen::VectorXd o(6);
  o << std::cos(s_[0]), std::sin(s_[0]), std::cos(s_[1]), std::sin(s_[1]), s_[2], s_[3];
  return o;
}

// MountainCar

int MountainCar::max_steps() const { return params::mountaincar::max_steps; }

void MountainCar::reset_physics(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(params::mountaincar::init_low, params::mountaincar::init_high);
  s_ = {u(rng), 0.0};
}

std::pair<double, bool> MountainCar::advance(int action) {
  using namespace params::mountaincar;
  double pos = s_[0], vel = s_[1];
  vel += (action - 1) * force + std::cos(3.0 * pos) * (-gravity);
  vel = std::clamp(vel, -max_speed, max_speed);
  pos += vel;
  pos = std::clamp(pos, min_position, max_position);
  if (pos == min_position && vel < 0.0) vel = 0.0;
  s_ = {pos, vel};
  return {-1.0, pos >= goal_position && vel >= goal_velocity};
}

std::unique_ptr<Environment> make_env(EnvId id) {
  switch (id) {
    case EnvId::cartpole: return std::make_unique<CartPole>();
    case EnvId::acrobot: return std::make_unique<Acrobot>();
    case EnvId::mountaincar: return std::make_unique<MountainCar>();
  }
  throw ConfigError("unknown environment id");
}

std::unique_ptr<Environment> make_env(const std::string& name) { return make_env(parse_env(name)); }

double episode_return(const Policy& policy, Environment& env, std::uint64_t seed) {
  Eigen::VectorXd obs = env.reset(seed).observation;
  double total = 0.0;
  while (!env.done()) {
    const auto r = env.step(policy(obs));
    total += r.reward;
    obs = r.next_observation;
  }
  return total;
}

std::string trajectory_csv(Environment& env, std::uint64_t seed, const std::vector<int>& actions) {
  std::ostringstream os;
  os << "step,action,reward,terminated,truncated";
  for (int i = 0; i < env.observation_dim(); ++i) os << ",obs_" << i;
  os << '\n';
  auto emit = [&](int step, const std::string& action, double reward, bool term, bool trunc,
                  const Eigen::VectorXd& obs) {
    os << step << ',' << action << ',' << record::format_double(reward) << ',' << term << ',' << trunc;
    for (Eigen::Index i = 0; i < obs.size(); ++i) os << ',' << record::format_double(obs[i]);
    os << '\n';
  };
  emit(0, "", 0.0, false, false, env.reset(seed).observation);
  for (std::size_t t = 0; t < actions.size() && !env.done(); ++t) {
    const auto r = env.step(actions[t]);
    emit(static_cast<int>(t) + 1, std::to_string(actions[t]), r.reward, r.terminated, r.truncated,
         r.next_observation);
  }
  return os.str();
}

}  // namespace nkcme::rl
