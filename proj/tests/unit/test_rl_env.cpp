#include "../support/generators.hpp"

#include "nkcme/error.hpp"
#include "nkcme/rl_env.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nkcme;
using namespace nkcme::rl;
using nkcme::testing::Gen;

namespace {

// Published CartPole equations with literal constants, stepped independently.
Eigen::Vector4d cartpole_oracle_step(Eigen::Vector4d s, int action) {
  const double g = 9.8, mc = 1.0, mp = 0.1, l = 0.5, tau = 0.02;
  const double f = action == 1 ? 10.0 : -10.0;
  const double th = s[2], thd = s[3];
  const double temp = (f + mp * l * thd * thd * std::sin(th)) / (mc + mp);
  const double tha = (g * std::sin(th) - std::cos(th) * temp) / (l * (4.0 / 3.0 - mp * std::cos(th) * std::cos(th) / (mc + mp)));
  const double xa = temp - mp * l * tha * std::cos(th) / (mc + mp);
  return {s[0] + tau * s[1], s[1] + tau * xa, s[2] + tau * s[3], s[3] + tau * tha};
}

Eigen::Vector2d mountaincar_oracle_step(Eigen::Vector2d s, int action) {
  double v = std::clamp(s[1] + (action - 1) * 0.001 - 0.0025 * std::cos(3.0 * s[0]), -0.07, 0.07);
  double p = std::clamp(s[0] + v, -1.2, 0.6);
  if (p == -1.2 && v < 0) v = 0;
  return {p, v};
}

Policy random_policy(int actions, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng, actions](const Eigen::VectorXd&) { return std::uniform_int_distribution<int>(0, actions - 1)(*rng); };
}

}  // namespace

TEST_CASE("environment ids") {
  CHECK(parse_env("acrobot") == EnvId::acrobot);
  CHECK(env_name(EnvId::mountaincar) == "mountaincar");
  CHECK(make_env("cartpole")->observation_dim() == 4);
  CHECK(make_env("acrobot")->observation_dim() == 6);
  CHECK(make_env("mountaincar")->num_actions() == 3);
  CHECK_THROWS_WITH_AS(parse_env("pong"), doctest::Contains("cartpole, acrobot, mountaincar"), ConfigError);
}

TEST_CASE("reset is deterministic and starts inside the narrow ranges") {
  for (auto id : {EnvId::cartpole, EnvId::acrobot, EnvId::mountaincar}) {
    auto a = make_env(id), b = make_env(id);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto sa = a->reset(seed), sb = b->reset(seed);
      CHECK(sa.observation == sb.observation);
      CHECK(sa.step_count == 0);
      CHECK_FALSE(a->done());
    }
    CHECK(a->reset(1).observation != a->reset(2).observation);
  }
  CartPole cp;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto o = cp.reset(seed).observation;
    CHECK(o.cwiseAbs().maxCoeff() <= 0.05);
    CHECK(std::abs(o[2]) < 12.0 * M_PI / 180.0);
  }
  MountainCar mc;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto o = mc.reset(seed).observation;
    CHECK(o[0] >= -0.6);
    CHECK(o[0] < -0.4);
    CHECK(o[1] == 0.0);
    CHECK(mc.step(1).reward == -1.0);
  }
}

TEST_CASE("CartPole follows the published dynamics") {
  CartPole env;
  Eigen::Vector4d s = env.reset(3).observation;
  for (int t = 0; t < 10; ++t) {
    const auto r = env.step(t % 2);
    s = cartpole_oracle_step(s, t % 2);
    CHECK((r.next_observation - s).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.reward == 1.0);
    CHECK_FALSE(r.terminated);
  }
}

TEST_CASE("CartPole pushing one way fails on the angle limit") {
  CartPole env;
  env.reset(0);
  StepResult r;
  do r = env.step(1);
  while (!env.done());
  CHECK(r.terminated);
  CHECK_FALSE(r.truncated);
  CHECK(std::abs(r.next_observation[2]) > 12.0 * M_PI / 180.0);
  CHECK(env.state().step_count < 50);
}

TEST_CASE("MountainCar cannot climb by pushing right from the valley") {
  MountainCar env;
  Eigen::Vector2d s = env.reset(5).observation;
  double total = 0.0;
  while (!env.done()) {
    const auto r = env.step(2);
    s = mountaincar_oracle_step(s, 2);
    CHECK((r.next_observation - s).cwiseAbs().maxCoeff() <= 1e-15);
    total += r.reward;
  }
  CHECK(env.state().truncated);
  CHECK_FALSE(env.state().terminated);
  CHECK(env.state().step_count == 200);
  CHECK(total == -200.0);
}

TEST_CASE("MountainCar energy pumping reaches the goal") {
  MountainCar env;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double ret = episode_return([](const Eigen::VectorXd& o) { return o[1] >= 0 ? 2 : 0; }, env, seed);
    CHECK(env.state().terminated);
    CHECK(ret > -200.0);
    CHECK(ret <= -1.0);
    CHECK(env.physical_state()[0] >= 0.5);
  }
}

TEST_CASE("Acrobot at rest without torque truncates at 500") {
  Acrobot env;
  env.reset(0);
  env.set_physical_state(Eigen::Vector4d::Zero());
  double total = 0.0;
  double highest = -2.0;
  while (!env.done()) {
    total += env.step(1).reward;
    const auto s = env.physical_state();
    highest = std::max(highest, -std::cos(s[0]) - std::cos(s[0] + s[1]));
  }
  CHECK(env.state().truncated);
  CHECK(env.state().step_count == 500);
  CHECK(total == -500.0);
  CHECK(highest < -1.99);
}

TEST_CASE("Acrobot observation uses cos/sin pairs") {
  Acrobot env;
  env.reset(4);
  for (int t = 0; t < 30; ++t) env.step(t % 3);
  const auto o = env.state().observation;
  const auto s = env.physical_state();
  CHECK(o[0] == std::cos(s[0]));
  CHECK(o[1] == std::sin(s[0]));
  CHECK(o[2] == std::cos(s[1]));
  CHECK(o[3] == std::sin(s[1]));
  CHECK(o[4] == s[2]);
  CHECK(o[5] == s[3]);
}

TEST_CASE("random CartPole policy scores well below 500") {
  CartPole env;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) total += episode_return(random_policy(2, seed), env, 1000 + seed);
  CHECK(total / 200 < 50.0);
}

TEST_CASE("returns stay inside the reward bounds") {
  struct Bound {
    EnvId id;
    double lo, hi;
  };
  for (const auto& b : {Bound{EnvId::cartpole, 1, 500}, Bound{EnvId::acrobot, -500, -1}, Bound{EnvId::mountaincar, -200, -1}}) {
    auto env = make_env(b.id);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const double ret = episode_return(random_policy(env->num_actions(), seed), *env, seed);
      CHECK(ret >= b.lo);
      CHECK(ret <= b.hi);
      CHECK(env->state().observation.allFinite());
      CHECK(env->state().step_count <= env->max_steps());
    }
  }
  CartPole cp;
  const double balanced = episode_return([](const Eigen::VectorXd& o) { return o[2] + 0.5 * o[3] > 0 ? 1 : 0; }, cp, 0);
  CHECK(balanced <= 500.0);
  CHECK(cp.state().step_count == static_cast<int>(balanced));
}

TEST_CASE("identical seeds and actions give identical trajectories") {
  Gen g(7);
  for (auto id : {EnvId::cartpole, EnvId::acrobot, EnvId::mountaincar}) {
    auto env = make_env(id);
    std::vector<int> actions;
    for (int t = 0; t < 300; ++t) actions.push_back(g.integer(0, env->num_actions() - 1));
    const auto a = trajectory_csv(*env, 9, actions);
    const auto b = trajectory_csv(*env->clone(), 9, actions);
    CHECK(a == b);
    CHECK(a.rfind("step,action,reward,terminated,truncated,obs_0", 0) == 0);
  }
}

TEST_CASE("stepping misuse") {
  CartPole env;
  CHECK_THROWS_AS(env.step(0), UsageError);
  env.reset(0);
  CHECK_THROWS_AS(env.step(2), DomainError);
  while (!env.done()) env.step(0);
  CHECK_THROWS_AS(env.step(0), UsageError);
  env.reset(1);
  CHECK_NOTHROW(env.step(0));
}
