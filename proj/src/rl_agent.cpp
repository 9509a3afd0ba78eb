#include "nkcme/rl_agent.hpp"

#include "nkcme/error.hpp"
#include "nkcme/seed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace nkcme::rl {

LossMode parse_loss_mode(const std::string& s) {
  if (s == "fuse") return LossMode::fuse;
  if (s == "single") return LossMode::single;
  if (s == "dqn") return LossMode::dqn;
  throw ConfigError("unknown loss mode '" + s + "' (valid: fuse, single, dqn)");
}

std::string loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::fuse: return "fuse";
    case LossMode::single: return "single";
    case LossMode::dqn: return "dqn";
  }
  return "fuse";
}

void AgentConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (update_period < 1 || target_sync_period < 1 || eval_period < 1)
    throw ConfigError("update, target-sync and eval periods must be at least 1");
  if (epsilon_decay_steps < 1) throw ConfigError("epsilon_decay_steps must be at least 1");
  for (double e : {epsilon_start, epsilon_end, eval_epsilon})
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilon values must lie in [0, 1]");
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative (0 = environment default)");
  if (!(single_sigma > 0.0)) throw ConfigError("single_sigma must be positive");
  if (fuse_kernels < 1) throw ConfigError("fuse_kernels must be at least 1");
  if (buffer_capacity < static_cast<std::size_t>(batch_size))
    throw ConfigError("buffer_capacity must hold at least one batch");
  if (atoms < 2) throw ConfigError("atoms must be at least 2");
  if (!(v_max > v_min)) throw ConfigError("v_max must exceed v_min");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
}

double default_learning_rate(EnvId env) { return env == EnvId::cartpole ? 1e-4 : 1e-3; }

double effective_learning_rate(const AgentConfig& c, EnvId env) {
  return c.learning_rate > 0.0 ? c.learning_rate : default_learning_rate(env);
}

double epsilon_at(const AgentConfig& c, long long step) {
  const double frac = std::min(1.0, static_cast<double>(step) / c.epsilon_decay_steps);
  return std::max(c.epsilon_end, c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start));
}

// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw DomainError("replay buffer capacity must be positive");
  data_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (!std::isfinite(t.reward)) throw DomainError("transition reward is not finite");
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    return;
  }
  data_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw DomainError("replay index out of range");
  return data_.size() < capacity_ ? data_[i] : data_[(head_ + i) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  if (batch > data_.size()) throw DomainError("cannot sample more transitions than stored");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> idx;
  idx.reserve(batch);
  while (idx.size() < batch) {
    const std::size_t i = pick(rng);
    if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
  }
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i : idx) out.push_back(&data_[i]);
  return out;
}

// Models

ZDistributionModel::ZDistributionModel(net::Mlp net, Eigen::VectorXd atoms, int num_actions)
    : net_(std::move(net)), atoms_(std::move(atoms)), actions_(num_actions) {
  if (num_actions < 1) throw DomainError("need at least one action");
  if (net_.output_size() != atoms_.size() * num_actions)
    throw ShapeError("network output must be atoms x actions");
  if (net_.head().kind != net::HeadKind::softmax_per_group || net_.head().group_size != atoms_.size())
    throw ShapeError("distributional model needs a softmax head grouped by atom count");
}

Eigen::VectorXd ZDistributionModel::weights(const Eigen::Ref<const Eigen::VectorXd>& state, int action) const {
  if (action < 0 || action >= actions_) throw DomainError("invalid action index " + std::to_string(action));
  return net_.forward(state).segment(action * atoms_.size(), atoms_.size());
}

Eigen::VectorXd ZDistributionModel::q_values(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  const Eigen::VectorXd out = net_.forward(state);
  const auto m = atoms_.size();
  Eigen::VectorXd q(actions_);
  for (int a = 0; a < actions_; ++a) q[a] = atoms_.dot(out.segment(a * m, m));
  return q;
}

ExpectationModel::ExpectationModel(net::Mlp net, int num_actions) : net_(std::move(net)), actions_(num_actions) {
  if (net_.output_size() != num_actions) throw ShapeError("expectation model needs one output per action");
}

Eigen::VectorXd ExpectationModel::q_values(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  return net_.forward(state);
}

Eigen::VectorXd make_atoms(const AgentConfig& c) {
  Eigen::VectorXd eta(c.atoms);
  for (int j = 0; j < c.atoms; ++j) eta[j] = c.v_min + (c.v_max - c.v_min) * j / (c.atoms - 1);
  eta[c.atoms - 1] = c.v_max;
  return eta;
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace

ZDistributionModel make_z_model(int state_dim, int num_actions, const AgentConfig& c, std::uint64_t seed) {
  return ZDistributionModel(
      net::Mlp(layer_sizes(state_dim, c.hidden, c.atoms * num_actions), net::Head::softmax(c.atoms), seed),
      make_atoms(c), num_actions);
}

ExpectationModel make_expectation_model(int state_dim, int num_actions, const AgentConfig& c, std::uint64_t seed) {
  return ExpectationModel(net::Mlp(layer_sizes(state_dim, c.hidden, num_actions), net::Head::linear(), seed),
                          num_actions);
}

double q_value(const ZDistributionModel& model, const Eigen::Ref<const Eigen::VectorXd>& state, int action) {
  return model.atoms().dot(model.weights(state, action));
}

int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& q) {
  int best = 0;
  for (int a = 1; a < q.size(); ++a)
    if (q[a] > q[best]) best = a;
  return best;
}

int greedy_action(const ZDistributionModel& model, const Eigen::Ref<const Eigen::VectorXd>& state) {
  return greedy_action(model.q_values(state));
}

int greedy_action(const ExpectationModel& model, const Eigen::Ref<const Eigen::VectorXd>& state) {
  return greedy_action(model.q_values(state));
}

int nearest_atom(const Eigen::VectorXd& atoms, double r) {
  int best = 0;
  for (int j = 1; j < atoms.size(); ++j)
    if (std::abs(atoms[j] - r) < std::abs(atoms[best] - r)) best = j;
  return best;
}

// Losses

BellmanKernelCache::BellmanKernelCache(Eigen::VectorXd atoms, double gamma, kernels::KernelFamily family)
    : atoms_(std::move(atoms)), gamma_(gamma), family_(std::move(family)), k_te_(family_.size()) {
  const Eigen::VectorXd scaled = gamma_ * atoms_;
  for (const auto& k : family_.kernels) {
    k_ee_.push_back(kernels::gram_1d(k, atoms_, atoms_));
    k_tt_.push_back(kernels::gram_1d(k, scaled, scaled));
  }
}

const Eigen::MatrixXd& BellmanKernelCache::k_tau_eta(std::size_t k, double reward) {
  auto& slot = k_te_[k];
  auto it = slot.find(reward);
  if (it == slot.end()) {
    const Eigen::VectorXd tau = (reward + gamma_ * atoms_.array()).matrix();
    it = slot.emplace(reward, kernels::gram_1d(family_.kernels[k], tau, atoms_)).first;
  }
  return it->second;
}

double log_mean_exp(std::span<const double> d, std::vector<double>* softmax_weights) {
  if (d.empty()) throw DomainError("log-mean-exp of no values");
  const double m = *std::max_element(d.begin(), d.end());
  double s = 0.0;
  for (double v : d) s += std::exp(v - m);
  if (softmax_weights) {
    softmax_weights->resize(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) (*softmax_weights)[k] = std::exp(d[k] - m) / s;
  }
  return m + std::log(s / static_cast<double>(d.size()));
}

namespace {

void check_batch(std::span<const Transition* const> batch, int num_actions) {
  if (batch.empty()) throw DomainError("empty transition batch");
  for (const auto* t : batch)
    if (t->action < 0 || t->action >= num_actions) throw DomainError("transition action out of range");
}

void stack_states(std::span<const Transition* const> batch, Eigen::MatrixXd& s, Eigen::MatrixXd& s_next) {
  const auto dim = batch[0]->state.size();
  s.resize(dim, static_cast<Eigen::Index>(batch.size()));
  s_next.resize(dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->state.size() != dim || batch[i]->next_state.size() != dim)
      throw ShapeError("transition states differ in dimension");
    s.col(static_cast<Eigen::Index>(i)) = batch[i]->state;
    s_next.col(static_cast<Eigen::Index>(i)) = batch[i]->next_state;
  }
}

// Per-kernel batch-mean squared MMD and its gradient with respect to the
// predicted weights, followed by one backward pass with the combined upstream.
RlLoss distributional_loss(std::span<const Transition* const> batch, const ZDistributionModel& model,
                           const ZDistributionModel& target, BellmanKernelCache& cache, bool fuse) {
  check_batch(batch, model.num_actions());
  const auto m = model.atoms().size();
  const auto b = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd s, s_next;
  stack_states(batch, s, s_next);

  const auto fwd = model.net().forward_cached(s);
  const Eigen::MatrixXd t_out = target.net().forward_batch(s_next);
  Eigen::MatrixXd w(m, b), v(m, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto* tr = batch[static_cast<std::size_t>(i)];
    w.col(i) = fwd.output.col(i).segment(tr->action * m, m);
    if (tr->terminal) {
      v.col(i).setZero();
      v(nearest_atom(model.atoms(), tr->reward), i) = 1.0;
    } else {
      Eigen::VectorXd q(target.num_actions());
      for (int a = 0; a < target.num_actions(); ++a) q[a] = target.atoms().dot(t_out.col(i).segment(a * m, m));
      v.col(i) = t_out.col(i).segment(greedy_action(q) * m, m);
    }
  }

  const std::size_t nk = cache.family().size();
  std::vector<double> d(nk, 0.0);
  std::vector<Eigen::MatrixXd> g(nk);
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t k = 0; k < nk; ++k) {
    const Eigen::MatrixXd& kee = cache.k_eta_eta(k);
    const Eigen::MatrixXd kw = kee * w;
    g[k] = 2.0 * kw;
    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto* tr = batch[static_cast<std::size_t>(i)];
      const Eigen::MatrixXd& ktt = tr->terminal ? kee : cache.k_tau_tau(k);
      const Eigen::MatrixXd& kte = tr->terminal ? kee : cache.k_tau_eta(k, tr->reward);
      const Eigen::VectorXd ktv = kte.transpose() * v.col(i);
      total += v.col(i).dot(ktt * v.col(i)) - 2.0 * ktv.dot(w.col(i)) + w.col(i).dot(kw.col(i));
      g[k].col(i) -= 2.0 * ktv;
    }
    d[k] = total * inv_b;
    g[k] *= inv_b;
  }

  RlLoss out;
  out.per_kernel = d;
  Eigen::MatrixXd gw;
  if (fuse) {
    std::vector<double> sm;
    out.value = log_mean_exp(d, &sm);
    gw = Eigen::MatrixXd::Zero(m, b);
    for (std::size_t k = 0; k < nk; ++k) gw += sm[k] * g[k];
  } else {
    out.value = d[0];
    gw = g[0];
  }
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(fwd.output.rows(), b);
  for (Eigen::Index i = 0; i < b; ++i) upstream.block(batch[static_cast<std::size_t>(i)]->action * m, i, m, 1) = gw.col(i);
  out.grads = model.net().backward(fwd, upstream);
  return out;
}

void check_compatible(const ZDistributionModel& model, const ZDistributionModel& target) {
  if (model.atoms().size() != target.atoms().size() || model.num_actions() != target.num_actions())
    throw ShapeError("model and target network shapes differ");
}

}  // namespace

RlLoss mmd2_bellman_loss(std::span<const Transition* const> batch, const ZDistributionModel& model,
                         const ZDistributionModel& target, const kernels::GaussianDensityKernel& k, double gamma) {
  check_compatible(model, target);
  BellmanKernelCache cache(model.atoms(), gamma, kernels::KernelFamily({k}));
  return distributional_loss(batch, model, target, cache, false);
}

RlLoss fuse_loss(std::span<const Transition* const> batch, const ZDistributionModel& model,
                 const ZDistributionModel& target, const kernels::KernelFamily& family, double gamma) {
  check_compatible(model, target);
  BellmanKernelCache cache(model.atoms(), gamma, family);
  return distributional_loss(batch, model, target, cache, true);
}

RlLoss fuse_loss(std::span<const Transition* const> batch, const ZDistributionModel& model,
                 const ZDistributionModel& target, BellmanKernelCache& cache) {
  check_compatible(model, target);
  return distributional_loss(batch, model, target, cache, true);
}

RlLoss dqn_loss(std::span<const Transition* const> batch, const ExpectationModel& model,
                const ExpectationModel& target, double gamma) {
  check_batch(batch, model.num_actions());
  const auto b = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd s, s_next;
  stack_states(batch, s, s_next);
  const auto fwd = model.net().forward_cached(s);
  const Eigen::MatrixXd t_out = target.net().forward_batch(s_next);
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(fwd.output.rows(), b);
  RlLoss out;
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto* tr = batch[static_cast<std::size_t>(i)];
    const double y = tr->terminal ? tr->reward : tr->reward + gamma * t_out.col(i).maxCoeff();
    const double delta = fwd.output(tr->action, i) - y;
    total += delta * delta;
    upstream(tr->action, i) = 2.0 * delta / static_cast<double>(b);
  }
  out.value = total / static_cast<double>(b);
  out.grads = model.net().backward(fwd, upstream);
  return out;
}

// Training

namespace {

struct Learner {
  virtual ~Learner() = default;
  virtual Eigen::VectorXd q(const Eigen::VectorXd& s) const = 0;
  virtual double update(std::span<const Transition* const> batch) = 0;
  virtual void sync_target() = 0;
  virtual const net::Mlp& net() const = 0;
};

struct DistributionalLearner final : Learner {
  DistributionalLearner(ZDistributionModel m, kernels::KernelFamily fam, double gamma, net::AdamWConfig opt)
      : model(std::move(m)), target(model), cache(model.atoms(), gamma, std::move(fam)), state(opt) {}

  Eigen::VectorXd q(const Eigen::VectorXd& s) const override { return model.q_values(s); }
  double update(std::span<const Transition* const> batch) override {
    RlLoss l = fuse_loss(batch, model, target, cache);
    if (std::isfinite(l.value)) net::adamw_step(model.net(), l.grads, state);
    return l.value;
  }
  void sync_target() override { target = model; }
  const net::Mlp& net() const override { return model.net(); }

  ZDistributionModel model, target;
  BellmanKernelCache cache;
  net::OptimizerState state;
};

struct ExpectationLearner final : Learner {
  ExpectationLearner(ExpectationModel m, double g, net::AdamWConfig opt)
      : model(std::move(m)), target(model), gamma(g), state(opt) {}

  Eigen::VectorXd q(const Eigen::VectorXd& s) const override { return model.q_values(s); }
  double update(std::span<const Transition* const> batch) override {
    RlLoss l = dqn_loss(batch, model, target, gamma);
    if (std::isfinite(l.value)) net::adamw_step(model.net(), l.grads, state);
    return l.value;
  }
  void sync_target() override { target = model; }
  const net::Mlp& net() const override { return model.net(); }

  ExpectationModel model, target;
  double gamma;
  net::OptimizerState state;
};

int epsilon_greedy(const Learner& learner, const Eigen::VectorXd& s, double eps, int actions, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < eps) return std::uniform_int_distribution<int>(0, actions - 1)(rng);
  return greedy_action(learner.q(s));
}

}  // namespace

AgentRunResult train_agent(EnvId env_id, const AgentConfig& config, std::uint64_t seed) {
  config.validate();
  auto env = make_env(env_id);
  auto eval_env = make_env(env_id);
  const int dim = env->observation_dim();
  const int actions = env->num_actions();
  const net::AdamWConfig opt{effective_learning_rate(config, env_id), 0.9, 0.999, 1e-8, 0.0};
  const std::uint64_t net_seed = derive_seed(seed, 0);

  std::unique_ptr<Learner> learner;
  Eigen::VectorXd atoms;
  if (config.loss_mode == LossMode::dqn) {
    learner = std::make_unique<ExpectationLearner>(make_expectation_model(dim, actions, config, net_seed),
                                                   config.gamma, opt);
  } else {
    auto model = make_z_model(dim, actions, config, net_seed);
    atoms = model.atoms();
    kernels::KernelFamily fam = config.loss_mode == LossMode::fuse
                                    ? kernels::fuse_bandwidth_grid(atoms, config.fuse_kernels)
                                    : kernels::KernelFamily({kernels::GaussianDensityKernel(config.single_sigma)});
    learner = std::make_unique<DistributionalLearner>(std::move(model), std::move(fam), config.gamma, opt);
  }

  std::mt19937_64 act_rng(derive_seed(seed, 1));
  std::mt19937_64 replay_rng(derive_seed(seed, 2));
  std::mt19937_64 eval_rng(derive_seed(seed, 3));
  const std::uint64_t env_stream = derive_seed(seed, 4);
  const std::uint64_t eval_stream = derive_seed(seed, 5);

  ReplayBuffer buffer(config.buffer_capacity);
  AgentRunResult result{learner->net(), atoms, {}, 0};
  std::uint64_t episode = 0;
  Eigen::VectorXd obs = env->reset(derive_seed(env_stream, episode)).observation;

  for (long long step = 1; step <= config.total_steps; ++step) {
    const int a = epsilon_greedy(*learner, obs, epsilon_at(config, step - 1), actions, act_rng);
    const StepResult r = env->step(a);
    buffer.push({obs, a, r.reward, r.next_observation, r.terminated});
    if (r.terminated || r.truncated)
      obs = env->reset(derive_seed(env_stream, ++episode)).observation;
    else
      obs = r.next_observation;

    if (step % config.update_period == 0 && buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
      const auto batch = buffer.sample(static_cast<std::size_t>(config.batch_size), replay_rng);
      const double loss = learner->update(batch);
      ++result.updates;
      if (!std::isfinite(loss)) throw DivergenceError("RL loss is not finite", step);
      if (!learner->net().all_finite()) throw DivergenceError("network parameters are not finite", step);
    }
    if (step % config.target_sync_period == 0) learner->sync_target();
    if (step % config.eval_period == 0) {
      const Policy policy = [&](const Eigen::VectorXd& s) {
        return epsilon_greedy(*learner, s, config.eval_epsilon, actions, eval_rng);
      };
      const auto k = static_cast<std::uint64_t>(step / config.eval_period);
      result.curve.push_back({step, episode_return(policy, *eval_env, derive_seed(eval_stream, k))});
    }
  }
  result.model = learner->net();
  return result;
}

double final_window_mean(const std::vector<EvalRow>& curve, std::size_t window) {
  if (curve.empty()) throw DomainError("empty evaluation curve");
  const std::size_t n = std::min(window, curve.size());
  double s = 0.0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) s += curve[i].eval_return;
  return s / static_cast<double>(n);
}

}  // namespace nkcme::rl
