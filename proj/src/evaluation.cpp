#include "nkcme/evaluation.hpp"

#include "nkcme/error.hpp"
#include "nkcme/metrics.hpp"
#include "nkcme/parallel.hpp"
#include "nkcme/seed.hpp"

namespace nkcme::eval {

EmbeddingSampler::EmbeddingSampler(EmbedFn embed, std::optional<data::Standardizer> standardizer, int candidates)
    : embed_(std::move(embed)), standardizer_(std::move(standardizer)), candidates_(candidates) {}

std::vector<double> EmbeddingSampler::sample(const Eigen::VectorXd& x, int n, std::uint64_t) const {
  Eigen::VectorXd mx = x;
  if (standardizer_) mx = data::standardize_inputs(x, *standardizer_);
  Eigen::VectorXd z = cme::herd_samples(embed_(mx), n, candidates_);
  if (standardizer_) z = data::destandardize_outputs(z, *standardizer_);
  return {z.data(), z.data() + z.size()};
}

EmbeddingSampler cme_sampler(const net::Mlp& model, const cme::LocationGrid& grid, double sigma,
                             std::optional<data::Standardizer> standardizer) {
  return EmbeddingSampler([&model, &grid, sigma](const Eigen::VectorXd& x) { return cme::embed(model, grid, sigma, x); },
                          std::move(standardizer));
}

EmbeddingSampler df_sampler(const baselines::DeepFeatureModel& model, std::optional<data::Standardizer> standardizer) {
  return EmbeddingSampler([&model](const Eigen::VectorXd& x) { return model.embedding(x); }, std::move(standardizer));
}

EmbeddingSampler classical_sampler(const baselines::ClassicalCMEModel& model,
                                   std::optional<data::Standardizer> standardizer) {
  return EmbeddingSampler([&model](const Eigen::VectorXd& x) { return baselines::classical_embedding(model, x); },
                          std::move(standardizer));
}

std::vector<double> TruthSampler::sample(const Eigen::VectorXd& x, int n, std::uint64_t seed) const {
  if (x.size() != 1) throw ShapeError("toy families have a scalar input");
  return data::sample_conditional_truth(family_, x[0], static_cast<std::size_t>(n), seed);
}

std::vector<double> toy_eval_inputs(data::ToyFamily family, int points) {
  if (points < 2) throw DomainError("toy evaluation needs at least two points");
  const auto [lo, hi] = data::input_range(family);
  std::vector<double> xs(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) xs[i] = lo + (hi - lo) * i / (points - 1);
  xs.back() = hi;
  return xs;
}

namespace {

template <class Loop>
ToyEvaluation toy_impl(const ConditionalSampler& model, data::ToyFamily family, std::uint64_t seed, ToyProtocol p,
                       Loop&& loop) {
  if (p.samples < 1) throw DomainError("toy evaluation needs at least one sample per point");
  const auto xs = toy_eval_inputs(family, p.points);
  const TruthSampler truth(family);
  ToyEvaluation out;
  out.per_point.resize(xs.size());
  loop(static_cast<std::ptrdiff_t>(xs.size()), [&](std::ptrdiff_t i) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, xs[i]);
    const auto a = model.sample(x, p.samples, derive_seed(seed, 2 * i));
    const auto b = truth.sample(x, p.samples, derive_seed(seed, 2 * i + 1));
    out.per_point[i] = metrics::wasserstein1(a, b);
  });
  double s = 0.0;
  for (double v : out.per_point) s += v;
  out.was1 = s / static_cast<double>(out.per_point.size());
  return out;
}

template <class Loop>
TabularEvaluation tabular_impl(const ConditionalSampler& model, const data::LabeledDataset& test, std::uint64_t seed,
                               int samples, int bins, Loop&& loop) {
  if (test.standardized()) throw UsageError("tabular metrics expect a test set in original units");
  const auto n = test.size();
  if (n < 1) throw DomainError("empty test set");
  std::vector<std::vector<double>> gen(static_cast<std::size_t>(n));
  loop(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t i) {
    gen[i] = model.sample(test.inputs.col(i), samples, derive_seed(seed, static_cast<std::uint64_t>(i)));
  });
  std::vector<double> truth(test.outputs.data(), test.outputs.data() + n);
  return {metrics::qice(truth, gen, bins), metrics::rmse(truth, gen), static_cast<int>(n)};
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

ToyEvaluation toy_was1(const ConditionalSampler& model, data::ToyFamily family, std::uint64_t seed,
                       ToyProtocol protocol) {
  return toy_impl(model, family, seed, protocol, ParallelLoop{});
}

TabularEvaluation tabular_metrics(const ConditionalSampler& model, const data::LabeledDataset& test,
                                  std::uint64_t seed, int samples, int bins) {
  return tabular_impl(model, test, seed, samples, bins, ParallelLoop{});
}

namespace serial {

ToyEvaluation toy_was1(const ConditionalSampler& model, data::ToyFamily family, std::uint64_t seed,
                       ToyProtocol protocol) {
  return toy_impl(model, family, seed, protocol, SerialLoop{});
}

TabularEvaluation tabular_metrics(const ConditionalSampler& model, const data::LabeledDataset& test,
                                  std::uint64_t seed, int samples, int bins) {
  return tabular_impl(model, test, seed, samples, bins, SerialLoop{});
}

}  // namespace serial

}  // namespace nkcme::eval
