// Serial reference vs OpenMP implementations of the hot kernels.

#include "nkcme/cme.hpp"
#include "nkcme/evaluation.hpp"
#include "nkcme/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace nkcme;

namespace {

Eigen::MatrixXd random_points(int dim, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd p(dim, n);
  for (auto& v : p.reshaped()) v = z(rng);
  return p;
}

cme::CMEmbedding random_embedding(int m, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd w(m);
  for (auto& v : w) v = u(rng);
  w /= w.sum();
  return {Eigen::VectorXd::LinSpaced(m, -3, 3), kernels::GaussianDensityKernel(0.2), w};
}

void BM_Gram(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd a = random_points(3, n, 1), b = random_points(3, n, 2);
  const kernels::GaussianDensityKernel k(0.8, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::gram(k, a, b));
}

void BM_GramSerial(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd a = random_points(3, n, 1), b = random_points(3, n, 2);
  const kernels::GaussianDensityKernel k(0.8, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::gram(k, a, b));
}

void BM_DensityAt(benchmark::State& state) {
  const auto e = random_embedding(100, 3);
  const Eigen::VectorXd ys = Eigen::VectorXd::LinSpaced(state.range(0), -4, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cme::density_at(e, ys));
}

void BM_DensityAtSerial(benchmark::State& state) {
  const auto e = random_embedding(100, 3);
  const Eigen::VectorXd ys = Eigen::VectorXd::LinSpaced(state.range(0), -4, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cme::serial::density_at(e, ys));
}

void BM_Herding(benchmark::State& state) {
  const auto e = random_embedding(100, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cme::herd_samples(e, static_cast<int>(state.range(0))));
}

void BM_HerdingSerial(benchmark::State& state) {
  const auto e = random_embedding(100, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cme::serial::herd_samples(e, static_cast<int>(state.range(0))));
}

void BM_ToyWas1(benchmark::State& state) {
  const eval::TruthSampler truth(data::ToyFamily::bimodal);
  for (auto _ : state) benchmark::DoNotOptimize(eval::toy_was1(truth, data::ToyFamily::bimodal, 1));
}

void BM_ToyWas1Serial(benchmark::State& state) {
  const eval::TruthSampler truth(data::ToyFamily::bimodal);
  for (auto _ : state) benchmark::DoNotOptimize(eval::serial::toy_was1(truth, data::ToyFamily::bimodal, 1));
}

}  // namespace

BENCHMARK(BM_Gram)->Arg(256)->Arg(1024);
BENCHMARK(BM_GramSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_DensityAt)->Arg(2048);
BENCHMARK(BM_DensityAtSerial)->Arg(2048);
BENCHMARK(BM_Herding)->Arg(50)->Arg(200);
BENCHMARK(BM_HerdingSerial)->Arg(50)->Arg(200);
BENCHMARK(BM_ToyWas1);
BENCHMARK(BM_ToyWas1Serial);

BENCHMARK_MAIN();
