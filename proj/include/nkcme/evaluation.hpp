#pragma once

// Evaluation protocols. Samplers work in original (destandardized) units.

#include "nkcme/baselines.hpp"
#include "nkcme/cme.hpp"
#include "nkcme/datasets.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace nkcme::eval {

/// Conditional sampler y | x. Implementations must be safe to call concurrently.
class ConditionalSampler {
 public:
  virtual ~ConditionalSampler() = default;
  virtual std::vector<double> sample(const Eigen::VectorXd& x, int n, std::uint64_t seed) const = 0;
};

/// Herds from an embedding built in model space, then maps back to original units.
class EmbeddingSampler final : public ConditionalSampler {
 public:
  using EmbedFn = std::function<cme::CMEmbedding(const Eigen::VectorXd& model_x)>;

  EmbeddingSampler(EmbedFn embed, std::optional<data::Standardizer> standardizer,
                   int candidates = cme::herding_candidates);

  /// Deterministic; the seed is ignored.
  std::vector<double> sample(const Eigen::VectorXd& x, int n, std::uint64_t seed) const override;

 private:
  EmbedFn embed_;
  std::optional<data::Standardizer> standardizer_;
  int candidates_;
};

EmbeddingSampler cme_sampler(const net::Mlp& model, const cme::LocationGrid& grid, double sigma,
                             std::optional<data::Standardizer> standardizer);
EmbeddingSampler df_sampler(const baselines::DeepFeatureModel& model, std::optional<data::Standardizer> standardizer);
EmbeddingSampler classical_sampler(const baselines::ClassicalCMEModel& model,
                                   std::optional<data::Standardizer> standardizer);

/// Draws from the true generating process of a toy family.
class TruthSampler final : public ConditionalSampler {
 public:
  explicit TruthSampler(data::ToyFamily family) : family_(family) {}
  std::vector<double> sample(const Eigen::VectorXd& x, int n, std::uint64_t seed) const override;

 private:
  data::ToyFamily family_;
};

struct ToyProtocol {
  int points = 200;
  int samples = 50;
};

struct ToyEvaluation {
  double was1 = 0.0;  // mean over evaluation points
  std::vector<double> per_point;
};

/// Equally spaced evaluation inputs covering the family's input range.
std::vector<double> toy_eval_inputs(data::ToyFamily family, int points);

/// WAS1 between model samples and fresh truth samples at each evaluation input.
ToyEvaluation toy_was1(const ConditionalSampler& model, data::ToyFamily family, std::uint64_t seed,
                       ToyProtocol protocol = {});

struct TabularEvaluation {
  double qice = 0.0;
  double rmse = 0.0;
  int points = 0;
};

/// QICE and RMSE over the rows of a test set given in original units.
TabularEvaluation tabular_metrics(const ConditionalSampler& model, const data::LabeledDataset& test,
                                  std::uint64_t seed, int samples = 1000, int bins = 10);

namespace serial {

ToyEvaluation toy_was1(const ConditionalSampler& model, data::ToyFamily family, std::uint64_t seed,
                       ToyProtocol protocol = {});
TabularEvaluation tabular_metrics(const ConditionalSampler& model, const data::LabeledDataset& test,
                                  std::uint64_t seed, int samples = 1000, int bins = 10);

}  // namespace serial

}  // namespace nkcme::eval
