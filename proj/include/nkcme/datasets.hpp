#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nkcme::data {

/// Per-column mean and population standard deviation.
struct Standardizer {
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
};

/// Paired samples. inputs is (d_x x n), one sample per column.
struct LabeledDataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd outputs;
  std::optional<Standardizer> standardizer;  // set once the data has been standardized
  std::vector<std::string> input_names;

  Eigen::Index size() const { return outputs.size(); }
  int input_dim() const { return static_cast<int>(inputs.rows()); }
  bool standardized() const { return standardizer.has_value(); }
};

enum class ToyFamily { bimodal, skewed, ring };

struct ToySpec {
  ToyFamily family = ToyFamily::bimodal;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
};

ToyFamily parse_family(const std::string& name);
std::string family_name(ToyFamily f);

/// Closed input interval [lo, hi] of the family.
std::pair<double, double> input_range(ToyFamily f);

LabeledDataset generate_toy(const ToySpec& spec);

/// m i.i.d. draws of y | x from the true generating process.
std::vector<double> sample_conditional_truth(ToyFamily f, double x, std::size_t m, std::uint64_t seed);

/// Location, scale and shape of the Skewed family at x.
struct SkewParams {
  double location, scale, shape;
};
SkewParams skewed_params(double x);

/// Reads a header-row CSV. target is a column name, or a 0-based index when
/// no column carries that name (negative counts from the end).
LabeledDataset load_csv(const std::string& path, const std::string& target);

void write_csv(const LabeledDataset& data, const std::string& path);

struct Split {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<Eigen::Index> train_indices;
  std::vector<Eigen::Index> test_indices;
};

/// Seeded shuffle split; the test side holds round(test_fraction * n) rows.
Split split(const LabeledDataset& data, double test_fraction, std::uint64_t fold_seed);

LabeledDataset subset(const LabeledDataset& data, const std::vector<Eigen::Index>& rows);

Standardizer fit_standardizer(const LabeledDataset& data);

/// Fits on `data` itself and returns the standardized copy.
LabeledDataset standardize(const LabeledDataset& data);

/// Standardizes with previously fitted (training) statistics.
LabeledDataset apply_standardizer(const LabeledDataset& data, const Standardizer& s);

Eigen::MatrixXd standardize_inputs(const Eigen::Ref<const Eigen::MatrixXd>& x, const Standardizer& s);
Eigen::MatrixXd destandardize_outputs(const Eigen::Ref<const Eigen::MatrixXd>& y, const Standardizer& s);
LabeledDataset destandardize(const LabeledDataset& data);

}  // namespace nkcme::data
