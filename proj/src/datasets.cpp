#include "nkcme/datasets.hpp"

#include "nkcme/error.hpp"
#include "nkcme/record.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace nkcme::data {

ToyFamily parse_family(const std::string& name) {
  if (name == "bimodal") return ToyFamily::bimodal;
  if (name == "skewed") return ToyFamily::skewed;
  if (name == "ring") return ToyFamily::ring;
  throw ConfigError("unknown toy family '" + name + "' (valid: bimodal, skewed, ring)");
}

std::string family_name(ToyFamily f) {
  switch (f) {
    case ToyFamily::bimodal: return "bimodal";
    case ToyFamily::skewed: return "skewed";
    case ToyFamily::ring: return "ring";
  }
  return "bimodal";
}

std::pair<double, double> input_range(ToyFamily f) {
  return f == ToyFamily::ring ? std::pair{-2.0, 2.0} : std::pair{-5.0, 5.0};
}

SkewParams skewed_params(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return {0.1 * x, 0.1 * std::abs(x) + 0.05, -8.0 + 8.0 * s};
}

namespace {

double draw_conditional(ToyFamily f, double x, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (f) {
    case ToyFamily::bimodal: {
      const double p = 1.0 / (1.0 + std::exp(-1.5 * x));
      const double jump = unit(rng) < p ? 1.0 : 0.0;
      // N(0, (0.05x)^2) fixes only the variance; the std is |0.05x|
      return 0.2 * x + jump + std::abs(0.05 * x) * normal(rng);
    }
    case ToyFamily::skewed: {
      const auto [loc, scale, shape] = skewed_params(x);
      const double delta = shape / std::sqrt(1.0 + shape * shape);
      const double u0 = normal(rng);
      const double u1 = normal(rng);
      const double z = delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1;
      return loc + scale * z;
    }
    case ToyFamily::ring: {
      if (std::abs(x) <= 1.0 && unit(rng) < 0.5) return -1.0 + 2.0 * unit(rng);
      const double branch = unit(rng) < 0.5 ? 1.0 : -1.0;
      return 2.0 * std::sin(branch * std::acos(x / 2.0)) + 0.1 * normal(rng);
    }
  }
  return 0.0;
}

}  // namespace

LabeledDataset generate_toy(const ToySpec& spec) {
  if (spec.n < 1) throw DomainError("toy dataset needs at least one sample");
  std::mt19937_64 rng(spec.seed);
  const auto [lo, hi] = input_range(spec.family);
  std::uniform_real_distribution<double> ux(lo, hi);
  LabeledDataset d;
  const auto n = static_cast<Eigen::Index>(spec.n);
  d.inputs.resize(1, n);
  d.outputs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = ux(rng);
    d.inputs(0, i) = x;
    d.outputs[i] = draw_conditional(spec.family, x, rng);
  }
  d.input_names = {"x"};
  return d;
}

std::vector<double> sample_conditional_truth(ToyFamily f, double x, std::size_t m, std::uint64_t seed) {
  const auto [lo, hi] = input_range(f);
  if (!(x >= lo && x <= hi))
    throw DomainError("x = " + std::to_string(x) + " is outside the " + family_name(f) + " input range");
  std::mt19937_64 rng(seed);
  std::vector<double> out(m);
  for (auto& v : out) v = draw_conditional(f, x, rng);
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

LabeledDataset load_csv(const std::string& path, const std::string& target) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  if (header.size() < 2) throw IoError(path + ": need at least one input and one target column");

  std::size_t target_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == target) target_col = c;
  if (target_col == header.size()) {
    long long idx = 0;
    const auto* end = target.data() + target.size();
    auto [ptr, ec] = std::from_chars(target.data(), end, idx);
    const auto cols = static_cast<long long>(header.size());
    if (idx < 0) idx += cols;
    if (ec != std::errc{} || ptr != end || idx < 0 || idx >= cols)
      throw IoError(path + ": no target column '" + target + "'");
    target_col = static_cast<std::size_t>(idx);
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw IoError(path + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                    " cells, expected " + std::to_string(header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      double v = 0.0;
      const auto* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(cell.data(), end, v);
      if (cell.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v))
        throw IoError(path + ": row " + std::to_string(line_no) + ", column '" + header[c] +
                      "': invalid numeric cell '" + cell + "'");
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": table has no data rows");

  LabeledDataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto dx = static_cast<Eigen::Index>(header.size() - 1);
  d.inputs.resize(dx, n);
  d.outputs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == target_col)
        d.outputs[i] = rows[static_cast<std::size_t>(i)][c];
      else
        d.inputs(k++, i) = rows[static_cast<std::size_t>(i)][c];
    }
  }
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target_col) d.input_names.push_back(header[c]);
  return d;
}

void write_csv(const LabeledDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (int c = 0; c < data.input_dim(); ++c) {
    if (static_cast<std::size_t>(c) < data.input_names.size())
      out << data.input_names[static_cast<std::size_t>(c)];
    else
      out << (data.input_dim() == 1 ? std::string("x") : "x" + std::to_string(c));
    out << ',';
  }
  out << "y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (int c = 0; c < data.input_dim(); ++c) out << record::format_double(data.inputs(c, i)) << ',';
    out << record::format_double(data.outputs[i]) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

LabeledDataset subset(const LabeledDataset& data, const std::vector<Eigen::Index>& rows) {
  LabeledDataset out;
  out.inputs.resize(data.inputs.rows(), static_cast<Eigen::Index>(rows.size()));
  out.outputs.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.col(static_cast<Eigen::Index>(i)) = data.inputs.col(rows[i]);
    out.outputs[static_cast<Eigen::Index>(i)] = data.outputs[rows[i]];
  }
  out.standardizer = data.standardizer;
  out.input_names = data.input_names;
  return out;
}

Split split(const LabeledDataset& data, double test_fraction, std::uint64_t fold_seed) {
  const auto n = data.size();
  if (n < 10) throw DomainError("split needs at least 10 rows, got " + std::to_string(n));
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw DomainError("test fraction must lie in (0, 1)");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(fold_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, static_cast<std::size_t>(n) - 1);
  Split s;
  s.test_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(s.test_indices.begin(), s.test_indices.end());
  std::sort(s.train_indices.begin(), s.train_indices.end());
  s.train = subset(data, s.train_indices);
  s.test = subset(data, s.test_indices);
  return s;
}

Standardizer fit_standardizer(const LabeledDataset& data) {
  if (data.size() < 1) throw DomainError("cannot standardize an empty dataset");
  Standardizer s;
  const double n = static_cast<double>(data.size());
  s.x_mean = data.inputs.rowwise().mean();
  s.x_std.resize(data.inputs.rows());
  for (Eigen::Index r = 0; r < data.inputs.rows(); ++r) {
    const double var = (data.inputs.row(r).array() - s.x_mean[r]).square().sum() / n;
    s.x_std[r] = std::sqrt(var);
    if (!(s.x_std[r] > 0.0))
      throw DomainError("input column " + std::to_string(r) + " is constant and cannot be standardized");
  }
  s.y_mean = data.outputs.mean();
  s.y_std = std::sqrt((data.outputs.array() - s.y_mean).square().sum() / n);
  if (!(s.y_std > 0.0)) throw DomainError("output column is constant and cannot be standardized");
  return s;
}

Eigen::MatrixXd standardize_inputs(const Eigen::Ref<const Eigen::MatrixXd>& x, const Standardizer& s) {
  if (x.rows() != s.x_mean.size()) throw ShapeError("input dimension does not match the standardizer");
  return ((x.colwise() - s.x_mean).array().colwise() / s.x_std.array()).matrix();
}

Eigen::MatrixXd destandardize_outputs(const Eigen::Ref<const Eigen::MatrixXd>& y, const Standardizer& s) {
  return (y.array() * s.y_std + s.y_mean).matrix();
}

LabeledDataset apply_standardizer(const LabeledDataset& data, const Standardizer& s) {
  if (data.standardized()) throw DomainError("dataset is already standardized");
  LabeledDataset out = data;
  out.inputs = standardize_inputs(data.inputs, s);
  out.outputs = ((data.outputs.array() - s.y_mean) / s.y_std).matrix();
  out.standardizer = s;
  return out;
}

LabeledDataset standardize(const LabeledDataset& data) { return apply_standardizer(data, fit_standardizer(data)); }

LabeledDataset destandardize(const LabeledDataset& data) {
  if (!data.standardized()) return data;
  const auto& s = *data.standardizer;
  LabeledDataset out = data;
  out.inputs = ((data.inputs.array().colwise() * s.x_std.array()).colwise() + s.x_mean.array()).matrix();
  out.outputs = destandardize_outputs(data.outputs, s);
  out.standardizer.reset();
  return out;
}

}  // namespace nkcme::data
