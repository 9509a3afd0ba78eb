#include "nkcme/commands.hpp"

#include "nkcme/baselines.hpp"
#include "nkcme/cme.hpp"
#include "nkcme/error.hpp"
#include "nkcme/evaluation.hpp"
#include "nkcme/metrics.hpp"
#include "nkcme/parallel.hpp"
#include "nkcme/record.hpp"
#include "nkcme/rl_agent.hpp"
#include "nkcme/seed.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace nkcme::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const OptimizerError*>(&e)) return exit_divergence;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return exit_io;
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const UsageError*>(&e)) return exit_config;
  return exit_failure;
}

std::string make_run_id(const std::string& prefix, const std::string& config_hash, std::uint64_t seed) {
  return prefix + "-" + config_hash.substr(0, 8) + "-s" + std::to_string(seed);
}

namespace {

const std::vector<std::string> run_independent_keys = {"seeds", "out"};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

// Creates the run directory, refusing to reuse one written under a different config.
fs::path prepare_run_dir(const fs::path& dir, const std::string& config_hash) {
  const fs::path cfg = dir / "config.json";
  if (fs::exists(cfg)) {
    const auto old = read_json(cfg);
    if (old.value("config_hash", std::string{}) != config_hash)
      throw ConfigError(dir.string() + " holds a run with a different config hash; refusing to overwrite");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_config(const fs::path& dir, const std::string& command, const std::string& run_id, std::uint64_t seed,
                  const config::Config& c, const std::string& hash) {
  json j;
  j["command"] = command;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["config_hash"] = hash;
  j["config"] = c.to_json();
  record::write_json_atomic((dir / "config.json").string(), j);
}

json standardizer_json(const data::Standardizer& s) {
  json j;
  j["x_mean"] = std::vector<double>(s.x_mean.data(), s.x_mean.data() + s.x_mean.size());
  j["x_std"] = std::vector<double>(s.x_std.data(), s.x_std.data() + s.x_std.size());
  j["y_mean"] = s.y_mean;
  j["y_std"] = s.y_std;
  return j;
}

data::Standardizer standardizer_from_json(const json& j) {
  const auto xm = j.at("x_mean").get<std::vector<double>>();
  const auto xs = j.at("x_std").get<std::vector<double>>();
  data::Standardizer s;
  s.x_mean = Eigen::Map<const Eigen::VectorXd>(xm.data(), static_cast<Eigen::Index>(xm.size()));
  s.x_std = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  s.y_mean = j.at("y_mean").get<double>();
  s.y_std = j.at("y_std").get<double>();
  return s;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

config::Config density_config_from(const json& stored) {
  config::Config c(config::train_density_schema());
  config::KeyValues kv;
  for (const auto& [k, v] : stored.items()) kv[k] = v.get<std::string>();
  c.apply(kv, "stored config");
  return c;
}

const std::vector<std::string> density_methods = {"proposal_iterative", "proposal_joint", "df_med", "df_fixed",
                                                  "classical"};

void check_method(const std::string& m) {
  if (std::find(density_methods.begin(), density_methods.end(), m) == density_methods.end())
    throw ConfigError("unknown method '" + m +
                      "' (valid: proposal_iterative, proposal_joint, df_med, df_fixed, classical)");
}

cme::TrainingConfig proposal_config(const config::Config& c, std::uint64_t seed) {
  cme::TrainingConfig t;
  t.strategy = c.get("method") == "proposal_iterative" ? cme::Strategy::iterative : cme::Strategy::joint;
  t.sigma_init = c.get_double("sigma_init");
  t.sigma_update_period = static_cast<int>(c.get_int("sigma_update_period"));
  t.epochs = static_cast<int>(c.get_int("epochs"));
  t.batch_size = static_cast<int>(c.get_int("batch_size"));
  t.learning_rate = c.get_double("learning_rate");
  t.weight_decay = c.get_double("weight_decay");
  t.seed = seed;
  t.grid_size = static_cast<int>(c.get_int("grid_size"));
  t.hidden = c.get_int_list("hidden");
  t.spectral_norm = spectral_norm_enabled(c);
  t.validate();
  return t;
}

baselines::DfConfig df_config(const config::Config& c, std::uint64_t seed) {
  baselines::DfConfig d;
  d.lambda = c.get_double("lambda");
  d.bandwidth_rule = c.get("method") == "df_fixed" ? baselines::BandwidthRule::fixed : baselines::BandwidthRule::median;
  d.fixed_bandwidth = c.get_double("fixed_bandwidth");
  d.epochs = static_cast<int>(c.get_int("epochs"));
  d.batch_size = static_cast<int>(c.get_int("batch_size"));
  d.learning_rate = c.get_double("learning_rate");
  d.weight_decay = c.get_double("weight_decay");
  d.seed = seed;
  d.hidden = c.get_int_list("hidden");
  d.validate();
  return d;
}

void train_density_run(const config::Config& c, const PreparedData& data, const std::string& hash, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string method = c.get("method");
  const std::string run_id = make_run_id(method, hash, seed);
  const fs::path dir = prepare_run_dir(fs::path(c.get("out")) / run_id, hash);
  write_config(dir, "train-density", run_id, seed, c, hash);

  json bundle;
  bundle["model_kind"] = method;
  bundle["standardizer"] = standardizer_json(*data.train.standardizer);
  json final_values;

  if (method == "proposal_iterative" || method == "proposal_joint") {
    const auto tc = proposal_config(c, seed);
    const auto r = cme::train(data.train, tc);
    record::RunRecord curve(run_id, {"seed", "epoch", "loss", "sigma"});
    for (const auto& row : r.history)
      curve.add_row({static_cast<long long>(seed), static_cast<long long>(row.epoch), row.loss, row.sigma});
    curve.write_csv((dir / "curve.csv").string());
    net::save_checkpoint(r.model, (dir / "model.bin").string(), (dir / "model.json").string());
    bundle["sigma"] = r.sigma;
    bundle["grid"] = to_vec(r.grid.points());
    final_values["sigma"] = r.sigma;
    if (!r.history.empty()) final_values["loss"] = r.history.back().loss;
  } else if (method == "df_med" || method == "df_fixed") {
    const auto dc = df_config(c, seed);
    const auto r = baselines::train_df(data.train, dc);
    record::RunRecord curve(run_id, {"seed", "epoch", "loss"});
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
      curve.add_row({static_cast<long long>(seed), static_cast<long long>(e + 1), r.epoch_loss[e]});
    curve.write_csv((dir / "curve.csv").string());
    net::save_checkpoint(r.model.feature_net(), (dir / "model.bin").string(), (dir / "model.json").string());
    bundle["lambda"] = r.model.lambda();
    bundle["output_bandwidth"] = r.model.output_kernel().sigma();
    final_values["output_bandwidth"] = r.model.output_kernel().sigma();
    if (!r.epoch_loss.empty()) final_values["loss"] = r.epoch_loss.back();
  } else {
    const auto m = baselines::fit_classical(data.train, c.get_double("lambda"), baselines::InputKernel::gaussian, seed);
    record::RunRecord curve(run_id, {"seed", "epoch", "loss"});
    curve.write_csv((dir / "curve.csv").string());
    bundle["lambda"] = m.lambda();
    bundle["input_bandwidth"] = m.bandwidth();
    bundle["output_bandwidth"] = m.output_kernel().sigma();
    final_values["output_bandwidth"] = m.output_kernel().sigma();
  }
  record::write_json_atomic((dir / "bundle.json").string(), bundle);

  json summary;
  summary["run_id"] = run_id;
  summary["config_hash"] = hash;
  summary["version"] = record::version_string();
  summary["wall_time_s"] = seconds_since(t0);
  summary["final"] = final_values;
  record::write_json_atomic((dir / "summary.json").string(), summary);
}

std::string cell_or_empty(const std::optional<double>& v) { return v ? record::format_double(*v) : std::string{}; }

struct MetricRow {
  std::string dataset, method, metric;
  double value;
  std::optional<double> dispersion;
};

std::vector<MetricRow> evaluate_bundle(const fs::path& dir, const config::Config& ec, std::string& run_id) {
  const json stored = read_json(dir / "config.json");
  const json bundle = read_json(dir / "bundle.json");
  run_id = stored.at("run_id").get<std::string>();
  const config::Config tc = density_config_from(stored.at("config"));
  const PreparedData data = prepare_density_data(tc);
  const std::string kind = bundle.at("model_kind").get<std::string>();
  const data::Standardizer st = standardizer_from_json(bundle.at("standardizer"));
  const std::string dataset = tc.get("dataset");

  std::optional<net::Mlp> net_model;
  std::optional<cme::LocationGrid> grid;
  std::optional<baselines::DeepFeatureModel> df;
  std::optional<baselines::ClassicalCMEModel> classical;
  std::optional<eval::EmbeddingSampler> sampler;
  if (kind == "proposal_iterative" || kind == "proposal_joint") {
    net_model = net::load_checkpoint((dir / "model.bin").string(), (dir / "model.json").string());
    const auto g = bundle.at("grid").get<std::vector<double>>();
    grid.emplace(Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size())));
    sampler.emplace(eval::cme_sampler(*net_model, *grid, bundle.at("sigma").get<double>(), st));
  } else if (kind == "df_med" || kind == "df_fixed") {
    df.emplace(net::load_checkpoint((dir / "model.bin").string(), (dir / "model.json").string()),
               bundle.at("lambda").get<double>(),
               kernels::GaussianDensityKernel(bundle.at("output_bandwidth").get<double>()), data.train.inputs,
               data.train.outputs);
    sampler.emplace(eval::df_sampler(*df, st));
  } else if (kind == "classical") {
    classical.emplace(baselines::InputKernel::gaussian, bundle.at("input_bandwidth").get<double>(),
                      bundle.at("lambda").get<double>(), data.train.inputs, data.train.outputs,
                      kernels::GaussianDensityKernel(bundle.at("output_bandwidth").get<double>()));
    sampler.emplace(eval::classical_sampler(*classical, st));
  } else {
    throw ConfigError(dir.string() + ": unknown model kind '" + kind + "'");
  }

  std::vector<MetricRow> rows;
  const std::uint64_t eval_seed = ec.get_u64("eval_seed");
  if (data.toy) {
    const eval::ToyProtocol p{static_cast<int>(ec.get_int("points")), static_cast<int>(ec.get_int("samples"))};
    std::vector<double> runs;
    const auto n_runs = ec.get_int("eval_runs");
    if (n_runs < 1) throw ConfigError("eval_runs must be at least 1");
    for (long long r = 0; r < n_runs; ++r)
      runs.push_back(eval::toy_was1(*sampler, data.family, derive_seed(eval_seed, static_cast<std::uint64_t>(r)), p).was1);
    const auto ms = metrics::mean_std(runs);
    rows.push_back({dataset, kind, "was1", ms.mean, ms.std});
    rows.push_back({dataset, kind, "was1_x100", 100.0 * ms.mean, 100.0 * ms.std});
  }
  if (data.test_raw.size() > 0) {
    const auto t = eval::tabular_metrics(*sampler, data.test_raw, eval_seed,
                                         static_cast<int>(ec.get_int("tabular_samples")),
                                         static_cast<int>(ec.get_int("bins")));
    rows.push_back({dataset, kind, "qice", t.qice, std::nullopt});
    rows.push_back({dataset, kind, "rmse", t.rmse, std::nullopt});
  }
  if (rows.empty())
    throw ConfigError(dir.string() + ": no evaluation protocol applies (non-toy data needs test_fraction > 0)");
  return rows;
}

void write_metrics(const fs::path& path, const std::string& run_id, const std::vector<MetricRow>& rows) {
  record::RunRecord rec(run_id, {"dataset", "method", "metric", "value", "dispersion"});
  for (const auto& r : rows) rec.add_row({r.dataset, r.method, r.metric, r.value, cell_or_empty(r.dispersion)});
  rec.write_csv(path.string());
}

void check_eval_hash(const fs::path& eval_json, const std::string& hash) {
  if (!fs::exists(eval_json)) return;
  const auto old = read_json(eval_json);
  if (old.value("eval_config_hash", std::string{}) != hash)
    throw ConfigError(eval_json.parent_path().string() +
                      " already holds metrics from a different evaluation config; refusing to overwrite");
}

rl::AgentConfig agent_config(const config::Config& c) {
  rl::AgentConfig a;
  a.gamma = c.get_double("gamma");
  a.batch_size = static_cast<int>(c.get_int("batch_size"));
  a.update_period = static_cast<int>(c.get_int("update_period"));
  a.target_sync_period = static_cast<int>(c.get_int("target_sync_period"));
  a.epsilon_start = c.get_double("epsilon_start");
  a.epsilon_end = c.get_double("epsilon_end");
  a.epsilon_decay_steps = static_cast<int>(c.get_int("epsilon_decay_steps"));
  a.eval_epsilon = c.get_double("eval_epsilon");
  a.eval_period = static_cast<int>(c.get_int("eval_period"));
  a.total_steps = c.get_int("total_steps");
  a.learning_rate = c.get_double("learning_rate");
  a.loss_mode = rl::parse_loss_mode(c.get("loss"));
  a.single_sigma = c.get_double("sigma");
  a.fuse_kernels = static_cast<int>(c.get_int("fuse_kernels"));
  const auto cap = c.get_int("buffer_capacity");
  if (cap < 1) throw ConfigError("buffer_capacity must be positive");
  a.buffer_capacity = static_cast<std::size_t>(cap);
  a.atoms = static_cast<int>(c.get_int("atoms"));
  a.v_min = c.get_double("v_min");
  a.v_max = c.get_double("v_max");
  a.hidden = c.get_int_list("hidden");
  a.validate();
  return a;
}

}  // namespace

bool spectral_norm_enabled(const config::Config& c) {
  if (c.get("spectral_norm") == "auto") return c.get("dataset") == "csv";
  return c.get_bool("spectral_norm");
}

PreparedData prepare_density_data(const config::Config& c) {
  PreparedData out;
  data::LabeledDataset all;
  const std::string dataset = c.get("dataset");
  if (dataset == "csv") {
    const std::string path = c.get("data_path");
    if (path.empty() || !fs::exists(path)) throw IoError("data_path '" + path + "' does not exist");
    all = data::load_csv(path, c.get("target"));
  } else {
    out.toy = true;
    out.family = data::parse_family(dataset);
    const auto n = c.get_int("n");
    if (n < 1) throw ConfigError("n must be positive");
    all = data::generate_toy({out.family, static_cast<std::size_t>(n), c.get_u64("data_seed")});
  }
  const double tf = c.get_double("test_fraction");
  if (!(tf >= 0.0 && tf < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  if (tf > 0.0) {
    auto s = data::split(all, tf, c.get_u64("split_seed"));
    out.train_raw = std::move(s.train);
    out.test_raw = std::move(s.test);
  } else {
    out.train_raw = std::move(all);
  }
  out.train = data::standardize(out.train_raw);
  return out;
}

std::string cmd_gen_data(const config::Config& c) {
  const auto family = data::parse_family(c.get("family"));
  const auto n = c.get_int("n");
  if (n < 1) throw ConfigError("n must be positive");
  const auto d = data::generate_toy({family, static_cast<std::size_t>(n), c.get_u64("seed")});
  const fs::path out(c.get("out"));
  if (out.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out.parent_path(), ec);
    if (ec) throw IoError("cannot create " + out.parent_path().string() + ": " + ec.message());
  }
  data::write_csv(d, out.string());
  return out.string();
}

std::vector<std::string> cmd_train_density(const config::Config& c) {
  check_method(c.get("method"));
  const auto seeds = c.get_u64_list("seeds");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  // Validate every hyperparameter before any work starts.
  if (c.get("method").rfind("proposal", 0) == 0)
    proposal_config(c, 0);
  else if (c.get("method").rfind("df", 0) == 0)
    df_config(c, 0);
  const PreparedData data = prepare_density_data(c);
  const std::string hash = c.hash(run_independent_keys);
  parallel::for_each_index(static_cast<std::ptrdiff_t>(seeds.size()),
                           [&](std::ptrdiff_t i) { train_density_run(c, data, hash, seeds[i]); });
  std::vector<std::string> dirs;
  for (auto s : seeds) dirs.push_back((fs::path(c.get("out")) / make_run_id(c.get("method"), hash, s)).string());
  return dirs;
}

std::vector<std::string> cmd_eval_density(const std::vector<std::string>& bundles, const config::Config& c,
                                          const std::string& aggregate_out) {
  if (bundles.empty()) throw ConfigError("eval-density needs at least one bundle directory");
  for (const auto& b : bundles)
    if (!fs::exists(fs::path(b) / "config.json") || !fs::exists(fs::path(b) / "bundle.json"))
      throw IoError(b + " is not a train-density run directory");
  const std::string hash = c.hash();
  std::vector<std::string> written;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& b : bundles) {
    const fs::path dir(b);
    check_eval_hash(dir / "eval.json", hash);
    const auto t0 = std::chrono::steady_clock::now();
    std::string run_id;
    const auto rows = evaluate_bundle(dir, c, run_id);
    write_metrics(dir / "metrics.csv", run_id, rows);
    written.push_back((dir / "metrics.csv").string());
    json ej;
    ej["run_id"] = run_id;
    ej["eval_config_hash"] = hash;
    ej["eval_config"] = c.to_json();
    ej["version"] = record::version_string();
    ej["wall_time_s"] = seconds_since(t0);
    json m = json::object();
    for (const auto& r : rows) {
      m[r.metric] = r.value;
      groups[{r.dataset, r.method, r.metric}].push_back(r.value);
    }
    ej["metrics"] = m;
    record::write_json_atomic((dir / "eval.json").string(), ej);
  }
  if (!aggregate_out.empty()) {
    const fs::path out(aggregate_out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
    std::string ids;
    for (const auto& b : bundles) ids += fs::path(b).filename().string() + "\n";
    const std::string agg_id = "aggregate-" + record::fnv1a_hex(hash + ids).substr(0, 8);
    check_eval_hash(out / "summary.json", hash);
    std::vector<MetricRow> rows;
    json summary;
    summary["run_id"] = agg_id;
    summary["eval_config_hash"] = hash;
    summary["version"] = record::version_string();
    summary["bundles"] = bundles;
    json m = json::array();
    for (const auto& [key, values] : groups) {
      const auto ms = metrics::mean_std(values);
      rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), ms.mean, ms.std});
      m.push_back({{"dataset", std::get<0>(key)}, {"method", std::get<1>(key)}, {"metric", std::get<2>(key)},
                   {"mean", ms.mean}, {"std", ms.std}, {"n", values.size()}});
    }
    summary["metrics"] = m;
    write_metrics(out / "metrics.csv", agg_id, rows);
    written.push_back((out / "metrics.csv").string());
    record::write_json_atomic((out / "summary.json").string(), summary);
  }
  return written;
}

std::vector<std::string> cmd_train_rl(const config::Config& c) {
  const rl::EnvId env = rl::parse_env(c.get("env"));
  const rl::AgentConfig ac = agent_config(c);
  const auto seeds = c.get_u64_list("seeds");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  const std::string hash = c.hash(run_independent_keys);
  const std::string prefix = "rl-" + rl::env_name(env) + "-" + rl::loss_mode_name(ac.loss_mode);
  std::vector<std::string> dirs;
  for (auto s : seeds) dirs.push_back((fs::path(c.get("out")) / make_run_id(prefix, hash, s)).string());

  parallel::for_each_index(static_cast<std::ptrdiff_t>(seeds.size()), [&](std::ptrdiff_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = seeds[i];
    const std::string run_id = make_run_id(prefix, hash, seed);
    const fs::path dir = prepare_run_dir(dirs[i], hash);
    write_config(dir, "train-rl", run_id, seed, c, hash);
    const auto r = rl::train_agent(env, ac, seed);
    record::RunRecord curve(run_id, {"step", "seed", "eval_return", "loss_mode", "env"});
    for (const auto& row : r.curve)
      curve.add_row({row.step, static_cast<long long>(seed), row.eval_return, rl::loss_mode_name(ac.loss_mode),
                     rl::env_name(env)});
    curve.write_csv((dir / "curve.csv").string());
    net::save_checkpoint(r.model, (dir / "model.bin").string(), (dir / "model.json").string());
    json bundle;
    bundle["model_kind"] = "rl_" + rl::loss_mode_name(ac.loss_mode);
    bundle["env"] = rl::env_name(env);
    bundle["atoms"] = to_vec(r.atoms);
    record::write_json_atomic((dir / "bundle.json").string(), bundle);
    json summary;
    summary["run_id"] = run_id;
    summary["config_hash"] = hash;
    summary["version"] = record::version_string();
    summary["wall_time_s"] = seconds_since(t0);
    json fin;
    fin["updates"] = r.updates;
    if (!r.curve.empty()) fin["final_window_mean_return"] = rl::final_window_mean(r.curve);
    summary["final"] = fin;
    record::write_json_atomic((dir / "summary.json").string(), summary);
  });
  return dirs;
}

}  // namespace nkcme::cli
