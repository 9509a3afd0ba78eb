#include "nkcme/commands.hpp"
#include "nkcme/config.hpp"
#include "nkcme/record.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using nkcme::config::Config;
using nkcme::config::KeyValues;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  KeyValues named;  // filled from the dedicated flags below
};

// Defaults, then the config file, then --set pairs, then dedicated flags.
Config resolve(KeyValues schema, const CommonFlags& f) {
  Config c(std::move(schema));
  if (!f.config_path.empty()) c.apply(nkcme::config::load_file(f.config_path), f.config_path);
  c.apply(nkcme::config::parse_overrides(f.overrides), "--set");
  c.apply(f.named, "command line");
  return c;
}

template <class T>
void bind(CLI::App* app, const std::string& flag, const std::string& key, CommonFlags& f, const std::string& help) {
  app->add_option_function<T>(
      flag, [&f, key](const T& v) { f.named[key] = v; }, help);
}

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_path, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--set", f.overrides, "override any config key (key=value), repeatable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-network conditional mean embeddings: density estimation and distributional RL"};
  app.require_subcommand(1);
  app.set_version_flag("--version", nkcme::record::version_string());

  CommonFlags gen, train, evalf, rlf;
  std::vector<std::string> bundles;
  std::string aggregate_out;

  auto* g = app.add_subcommand("gen-data", "write a toy dataset as CSV");
  add_common(g, gen);
  bind<std::string>(g, "--family", "family", gen, "bimodal | skewed | ring");
  bind<std::string>(g, "--n", "n", gen, "number of samples");
  bind<std::string>(g, "--seed", "seed", gen, "generator seed");
  bind<std::string>(g, "--out", "out", gen, "output CSV path");

  auto* t = app.add_subcommand("train-density", "train a conditional density model");
  add_common(t, train);
  bind<std::string>(t, "--method", "method", train,
                    "proposal_iterative | proposal_joint | df_med | df_fixed | classical");
  bind<std::string>(t, "--dataset", "dataset", train, "bimodal | skewed | ring | csv");
  bind<std::string>(t, "--data", "data_path", train, "CSV input when --dataset csv");
  bind<std::string>(t, "--seed", "seeds", train, "single training seed");
  bind<std::string>(t, "--seeds", "seeds", train, "seed list, e.g. 1,2,3 or 1-10");
  bind<std::string>(t, "--epochs", "epochs", train, "training epochs");
  bind<std::string>(t, "--lr", "learning_rate", train, "learning rate");
  bind<std::string>(t, "--out", "out", train, "output directory");

  auto* e = app.add_subcommand("eval-density", "evaluate trained density bundles");
  add_common(e, evalf);
  e->add_option("--bundle", bundles, "run directory written by train-density, repeatable")->required();
  e->add_option("--out", aggregate_out, "directory for mean/std across bundles");
  bind<std::string>(e, "--seed", "eval_seed", evalf, "evaluation seed");
  bind<std::string>(e, "--runs", "eval_runs", evalf, "independent evaluation runs (toy data)");

  auto* r = app.add_subcommand("train-rl", "train a distributional (or DQN) agent");
  add_common(r, rlf);
  bind<std::string>(r, "--env", "env", rlf, "cartpole | acrobot | mountaincar");
  bind<std::string>(r, "--loss", "loss", rlf, "fuse | single | dqn");
  bind<std::string>(r, "--seed", "seeds", rlf, "single seed");
  bind<std::string>(r, "--seeds", "seeds", rlf, "seed list, e.g. 1,2,3 or 1-3");
  bind<std::string>(r, "--steps", "total_steps", rlf, "environment steps");
  bind<std::string>(r, "--sigma", "sigma", rlf, "bandwidth of the single-kernel loss");
  bind<std::string>(r, "--lr", "learning_rate", rlf, "learning rate (0 = environment default)");
  bind<std::string>(r, "--out", "out", rlf, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : nkcme::cli::exit_config;
  }

  try {
    if (g->parsed()) {
      std::cout << nkcme::cli::cmd_gen_data(resolve(nkcme::config::gen_data_schema(), gen)) << '\n';
    } else if (t->parsed()) {
      for (const auto& d : nkcme::cli::cmd_train_density(resolve(nkcme::config::train_density_schema(), train)))
        std::cout << d << '\n';
    } else if (e->parsed()) {
      for (const auto& f :
           nkcme::cli::cmd_eval_density(bundles, resolve(nkcme::config::eval_density_schema(), evalf), aggregate_out))
        std::cout << f << '\n';
    } else if (r->parsed()) {
      for (const auto& d : nkcme::cli::cmd_train_rl(resolve(nkcme::config::train_rl_schema(), rlf)))
        std::cout << d << '\n';
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return nkcme::cli::exit_code_for(ex);
  }
  return 0;
}
