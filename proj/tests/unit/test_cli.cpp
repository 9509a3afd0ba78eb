#include "nkcme/commands.hpp"
#include "nkcme/config.hpp"
#include "nkcme/error.hpp"
#include "nkcme/kernels.hpp"
#include "nkcme/record.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nkcme;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("nkcme-test-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

config::Config make(config::KeyValues schema, const config::KeyValues& kv) {
  config::Config c(std::move(schema));
  c.apply(kv, "test");
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + NKCME_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

config::KeyValues small_density(const std::string& method, const fs::path& out) {
  return {{"method", method}, {"n", "300"}, {"epochs", "3"}, {"grid_size", "20"}, {"hidden", "8,8"},
          {"out", out.string()}};
}

}  // namespace

TEST_CASE("config text parsing") {
  const auto kv = config::parse_text("# header\n epochs = 20 \nmethod = \"df_med\"  # trailing\n\n[section]\n", "t");
  CHECK(kv.at("epochs") == "20");
  CHECK(kv.at("method") == "df_med");
  CHECK(kv.size() == 2);
  CHECK_THROWS_WITH_AS(config::parse_text("epochs 20\n", "cfg.txt"), doctest::Contains("cfg.txt:1"), ConfigError);
  CHECK_THROWS_AS(config::parse_overrides({"=3"}), ConfigError);
  CHECK(config::parse_overrides({"seeds=1,2"}).at("seeds") == "1,2");
}

TEST_CASE("config schema, typed access and hashing") {
  config::Config c(config::train_density_schema());
  CHECK_THROWS_WITH_AS(c.apply({{"epochz", "3"}}, "file.cfg"), doctest::Contains("unknown config key 'epochz'"),
                       ConfigError);
  c.apply({{"seeds", "1-3, 7"}, {"hidden", "4,5"}, {"spectral_norm", "yes"}}, "test");
  CHECK(c.get_u64_list("seeds") == std::vector<std::uint64_t>{1, 2, 3, 7});
  CHECK(c.get_int_list("hidden") == std::vector<int>{4, 5});
  CHECK(c.get_bool("spectral_norm"));
  CHECK_THROWS_AS(make(config::train_density_schema(), {{"epochs", "3x"}}).get_int("epochs"), ConfigError);
  CHECK_THROWS_AS(make(config::train_density_schema(), {{"seeds", "5-2"}}).get_u64_list("seeds"), ConfigError);

  auto other = c;
  other.set("seeds", "9");
  CHECK(c.hash() != other.hash());
  CHECK(c.hash({"seeds"}) == other.hash({"seeds"}));
  CHECK(c.canonical().find("epochs=1000\n") != std::string::npos);
}

TEST_CASE("spectral norm defaults to on only for csv data") {
  CHECK_FALSE(cli::spectral_norm_enabled(make(config::train_density_schema(), {})));
  CHECK(cli::spectral_norm_enabled(make(config::train_density_schema(), {{"dataset", "csv"}})));
  CHECK_FALSE(cli::spectral_norm_enabled(make(config::train_density_schema(), {{"dataset", "csv"}, {"spectral_norm", "off"}})));
  CHECK(cli::spectral_norm_enabled(make(config::train_density_schema(), {{"spectral_norm", "on"}})));
  CHECK_THROWS_AS(cli::spectral_norm_enabled(make(config::train_density_schema(), {{"spectral_norm", "maybe"}})), ConfigError);
}

TEST_CASE("run ids") {
  CHECK(cli::make_run_id("df_med", "0123456789abcdef", 4) == "df_med-01234567-s4");
  CHECK(record::fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("exit code mapping") {
  CHECK(cli::exit_code_for(ConfigError("x")) == 2);
  CHECK(cli::exit_code_for(UsageError("x")) == 2);
  CHECK(cli::exit_code_for(DivergenceError("x", 3)) == 3);
  CHECK(cli::exit_code_for(IoError("x")) == 4);
  CHECK(cli::exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("gen-data") {
  TempDir tmp("gen");
  const auto a = tmp.path / "a.csv", b = tmp.path / "b.csv";
  cli::cmd_gen_data(make(config::gen_data_schema(), {{"n", "10"}, {"seed", "7"}, {"out", a.string()}}));
  cli::cmd_gen_data(make(config::gen_data_schema(), {{"n", "10"}, {"seed", "7"}, {"out", b.string()}}));
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).rfind("x,y\n", 0) == 0);

  const auto ring = tmp.path / "sub" / "ring.csv";
  cli::cmd_gen_data(make(config::gen_data_schema(), {{"family", "ring"}, {"out", ring.string()}}));
  const auto text = slurp(ring);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5001);

  CHECK_THROWS_WITH_AS(cli::cmd_gen_data(make(config::gen_data_schema(), {{"family", "moons"}})),
                       doctest::Contains("bimodal, skewed, ring"), ConfigError);
}

TEST_CASE("train-density writes a complete, reproducible bundle") {
  TempDir tmp("train");
  const auto dirs1 = cli::cmd_train_density(make(config::train_density_schema(), small_density("proposal_joint", tmp.path / "r1")));
  const auto dirs2 = cli::cmd_train_density(make(config::train_density_schema(), small_density("proposal_joint", tmp.path / "r2")));
  REQUIRE(dirs1.size() == 1);
  const fs::path d1(dirs1[0]), d2(dirs2[0]);
  for (const char* f : {"config.json", "curve.csv", "model.bin", "model.json", "bundle.json", "summary.json"})
    CHECK(fs::exists(d1 / f));
  CHECK(d1.filename() == d2.filename());
  CHECK(slurp(d1 / "curve.csv") == slurp(d2 / "curve.csv"));
  CHECK(slurp(d1 / "model.bin") == slurp(d2 / "model.bin"));
  CHECK(slurp(d1 / "curve.csv").find(",sigma") != std::string::npos);

  const auto summary = read_json(d1 / "summary.json");
  CHECK(summary.at("run_id") == d1.filename().string());
  CHECK(summary.at("config_hash") == read_json(d1 / "config.json").at("config_hash"));
  CHECK(read_json(d1 / "bundle.json").at("model_kind") == "proposal_joint");
}

TEST_CASE("df_med records the median heuristic of the training outputs") {
  TempDir tmp("dfmed");
  auto kv = small_density("df_med", tmp.path);
  kv["seeds"] = "5";
  const auto c = make(config::train_density_schema(), kv);
  const auto dirs = cli::cmd_train_density(c);
  const double recorded = read_json(fs::path(dirs[0]) / "summary.json").at("final").at("output_bandwidth");
  const auto data = cli::prepare_density_data(c);
  CHECK(recorded == kernels::median_heuristic_1d(data.train.outputs, 5));
}

TEST_CASE("a seed list yields independent runs") {
  TempDir tmp("seeds");
  auto kv = small_density("proposal_iterative", tmp.path);
  kv["seeds"] = "1-3";
  kv["epochs"] = "1";
  const auto dirs = cli::cmd_train_density(make(config::train_density_schema(), kv));
  REQUIRE(dirs.size() == 3);
  CHECK(dirs[0] != dirs[1]);
  CHECK(dirs[1] != dirs[2]);
  CHECK(slurp(fs::path(dirs[0]) / "model.bin") != slurp(fs::path(dirs[1]) / "model.bin"));
}

TEST_CASE("eval-density is reproducible and refuses mismatched re-evaluation") {
  TempDir tmp("eval");
  auto kv = small_density("classical", tmp.path / "runs");
  kv["seeds"] = "1,2";
  const auto dirs = cli::cmd_train_density(make(config::train_density_schema(), kv));
  const auto ec = make(config::eval_density_schema(), {{"eval_runs", "2"}, {"points", "20"}});
  const auto files = cli::cmd_eval_density(dirs, ec, (tmp.path / "agg").string());
  REQUIRE(files.size() == 3);
  const std::string first = slurp(files[0]), agg = slurp(files[2]);
  CHECK(first.find("was1") != std::string::npos);
  cli::cmd_eval_density(dirs, ec, (tmp.path / "agg").string());
  CHECK(slurp(files[0]) == first);
  CHECK(slurp(files[2]) == agg);
  CHECK(read_json(tmp.path / "agg" / "summary.json").at("bundles").size() == 2);

  const auto changed = make(config::eval_density_schema(), {{"eval_runs", "3"}, {"points", "20"}});
  CHECK_THROWS_AS(cli::cmd_eval_density(dirs, changed), ConfigError);
  CHECK_THROWS_AS(cli::cmd_eval_density({(tmp.path / "nowhere").string()}, ec), IoError);
}

TEST_CASE("train-rl curves") {
  TempDir tmp("rl");
  auto kv = [&](const std::string& out) {
    return config::KeyValues{{"total_steps", "300"}, {"seeds", "1,2"}, {"hidden", "8"}, {"out", out}};
  };
  const auto a = cli::cmd_train_rl(make(config::train_rl_schema(), kv((tmp.path / "a").string())));
  const auto b = cli::cmd_train_rl(make(config::train_rl_schema(), kv((tmp.path / "b").string())));
  REQUIRE(a.size() == 2);
  const auto csv = slurp(fs::path(a[0]) / "curve.csv");
  CHECK(csv == slurp(fs::path(b[0]) / "curve.csv"));
  CHECK(csv.find("step,seed,eval_return,loss_mode,env") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.find("fuse,cartpole") != std::string::npos);
  CHECK(slurp(fs::path(a[0]) / "curve.csv") != slurp(fs::path(a[1]) / "curve.csv"));
  CHECK_THROWS_AS(cli::cmd_train_rl(make(config::train_rl_schema(), {{"env", "pong"}})), ConfigError);
}

TEST_CASE("command-line exit codes") {
  TempDir tmp("exit");
  const std::string out = (tmp.path / "d.csv").string();
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("gen-data --n 5 --out " + out) == 0);
  CHECK(fs::exists(out));
  CHECK(run_cli("gen-data --family moons --out " + out) == 2);
  CHECK(run_cli("gen-data --set bogus=1 --out " + out) == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("train-density --dataset csv --data " + (tmp.path / "missing.csv").string()) == 4);
  CHECK(run_cli("train-density --epochs 2 --set n=100 --lr 1e300 --out " + (tmp.path / "runs").string()) == 3);
  CHECK(run_cli("eval-density --bundle " + (tmp.path / "none").string()) == 4);
}
