#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "s2s/config.hpp"
#include "s2s/io.hpp"
#include "s2s/pipeline.hpp"
#include "s2s/simulation.hpp"

using namespace s2s;
namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path path;
  Workdir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("s2s_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
};

int run(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" S2S_CLI_PATH "' " + args + " >cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallScene = R"({"scene": {"n_acquisitions": 6, "rows": 10, "cols": 12, "seed": 3},
  "pipeline": {"window": 5, "methods": ["cgg-mle", "cgg-cfpl", "regscm-pta"]},
  "power": {"n_trials": 200, "n_draws": 500, "grid": [{"tau": 1, "p_const": 0.1}, {"tau": 20, "p_const": 0.3}]},
  "sgrid": {"n_list": [5], "xi_list": [0, 0.6], "samples_per_cell": 500, "repeats": 2}})";

}  // namespace

TEST_CASE("cli exit codes") {
  Workdir w;
  CHECK(run("--help", w.path) == 0);
  CHECK(run("", w.path) == 2);
  CHECK(run("frobnicate", w.path) == 2);
  CHECK(run("simulate --no-such-flag", w.path) == 2);
  CHECK(slurp(w.path / "cli.log").find("Usage") != std::string::npos);
  CHECK(run("link --stack missing.json", w.path) == 2);
  CHECK(run("power --sided left", w.path) == 2);
  std::ofstream(w.path / "bad.json") << R"({"pipeline": {"window": 6}})";
  CHECK(run("simulate --config bad.json --out sim", w.path) == 2);
}

TEST_CASE("simulate, link and evaluate match the library") {
  Workdir w;
  std::ofstream(w.path / "scene.json") << kSmallScene;
  REQUIRE(run("simulate --config scene.json --out sim", w.path) == 0);
  CHECK(slurp(w.path / "cli.log").rfind("simulate:", 0) == 0);
  REQUIRE(run("link --config scene.json --stack sim/stack --threads 2 --out lnk", w.path) == 0);
  REQUIRE(run("evaluate --truth sim --products lnk --out ev", w.path) == 0);
  CHECK(slurp(w.path / "ev" / "rmse.csv").rfind("method,class,acquisition,rmse\n", 0) == 0);

  const Config c = parse_config(kSmallScene);
  const Scene scene = gen_scene(c.scene);
  const SlcStack cli_stack = io::read_stack(w.path / "sim" / "stack");
  CHECK(cli_stack.data == scene.stack.data);

  const ProductSet lib = run_pipeline(scene.stack, c.pipeline);
  for (const auto& v : lib.variants) {
    const Raster phases = io::read_raster(w.path / "lnk" / v.variant.name() / "phases");
    REQUIRE(phases.data.size() == v.phases.data.size());
    bool same = true;
    for (std::size_t i = 0; i < phases.data.size(); ++i) same &= phases.data[i] == double(float(v.phases.data[i]));
    CHECK_MESSAGE(same, v.variant.name());
  }
}

TEST_CASE("power csv equals the library call") {
  Workdir w;
  std::ofstream(w.path / "cfg.json") << kSmallScene;
  REQUIRE(run("power --config cfg.json --alpha 0.05 --sided right --out pw", w.path) == 0);
  Config c = parse_config(kSmallScene);
  c.power.alpha = 0.05;
  c.power.sided = Sidedness::right;
  const auto pts = power_experiment(c.power_reference, c.power_grid, c.power);
  std::vector<std::vector<double>> rows;
  for (const auto& p : pts)
    rows.push_back({p.het.tau, p.het.p_const, p.ref_coherence, p.het_coherence, p.gap, p.power, double(p.trials)});
  io::write_csv(w.path / "lib.csv", {"tau", "p_const", "ref_coherence", "het_coherence", "gap", "power", "trials"}, rows);
  CHECK(slurp(w.path / "pw" / "power.csv") == slurp(w.path / "lib.csv"));

  REQUIRE(run("sgrid --config cfg.json --out sg", w.path) == 0);
  CHECK(slurp(w.path / "sg" / "sgrid_summary.csv").rfind("n,xi,median_s\n", 0) == 0);
}
