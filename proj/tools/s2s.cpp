// s2s: command-line front end for simulation, selection, estimation, phase
// linking and the two statistical experiments.
#include <CLI11.hpp>
#include <tbb/global_control.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2s/config.hpp"
#include "s2s/errors.hpp"
#include "s2s/io.hpp"
#include "s2s/pipeline.hpp"
#include "s2s/simulation.hpp"

namespace fs = std::filesystem;
using namespace s2s;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

const char* kSchemas = R"(Outputs (rasters are <name>.json + <name>.bin, float32 little-endian):
  simulate  stack, truth_phases (N bands), labels, config.json
  select    sshp_count, acaf_coherence, config.json
  estimate  sshp_count, s_map, log10_s_map, <estimator>/mean_coherence,
            <estimator>/diagnostics, config.json
  link      sshp_count, s_map, log10_s_map, <method>/{phases, phase_stat,
            mean_coherence, diagnostics}, diagnostics.csv,
            diagnostics_summary.csv, config.json

CSV schemas:
  diagnostics.csv          method,row,col,flags        (pixels with flags != 0)
  diagnostics_summary.csv  method,flag,count
  rmse.csv                 method,class,acquisition,rmse
                           (class -1: all pixels; acquisition -1: mean over acquisitions)
  power.csv                tau,p_const,ref_coherence,het_coherence,gap,power,trials
  sgrid.csv                n,xi,repeat,s_hat
  sgrid_summary.csv        n,xi,median_s

Diagnostic flag bits: 1 fallback, 2 alignment ambiguous, 4 selection failed,
8 estimator failed, 16 linker failed, 32 not converged, 64 s at bound,
128 magnitude shrunk, 256 non-informative, 512 phase statistic undefined.

Exit status: 0 success, 2 invalid arguments, config or input, 1 runtime failure.
)";

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> window;
  std::optional<double> alpha;
  std::vector<std::string> methods;
  std::vector<std::string> estimators;
  std::optional<int> threads;
  bool paper_scale = false;
  std::string out = ".";
  std::string stack;
  std::string truth;
  std::string products;
  std::string sided;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file (sections scene, acaf, cgg, phase_linking, pipeline, power, sgrid)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed (overrides every seed in the config)");
  cmd->add_option("--threads", f.threads, "worker threads, 0 for all cores (fallback: S2S_THREADS)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--paper-scale", f.paper_scale, "start from the 30-acquisition 200 x 200 scene");
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
}

void add_processing(CLI::App* cmd, Flags& f) {
  cmd->add_option("--stack", f.stack, "input stack header")->required();
  cmd->add_option("--window", f.window, "odd window side length");
  cmd->add_option("--alpha", f.alpha, "ACAF significance level");
}

Config build_config(const Flags& f) {
  Config c = f.config.empty() ? default_config(f.paper_scale) : load_config(f.config, f.paper_scale);
  if (f.seed) c.scene.seed = c.pipeline.seed = c.power.seed = c.sgrid.seed = *f.seed;
  if (f.window) c.pipeline.window = *f.window;
  if (f.alpha) c.pipeline.acaf.alpha = c.power.alpha = *f.alpha;
  if (f.threads) {
    c.pipeline.threads = *f.threads;
  } else if (const char* env = std::getenv("S2S_THREADS"); env && *env) {
    try {
      std::size_t used = 0;
      c.pipeline.threads = std::stoi(env, &used);
      if (env[used] != '\0') throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw InvalidArgument(std::string("S2S_THREADS must be an integer, got '") + env + "'");
    }
  }
  if (!f.sided.empty()) c.power.sided = f.sided == "two" ? Sidedness::two : Sidedness::right;

  std::vector<Estimator> estimators;
  for (const auto& e : f.estimators) estimators.push_back(parse_estimator(e));
  if (!f.methods.empty()) {
    // A bare linker name pairs with each --estimator (cgg when none is given).
    if (estimators.empty()) estimators.push_back(Estimator::cgg);
    c.pipeline.variants.clear();
    for (const auto& m : f.methods) {
      if (m.find('-') != std::string::npos) {
        c.pipeline.variants.push_back(parse_variant(m));
      } else {
        for (Estimator e : estimators) c.pipeline.variants.push_back({e, parse_linker(m)});
      }
    }
  } else if (!estimators.empty()) {
    c.pipeline.variants.clear();
    for (Estimator e : estimators) c.pipeline.variants.push_back({e, Linker::cfpl});
  }
  c.validate();
  return c;
}

void write_config(const Config& c, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream f(out / "config.json");
  f << dump_config(c);
  if (!f) throw Error("cannot write " + (out / "config.json").string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Raster log10_of(const Raster& r) {
  Raster out = r;
  for (double& v : out.data) v = std::log10(v);
  return out;
}

Raster labels_raster(const std::vector<int>& labels, int rows, int cols) {
  Raster r(1, rows, cols);
  for (std::size_t i = 0; i < labels.size(); ++i) r.data[i] = labels[i];
  return r;
}

// --- subcommands -------------------------------------------------------------

int cmd_simulate(const Config& c, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scene scene = gen_scene(c.scene);
  io::write_stack(scene.stack, out / "stack");
  io::write_raster(scene.truth.phases, out / "truth_phases", "true interferometric phases, radians");
  io::write_raster(labels_raster(scene.truth.labels, c.scene.rows, c.scene.cols), out / "labels", "class index");
  write_config(c, out);
  std::printf("simulate: %d x %d x %d stack, %zu classes, seed %llu -> %s (%.1f s)\n", c.scene.n_acquisitions,
              c.scene.rows, c.scene.cols, c.scene.classes.size(), (unsigned long long)c.scene.seed,
              out.string().c_str(), seconds_since(t0));
  return kExitOk;
}

double mean_of(const Raster& r) {
  double s = 0.0;
  std::size_t n = 0;
  for (double v : r.data)
    if (std::isfinite(v)) s += v, ++n;
  return n ? s / double(n) : std::nan("");
}

void write_common(const ProductSet& ps, const fs::path& out, bool with_s) {
  io::write_raster(ps.sshp_count, out / "sshp_count", "selected pixels per window");
  if (with_s) {
    io::write_raster(ps.s_map, out / "s_map", "CGG shape parameter");
    io::write_raster(log10_of(ps.s_map), out / "log10_s_map", "log10 of the CGG shape parameter");
  }
}

bool any_cgg(const PipelineConfig& p) {
  for (const auto& v : p.variants)
    if (v.estimator == Estimator::cgg) return true;
  return false;
}

int cmd_select(const Config& c, const SlcStack& stack, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProductSet ps = run_pipeline(stack, c.pipeline, Stage::select);
  write_common(ps, out, false);
  io::write_raster(ps.acaf_coherence, out / "acaf_coherence", "mean coherence of the selection's Tyler estimate");
  write_config(c, out);
  std::printf("select: %d x %d pixels, window %d, alpha %g, mean SSHP %.1f -> %s (%.1f s)\n", stack.rows, stack.cols,
              c.pipeline.window, c.pipeline.acaf.alpha, mean_of(ps.sshp_count), out.string().c_str(), seconds_since(t0));
  return kExitOk;
}

int cmd_estimate(Config c, const SlcStack& stack, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  // One product per estimator; the linker is irrelevant here.
  std::vector<Variant> unique;
  for (const auto& v : c.pipeline.variants) {
    const Variant e{v.estimator, Linker::cfpl};
    if (std::find(unique.begin(), unique.end(), e) == unique.end()) unique.push_back(e);
  }
  c.pipeline.variants = unique;
  const ProductSet ps = run_pipeline(stack, c.pipeline, Stage::estimate);
  write_common(ps, out, any_cgg(c.pipeline));
  std::string summary;
  for (const auto& v : ps.variants) {
    const std::string name = to_string(v.variant.estimator);
    io::write_raster(v.mean_coherence, out / name / "mean_coherence", "mean |Gamma|");
    io::write_raster(v.diagnostics, out / name / "diagnostics", "diagnostic flag bits");
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s %.3f", name.c_str(), mean_of(v.mean_coherence));
    summary += buf;
  }
  write_config(c, out);
  std::printf("estimate: %d x %d pixels, mean coherence%s -> %s (%.1f s)\n", stack.rows, stack.cols, summary.c_str(),
              out.string().c_str(), seconds_since(t0));
  return kExitOk;
}

int cmd_link(const Config& c, const SlcStack& stack, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProductSet ps = run_pipeline(stack, c.pipeline);
  write_common(ps, out, any_cgg(c.pipeline));
  std::vector<std::vector<std::string>> pixels, summary_rows;
  std::size_t flagged = 0;
  for (const auto& v : ps.variants) {
    const std::string name = v.variant.name();
    io::write_raster(v.phases, out / name / "phases", "linked phases, radians, acquisition 0 = 0");
    io::write_raster(v.phase_stat, out / name / "phase_stat", "phase consistency statistic");
    io::write_raster(v.mean_coherence, out / name / "mean_coherence", "mean |Gamma|");
    io::write_raster(v.diagnostics, out / name / "diagnostics", "diagnostic flag bits");
    std::map<int, long> counts;
    for (int r = 0; r < stack.rows; ++r)
      for (int col = 0; col < stack.cols; ++col) {
        const auto flags = static_cast<std::uint32_t>(v.diagnostics.at(0, r, col));
        if (!flags) continue;
        ++flagged;
        pixels.push_back({name, std::to_string(r), std::to_string(col), std::to_string(flags)});
        for (int b = 0; b < 32; ++b)
          if (flags & (1u << b)) ++counts[1 << b];
      }
    for (const auto& [bit, n] : counts) summary_rows.push_back({name, std::to_string(bit), std::to_string(n)});
  }
  io::write_csv_text(out / "diagnostics.csv", {"method", "row", "col", "flags"}, pixels);
  io::write_csv_text(out / "diagnostics_summary.csv", {"method", "flag", "count"}, summary_rows);
  write_config(c, out);
  std::string names;
  for (const auto& v : ps.variants) names += (names.empty() ? "" : ",") + v.variant.name();
  std::printf("link: %d x %d x %d, methods %s, window %d, %zu flagged pixel-methods -> %s (%.1f s)\n",
              stack.n_acquisitions, stack.rows, stack.cols, names.c_str(), c.pipeline.window, flagged,
              out.string().c_str(), seconds_since(t0));
  return kExitOk;
}

fs::path header_in(const fs::path& dir, const std::string& name) {
  const fs::path p = dir / (name + ".json");
  if (!fs::exists(p)) throw FormatError("missing " + p.string());
  return p;
}

int cmd_evaluate(const fs::path& truth_dir, const fs::path& products, const fs::path& out) {
  const Raster truth = io::read_raster(header_in(truth_dir, "truth_phases"));
  const Raster labels = io::read_raster(header_in(truth_dir, "labels"));
  std::vector<std::string> methods;
  for (const auto& e : fs::directory_iterator(products))
    if (e.is_directory() && fs::exists(e.path() / "phases.json")) methods.push_back(e.path().filename().string());
  std::sort(methods.begin(), methods.end());
  if (methods.empty()) throw FormatError("no <method>/phases products under " + products.string());

  int n_classes = 0;
  for (double v : labels.data) n_classes = std::max(n_classes, int(v) + 1);
  std::vector<std::vector<std::string>> rows;
  std::string summary;
  for (const auto& m : methods) {
    const Raster est = io::read_raster(products / m / "phases.json");
    if (est.bands != truth.bands || est.rows != truth.rows || est.cols != truth.cols)
      throw FormatError(m + "/phases does not match the truth dimensions");
    for (int cls = -1; cls < n_classes; ++cls) {
      std::vector<char> mask(labels.data.size());
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = cls < 0 || int(labels.data[i]) == cls;
      const RVector e = rmse_per_acquisition(est, truth, &mask);
      for (Index b = 0; b < e.size(); ++b)
        rows.push_back({m, std::to_string(cls), std::to_string(b), io::format_number(e(b))});
      rows.push_back({m, std::to_string(cls), "-1", io::format_number(e.mean())});
      if (cls < 0) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " %s %.4f", m.c_str(), e.mean());
        summary += buf;
      }
    }
  }
  io::write_csv_text(out / "rmse.csv", {"method", "class", "acquisition", "rmse"}, rows);
  std::printf("evaluate: mean RMSE (rad)%s -> %s\n", summary.c_str(), (out / "rmse.csv").string().c_str());
  return kExitOk;
}

int cmd_power(const Config& c, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pts = power_experiment(c.power_reference, c.power_grid, c.power);
  std::vector<std::vector<double>> rows;
  double best = 0.0;
  for (const auto& p : pts) {
    rows.push_back({p.het.tau, p.het.p_const, p.ref_coherence, p.het_coherence, p.gap, p.power, double(p.trials)});
    best = std::max(best, p.power);
  }
  io::write_csv(out / "power.csv", {"tau", "p_const", "ref_coherence", "het_coherence", "gap", "power", "trials"}, rows);
  write_config(c, out);
  std::printf("power: %zu grid points, %s-sided, alpha %g, reference tau %g p %g, max power %.3f -> %s (%.1f s)\n",
              pts.size(), c.power.sided == Sidedness::right ? "right" : "two", c.power.alpha, c.power_reference.tau,
              c.power_reference.p_const, best, (out / "power.csv").string().c_str(), seconds_since(t0));
  return kExitOk;
}

int cmd_sgrid(const Config& c, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cells = s_grid_experiment(c.sgrid);
  std::vector<std::vector<double>> all, summary;
  for (const auto& cell : cells) {
    for (std::size_t k = 0; k < cell.s_hat.size(); ++k) all.push_back({double(cell.n), cell.xi, double(k), cell.s_hat[k]});
    summary.push_back({double(cell.n), cell.xi, cell.median_s});
  }
  io::write_csv(out / "sgrid.csv", {"n", "xi", "repeat", "s_hat"}, all);
  io::write_csv(out / "sgrid_summary.csv", {"n", "xi", "median_s"}, summary);
  write_config(c, out);
  std::printf("sgrid: %zu cells x %d repeats, %lld samples each -> %s (%.1f s)\n", cells.size(), c.sgrid.repeats,
              (long long)c.sgrid.samples_per_cell, out.string().c_str(), seconds_since(t0));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2s: SHP selection and phase linking for distributed-scatterer InSAR"};
  app.footer(kSchemas);
  app.require_subcommand(1);
  Flags f;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic stack with ground truth");
  add_common(simulate, f);

  auto* select = app.add_subcommand("select", "ACAF homogeneous-pixel selection");
  add_common(select, f);
  add_processing(select, f);

  auto* estimate = app.add_subcommand("estimate", "selection plus coherence estimation");
  add_common(estimate, f);
  add_processing(estimate, f);
  estimate->add_option("--estimator", f.estimators, "cgg, tyler or regscm (repeatable)")->delimiter(',');

  auto* link = app.add_subcommand("link", "full pipeline: selection, estimation, phase linking");
  add_common(link, f);
  add_processing(link, f);
  link->add_option("--method", f.methods, "cgg-mle, <estimator>-<linker>, or a linker name (repeatable)")
      ->delimiter(',');
  link->add_option("--estimator", f.estimators, "estimator for bare linker names (repeatable)")->delimiter(',');

  auto* evaluate = app.add_subcommand("evaluate", "phase RMSE of linked products against simulation truth");
  evaluate->add_option("--truth", f.truth, "directory written by simulate")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--products", f.products, "directory written by link")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", f.out, "output directory")->capture_default_str();

  auto* power = app.add_subcommand("power", "power of the ACAF test over the (p_const, tau) grid");
  add_common(power, f);
  power->add_option("--alpha", f.alpha, "significance level");
  power->add_option("--sided", f.sided, "right or two")->check(CLI::IsMember({"right", "two"}));

  auto* sgrid = app.add_subcommand("sgrid", "CGG shape estimates over N and texture variance");
  add_common(sgrid, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kExitValidation;
  }

  const fs::path out = f.out;
  try {
    if (evaluate->parsed()) return cmd_evaluate(f.truth, f.products, out);

    if (simulate->parsed()) check_class_power_constants();
    const Config c = build_config(f);
    std::unique_ptr<tbb::global_control> limit;
    if (c.pipeline.threads > 0)
      limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, c.pipeline.threads);

    if (simulate->parsed()) return cmd_simulate(c, out);
    if (power->parsed()) return cmd_power(c, out);
    if (sgrid->parsed()) return cmd_sgrid(c, out);

    const SlcStack stack = io::read_stack(f.stack);
    if (select->parsed()) return cmd_select(c, stack, out);
    if (estimate->parsed()) return cmd_estimate(c, stack, out);
    return cmd_link(c, stack, out);
  } catch (const InvalidArgument& e) {
    std::cerr << "s2s: invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const FormatError& e) {
    std::cerr << "s2s: invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "s2s: " << e.what() << '\n';
    return kExitRuntime;
  }
}
