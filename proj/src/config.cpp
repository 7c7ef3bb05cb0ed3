#include "s2s/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "s2s/errors.hpp"

namespace s2s {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw FormatError(where + ": unknown key '" + k + "'");
}

template <class T>
void take(const json& j, const char* key, T& target, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(where + "." + key + " has the wrong type");
  }
}

Sidedness parse_sided(const std::string& s) {
  if (s == "right") return Sidedness::right;
  if (s == "two") return Sidedness::two;
  throw FormatError("sided must be 'right' or 'two', got '" + s + "'");
}

DecayParams decay_from(const json& j, const std::string& where) {
  only_keys(j, where, {"tau", "p_const"});
  DecayParams d;
  take(j, "tau", d.tau, where);
  take(j, "p_const", d.p_const, where);
  return d;
}

json decay_to(const DecayParams& d) { return {{"tau", d.tau}, {"p_const", d.p_const}}; }

void read_scene(const json& j, SceneSpec& s, bool& relabel) {
  const std::string w = "scene";
  only_keys(j, w, {"n_acquisitions", "rows", "cols", "dt", "seed", "classes", "deformation", "labels"});
  const int rows = s.rows, cols = s.cols;
  take(j, "n_acquisitions", s.n_acquisitions, w);
  take(j, "rows", s.rows, w);
  take(j, "cols", s.cols, w);
  take(j, "dt", s.dt, w);
  take(j, "seed", s.seed, w);
  if (j.contains("classes")) {
    if (!j["classes"].is_array()) throw FormatError("scene.classes: expected an array");
    s.classes.clear();
    for (const auto& c : j["classes"]) {
      only_keys(c, "scene.classes[]", {"tau", "p_const", "xi", "sigma2"});
      ScattererClass k;
      take(c, "tau", k.tau, "scene.classes[]");
      take(c, "p_const", k.p_const, "scene.classes[]");
      take(c, "xi", k.xi, "scene.classes[]");
      take(c, "sigma2", k.sigma2, "scene.classes[]");
      s.classes.push_back(k);
    }
  }
  take(j, "deformation", s.deformation.coeffs, w);
  if (j.contains("labels") && !(j["labels"].is_string() && j["labels"] == "default")) {
    take(j, "labels", s.labels, w);
    relabel = false;
  } else if (s.rows != rows || s.cols != cols || j.contains("labels")) {
    relabel = true;
  }
}

void read_acaf(const json& j, AcafConfig& a) {
  const std::string w = "acaf";
  only_keys(j, w, {"alpha", "n_draws", "max_lag", "coherence_floor", "k_max", "k_max_refinement", "epsilon",
                   "aux_window", "seed_shrinkage", "tyler"});
  take(j, "alpha", a.alpha, w);
  take(j, "n_draws", a.n_draws, w);
  take(j, "max_lag", a.max_lag, w);
  take(j, "coherence_floor", a.coherence_floor, w);
  take(j, "k_max", a.k_max, w);
  take(j, "k_max_refinement", a.k_max_refinement, w);
  take(j, "epsilon", a.epsilon, w);
  take(j, "aux_window", a.aux_window, w);
  take(j, "seed_shrinkage", a.seed_shrinkage, w);
  if (j.contains("tyler")) {
    only_keys(j["tyler"], "acaf.tyler", {"tol", "max_iter"});
    take(j["tyler"], "tol", a.tyler.tol, "acaf.tyler");
    take(j["tyler"], "max_iter", a.tyler.max_iter, "acaf.tyler");
  }
}

void read_cgg(const json& j, CggOptions& c) {
  const std::string w = "cgg";
  only_keys(j, w, {"s_min", "s_max", "grid_points", "s_tol", "scatter_tol", "max_rounds"});
  take(j, "s_min", c.search.s_min, w);
  take(j, "s_max", c.search.s_max, w);
  take(j, "grid_points", c.search.grid_points, w);
  take(j, "s_tol", c.s_tol, w);
  take(j, "scatter_tol", c.scatter_tol, w);
  take(j, "max_rounds", c.max_rounds, w);
}

void read_linking(const json& j, PipelineConfig& p) {
  only_keys(j, "phase_linking", {"mle", "mm"});
  if (j.contains("mle")) {
    const json& m = j["mle"];
    only_keys(m, "phase_linking.mle", {"gradient_tolerance", "max_iterations", "lbfgs_memory"});
    take(m, "gradient_tolerance", p.mle.gradient_tolerance, "phase_linking.mle");
    take(m, "max_iterations", p.mle.max_iterations, "phase_linking.mle");
    take(m, "lbfgs_memory", p.mle.lbfgs_memory, "phase_linking.mle");
  }
  if (j.contains("mm")) {
    const json& m = j["mm"];
    only_keys(m, "phase_linking.mm", {"rel_tolerance", "phase_tolerance", "max_iterations"});
    take(m, "rel_tolerance", p.mm.rel_tolerance, "phase_linking.mm");
    take(m, "phase_tolerance", p.mm.phase_tolerance, "phase_linking.mm");
    take(m, "max_iterations", p.mm.max_iterations, "phase_linking.mm");
  }
}

void read_pipeline(const json& j, PipelineConfig& p) {
  const std::string w = "pipeline";
  only_keys(j, w, {"window", "methods", "shrinkage", "seed", "threads", "tile_rows"});
  take(j, "window", p.window, w);
  take(j, "seed", p.seed, w);
  take(j, "threads", p.threads, w);
  take(j, "tile_rows", p.tile_rows, w);
  if (j.contains("methods")) {
    std::vector<std::string> names;
    take(j, "methods", names, w);
    p.variants.clear();
    try {
      for (const auto& n : names) p.variants.push_back(parse_variant(n));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("pipeline.methods: ") + e.what());
    }
  }
  if (j.contains("shrinkage")) {
    const json& s = j["shrinkage"];
    if (s.is_string() && s == "auto") {
      p.shrinkage.reset();
    } else if (s.is_number()) {
      p.shrinkage = s.get<double>();
    } else {
      throw FormatError("pipeline.shrinkage must be \"auto\" or a number");
    }
  }
}

void read_power(const json& j, Config& c) {
  const std::string w = "power";
  only_keys(j, w, {"n_acquisitions", "dt", "alpha", "sided", "n_trials", "n_draws", "seed", "reference", "grid"});
  PowerSetup& p = c.power;
  take(j, "n_acquisitions", p.n_acquisitions, w);
  take(j, "dt", p.dt, w);
  take(j, "alpha", p.alpha, w);
  if (j.contains("sided")) {
    std::string s;
    take(j, "sided", s, w);
    p.sided = parse_sided(s);
  }
  take(j, "n_trials", p.n_trials, w);
  take(j, "n_draws", p.n_draws, w);
  take(j, "seed", p.seed, w);
  if (j.contains("reference")) c.power_reference = decay_from(j["reference"], "power.reference");
  if (j.contains("grid")) {
    if (!j["grid"].is_array()) throw FormatError("power.grid: expected an array");
    c.power_grid.clear();
    for (const auto& g : j["grid"]) c.power_grid.push_back(decay_from(g, "power.grid[]"));
  }
}

void read_sgrid(const json& j, SGridSetup& s) {
  const std::string w = "sgrid";
  only_keys(j, w, {"n_list", "xi_list", "samples_per_cell", "repeats", "coherence", "seed"});
  take(j, "n_list", s.n_list, w);
  take(j, "xi_list", s.xi_list, w);
  take(j, "samples_per_cell", s.samples_per_cell, w);
  take(j, "repeats", s.repeats, w);
  take(j, "seed", s.seed, w);
  if (j.contains("coherence")) s.coherence = decay_from(j["coherence"], "sgrid.coherence");
}

}  // namespace

void Config::validate() const {
  scene.validate();
  pipeline.validate();
  power.validate();
  if (power_grid.empty()) throw InvalidArgument("power.grid must not be empty");
  sgrid.validate();
}

Config default_config(bool paper_scale) {
  Config c;
  c.scene = default_scene(paper_scale);
  c.power_grid = default_power_grid();
  return c;
}

Config parse_config(const std::string& text, bool paper_scale) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  only_keys(j, "config", {"scene", "acaf", "cgg", "phase_linking", "pipeline", "power", "sgrid"});
  Config c = default_config(paper_scale);
  bool relabel = false;
  if (j.contains("scene")) read_scene(j["scene"], c.scene, relabel);
  if (relabel) c.scene.labels = default_label_map(c.scene.rows, c.scene.cols);
  if (j.contains("acaf")) read_acaf(j["acaf"], c.pipeline.acaf);
  if (j.contains("cgg")) read_cgg(j["cgg"], c.pipeline.cgg);
  if (j.contains("phase_linking")) read_linking(j["phase_linking"], c.pipeline);
  if (j.contains("pipeline")) read_pipeline(j["pipeline"], c.pipeline);
  if (j.contains("power")) read_power(j["power"], c);
  if (j.contains("sgrid")) read_sgrid(j["sgrid"], c.sgrid);
  return c;
}

Config load_config(const std::filesystem::path& path, bool paper_scale) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), paper_scale);
}

std::string dump_config(const Config& c) {
  json classes = json::array();
  for (const auto& k : c.scene.classes)
    classes.push_back({{"tau", k.tau}, {"p_const", k.p_const}, {"xi", k.xi}, {"sigma2", k.sigma2}});
  const bool default_labels = c.scene.labels == default_label_map(c.scene.rows, c.scene.cols);
  json scene = {{"n_acquisitions", c.scene.n_acquisitions},
                {"rows", c.scene.rows},
                {"cols", c.scene.cols},
                {"dt", c.scene.dt},
                {"seed", c.scene.seed},
                {"classes", classes},
                {"deformation", c.scene.deformation.coeffs}};
  scene["labels"] = default_labels ? json("default") : json(c.scene.labels);

  const AcafConfig& a = c.pipeline.acaf;
  json acaf = {{"alpha", a.alpha},
               {"n_draws", a.n_draws},
               {"max_lag", a.max_lag},
               {"coherence_floor", a.coherence_floor},
               {"k_max", a.k_max},
               {"k_max_refinement", a.k_max_refinement},
               {"epsilon", a.epsilon},
               {"aux_window", a.aux_window},
               {"seed_shrinkage", a.seed_shrinkage},
               {"tyler", {{"tol", a.tyler.tol}, {"max_iter", a.tyler.max_iter}}}};
  const CggOptions& g = c.pipeline.cgg;
  json cgg = {{"s_min", g.search.s_min},   {"s_max", g.search.s_max},       {"grid_points", g.search.grid_points},
              {"s_tol", g.s_tol},          {"scatter_tol", g.scatter_tol}, {"max_rounds", g.max_rounds}};
  const PipelineConfig& p = c.pipeline;
  json linking = {{"mle",
                   {{"gradient_tolerance", p.mle.gradient_tolerance},
                    {"max_iterations", p.mle.max_iterations},
                    {"lbfgs_memory", p.mle.lbfgs_memory}}},
                  {"mm",
                   {{"rel_tolerance", p.mm.rel_tolerance},
                    {"phase_tolerance", p.mm.phase_tolerance},
                    {"max_iterations", p.mm.max_iterations}}}};
  json methods = json::array();
  for (const auto& v : p.variants) methods.push_back(v.name());
  json pipeline = {{"window", p.window},   {"methods", methods},   {"seed", p.seed},
                   {"threads", p.threads}, {"tile_rows", p.tile_rows}};
  pipeline["shrinkage"] = p.shrinkage ? json(*p.shrinkage) : json("auto");

  json grid = json::array();
  for (const auto& d : c.power_grid) grid.push_back(decay_to(d));
  json power = {{"n_acquisitions", c.power.n_acquisitions},
                {"dt", c.power.dt},
                {"alpha", c.power.alpha},
                {"sided", c.power.sided == Sidedness::right ? "right" : "two"},
                {"n_trials", c.power.n_trials},
                {"n_draws", c.power.n_draws},
                {"seed", c.power.seed},
                {"reference", decay_to(c.power_reference)},
                {"grid", grid}};
  json sgrid = {{"n_list", c.sgrid.n_list},
                {"xi_list", c.sgrid.xi_list},
                {"samples_per_cell", c.sgrid.samples_per_cell},
                {"repeats", c.sgrid.repeats},
                {"coherence", decay_to(c.sgrid.coherence)},
                {"seed", c.sgrid.seed}};
  const json all = {{"scene", scene}, {"acaf", acaf},         {"cgg", cgg},    {"phase_linking", linking},
                    {"pipeline", pipeline}, {"power", power}, {"sgrid", sgrid}};
  return all.dump(2) + "\n";
}

}  // namespace s2s
