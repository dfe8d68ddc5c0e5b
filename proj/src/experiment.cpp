#include "clab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "clab/convergence.hpp"
#include "clab/errors.hpp"
#include "clab/geometry.hpp"
#include "clab/observe.hpp"
#include "clab/positivity.hpp"
#include "clab/svg.hpp"

namespace clab {

namespace {

constexpr const char* kVersion = "0.1.0";

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::ConfigParse, "config key '" + key + "': " + what);
}

const Json& block(const Json& tree, const std::string& name, const std::set<std::string>& allowed) {
  static const Json empty = Json::object();
  if (!tree.contains(name)) return empty;
  const Json& b = tree.at(name);
  if (!b.is_object()) bad(name, "expected an object");
  for (const auto& [k, v] : b.items()) {
    if (!allowed.contains(k)) bad(name + "." + k, "unknown key");
  }
  return b;
}

template <class T>
T get(const Json& b, const std::string& section, const std::string& key, T fallback) {
  if (!b.contains(key)) return fallback;
  try {
    return b.at(key).get<T>();
  } catch (const Json::exception& e) {
    bad(section + "." + key, e.what());
  }
}

double positive(double v, const std::string& key) {
  if (!(v > 0.0) || !std::isfinite(v)) bad(key, "must be positive");
  return v;
}

int at_least(int v, int lo, const std::string& key) {
  if (v < lo) bad(key, "must be at least " + std::to_string(lo));
  return v;
}

std::vector<double> ascending(std::vector<double> v, const std::string& key) {
  for (std::size_t k = 0; k < v.size(); ++k) {
    positive(v[k], key);
    if (k > 0 && !(v[k] > v[k - 1])) bad(key, "must be strictly ascending");
  }
  return v;
}

std::array<double, 2> pair_of(const Json& j, const std::string& key) {
  if (j.is_number()) return {j.get<double>(), j.get<double>()};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return {j[0].get<double>(), j[1].get<double>()};
  }
  bad(key, "expected a number or an [inner, outer] pair");
}

// One pair per component from a scalar, a pair, or a list of pairs.
std::vector<std::array<double, 2>> per_component(const Json& b, const std::string& key, int n,
                                                 double fallback) {
  const std::string full = "boundary." + key;
  if (!b.contains(key)) return std::vector<std::array<double, 2>>(n, {fallback, fallback});
  const Json& j = b.at(key);
  if (j.is_array() && !j.empty() && j[0].is_array()) {
    if (static_cast<int>(j.size()) != n) bad(full, "needs one [inner, outer] pair per component");
    std::vector<std::array<double, 2>> out;
    for (const auto& e : j) out.push_back(pair_of(e, full));
    return out;
  }
  return std::vector<std::array<double, 2>>(n, pair_of(j, full));
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string csv_num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, const OutputBlock& out) : dir_(std::move(dir)), out_(out) {}

  void text(const std::string& name, const std::string& format, const std::string& body) {
    if (!out_.wants(format)) return;
    write_text_file(dir_ / name, body);
    record(name);
  }
  void json(const std::string& name, const Json& j) {
    if (!out_.wants("json")) return;
    write_json_file(dir_ / name, j);
    record(name);
  }
  void record(const std::string& name) { artifacts_.push_back({name, sha256_file(dir_ / name)}); }
  const std::filesystem::path& dir() const { return dir_; }
  bool wants(const std::string& f) const { return out_.wants(f); }
  std::vector<Artifact> take() { return std::move(artifacts_); }

 private:
  std::filesystem::path dir_;
  OutputBlock out_;
  std::vector<Artifact> artifacts_;
};

Json grid_json(const PolarGrid& g) {
  return {{"r0", g.r0}, {"r1", g.r1}, {"n_r", g.n_r}, {"n_theta", g.n_theta},
          {"T", g.T},   {"n_t", g.n_t},
          {"orientation", g.orientation == Orientation::InnerIsGamma0 ? "inner_gamma0" : "outer_gamma0"}};
}

// θ-mean of ζ on Γ₁ per component and time.
std::vector<SvgSeries> observation_series(const BoundarySeries& z, const PolarGrid& g) {
  std::vector<SvgSeries> out;
  for (int c = 0; c < z.n_comp; ++c) {
    SvgSeries s{"component " + std::to_string(c + 1), {}, {}};
    for (int m = 0; m < z.n_t; ++m) {
      double acc = 0.0;
      for (int j = 0; j < z.n_theta; ++j) acc += z.at(c, m, j);
      s.x.push_back(g.time(m));
      s.y.push_back(acc / z.n_theta);
    }
    out.push_back(std::move(s));
  }
  return out;
}

bool run_forward(const ExperimentConfig& cfg, ArtifactWriter& w, Json& summary) {
  const PolarGrid grid = make_grid(cfg);
  const SystemCoefficients coeffs = make_coefficients(cfg, grid);
  const ObservationSpec obs = make_observation(cfg, grid);
  validate_coefficients(coeffs, grid);
  check_compatibility(obs, coeffs, grid);
  const int n = coeffs.n;
  SpaceTimeField g;
  if (cfg.experiment.source == "constant") {
    g = SpaceTimeField(n, grid, 1.0);
  } else if (cfg.experiment.source == "bump") {
    const double rc = 0.5 * (grid.r0 + grid.r1);
    const std::vector<Bump> bumps{{0, rc, 0.0, 0.2 * (grid.r1 - grid.r0), 1.0}};
    g = bump_source(grid, n, bumps);
  } else {
    bad("experiment.source", "expected constant or bump");
  }
  const std::vector<double> y0 = zero_initial(grid, n);
  const auto nl = make_nonlinearity(cfg);
  const TimeScheme scheme =
      cfg.experiment.scheme == "crank_nicolson" ? TimeScheme::CrankNicolson : TimeScheme::BackwardEuler;
  const StateField y = nl ? solve_forward_semilinear(coeffs, *nl, g, y0, grid)
                          : solve_forward_linear(coeffs, g, y0, grid, scheme);
  const BoundarySeries zeta = apply_observation(obs, extract_trace_and_conormal(y, coeffs, grid));
  double ymin = 0.0, ymax = 0.0;
  for (double v : y.data.values) {
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  const bool finite = y.data.all_finite();
  summary = {{"schema_version", 1},
             {"kind", "forward"},
             {"grid", grid_json(grid)},
             {"n_components", n},
             {"scheme", nl ? "semilinear_backward_euler" : cfg.experiment.scheme},
             {"source", cfg.experiment.source},
             {"y_min", ymin},
             {"y_max", ymax},
             {"y_L2_Q", norm_L2_Q(grid, y.data)},
             {"zeta_L2_Sigma1", norm_L2_Sigma1(grid, zeta)},
             {"finite", finite}};
  w.json("forward.json", summary);
  if (w.wants("csv")) {
    write_observation_csv(w.dir() / "observation.csv", grid, zeta);
    w.record("observation.csv");
  }
  w.text("observation.svg", "svg",
         svg_line_plot({"Boundary observation on the observed circle (angular mean)", "t", "zeta"},
                       observation_series(zeta, grid)));
  return finite;
}

Json scan_json(const CarlemanRun& run, const PolarGrid& grid, int corpus) {
  Json cells = Json::array();
  for (std::size_t a = 0; a < run.scan.s_grid.size(); ++a) {
    for (std::size_t b = 0; b < run.scan.lambda_grid.size(); ++b) {
      const ScanCell& c = run.scan.at(static_cast<int>(a), static_cast<int>(b));
      cells.push_back({{"s", c.s},
                       {"lambda", c.lambda},
                       {"C_hat", c.n_defined > 0 ? Json(c.c_hat) : Json(nullptr)},
                       {"log_C_hat", c.n_defined > 0 ? Json(c.log_c_hat) : Json(nullptr)},
                       {"n_defined", c.n_defined},
                       {"stable", c.stable}});
    }
  }
  return {{"grid", grid_json(grid)},
          {"n_corpus", corpus},
          {"mu", run.mu},
          {"K", run.base.K},
          {"s_star", run.scan.s_star},
          {"lambda_star", run.scan.lambda_star},
          {"region_size", run.scan.region_size},
          {"C_region", run.scan.c_region},
          {"bound_holds", run.bound_holds},
          {"cells", cells}};
}

bool run_carleman(const ExperimentConfig& cfg, ArtifactWriter& w, Json& summary) {
  const PolarGrid grid = make_grid(cfg);
  const CarlemanRun run = run_carleman_scan(cfg, grid);
  const int corpus = cfg.experiment.corpus_size;
  bool pass = run.bound_holds && run.scan.region_size > 0;
  summary = {{"schema_version", 1}, {"kind", "carleman"}, {"scan", scan_json(run, grid, corpus)}};
  if (cfg.experiment.refine) {
    ExperimentConfig fine = cfg;
    fine.geometry.n_r = 2 * cfg.geometry.n_r - 1;
    fine.geometry.n_theta = 2 * cfg.geometry.n_theta;
    fine.geometry.n_t = 2 * cfg.geometry.n_t - 1;
    const PolarGrid fg = make_grid(fine);
    const CarlemanRun fr = run_carleman_scan(fine, fg);
    double worst = 0.0;
    for (int a = 0; a < static_cast<int>(run.scan.s_grid.size()); ++a) {
      for (int b = 0; b < static_cast<int>(run.scan.lambda_grid.size()); ++b) {
        if (!run.scan.in_region(a, b)) continue;
        const double c0 = run.scan.at(a, b).c_hat;
        const double c1 = fr.scan.at(a, b).c_hat;
        worst = std::max(worst, std::abs(c1 - c0) / c0);
      }
    }
    const double region_change = std::abs(fr.scan.c_region - run.scan.c_region) / run.scan.c_region;
    summary["refined"] = scan_json(fr, fg, corpus);
    summary["refinement"] = {{"max_relative_change_in_region", worst},
                             {"C_region_relative_change", region_change},
                             {"tolerance", 0.15}};
    pass = pass && fr.bound_holds && worst < 0.15;
  }
  summary["pass"] = pass;
  w.json("carleman_scan.json", summary);
  Json compact = {{"schema_version", 1},
                  {"kind", "carleman"},
                  {"s_star", run.scan.s_star},
                  {"lambda_star", run.scan.lambda_star},
                  {"region_size", run.scan.region_size},
                  {"C_region", run.scan.c_region},
                  {"mu", run.mu},
                  {"pass", pass}};
  if (summary.contains("refinement")) compact["refinement"] = summary["refinement"];
  summary = std::move(compact);
  std::ostringstream csv;
  csv << "s,lambda,C_hat,n_corpus\n";
  std::vector<double> z;
  std::vector<bool> marked;
  for (int a = 0; a < static_cast<int>(run.scan.s_grid.size()); ++a) {
    for (int b = 0; b < static_cast<int>(run.scan.lambda_grid.size()); ++b) {
      const ScanCell& c = run.scan.at(a, b);
      csv << csv_num(c.s) << ',' << csv_num(c.lambda) << ','
          << (c.n_defined > 0 ? csv_num(c.c_hat) : std::string("nan")) << ',' << c.n_defined << '\n';
      z.push_back(c.n_defined > 0 ? c.log_c_hat / std::numbers::ln10 : std::nan(""));
      marked.push_back(run.scan.in_region(a, b));
    }
  }
  w.text("carleman_scan.csv", "csv", csv.str());
  w.text("carleman_heatmap.svg", "svg",
         svg_heatmap({"log10 C_hat(s, lambda); outlined: stabilization region", "s", "lambda"},
                     run.scan.s_grid, run.scan.lambda_grid, z, marked));
  return pass;
}

bool run_stability(const ExperimentConfig& cfg, ArtifactWriter& w, Json& summary) {
  const PolarGrid grid = make_grid(cfg);
  const StabilityConfig sc = make_stability_config(cfg, grid);
  StabilityReport rep;
  Json nested = Json::array();
  if (cfg.experiment.nested_k.empty()) {
    rep = estimate_constant(sc);
  } else {
    const auto levels = estimate_constant_nested(sc, cfg.experiment.nested_k);
    for (const auto& r : levels) {
      nested.push_back({{"k", r.samples.back().k}, {"C_hat", r.c_hat}, {"n", r.samples.size()}});
    }
    rep = levels.back();
  }
  Json j = rep.to_json();
  if (!nested.empty()) j["nested"] = nested;
  const bool pass = rep.n_ok == static_cast<int>(rep.samples.size());
  summary = {{"schema_version", 1},  {"kind", "stability"},      {"C_hat", rep.c_hat},
             {"M_observed", rep.m_observed}, {"n_ok", rep.n_ok},
             {"n_samples", rep.samples.size()}, {"digest", rep.digest}, {"pass", pass}};
  w.json("stability_report.json", j);
  std::ostringstream csv;
  csv << "id,k,g_l2,g_l1,zeta_l2,ratio,status,y_inf,attempts,flatten_shift\n";
  std::vector<double> ratios;
  for (const auto& s : rep.samples) {
    csv << s.id << ',' << csv_num(s.k) << ',' << csv_num(s.g_l2) << ',' << csv_num(s.g_l1) << ','
        << csv_num(s.zeta_l2) << ',' << csv_num(s.ratio) << ',' << to_string(s.status) << ','
        << csv_num(s.y_inf) << ',' << s.attempts << ',' << csv_num(s.flatten_shift) << '\n';
    ratios.push_back(s.ratio);
  }
  w.text("stability_samples.csv", "csv", csv.str());
  w.text("ratio_histogram.svg", "svg",
         svg_histogram({"Stability ratios ||g|| / ||zeta||", "ratio", "count"}, ratios));
  return pass;
}

bool run_positivity(const ExperimentConfig& cfg, ArtifactWriter& w, Json& summary) {
  const PolarGrid grid = make_grid(cfg);
  const PositivitySuite suite = run_positivity_suite(grid, cfg.experiment.n_instances,
                                                     cfg.experiment.n_improving, cfg.experiment.seed);
  Json recs = Json::array();
  std::ostringstream csv;
  csv << "id,n,improving,min_value,max_abs,gamma,worst_ratio,near_violations,pass\n";
  for (const auto& r : suite.records) {
    recs.push_back({{"id", r.id}, {"n", r.n}, {"improving", r.improving}, {"min_value", r.min_value},
                    {"max_abs", r.max_abs}, {"gamma", r.gamma}, {"worst_ratio", r.worst_ratio},
                    {"near_violations", r.near_violations}, {"pass", r.pass}});
    csv << r.id << ',' << r.n << ',' << (r.improving ? 1 : 0) << ',' << csv_num(r.min_value) << ','
        << csv_num(r.max_abs) << ',' << csv_num(r.gamma) << ',' << csv_num(r.worst_ratio) << ','
        << r.near_violations << ',' << (r.pass ? 1 : 0) << '\n';
  }
  summary = {{"schema_version", 1},
             {"kind", "positivity"},
             {"grid", grid_json(grid)},
             {"seed", cfg.experiment.seed},
             {"n_instances", cfg.experiment.n_instances},
             {"n_fail", suite.n_fail},
             {"n_improving", cfg.experiment.n_improving},
             {"n_improving_fail", suite.n_improving_fail},
             {"pass", suite.pass()}};
  Json report = summary;
  report["records"] = recs;
  w.json("positivity_report.json", report);
  w.text("positivity.csv", "csv", csv.str());
  return suite.pass();
}

bool run_convergence(const ExperimentConfig& cfg, ArtifactWriter& w, Json& summary) {
  ConvergenceOptions opt;
  opt.r0 = cfg.geometry.r0;
  opt.r1 = cfg.geometry.r1;
  opt.T = cfg.geometry.T;
  opt.levels = cfg.experiment.levels;
  bool pass = true;
  std::ostringstream csv;
  csv << "scheme,study,n_r,n_t,error,slope\n";
  std::vector<SvgSeries> series;
  Json tables = Json::array();
  for (TimeScheme scheme : {TimeScheme::BackwardEuler, TimeScheme::CrankNicolson}) {
    const std::string name = scheme == TimeScheme::BackwardEuler ? "backward_euler" : "crank_nicolson";
    const ConvergenceTable t = run_convergence_study(opt, scheme);
    const double tlo = scheme == TimeScheme::BackwardEuler ? 0.8 : 1.7;
    const double thi = scheme == TimeScheme::BackwardEuler ? 1.2 : 2.3;
    Json rows = Json::array();
    auto emit = [&](const std::vector<ConvergenceRow>& rs, const std::string& study, double lo,
                    double hi, bool space) {
      SvgSeries s{name + " " + study, {}, {}};
      for (std::size_t k = 0; k < rs.size(); ++k) {
        const auto& r = rs[k];
        const bool ok = k == 0 || (r.slope >= lo && r.slope <= hi);
        pass = pass && ok;
        rows.push_back({{"study", study}, {"n_r", r.n_r}, {"n_t", r.n_t}, {"error", r.error},
                        {"slope", k == 0 ? Json(nullptr) : Json(r.slope)}, {"in_band", ok}});
        csv << name << ',' << study << ',' << r.n_r << ',' << r.n_t << ',' << csv_num(r.error) << ','
            << (k == 0 ? std::string("") : csv_num(r.slope)) << '\n';
        s.x.push_back(space ? (opt.r1 - opt.r0) / (r.n_r - 1) : opt.T / (r.n_t - 1));
        s.y.push_back(r.error);
      }
      series.push_back(std::move(s));
    };
    emit(t.space, "space", 1.7, 2.3, true);
    emit(t.time, "time", tlo, thi, false);
    tables.push_back({{"scheme", name}, {"rows", rows}});
  }
  summary = {{"schema_version", 1}, {"kind", "convergence"}, {"tables", tables}, {"pass", pass}};
  w.json("convergence.json", summary);
  w.text("convergence.csv", "csv", csv.str());
  w.text("convergence.svg", "svg",
         svg_line_plot({"Manufactured-solution errors", "h or dt", "error", true, true}, series));
  return pass;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Forward: return "forward";
    case ExperimentKind::Carleman: return "carleman";
    case ExperimentKind::Stability: return "stability";
    case ExperimentKind::Positivity: return "positivity";
    case ExperimentKind::Convergence: return "convergence";
  }
  return "unknown";
}

ExperimentKind experiment_from_string(const std::string& name) {
  for (ExperimentKind k : {ExperimentKind::Forward, ExperimentKind::Carleman, ExperimentKind::Stability,
                           ExperimentKind::Positivity, ExperimentKind::Convergence}) {
    if (to_string(k) == name) return k;
  }
  bad("experiment.kind", "unknown experiment '" + name + "'");
}

bool OutputBlock::wants(const std::string& f) const {
  return std::find(formats.begin(), formats.end(), f) != formats.end();
}

void apply_override(Json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::ConfigParse, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(ErrorCode::ConfigParse, "override key '" + key + "' is malformed");
    if (!node->is_object()) throw Error(ErrorCode::ConfigParse, "override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

ExperimentConfig parse_config(const Json& tree) {
  if (!tree.is_object()) throw Error(ErrorCode::ConfigParse, "config root must be an object");
  static const std::set<std::string> sections{"geometry", "coefficients", "boundary", "observation",
                                              "weights", "experiment", "output"};
  for (const auto& [k, v] : tree.items()) {
    if (!sections.contains(k)) bad(k, "unknown section");
  }
  ExperimentConfig cfg;
  cfg.tree = tree;

  const Json& g = block(tree, "geometry", {"r0", "r1", "n_r", "n_theta", "T", "n_t", "orientation"});
  auto& G = cfg.geometry;
  G.r0 = positive(get(g, "geometry", "r0", G.r0), "geometry.r0");
  G.r1 = get(g, "geometry", "r1", G.r1);
  if (!(G.r1 > G.r0)) bad("geometry.r1", "must exceed r0");
  G.n_r = at_least(get(g, "geometry", "n_r", G.n_r), 3, "geometry.n_r");
  G.n_theta = at_least(get(g, "geometry", "n_theta", 2 * (G.n_r - 1)), 4, "geometry.n_theta");
  G.T = positive(get(g, "geometry", "T", G.T), "geometry.T");
  G.n_t = at_least(get(g, "geometry", "n_t", G.n_r), 2, "geometry.n_t");
  const auto orientation = get<std::string>(g, "geometry", "orientation", "inner_gamma0");
  if (orientation != "inner_gamma0" && orientation != "outer_gamma0") {
    bad("geometry.orientation", "expected inner_gamma0 or outer_gamma0");
  }
  G.outer_is_gamma0 = orientation == "outer_gamma0";

  const Json& c = block(tree, "coefficients", {"preset", "n", "diffusion", "coupling", "drift", "nonlinearity"});
  auto& C = cfg.coefficients;
  C.preset = get<std::string>(c, "coefficients", "preset", "heat");
  if (C.preset == "heat") {
  } else if (C.preset == "advection") {
    C.drift = Vector2(0.5, 0.25);
  } else if (C.preset == "coupled2") {
    C.n = 2;
    C.coupling = Eigen::MatrixXd::Zero(2, 2);
    C.coupling(0, 1) = C.coupling(1, 0) = -0.5;
  } else {
    bad("coefficients.preset", "unknown preset '" + C.preset + "'");
  }
  if (c.contains("n")) {
    C.n = at_least(get(c, "coefficients", "n", C.n), 1, "coefficients.n");
    if (C.coupling.rows() != C.n) C.coupling = Eigen::MatrixXd::Zero(C.n, C.n);
  }
  C.diffusion = positive(get(c, "coefficients", "diffusion", C.diffusion), "coefficients.diffusion");
  if (c.contains("coupling")) {
    const auto rows = get<std::vector<std::vector<double>>>(c, "coefficients", "coupling", {});
    if (static_cast<int>(rows.size()) != C.n) bad("coefficients.coupling", "needs n rows");
    for (int i = 0; i < C.n; ++i) {
      if (static_cast<int>(rows[i].size()) != C.n) bad("coefficients.coupling", "needs n columns");
      for (int l = 0; l < C.n; ++l) C.coupling(i, l) = rows[i][l];
    }
  }
  if (c.contains("drift")) {
    const auto d = get<std::vector<double>>(c, "coefficients", "drift", {});
    if (d.size() != 2) bad("coefficients.drift", "expected [bx, by]");
    C.drift = Vector2(d[0], d[1]);
  }
  C.nonlinearity = get<std::string>(c, "coefficients", "nonlinearity", "none");
  if (C.nonlinearity != "none" && C.nonlinearity != "square" && C.nonlinearity != "cross_decay") {
    bad("coefficients.nonlinearity", "expected none, square or cross_decay");
  }
  if ((C.nonlinearity == "square" && C.n != 1) || (C.nonlinearity == "cross_decay" && C.n != 2)) {
    bad("coefficients.nonlinearity", "does not match the number of components");
  }

  const Json& b = block(tree, "boundary", {"beta", "eta"});
  cfg.boundary.beta = per_component(b, "beta", C.n, 1.0);
  cfg.boundary.eta = per_component(b, "eta", C.n, 1.0);

  const Json& o = block(tree, "observation", {"gamma", "delta", "epsilon"});
  cfg.observation.gamma = get(o, "observation", "gamma", cfg.observation.gamma);
  cfg.observation.delta = get(o, "observation", "delta", cfg.observation.delta);
  cfg.observation.epsilon = positive(get(o, "observation", "epsilon", cfg.observation.epsilon),
                                     "observation.epsilon");

  const Json& wb = block(tree, "weights", {"lambda_grid", "s_grid", "mu_grid", "K_margin", "tilde"});
  auto& W = cfg.weights;
  W.lambda_grid = ascending(get(wb, "weights", "lambda_grid", W.lambda_grid), "weights.lambda_grid");
  W.s_grid = get(wb, "weights", "s_grid", W.s_grid);
  if (W.s_grid.empty()) {
    for (int k = 0; k < 12; ++k) W.s_grid.push_back(std::pow(1.25, k));
  }
  W.s_grid = ascending(W.s_grid, "weights.s_grid");
  W.mu_grid = ascending(get(wb, "weights", "mu_grid", default_mu_grid()), "weights.mu_grid");
  W.K_margin = get(wb, "weights", "K_margin", W.K_margin);
  if (W.K_margin < 0.0) bad("weights.K_margin", "must be nonnegative");
  W.tilde = get(wb, "weights", "tilde", W.tilde);
  if (W.lambda_grid.empty() || W.s_grid.empty()) bad("weights", "scan grids must be nonempty");

  const Json& e = block(tree, "experiment",
                        {"kind", "n_samples", "k", "nested_k", "seed", "workers", "sampler", "scheme",
                         "source", "corpus_size", "refine", "n_instances", "n_improving", "levels"});
  auto& E = cfg.experiment;
  E.kind = experiment_from_string(get<std::string>(e, "experiment", "kind", "stability"));
  E.n_samples = at_least(get(e, "experiment", "n_samples", E.n_samples), 1, "experiment.n_samples");
  E.k = positive(get(e, "experiment", "k", E.k), "experiment.k");
  E.nested_k = get(e, "experiment", "nested_k", E.nested_k);
  if (!E.nested_k.empty()) E.nested_k = ascending(E.nested_k, "experiment.nested_k");
  E.seed = get(e, "experiment", "seed", E.seed);
  E.workers = at_least(get(e, "experiment", "workers", E.workers), 1, "experiment.workers");
  E.sampler = get(e, "experiment", "sampler", E.sampler);
  try {
    sampler_from_string(E.sampler);
  } catch (const Error& err) {
    bad("experiment.sampler", err.what());
  }
  E.scheme = get(e, "experiment", "scheme", E.scheme);
  if (E.scheme != "backward_euler" && E.scheme != "crank_nicolson") {
    bad("experiment.scheme", "expected backward_euler or crank_nicolson");
  }
  E.source = get(e, "experiment", "source", E.source);
  E.corpus_size = at_least(get(e, "experiment", "corpus_size", E.corpus_size), 1, "experiment.corpus_size");
  E.refine = get(e, "experiment", "refine", E.refine);
  E.n_instances = at_least(get(e, "experiment", "n_instances", E.n_instances), 0, "experiment.n_instances");
  E.n_improving = at_least(get(e, "experiment", "n_improving", E.n_improving), 0, "experiment.n_improving");
  E.levels = at_least(get(e, "experiment", "levels", E.levels), 2, "experiment.levels");

  const Json& out = block(tree, "output", {"directory", "formats"});
  cfg.output.directory = get(out, "output", "directory", cfg.output.directory);
  cfg.output.formats = get(out, "output", "formats", cfg.output.formats);
  for (const auto& f : cfg.output.formats) {
    if (f != "json" && f != "csv" && f != "svg") bad("output.formats", "unknown format '" + f + "'");
  }
  return cfg;
}

PolarGrid make_grid(const ExperimentConfig& cfg) {
  const auto& g = cfg.geometry;
  return build_polar_grid(g.r0, g.r1, g.n_r, g.n_theta, g.T, g.n_t,
                          g.outer_is_gamma0 ? Orientation::OuterIsGamma0 : Orientation::InnerIsGamma0);
}

SystemCoefficients make_coefficients(const ExperimentConfig& cfg, const PolarGrid& grid) {
  const auto& c = cfg.coefficients;
  const auto& bb = cfg.boundary;
  SystemCoefficients coeffs = make_uniform_system(
      grid, c.n, c.diffusion, c.coupling,
      uniform_boundary(grid, bb.beta[0][0], bb.eta[0][0], bb.beta[0][1], bb.eta[0][1]));
  for (int i = 0; i < c.n; ++i) {
    coeffs.boundary[i] = uniform_boundary(grid, bb.beta[i][0], bb.eta[i][0], bb.beta[i][1], bb.eta[i][1]);
    coeffs.b[i].assign(grid.n_space(), c.drift);
  }
  return coeffs;
}

ObservationSpec make_observation(const ExperimentConfig& cfg, const PolarGrid& grid) {
  const auto& o = cfg.observation;
  return uniform_observation(grid, cfg.coefficients.n, o.gamma, o.delta, o.epsilon);
}

std::optional<NonlinearityModel> make_nonlinearity(const ExperimentConfig& cfg) {
  const std::string& name = cfg.coefficients.nonlinearity;
  if (name == "square") return square_nonlinearity();
  if (name == "cross_decay") return cross_decay_nonlinearity();
  return std::nullopt;
}

StabilityConfig make_stability_config(const ExperimentConfig& cfg, const PolarGrid& grid) {
  StabilityConfig sc;
  sc.grid = grid;
  sc.coeffs = make_coefficients(cfg, grid);
  sc.observation = make_observation(cfg, grid);
  sc.source.k = cfg.experiment.k;
  sc.source.sampler = sampler_from_string(cfg.experiment.sampler);
  sc.source.seed = cfg.experiment.seed;
  sc.n_samples = cfg.experiment.n_samples;
  sc.workers = cfg.experiment.workers;
  sc.nonlinearity = make_nonlinearity(cfg);
  sc.description = cfg.tree;
  // Resource knobs do not change results and stay out of the digest.
  if (sc.description.contains("experiment")) sc.description["experiment"].erase("workers");
  sc.description.erase("output");
  return sc;
}

SpaceTimeField smooth_random_source(const PolarGrid& grid, int n, std::uint64_t seed, int id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  struct Mode {
    double a, kr, m, phase, b;
  };
  SpaceTimeField f(n, grid);
  for (int c = 0; c < n; ++c) {
    std::vector<Mode> modes;
    for (int k = 0; k < 4; ++k) {
      const double a = u(rng), phase = std::numbers::pi * u(rng), b = u(rng);
      const double kr = std::floor(1.5 * (u(rng) + 1.0));  // 0, 1 or 2
      const double m = std::floor(2.0 * (u(rng) + 1.0));   // 0..3
      modes.push_back({a, kr, m, phase, b});
    }
    const double span = grid.r1 - grid.r0;
    for (int mt = 0; mt < grid.n_t; ++mt) {
      const double t = grid.time(mt) / grid.T;
      for (int p = 0; p < grid.n_space(); ++p) {
        const double r = grid.radius(grid.ring_of(p));
        const double th = grid.angle(grid.column_of(p));
        double v = 0.0;
        for (const Mode& md : modes) {
          v += md.a * std::cos(md.kr * std::numbers::pi * (r - grid.r0) / span) *
               std::cos(md.m * th + md.phase) * (1.0 + md.b * t);
        }
        f.at(c, mt, p) = v;
      }
    }
  }
  return f;
}

std::vector<CarlemanSample> make_carleman_corpus(const SystemCoefficients& coeffs,
                                                 const ObservationSpec& observation,
                                                 const PolarGrid& grid, int size,
                                                 std::uint64_t seed) {
  if (coeffs.n != 1) throw Error(ErrorCode::InvalidArgument, "the Carleman corpus uses the scalar problem");
  const ForwardSolver solver(coeffs, grid);
  const std::vector<double> y0 = zero_initial(grid, 1);
  std::vector<CarlemanSample> corpus;
  for (int id = 0; id < size; ++id) {
    SpaceTimeField g = smooth_random_source(grid, 1, seed, id);
    StateField y = solver.solve(g, y0);
    BoundarySeries z = apply_observation(observation, extract_trace_and_conormal(y, coeffs, grid));
    corpus.push_back({std::move(y), std::move(g), std::move(z)});
  }
  return corpus;
}

CarlemanRun run_carleman_scan(const ExperimentConfig& cfg, const PolarGrid& grid) {
  if (cfg.coefficients.n != 1) {
    bad("coefficients", "the Carleman scan verifies the scalar problem; use n = 1");
  }
  const SystemCoefficients coeffs = make_coefficients(cfg, grid);
  const ObservationSpec obs = make_observation(cfg, grid);
  const auto corpus = make_carleman_corpus(coeffs, obs, grid, cfg.experiment.corpus_size, cfg.experiment.seed);
  CarlemanRun run;
  const SubharmonicResult sub =
      exponentiate_for_subharmonicity(grid, construct_psi0_radial(grid), coeffs.a[0], cfg.weights.mu_grid);
  run.mu = sub.mu;
  run.base = choose_shift_K(sub.field, cfg.weights.K_margin, cfg.weights.tilde);
  run.scan = scan_parameters(grid, sub.field, run.base, corpus, cfg.weights.s_grid,
                             cfg.weights.lambda_grid, cfg.experiment.workers);
  // lhs ≤ Ĉ·rhs with the single constant Ĉ = max over the region.
  run.bound_holds = run.scan.region_size > 0;
  const double log_c = std::log(run.scan.c_region);
  for (int a = 0; a < static_cast<int>(run.scan.s_grid.size()); ++a) {
    for (int b = 0; b < static_cast<int>(run.scan.lambda_grid.size()); ++b) {
      if (!run.scan.in_region(a, b)) continue;
      for (double lr : run.scan.at(a, b).log_ratios) {
        if (std::isfinite(lr) && lr > log_c + 1e-12) run.bound_holds = false;
      }
    }
  }
  return run;
}

PositivitySuite run_positivity_suite(const PolarGrid& grid, int n_instances, int n_improving,
                                     std::uint64_t seed) {
  PositivitySuite suite;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < n_instances; ++k) {
    InstanceOptions opt;
    opt.n = 1 + k % 3;
    const PositivityInstance inst = random_positivity_instance(grid, opt, rng);
    if (!check_sign_hypotheses(inst.coeffs, grid).pass) {
      throw Error(ErrorCode::InvalidArgument, "generated instance violates the sign hypotheses");
    }
    const RescaledSolve rs = solve_with_rescaling(inst.coeffs, inst.g, inst.y0, grid);
    const PositivityReport rep = run_positivity_check(rs.y, grid);
    PositivityRecord r;
    r.id = k;
    r.n = opt.n;
    r.min_value = rep.min_value;
    r.max_abs = rep.max_abs;
    r.gamma = rs.gamma;
    r.worst_ratio = rep.max_abs > 0.0 ? rep.min_value / rep.max_abs : 0.0;
    r.pass = rep.pass;
    suite.n_fail += rep.pass ? 0 : 1;
    suite.records.push_back(r);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double span = grid.r1 - grid.r0;
  for (int k = 0; k < n_improving; ++k) {
    InstanceOptions opt;
    opt.n = 1 + k % 3;
    opt.allow_dirichlet = false;
    opt.allow_zero_data = false;
    PositivityInstance inst = random_positivity_instance(grid, opt, rng);
    const double rc = grid.r0 + span * (0.2 + 0.6 * u(rng));
    const double tc = 2.0 * std::numbers::pi * u(rng);
    inst.g = box_source(grid, opt.n, 0, rc, 0.1 * span, tc, 0.25);
    std::fill(inst.y0.begin(), inst.y0.end(), 0.0);
    const RescaledSolve rs = solve_with_rescaling(inst.coeffs, inst.g, inst.y0, grid);
    const auto comps = relevant_components(inst.coeffs, inst.g, inst.y0);
    const double half[] = {0.5 * grid.T};
    const PositivityReport rep =
        run_positivity_improving_check(rs.y, grid, half, kDefaultImprovingFloor, &inst.g, comps);
    PositivityRecord r;
    r.id = n_instances + k;
    r.n = opt.n;
    r.improving = true;
    r.min_value = rep.min_value;
    r.max_abs = rep.max_abs;
    r.gamma = rs.gamma;
    double worst = std::numeric_limits<double>::infinity();
    for (int c : comps) worst = std::min(worst, rep.checks[0].min_per_component[c]);
    r.worst_ratio = rep.max_abs > 0.0 ? worst / rep.max_abs : 0.0;
    r.near_violations = rep.near_violations;
    r.pass = rep.checks[0].improving_pass && rep.pass;
    suite.n_improving_fail += r.pass ? 0 : 1;
    suite.records.push_back(r);
  }
  return suite;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                          const std::vector<std::string>& overrides) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + out_dir.string() + ": " + ec.message());
  ArtifactWriter w(out_dir, cfg.output);
  RunOutcome outcome;
  switch (cfg.experiment.kind) {
    case ExperimentKind::Forward: outcome.pass = run_forward(cfg, w, outcome.summary); break;
    case ExperimentKind::Carleman: outcome.pass = run_carleman(cfg, w, outcome.summary); break;
    case ExperimentKind::Stability: outcome.pass = run_stability(cfg, w, outcome.summary); break;
    case ExperimentKind::Positivity: outcome.pass = run_positivity(cfg, w, outcome.summary); break;
    case ExperimentKind::Convergence: outcome.pass = run_convergence(cfg, w, outcome.summary); break;
  }
  outcome.artifacts = w.take();
  Json arts = Json::array();
  for (const auto& a : outcome.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
  const Json manifest = {{"schema_version", 1},
                         {"tool", "clab"},
                         {"version", kVersion},
                         {"kind", to_string(cfg.experiment.kind)},
                         {"config", cfg.tree},
                         {"config_digest", json_digest(cfg.tree)},
                         {"overrides", overrides},
                         {"seed", cfg.experiment.seed},
                         {"pass", outcome.pass},
                         {"artifacts", arts},
                         {"timestamp", utc_timestamp()}};
  write_json_file(out_dir / "manifest.json", manifest);
  return outcome;
}

}  // namespace clab
