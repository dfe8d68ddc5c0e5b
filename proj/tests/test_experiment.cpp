#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "clab/errors.hpp"
#include "clab/experiment.hpp"
#include "clab/io.hpp"
#include "clab/svg.hpp"

using namespace clab;

namespace {

bool throws_code(auto&& fn, ErrorCode expected) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == expected;
  }
  return false;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("clab_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Json small_stability() {
  return Json::parse(R"({
    "geometry": {"n_r": 9, "n_theta": 16, "n_t": 9},
    "experiment": {"kind": "stability", "n_samples": 4, "seed": 5}
  })");
}

}  // namespace

TEST_CASE("defaults and presets") {
  const ExperimentConfig d = parse_config(Json::object());
  CHECK(d.geometry.n_r == 17);
  CHECK(d.geometry.n_theta == 32);
  CHECK(d.geometry.n_t == 17);
  CHECK(d.coefficients.n == 1);
  CHECK(d.weights.s_grid.size() == 12);
  CHECK(d.experiment.kind == ExperimentKind::Stability);

  const ExperimentConfig c = parse_config(Json::parse(R"({"coefficients": {"preset": "coupled2"}})"));
  REQUIRE(c.coefficients.n == 2);
  CHECK(c.coefficients.coupling(0, 1) == -0.5);
  CHECK(c.coefficients.coupling(1, 0) == -0.5);
  CHECK(c.boundary.beta.size() == 2);
  const PolarGrid g = make_grid(c);
  const SystemCoefficients sc = make_coefficients(c, g);
  CHECK(sc.n == 2);
  CHECK(sc.c(0, 1, 0, 0) == -0.5);

  const ExperimentConfig a = parse_config(Json::parse(R"({"coefficients": {"preset": "advection"}})"));
  CHECK(a.coefficients.drift.norm() > 0.0);
  CHECK(make_coefficients(a, make_grid(a)).b[0][0] == a.coefficients.drift);
}

TEST_CASE("invalid configurations name the offending key") {
  auto msg = [](const char* text) {
    try {
      parse_config(Json::parse(text));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigParse);
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(msg(R"({"geometry": {"r1": 0.5}})").find("geometry.r1") != std::string::npos);
  CHECK(msg(R"({"geometry": {"n_r": "many"}})").find("geometry.n_r") != std::string::npos);
  CHECK(msg(R"({"coefficients": {"preset": "wave"}})").find("preset") != std::string::npos);
  CHECK(msg(R"({"experiment": {"kind": "inverse"}})").find("experiment.kind") != std::string::npos);
  CHECK(msg(R"({"weights": {"s_grid": [2, 1]}})").find("weights.s_grid") != std::string::npos);
  CHECK(msg(R"({"experiment": {"sampler": "normal"}})").find("experiment.sampler") != std::string::npos);
  CHECK(msg(R"({"boundary": {"beta": [[1, 1], [1, 1]]}})").find("boundary.beta") != std::string::npos);
  CHECK(msg(R"({"geometry": {"typo": 1}})").find("geometry.typo") != std::string::npos);
  CHECK(msg(R"({"coefficients": {"nonlinearity": "square", "n": 2}})").find("nonlinearity") !=
        std::string::npos);
  CHECK(throws_code([] { read_json_file("/nonexistent/config.json"); }, ErrorCode::ConfigParse));
}

TEST_CASE("overrides take precedence and parse JSON values") {
  Json tree = Json::parse(R"({"geometry": {"n_r": 9}})");
  apply_override(tree, "geometry.n_r=33");
  apply_override(tree, "experiment.sampler=indicator_blocks");
  apply_override(tree, "weights.lambda_grid=[1, 2]");
  CHECK(tree["geometry"]["n_r"] == 33);
  CHECK(tree["experiment"]["sampler"] == "indicator_blocks");
  const ExperimentConfig c = parse_config(tree);
  CHECK(c.geometry.n_r == 33);
  CHECK(c.weights.lambda_grid == std::vector<double>{1.0, 2.0});
  CHECK(throws_code([&] { apply_override(tree, "no_equals_sign"); }, ErrorCode::ConfigParse));
  CHECK(throws_code([&] { apply_override(tree, "geometry.n_r.x=1"); }, ErrorCode::ConfigParse));
}

TEST_CASE("corpus sources do not depend on the grid") {
  const PolarGrid a = build_polar_grid(1, 2, 9, 16, 1.0, 5);
  const PolarGrid b = build_polar_grid(1, 2, 17, 32, 1.0, 9);
  const SpaceTimeField fa = smooth_random_source(a, 1, 3, 2);
  const SpaceTimeField fb = smooth_random_source(b, 1, 3, 2);
  // Node (r = 1.5, θ = π/2, t = 0.5) exists on both grids.
  CHECK(fa.at(0, 2, a.node(4, 4)) == doctest::Approx(fb.at(0, 4, b.node(8, 8))).epsilon(1e-14));
  CHECK(smooth_random_source(a, 1, 3, 3).values != fa.values);
}

TEST_CASE("every artifact is listed in the manifest with its hash") {
  const auto dir = scratch_dir("manifest");
  Json tree = small_stability();
  const ExperimentConfig cfg = parse_config(tree);
  const RunOutcome res = run_experiment(cfg, dir, {"experiment.seed=5"});
  CHECK(res.pass);
  const Json manifest = read_json_file(dir / "manifest.json");
  CHECK(manifest["schema_version"] == 1);
  CHECK(manifest["overrides"][0] == "experiment.seed=5");
  CHECK(manifest["config_digest"] == json_digest(tree));
  std::set<std::string> listed;
  for (const auto& a : manifest["artifacts"]) {
    listed.insert(a["path"].get<std::string>());
    CHECK(a["sha256"] == sha256_file(dir / a["path"].get<std::string>()));
  }
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name != "manifest.json") CHECK(listed.contains(name));
  }
  CHECK(listed.size() == 3);
  const Json report = read_json_file(dir / "stability_report.json");
  CHECK(report["schema_version"] == 1);
}

TEST_CASE("identical config and seed give byte-identical reports") {
  const auto d1 = scratch_dir("det1");
  const auto d2 = scratch_dir("det2");
  Json tree = small_stability();
  run_experiment(parse_config(tree), d1);
  apply_override(tree, "experiment.workers=2");
  run_experiment(parse_config(tree), d2);
  for (const char* f : {"stability_report.json", "stability_samples.csv", "ratio_histogram.svg"}) {
    CAPTURE(f);
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
}

TEST_CASE("output formats can be restricted") {
  const auto dir = scratch_dir("formats");
  Json tree = small_stability();
  apply_override(tree, R"(output.formats=["json"])");
  const RunOutcome res = run_experiment(parse_config(tree), dir);
  REQUIRE(res.artifacts.size() == 1);
  CHECK(res.artifacts[0].path == "stability_report.json");
}

TEST_CASE("convergence experiment reports slopes inside the bands") {
  const auto dir = scratch_dir("convergence");
  const RunOutcome res =
      run_experiment(parse_config(Json::parse(R"({"experiment": {"kind": "convergence"}})")), dir);
  CHECK(res.pass);
  for (const auto& t : res.summary["tables"]) {
    for (const auto& r : t["rows"]) CHECK(r["in_band"] == true);
  }
}

TEST_CASE("carleman experiment requires a scalar problem") {
  const ExperimentConfig cfg = parse_config(Json::parse(
      R"({"coefficients": {"preset": "coupled2"}, "experiment": {"kind": "carleman"}})"));
  CHECK(throws_code([&] { run_carleman_scan(cfg, make_grid(cfg)); }, ErrorCode::ConfigParse));
}

TEST_CASE("svg output is deterministic and well formed") {
  const std::string a = svg_line_plot({"t", "x", "y", true, true}, {{"s", {1, 2, 4}, {1, 0.25, 0.0625}}});
  CHECK(a == svg_line_plot({"t", "x", "y", true, true}, {{"s", {1, 2, 4}, {1, 0.25, 0.0625}}}));
  CHECK(a.starts_with("<svg"));
  CHECK(a.find("</svg>") != std::string::npos);
  CHECK(a.find("polyline") != std::string::npos);
  const std::string h = svg_histogram({"h <&>", "v", "n"}, {1.0, 2.0, std::nan(""), 2.5});
  CHECK(h.find("h &lt;&amp;&gt;") != std::string::npos);
  const std::string m = svg_heatmap({"m", "s", "l"}, {1, 2}, {1, 2, 3}, {0, 1, 2, 3, 4, std::nan("")},
                                    {true, false, false, false, false, false});
  CHECK(m.find("#bbbbbb") != std::string::npos);
}

TEST_CASE("orientation switch moves the observed circle") {
  const ExperimentConfig d = parse_config(Json::object());
  CHECK(make_grid(d).gamma1_ring() == d.geometry.n_r - 1);
  const ExperimentConfig o = parse_config(Json::parse(
      R"({"geometry": {"n_r": 9, "orientation": "outer_gamma0"}, "experiment": {"kind": "forward"}})"));
  const PolarGrid g = make_grid(o);
  CHECK(g.gamma1_ring() == 0);
  CHECK(run_experiment(o, scratch_dir("orientation")).pass);
  CHECK(throws_code([] { parse_config(Json::parse(R"({"geometry": {"orientation": "up"}})")); },
                    ErrorCode::ConfigParse));
}
