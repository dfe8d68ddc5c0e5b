#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clab/carleman.hpp"
#include "clab/io.hpp"
#include "clab/pde_core.hpp"
#include "clab/stability_lab.hpp"

namespace clab {

enum class ExperimentKind { Forward, Carleman, Stability, Positivity, Convergence };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& name);

struct GeometryBlock {
  double r0 = 1.0;
  double r1 = 2.0;
  int n_r = 17;
  int n_theta = 32;
  double T = 1.0;
  int n_t = 17;
  bool outer_is_gamma0 = false;  // "orientation": "inner_gamma0" | "outer_gamma0"
};

/// Named presets: "heat" (scalar, A = I), "advection" (scalar, constant
/// drift), "coupled2" (two components, c₁₂ = c₂₁ = −0.5). Explicit fields
/// override the preset.
struct CoefficientsBlock {
  std::string preset = "heat";
  int n = 1;
  double diffusion = 1.0;
  Eigen::MatrixXd coupling = Eigen::MatrixXd::Zero(1, 1);
  Vector2 drift = Vector2::Zero();
  std::string nonlinearity = "none";  // none | square | cross_decay
};

/// β ∂_ν y + η y = 0 per component on (inner, outer).
struct BoundaryBlock {
  std::vector<std::array<double, 2>> beta;
  std::vector<std::array<double, 2>> eta;
};

struct ObservationBlock {
  double gamma = 1.0;
  double delta = 0.0;
  double epsilon = 1e-8;
};

struct WeightsBlock {
  std::vector<double> lambda_grid{0.5, 0.75, 1.0, 1.5, 2.0, 3.0};
  std::vector<double> s_grid;  // 1.25^k, k = 0..11 when empty
  std::vector<double> mu_grid;  // default_mu_grid() when empty
  double K_margin = 0.0;
  bool tilde = false;
};

struct ExperimentBlock {
  ExperimentKind kind = ExperimentKind::Stability;
  int n_samples = 20;
  double k = 1.0;
  std::vector<double> nested_k;  // optional ascending k levels
  std::uint64_t seed = 42;
  int workers = 1;
  std::string sampler = "bumps";
  std::string scheme = "backward_euler";  // forward runs
  std::string source = "constant";         // forward runs: constant | bump
  int corpus_size = 10;                    // carleman
  bool refine = false;                     // carleman: repeat on the refined grid
  int n_instances = 200;                   // positivity
  int n_improving = 20;                    // positivity
  int levels = 4;                          // convergence
};

struct OutputBlock {
  std::string directory = "clab_out";
  std::vector<std::string> formats{"json", "csv", "svg"};
  bool wants(const std::string& f) const;
};

struct ExperimentConfig {
  GeometryBlock geometry;
  CoefficientsBlock coefficients;
  BoundaryBlock boundary;
  ObservationBlock observation;
  WeightsBlock weights;
  ExperimentBlock experiment;
  OutputBlock output;
  Json tree;  // effective configuration after overrides
};

/// Sets `dotted.key=value` in the tree; the value is read as JSON and falls
/// back to a plain string. Throws ConfigParse on malformed input.
void apply_override(Json& tree, const std::string& assignment);

/// Validates and fills defaults. Throws ConfigParse naming the offending key.
ExperimentConfig parse_config(const Json& tree);

PolarGrid make_grid(const ExperimentConfig& cfg);
SystemCoefficients make_coefficients(const ExperimentConfig& cfg, const PolarGrid& grid);
ObservationSpec make_observation(const ExperimentConfig& cfg, const PolarGrid& grid);
std::optional<NonlinearityModel> make_nonlinearity(const ExperimentConfig& cfg);
StabilityConfig make_stability_config(const ExperimentConfig& cfg, const PolarGrid& grid);

/// Smooth, sign-changing source Σ a_k cos(k_r π (r − r0)/(r1 − r0)) cos(mθ + φ)(1 + b t)
/// with coefficients drawn from (seed, id); independent of the grid.
SpaceTimeField smooth_random_source(const PolarGrid& grid, int n, std::uint64_t seed, int id);

/// Solutions of the scalar problem for `size` smooth random sources, with ζ
/// from `observation`.
std::vector<CarlemanSample> make_carleman_corpus(const SystemCoefficients& coeffs,
                                                 const ObservationSpec& observation,
                                                 const PolarGrid& grid, int size,
                                                 std::uint64_t seed);

struct CarlemanRun {
  ScanResult scan;
  double mu = 0.0;
  WeightParams base;
  bool bound_holds = false;  // lhs ≤ Ĉ·rhs for every corpus member in the region
};
CarlemanRun run_carleman_scan(const ExperimentConfig& cfg, const PolarGrid& grid);

struct PositivityRecord {
  int id = 0;
  int n = 1;
  bool improving = false;  // localized bump source, checked at T/2
  double min_value = 0.0;
  double max_abs = 0.0;
  double gamma = 0.0;      // rescaling exponent used by the solve
  double worst_ratio = 0.0;  // improving: smallest min over relevant components / max|y|
  int near_violations = 0;
  bool pass = false;
};

struct PositivitySuite {
  std::vector<PositivityRecord> records;
  int n_fail = 0;
  int n_improving_fail = 0;
  bool pass() const { return n_fail == 0 && n_improving_fail == 0; }
};

/// Random instances under the sign hypotheses with g, y0 ≥ 0 (components
/// cycling through 1..3), then bump-source instances checked for strict
/// positivity of every relevant component at T/2.
PositivitySuite run_positivity_suite(const PolarGrid& grid, int n_instances, int n_improving,
                                     std::uint64_t seed);

struct Artifact {
  std::string path;  // relative to the output directory
  std::string sha256;
};

struct RunOutcome {
  bool pass = false;
  Json summary;
  std::vector<Artifact> artifacts;
};

/// Runs the configured experiment and writes its artifacts plus
/// manifest.json into `out_dir`.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                          const std::vector<std::string>& overrides = {});

}  // namespace clab
