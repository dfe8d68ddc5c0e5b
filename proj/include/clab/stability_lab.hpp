#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clab/field.hpp"
#include "clab/geometry.hpp"
#include "clab/io.hpp"
#include "clab/observe.hpp"
#include "clab/pde_core.hpp"

namespace clab {

enum class SamplerKind { Bumps, RandomFourierSquared, IndicatorBlocks };

std::string_view to_string(SamplerKind kind);
/// Accepts "bumps", "random_fourier_squared", "indicator_blocks".
SamplerKind sampler_from_string(std::string_view name);

/// The class 𝒢ₖ of nonnegative sources with ‖g‖_{L²(Q)} ≤ k‖g‖_{L¹(Q)}.
struct SourceClassSpec {
  double k = 1.0;
  bool positivity = true;
  SamplerKind sampler = SamplerKind::Bumps;
  std::uint64_t seed = 0;
  int max_attempts = 50;
};

/// 1/√(n|Q|): the ratio of a constant source, the smallest any source attains.
double class_k_min(const PolarGrid& grid, int n);

/// Gaussian bump h·exp(−|x − x_c|²/(2w²)) in component `component`,
/// modulated in time by 1 − a + a·sin²(ωt + φ).
struct Bump {
  int component = 0;
  double r = 1.5;
  double theta = 0.0;
  double width = 0.2;
  double height = 1.0;
  double time_amp = 0.0;
  double time_freq = 0.0;
  double time_phase = 0.0;
};

SpaceTimeField bump_source(const PolarGrid& grid, int n, std::span<const Bump> bumps);

/// Adds the smallest constant to every component of g ≥ 0 that brings the
/// norm ratio down to k. Returns the constant (0 when g is already in the
/// class); throws ProjectionFailure for g ≡ 0 or a negative entry, ClassEmpty
/// when k < k_min.
double flatten_into_class(SpaceTimeField& g, double k, const PolarGrid& grid);

/// True when g ≥ 0 and ‖g‖₂ ≤ k‖g‖₁ (with a 1e-12 relative slack).
bool in_class(const SourceField& g, double k);

struct SampledSource {
  SourceField g;
  int attempts = 0;
  double flatten_shift = 0.0;
};

/// Draws sample `sample_id` of the class. The draw depends only on
/// (seed, sample_id, attempt), not on the grid, so the same continuous source
/// is evaluated on every resolution.
SampledSource sample_source_Gk(const SourceClassSpec& spec, const PolarGrid& grid, int n,
                               std::uint64_t sample_id = 0);

enum class RatioStatus { Ok, NotApplicable, ZeroObservation };
std::string_view to_string(RatioStatus status);

struct StabilityRatio {
  double value = 0.0;
  double g_l2 = 0.0;
  double zeta_l2 = 0.0;
  RatioStatus status = RatioStatus::Ok;
};

/// ‖g‖_{L²(Q)} / ‖ζ‖_{L²(Σ₁)}; NotApplicable for g = 0 (value NaN),
/// ZeroObservation for ζ = 0 with g ≠ 0 (value +∞).
StabilityRatio stability_ratio(const PolarGrid& grid, const SourceField& g,
                               const BoundarySeries& zeta);

struct StabilityConfig {
  PolarGrid grid;
  SystemCoefficients coeffs;
  ObservationSpec observation;
  SourceClassSpec source;
  int n_samples = 10;
  int workers = 1;
  std::optional<NonlinearityModel> nonlinearity;  // linear system when empty
  std::vector<double> y0;                          // zero when empty
  Json description;                                // hashed into the config digest
};

struct SampleResult {
  int id = 0;
  double k = 0.0;
  double g_l2 = 0.0;
  double g_l1 = 0.0;
  double zeta_l2 = 0.0;
  double ratio = 0.0;
  RatioStatus status = RatioStatus::Ok;
  double y_inf = 0.0;
  int attempts = 0;
  double flatten_shift = 0.0;
};

struct StabilityReport {
  std::vector<SampleResult> samples;  // ordered by id
  double c_hat = 0.0;                 // max ratio over samples with status Ok
  double m_observed = 0.0;            // max ‖y‖∞ over samples
  int n_ok = 0;
  int n_not_applicable = 0;
  int n_zero_observation = 0;
  std::string config_digest;
  std::string digest;  // over the configuration and every per-sample record

  Json to_json() const;
};

/// Forward solves for n_samples draws of the source class and the resulting
/// ratios. Throws InvalidArgument when the sign hypotheses fail; solver errors
/// are rethrown with the sample id prefixed.
StabilityReport estimate_constant(const StabilityConfig& config);

/// Reports for ascending ks where level j contains the samples of every level
/// ≤ j (each drawn with its own k), so Ĉ is non-decreasing in k.
std::vector<StabilityReport> estimate_constant_nested(const StabilityConfig& config,
                                                      std::span<const double> ks);

/// Forward solve and observation of one source under `config`.
struct ForwardObservation {
  StateField y;
  BoundarySeries zeta;
};
ForwardObservation observe_source(const StabilityConfig& config, const SpaceTimeField& g);

struct AdversarialResult {
  std::vector<Bump> best;
  SourceField source;
  double ratio = 0.0;
  std::vector<double> trace;  // best ratio after each step; trace[0] is the start
  int accepted = 0;
};

/// Coordinate ascent on (r, θ, width, height) of each bump, maximizing the
/// stability ratio; every candidate is flattened back into 𝒢ₖ.
AdversarialResult adversarial_search(std::vector<Bump> start, const StabilityConfig& config,
                                     int n_steps);

/// Adds N(0, (sigma·rms(ζ))²) noise; used only for sensitivity tables.
BoundarySeries add_gaussian_noise(const BoundarySeries& zeta, double sigma, std::uint64_t seed);

}  // namespace clab
