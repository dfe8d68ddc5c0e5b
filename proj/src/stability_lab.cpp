#include "clab/stability_lab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "clab/errors.hpp"
#include "clab/parallel.hpp"
#include "clab/positivity.hpp"

namespace clab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t id, int attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32),
                    static_cast<std::uint32_t>(attempt)};
  return std::mt19937_64(seq);
}

double total_measure(const PolarGrid& grid, int n) {
  double area = 0.0;
  for (double w : grid.quad_weights) area += w;
  return n * area * grid.T;
}

struct Draw {
  std::mt19937_64& rng;
  double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
  int count(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
};

SpaceTimeField draw_bumps(const PolarGrid& grid, int n, Draw& d) {
  std::vector<Bump> bumps(d.count(1, 4));
  for (Bump& b : bumps) {
    b.component = d.count(0, n - 1);
    b.r = d.uni(grid.r0, grid.r1);
    b.theta = d.uni(0.0, kTwoPi);
    b.width = d.uni(0.1, 0.5) * (grid.r1 - grid.r0);
    b.height = d.uni(0.2, 1.0);
    b.time_amp = d.uni(0.0, 1.0);
    b.time_freq = d.uni(0.0, 2.0 * std::numbers::pi / grid.T);
    b.time_phase = d.uni(0.0, kTwoPi);
  }
  return bump_source(grid, n, bumps);
}

SpaceTimeField draw_fourier_squared(const PolarGrid& grid, int n, Draw& d) {
  SpaceTimeField g(n, grid);
  for (int c = 0; c < n; ++c) {
    struct Mode {
      double a, kx, ky, w, phase;
    };
    std::vector<Mode> modes(8);
    for (std::size_t k = 0; k < modes.size(); ++k) {
      modes[k] = {d.normal() / static_cast<double>(k + 1), d.uni(-2.0, 2.0), d.uni(-2.0, 2.0),
                  d.uni(0.0, std::numbers::pi / grid.T), d.uni(0.0, kTwoPi)};
    }
    for (int m = 0; m < grid.n_t; ++m) {
      const double t = grid.time(m);
      for (int p = 0; p < grid.n_space(); ++p) {
        const Vector2 x = node_position(grid, p);
        double h = 0.0;
        for (const Mode& md : modes) h += md.a * std::cos(md.kx * x.x() + md.ky * x.y() + md.w * t + md.phase);
        g.at(c, m, p) = h * h;
      }
    }
  }
  return g;
}

SpaceTimeField draw_blocks(const PolarGrid& grid, int n, Draw& d) {
  SpaceTimeField g(n, grid);
  const int nb = d.count(1, 3);
  for (int k = 0; k < nb; ++k) {
    const int c = d.count(0, n - 1);
    const double dr = d.uni(0.1, 0.5) * (grid.r1 - grid.r0);
    const double rlo = d.uni(grid.r0, grid.r1 - dr);
    const double dth = d.uni(std::numbers::pi / 8, std::numbers::pi);
    const double th0 = d.uni(0.0, kTwoPi);
    const double dt = d.uni(0.2, 1.0) * grid.T;
    const double tlo = d.uni(0.0, grid.T - dt);
    const double h = d.uni(0.2, 1.0);
    for (int m = 0; m < grid.n_t; ++m) {
      const double t = grid.time(m);
      if (t < tlo || t > tlo + dt) continue;
      for (int p = 0; p < grid.n_space(); ++p) {
        const double r = grid.radius(grid.ring_of(p));
        const double th = std::fmod(grid.angle(grid.column_of(p)) - th0 + 2 * kTwoPi, kTwoPi);
        if (r >= rlo && r <= rlo + dr && th <= dth) g.at(c, m, p) += h;
      }
    }
  }
  return g;
}

}  // namespace

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Bumps: return "bumps";
    case SamplerKind::RandomFourierSquared: return "random_fourier_squared";
    case SamplerKind::IndicatorBlocks: return "indicator_blocks";
  }
  return "bumps";
}

SamplerKind sampler_from_string(std::string_view name) {
  if (name == "bumps") return SamplerKind::Bumps;
  if (name == "random_fourier_squared") return SamplerKind::RandomFourierSquared;
  if (name == "indicator_blocks") return SamplerKind::IndicatorBlocks;
  throw Error(ErrorCode::InvalidArgument, "unknown sampler '" + std::string(name) + "'");
}

std::string_view to_string(RatioStatus status) {
  switch (status) {
    case RatioStatus::Ok: return "ok";
    case RatioStatus::NotApplicable: return "not_applicable";
    case RatioStatus::ZeroObservation: return "zero_observation";
  }
  return "ok";
}

double class_k_min(const PolarGrid& grid, int n) { return 1.0 / std::sqrt(total_measure(grid, n)); }

SpaceTimeField bump_source(const PolarGrid& grid, int n, std::span<const Bump> bumps) {
  SpaceTimeField g(n, grid);
  for (const Bump& b : bumps) {
    if (b.component < 0 || b.component >= n) {
      throw Error(ErrorCode::InvalidArgument, "bump component out of range");
    }
    const Vector2 xc(b.r * std::cos(b.theta), b.r * std::sin(b.theta));
    std::vector<double> prof(grid.n_space());
    for (int p = 0; p < grid.n_space(); ++p) {
      prof[p] = b.height * std::exp(-(node_position(grid, p) - xc).squaredNorm() / (2 * b.width * b.width));
    }
    for (int m = 0; m < grid.n_t; ++m) {
      const double s = std::sin(b.time_freq * grid.time(m) + b.time_phase);
      const double tf = 1.0 - b.time_amp + b.time_amp * s * s;
      for (int p = 0; p < grid.n_space(); ++p) g.at(b.component, m, p) += tf * prof[p];
    }
  }
  return g;
}

bool in_class(const SourceField& g, double k) {
  for (double v : g.data().values) {
    if (v < 0.0) return false;
  }
  return g.l2() <= k * g.l1() * (1.0 + 1e-12);
}

double flatten_into_class(SpaceTimeField& g, double k, const PolarGrid& grid) {
  const int n = g.n_comp;
  const double v = total_measure(grid, n);
  if (k * k * v < 1.0 - 1e-12) {
    throw Error(ErrorCode::ClassEmpty, "k = " + std::to_string(k) + " is below k_min = " +
                                           std::to_string(class_k_min(grid, n)));
  }
  for (double x : g.values) {
    if (!(x >= 0.0)) throw Error(ErrorCode::ProjectionFailure, "source has a negative or NaN entry");
  }
  const double b = norm_L1_Q(grid, g);
  if (!(b > 0.0)) throw Error(ErrorCode::ProjectionFailure, "zero source cannot be projected");
  const double l2 = norm_L2_Q(grid, g);
  const double a = l2 * l2;
  if (l2 <= k * b) return 0.0;
  const double q = k * k * v - 1.0;
  if (q <= 1e-12) {
    // Only constants are admitted: replace g by the constant of equal mass.
    const double mean = b / v;
    std::fill(g.values.begin(), g.values.end(), mean);
    return std::numeric_limits<double>::infinity();
  }
  const double dd = (a - k * k * b * b) / q;
  double c = (-b + std::sqrt(b * b + v * dd)) / v;
  for (int it = 0; it < 8; ++it) {
    SpaceTimeField trial = g;
    for (double& x : trial.values) x += c;
    if (norm_L2_Q(grid, trial) <= k * norm_L1_Q(grid, trial)) {
      g = std::move(trial);
      return c;
    }
    c *= 1.0 + 1e-10 * std::pow(10.0, it);
  }
  throw Error(ErrorCode::ProjectionFailure, "flattening did not reach the class bound");
}

SampledSource sample_source_Gk(const SourceClassSpec& spec, const PolarGrid& grid, int n,
                               std::uint64_t sample_id) {
  if (spec.k < class_k_min(grid, n) * (1.0 - 1e-12)) {
    throw Error(ErrorCode::ClassEmpty, "k = " + std::to_string(spec.k) + " is below k_min = " +
                                           std::to_string(class_k_min(grid, n)));
  }
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    std::mt19937_64 rng = sample_rng(spec.seed, sample_id, attempt);
    Draw d{rng};
    SpaceTimeField g;
    switch (spec.sampler) {
      case SamplerKind::Bumps: g = draw_bumps(grid, n, d); break;
      case SamplerKind::RandomFourierSquared: g = draw_fourier_squared(grid, n, d); break;
      case SamplerKind::IndicatorBlocks: g = draw_blocks(grid, n, d); break;
    }
    for (double& x : g.values) x = std::max(0.0, x);
    if (!(norm_L1_Q(grid, g) > 0.0)) continue;
    double shift = 0.0;
    try {
      shift = flatten_into_class(g, spec.k, grid);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ClassEmpty) throw;
      continue;
    }
    SourceField src(grid, std::move(g));
    if (!in_class(src, spec.k)) continue;
    return {std::move(src), attempt + 1, shift};
  }
  throw Error(ErrorCode::RejectionExhausted,
              "no member of the class after " + std::to_string(spec.max_attempts) + " attempts");
}

StabilityRatio stability_ratio(const PolarGrid& grid, const SourceField& g,
                               const BoundarySeries& zeta) {
  StabilityRatio r;
  r.g_l2 = g.l2();
  r.zeta_l2 = norm_L2_Sigma1(grid, zeta);
  if (r.g_l2 == 0.0) {
    r.status = RatioStatus::NotApplicable;
    r.value = std::numeric_limits<double>::quiet_NaN();
  } else if (r.zeta_l2 == 0.0) {
    r.status = RatioStatus::ZeroObservation;
    r.value = std::numeric_limits<double>::infinity();
  } else {
    r.value = r.g_l2 / r.zeta_l2;
  }
  return r;
}

namespace {

void check_hypotheses(const StabilityConfig& config) {
  validate_coefficients(config.coeffs, config.grid);
  check_compatibility(config.observation, config.coeffs, config.grid);
  const SignCheck lin = check_sign_hypotheses(config.coeffs, config.grid);
  if (!lin.pass) throw Error(ErrorCode::InvalidArgument, "sign hypotheses fail: " + lin.message);
  if (config.nonlinearity) {
    const SignCheck nl = check_sign_hypotheses(*config.nonlinearity, config.grid);
    if (!nl.pass) throw Error(ErrorCode::InvalidArgument, "nonlinearity hypotheses fail: " + nl.message);
  }
}

std::vector<double> initial_of(const StabilityConfig& config) {
  if (config.y0.empty()) return zero_initial(config.grid, config.coeffs.n);
  return config.y0;
}

ForwardObservation observe_with(const StabilityConfig& config, const ForwardSolver* solver,
                                const SpaceTimeField& g, std::span<const double> y0) {
  ForwardObservation out;
  if (config.nonlinearity) {
    out.y = solve_forward_semilinear(config.coeffs, *config.nonlinearity, g, y0, config.grid);
  } else {
    out.y = solver->solve(g, y0);
  }
  out.zeta = apply_observation(config.observation,
                               extract_trace_and_conormal(out.y, config.coeffs, config.grid));
  return out;
}

// Per-sample results for ids [first, first + count) drawn with class bound k.
std::vector<SampleResult> run_samples(const StabilityConfig& config, double k, int first,
                                      int count) {
  std::vector<SampleResult> results(count);
  const int nw = std::clamp(config.workers, 1, std::max(count, 1));
  const std::vector<double> y0 = initial_of(config);
  SourceClassSpec spec = config.source;
  spec.k = k;
  parallel_for(nw, nw, [&](int w) {
    std::optional<ForwardSolver> solver;
    if (!config.nonlinearity) solver.emplace(config.coeffs, config.grid);
    const int lo = count * w / nw;
    const int hi = count * (w + 1) / nw;
    for (int q = lo; q < hi; ++q) {
      const int id = first + q;
      try {
        SampledSource s = sample_source_Gk(spec, config.grid, config.coeffs.n,
                                           static_cast<std::uint64_t>(id));
        const ForwardObservation fo =
            observe_with(config, solver ? &*solver : nullptr, s.g.data(), y0);
        const StabilityRatio r = stability_ratio(config.grid, s.g, fo.zeta);
        SampleResult& out = results[q];
        out.id = id;
        out.k = k;
        out.g_l2 = r.g_l2;
        out.g_l1 = s.g.l1();
        out.zeta_l2 = r.zeta_l2;
        out.ratio = r.value;
        out.status = r.status;
        out.y_inf = fo.y.data.max_abs();
        out.attempts = s.attempts;
        out.flatten_shift = s.flatten_shift;
      } catch (const Error& e) {
        throw Error(e.code(), "sample " + std::to_string(id) + ": " + e.what());
      }
    }
  });
  return results;
}

StabilityReport summarize(const StabilityConfig& config, std::vector<SampleResult> samples) {
  StabilityReport rep;
  rep.samples = std::move(samples);
  for (const SampleResult& s : rep.samples) {
    switch (s.status) {
      case RatioStatus::Ok:
        ++rep.n_ok;
        rep.c_hat = std::max(rep.c_hat, s.ratio);
        break;
      case RatioStatus::NotApplicable: ++rep.n_not_applicable; break;
      case RatioStatus::ZeroObservation: ++rep.n_zero_observation; break;
    }
    rep.m_observed = std::max(rep.m_observed, s.y_inf);
  }
  rep.config_digest = json_digest(config.description);
  Json j = rep.to_json();
  j.erase("digest");
  rep.digest = json_digest(j);
  return rep;
}

}  // namespace

Json StabilityReport::to_json() const {
  Json j;
  j["schema_version"] = 1;
  j["config_digest"] = config_digest;
  j["digest"] = digest;
  j["C_hat"] = c_hat;
  j["M_observed"] = m_observed;
  j["n_ok"] = n_ok;
  j["n_not_applicable"] = n_not_applicable;
  j["n_zero_observation"] = n_zero_observation;
  Json arr = Json::array();
  for (const SampleResult& s : samples) {
    arr.push_back({{"id", s.id},
                   {"k", s.k},
                   {"g_L2", s.g_l2},
                   {"g_L1", s.g_l1},
                   {"zeta_L2", s.zeta_l2},
                   {"ratio", s.ratio},
                   {"status", std::string(to_string(s.status))},
                   {"y_inf", s.y_inf},
                   {"attempts", s.attempts},
                   {"flatten_shift", s.flatten_shift}});
  }
  j["samples"] = std::move(arr);
  return j;
}

StabilityReport estimate_constant(const StabilityConfig& config) {
  check_hypotheses(config);
  if (config.n_samples < 0) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 0");
  return summarize(config, run_samples(config, config.source.k, 0, config.n_samples));
}

std::vector<StabilityReport> estimate_constant_nested(const StabilityConfig& config,
                                                      std::span<const double> ks) {
  check_hypotheses(config);
  if (!std::is_sorted(ks.begin(), ks.end())) {
    throw Error(ErrorCode::InvalidArgument, "k levels must be ascending");
  }
  std::vector<StabilityReport> out;
  std::vector<SampleResult> pool;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    auto level = run_samples(config, ks[j], static_cast<int>(j) * config.n_samples, config.n_samples);
    pool.insert(pool.end(), level.begin(), level.end());
    out.push_back(summarize(config, pool));
  }
  return out;
}

ForwardObservation observe_source(const StabilityConfig& config, const SpaceTimeField& g) {
  std::optional<ForwardSolver> solver;
  if (!config.nonlinearity) solver.emplace(config.coeffs, config.grid);
  return observe_with(config, solver ? &*solver : nullptr, g, initial_of(config));
}

AdversarialResult adversarial_search(std::vector<Bump> start, const StabilityConfig& config,
                                     int n_steps) {
  check_hypotheses(config);
  if (start.empty()) throw Error(ErrorCode::InvalidArgument, "adversarial search needs bumps");
  const PolarGrid& grid = config.grid;
  const int n = config.coeffs.n;
  std::optional<ForwardSolver> solver;
  if (!config.nonlinearity) solver.emplace(config.coeffs, grid);
  const std::vector<double> y0 = initial_of(config);

  auto evaluate = [&](const std::vector<Bump>& bumps, SourceField& src) {
    SpaceTimeField g = bump_source(grid, n, bumps);
    flatten_into_class(g, config.source.k, grid);
    src = SourceField(grid, std::move(g));
    const ForwardObservation fo = observe_with(config, solver ? &*solver : nullptr, src.data(), y0);
    const StabilityRatio r = stability_ratio(grid, src, fo.zeta);
    return r.status == RatioStatus::Ok ? r.value : -std::numeric_limits<double>::infinity();
  };

  AdversarialResult res;
  res.best = std::move(start);
  res.ratio = evaluate(res.best, res.source);
  res.trace.push_back(res.ratio);

  const double span_r = grid.r1 - grid.r0;
  std::vector<std::array<double, 4>> steps(res.best.size());
  for (std::size_t b = 0; b < res.best.size(); ++b) {
    steps[b] = {0.1 * span_r, std::numbers::pi / 8, 0.05 * span_r, 0.25 * res.best[b].height};
  }
  const int ncoord = static_cast<int>(res.best.size()) * 4;
  int since_gain = 0;
  for (int step = 0; step < n_steps; ++step) {
    const int coord = step % ncoord;
    const std::size_t b = coord / 4;
    const int field = coord % 4;
    bool improved = false;
    for (double sign : {1.0, -1.0}) {
      std::vector<Bump> cand = res.best;
      Bump& bp = cand[b];
      const double delta = sign * steps[b][field];
      switch (field) {
        case 0: bp.r = std::clamp(bp.r + delta, grid.r0, grid.r1); break;
        case 1: bp.theta = std::fmod(bp.theta + delta + 2 * kTwoPi, kTwoPi); break;
        case 2: bp.width = std::clamp(bp.width + delta, 0.05 * span_r, span_r); break;
        case 3: bp.height = std::max(1e-3, bp.height + delta); break;
      }
      SourceField src;
      double r = -std::numeric_limits<double>::infinity();
      try {
        r = evaluate(cand, src);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ProjectionFailure) throw;
        continue;
      }
      if (r > res.ratio) {
        res.best = std::move(cand);
        res.source = std::move(src);
        res.ratio = r;
        ++res.accepted;
        improved = true;
        break;
      }
    }
    since_gain = improved ? 0 : since_gain + 1;
    if (since_gain >= ncoord) {
      for (auto& s : steps) {
        for (double& x : s) x *= 0.5;
      }
      since_gain = 0;
    }
    res.trace.push_back(res.ratio);
  }
  return res;
}

BoundarySeries add_gaussian_noise(const BoundarySeries& zeta, double sigma, std::uint64_t seed) {
  double ss = 0.0;
  for (double v : zeta.values) ss += v * v;
  const double rms = zeta.values.empty() ? 0.0 : std::sqrt(ss / zeta.values.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma * rms);
  BoundarySeries out = zeta;
  for (double& v : out.values) v += nd(rng);
  return out;
}

}  // namespace clab
