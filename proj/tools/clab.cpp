#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clab/errors.hpp"
#include "clab/experiment.hpp"
#include "clab/io.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitError = 1;
constexpr int kExitFailedSuite = 2;
constexpr int kExitConfigParse = 3;
constexpr int kExitIo = 4;
constexpr int kExitModuleBase = 10;

int exit_code_for(clab::ErrorCode code) {
  switch (code) {
    case clab::ErrorCode::ConfigParse: return kExitConfigParse;
    case clab::ErrorCode::Io: return kExitIo;
    default: return kExitModuleBase + static_cast<int>(code);
  }
}

std::string exit_code_table() {
  std::string s =
      "Exit codes:\n"
      "  0   experiment ran and every check passed\n"
      "  1   unexpected error\n"
      "  2   experiment ran but a check failed\n"
      "  3   ConfigParse: unreadable or invalid configuration\n"
      "  4   Io: output could not be written\n";
  for (int c = 1; c < static_cast<int>(clab::ErrorCode::ConfigParse); ++c) {
    const auto code = static_cast<clab::ErrorCode>(c);
    s += "  " + std::to_string(exit_code_for(code)) + (exit_code_for(code) < 100 ? "  " : " ") +
         std::string(clab::to_string(code)) + "\n";
  }
  return s;
}

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::vector<std::string> overrides;
};

int run(const std::string& kind, const Options& opt) {
  clab::Json tree = clab::Json::object();
  if (!opt.config.empty()) tree = clab::read_json_file(opt.config);
  std::vector<std::string> applied;
  auto apply = [&](const std::string& assignment) {
    clab::apply_override(tree, assignment);
    applied.push_back(assignment);
  };
  const bool kind_given = tree.contains("experiment") && tree["experiment"].contains("kind");
  if (!kind_given || tree["experiment"]["kind"] != kind) apply("experiment.kind=\"" + kind + "\"");
  for (const auto& o : opt.overrides) apply(o);
  if (opt.seed) apply("experiment.seed=" + std::to_string(*opt.seed));
  if (opt.workers) apply("experiment.workers=" + std::to_string(*opt.workers));

  const clab::ExperimentConfig cfg = clab::parse_config(tree);
  std::filesystem::path out;
  if (!opt.out.empty()) {
    out = opt.out;
  } else if (tree.contains("output") && tree["output"].contains("directory")) {
    out = cfg.output.directory;
  } else if (const char* env = std::getenv("CLAB_OUT"); env && *env) {
    out = env;
  } else {
    out = cfg.output.directory;
  }
  const clab::RunOutcome res = clab::run_experiment(cfg, out, applied);
  std::cout << kind << ": " << (res.pass ? "PASS" : "FAIL") << "\n";
  std::cout << res.summary.dump(2) << "\n";
  std::cout << "artifacts in " << out.string() << " (" << res.artifacts.size()
            << " files, see manifest.json)\n";
  return res.pass ? kExitPass : kExitFailedSuite;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parabolic inverse-source laboratory on an annulus: forward solves, Carleman "
               "scans, stability constants, positivity suites and convergence studies."};
  app.footer(exit_code_table() +
             "\nThe output directory is --out, else output.directory from the config, else "
             "$CLAB_OUT, else ./clab_out.");
  app.require_subcommand(1);
  Options opt;
  std::string chosen;
  const std::vector<std::pair<std::string, std::string>> kinds{
      {"forward", "Solve the configured system once and record the boundary observation"},
      {"carleman", "Scan (s, lambda) for the empirical Carleman constant on a solution corpus"},
      {"stability", "Estimate the stability constant over sampled sources of the class G_k"},
      {"positivity", "Run the randomized positivity and positivity-improving suites"},
      {"convergence", "Measure manufactured-solution convergence slopes for both time schemes"}};
  for (const auto& [name, help] : kinds) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON configuration file");
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", opt.seed, "Random seed (overrides experiment.seed)");
    sub->add_option("--workers", opt.workers, "Worker threads (overrides experiment.workers)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--override", opt.overrides, "key.path=value, repeatable; value parsed as JSON")
        ->allow_extra_args(false);
    sub->callback([&chosen, n = name] { chosen = n; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return run(chosen, opt);
  } catch (const clab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
