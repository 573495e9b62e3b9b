// Command-line front end: run single experiments, seed suites, print ground
// truths, and run quick self-check gates against frozen reference values.
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsn/batch_eval.hpp"
#include "bsn/errors.hpp"
#include "bsn/genz.hpp"
#include "bsn/harness.hpp"
#include "bsn/quad_baselines.hpp"
#include "bsn/rng.hpp"

namespace {

namespace harness = bsn::harness;

struct CommonOptions {
  std::string config_path;
  std::string method;
  std::string problem;
  std::string dim;
  std::string n;
  std::string sampling;
  std::string seeds;
  std::string out_csv;
  std::string out_jsonl;
  std::vector<std::string> sets;
};

void add_common_options(CLI::App* cmd, CommonOptions& options) {
  cmd->add_option("--config", options.config_path, "INI-style config file");
  cmd->add_option("--method", options.method, "mc | bq | cf | bsn");
  cmd->add_option("--problem", options.problem, "problem id, e.g. genz-continuous");
  cmd->add_option("--dim", options.dim, "problem dimension");
  cmd->add_option("--n", options.n, "number of sample points");
  cmd->add_option("--sampling", options.sampling, "iid | grid1d | mala");
  cmd->add_option("--seeds", options.seeds, "seed list: 0..4 or 1,3,5");
  cmd->add_option("--out", options.out_csv, "write records as CSV");
  cmd->add_option("--jsonl", options.out_jsonl, "write records as JSONL");
  cmd->add_option("--set", options.sets, "extra key=value overrides")->take_all();
}

/// Config file first, then named flags, then --set pairs; later wins.
harness::RunConfig build_config(const CommonOptions& options) {
  harness::RunConfig config;
  if (!options.config_path.empty()) {
    for (const auto& [key, value] : harness::parse_config_file(options.config_path)) {
      harness::apply_key(config, key, value);
    }
  }
  if (!options.method.empty()) harness::apply_key(config, "method", options.method);
  if (!options.problem.empty()) harness::apply_key(config, "problem", options.problem);
  if (!options.dim.empty()) harness::apply_key(config, "dim", options.dim);
  if (!options.n.empty()) harness::apply_key(config, "n", options.n);
  if (!options.sampling.empty()) harness::apply_key(config, "sampling", options.sampling);
  if (!options.seeds.empty()) harness::apply_key(config, "seeds", options.seeds);
  for (const std::string& pair : options.sets) {
    const auto equals = pair.find('=');
    if (equals == std::string::npos) {
      throw bsn::ConfigError("--set expects key=value, got '" + pair + "'");
    }
    harness::apply_key(config, pair.substr(0, equals), pair.substr(equals + 1));
  }
  return config;
}

void emit(const std::vector<harness::RunRecord>& records, const CommonOptions& options) {
  std::cout << harness::csv_header() << '\n';
  for (const auto& record : records) std::cout << harness::to_csv_line(record) << '\n';
  if (!options.out_csv.empty()) harness::write_csv(records, options.out_csv);
  if (!options.out_jsonl.empty()) harness::write_jsonl(records, options.out_jsonl);
}

int do_run(const CommonOptions& options, const std::string& seed_text) {
  harness::RunConfig config = build_config(options);
  harness::validate(config);
  std::uint64_t seed = config.seeds.front();
  if (!seed_text.empty()) {
    try {
      seed = std::stoull(seed_text);
    } catch (const std::exception&) {
      throw bsn::ConfigError("--seed: cannot parse '" + seed_text + "'");
    }
  }
  const harness::RunRecord record = harness::run_once(config, seed);
  emit({record}, options);
  if (record.failed()) {
    std::cerr << "run failed: " << record.diagnostic << '\n';
    return 2;
  }
  return 0;
}

int do_suite(const CommonOptions& options) {
  harness::RunConfig config = build_config(options);
  harness::validate(config);
  const harness::SuiteResult suite = harness::run_suite(config);
  emit(suite.records, options);
  std::printf("# seeds=%zu mean_abs_error=%.6g std_abs_error=%.6g mean_rel_error=%.6g "
              "std_rel_error=%.6g failures=%d\n",
              suite.records.size(), suite.mean_abs_error, suite.std_abs_error,
              suite.mean_rel_error, suite.std_rel_error, suite.failures);
  if (suite.failures > 0) {
    for (const auto& record : suite.records) {
      if (record.failed()) {
        std::cerr << "seed " << record.seed << " failed: " << record.diagnostic << '\n';
      }
    }
    return 2;
  }
  return 0;
}

int do_truth(const std::string& problem, int dim) {
  const std::string prefix = "genz-";
  const std::string family_name =
      problem.rfind(prefix, 0) == 0 ? problem.substr(prefix.size()) : problem;
  const auto family = bsn::genz::family_from_name(family_name);
  const auto spec = bsn::genz::GenzSpec::defaults(family, dim);
  std::printf("%.17g\n", bsn::genz::ground_truth(spec));
  return 0;
}

/// Quick self-check: a handful of frozen reference values and statistical
/// identities that fail loudly if the build is miscompiled or the numerical
/// kernels drift. Full coverage lives in the test suite.
int do_check() {
  int failures = 0;
  auto gate = [&failures](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name;
    if (!ok && !detail.empty()) std::cout << " — " << detail;
    std::cout << '\n';
    if (!ok) ++failures;
  };
  char detail[128];

  {  // The Stein-operator image must average to zero under the target.
    const auto target = bsn::targets::TargetDistribution::isotropic_gaussian(2, 0.0, 1.0);
    auto gen = bsn::rng::substream(20240817, 1);
    const bsn::net::MlpConfig arch{2, 8, 1, bsn::net::Activation::Celu};
    bsn::stein::SteinModel model{bsn::net::MlpNetwork::random_init(arch, gen),
                                 bsn::stein::DiffusionChoice::identity(), target, 0.0,
                                 std::nullopt};
    const auto x = target.sample_iid(200000, gen);
    const auto prepared = bsn::net::prepare_points(model, x);
    const auto values =
        bsn::net::batch_model_values(model.network.config, model.pack(), prepared);
    const auto stats = bsn::quad::mc_estimate(values);
    const bool ok = std::abs(stats.mean) <= 5.0 * stats.std_error;
    std::snprintf(detail, sizeof(detail), "mean %.3g vs 5*stderr %.3g", stats.mean,
                  5.0 * stats.std_error);
    gate("stein-identity-zero-mean", ok, detail);
  }

  {  // Kernel mean embeddings against frozen quadrature values.
    const double rbf =
        bsn::quad::rbf_embedding_gaussian({1.0, std::sqrt(2.0)}, 1.0, std::vector<double>{0.0});
    const double trunc = bsn::quad::truncated_gaussian_embedding(1.0, 0.0, 1.0, -1.0, 2.0, 0.3);
    const double matern = bsn::quad::matern_half_embedding(1.0, 0.0);
    const bool ok = std::abs(rbf - 0.70710678118654752) < 1e-12 &&
                    std::abs(trunc - 0.79696720517036738) < 1e-12 &&
                    std::abs(matern - 0.52315658373024674) < 1e-12;
    std::snprintf(detail, sizeof(detail), "rbf %.17g trunc %.17g matern %.17g", rbf, trunc,
                  matern);
    gate("embedding-frozen-probes", ok, detail);
  }

  {  // Benchmark ground truths against frozen constants.
    using bsn::genz::Family;
    using bsn::genz::GenzSpec;
    using bsn::genz::ground_truth;
    const double c1 = ground_truth(GenzSpec::defaults(Family::Continuous, 1));
    const double c2 = ground_truth(GenzSpec::defaults(Family::Continuous, 2));
    const double gp = ground_truth(GenzSpec::defaults(Family::GaussianPeak, 1));
    const double cp = ground_truth(GenzSpec::defaults(Family::CornerPeak, 10));
    const bool ok = std::abs(c1 - 0.7336169433780727) < 1e-13 &&
                    std::abs(c2 - 0.538193819611386) < 1e-13 &&
                    std::abs(gp - 0.3543465094470124) < 1e-13 &&
                    std::abs(cp / 1.6157247587659408e-14 - 1.0) < 1e-12;
    std::snprintf(detail, sizeof(detail), "%.17g %.17g %.17g %.17g", c1, c2, gp, cp);
    gate("genz-frozen-truths", ok, detail);
  }

  {  // GP posterior mean must interpolate noiseless data.
    const int n = 12;
    bsn::numkit::Matrix x(n, 1);
    bsn::numkit::Vector y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = -2.0 + 4.0 * i / (n - 1);
      y[i] = std::sin(x(i, 0));
    }
    const bsn::quad::RbfKernel kernel{1.0, 1.0};
    const bsn::numkit::Vector means = bsn::quad::gp_posterior_mean(x, y, kernel, 1e-12, x);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(means[i] - y[i]));
    bsn::quad::BqConfig config;
    config.kernel = kernel;
    config.optimize_hyperparameters = false;
    const auto posterior = bsn::quad::bq_estimate(x, y, bsn::quad::BqProblem::gaussian_iso(), config);
    const double initial = bsn::quad::rbf_initial_error_gaussian(kernel, 1.0, 1);
    const bool ok = worst < 1e-6 && posterior.variance.has_value() &&
                    *posterior.variance >= 0.0 && *posterior.variance <= initial;
    std::snprintf(detail, sizeof(detail), "interp %.3g variance %.3g initial %.3g", worst,
                  posterior.variance.value_or(-1.0), initial);
    gate("bq-interpolation-and-variance", ok, detail);
  }

  {  // Identical (config, seed) pairs must reproduce records exactly.
    harness::RunConfig config;
    config.method = harness::Method::Mc;
    config.n = 2048;
    const auto a = harness::run_once(config, 11);
    const auto b = harness::run_once(config, 11);
    const bool ok = !a.failed() && a.estimate == b.estimate && a.abs_error == b.abs_error;
    std::snprintf(detail, sizeof(detail), "estimate %.17g vs %.17g", a.estimate.value_or(-1.0),
                  b.estimate.value_or(-1.0));
    gate("run-determinism", ok, detail);
  }

  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stein network numerical integration toolkit"};
  app.require_subcommand(1);

  CommonOptions options;
  std::string seed_text;

  CLI::App* run_cmd = app.add_subcommand("run", "Run one method on one problem");
  add_common_options(run_cmd, options);
  run_cmd->add_option("--seed", seed_text, "single seed (default: first of seeds)");

  CLI::App* suite_cmd = app.add_subcommand("suite", "Run every seed of a configuration");
  add_common_options(suite_cmd, options);

  CLI::App* truth_cmd = app.add_subcommand("truth", "Print a problem's ground-truth integral");
  std::string truth_problem;
  int truth_dim = 1;
  truth_cmd->add_option("--problem", truth_problem, "problem id")->required();
  truth_cmd->add_option("--dim", truth_dim, "dimension (default 1)");

  CLI::App* check_cmd = app.add_subcommand("check", "Run built-in self-check gates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) return do_run(options, seed_text);
    if (suite_cmd->parsed()) return do_suite(options);
    if (truth_cmd->parsed()) return do_truth(truth_problem, truth_dim);
    if (check_cmd->parsed()) return do_check();
  } catch (const bsn::ConfigError& error) {
    std::cerr << "config error: " << error.what() << '\n';
    return 1;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << '\n';
    return 2;
  }
  return 0;
}
