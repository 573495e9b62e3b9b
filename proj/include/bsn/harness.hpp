#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bsn/genz.hpp"
#include "bsn/mlp.hpp"
#include "bsn/quad_baselines.hpp"
#include "bsn/stein.hpp"
#include "bsn/targets.hpp"
#include "bsn/train.hpp"

namespace bsn::harness {

enum class Method { Mc, Bq, Cf, Bsn };
enum class Sampling { Iid, Grid1d, Mala };

/// How the scaled-identity diffusion constant C (m = I/C) is derived from the
/// observed score norms; None keeps the configured scale untouched.
enum class ScoreScaling { None, Std, Max };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::string sampling_name(Sampling s);
Sampling sampling_from_name(const std::string& name);
std::string score_scaling_name(ScoreScaling s);
ScoreScaling score_scaling_from_name(const std::string& name);

struct RunConfig {
  Method method = Method::Mc;
  genz::Family family = genz::Family::Continuous;
  int dim = 1;
  int n = 1000;
  std::vector<std::uint64_t> seeds{0};
  Sampling sampling = Sampling::Iid;

  // Network estimator block.
  int hidden_width = 32;
  int hidden_layers = 2;
  net::Activation activation = net::Activation::Celu;
  double lambda = 1e-6;
  train::Optimizer optimizer = train::Optimizer::Lbfgs;
  opt::LbfgsConfig lbfgs{};
  opt::AdamConfig adam{};
  stein::DiffusionChoice diffusion = stein::DiffusionChoice::identity();
  ScoreScaling score_scaling = ScoreScaling::None;

  // Kernel baselines.
  quad::BqConfig bq{};
  quad::SteinCfConfig cf{};

  // MALA sampling block.
  targets::MalaConfig mala{};

  std::string problem_id() const { return "genz-" + genz::family_name(family); }
};

/// Throws ConfigError when the configuration violates its invariants.
void validate(const RunConfig& config);

struct RunRecord {
  std::string method;
  std::string problem;
  int dim = 0;
  int n = 0;
  std::uint64_t seed = 0;
  std::optional<double> estimate;
  std::optional<double> truth;
  std::optional<double> abs_error;
  std::optional<double> rel_error;
  std::optional<double> posterior_std;
  std::optional<double> calibration;
  double sample_time_s = 0.0;
  double fit_time_s = 0.0;
  std::optional<double> train_final_loss;
  std::optional<double> acceptance_rate;
  std::string diagnostic;  ///< non-empty marks a failed run; not serialized

  bool failed() const { return !diagnostic.empty(); }
};

/// abs_error / max(|truth|, 1e-12).
double relative_error(double estimate, double truth);

/// One deterministic run: sample points, evaluate the transformed integrand,
/// run the method, fill every applicable field. Method errors are captured
/// into a failed record (diagnostic set), not thrown.
RunRecord run_once(const RunConfig& config, std::uint64_t seed);

struct SuiteResult {
  std::vector<RunRecord> records;  ///< one per seed, ordered by the seed list
  double mean_abs_error = 0.0;     ///< across successful records
  double std_abs_error = 0.0;      ///< sample std; 0 with a single record
  double mean_rel_error = 0.0;
  double std_rel_error = 0.0;
  int failures = 0;
};

SuiteResult run_suite(const RunConfig& config);

std::string csv_header();
std::string to_csv_line(const RunRecord& record);
void write_csv(const std::vector<RunRecord>& records, const std::string& path);
std::string to_json_line(const RunRecord& record);
void write_jsonl(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> read_jsonl(const std::string& path);

/// Flat key-value view of a config document: top-level keys plain, sectioned
/// keys as "section.key". Later assignments win.
using KeyValues = std::map<std::string, std::string>;

/// Parses the INI-style config text: `key = value` lines, `[section]`
/// headers, `#` comments. Throws ConfigError on malformed lines.
KeyValues parse_config_text(const std::string& text);
KeyValues parse_config_file(const std::string& path);

/// Applies one flat key to the config; throws ConfigError for unknown keys or
/// unparseable values. "seeds" accepts `a..b` ranges and comma lists.
void apply_key(RunConfig& config, const std::string& key, const std::string& value);
RunConfig config_from_keys(const KeyValues& keys);

}  // namespace bsn::harness
