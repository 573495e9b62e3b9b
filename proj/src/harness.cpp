#include "bsn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bsn/batch_eval.hpp"
#include "bsn/errors.hpp"
#include "bsn/laplace.hpp"
#include "bsn/rng.hpp"

namespace bsn::harness {
namespace {

constexpr std::uint64_t kSampleStream = 0x73616d706c;  // sampling draws
constexpr std::uint64_t kNetStream = 0x6e6574;         // network initialization

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_double(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  }
}

long long parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "yes" || value == "1" || value == "on") return true;
  if (value == "false" || value == "no" || value == "0" || value == "off") return false;
  throw ConfigError(key + ": cannot parse '" + value + "' as a boolean");
}

std::vector<std::uint64_t> parse_seeds(const std::string& value) {
  std::vector<std::uint64_t> seeds;
  const auto range = value.find("..");
  if (range != std::string::npos) {
    const auto lo = parse_integer("seeds", trim(value.substr(0, range)));
    const auto hi = parse_integer("seeds", trim(value.substr(range + 2)));
    if (lo < 0 || hi < lo) throw ConfigError("seeds: bad range '" + value + "'");
    for (long long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    return seeds;
  }
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto s = parse_integer("seeds", item);
    if (s < 0) throw ConfigError("seeds: negative seed '" + item + "'");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (seeds.empty()) throw ConfigError("seeds: empty list '" + value + "'");
  return seeds;
}

genz::Family family_from_problem(const std::string& id) {
  const std::string prefix = "genz-";
  if (id.rfind(prefix, 0) == 0) return genz::family_from_name(id.substr(prefix.size()));
  return genz::family_from_name(id);
}

/// Resolves the scaled-identity constant from the observed scores: m = I/C
/// with C the standard deviation or the maximum of the score norms.
stein::DiffusionChoice resolve_diffusion(const RunConfig& config,
                                         const targets::TargetDistribution& target,
                                         const numkit::Matrix& x) {
  if (config.score_scaling == ScoreScaling::None) return config.diffusion;
  std::vector<double> norms(x.rows());
  numkit::Vector s(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    target.score(x.row_span(i), s);
    norms[i] = numkit::norm2(s);
  }
  double c = 0.0;
  if (config.score_scaling == ScoreScaling::Max) {
    c = *std::max_element(norms.begin(), norms.end());
  } else {
    double mean = 0.0;
    for (double v : norms) mean += v;
    mean /= static_cast<double>(norms.size());
    double ss = 0.0;
    for (double v : norms) ss += (v - mean) * (v - mean);
    const double denom = norms.size() > 1 ? static_cast<double>(norms.size() - 1) : 1.0;
    c = std::sqrt(ss / denom);
  }
  return stein::DiffusionChoice::scaled_identity(1.0 / std::max(c, 1e-12));
}

double aggregate_mean(const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  return values.empty() ? 0.0 : mean / static_cast<double>(values.size());
}

double aggregate_std(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

void set_json_field(nlohmann::json& object, const std::string& key,
                    const std::optional<double>& value) {
  if (value) {
    object[key] = *value;
  } else {
    object[key] = nullptr;
  }
}

std::optional<double> get_json_field(const nlohmann::json& object, const std::string& key) {
  if (!object.contains(key) || object[key].is_null()) return std::nullopt;
  return object[key].get<double>();
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Mc: return "mc";
    case Method::Bq: return "bq";
    case Method::Cf: return "cf";
    case Method::Bsn: return "bsn";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "mc") return Method::Mc;
  if (name == "bq") return Method::Bq;
  if (name == "cf") return Method::Cf;
  if (name == "bsn") return Method::Bsn;
  throw ConfigError("unknown method '" + name + "'");
}

std::string sampling_name(Sampling s) {
  switch (s) {
    case Sampling::Iid: return "iid";
    case Sampling::Grid1d: return "grid1d";
    case Sampling::Mala: return "mala";
  }
  return "?";
}

Sampling sampling_from_name(const std::string& name) {
  if (name == "iid") return Sampling::Iid;
  if (name == "grid1d") return Sampling::Grid1d;
  if (name == "mala") return Sampling::Mala;
  throw ConfigError("unknown sampling mode '" + name + "'");
}

std::string score_scaling_name(ScoreScaling s) {
  switch (s) {
    case ScoreScaling::None: return "none";
    case ScoreScaling::Std: return "std";
    case ScoreScaling::Max: return "max";
  }
  return "?";
}

ScoreScaling score_scaling_from_name(const std::string& name) {
  if (name == "none") return ScoreScaling::None;
  if (name == "std") return ScoreScaling::Std;
  if (name == "max") return ScoreScaling::Max;
  throw ConfigError("unknown score scaling rule '" + name + "'");
}

void validate(const RunConfig& config) {
  if (config.n < 1) throw ConfigError("n must be at least 1");
  if (config.dim < 1) throw ConfigError("dim must be at least 1");
  if (config.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (config.sampling == Sampling::Grid1d && config.dim != 1) {
    throw ConfigError("grid1d sampling requires dim = 1");
  }
  if (config.hidden_width < 1 && config.hidden_layers > 0) {
    throw ConfigError("hidden_width must be positive with hidden layers present");
  }
  if (config.hidden_layers < 0) throw ConfigError("hidden_layers must be non-negative");
  if (!(config.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (config.score_scaling != ScoreScaling::None &&
      config.diffusion.kind != stein::DiffusionChoice::Kind::ScaledIdentity) {
    throw ConfigError("score_scaling requires the scaled-identity diffusion");
  }
}

double relative_error(double estimate, double truth) {
  return std::abs(estimate - truth) / std::max(std::abs(truth), 1e-12);
}

RunRecord run_once(const RunConfig& config, std::uint64_t seed) {
  validate(config);
  RunRecord record;
  record.method = method_name(config.method);
  record.problem = config.problem_id();
  record.dim = config.dim;
  record.n = config.n;
  record.seed = seed;
  try {
    const auto spec = genz::GenzSpec::defaults(config.family, config.dim);
    record.truth = genz::ground_truth(spec);
    const auto target = targets::TargetDistribution::isotropic_gaussian(config.dim, 0.0, 1.0);

    const auto sample_start = Clock::now();
    rng::SplitMix64 sample_gen = rng::substream(seed, kSampleStream);
    numkit::Matrix x;
    switch (config.sampling) {
      case Sampling::Iid:
        x = target.sample_iid(config.n, sample_gen);
        break;
      case Sampling::Grid1d:
        x = targets::sample_grid_1d(1.0, config.n);
        break;
      case Sampling::Mala: {
        auto chain = targets::mala_sample(target, config.n, config.mala, sample_gen);
        x = std::move(chain.samples);
        record.acceptance_rate = chain.acceptance_rate;
        break;
      }
    }
    numkit::Vector y(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      y[i] = genz::transformed_eval(spec, x.row_span(i));
    }
    record.sample_time_s = seconds_since(sample_start);

    const auto fit_start = Clock::now();
    switch (config.method) {
      case Method::Mc: {
        record.estimate = quad::mc_estimate(y).mean;
        break;
      }
      case Method::Bq: {
        const auto posterior =
            quad::bq_estimate(x, y, quad::BqProblem::gaussian_iso(1.0), config.bq);
        record.estimate = posterior.mean;
        if (posterior.variance) {
          record.posterior_std = std::sqrt(std::max(*posterior.variance, 0.0));
        }
        break;
      }
      case Method::Cf: {
        numkit::Matrix scores(x.rows(), x.cols());
        numkit::Vector s(x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          target.score(x.row_span(i), s);
          for (std::size_t j = 0; j < x.cols(); ++j) scores(i, j) = s[j];
        }
        record.estimate = quad::stein_cf_estimate(x, y, scores, config.cf).estimate;
        break;
      }
      case Method::Bsn: {
        rng::SplitMix64 net_gen = rng::substream(seed, kNetStream);
        const net::MlpConfig arch{config.dim, config.hidden_width, config.hidden_layers,
                                  config.activation};
        stein::SteinModel model{net::MlpNetwork::random_init(arch, net_gen),
                                resolve_diffusion(config, target, x), target, 0.0, std::nullopt};
        train::TrainConfig train_config;
        train_config.optimizer = config.optimizer;
        train_config.lambda = config.lambda;
        train_config.lbfgs = config.lbfgs;
        train_config.adam = config.adam;
        const net::TrainingSet data{x, y};
        const auto fit = train::train_model(model, data, train_config);
        record.train_final_loss = fit.final_loss;
        record.estimate = stein::integral_readout(model);
        const auto prepared = net::prepare_dataset(model, data);
        const auto posterior =
            laplace::laplace_posterior(model.network.config, model.pack(), prepared);
        record.posterior_std = std::sqrt(std::max(posterior.theta0_variance, 0.0));
        break;
      }
    }
    record.fit_time_s = seconds_since(fit_start);

    record.abs_error = std::abs(*record.estimate - *record.truth);
    record.rel_error = relative_error(*record.estimate, *record.truth);
    if (record.posterior_std && *record.posterior_std > 0.0) {
      record.calibration = *record.abs_error / *record.posterior_std;
    }
  } catch (const std::exception& error) {
    record.diagnostic = error.what();
    record.estimate.reset();
    record.abs_error.reset();
    record.rel_error.reset();
    record.posterior_std.reset();
    record.calibration.reset();
    record.train_final_loss.reset();
  }
  return record;
}

SuiteResult run_suite(const RunConfig& config) {
  validate(config);
  SuiteResult suite;
  std::vector<double> abs_errors;
  std::vector<double> rel_errors;
  for (std::uint64_t seed : config.seeds) {
    RunRecord record = run_once(config, seed);
    if (record.failed()) {
      ++suite.failures;
    } else {
      abs_errors.push_back(*record.abs_error);
      rel_errors.push_back(*record.rel_error);
    }
    suite.records.push_back(std::move(record));
  }
  suite.mean_abs_error = aggregate_mean(abs_errors);
  suite.std_abs_error = aggregate_std(abs_errors, suite.mean_abs_error);
  suite.mean_rel_error = aggregate_mean(rel_errors);
  suite.std_rel_error = aggregate_std(rel_errors, suite.mean_rel_error);
  return suite;
}

std::string csv_header() {
  return "method,problem,dim,n,seed,estimate,truth,abs_error,rel_error,posterior_std,"
         "calibration,sample_time_s,fit_time_s,train_final_loss,acceptance_rate";
}

std::string to_csv_line(const RunRecord& r) {
  std::ostringstream line;
  line << r.method << ',' << r.problem << ',' << r.dim << ',' << r.n << ',' << r.seed << ','
       << format_optional(r.estimate) << ',' << format_optional(r.truth) << ','
       << format_optional(r.abs_error) << ',' << format_optional(r.rel_error) << ','
       << format_optional(r.posterior_std) << ',' << format_optional(r.calibration) << ','
       << format_double(r.sample_time_s) << ',' << format_double(r.fit_time_s) << ','
       << format_optional(r.train_final_loss) << ',' << format_optional(r.acceptance_rate);
  return line.str();
}

void write_csv(const std::vector<RunRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << csv_header() << '\n';
  for (const auto& record : records) out << to_csv_line(record) << '\n';
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

std::string to_json_line(const RunRecord& r) {
  nlohmann::json object;
  object["method"] = r.method;
  object["problem"] = r.problem;
  object["dim"] = r.dim;
  object["n"] = r.n;
  object["seed"] = r.seed;
  set_json_field(object, "estimate", r.estimate);
  set_json_field(object, "truth", r.truth);
  set_json_field(object, "abs_error", r.abs_error);
  set_json_field(object, "rel_error", r.rel_error);
  set_json_field(object, "posterior_std", r.posterior_std);
  set_json_field(object, "calibration", r.calibration);
  object["sample_time_s"] = r.sample_time_s;
  object["fit_time_s"] = r.fit_time_s;
  set_json_field(object, "train_final_loss", r.train_final_loss);
  set_json_field(object, "acceptance_rate", r.acceptance_rate);
  return object.dump();
}

void write_jsonl(const std::vector<RunRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (const auto& record : records) out << to_json_line(record) << '\n';
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

std::vector<RunRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  std::vector<RunRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    nlohmann::json object;
    try {
      object = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& error) {
      throw ConfigError("bad JSONL line in '" + path + "': " + error.what());
    }
    RunRecord r;
    r.method = object.at("method").get<std::string>();
    r.problem = object.at("problem").get<std::string>();
    r.dim = object.at("dim").get<int>();
    r.n = object.at("n").get<int>();
    r.seed = object.at("seed").get<std::uint64_t>();
    r.estimate = get_json_field(object, "estimate");
    r.truth = get_json_field(object, "truth");
    r.abs_error = get_json_field(object, "abs_error");
    r.rel_error = get_json_field(object, "rel_error");
    r.posterior_std = get_json_field(object, "posterior_std");
    r.calibration = get_json_field(object, "calibration");
    r.sample_time_s = object.at("sample_time_s").get<double>();
    r.fit_time_s = object.at("fit_time_s").get<double>();
    r.train_final_loss = get_json_field(object, "train_final_loss");
    r.acceptance_rate = get_json_field(object, "acceptance_rate");
    records.push_back(std::move(r));
  }
  return records;
}

KeyValues parse_config_text(const std::string& text) {
  KeyValues keys;
  std::stringstream stream(text);
  std::string line;
  std::string section;
  int line_number = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_number) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(line_number) + ": empty section name");
      }
      continue;
    }
    const auto equals = line.find('=');
    if (equals == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, equals));
    const std::string value = trim(line.substr(equals + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_number) + ": empty key");
    }
    keys[section.empty() ? key : section + "." + key] = value;
  }
  return keys;
}

KeyValues parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

void apply_key(RunConfig& config, const std::string& key, const std::string& value) {
  if (key == "method") {
    config.method = method_from_name(value);
  } else if (key == "problem") {
    config.family = family_from_problem(value);
  } else if (key == "dim") {
    config.dim = static_cast<int>(parse_integer(key, value));
  } else if (key == "n") {
    config.n = static_cast<int>(parse_integer(key, value));
  } else if (key == "seeds") {
    config.seeds = parse_seeds(value);
  } else if (key == "sampling") {
    config.sampling = sampling_from_name(value);
  } else if (key == "bsn.hidden_width") {
    config.hidden_width = static_cast<int>(parse_integer(key, value));
  } else if (key == "bsn.hidden_layers") {
    config.hidden_layers = static_cast<int>(parse_integer(key, value));
  } else if (key == "bsn.activation") {
    config.activation = net::activation_from_name(value);
  } else if (key == "bsn.lambda") {
    config.lambda = parse_double(key, value);
  } else if (key == "bsn.optimizer") {
    if (value == "lbfgs") {
      config.optimizer = train::Optimizer::Lbfgs;
    } else if (value == "adam") {
      config.optimizer = train::Optimizer::Adam;
    } else {
      throw ConfigError("bsn.optimizer: unknown optimizer '" + value + "'");
    }
  } else if (key == "bsn.max_iterations") {
    config.lbfgs.max_iterations = static_cast<int>(parse_integer(key, value));
  } else if (key == "bsn.gradient_tolerance") {
    config.lbfgs.gradient_tolerance = parse_double(key, value);
  } else if (key == "bsn.memory") {
    config.lbfgs.memory = static_cast<int>(parse_integer(key, value));
  } else if (key == "bsn.adam_iterations") {
    config.adam.iterations = static_cast<int>(parse_integer(key, value));
  } else if (key == "bsn.adam_learning_rate") {
    config.adam.learning_rate = parse_double(key, value);
  } else if (key == "bsn.diffusion") {
    // Accepts "identity", "diag-x", ... and "scaled-identity:<scale>".
    const auto colon = value.find(':');
    const std::string name = colon == std::string::npos ? value : trim(value.substr(0, colon));
    const double scale =
        colon == std::string::npos ? 1.0 : parse_double(key, trim(value.substr(colon + 1)));
    config.diffusion = stein::diffusion_from_name(name, scale);
  } else if (key == "bsn.score_scaling") {
    config.score_scaling = score_scaling_from_name(value);
  } else if (key == "bq.optimize") {
    config.bq.optimize_hyperparameters = parse_bool(key, value);
  } else if (key == "bq.lengthscale") {
    config.bq.kernel.lengthscale = parse_double(key, value);
  } else if (key == "bq.amplitude") {
    config.bq.kernel.amplitude = parse_double(key, value);
  } else if (key == "bq.jitter") {
    config.bq.relative_jitter = parse_double(key, value);
  } else if (key == "bq.max_lml_points") {
    config.bq.max_lml_points = static_cast<int>(parse_integer(key, value));
  } else if (key == "cf.optimize") {
    config.cf.optimize_hyperparameters = parse_bool(key, value);
  } else if (key == "cf.lengthscale") {
    config.cf.kernel.lengthscale = parse_double(key, value);
  } else if (key == "cf.amplitude") {
    config.cf.kernel.amplitude = parse_double(key, value);
  } else if (key == "cf.regularizer") {
    config.cf.regularizer = parse_double(key, value);
  } else if (key == "cf.max_lml_points") {
    config.cf.max_lml_points = static_cast<int>(parse_integer(key, value));
  } else if (key == "mala.step_size") {
    config.mala.step_size = parse_double(key, value);
  } else if (key == "mala.burn_in") {
    config.mala.burn_in = static_cast<int>(parse_integer(key, value));
  } else if (key == "mala.thinning") {
    config.mala.thinning = static_cast<int>(parse_integer(key, value));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig config_from_keys(const KeyValues& keys) {
  RunConfig config;
  for (const auto& [key, value] : keys) apply_key(config, key, value);
  return config;
}

}  // namespace bsn::harness
