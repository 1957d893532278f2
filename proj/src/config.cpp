#include "srcpo/config.hpp"

#include "srcpo/inner.hpp"
#include "srcpo/risk.hpp"
#include "srcpo/text.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace srcpo {

namespace {

double number(std::string_view key, std::string_view v) {
  const auto x = text::to_double(v);
  if (!x || !std::isfinite(*x)) throw ConfigError(std::string(key), "'" + std::string(v) + "' is not a number");
  return *x;
}

long long integer(std::string_view key, std::string_view v) {
  const auto x = text::to_int(v);
  if (!x) throw ConfigError(std::string(key), "'" + std::string(v) + "' is not an integer");
  return *x;
}

int small_int(std::string_view key, std::string_view v) {
  const long long x = integer(key, v);
  if (x < -2'000'000'000LL || x > 2'000'000'000LL) throw ConfigError(std::string(key), "out of range");
  return static_cast<int>(x);
}

std::vector<double> numbers(std::string_view key, std::string_view v) {
  std::vector<double> out;
  if (text::trim(v).empty()) return out;
  for (auto f : text::split(v, ',')) out.push_back(number(key, f));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + text::format_exact(v[k]);
  return s;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"env", [](auto& c, auto, auto v) { c.env = std::string(v); }},
      {"seed",
       [](auto& c, auto k, auto v) {
         const long long s = integer(k, v);
         if (s < 0) throw ConfigError(std::string(k), "must be non-negative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"mode",
       [](auto& c, auto k, auto v) {
         if (v == "tabular") c.mode = Mode::Tabular;
         else if (v == "practical") c.mode = Mode::Practical;
         else throw ConfigError(std::string(k), "expected tabular or practical, got '" + std::string(v) + "'");
       }},
      {"spectrum",
       [](auto& c, auto, auto v) {
         c.spectrum.clear();
         for (auto f : text::split(v, ',')) c.spectrum.emplace_back(f);
       }},
      {"M", [](auto& c, auto k, auto v) { c.M = small_int(k, v); }},
      {"threshold", [](auto& c, auto k, auto v) { c.threshold = numbers(k, v); }},
      {"beta_values", [](auto& c, auto k, auto v) { c.beta_values = numbers(k, v); }},
      {"strategy", [](auto& c, auto, auto v) { c.strategy = std::string(v); }},
      {"eps0", [](auto& c, auto k, auto v) { c.eps0 = number(k, v); }},
      {"schedule",
       [](auto& c, auto k, auto v) {
         if (v == "robbins-monro" || v == "constant" || v == "auto") c.schedule = std::string(v);
         else throw ConfigError(std::string(k), "expected robbins-monro, constant or auto, got '" + std::string(v) + "'");
       }},
      {"lambda_max", [](auto& c, auto k, auto v) { c.lambda_max = number(k, v); }},
      {"g_min", [](auto& c, auto k, auto v) { c.g_min = number(k, v); }},
      {"g_max", [](auto& c, auto k, auto v) { c.g_max = number(k, v); }},
      {"K", [](auto& c, auto k, auto v) { c.K = number(k, v); }},
      {"epsilon", [](auto& c, auto k, auto v) { c.epsilon = number(k, v); }},
      {"sampler_lr", [](auto& c, auto k, auto v) { c.sampler_lr = number(k, v); }},
      {"sampler_sd", [](auto& c, auto k, auto v) { c.sampler_sd = number(k, v); }},
      {"epochs", [](auto& c, auto k, auto v) { c.epochs = small_int(k, v); }},
      {"episodes", [](auto& c, auto k, auto v) { c.episodes = small_int(k, v); }},
      {"updates", [](auto& c, auto k, auto v) { c.updates = small_int(k, v); }},
      {"buffer_capacity", [](auto& c, auto k, auto v) { c.buffer_capacity = small_int(k, v); }},
      {"critic_quantiles", [](auto& c, auto k, auto v) { c.critic_quantiles = small_int(k, v); }},
      {"critic_ensembles", [](auto& c, auto k, auto v) { c.critic_ensembles = small_int(k, v); }},
      {"target_quantiles", [](auto& c, auto k, auto v) { c.target_quantiles = small_int(k, v); }},
      {"td_lambda", [](auto& c, auto k, auto v) { c.td_lambda = number(k, v); }},
      {"critic_lr", [](auto& c, auto k, auto v) { c.critic_lr = number(k, v); }},
      {"max_augmented_states", [](auto& c, auto k, auto v) { c.max_augmented_states = integer(k, v); }},
      {"max_table_entries", [](auto& c, auto k, auto v) { c.max_table_entries = integer(k, v); }},
  };
  return table;
}

void require(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

ExperimentConfig parse_config(std::string_view input) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  int lineno = 0;
  for (auto raw : text::split(input, '\n')) {
    ++lineno;
    const auto hash = raw.find('#');
    const auto line = text::trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(std::string(key), "unknown key (line " + std::to_string(lineno) + ")");
    if (!seen.insert(std::string(key)).second)
      throw ConfigError(std::string(key), "repeated key (line " + std::to_string(lineno) + ")");
    it->second(cfg, key, value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  require(!c.env.empty(), "env", "must name an environment");
  require(!c.spectrum.empty(), "spectrum", "need at least one spectrum descriptor");
  for (const auto& s : c.spectrum) {
    try {
      (void)risk::Spectrum::parse(s);
    } catch (const std::exception& e) {
      throw ConfigError("spectrum", e.what());
    }
  }
  require(c.M >= 1 && c.M <= 64, "M", "must lie in [1, 64]");
  for (double d : c.threshold) require(d >= 0.0, "threshold", "thresholds must be non-negative");
  for (std::size_t k = 0; k < c.beta_values.size(); ++k) {
    require(c.beta_values[k] >= 0.0, "beta_values", "values must be non-negative");
    require(k == 0 || c.beta_values[k] > c.beta_values[k - 1], "beta_values", "values must be strictly increasing");
  }
  try {
    (void)inner::parse_strategy(c.strategy);
  } catch (const std::exception& e) {
    throw ConfigError("strategy", e.what());
  }
  require(c.eps0 >= 0.0, "eps0", "must be non-negative");
  require(c.lambda_max >= 0.0, "lambda_max", "must be non-negative");
  require(c.g_min > 0.0, "g_min", "must be positive");
  require(c.g_max >= c.g_min, "g_max", "must be at least g_min");
  require(c.K >= 0.0, "K", "must be non-negative");
  require(c.epsilon >= 0.0 && c.epsilon <= 1.0, "epsilon", "must lie in [0, 1]");
  require(c.sampler_lr >= 0.0, "sampler_lr", "must be non-negative");
  require(c.sampler_sd > 0.0, "sampler_sd", "must be positive");
  require(c.epochs >= 1, "epochs", "must be at least 1");
  require(c.episodes >= 1, "episodes", "must be at least 1");
  require(c.updates >= 0, "updates", "must be non-negative");
  require(c.buffer_capacity >= 1, "buffer_capacity", "must be at least 1");
  require(c.critic_quantiles >= 1, "critic_quantiles", "must be at least 1");
  require(c.critic_ensembles >= 1, "critic_ensembles", "must be at least 1");
  require(c.target_quantiles >= 1, "target_quantiles", "must be at least 1");
  require(c.td_lambda >= 0.0 && c.td_lambda <= 1.0, "td_lambda", "must lie in [0, 1]");
  require(c.critic_lr >= 0.0, "critic_lr", "must be non-negative");
  require(c.max_augmented_states >= 1, "max_augmented_states", "must be positive");
  require(c.max_table_entries >= 1, "max_table_entries", "must be positive");
}

bool decays(const ExperimentConfig& c) {
  if (c.schedule == "auto") return c.mode == Mode::Tabular;
  return c.schedule == "robbins-monro";
}

std::string to_string(Mode m) { return m == Mode::Tabular ? "tabular" : "practical"; }

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream out;
  auto num = [](double x) { return text::format_exact(x); };
  std::string spec;
  for (std::size_t k = 0; k < c.spectrum.size(); ++k) spec += (k ? ", " : "") + c.spectrum[k];
  out << "env = " << c.env << "\nseed = " << c.seed << "\nmode = " << to_string(c.mode) << "\nspectrum = " << spec
      << "\nM = " << c.M << "\nthreshold = " << join(c.threshold) << "\nbeta_values = " << join(c.beta_values)
      << "\nstrategy = " << c.strategy << "\neps0 = " << num(c.eps0)
      << "\nschedule = " << c.schedule << "\nlambda_max = " << num(c.lambda_max)
      << "\ng_min = " << num(c.g_min) << "\ng_max = " << num(c.g_max) << "\nK = " << num(c.K)
      << "\nepsilon = " << num(c.epsilon) << "\nsampler_lr = " << num(c.sampler_lr)
      << "\nsampler_sd = " << num(c.sampler_sd) << "\nepochs = " << c.epochs << "\nepisodes = " << c.episodes
      << "\nupdates = " << c.updates << "\nbuffer_capacity = " << c.buffer_capacity
      << "\ncritic_quantiles = " << c.critic_quantiles << "\ncritic_ensembles = " << c.critic_ensembles
      << "\ntarget_quantiles = " << c.target_quantiles << "\ntd_lambda = " << num(c.td_lambda)
      << "\ncritic_lr = " << num(c.critic_lr) << "\nmax_augmented_states = " << c.max_augmented_states
      << "\nmax_table_entries = " << c.max_table_entries << '\n';
  return out.str();
}

}  // namespace srcpo
