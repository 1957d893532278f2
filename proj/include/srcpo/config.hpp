#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace srcpo {

/// Rejected configuration; `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Mode { Tabular, Practical };

struct ExperimentConfig {
  std::string env = "hazard-chain(5)";
  std::uint64_t seed = 0;
  Mode mode = Mode::Tabular;

  std::vector<std::string> spectrum{"cvar:0.75"};  // one entry, or one per constraint
  int M = 2;
  std::vector<double> threshold;                   // empty: use the environment's
  std::vector<double> beta_values;                 // grid values; empty: 5 evenly spaced on [0, upper]

  std::string strategy = "proposed";
  double eps0 = 0.001;
  std::string schedule = "auto";                   // robbins-monro, constant, or auto (by mode)
  double lambda_max = 100.0;
  double g_min = 0.1;
  double g_max = 10.0;

  double K = 10.0;
  double epsilon = 0.0;                            // epsilon-greedy uniform beta
  double sampler_lr = 1e-3;
  double sampler_sd = 0.05;

  int epochs = 100;
  int episodes = 10;                               // per epoch (practical)
  int updates = 10;                                // per epoch (practical)
  int buffer_capacity = 100000;                    // environment steps
  int critic_quantiles = 25;
  int critic_ensembles = 2;
  int target_quantiles = 50;
  double td_lambda = 0.97;
  double critic_lr = 0.05;

  long long max_augmented_states = 2'000'000;
  long long max_table_entries = 50'000'000;        // grid points x augmented states x actions
};

/// Flat `key = value` text; '#' starts a comment. Unknown or repeated keys are errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
/// Range checks that do not need the environment. Throws ConfigError.
void validate(const ExperimentConfig& cfg);
/// eps0 / sqrt(t + 1) decay: explicit schedule, or robbins-monro in tabular mode.
bool decays(const ExperimentConfig& cfg);
/// Canonical text form; parse_config(serialize(c)) reproduces c.
std::string serialize(const ExperimentConfig& cfg);

std::string to_string(Mode m);

}  // namespace srcpo
