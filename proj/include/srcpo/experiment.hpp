#pragma once

#include "srcpo/config.hpp"
#include "srcpo/critic.hpp"
#include "srcpo/env.hpp"
#include "srcpo/inner.hpp"
#include "srcpo/outer.hpp"
#include "srcpo/risk.hpp"

#include <Eigen/Dense>

#include <deque>
#include <iosfwd>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace srcpo {

/// A grid id paired with one episode.
struct ReplayEntry {
  int grid = 0;
  env::Trajectory trajectory;
};

/// FIFO over stored environment steps; whole episodes are evicted.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(long long capacity_steps = 100000);

  void push(ReplayEntry entry);
  const ReplayEntry& sample(std::mt19937_64& rng) const;

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  long long steps() const { return steps_; }
  long long capacity() const { return capacity_; }
  const std::deque<ReplayEntry>& entries() const { return entries_; }

 private:
  long long capacity_;
  long long steps_ = 0;
  std::deque<ReplayEntry> entries_;
};

struct CriticSettings {
  double td_lambda = 0.97;
  double gamma = 0.9;
  int target_quantiles = 50;
  double lr = 0.05;
};

/// One quantile-regression pass of ensemble member `ensemble` over every step of
/// `traj`, for all cost channels and the reward channel (last critic channel).
/// Bootstrap laws mix the member's atoms under the softmax of `theta`.
void train_critic_on_episode(dist::QuantileCritic& critic, const env::Trajectory& traj, const Eigen::MatrixXd& theta,
                             int grid, int ensemble, const CriticSettings& settings);

/// One row of metrics.csv.
struct MetricsRecord {
  int epoch = 0;
  long long env_steps = 0;
  double eps = 0.0;
  double entropy = 0.0;
  int modal = 0;                            // grid id
  std::vector<risk::BetaParam> modal_beta;
  double modal_J_R = 0.0;                   // exact, modal policy
  Eigen::VectorXd modal_J_C;
  int satisfied = 0;
  int violated = 0;
  int fallback = 0;
  int skipped = 0;
  double lambda_mean = 0.0;
  double lambda_max = 0.0;
  double nu_mean = 0.0;
  double alpha_mean = 0.0;
  double rollout_reward = 0.0;              // practical: mean discounted episode return
  Eigen::VectorXd rollout_cost;
  std::vector<double> point_J_R;            // per grid id, as seen by the update
  std::vector<Eigen::VectorXd> point_J_C;
  double wall_seconds = 0.0;                // summary only, never in the CSV
};

/// Fixed column order; per-point columns are included only when the grid has at most this many points.
inline constexpr int kMaxPointColumns = 64;

/// Thrown when the grid x augmented-state table would exceed the configured budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable, truncated or incompatible checkpoint file.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tabular and practical SRCPO, advanced one epoch at a time.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const env::TabularCMDP& cmdp() const { return cmdp_; }
  const env::AugmentedIndex& index() const { return *index_; }
  const outer::BetaGrid& grid() const { return grid_; }
  const std::vector<risk::DiscretizedSpectrum>& discs() const { return discs_; }
  const Eigen::VectorXd& threshold() const { return threshold_; }
  std::vector<inner::ConstraintSpec> constraints(int point) const;

  int epoch() const { return epoch_; }
  bool done() const { return epoch_ >= cfg_.epochs; }
  long long env_steps() const { return env_steps_; }

  /// Caps the per-grid-point worker threads; results do not depend on it.
  void set_threads(int n) { threads_ = n < 1 ? 1 : n; }
  /// Extends or shortens the run; used when resuming.
  void set_epochs(int n) { cfg_.epochs = n; }

  MetricsRecord run_epoch();

  /// Modal grid point of the current sampler.
  int modal_point() const;
  std::vector<inner::SoftmaxPolicy>& policies() { return policies_; }
  const std::vector<inner::SoftmaxPolicy>& policies() const { return policies_; }
  inner::Evaluation evaluate_point(int point) const;

  outer::FiniteSampler& finite_sampler() { return finite_; }
  const outer::FiniteSampler& finite_sampler() const { return finite_; }
  outer::StickSampler& stick_sampler() { return stick_; }
  const outer::StickSampler& stick_sampler() const { return stick_; }
  const dist::QuantileCritic& critic() const { return critic_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  std::string csv_header() const;
  std::string csv_row(const MetricsRecord& r) const;

  /// Single binary file: magic, version, config text, then all mutable state.
  void save(const std::string& path) const;
  static Experiment load(const std::string& path);

  /// H-step truncation error gamma^H max(|r|, C) / (1 - gamma).
  double truncation_bound() const;

 private:
  MetricsRecord tabular_epoch();
  MetricsRecord practical_epoch();
  void summarize(MetricsRecord& r, const std::vector<inner::StepReport>& reports) const;
  inner::Evaluation critic_evaluation(int point, const Eigen::VectorXd& d, const std::vector<risk::BetaParam>& betas) const;

  ExperimentConfig cfg_;
  env::TabularCMDP cmdp_;
  std::unique_ptr<env::AugmentedIndex> index_;
  std::vector<risk::DiscretizedSpectrum> discs_;
  outer::BetaGrid grid_;
  Eigen::VectorXd threshold_;
  inner::Strategy strategy_;
  inner::TrustRegion tr_;

  int epoch_ = 0;
  long long env_steps_ = 0;
  int threads_ = 1;
  std::mt19937_64 rng_;
  std::vector<inner::SoftmaxPolicy> policies_;
  outer::FiniteSampler finite_;
  outer::StickSampler stick_;
  dist::QuantileCritic critic_;
  ReplayBuffer buffer_;
};

/// Grid values used when the config leaves them empty: 5 evenly spaced on [0, C_max(1 - gamma^H)/(1 - gamma)].
std::vector<double> default_beta_values(const env::TabularCMDP& cmdp);

/// Runs to completion, writing one CSV row per epoch to `csv` (header first
/// when the experiment is at epoch 0) and an epoch line to `log` every
/// `log_every` epochs (0 disables).
std::vector<MetricsRecord> run(Experiment& ex, std::ostream* csv, std::ostream* log, int log_every);

/// Thread count from an explicit value, else SRCPO_THREADS, else 1.
int resolve_threads(int requested);

}  // namespace srcpo
