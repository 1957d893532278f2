#pragma once

#include "srcpo/risk.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace srcpo::dist {

/// Tabular quantile critic: L sorted atoms per (ensemble, channel, augmented id,
/// action, beta-grid id).
class QuantileCritic {
 public:
  QuantileCritic() = default;
  QuantileCritic(int num_channels, int num_ids, int num_actions, int num_grid, int num_quantiles = 25,
                 int num_ensembles = 2);

  int num_channels() const { return channels_; }
  int num_ids() const { return ids_; }
  int num_actions() const { return actions_; }
  int num_grid() const { return grid_; }
  int num_quantiles() const { return L_; }
  int num_ensembles() const { return E_; }

  std::span<const double> atoms(int ensemble, int channel, int id, int a, int grid) const;
  /// Ensemble mean of the sorted atoms.
  Eigen::VectorXd quantiles(int channel, int id, int a, int grid) const;
  risk::ReturnDistribution distribution(int channel, int id, int a, int grid) const;

  /// Raw storage, for checkpoints.
  std::vector<double>& data() { return theta_; }
  const std::vector<double>& data() const { return theta_; }

  std::span<double> mutable_atoms(int ensemble, int channel, int id, int a, int grid);

 private:
  std::size_t offset(int ensemble, int channel, int id, int a, int grid) const;

  int channels_ = 0, ids_ = 0, actions_ = 0, grid_ = 0, L_ = 0, E_ = 0;
  std::vector<double> theta_;
};

struct QuantileSample {
  int ensemble;
  int channel;
  int id;
  int action;
  int grid;
  Eigen::VectorXd targets;
};

/// One pinball-loss subgradient step per atom, theta_l += lr * mean_j(tau_l - 1{z_j < theta_l})
/// with tau_l = (2l - 1) / (2L), followed by sorting.
void quantile_regression_update(QuantileCritic& critic, std::span<const QuantileSample> batch, double lr);

/// Geometric TD(lambda) mixture of n-step bootstrapped targets for every step of
/// one trajectory channel. `bootstrap[k]` is the return law of the state reached
/// after step k; the last state is terminal and ignored. Each mixture is
/// projected to `num_targets` midpoint quantiles.
std::vector<Eigen::VectorXd> td_lambda_targets(std::span<const double> costs,
                                               std::span<const risk::ReturnDistribution> bootstrap,
                                               double lambda, double gamma, int num_targets = 50);

}  // namespace srcpo::dist
