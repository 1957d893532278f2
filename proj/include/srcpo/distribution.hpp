#pragma once

#include "srcpo/env.hpp"
#include "srcpo/risk.hpp"

#include <Eigen/Dense>

#include <vector>

namespace srcpo::dist {

/// Channel selector: kReward or a cost channel index in [0, N).
inline constexpr int kReward = -1;

/// Future discounted return from every augmented state (and state-action pair)
/// of one channel. For costs this is Y in G = b (e + Y).
struct ReturnTable {
  int channel = kReward;
  int num_actions = 0;
  std::vector<risk::ReturnDistribution> state;   // [id]
  std::vector<risk::ReturnDistribution> action;  // [id * A + a]

  const risk::ReturnDistribution& at(int id, int a) const {
    return action[static_cast<std::size_t>(id) * static_cast<std::size_t>(num_actions) +
                  static_cast<std::size_t>(a)];
  }
};

/// Backward DP over the augmented chain. Atoms closer than `merge_tol` are fused.
ReturnTable exact_returns(const env::AugmentedIndex& index, const env::PolicyTable& policy,
                          int channel, double merge_tol = 1e-9);

/// Law of the full discounted return G from the initial distribution.
risk::ReturnDistribution episode_return(const env::AugmentedIndex& index, const ReturnTable& returns);

/// sum_z g(b (e_i + z)) p(z) over the atoms of the stored return.
double risk_value_V(const env::AugmentedIndex& index, const ReturnTable& returns,
                    const risk::HingeFunction& g, int id);
double risk_value_Q(const env::AugmentedIndex& index, const ReturnTable& returns,
                    const risk::HingeFunction& g, int id, int a);
double risk_advantage(const env::AugmentedIndex& index, const ReturnTable& returns,
                      const risk::HingeFunction& g, const env::PolicyTable& policy, int id, int a);

/// V, Q and advantage tables for one channel, computed by the Bellman recursion
/// instead of atom lists. Risk channels use A = (Q - V) / b, the reward channel
/// the plain Q - V.
struct ValueTables {
  Eigen::VectorXd V;  // [id]
  Eigen::MatrixXd Q;  // [id, a]
  Eigen::MatrixXd A;  // [id, a]
  double J = 0.0;     // E_rho[V(s0)]
};

ValueTables risk_values(const env::AugmentedIndex& index, const env::PolicyTable& policy,
                        const risk::HingeFunction& g, int channel);
ValueTables reward_values(const env::AugmentedIndex& index, const env::PolicyTable& policy);
/// Plain expected discounted cost of one channel.
ValueTables cost_values(const env::AugmentedIndex& index, const env::PolicyTable& policy, int channel);

/// E_rho[V_g(s0)] + conjugate_integral(disc, beta).
double sub_risk_of_policy(const env::AugmentedIndex& index, const env::PolicyTable& policy,
                          const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta,
                          int channel);

/// Left-continuous quantiles of `dist` at the midpoints (2k - 1) / (2n).
Eigen::VectorXd project_quantiles(const risk::ReturnDistribution& dist, int n);

/// Integral of |F^{-1} - G^{-1}| over [0, 1].
double wasserstein1(const risk::ReturnDistribution& a, const risk::ReturnDistribution& b);

}  // namespace srcpo::dist
