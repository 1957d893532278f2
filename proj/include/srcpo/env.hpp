#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace srcpo::env {

/// Finite-horizon constrained MDP with transition-dependent rewards and costs.
struct TabularCMDP {
  int num_states = 0;
  int num_actions = 0;
  double gamma = 0.9;
  int horizon = 1;
  Eigen::VectorXd initial;                          // rho over states
  std::vector<Eigen::MatrixXd> transition;          // [a](s, s')
  std::vector<Eigen::MatrixXd> reward;              // [a](s, s')
  std::vector<std::vector<Eigen::MatrixXd>> cost;   // [i][a](s, s')
  Eigen::VectorXd threshold;                        // d_i

  int num_constraints() const { return static_cast<int>(cost.size()); }
  double reward_max() const;
  double cost_max() const;
  /// C_max (1 - gamma^H) / (1 - gamma): the largest attainable discounted cost return.
  double cost_return_max() const;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// (s, e, b) with b = gamma^t; `t` is kept as an integer so levels stay exact.
struct AugmentedState {
  int s = 0;
  Eigen::VectorXd e;
  int t = 0;

  double b(double gamma) const { return std::pow(gamma, t); }
};

AugmentedState augment_step(const AugmentedState& current, int next_state,
                            const Eigen::VectorXd& costs, double gamma);

struct Successor {
  int next;           // augmented id
  int next_state;     // base state
  double probability;
  double reward;
  Eigen::VectorXd costs;
};

/// Dense ids for every augmented state reachable within the horizon, in BFS
/// (time-level) order. States at t = H are terminal and carry no successors.
class AugmentedIndex {
 public:
  static constexpr std::size_t kDefaultCap = 2'000'000;

  explicit AugmentedIndex(const TabularCMDP& cmdp, std::size_t cap = kDefaultCap);

  int size() const { return static_cast<int>(states_.size()); }
  int num_actions() const { return num_actions_; }
  int horizon() const { return horizon_; }
  double gamma() const { return gamma_; }

  const AugmentedState& state(int id) const { return states_[static_cast<std::size_t>(id)]; }
  double b(int id) const { return discount_[static_cast<std::size_t>(state(id).t)]; }
  bool is_terminal(int id) const { return state(id).t == horizon_; }
  std::optional<int> find(const AugmentedState& s) const;

  /// Ids of level t occupy [level_begin(t), level_begin(t + 1)).
  int level_begin(int t) const { return level_start_[static_cast<std::size_t>(t)]; }
  std::span<const Successor> successors(int id, int a) const;

  /// (id, probability) pairs of the t = 0 level.
  const std::vector<std::pair<int, double>>& initial() const { return initial_; }

 private:
  struct Key {
    int t;
    int s;
    std::vector<std::int64_t> e;
    auto operator<=>(const Key&) const = default;
  };
  Key key_of(const AugmentedState& s) const;

  int num_actions_;
  int horizon_;
  double gamma_;
  std::vector<double> discount_;
  std::vector<AugmentedState> states_;
  std::vector<int> level_start_;
  std::vector<std::vector<Successor>> succ_;  // [id * A + a]
  std::vector<std::pair<int, double>> initial_;
  std::vector<std::pair<Key, int>> lookup_;   // sorted
};

/// Row-stochastic action probabilities, one row per augmented id.
using PolicyTable = Eigen::MatrixXd;

PolicyTable uniform_policy(const AugmentedIndex& index);

struct Step {
  int id;
  AugmentedState state;
  int action;
  double reward;
  Eigen::VectorXd costs;
};

/// H steps plus the terminal augmented id reached after the last one.
struct Trajectory {
  std::vector<Step> steps;
  int terminal_id = -1;
};

Trajectory rollout(const TabularCMDP& cmdp, const AugmentedIndex& index, const PolicyTable& policy,
                   std::mt19937_64& rng);
Trajectory rollout(const TabularCMDP& cmdp, const AugmentedIndex& index, const PolicyTable& policy,
                   std::uint64_t seed);

/// Marginal P(s_t = id) for every id (each id belongs to exactly one t).
Eigen::VectorXd visitation(const AugmentedIndex& index, const PolicyTable& policy);

/// (1 - gamma) gamma^t P(s_t = id), unnormalised: the entries sum to 1 - gamma^{H+1}.
Eigen::VectorXd occupancy(const AugmentedIndex& index, const PolicyTable& policy);

/// occupancy rescaled to a probability vector.
Eigen::VectorXd normalized_occupancy(const AugmentedIndex& index, const PolicyTable& policy);

/// Built-in environments: `random(S,A,N)`, `hazard-chain(L)`, `two-hazard-grid`.
TabularCMDP make_env(std::string_view name, std::uint64_t seed);

TabularCMDP random_cmdp(int num_states, int num_actions, int num_constraints, std::uint64_t seed,
                        int horizon = 6, double gamma = 0.9);
TabularCMDP hazard_chain(int length);
TabularCMDP two_hazard_grid();

/// Structured text form terminated by an FNV-1a checksum line.
std::string serialize(const TabularCMDP& cmdp);
TabularCMDP deserialize(std::string_view text);

}  // namespace srcpo::env
