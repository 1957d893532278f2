#include "srcpo/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace srcpo::dist {

using env::AugmentedIndex;
using env::PolicyTable;
using risk::Atom;
using risk::ReturnDistribution;

namespace {

void check_shape(const AugmentedIndex& index, const PolicyTable& policy, const char* who) {
  if (policy.rows() != index.size() || policy.cols() != index.num_actions())
    throw std::invalid_argument(std::string(who) + ": policy table shape does not match the augmented index");
}

double step_value(const env::Successor& s, int channel) {
  return channel == kReward ? s.reward : s.costs(channel);
}

void check_channel(const AugmentedIndex& index, int channel) {
  if (index.size() == 0) throw std::invalid_argument("empty augmented index");
  const int N = static_cast<int>(index.state(0).e.size());
  if (channel != kReward && (channel < 0 || channel >= N))
    throw std::invalid_argument("channel " + std::to_string(channel) + " out of range");
}

// Normalise probabilities that drift from one by round-off before handing atoms over.
ReturnDistribution make_dist(std::vector<Atom> atoms, double tol) {
  double total = 0.0;
  for (const auto& a : atoms) total += a.probability;
  for (auto& a : atoms) a.probability /= total;
  return ReturnDistribution(std::move(atoms), tol);
}

}  // namespace

ReturnTable exact_returns(const AugmentedIndex& index, const PolicyTable& policy, int channel,
                          double merge_tol) {
  check_shape(index, policy, "exact_returns");
  check_channel(index, channel);
  const int n = index.size();
  const int A = index.num_actions();
  const double gamma = index.gamma();

  ReturnTable table;
  table.channel = channel;
  table.num_actions = A;
  table.state.resize(static_cast<std::size_t>(n));
  table.action.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(A));

  for (int id = n - 1; id >= 0; --id) {
    if (index.is_terminal(id)) {
      table.state[static_cast<std::size_t>(id)] = ReturnDistribution::point(0.0);
      for (int a = 0; a < A; ++a)
        table.action[static_cast<std::size_t>(id * A + a)] = ReturnDistribution::point(0.0);
      continue;
    }
    std::vector<Atom> mix;
    for (int a = 0; a < A; ++a) {
      std::vector<Atom> atoms;
      for (const auto& s : index.successors(id, a)) {
        const double c = step_value(s, channel);
        for (const auto& z : table.state[static_cast<std::size_t>(s.next)].atoms())
          atoms.push_back({c + gamma * z.value, s.probability * z.probability});
      }
      auto q = make_dist(std::move(atoms), merge_tol);
      const double pa = policy(id, a);
      if (pa > 0.0)
        for (const auto& z : q.atoms()) mix.push_back({z.value, pa * z.probability});
      table.action[static_cast<std::size_t>(id * A + a)] = std::move(q);
    }
    table.state[static_cast<std::size_t>(id)] = make_dist(std::move(mix), merge_tol);
  }
  return table;
}

ReturnDistribution episode_return(const AugmentedIndex& index, const ReturnTable& returns) {
  std::vector<Atom> atoms;
  for (const auto& [id, p] : index.initial())
    for (const auto& z : returns.state[static_cast<std::size_t>(id)].atoms())
      atoms.push_back({z.value, p * z.probability});
  return make_dist(std::move(atoms), 0.0);
}

namespace {

double expect_g(const AugmentedIndex& index, const ReturnTable& returns, const risk::HingeFunction& g,
                int id, const ReturnDistribution& dist) {
  if (returns.channel == kReward) throw std::invalid_argument("risk values need a cost channel");
  const auto& st = index.state(id);
  const double b = index.b(id);
  const double e = st.e(returns.channel);
  return dist.expect([&](double z) { return g(b * (e + z)); });
}

}  // namespace

double risk_value_V(const AugmentedIndex& index, const ReturnTable& returns, const risk::HingeFunction& g,
                    int id) {
  return expect_g(index, returns, g, id, returns.state[static_cast<std::size_t>(id)]);
}

double risk_value_Q(const AugmentedIndex& index, const ReturnTable& returns, const risk::HingeFunction& g,
                    int id, int a) {
  return expect_g(index, returns, g, id, returns.at(id, a));
}

double risk_advantage(const AugmentedIndex& index, const ReturnTable& returns, const risk::HingeFunction& g,
                      const PolicyTable& policy, int id, int a) {
  double v = 0.0;
  for (int k = 0; k < index.num_actions(); ++k) v += policy(id, k) * risk_value_Q(index, returns, g, id, k);
  return (risk_value_Q(index, returns, g, id, a) - v) / index.b(id);
}

ValueTables risk_values(const AugmentedIndex& index, const PolicyTable& policy, const risk::HingeFunction& g,
                        int channel) {
  check_shape(index, policy, "risk_values");
  check_channel(index, channel);
  if (channel == kReward) throw std::invalid_argument("risk_values: needs a cost channel");
  const int n = index.size();
  const int A = index.num_actions();
  ValueTables out{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, A), Eigen::MatrixXd::Zero(n, A), 0.0};
  for (int id = n - 1; id >= 0; --id) {
    if (index.is_terminal(id)) {
      // No future cost: G = b e exactly.
      const double v = g(index.b(id) * index.state(id).e(channel));
      out.V(id) = v;
      out.Q.row(id).setConstant(v);
      continue;
    }
    for (int a = 0; a < A; ++a) {
      double q = 0.0;
      for (const auto& s : index.successors(id, a)) q += s.probability * out.V(s.next);
      out.Q(id, a) = q;
    }
    out.V(id) = policy.row(id).dot(out.Q.row(id));
    out.A.row(id) = (out.Q.row(id).array() - out.V(id)) / index.b(id);
  }
  for (const auto& [id, p] : index.initial()) out.J += p * out.V(id);
  return out;
}

namespace {

ValueTables additive_values(const AugmentedIndex& index, const PolicyTable& policy, int channel) {
  const int n = index.size();
  const int A = index.num_actions();
  const double gamma = index.gamma();
  ValueTables out{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, A), Eigen::MatrixXd::Zero(n, A), 0.0};
  for (int id = n - 1; id >= 0; --id) {
    if (index.is_terminal(id)) continue;
    for (int a = 0; a < A; ++a) {
      double q = 0.0;
      for (const auto& s : index.successors(id, a))
        q += s.probability * (step_value(s, channel) + gamma * out.V(s.next));
      out.Q(id, a) = q;
    }
    out.V(id) = policy.row(id).dot(out.Q.row(id));
    out.A.row(id) = out.Q.row(id).array() - out.V(id);
  }
  for (const auto& [id, p] : index.initial()) out.J += p * out.V(id);
  return out;
}

}  // namespace

ValueTables reward_values(const AugmentedIndex& index, const PolicyTable& policy) {
  check_shape(index, policy, "reward_values");
  return additive_values(index, policy, kReward);
}

ValueTables cost_values(const AugmentedIndex& index, const PolicyTable& policy, int channel) {
  check_shape(index, policy, "cost_values");
  check_channel(index, channel);
  if (channel == kReward) throw std::invalid_argument("cost_values: needs a cost channel");
  return additive_values(index, policy, channel);
}

double sub_risk_of_policy(const AugmentedIndex& index, const PolicyTable& policy,
                          const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, int channel) {
  const risk::HingeFunction g(disc, beta);
  return risk_values(index, policy, g, channel).J + g.conjugate_integral();
}

Eigen::VectorXd project_quantiles(const ReturnDistribution& dist, int n) {
  if (n < 1) throw std::invalid_argument("project_quantiles: need at least one quantile");
  Eigen::VectorXd q(n);
  for (int k = 0; k < n; ++k) q(k) = dist.quantile((2.0 * k + 1.0) / (2.0 * n));
  return q;
}

double wasserstein1(const ReturnDistribution& a, const ReturnDistribution& b) {
  // Both quantile functions are step functions; walk their merged breakpoints.
  auto edges = [](std::span<const Atom> atoms) {
    std::vector<double> f;
    double c = 0.0;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      c += atoms[k].probability;
      f.push_back(k + 1 == atoms.size() ? 1.0 : std::min(c, 1.0));
    }
    return f;
  };
  const auto xa = a.atoms();
  const auto xb = b.atoms();
  const auto fa = edges(xa);
  const auto fb = edges(xb);
  std::size_t i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < fa.size() && j < fb.size()) {
    const double next = std::min(fa[i], fb[j]);
    acc += (next - u) * std::abs(xa[i].value - xb[j].value);
    u = next;
    if (fa[i] <= next) ++i;
    if (fb[j] <= next) ++j;
  }
  return acc;
}

}  // namespace srcpo::dist
