#include "srcpo/inner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace srcpo::inner {

using env::AugmentedIndex;
using env::PolicyTable;

SoftmaxPolicy SoftmaxPolicy::uniform(const AugmentedIndex& index) {
  return {Eigen::MatrixXd::Zero(index.size(), index.num_actions())};
}

PolicyTable SoftmaxPolicy::probabilities() const {
  PolicyTable pi(theta.rows(), theta.cols());
  for (Eigen::Index s = 0; s < theta.rows(); ++s) {
    const double m = theta.row(s).maxCoeff();
    pi.row(s) = (theta.row(s).array() - m).exp();
    pi.row(s) /= pi.row(s).sum();
  }
  return pi;
}

Evaluation evaluate(const AugmentedIndex& index, const PolicyTable& pi,
                    const std::vector<ConstraintSpec>& constraints) {
  Evaluation ev;
  ev.pi = pi;
  ev.d = env::occupancy(index, pi);
  ev.reward = dist::reward_values(index, pi);
  ev.J_R = ev.reward.J;
  ev.J_C.resize(static_cast<Eigen::Index>(constraints.size()));
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const risk::HingeFunction g(constraints[i].disc, constraints[i].beta);
    ev.risk.push_back(dist::risk_values(index, pi, g, static_cast<int>(i)));
    ev.J_C(static_cast<Eigen::Index>(i)) = ev.risk.back().J + g.conjugate_integral();
  }
  return ev;
}

double constraint_value(const AugmentedIndex& index, const PolicyTable& pi, const risk::DiscretizedSpectrum& disc,
                        const risk::BetaParam& beta, int channel) {
  return dist::sub_risk_of_policy(index, pi, disc, beta, channel);
}

GradientVector gradient_from_advantage(const Eigen::VectorXd& d, const PolicyTable& pi,
                                       const Eigen::MatrixXd& advantage, double gamma) {
  return (pi.array() * advantage.array()).colwise() * d.array() / (1.0 - gamma);
}

GradientVector policy_gradient_risk(const AugmentedIndex& index, const PolicyTable& pi,
                                    const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, int channel) {
  const risk::HingeFunction g(disc, beta);
  const auto v = dist::risk_values(index, pi, g, channel);
  return gradient_from_advantage(env::occupancy(index, pi), pi, v.A, index.gamma());
}

GradientVector policy_gradient_reward(const AugmentedIndex& index, const PolicyTable& pi) {
  const auto v = dist::reward_values(index, pi);
  return gradient_from_advantage(env::occupancy(index, pi), pi, v.A, index.gamma());
}

double fisher_quadratic(const Eigen::VectorXd& d, const PolicyTable& pi, const GradientVector& dir) {
  double acc = 0.0;
  for (Eigen::Index s = 0; s < pi.rows(); ++s) {
    if (d(s) == 0.0) continue;
    const double mean = pi.row(s).dot(dir.row(s));
    const double second = (pi.row(s).array() * dir.row(s).array().square()).sum();
    acc += d(s) * std::max(0.0, second - mean * mean);
  }
  return acc;
}

Strategy parse_strategy(std::string_view name) {
  if (name == "proposed") return Strategy::Proposed;
  if (name == "crpo") return Strategy::CRPO;
  if (name == "sdac-qp") return Strategy::SDACQP;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "' (expected proposed, crpo or sdac-qp)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Proposed: return "proposed";
    case Strategy::CRPO: return "crpo";
    case Strategy::SDACQP: return "sdac-qp";
  }
  return "?";
}

std::string to_string(Case c) { return c == Case::Satisfied ? "satisfied" : "violated"; }

GradientVector npg_direction(const Evaluation& ev, const WeightDecision& w, double gamma) {
  GradientVector dir = GradientVector::Zero(ev.pi.rows(), ev.pi.cols());
  const double reward_weight = w.kase == Case::Satisfied ? 1.0 : w.alpha * w.nu;
  const double cost_scale = w.kase == Case::Satisfied ? w.alpha : 1.0;
  if (reward_weight != 0.0) dir += reward_weight * ev.reward.A;
  for (Eigen::Index i = 0; i < w.lambda.size(); ++i)
    if (w.lambda(i) != 0.0) dir -= cost_scale * w.lambda(i) * ev.risk[static_cast<std::size_t>(i)].A;
  return dir / (1.0 - gamma);
}

std::optional<Eigen::VectorXd> solve_nonnegative_dual(const Eigen::MatrixXd& H, const Eigen::VectorXd& c) {
  const int n = static_cast<int>(c.size());
  if (H.rows() != n || H.cols() != n) throw std::invalid_argument("dual QP: shape mismatch");
  if (n > 16) throw std::invalid_argument("dual QP: active-set enumeration limited to 16 multipliers");
  const double scale = std::max({1e-300, H.cwiseAbs().maxCoeff(), c.cwiseAbs().maxCoeff()});
  const double tol = 1e-10 * scale;

  std::optional<Eigen::VectorXd> best;
  double best_obj = -std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> act;
    for (int k = 0; k < n; ++k)
      if (mask & (1u << k)) act.push_back(k);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (!act.empty()) {
      const int m = static_cast<int>(act.size());
      Eigen::MatrixXd Hs(m, m);
      Eigen::VectorXd cs(m);
      for (int a = 0; a < m; ++a) {
        cs(a) = c(act[static_cast<std::size_t>(a)]);
        for (int b = 0; b < m; ++b) Hs(a, b) = H(act[static_cast<std::size_t>(a)], act[static_cast<std::size_t>(b)]);
      }
      const Eigen::VectorXd xs = Hs.completeOrthogonalDecomposition().solve(cs);
      if ((Hs * xs - cs).cwiseAbs().maxCoeff() > tol * std::max(1.0, xs.cwiseAbs().maxCoeff())) continue;
      if ((xs.array() < -tol).any()) continue;
      for (int a = 0; a < m; ++a) x(act[static_cast<std::size_t>(a)]) = std::max(0.0, xs(a));
    }
    const Eigen::VectorXd grad = c - H * x;
    bool kkt = true;
    for (int k = 0; k < n; ++k)
      if (!(mask & (1u << k)) && grad(k) > tol) kkt = false;
    if (!kkt) continue;
    const double obj = -0.5 * x.dot(H * x) + c.dot(x);
    if (obj > best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

Eigen::MatrixXd advantage_gram(const Evaluation& ev, double gamma) {
  const int N = static_cast<int>(ev.risk.size());
  std::vector<const Eigen::MatrixXd*> adv{&ev.reward.A};
  for (const auto& r : ev.risk) adv.push_back(&r.A);
  Eigen::MatrixXd G(N + 1, N + 1);
  const Eigen::MatrixXd w = ev.pi.array().colwise() * ev.d.array();
  for (int j = 0; j <= N; ++j)
    for (int k = j; k <= N; ++k) {
      G(j, k) = (w.array() * adv[static_cast<std::size_t>(j)]->array() * adv[static_cast<std::size_t>(k)]->array()).sum() /
                ((1.0 - gamma) * (1.0 - gamma));
      G(k, j) = G(j, k);
    }
  return G;
}

namespace {

double clip_norm(const Evaluation& ev, const GradientVector& dir, const TrustRegion& tr) {
  const double q = fisher_quadratic(ev.d, ev.pi, dir);
  return std::clamp(std::sqrt(q), tr.g_min, tr.g_max);
}

int tightest(const Eigen::VectorXd& J_C, const Eigen::VectorXd& threshold) {
  int k = 0;
  for (int i = 1; i < J_C.size(); ++i)
    if (J_C(i) - threshold(i) > J_C(k) - threshold(k)) k = i;
  return k;
}

}  // namespace

WeightDecision weight_strategy_violated(const Evaluation& ev, const Eigen::VectorXd& threshold, double eps,
                                        double gamma, const TrustRegion& tr) {
  const int N = static_cast<int>(ev.J_C.size());
  WeightDecision w;
  w.kase = Case::Violated;
  w.lambda = Eigen::VectorXd::Zero(N);
  std::vector<int> viol;
  for (int i = 0; i < N; ++i)
    if (ev.J_C(i) > threshold(i)) viol.push_back(i);
  if (viol.empty()) return w;

  const Eigen::MatrixXd G = advantage_gram(ev, gamma);
  const int m = static_cast<int>(viol.size());
  Eigen::MatrixXd H(m, m);
  Eigen::VectorXd c(m);
  for (int a = 0; a < m; ++a) {
    c(a) = ev.J_C(viol[static_cast<std::size_t>(a)]) - threshold(viol[static_cast<std::size_t>(a)]);
    for (int b = 0; b < m; ++b) H(a, b) = G(viol[static_cast<std::size_t>(a)] + 1, viol[static_cast<std::size_t>(b)] + 1);
  }
  const auto x = solve_nonnegative_dual(H, c);
  if (x && x->sum() > 0.0) {
    for (int a = 0; a < m; ++a) w.lambda(viol[static_cast<std::size_t>(a)]) = (*x)(a) / x->sum();
  } else {
    w.fallback = true;
    w.lambda(tightest(ev.J_C, threshold)) = 1.0;
  }
  w.alpha = eps / clip_norm(ev, npg_direction(ev, w, gamma), tr);
  return w;
}

WeightDecision weight_strategy_proposed(const Evaluation& ev, const Eigen::VectorXd& threshold, double eps,
                                        double gamma, const TrustRegion& tr) {
  const int N = static_cast<int>(ev.J_C.size());
  WeightDecision w;
  w.kase = Case::Satisfied;
  w.lambda = Eigen::VectorXd::Zero(N);
  w.nu = 1.0;

  // Dual of  min g'Fg/2  s.t.  grad J_R' g >= e,  grad J_Ci' g + J_Ci <= d_i,
  // in multipliers x = (nu, lambda); sign flips turn every term into a Gram product.
  const Eigen::MatrixXd G = advantage_gram(ev, gamma);
  Eigen::VectorXd sign = -Eigen::VectorXd::Ones(N + 1);
  sign(0) = 1.0;
  const Eigen::MatrixXd H = sign.asDiagonal() * G * sign.asDiagonal();
  Eigen::VectorXd c(N + 1);
  c(0) = eps * std::sqrt(std::max(0.0, G(0, 0)));
  c.tail(N) = ev.J_C - threshold;

  const auto x = solve_nonnegative_dual(H, c);
  if (!x) {
    // No KKT point: the reward ascent condition cannot coexist with the
    // linearised constraints. Step away from the tightest constraint instead.
    w.fallback = true;
    w.nu = 0.0;
    w.kase = Case::Violated;
    w.lambda(tightest(ev.J_C, threshold)) = 1.0;
    w.alpha = eps / clip_norm(ev, npg_direction(ev, w, gamma), tr);
    return w;
  }
  const double nu = (*x)(0);
  Eigen::VectorXd k = Eigen::VectorXd::Zero(N);
  if (nu > 0.0 && eps > 0.0)
    for (int i = 0; i < N; ++i) k(i) = std::min((*x)(i + 1) / (nu * eps), tr.lambda_max);
  // Direction with alpha * lambda = eps * k, independent of the clip constant.
  WeightDecision probe = w;
  probe.alpha = eps;
  probe.lambda = k;
  const double C = clip_norm(ev, npg_direction(ev, probe, gamma), tr);
  w.nu = nu;
  w.alpha = eps / C;
  w.lambda = C * k;
  return w;
}

WeightDecision weight_strategy_crpo(const Eigen::VectorXd& J_C, const Eigen::VectorXd& threshold) {
  WeightDecision w;
  w.lambda = Eigen::VectorXd::Zero(J_C.size());
  bool violated = false;
  for (Eigen::Index i = 0; i < J_C.size(); ++i) violated = violated || J_C(i) > threshold(i);
  if (!violated) {
    w.kase = Case::Satisfied;
    w.nu = 1.0;
    return w;
  }
  w.kase = Case::Violated;
  w.lambda(tightest(J_C, threshold)) = 1.0;
  return w;
}

StepReport apply_update(const Evaluation& ev, SoftmaxPolicy& policy, const Eigen::VectorXd& threshold,
                        Strategy strategy, double eps, const TrustRegion& tr, double gamma) {
  if (ev.J_C.size() != threshold.size())
    throw std::invalid_argument("inner step: need one threshold per constraint");
  StepReport rep;
  rep.J_R = ev.J_R;
  rep.J_C = ev.J_C;

  bool satisfied = true;
  for (Eigen::Index i = 0; i < ev.J_C.size(); ++i) satisfied = satisfied && ev.J_C(i) <= threshold(i);

  WeightDecision w;
  if (!satisfied) {
    if (strategy == Strategy::CRPO) {
      w = weight_strategy_crpo(ev.J_C, threshold);
      w.alpha = eps / clip_norm(ev, npg_direction(ev, w, gamma), tr);
    } else {
      w = weight_strategy_violated(ev, threshold, eps, gamma, tr);
    }
  } else if (strategy == Strategy::Proposed) {
    w = weight_strategy_proposed(ev, threshold, eps, gamma, tr);
  } else {
    w = weight_strategy_crpo(ev.J_C, threshold);
    w.alpha = eps / clip_norm(ev, npg_direction(ev, w, gamma), tr);
  }
  rep.weights = w;

  const GradientVector dir = npg_direction(ev, w, gamma);
  if (fisher_quadratic(ev.d, ev.pi, dir) < 1e-18 || w.alpha == 0.0) {
    rep.skipped = true;
    return rep;
  }
  policy.theta += w.alpha * dir;
  return rep;
}

StepReport inner_step(const AugmentedIndex& index, SoftmaxPolicy& policy,
                      const std::vector<ConstraintSpec>& constraints, const Eigen::VectorXd& threshold,
                      Strategy strategy, double eps, const TrustRegion& tr) {
  if (static_cast<Eigen::Index>(constraints.size()) != threshold.size())
    throw std::invalid_argument("inner_step: need one threshold per constraint");
  const Evaluation ev = evaluate(index, policy.probabilities(), constraints);
  return apply_update(ev, policy, threshold, strategy, eps, tr, index.gamma());
}

double trust_region_size(double eps0, int t, bool decay) {
  return decay ? eps0 / std::sqrt(static_cast<double>(t) + 1.0) : eps0;
}

}  // namespace srcpo::inner
