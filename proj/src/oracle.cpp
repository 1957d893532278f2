#include "srcpo/oracle.hpp"

#include "srcpo/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace srcpo::oracle {

using env::AugmentedIndex;
using env::PolicyTable;

namespace {

double hinge(const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, double x) {
  const auto& eta = disc.levels();
  double v = eta(0) * x;
  for (Eigen::Index i = 0; i < beta.size(); ++i) v += (eta(i + 1) - eta(i)) * std::max(0.0, x - beta(i));
  return v;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& theta) {
  Eigen::MatrixXd pi(theta.rows(), theta.cols());
  for (Eigen::Index s = 0; s < theta.rows(); ++s) {
    double z = 0.0;
    const double m = theta.row(s).maxCoeff();
    for (Eigen::Index a = 0; a < theta.cols(); ++a) z += std::exp(theta(s, a) - m);
    for (Eigen::Index a = 0; a < theta.cols(); ++a) pi(s, a) = std::exp(theta(s, a) - m) / z;
  }
  return pi;
}

Eigen::VectorXd forward_visits(const AugmentedIndex& index, const PolicyTable& pi) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(index.size());
  for (const auto& [id, w] : index.initial()) p(id) += w;
  for (int id = 0; id < index.size(); ++id) {
    if (index.is_terminal(id)) continue;
    for (int a = 0; a < index.num_actions(); ++a)
      for (const auto& s : index.successors(id, a)) p(s.next) += p(id) * pi(id, a) * s.probability;
  }
  return p;
}

double golden_min(const std::function<double(double)>& f, double lo, double hi, int iterations = 90) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int k = 0; k < iterations; ++k) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

// Minimises a convex f over [0, inf). Returns nullopt when f keeps decreasing
// past the search limit (dual unbounded below).
std::optional<double> convex_min_halfline(const std::function<double(double)>& f) {
  constexpr double kLimit = 1e9;
  double hi = 1.0;
  double f0 = f(0.0);
  double fh = f(hi);
  while (fh < f0 - 1e-12 * (1.0 + std::abs(f0))) {
    if (hi > kLimit) return std::nullopt;
    const double f2 = f(2.0 * hi);
    if (f2 >= fh) break;
    f0 = fh;
    fh = f2;
    hi *= 2.0;
  }
  return golden_min(f, 0.0, 2.0 * hi);
}

}  // namespace

double conjugate_point(const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, double y) {
  const double lo = (beta.size() ? beta.minCoeff() : 0.0) - 1.0;
  const double hi = (beta.size() ? beta.maxCoeff() : 0.0) + 1.0;
  constexpr int kGrid = 20001;
  auto obj = [&](double x) { return x * y - hinge(disc, beta, x); };
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < kGrid; ++k) {
    const double x = lo + (hi - lo) * k / (kGrid - 1);
    const double v = obj(x);
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  double a = lo + (hi - lo) * std::max(0, best - 1) / (kGrid - 1);
  double b = lo + (hi - lo) * std::min(kGrid - 1, best + 1) / (kGrid - 1);
  for (int it = 0; it < 200; ++it) {
    const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
    if (obj(m1) < obj(m2)) a = m1;
    else b = m2;
  }
  return std::max(best_val, obj(0.5 * (a + b)));
}

double conjugate_integral(const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta) {
  const auto& eta = disc.levels();
  const auto& alpha = disc.breakpoints();
  const int M = static_cast<int>(eta.size());
  double acc = 0.0;
  for (int k = 0; k < M; ++k) {
    const double left = k == 0 ? 0.0 : alpha(k - 1);
    const double right = k == M - 1 ? 1.0 : alpha(k);
    if (right > left) acc += (right - left) * conjugate_point(disc, beta, eta(k));
  }
  return acc;
}

double constraint_value_from_atoms(const AugmentedIndex& index, const Eigen::MatrixXd& theta,
                                   const risk::DiscretizedSpectrum& disc, const risk::BetaParam& beta, int channel) {
  const auto table = dist::exact_returns(index, softmax_rows(theta), channel, 0.0);
  return risk::sub_risk(disc, beta, dist::episode_return(index, table));
}

Eigen::MatrixXd fisher_matrix(const AugmentedIndex& index, const PolicyTable& pi) {
  const int n = index.size();
  const int A = index.num_actions();
  const Eigen::VectorXd visits = forward_visits(index, pi);
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n * A, n * A);
  for (int s = 0; s < n; ++s) {
    const double d = (1.0 - index.gamma()) * std::pow(index.gamma(), index.state(s).t) * visits(s);
    for (int a = 0; a < A; ++a)
      for (int b = 0; b < A; ++b)
        F(s * A + a, s * A + b) = d * ((a == b ? pi(s, a) : 0.0) - pi(s, a) * pi(s, b));
  }
  return F;
}

Eigen::MatrixXd natural_gradient(const AugmentedIndex& index, const PolicyTable& pi, const Eigen::MatrixXd& grad) {
  const int n = index.size();
  const int A = index.num_actions();
  const Eigen::MatrixXd F = fisher_matrix(index, pi);
  Eigen::VectorXd g(n * A);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < A; ++a) g(s * A + a) = grad(s, a);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(F);
  cod.setThreshold(1e-12);
  const Eigen::VectorXd x = cod.pseudoInverse() * g;
  Eigen::MatrixXd out(n, A);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < A; ++a) out(s, a) = x(s * A + a);
  return out;
}

Eigen::VectorXd monte_carlo_occupancy(const env::TabularCMDP& cmdp, const AugmentedIndex& index,
                                      const PolicyTable& pi, int episodes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(index.size());
  const double g = index.gamma();
  for (int k = 0; k < episodes; ++k) {
    const auto traj = env::rollout(cmdp, index, pi, rng);
    double w = 1.0 - g;
    for (const auto& step : traj.steps) {
      d(step.id) += w;
      w *= g;
    }
    d(traj.terminal_id) += w;
  }
  return d / episodes;
}

double expected_return_base(const env::TabularCMDP& cmdp, const Eigen::MatrixXd& base_pi, int channel) {
  const int S = cmdp.num_states;
  Eigen::VectorXd V = Eigen::VectorXd::Zero(S);
  for (int t = cmdp.horizon - 1; t >= 0; --t) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(S);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < cmdp.num_actions; ++a) {
        const auto& P = cmdp.transition[static_cast<std::size_t>(a)];
        const auto& X = channel < 0 ? cmdp.reward[static_cast<std::size_t>(a)]
                                    : cmdp.cost[static_cast<std::size_t>(channel)][static_cast<std::size_t>(a)];
        double q = 0.0;
        for (int sp = 0; sp < S; ++sp) q += P(s, sp) * (X(s, sp) + cmdp.gamma * V(sp));
        next(s) += base_pi(s, a) * q;
      }
    V = next;
  }
  return cmdp.initial.dot(V);
}

std::optional<InnerOptimum> inner_optimum(const AugmentedIndex& index,
                                          const std::vector<inner::ConstraintSpec>& constraints,
                                          const Eigen::VectorXd& threshold) {
  const int N = static_cast<int>(constraints.size());
  const int n = index.size();
  Eigen::VectorXd conj(N);
  for (int i = 0; i < N; ++i) {
    const auto& c = constraints[static_cast<std::size_t>(i)];
    const auto& eta = c.disc.levels();
    const auto& alpha = c.disc.breakpoints();
    double v = 0.0;
    for (Eigen::Index k = 0; k < c.beta.size(); ++k) v += (eta(k + 1) - eta(k)) * (1.0 - alpha(k)) * c.beta(k);
    conj(i) = v;
  }
  // Terminal penalties g_i(b e_i) are fixed per terminal id.
  Eigen::MatrixXd terminal_g = Eigen::MatrixXd::Zero(n, N);
  for (int id = 0; id < n; ++id) {
    if (!index.is_terminal(id)) continue;
    for (int i = 0; i < N; ++i)
      terminal_g(id, i) = hinge(constraints[static_cast<std::size_t>(i)].disc,
                                constraints[static_cast<std::size_t>(i)].beta, index.b(id) * index.state(id).e(i));
  }
  auto lagrangian = [&](const Eigen::VectorXd& lambda) {
    Eigen::VectorXd W(n);
    for (int id = n - 1; id >= 0; --id) {
      if (index.is_terminal(id)) {
        W(id) = -terminal_g.row(id).dot(lambda);
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < index.num_actions(); ++a) {
        double q = 0.0;
        for (const auto& s : index.successors(id, a)) q += s.probability * (index.b(id) * s.reward + W(s.next));
        best = std::max(best, q);
      }
      W(id) = best;
    }
    double v = 0.0;
    for (const auto& [id, p] : index.initial()) v += p * W(id);
    return v + lambda.dot(threshold - conj);
  };

  // Nested golden section: the partial minimum of a jointly convex function stays convex.
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(N);
  bool infeasible = false;
  std::function<double(int)> minimise = [&](int level) -> double {
    if (level == N) return lagrangian(lambda);
    auto f = [&](double x) {
      lambda(level) = x;
      return minimise(level + 1);
    };
    const auto best = convex_min_halfline(f);
    if (!best) {
      infeasible = true;
      lambda(level) = 0.0;
      return -std::numeric_limits<double>::infinity();
    }
    lambda(level) = *best;
    return minimise(level + 1);
  };
  const double value = minimise(0);
  if (infeasible || !std::isfinite(value)) return std::nullopt;
  return InnerOptimum{value, lambda};
}

GridOptimum exhaustive_grid(const AugmentedIndex& index, const std::vector<risk::DiscretizedSpectrum>& discs,
                            const std::vector<std::vector<risk::BetaParam>>& grid, const Eigen::VectorXd& threshold) {
  const std::size_t N = discs.size();
  if (grid.size() != N) throw std::invalid_argument("exhaustive_grid: one beta list per constraint");
  std::size_t total = 1;
  for (const auto& g : grid) total *= g.size();
  GridOptimum out;
  out.J_R = -std::numeric_limits<double>::infinity();
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::vector<inner::ConstraintSpec> cs;
    std::size_t rest = flat;
    for (std::size_t i = N; i-- > 0;) {
      const std::size_t k = rest % grid[i].size();
      rest /= grid[i].size();
      cs.insert(cs.begin(), inner::ConstraintSpec{discs[i], grid[i][k]});
    }
    const auto opt = inner_optimum(index, cs, threshold);
    out.per_point.push_back(opt ? std::optional<double>(opt->J_R) : std::nullopt);
    if (opt && opt->J_R > out.J_R + 1e-12) {
      out.J_R = opt->J_R;
      out.best = static_cast<int>(flat);
    }
  }
  return out;
}

std::vector<double> attainable_cost_returns(const AugmentedIndex& index, int channel) {
  std::vector<double> v;
  for (int id = 0; id < index.size(); ++id)
    if (index.is_terminal(id)) v.push_back(index.b(id) * index.state(id).e(channel));
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || x - out.back() > 1e-12) out.push_back(x);
  return out;
}

Eigen::VectorXd projected_gradient_dual(const Eigen::MatrixXd& H, const Eigen::VectorXd& c, int iterations) {
  const double L = std::max(1e-300, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(c.size());
  for (int k = 0; k < iterations; ++k) x = (x + (c - H * x) / L).cwiseMax(0.0);
  return x;
}

double truncated_normal_mean(double mu, double sd, double lo, double hi) {
  const double a = (lo - mu) / sd, b = (hi - mu) / sd;
  const double pdf_a = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
  const double pdf_b = std::exp(-0.5 * b * b) / std::sqrt(2.0 * M_PI);
  const double mass = 0.5 * (std::erfc(-b / std::sqrt(2.0)) - std::erfc(-a / std::sqrt(2.0)));
  return mu + sd * (pdf_a - pdf_b) / mass;
}

}  // namespace srcpo::oracle
