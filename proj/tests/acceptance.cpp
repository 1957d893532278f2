// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include "srcpo/config.hpp"
#include "srcpo/distribution.hpp"
#include "srcpo/env.hpp"
#include "srcpo/experiment.hpp"
#include "srcpo/inner.hpp"
#include "srcpo/oracle.hpp"
#include "srcpo/outer.hpp"
#include "srcpo/risk.hpp"
#include "srcpo/text.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace srcpo;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs <= budget_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s %-24s %s [%.2fs / %.0fs%s]\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
              budget_seconds, in_time ? "" : " over budget");
  std::fflush(stdout);
}

std::string num(double v) { return text::format12(v); }

risk::ReturnDistribution random_distribution(std::mt19937_64& rng, double lo, double hi, int max_atoms = 8) {
  std::uniform_int_distribution<int> count(1, max_atoms);
  std::uniform_real_distribution<double> value(lo, hi), weight(0.05, 1.0);
  const int n = count(rng);
  std::vector<risk::Atom> atoms;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    atoms.push_back({value(rng), weight(rng)});
    total += atoms.back().probability;
  }
  for (auto& a : atoms) a.probability /= total;
  return risk::ReturnDistribution(std::move(atoms));
}

risk::BetaParam random_beta(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = u(rng);
  std::sort(v.begin(), v.end());
  return Eigen::Map<risk::BetaParam>(v.data(), n);
}

risk::DiscretizedSpectrum random_disc(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> level(0.05, 0.9);
  std::uniform_int_distribution<int> family(0, 2), levels(2, 5);
  const double a = level(rng);
  switch (family(rng)) {
    case 0: return risk::discretize(risk::Spectrum::cvar(a), 2);
    case 1: return risk::discretize(risk::Spectrum::pow(a), levels(rng));
    default: return risk::discretize(risk::Spectrum::wang(a), levels(rng));
  }
}

env::PolicyTable random_policy(std::mt19937_64& rng, const env::AugmentedIndex& index, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  inner::SoftmaxPolicy p{Eigen::MatrixXd(index.size(), index.num_actions())};
  for (Eigen::Index k = 0; k < p.theta.size(); ++k) p.theta.data()[k] = normal(rng);
  return p.probabilities();
}

ExperimentConfig quickstart() {
  return load_config(SRCPO_SOURCE_DIR "/configs/quickstart.cfg");
}

// Best beta (scalar, CVaR) for the hazard chain: the attainable cost return
// whose inner optimum is largest. That optimum's policy has this beta as its
// minimizing breakpoint.
struct HazardOptimum {
  env::TabularCMDP cmdp;
  std::unique_ptr<env::AugmentedIndex> index;
  risk::DiscretizedSpectrum disc;
  double beta = 0.0;
  double J_R = -1e300;
};

HazardOptimum hazard_optimum() {
  HazardOptimum h;
  h.cmdp = env::make_env("hazard-chain(5)", 0);
  h.index = std::make_unique<env::AugmentedIndex>(h.cmdp);
  h.disc = risk::discretize(risk::Spectrum::cvar(0.75), 2);
  for (double b : oracle::attainable_cost_returns(*h.index, 0)) {
    const auto opt = oracle::inner_optimum(*h.index, {{h.disc, risk::BetaParam::Constant(1, b)}}, h.cmdp.threshold);
    if (opt && opt->J_R > h.J_R) {
      h.J_R = opt->J_R;
      h.beta = b;
    }
  }
  return h;
}

}  // namespace

int main() {
  criterion("cvar-duality", 5, [] {
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
      const auto X = random_distribution(rng, -3.0, 7.0);
      for (double alpha : {0.25, 0.5, 0.75}) {
        double best = 1e300;
        for (const auto& a : X.atoms()) best = std::min(best, risk::cvar_dual(X, alpha, a.value));
        worst = std::max(worst, std::abs(best - risk::spectral_risk(risk::Spectrum::cvar(alpha), X)));
      }
    }
    return Outcome{worst <= 1e-6, "max |R - min dual| = " + num(worst)};
  });

  criterion("pow-wang-discretization", 30, [] {
    const auto p = risk::discretize(risk::Spectrum::pow(0.5), 5);
    const Eigen::VectorXd pe = (Eigen::VectorXd(5) << 0.2, 0.6, 1.0, 1.4, 1.8).finished();
    const Eigen::VectorXd pa = (Eigen::VectorXd(4) << 0.2, 0.4, 0.6, 0.8).finished();
    const auto w = risk::discretize(risk::Spectrum::wang(0.5), 5);
    const Eigen::VectorXd we = (Eigen::VectorXd(5) << 0.515, 0.790, 1.091, 1.493, 2.191).finished();
    const Eigen::VectorXd wa = (Eigen::VectorXd(4) << 0.263, 0.541, 0.770, 0.926).finished();
    const double pow_err = std::max((p.levels() - pe).cwiseAbs().maxCoeff(), (p.breakpoints() - pa).cwiseAbs().maxCoeff());
    const double wang_err = std::max((w.levels() - we).cwiseAbs().maxCoeff(), (w.breakpoints() - wa).cwiseAbs().maxCoeff());
    return Outcome{pow_err <= 1e-2 && wang_err <= 2e-2, "pow err " + num(pow_err) + ", wang err " + num(wang_err)};
  });

  criterion("discretization-bound", 10, [] {
    std::mt19937_64 rng(13);
    const double c_max = 1.0, gamma = 0.9;
    struct Case {
      risk::Spectrum spec;
      risk::DiscretizedSpectrum disc;
      double bound;
    };
    std::vector<Case> cases;
    for (int M : {2, 5, 10})
      for (const auto& spec : {risk::Spectrum::cvar(0.75), risk::Spectrum::cvar(0.3), risk::Spectrum::pow(0.5),
                               risk::Spectrum::pow(0.8)})
        cases.push_back({spec, risk::discretize(spec, M), risk::discretization_error_bound(spec, M, c_max, gamma)});
    int violations = 0, checks = 0;
    double tightest = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto X = random_distribution(rng, 0.0, c_max / (1.0 - gamma), 12);
      for (const auto& [spec, disc, bound] : cases) {
        const double gap = std::abs(risk::spectral_risk(spec, X) - risk::spectral_risk(disc, X));
        violations += gap > bound;
        tightest = std::max(tightest, gap / bound);
        ++checks;
      }
    }
    return Outcome{violations == 0, std::to_string(violations) + " violations in " + std::to_string(checks) +
                                        ", max gap/bound " + num(tightest)};
  });

  criterion("performance-difference", 60, [] {
    std::mt19937_64 rng(17);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const auto cmdp = env::random_cmdp(4, 2, 1, 100 + static_cast<std::uint64_t>(k), 6, 0.9);
      const env::AugmentedIndex index(cmdp);
      const auto disc = random_disc(rng);
      const risk::HingeFunction g(disc, random_beta(rng, disc.size() - 1, 0.0, cmdp.cost_return_max()));
      const auto pi = random_policy(rng, index), pi2 = random_policy(rng, index);
      const auto v = dist::risk_values(index, pi, g, 0), v2 = dist::risk_values(index, pi2, g, 0);
      const Eigen::VectorXd d2 = env::occupancy(index, pi2);
      const double rhs = ((pi2.array() * v.A.array()).colwise() * d2.array()).sum() / (1.0 - index.gamma());
      worst = std::max(worst, std::abs((v2.J - v.J) - rhs));
    }
    return Outcome{worst <= 1e-8, "max |lhs - rhs| = " + num(worst)};
  });

  criterion("gradient-fd", 60, [] {
    std::mt19937_64 rng(19);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const auto cmdp = env::random_cmdp(3, 2, 1, 200 + static_cast<std::uint64_t>(k), 4, 0.9);
      const env::AugmentedIndex index(cmdp);
      const auto disc = random_disc(rng);
      const auto beta = random_beta(rng, disc.size() - 1, 0.0, cmdp.cost_return_max());
      inner::SoftmaxPolicy p{Eigen::MatrixXd(index.size(), index.num_actions())};
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index j = 0; j < p.theta.size(); ++j) p.theta.data()[j] = normal(rng);
      const auto grad = inner::policy_gradient_risk(index, p.probabilities(), disc, beta, 0);
      const auto fd = oracle::finite_difference(p.theta, [&](const Eigen::MatrixXd& th) {
        return oracle::constraint_value_from_atoms(index, th, disc, beta, 0);
      });
      const double floor = 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff());
      for (Eigen::Index j = 0; j < fd.size(); ++j)
        worst = std::max(worst, std::abs(grad.data()[j] - fd.data()[j]) / std::max(std::abs(fd.data()[j]), floor));
    }
    return Outcome{worst <= 1e-4, "max relative error " + num(worst)};
  });

  criterion("minimizing-beta", 10, [] {
    std::mt19937_64 rng(23);
    double worst_eq = 0.0, worst_gap = 0.0;
    for (int k = 0; k < 50; ++k) {
      const auto X = random_distribution(rng, 0.0, 10.0, 10);
      const auto disc = random_disc(rng);
      const auto b = risk::minimizing_beta(disc, X);
      const double value = risk::spectral_risk(disc, X);
      worst_eq = std::max(worst_eq, std::abs(risk::sub_risk(disc, b, X) - value));
      for (int j = 0; j < 50; ++j) {
        const auto probe = random_beta(rng, disc.size() - 1, -1.0, 11.0);
        worst_gap = std::max(worst_gap, value - risk::sub_risk(disc, probe, X));
      }
    }
    return Outcome{worst_eq <= 1e-10 && worst_gap <= 1e-12,
                   "max |sub_risk(beta*) - R| = " + num(worst_eq) + ", max grid undershoot " + num(worst_gap)};
  });

  criterion("conjugate-closed-form", 10, [] {
    std::mt19937_64 rng(29);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto disc = random_disc(rng);
      const auto b = random_beta(rng, disc.size() - 1, 0.0, 8.0);
      worst = std::max(worst, std::abs(risk::conjugate_integral(disc, b) - oracle::conjugate_integral(disc, b)));
    }
    return Outcome{worst <= 1e-6, "max |closed - brute| = " + num(worst)};
  });

  criterion("risk-value-bounds", 30, [] {
    std::mt19937_64 rng(31);
    int violations = 0;
    long long checks = 0;
    for (const char* name : {"hazard-chain(5)", "two-hazard-grid", "random(3,2,1)", "random(4,2,1)"}) {
      const auto cmdp = env::make_env(name, 5);
      const env::AugmentedIndex index(cmdp);
      const double ymax = cmdp.cost_max() / (1.0 - cmdp.gamma);
      for (int p = 0; p < 10; ++p) {
        const auto pi = random_policy(rng, index, 2.0);
        for (int i = 0; i < cmdp.num_constraints(); ++i) {
          const auto disc = random_disc(rng);
          const risk::HingeFunction g(disc, random_beta(rng, disc.size() - 1, 0.0, cmdp.cost_return_max()));
          const auto v = dist::risk_values(index, pi, g, i);
          const double slope = g.slope(ymax);
          for (int id = 0; id < index.size(); ++id) {
            const double b = index.b(id), e = index.state(id).e(i);
            const double lo = g(b * e) - 1e-12, hi = g(b * e + b * ymax) + 1e-12;
            violations += v.V(id) < lo || v.V(id) > hi;
            for (int a = 0; a < index.num_actions(); ++a) {
              violations += v.Q(id, a) < lo || v.Q(id, a) > hi;
              violations += std::abs(v.Q(id, a) - v.V(id)) > b * ymax * slope + 1e-12;
              checks += 3;
            }
          }
        }
      }
    }
    return Outcome{violations == 0, std::to_string(violations) + " violations in " + std::to_string(checks) + " checks"};
  });

  criterion("inner-convergence", 300, [] {
    const auto h = hazard_optimum();
    const std::vector<inner::ConstraintSpec> cs{{h.disc, risk::BetaParam::Constant(1, h.beta)}};
    auto policy = inner::SoftmaxPolicy::uniform(*h.index);
    for (int t = 0; t < 5000; ++t)
      inner::inner_step(*h.index, policy, cs, h.cmdp.threshold, inner::Strategy::Proposed,
                        inner::trust_region_size(0.1, t, true), {});
    const auto ev = inner::evaluate(*h.index, policy.probabilities(), cs);
    const double d = h.cmdp.threshold(0);
    return Outcome{ev.J_C(0) <= d + 1e-3 && ev.J_R >= 0.99 * h.J_R,
                   "beta " + num(h.beta) + ": J_C " + num(ev.J_C(0)) + " (d " + num(d) + "), J_R " + num(ev.J_R) +
                       " vs oracle " + num(h.J_R)};
  });

  criterion("outer-convergence", 30, [] {
    const Experiment ex(quickstart());
    const int G = ex.grid().size();
    Eigen::VectorXd scores(G);
    for (int k = 0; k < G; ++k) {
      auto policy = inner::SoftmaxPolicy::uniform(ex.index());
      const auto cs = ex.constraints(k);
      for (int t = 0; t < 2000; ++t)
        inner::inner_step(ex.index(), policy, cs, ex.threshold(), inner::Strategy::Proposed,
                          inner::trust_region_size(0.1, t, true), {});
      const auto ev = inner::evaluate(ex.index(), policy.probabilities(), cs);
      scores(k) = outer::target_score(ev.J_R, ev.J_C, ex.threshold(), 10.0);
    }
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    auto sampler = outer::FiniteSampler::uniform(G);
    int steps = 0;
    while (steps < 10000 && sampler.probabilities()(best) < 0.99) {
      outer::finite_sampler_step(sampler, scores, 1e-3);
      ++steps;
    }
    const double mass = sampler.probabilities()(best);
    return Outcome{mass >= 0.99, "mass " + num(mass) + " on point " + std::to_string(best) + " after " +
                                     std::to_string(steps) + " steps"};
  });

  criterion("end-to-end-tabular", 600, [] {
    Experiment ex(quickstart());
    run(ex, nullptr, nullptr, 0);
    std::vector<std::vector<risk::BetaParam>> lists;
    for (int i = 0; i < ex.grid().num_constraints(); ++i) lists.push_back(ex.grid().list(i));
    const auto best = oracle::exhaustive_grid(ex.index(), ex.discs(), lists, ex.threshold());
    std::mt19937_64 rng(ex.config().seed);
    const int drawn = ex.finite_sampler().sample(rng);
    const auto ev = ex.evaluate_point(drawn);
    const bool feasible = ((ev.J_C - ex.threshold()).array() <= 1e-3).all();
    return Outcome{feasible && ev.J_R >= 0.99 * best.J_R,
                   "sampled point " + std::to_string(drawn) + ": J_R " + num(ev.J_R) + ", J_C " + num(ev.J_C(0)) +
                       "; exhaustive best " + num(best.J_R) + " at point " + std::to_string(best.best)};
  });

  criterion("quantile-critic-w1", 120, [] {
    const auto cmdp = env::make_env("hazard-chain(5)", 0);
    const env::AugmentedIndex index(cmdp);
    const Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(index.size(), index.num_actions());
    const auto pi = inner::SoftmaxPolicy{theta}.probabilities();
    dist::QuantileCritic critic(2, index.size(), index.num_actions(), 1, 25, 2);
    std::mt19937_64 rng(37);
    const CriticSettings settings{0.97, index.gamma(), 50, 0.02};
    for (int u = 0; u < 10000; ++u)
      train_critic_on_episode(critic, env::rollout(cmdp, index, pi, rng), theta, 0, u % 2, settings);
    const auto exact = dist::exact_returns(index, pi, 0);
    const double range = cmdp.cost_return_max();
    double worst = 0.0;
    for (const auto& [id, p] : index.initial())
      for (int a = 0; a < index.num_actions(); ++a)
        worst = std::max(worst, dist::wasserstein1(critic.distribution(0, id, a, 0), exact.at(id, a)));
    return Outcome{worst <= 0.05 * range, "max W1 " + num(worst) + " vs 5% of range " + num(0.05 * range)};
  });

  criterion("determinism", 600, [] {
    auto once = [] {
      Experiment ex(quickstart());
      std::ostringstream csv;
      run(ex, &csv, nullptr, 0);
      return csv.str();
    };
    const auto a = once(), b = once();
    return Outcome{a == b && !a.empty(), std::string(a == b ? "identical" : "different") + " metrics (" +
                                             std::to_string(a.size()) + " bytes)"};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
