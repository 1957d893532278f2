#include "srcpo/outer.hpp"

#include "srcpo/normal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace srcpo::outer {

// ---------------------------------------------------------------------------
// Grid

BetaGrid::BetaGrid(std::vector<std::vector<risk::BetaParam>> per_constraint) : lists_(std::move(per_constraint)) {
  if (lists_.empty()) throw std::invalid_argument("beta grid: need at least one constraint");
  size_ = 1;
  for (const auto& l : lists_) {
    if (l.empty()) throw std::invalid_argument("beta grid: every constraint needs at least one beta");
    for (const auto& b : l)
      for (Eigen::Index j = 1; j < b.size(); ++j)
        if (b(j) < b(j - 1)) throw std::invalid_argument("beta grid: beta entries must be non-decreasing");
    size_ *= static_cast<int>(l.size());
  }
}

BetaGrid BetaGrid::uniform(int num_constraints, int num_breakpoints, std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("beta grid: no values");
  std::vector<risk::BetaParam> list;
  std::vector<int> pick(static_cast<std::size_t>(num_breakpoints), 0);
  const int V = static_cast<int>(values.size());
  // Non-decreasing index tuples, in lexicographic order.
  while (true) {
    risk::BetaParam b(num_breakpoints);
    for (int j = 0; j < num_breakpoints; ++j) b(j) = values[static_cast<std::size_t>(pick[static_cast<std::size_t>(j)])];
    list.push_back(b);
    int j = num_breakpoints - 1;
    while (j >= 0 && pick[static_cast<std::size_t>(j)] == V - 1) --j;
    if (j < 0) break;
    ++pick[static_cast<std::size_t>(j)];
    for (int k = j + 1; k < num_breakpoints; ++k) pick[static_cast<std::size_t>(k)] = pick[static_cast<std::size_t>(j)];
  }
  return BetaGrid(std::vector<std::vector<risk::BetaParam>>(static_cast<std::size_t>(num_constraints), list));
}

std::vector<risk::BetaParam> BetaGrid::point(int flat) const {
  if (flat < 0 || flat >= size_) throw std::out_of_range("beta grid: point index out of range");
  std::vector<risk::BetaParam> out(lists_.size());
  for (std::size_t i = lists_.size(); i-- > 0;) {
    const int n = static_cast<int>(lists_[i].size());
    out[i] = lists_[i][static_cast<std::size_t>(flat % n)];
    flat /= n;
  }
  return out;
}

int BetaGrid::nearest(const std::vector<risk::BetaParam>& betas) const {
  if (betas.size() != lists_.size()) throw std::invalid_argument("beta grid: wrong number of constraints");
  int flat = 0;
  for (std::size_t i = 0; i < lists_.size(); ++i) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < lists_[i].size(); ++k) {
      const double dist = (lists_[i][k] - betas[i]).cwiseAbs().sum();
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(k);
      }
    }
    flat = flat * static_cast<int>(lists_[i].size()) + best;
  }
  return flat;
}

double target_score(double J_R, const Eigen::VectorXd& J_C, const Eigen::VectorXd& d, double K) {
  if (J_C.size() != d.size()) throw std::invalid_argument("target_score: J_C and d lengths differ");
  return J_R - K * (J_C - d).cwiseMax(0.0).sum();
}

// ---------------------------------------------------------------------------
// Finite sampler

Eigen::VectorXd FiniteSampler::probabilities() const {
  Eigen::VectorXd p = (phi.array() - phi.maxCoeff()).exp();
  return p / p.sum();
}

int FiniteSampler::mode() const {
  Eigen::Index k = 0;
  phi.maxCoeff(&k);
  return static_cast<int>(k);
}

int FiniteSampler::sample(std::mt19937_64& rng, double epsilon) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = static_cast<int>(phi.size());
  if (epsilon > 0.0 && unif(rng) < epsilon) return std::min(n - 1, static_cast<int>(unif(rng) * n));
  const Eigen::VectorXd p = probabilities();
  const double u = unif(rng);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += p(k);
    if (u < acc) return k;
  }
  return n - 1;
}

void finite_sampler_step(FiniteSampler& sampler, const Eigen::VectorXd& scores, double alpha) {
  if (scores.size() != sampler.phi.size()) throw std::invalid_argument("finite sampler: one score per grid point");
  sampler.phi += alpha * scores;
}

double sampler_entropy(const FiniteSampler& sampler) {
  const Eigen::VectorXd p = sampler.probabilities();
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p(k) > 0.0) h -= p(k) * std::log(p(k));
  return h;
}

// ---------------------------------------------------------------------------
// Truncated normal

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// log(Phi(b) - Phi(a)) for standardized bounds a < b.
double log_mass(double a, double b) {
  if (b <= 0.0) return log_mass(-b, -a);
  if (a >= 0.0) {
    const double la = log_normal_sf(a), lb = log_normal_sf(b);
    return la + std::log1p(-std::exp(lb - la));
  }
  return std::log(normal_cdf(b) - normal_cdf(a));
}

// Standardized draw on [a, b], a >= 0, from the upper tail.
double upper_tail_draw(double a, double b, double u) {
  const double pa = normal_sf(a), pb = normal_sf(b);
  if (pa > 1e-280 && pa - pb > 0.0) {
    const double p = std::clamp(pa - u * (pa - pb), 1e-300, 0.5);
    return std::clamp(-normal_inv_cdf(p), a, b);
  }
  // Density ~ exp(-a (z - a)) this far out.
  const double span = std::isfinite(b) ? 1.0 - std::exp(-a * (b - a)) : 1.0;
  return std::min(b, a - std::log1p(-u * span) / a);
}

double standard_draw(double a, double b, double u) {
  if (b <= 0.0) return -upper_tail_draw(-b, -a, 1.0 - u);
  if (a >= 0.0) return upper_tail_draw(a, b, u);
  const double fa = normal_cdf(a), fb = normal_cdf(b);
  const double p = std::clamp(fa + u * (fb - fa), 1e-300, 1.0 - 1e-16);
  return std::clamp(normal_inv_cdf(p), a, b);
}

void check_sd(double sd, double lo, double hi) {
  if (!(sd > 0.0)) throw std::invalid_argument("truncated normal: sd must be positive");
  if (!(hi > lo)) throw std::invalid_argument("truncated normal: empty support");
}

}  // namespace

double truncated_normal_sample(double mu, double sd, double lo, double hi, double u) {
  check_sd(sd, lo, hi);
  const double z = standard_draw((lo - mu) / sd, (hi - mu) / sd, u);
  return std::clamp(mu + sd * z, lo, hi);
}

double truncated_normal_log_pdf(double x, double mu, double sd, double lo, double hi) {
  check_sd(sd, lo, hi);
  if (x < lo || x > hi) return -std::numeric_limits<double>::infinity();
  const double z = (x - mu) / sd;
  return -0.5 * z * z - kLogSqrt2Pi - std::log(sd) - log_mass((lo - mu) / sd, (hi - mu) / sd);
}

double truncated_normal_dlog_dmu(double x, double mu, double sd, double lo, double hi) {
  check_sd(sd, lo, hi);
  const double a = (lo - mu) / sd, b = (hi - mu) / sd;
  const double lz = log_mass(a, b);
  const double ra = std::exp(-0.5 * a * a - kLogSqrt2Pi - lz);
  const double rb = std::isfinite(b) ? std::exp(-0.5 * b * b - kLogSqrt2Pi - lz) : 0.0;
  return (x - mu) / (sd * sd) - (ra - rb) / sd;
}

// ---------------------------------------------------------------------------
// Stick sampler

StickSampler::StickSampler(int num_constraints, int num_breakpoints, double upper, double sd, double init_mean)
    : upper_(upper), sd_(sd) {
  if (num_constraints < 1 || num_breakpoints < 0) throw std::invalid_argument("stick sampler: bad shape");
  if (!(upper > 0.0)) throw std::invalid_argument("stick sampler: upper bound must be positive");
  if (!(sd > 0.0)) throw std::invalid_argument("stick sampler: sd must be positive");
  const double mean = init_mean > 0.0 ? init_mean : upper / (2.0 * std::max(1, num_breakpoints));
  phi_ = Eigen::MatrixXd::Constant(num_constraints, num_breakpoints, std::log(mean));
}

std::vector<risk::BetaParam> StickSampler::stack(const Eigen::MatrixXd& increments) const {
  std::vector<risk::BetaParam> out;
  for (Eigen::Index i = 0; i < increments.rows(); ++i) {
    risk::BetaParam b(increments.cols());
    double acc = 0.0;
    for (Eigen::Index j = 0; j < increments.cols(); ++j) {
      acc += increments(i, j);
      b(j) = std::min(acc, upper_);
    }
    out.push_back(b);
  }
  return out;
}

StickSample StickSampler::evaluate(const Eigen::MatrixXd& increments) const {
  StickSample s;
  s.increments = increments;
  s.betas = stack(increments);
  s.grad_log_density.resize(phi_.rows(), phi_.cols());
  const Eigen::MatrixXd mu = means();
  for (Eigen::Index i = 0; i < phi_.rows(); ++i)
    for (Eigen::Index j = 0; j < phi_.cols(); ++j) {
      const double x = increments(i, j);
      s.log_density += truncated_normal_log_pdf(x, mu(i, j), sd_, 0.0, upper_);
      s.grad_log_density(i, j) = mu(i, j) * truncated_normal_dlog_dmu(x, mu(i, j), sd_, 0.0, upper_);
    }
  return s;
}

StickSample StickSampler::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::MatrixXd mu = means();
  Eigen::MatrixXd inc(phi_.rows(), phi_.cols());
  for (Eigen::Index i = 0; i < phi_.rows(); ++i)
    for (Eigen::Index j = 0; j < phi_.cols(); ++j)
      inc(i, j) = truncated_normal_sample(mu(i, j), sd_, 0.0, upper_, unif(rng));
  return evaluate(inc);
}

std::vector<risk::BetaParam> StickSampler::mean_betas() const {
  return stack(means().cwiseMin(upper_));
}

void stick_sampler_step(StickSampler& sampler, std::span<const ScoredSample> batch, double lr) {
  if (batch.size() < 2) return;
  double baseline = 0.0;
  for (const auto& s : batch) baseline += s.score;
  baseline /= static_cast<double>(batch.size());
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(sampler.phi().rows(), sampler.phi().cols());
  Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(grad.rows(), grad.cols());
  for (const auto& s : batch) {
    grad += (s.score - baseline) * s.grad_log_density;
    fisher += s.grad_log_density.cwiseAbs2();
  }
  grad /= static_cast<double>(batch.size());
  fisher = fisher / static_cast<double>(batch.size());
  fisher.array() += 1e-8;
  sampler.phi().array() += lr * grad.array() / fisher.array();
}

}  // namespace srcpo::outer
