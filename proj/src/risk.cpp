#include "srcpo/risk.hpp"

#include "srcpo/normal.hpp"
#include "srcpo/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace srcpo::risk {

namespace {

void check_alpha(double alpha, const char* name) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw std::invalid_argument(std::string(name) + ": risk level must lie in [0, 1)");
}

double clamp01(double u) { return std::clamp(u, 0.0, 1.0); }

// sum_k x_k * (S(F_k) - S(F_{k-1})) over the sorted atoms.
template <typename Cumulative>
double integrate_quantiles(const Cumulative& cumulative, const ReturnDistribution& dist) {
  if (dist.empty()) throw std::invalid_argument("spectral_risk: empty distribution");
  double acc = 0.0;
  double f_prev = 0.0;
  double s_prev = 0.0;
  const auto atoms = dist.atoms();
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const double f = (k + 1 == atoms.size()) ? 1.0 : std::min(1.0, f_prev + atoms[k].probability);
    const double s = cumulative(f);
    acc += atoms[k].value * (s - s_prev);
    f_prev = f;
    s_prev = s;
  }
  return acc;
}

// Integral of |sigma - level| over [lo, hi] for non-decreasing sigma.
double segment_l1(const Spectrum& spec, double lo, double hi, double level) {
  if (hi <= lo) return 0.0;
  const double cross = std::clamp(spec.level_inverse(level), lo, hi);
  const double below = level * (cross - lo) - (spec.cumulative(cross) - spec.cumulative(lo));
  const double above = (spec.cumulative(hi) - spec.cumulative(cross)) - level * (hi - cross);
  return below + above;
}

}  // namespace

// ---------------------------------------------------------------------------
// Spectrum

Spectrum Spectrum::cvar(double alpha) {
  check_alpha(alpha, "cvar");
  return {Family::CVaR, alpha};
}

Spectrum Spectrum::pow(double alpha) {
  check_alpha(alpha, "pow");
  return {Family::Pow, alpha};
}

Spectrum Spectrum::wang(double alpha) {
  if (!(alpha >= 0.0 && std::isfinite(alpha)))
    throw std::invalid_argument("wang: risk level must be a finite non-negative number");
  return {Family::Wang, alpha};
}

Spectrum Spectrum::table(std::vector<double> u, std::vector<double> sigma) {
  if (u.size() != sigma.size() || u.size() < 2)
    throw std::invalid_argument("table spectrum: need at least two (u, sigma) samples");
  if (u.front() != 0.0 || u.back() != 1.0)
    throw std::invalid_argument("table spectrum: samples must start at u = 0 and end at u = 1");
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!(sigma[k] >= 0.0) || !std::isfinite(sigma[k]))
      throw std::invalid_argument("table spectrum: sigma must be finite and non-negative");
    if (k > 0 && !(u[k] > u[k - 1]))
      throw std::invalid_argument("table spectrum: u samples must be strictly increasing");
    if (k > 0 && sigma[k] < sigma[k - 1])
      throw std::invalid_argument("table spectrum: sigma must be non-decreasing");
  }
  Spectrum s(Family::Table, 0.0);
  s.cum_.assign(u.size(), 0.0);
  for (std::size_t k = 1; k < u.size(); ++k)
    s.cum_[k] = s.cum_[k - 1] + 0.5 * (sigma[k] + sigma[k - 1]) * (u[k] - u[k - 1]);
  if (std::abs(s.cum_.back() - 1.0) > 1e-8)
    throw std::invalid_argument("table spectrum: integral is " + text::format12(s.cum_.back()) +
                                ", expected 1 within 1e-8");
  s.u_ = std::move(u);
  s.sigma_ = std::move(sigma);
  return s;
}

Spectrum Spectrum::parse(std::string_view descriptor) {
  const auto colon = descriptor.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("spectrum descriptor '" + std::string(descriptor) +
                                "' must look like family:value");
  const auto family = text::trim(descriptor.substr(0, colon));
  const auto arg = text::trim(descriptor.substr(colon + 1));
  if (family == "table") {
    std::ifstream in{std::string(arg)};
    if (!in) throw std::invalid_argument("table spectrum: cannot open '" + std::string(arg) + "'");
    std::vector<double> u, sigma;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto fields = text::split_ws(t);
      const auto a = fields.size() == 2 ? text::to_double(fields[0]) : std::nullopt;
      const auto b = fields.size() == 2 ? text::to_double(fields[1]) : std::nullopt;
      if (!a || !b)
        throw std::invalid_argument("table spectrum: malformed line " + std::to_string(lineno));
      u.push_back(*a);
      sigma.push_back(*b);
    }
    Spectrum s = table(std::move(u), std::move(sigma));
    s.source_ = std::string(arg);
    return s;
  }
  const auto value = text::to_double(arg);
  if (!value)
    throw std::invalid_argument("spectrum descriptor '" + std::string(descriptor) +
                                "': risk level is not a number");
  if (family == "cvar") return cvar(*value);
  if (family == "pow") return pow(*value);
  if (family == "wang") return wang(*value);
  throw std::invalid_argument("unknown spectrum family '" + std::string(family) + "'");
}

bool Spectrum::is_constant() const {
  if (family_ == Family::Table)
    return std::all_of(sigma_.begin(), sigma_.end(), [&](double s) { return s == sigma_[0]; });
  return alpha_ == 0.0;
}

double Spectrum::operator()(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("spectrum: u outside [0, 1]");
  switch (family_) {
    case Family::CVaR:
      return u >= alpha_ ? 1.0 / (1.0 - alpha_) : 0.0;
    case Family::Pow:
      return std::pow(u, alpha_ / (1.0 - alpha_)) / (1.0 - alpha_);
    case Family::Wang: {
      if (alpha_ == 0.0) return 1.0;
      if (u >= 1.0) throw std::domain_error("wang spectrum is unbounded at u = 1");
      if (u <= 0.0) return 0.0;
      const double z = normal_inv_cdf(u);
      return std::exp(alpha_ * z - 0.5 * alpha_ * alpha_);
    }
    case Family::Table: {
      const auto it = std::upper_bound(u_.begin(), u_.end(), u);
      if (it == u_.end()) return sigma_.back();
      const auto k = static_cast<std::size_t>(it - u_.begin());
      const double w = (u - u_[k - 1]) / (u_[k] - u_[k - 1]);
      return sigma_[k - 1] + w * (sigma_[k] - sigma_[k - 1]);
    }
  }
  return 0.0;
}

double Spectrum::cumulative(double u) const {
  u = clamp01(u);
  switch (family_) {
    case Family::CVaR:
      return std::max(0.0, u - alpha_) / (1.0 - alpha_);
    case Family::Pow:
      return std::pow(u, 1.0 / (1.0 - alpha_));
    case Family::Wang:
      if (alpha_ == 0.0 || u <= 0.0 || u >= 1.0) return u;
      return normal_cdf(normal_inv_cdf(u) - alpha_);
    case Family::Table: {
      const auto it = std::upper_bound(u_.begin(), u_.end(), u);
      if (it == u_.end()) return cum_.back();
      const auto k = static_cast<std::size_t>(it - u_.begin());
      const double h = u - u_[k - 1];
      const double slope = (sigma_[k] - sigma_[k - 1]) / (u_[k] - u_[k - 1]);
      return cum_[k - 1] + sigma_[k - 1] * h + 0.5 * slope * h * h;
    }
  }
  return 0.0;
}

double Spectrum::level_inverse(double y) const {
  if (y <= 0.0) return 0.0;
  switch (family_) {
    case Family::CVaR:
      return y <= 1.0 / (1.0 - alpha_) ? alpha_ : 1.0;
    case Family::Pow: {
      if (alpha_ == 0.0) return y <= 1.0 ? 0.0 : 1.0;
      const double p = alpha_ / (1.0 - alpha_);
      return std::min(1.0, std::pow(y * (1.0 - alpha_), 1.0 / p));
    }
    case Family::Wang:
      if (alpha_ == 0.0) return y <= 1.0 ? 0.0 : 1.0;
      return normal_cdf((std::log(y) + 0.5 * alpha_ * alpha_) / alpha_);
    case Family::Table: {
      if (y <= sigma_.front()) return 0.0;
      const auto it = std::lower_bound(sigma_.begin(), sigma_.end(), y);
      if (it == sigma_.end()) return 1.0;
      const auto k = static_cast<std::size_t>(it - sigma_.begin());
      const double w = (y - sigma_[k - 1]) / (sigma_[k] - sigma_[k - 1]);
      return u_[k - 1] + w * (u_[k] - u_[k - 1]);
    }
  }
  return 1.0;
}

double Spectrum::at_one() const {
  if (family_ == Family::Wang && alpha_ > 0.0)
    throw std::domain_error("wang spectrum has no finite value at u = 1");
  return (*this)(1.0);
}

std::string Spectrum::descriptor() const {
  switch (family_) {
    case Family::CVaR: return "cvar:" + text::format_exact(alpha_);
    case Family::Pow: return "pow:" + text::format_exact(alpha_);
    case Family::Wang: return "wang:" + text::format_exact(alpha_);
    case Family::Table: return "table:" + source_;
  }
  return {};
}

// ---------------------------------------------------------------------------
// DiscretizedSpectrum

DiscretizedSpectrum::DiscretizedSpectrum(Eigen::VectorXd levels, Eigen::VectorXd breakpoints)
    : levels_(std::move(levels)), breakpoints_(std::move(breakpoints)) {
  const auto M = levels_.size();
  if (M < 1) throw std::invalid_argument("discretized spectrum: need at least one level");
  if (breakpoints_.size() != M - 1)
    throw std::invalid_argument("discretized spectrum: need exactly M-1 breakpoints");
  if (!(levels_(0) >= 0.0)) throw std::invalid_argument("discretized spectrum: eta_1 < 0");
  for (Eigen::Index i = 0; i + 1 < M; ++i) {
    if (!(levels_(i) <= levels_(i + 1)))
      throw std::invalid_argument("discretized spectrum: levels must be non-decreasing");
    if (!(breakpoints_(i) >= 0.0 && breakpoints_(i) <= 1.0))
      throw std::invalid_argument("discretized spectrum: breakpoints must lie in [0, 1]");
    if (i > 0 && !(breakpoints_(i - 1) <= breakpoints_(i)))
      throw std::invalid_argument("discretized spectrum: breakpoints must be non-decreasing");
  }
  if (std::abs(integral() - 1.0) > 1e-8)
    throw std::invalid_argument("discretized spectrum: integral is " + text::format12(integral()) +
                                ", expected 1 within 1e-8");
}

DiscretizedSpectrum DiscretizedSpectrum::parse(std::string_view text_in) {
  std::vector<std::string_view> lines;
  for (auto line : text::split(text_in, '\n'))
    if (!line.empty() && line.front() != '#') lines.push_back(line);
  if (lines.empty() || lines.size() > 2)
    throw std::invalid_argument("discretized spectrum: expected a levels line and a breakpoints line");
  auto parse_list = [](std::string_view line) {
    std::vector<double> v;
    if (line.empty()) return v;
    for (auto f : text::split(line, ',')) {
      const auto x = text::to_double(f);
      if (!x) throw std::invalid_argument("discretized spectrum: bad number '" + std::string(f) + "'");
      v.push_back(*x);
    }
    return v;
  };
  const auto eta = parse_list(lines[0]);
  const auto alpha = lines.size() > 1 ? parse_list(lines[1]) : std::vector<double>{};
  return {Eigen::Map<const Eigen::VectorXd>(eta.data(), static_cast<Eigen::Index>(eta.size())),
          Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()))};
}

std::string DiscretizedSpectrum::serialize() const {
  std::string out;
  for (Eigen::Index i = 0; i < levels_.size(); ++i)
    out += (i ? "," : "") + text::format_exact(levels_(i));
  out += '\n';
  for (Eigen::Index i = 0; i < breakpoints_.size(); ++i)
    out += (i ? "," : "") + text::format_exact(breakpoints_(i));
  out += '\n';
  return out;
}

double DiscretizedSpectrum::operator()(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("spectrum: u outside [0, 1]");
  double s = levels_(0);
  for (Eigen::Index i = 0; i < breakpoints_.size(); ++i)
    if (u >= breakpoints_(i)) s += levels_(i + 1) - levels_(i);
  return s;
}

double DiscretizedSpectrum::cumulative(double u) const {
  u = clamp01(u);
  double s = levels_(0) * u;
  for (Eigen::Index i = 0; i < breakpoints_.size(); ++i)
    s += (levels_(i + 1) - levels_(i)) * std::max(0.0, u - breakpoints_(i));
  return s;
}

// ---------------------------------------------------------------------------
// ReturnDistribution

ReturnDistribution::ReturnDistribution(std::vector<Atom> atoms, double merge_tolerance) {
  if (atoms.empty()) throw std::invalid_argument("return distribution: no atoms");
  double total = 0.0;
  for (const auto& a : atoms) {
    if (!std::isfinite(a.value)) throw std::invalid_argument("return distribution: non-finite value");
    if (!(a.probability >= 0.0))
      throw std::invalid_argument("return distribution: negative probability");
    total += a.probability;
  }
  if (std::abs(total - 1.0) > 1e-10)
    throw std::invalid_argument("return distribution: probabilities sum to " + text::format12(total));
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& x, const Atom& y) { return x.value < y.value; });
  atoms_.reserve(atoms.size());
  double run_start = atoms.front().value;
  for (const auto& a : atoms) {
    if (a.probability == 0.0) continue;
    if (!atoms_.empty() && a.value - run_start <= merge_tolerance) {
      auto& back = atoms_.back();
      const double p = back.probability + a.probability;
      back.value = (back.value * back.probability + a.value * a.probability) / p;
      back.probability = p;
    } else {
      atoms_.push_back(a);
      run_start = a.value;
    }
  }
}

ReturnDistribution ReturnDistribution::point(double value) { return ReturnDistribution({{value, 1.0}}); }

ReturnDistribution ReturnDistribution::uniform(std::span<const double> values) {
  std::vector<Atom> atoms;
  atoms.reserve(values.size());
  for (double v : values) atoms.push_back({v, 1.0 / static_cast<double>(values.size())});
  return ReturnDistribution(std::move(atoms));
}

double ReturnDistribution::min() const { return atoms_.front().value; }
double ReturnDistribution::max() const { return atoms_.back().value; }

double ReturnDistribution::mean() const {
  return expect([](double x) { return x; });
}

double ReturnDistribution::cdf(double x) const {
  double f = 0.0;
  for (const auto& a : atoms_) {
    if (a.value > x) break;
    f += a.probability;
  }
  return std::min(f, 1.0);
}

double ReturnDistribution::quantile(double u) const {
  if (atoms_.empty()) throw std::invalid_argument("quantile of an empty distribution");
  double f = 0.0;
  for (const auto& a : atoms_) {
    f += a.probability;
    if (f >= u - 1e-12) return a.value;
  }
  return atoms_.back().value;
}

// ---------------------------------------------------------------------------
// HingeFunction

void check_beta(const DiscretizedSpectrum& disc, const BetaParam& beta) {
  if (beta.size() != disc.size() - 1)
    throw std::invalid_argument("beta must have M-1 = " + std::to_string(disc.size() - 1) +
                                " entries, got " + std::to_string(beta.size()));
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    if (!std::isfinite(beta(i))) throw std::invalid_argument("beta entries must be finite");
    if (i > 0 && beta(i) < beta(i - 1)) throw std::invalid_argument("beta must be non-decreasing");
  }
}

HingeFunction::HingeFunction(const DiscretizedSpectrum& disc, BetaParam beta)
    : disc_(disc), beta_(std::move(beta)) {
  check_beta(disc_, beta_);
}

double HingeFunction::operator()(double x) const {
  const auto& eta = disc_.levels();
  double g = eta(0) * x;
  for (Eigen::Index i = 0; i < beta_.size(); ++i) g += (eta(i + 1) - eta(i)) * std::max(0.0, x - beta_(i));
  return g;
}

double HingeFunction::slope(double x) const {
  const auto& eta = disc_.levels();
  double s = eta(0);
  for (Eigen::Index i = 0; i < beta_.size(); ++i)
    if (x >= beta_(i)) s += eta(i + 1) - eta(i);
  return s;
}

double HingeFunction::conjugate_integral() const {
  const auto& eta = disc_.levels();
  const auto& alpha = disc_.breakpoints();
  double c = 0.0;
  for (Eigen::Index i = 0; i < beta_.size(); ++i) c += (eta(i + 1) - eta(i)) * (1.0 - alpha(i)) * beta_(i);
  return c;
}

// ---------------------------------------------------------------------------
// Free functions

double eval_spectrum(const Spectrum& spec, double u) { return spec(u); }

double spectral_risk(const Spectrum& spec, const ReturnDistribution& dist) {
  return integrate_quantiles([&](double u) { return spec.cumulative(u); }, dist);
}

double spectral_risk(const DiscretizedSpectrum& disc, const ReturnDistribution& dist) {
  return integrate_quantiles([&](double u) { return disc.cumulative(u); }, dist);
}

double cvar_dual(const ReturnDistribution& dist, double alpha, double beta) {
  check_alpha(alpha, "cvar_dual");
  if (dist.empty()) throw std::invalid_argument("cvar_dual: empty distribution");
  return dist.expect([&](double x) { return std::max(0.0, x - beta); }) / (1.0 - alpha) + beta;
}

DiscretizedSpectrum discretize(const Spectrum& spec, int M) {
  if (M < 1) throw std::invalid_argument("discretize: M must be positive");
  if (M == 1) return {Eigen::VectorXd::Ones(1), Eigen::VectorXd(0)};
  if (spec.is_constant()) {
    const double level = spec.cumulative(1.0);
    return {Eigen::VectorXd::Constant(M, level),
            Eigen::VectorXd::LinSpaced(M + 1, 0.0, 1.0).segment(1, M - 1)};
  }
  if (spec.family() == Family::CVaR) {
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(M);
    eta(M - 1) = 1.0 / (1.0 - spec.alpha());
    return {eta, Eigen::VectorXd::Constant(M - 1, spec.alpha())};
  }

  // Alternating minimisation on the KKT conditions of
  //   min int |sigma - sigma~| + mu (int sigma~ - 1).
  // For fixed breakpoints each level sits at the same quantile fraction q of sigma
  // on its segment, with q fixed by the unit integral. For fixed levels a
  // breakpoint sits where sigma crosses eta_i + (1 - q)(eta_{i+1} - eta_i).
  Eigen::VectorXd bounds = Eigen::VectorXd::LinSpaced(M + 1, 0.0, 1.0);
  Eigen::VectorXd eta(M);

  auto levels_at = [&](double q) {
    constexpr double kBelowOne = 1.0 - 1e-15;
    for (int k = 0; k < M; ++k)
      eta(k) = spec(std::min(kBelowOne, bounds(k) + q * (bounds(k + 1) - bounds(k))));
  };
  auto solve_fraction = [&]() {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      levels_at(mid);
      double integral = 0.0;
      for (int k = 0; k < M; ++k) integral += eta(k) * (bounds(k + 1) - bounds(k));
      (integral > 1.0 ? hi : lo) = mid;
    }
    const double q = 0.5 * (lo + hi);
    levels_at(q);
    return q;
  };

  constexpr int kMaxIterations = 20000;
  bool converged = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double q = solve_fraction();
    double change = 0.0;
    for (int i = 0; i + 1 < M; ++i) {
      const double target = eta(i) + (1.0 - q) * (eta(i + 1) - eta(i));
      const double b = spec.level_inverse(target);
      change = std::max(change, std::abs(b - bounds(i + 1)));
      bounds(i + 1) = b;
    }
    if (change < 1e-13) {
      converged = true;
      break;
    }
  }
  solve_fraction();

  double integral = 0.0;
  for (int k = 0; k < M; ++k) integral += eta(k) * (bounds(k + 1) - bounds(k));
  if (!converged || std::abs(integral - 1.0) > 1e-9)
    throw std::runtime_error("discretize: no convergence for " + spec.descriptor() +
                             " (integral residual " + text::format12(integral - 1.0) + ")");
  // Snap the residual into the top level so the unit-integral check is exact.
  eta(M - 1) += (1.0 - integral) / (bounds(M) - bounds(M - 1));
  return {eta, bounds.segment(1, M - 1)};
}

double l1_distance(const Spectrum& spec, const DiscretizedSpectrum& disc) {
  const int M = disc.size();
  double total = 0.0;
  for (int k = 0; k < M; ++k) {
    const double lo = k == 0 ? 0.0 : disc.breakpoints()(k - 1);
    const double hi = k + 1 == M ? 1.0 : disc.breakpoints()(k);
    total += segment_l1(spec, lo, hi, disc.levels()(k));
  }
  return total;
}

double discretization_error_bound(const Spectrum& spec, int M, double cost_max, double gamma) {
  if (M < 1) throw std::invalid_argument("discretization_error_bound: M must be positive");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("discretization_error_bound: gamma must lie in (0, 1)");
  return cost_max * spec.at_one() / ((1.0 - gamma) * M);
}

double g_beta(const DiscretizedSpectrum& disc, const BetaParam& beta, double x) {
  return HingeFunction(disc, beta)(x);
}

double conjugate_integral(const DiscretizedSpectrum& disc, const BetaParam& beta) {
  return HingeFunction(disc, beta).conjugate_integral();
}

double sub_risk(const DiscretizedSpectrum& disc, const BetaParam& beta, const ReturnDistribution& dist) {
  if (dist.empty()) throw std::invalid_argument("sub_risk: empty distribution");
  const HingeFunction g(disc, beta);
  return dist.expect(g) + g.conjugate_integral();
}

BetaParam minimizing_beta(const DiscretizedSpectrum& disc, const ReturnDistribution& dist) {
  BetaParam beta(disc.size() - 1);
  for (Eigen::Index i = 0; i < beta.size(); ++i) beta(i) = dist.quantile(disc.breakpoints()(i));
  return beta;
}

}  // namespace srcpo::risk
