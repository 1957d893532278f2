#include "srcpo/critic.hpp"

#include "srcpo/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace srcpo::dist {

QuantileCritic::QuantileCritic(int num_channels, int num_ids, int num_actions, int num_grid,
                               int num_quantiles, int num_ensembles)
    : channels_(num_channels), ids_(num_ids), actions_(num_actions), grid_(num_grid),
      L_(num_quantiles), E_(num_ensembles) {
  if (num_channels < 1 || num_ids < 1 || num_actions < 1 || num_grid < 1 || num_quantiles < 1 ||
      num_ensembles < 1)
    throw std::invalid_argument("quantile critic: all dimensions must be positive");
  const auto total = static_cast<std::size_t>(E_) * static_cast<std::size_t>(channels_) *
                     static_cast<std::size_t>(ids_) * static_cast<std::size_t>(actions_) *
                     static_cast<std::size_t>(grid_) * static_cast<std::size_t>(L_);
  theta_.assign(total, 0.0);
}

std::size_t QuantileCritic::offset(int ensemble, int channel, int id, int a, int grid) const {
  if (ensemble < 0 || ensemble >= E_ || channel < 0 || channel >= channels_ || id < 0 || id >= ids_ ||
      a < 0 || a >= actions_ || grid < 0 || grid >= grid_)
    throw std::out_of_range("quantile critic: index out of range");
  std::size_t k = static_cast<std::size_t>(ensemble);
  k = k * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(channel);
  k = k * static_cast<std::size_t>(ids_) + static_cast<std::size_t>(id);
  k = k * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a);
  k = k * static_cast<std::size_t>(grid_) + static_cast<std::size_t>(grid);
  return k * static_cast<std::size_t>(L_);
}

std::span<const double> QuantileCritic::atoms(int ensemble, int channel, int id, int a, int grid) const {
  return {theta_.data() + offset(ensemble, channel, id, a, grid), static_cast<std::size_t>(L_)};
}

std::span<double> QuantileCritic::mutable_atoms(int ensemble, int channel, int id, int a, int grid) {
  return {theta_.data() + offset(ensemble, channel, id, a, grid), static_cast<std::size_t>(L_)};
}

Eigen::VectorXd QuantileCritic::quantiles(int channel, int id, int a, int grid) const {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(L_);
  for (int e = 0; e < E_; ++e) {
    const auto th = atoms(e, channel, id, a, grid);
    for (int l = 0; l < L_; ++l) q(l) += th[static_cast<std::size_t>(l)];
  }
  return q / E_;
}

risk::ReturnDistribution QuantileCritic::distribution(int channel, int id, int a, int grid) const {
  const Eigen::VectorXd q = quantiles(channel, id, a, grid);
  return risk::ReturnDistribution::uniform(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
}

void quantile_regression_update(QuantileCritic& critic, std::span<const QuantileSample> batch, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("quantile regression: learning rate must be non-negative");
  const int L = critic.num_quantiles();
  for (const auto& s : batch) {
    if (s.targets.size() == 0) continue;
    auto th = critic.mutable_atoms(s.ensemble, s.channel, s.id, s.action, s.grid);
    for (int l = 0; l < L; ++l) {
      const double tau = (2.0 * l + 1.0) / (2.0 * L);
      double below = 0.0;
      for (Eigen::Index j = 0; j < s.targets.size(); ++j)
        if (s.targets(j) < th[static_cast<std::size_t>(l)]) below += 1.0;
      th[static_cast<std::size_t>(l)] += lr * (tau - below / static_cast<double>(s.targets.size()));
    }
    std::sort(th.begin(), th.end());
  }
}

std::vector<Eigen::VectorXd> td_lambda_targets(std::span<const double> costs,
                                               std::span<const risk::ReturnDistribution> bootstrap,
                                               double lambda, double gamma, int num_targets) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("td(lambda): lambda must lie in [0, 1]");
  if (bootstrap.size() != costs.size())
    throw std::invalid_argument("td(lambda): need one bootstrap law per step");
  const std::size_t T = costs.size();
  std::vector<Eigen::VectorXd> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<risk::Atom> mix;
    double partial = 0.0;
    double disc = 1.0;
    const std::size_t remaining = T - t;
    for (std::size_t n = 1; n <= remaining; ++n) {
      partial += disc * costs[t + n - 1];
      disc *= gamma;
      const double w = n < remaining ? (1.0 - lambda) * std::pow(lambda, static_cast<double>(n - 1))
                                     : std::pow(lambda, static_cast<double>(n - 1));
      if (w <= 0.0) continue;
      if (n == remaining) {
        mix.push_back({partial, w});
      } else {
        for (const auto& z : bootstrap[t + n - 1].atoms())
          mix.push_back({partial + disc * z.value, w * z.probability});
      }
    }
    double total = 0.0;
    for (const auto& a : mix) total += a.probability;
    for (auto& a : mix) a.probability /= total;
    out.push_back(project_quantiles(risk::ReturnDistribution(std::move(mix)), num_targets));
  }
  return out;
}

}  // namespace srcpo::dist
