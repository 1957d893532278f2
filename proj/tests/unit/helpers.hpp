#pragma once

#include "srcpo/risk.hpp"

#include <random>
#include <vector>

namespace srcpo::testing {

inline risk::ReturnDistribution random_distribution(std::mt19937_64& rng, double lo, double hi, int max_atoms = 8) {
  std::uniform_int_distribution<int> count(1, max_atoms);
  std::uniform_real_distribution<double> value(lo, hi), weight(0.05, 1.0);
  std::vector<risk::Atom> atoms(static_cast<std::size_t>(count(rng)));
  double total = 0.0;
  for (auto& a : atoms) {
    a = {value(rng), weight(rng)};
    total += a.probability;
  }
  for (auto& a : atoms) a.probability /= total;
  return risk::ReturnDistribution(std::move(atoms));
}

inline risk::ReturnDistribution uniform_on(std::vector<double> values) {
  return risk::ReturnDistribution::uniform(values);
}

}  // namespace srcpo::testing
