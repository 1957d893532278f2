#include "helpers.hpp"

#include "srcpo/oracle.hpp"
#include "srcpo/risk.hpp"

#include <doctest.h>

#include <cmath>

using namespace srcpo;
using srcpo::testing::random_distribution;
using srcpo::testing::uniform_on;

TEST_CASE("cvar of uniform atoms") {
  const auto X = uniform_on({0, 1, 2, 3});
  CHECK(risk::spectral_risk(risk::Spectrum::cvar(0.5), X) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(risk::spectral_risk(risk::Spectrum::cvar(0.0), X) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("cvar dual is minimised at the alpha quantile") {
  const auto X = uniform_on({0, 1, 2, 3});
  CHECK(risk::cvar_dual(X, 0.5, 1.0) == doctest::Approx(2.5));
  CHECK(risk::cvar_dual(X, 0.5, 0.0) >= 2.5);
  CHECK(risk::cvar_dual(X, 0.5, 3.0) >= 2.5);
}

TEST_CASE("spectra integrate to one and are non-decreasing") {
  for (const auto& s : {risk::Spectrum::cvar(0.3), risk::Spectrum::pow(0.5), risk::Spectrum::wang(0.7)}) {
    CHECK(s.cumulative(1.0) == doctest::Approx(1.0).epsilon(1e-9));
    double prev = 0.0;
    for (int k = 0; k < 100; ++k) {
      const double v = s(k / 100.0);
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("wang at one is a domain error") {
  CHECK_THROWS_AS(risk::Spectrum::wang(0.5)(1.0), std::domain_error);
  CHECK_THROWS_AS(risk::Spectrum::cvar(0.5)(1.5), std::domain_error);
}

TEST_CASE("spectrum descriptors") {
  CHECK(risk::Spectrum::parse("pow:0.5").family() == risk::Spectrum::pow(0.5).family());
  CHECK_THROWS(risk::Spectrum::parse("cvar:1.0"));
  CHECK_THROWS(risk::Spectrum::parse("bogus:0.1"));
}

TEST_CASE("cvar discretization is exact") {
  const auto d = risk::discretize(risk::Spectrum::cvar(0.75), 2);
  REQUIRE(d.size() == 2);
  CHECK(d.levels()(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.levels()(1) == doctest::Approx(4.0));
  CHECK(d.breakpoints()(0) == doctest::Approx(0.75));
  CHECK(risk::l1_distance(risk::Spectrum::cvar(0.75), d) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("M = 1 is risk neutral") {
  const auto d = risk::discretize(risk::Spectrum::pow(0.5), 1);
  REQUIRE(d.size() == 1);
  CHECK(d.levels()(0) == doctest::Approx(1.0));
}

TEST_CASE("discretization error shrinks with M") {
  const auto spec = risk::Spectrum::pow(0.5);
  double prev = 1e9;
  for (int M : {1, 2, 4, 8, 16}) {
    const double e = risk::l1_distance(spec, risk::discretize(spec, M));
    CHECK(e <= prev + 1e-12);
    prev = e;
  }
}

TEST_CASE("discretized spectrum validation") {
  CHECK_THROWS(risk::DiscretizedSpectrum((Eigen::VectorXd(2) << 2.0, 1.0).finished(),
                                         (Eigen::VectorXd(1) << 0.5).finished()));
  CHECK_THROWS(risk::DiscretizedSpectrum((Eigen::VectorXd(2) << 0.0, 1.0).finished(),
                                         (Eigen::VectorXd(1) << 0.5).finished()));
  const auto d = risk::discretize(risk::Spectrum::wang(0.5), 4);
  const auto back = risk::DiscretizedSpectrum::parse(d.serialize());
  CHECK((back.levels() - d.levels()).norm() < 1e-12);
  CHECK((back.breakpoints() - d.breakpoints()).norm() < 1e-12);
}

TEST_CASE("pow 0.5 with five levels minimizing beta") {
  std::vector<double> values;
  for (int k = 0; k < 10; ++k) values.push_back(k);
  const auto X = uniform_on(values);
  const auto disc = risk::discretize(risk::Spectrum::pow(0.5), 5);
  const auto b = risk::minimizing_beta(disc, X);
  REQUIRE(b.size() == 4);
  // Any point of the flat quantile interval is a minimizer.
  const Eigen::VectorXd left = (Eigen::VectorXd(4) << 1, 3, 5, 7).finished();
  const Eigen::VectorXd right = (Eigen::VectorXd(4) << 2, 4, 6, 8).finished();
  CHECK(((b - left).norm() < 1e-9 || (b - right).norm() < 1e-9));
  CHECK(risk::sub_risk(disc, b, X) == doctest::Approx(risk::sub_risk(disc, right, X)).epsilon(1e-12));
  CHECK(risk::sub_risk(disc, b, X) == doctest::Approx(risk::spectral_risk(disc, X)).epsilon(1e-12));
}

TEST_CASE("sub-risk is an upper bound with equality at the minimizer") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 12.0);
  for (int k = 0; k < 30; ++k) {
    const auto X = random_distribution(rng, 0.0, 10.0);
    const auto disc = risk::discretize(risk::Spectrum::pow(0.4), 4);
    const double R = risk::spectral_risk(disc, X);
    CHECK(risk::sub_risk(disc, risk::minimizing_beta(disc, X), X) == doctest::Approx(R).epsilon(1e-10));
    for (int j = 0; j < 10; ++j) {
      std::vector<double> v{u(rng), u(rng), u(rng)};
      std::sort(v.begin(), v.end());
      CHECK(risk::sub_risk(disc, Eigen::Map<Eigen::VectorXd>(v.data(), 3), X) >= R - 1e-12);
    }
  }
}

TEST_CASE("hinge function shape and conjugate") {
  const auto disc = risk::discretize(risk::Spectrum::cvar(0.5), 2);
  const risk::HingeFunction g(disc, (Eigen::VectorXd(1) << 2.0).finished());
  CHECK(g(1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g(3.0) == doctest::Approx(2.0));
  CHECK(g.slope(3.0) == doctest::Approx(2.0));
  CHECK(g.conjugate_integral() == doctest::Approx(2.0));
  CHECK(risk::conjugate_integral(disc, g.beta()) == doctest::Approx(oracle::conjugate_integral(disc, g.beta())).epsilon(1e-6));
  CHECK_THROWS(risk::check_beta(disc, (Eigen::VectorXd(2) << 1.0, 2.0).finished()));
}

TEST_CASE("distribution quantiles are left continuous") {
  const auto X = uniform_on({0, 1, 2, 3});
  CHECK(X.quantile(0.0) == 0.0);
  CHECK(X.quantile(0.25) == 0.0);
  CHECK(X.quantile(0.26) == 1.0);
  CHECK(X.cdf(1.5) == doctest::Approx(0.5));
  CHECK_THROWS(risk::ReturnDistribution({{0.0, 0.3}, {1.0, 0.3}}));
}

TEST_CASE("discretization bound holds for pow spectra") {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 40; ++k) {
    const auto X = random_distribution(rng, 0.0, 10.0);
    for (int M : {2, 3, 7}) {
      const auto spec = risk::Spectrum::pow(0.6);
      CHECK(std::abs(risk::spectral_risk(spec, X) - risk::spectral_risk(risk::discretize(spec, M), X)) <=
            risk::discretization_error_bound(spec, M, 1.0, 0.9) + 1e-12);
    }
  }
}
