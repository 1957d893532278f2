#pragma once

namespace srcpo {

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal CDF, accurate to double precision over the whole line.
double normal_cdf(double x);

/// Upper tail 1 - Phi(x), computed without cancellation.
double normal_sf(double x);

/// log(1 - Phi(x)); stays finite far into the upper tail.
double log_normal_sf(double x);

/// Standard normal quantile for p in (0, 1). Throws std::domain_error otherwise.
double normal_inv_cdf(double p);

}  // namespace srcpo
