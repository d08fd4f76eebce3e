#include "asterenv/exp_family.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "asterenv/error.hpp"

namespace asterenv {

namespace {

// Above this the zero-truncated cumulant equals e^theta to machine precision.
constexpr double kZtpLargeTheta = 30.0;
// Below this e^theta < 1e-13 and log(expm1(lambda)) = theta + lambda / 2.
constexpr double kZtpSmallTheta = -30.0;
// The variance 1 + lambda - mean cancels badly for tiny lambda; use the series.
constexpr double kZtpSeriesLambda = 1e-3;
// Inversion sampler for the truncated law up to this rate, rejection above.
constexpr double kZtpInversionLambda = 30.0;

void check_finite(double theta) {
  if (!std::isfinite(theta)) {
    throw NumericalError(NumericalError::Kind::Domain,
                         "canonical parameter is not finite: " + std::to_string(theta));
  }
}

CumulantDerivs bernoulli(double theta) {
  const double e = std::exp(-std::abs(theta));
  const double value = (theta > 0 ? theta : 0.0) + std::log1p(e);
  const double mean = theta >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  const double variance = e / ((1.0 + e) * (1.0 + e));
  return {value, mean, variance};
}

CumulantDerivs poisson(double theta) {
  const double lambda = std::exp(theta);
  if (!std::isfinite(lambda)) {
    throw NumericalError(NumericalError::Kind::Overflow,
                         "Poisson cumulant overflows at theta = " + std::to_string(theta));
  }
  return {lambda, lambda, lambda};
}

CumulantDerivs zero_truncated_poisson(double theta) {
  const double lambda = std::exp(theta);
  if (!std::isfinite(lambda)) {
    throw NumericalError(NumericalError::Kind::Overflow,
                         "zero-truncated Poisson cumulant overflows at theta = " + std::to_string(theta));
  }
  double value;
  if (theta > kZtpLargeTheta) {
    value = lambda;
  } else if (theta < kZtpSmallTheta) {
    value = theta + 0.5 * lambda;
  } else if (lambda <= 1.0) {
    value = std::log(std::expm1(lambda));
  } else {
    value = lambda + std::log(-std::expm1(-lambda));
  }

  double mean;
  double excess;  // 1 + lambda - mean
  if (lambda < kZtpSeriesLambda) {
    const double l2 = lambda * lambda;
    mean = 1.0 + 0.5 * lambda + l2 / 12.0 - l2 * l2 / 720.0;
    excess = 0.5 * lambda - l2 / 12.0 + l2 * l2 / 720.0;
  } else {
    mean = lambda / -std::expm1(-lambda);
    excess = 1.0 + lambda - mean;
  }
  return {value, mean, mean * excess};
}

std::int64_t sample_ztp_one(double lambda, Rng& rng) {
  if (lambda <= kZtpInversionLambda) {
    if (!(lambda > 0.0)) return 1;
    const double u = uniform01(rng);
    std::int64_t y = 1;
    double p = lambda / std::expm1(lambda);
    double cdf = p;
    while (u > cdf) {
      ++y;
      p *= lambda / static_cast<double>(y);
      if (p <= 0.0) break;  // cdf stalled below u by rounding
      cdf += p;
    }
    return y;
  }
  std::poisson_distribution<std::int64_t> pois(lambda);
  std::int64_t y = 0;
  while (y == 0) y = pois(rng);
  return y;
}

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Bernoulli: return "bernoulli";
    case Family::Poisson: return "poisson";
    case Family::ZeroTruncatedPoisson: return "zero_truncated_poisson";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) {
  if (name == "bernoulli") return Family::Bernoulli;
  if (name == "poisson") return Family::Poisson;
  if (name == "zero_truncated_poisson" || name == "ztp" || name == "truncated_poisson") {
    return Family::ZeroTruncatedPoisson;
  }
  return std::nullopt;
}

CumulantDerivs cumulant_all(Family f, double theta) {
  check_finite(theta);
  switch (f) {
    case Family::Bernoulli: return bernoulli(theta);
    case Family::Poisson: return poisson(theta);
    case Family::ZeroTruncatedPoisson: return zero_truncated_poisson(theta);
  }
  throw NumericalError(NumericalError::Kind::Domain, "unknown family");
}

double cumulant(Family f, double theta) { return cumulant_all(f, theta).value; }
double cumulant_d1(Family f, double theta) { return cumulant_all(f, theta).mean; }
double cumulant_d2(Family f, double theta) { return cumulant_all(f, theta).variance; }

std::int64_t sample_sum(Family f, double theta, std::int64_t n, Rng& rng) {
  if (n <= 0) return 0;
  check_finite(theta);
  switch (f) {
    case Family::Bernoulli: {
      const double p = bernoulli(theta).mean;
      std::int64_t total = 0;
      for (std::int64_t i = 0; i < n; ++i) total += uniform01(rng) < p ? 1 : 0;
      return total;
    }
    case Family::Poisson: {
      const double mean = static_cast<double>(n) * std::exp(theta);
      if (!(mean > 0.0)) return 0;
      std::poisson_distribution<std::int64_t> pois(mean);
      return pois(rng);
    }
    case Family::ZeroTruncatedPoisson: {
      const double lambda = std::exp(theta);
      std::int64_t total = 0;
      for (std::int64_t i = 0; i < n; ++i) total += sample_ztp_one(lambda, rng);
      return total;
    }
  }
  return 0;
}

double standard_normal(Rng& rng) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace asterenv
