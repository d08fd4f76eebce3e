#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "asterenv/rng.hpp"

namespace asterenv {

/// One-parameter exponential families allowed on graph arrows. Canonical
/// parameters: Bernoulli theta = logit(p); Poisson and zero-truncated Poisson
/// theta = log(lambda) of the untruncated rate.
enum class Family { Bernoulli, Poisson, ZeroTruncatedPoisson };

std::string_view family_name(Family f);
std::optional<Family> parse_family(std::string_view name);

/// Cumulant c(theta) and its first two derivatives (conditional mean and variance
/// of one draw). All throw NumericalError(Domain) on non-finite theta.
double cumulant(Family f, double theta);
double cumulant_d1(Family f, double theta);
double cumulant_d2(Family f, double theta);

struct CumulantDerivs {
  double value;
  double mean;
  double variance;
};

/// All three at once; the hot path of every likelihood evaluation.
CumulantDerivs cumulant_all(Family f, double theta);

/// Sum of n iid draws from the family at canonical parameter theta.
/// n == 0 gives 0.
std::int64_t sample_sum(Family f, double theta, std::int64_t n, Rng& rng);

}  // namespace asterenv
