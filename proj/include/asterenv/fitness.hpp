#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "asterenv/design.hpp"
#include "asterenv/model.hpp"

namespace asterenv {

/// Hypothetical individuals at which expected fitness is evaluated. Fitness is
/// the sum of the unconditional means of the graph's fitness nodes.
class FitnessQuery {
 public:
  /// `profiles` has one row per individual, columns ordered as the design's covariates.
  FitnessQuery(std::shared_ptr<const Design> design, Eigen::MatrixXd profiles);

  const Design& design() const noexcept { return *design_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(profiles_.rows()); }
  const Eigen::MatrixXd& profiles() const noexcept { return profiles_; }
  /// Stacked model matrix rows of every profile.
  const Eigen::MatrixXd& rows() const noexcept { return rows_; }
  const Eigen::VectorXd& offsets() const noexcept { return offsets_; }

 private:
  std::shared_ptr<const Design> design_;
  Eigen::MatrixXd profiles_;
  Eigen::MatrixXd rows_;
  Eigen::VectorXd offsets_;
};

/// h(mu) per profile at canonical parameter beta of `model` (the model's column
/// transform is applied to the profile rows).
Eigen::VectorXd fitness_at_beta(const AsterModel& model, const Eigen::VectorXd& beta, const FitnessQuery& query);

/// g(tau) = h[grad c{a + M f(tau)}] per profile. For rank-deficient models the
/// value is checked to be the same for two beta solving the system.
Eigen::VectorXd expected_fitness(const AsterModel& model, const Eigen::VectorXd& tau, const FitnessQuery& query,
                                 const Eigen::VectorXd& beta_start = {});

/// Delta-method standard error sqrt(grad g Sigma grad g') per profile, the
/// gradient by centered differences in tau (step 1e-5 relative).
Eigen::VectorXd delta_method_se(const AsterModel& model, const FitResult& fit, const FitnessQuery& query);

struct GridSpec {
  std::string z1;
  std::string z2;
  double z1_min = 0.0, z1_max = 0.0;
  double z2_min = 0.0, z2_max = 0.0;
  int n1 = 50;
  int n2 = 50;
};

struct GridPoint {
  double z1 = 0.0;
  double z2 = 0.0;
  double ghat = 0.0;
};

/// Expected fitness over the Cartesian grid of (z1, z2), other covariates held
/// at `template_profile`. Points are ordered z1-major.
std::vector<GridPoint> landscape_grid(const AsterModel& model, const Eigen::VectorXd& beta,
                                      std::shared_ptr<const Design> design, const GridSpec& grid,
                                      const Eigen::VectorXd& template_profile);

/// The grid profiles themselves, for callers that also want standard errors.
Eigen::MatrixXd grid_profiles(const Design& design, const GridSpec& grid, const Eigen::VectorXd& template_profile);

}  // namespace asterenv
