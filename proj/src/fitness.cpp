#include "asterenv/fitness.hpp"

#include <algorithm>
#include <cmath>

#include "asterenv/error.hpp"

namespace asterenv {

FitnessQuery::FitnessQuery(std::shared_ptr<const Design> design, Eigen::MatrixXd profiles)
    : design_(std::move(design)), profiles_(std::move(profiles)) {
  if (profiles_.cols() != static_cast<Eigen::Index>(design_->config().covariates.size())) {
    throw ValidationError("profiles must have one column per model covariate");
  }
  rows_ = design_->model_matrix(profiles_);
  offsets_ = design_->offsets(size());
}

Eigen::VectorXd fitness_at_beta(const AsterModel& model, const Eigen::VectorXd& beta, const FitnessQuery& query) {
  if (beta.size() != static_cast<Eigen::Index>(model.dim()) || query.rows().cols() != beta.size()) {
    throw ValidationError("beta does not match the fitness query design");
  }
  const Eigen::VectorXd effective = model.transform() ? Eigen::VectorXd((*model.transform()) * beta) : beta;
  const Eigen::VectorXd phi = query.offsets() + query.rows() * effective;
  const auto sat = evaluate_saturated(model.graph(), phi);
  const auto N = static_cast<Eigen::Index>(model.graph().size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(query.size()));
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    for (int j : model.graph().fitness_nodes()) g[i] += sat.mu[i * N + j];
  }
  return g;
}

Eigen::VectorXd expected_fitness(const AsterModel& model, const Eigen::VectorXd& tau, const FitnessQuery& query,
                                 const Eigen::VectorXd& beta_start) {
  const Eigen::VectorXd beta = tau_to_beta(model, tau, beta_start);
  Eigen::VectorXd g = fitness_at_beta(model, beta, query);
  if (model.basis()) {
    // Another solution: add a fixed vector from the null space of M T.
    const auto p = static_cast<Eigen::Index>(model.dim());
    Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(p, 1.0, 2.0);
    const Eigen::MatrixXd& B = *model.basis();
    r -= B * (B.transpose() * r);
    const Eigen::VectorXd other = fitness_at_beta(model, beta + r, query);
    const double gap = (other - g).cwiseAbs().maxCoeff();
    if (gap > 1e-8 * (1.0 + g.cwiseAbs().maxCoeff())) {
      throw NumericalError(NumericalError::Kind::RankDeficient,
                           "expected fitness depends on the choice of beta (gap " + std::to_string(gap) + ")");
    }
  }
  return g;
}

Eigen::VectorXd delta_method_se(const AsterModel& model, const FitResult& fit, const FitnessQuery& query) {
  const auto p = fit.tau.size();
  NewtonOptions tight;
  tight.rel_tol = 1e-13;
  Eigen::MatrixXd J(static_cast<Eigen::Index>(query.size()), p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const double h = 1e-5 * std::max(std::abs(fit.tau[c]), 1.0);
    Eigen::VectorXd up = fit.tau;
    Eigen::VectorXd down = fit.tau;
    up[c] += h;
    down[c] -= h;
    const Eigen::VectorXd g_up = fitness_at_beta(model, tau_to_beta(model, up, fit.beta, tight), query);
    const Eigen::VectorXd g_down = fitness_at_beta(model, tau_to_beta(model, down, fit.beta, tight), query);
    J.col(c) = (g_up - g_down) / (2.0 * h);
  }
  if (!J.allFinite()) throw NumericalError(NumericalError::Kind::Domain, "finite-difference gradient is not finite");
  Eigen::VectorXd se(J.rows());
  for (Eigen::Index i = 0; i < J.rows(); ++i) {
    const double v = J.row(i) * fit.sigma * J.row(i).transpose();
    se[i] = std::sqrt(std::max(v, 0.0));
  }
  return se;
}

Eigen::MatrixXd grid_profiles(const Design& design, const GridSpec& grid, const Eigen::VectorXd& template_profile) {
  const auto& cov = design.config().covariates;
  auto position = [&](const std::string& name) {
    auto it = std::find(cov.begin(), cov.end(), name);
    if (it == cov.end()) throw ValidationError("grid covariate \"" + name + "\" is not a model covariate");
    return static_cast<Eigen::Index>(it - cov.begin());
  };
  const auto a = position(grid.z1);
  const auto b = position(grid.z2);
  if (a == b) throw ValidationError("grid needs two distinct covariates");
  if (grid.n1 < 1 || grid.n2 < 1) throw ValidationError("grid resolution must be positive");
  if (template_profile.size() != static_cast<Eigen::Index>(cov.size())) {
    throw ValidationError("template profile has the wrong length");
  }
  Eigen::MatrixXd P(static_cast<Eigen::Index>(grid.n1) * grid.n2, template_profile.size());
  auto at = [](double lo, double hi, int n, int i) { return n == 1 ? lo : lo + (hi - lo) * i / (n - 1); };
  Eigen::Index r = 0;
  for (int i = 0; i < grid.n1; ++i) {
    for (int j = 0; j < grid.n2; ++j, ++r) {
      P.row(r) = template_profile.transpose();
      P(r, a) = at(grid.z1_min, grid.z1_max, grid.n1, i);
      P(r, b) = at(grid.z2_min, grid.z2_max, grid.n2, j);
    }
  }
  return P;
}

std::vector<GridPoint> landscape_grid(const AsterModel& model, const Eigen::VectorXd& beta,
                                      std::shared_ptr<const Design> design, const GridSpec& grid,
                                      const Eigen::VectorXd& template_profile) {
  const auto& cov = design->config().covariates;
  const auto a = std::find(cov.begin(), cov.end(), grid.z1) - cov.begin();
  const auto b = std::find(cov.begin(), cov.end(), grid.z2) - cov.begin();
  FitnessQuery query(design, grid_profiles(*design, grid, template_profile));
  const Eigen::VectorXd g = fitness_at_beta(model, beta, query);
  std::vector<GridPoint> out;
  out.reserve(query.size());
  for (Eigen::Index r = 0; r < g.size(); ++r) out.push_back({query.profiles()(r, a), query.profiles()(r, b), g[r]});
  return out;
}

}  // namespace asterenv
