#include <doctest.h>

#include <cmath>

#include "asterenv/design.hpp"
#include "asterenv/error.hpp"
#include "asterenv/model.hpp"
#include "asterenv/scenario.hpp"
#include "oracles.hpp"

using namespace asterenv;

namespace {

Scenario small_chain(std::size_t n, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.graph = ScenarioGraph::Chain;
  spec.n_individuals = n;
  spec.quadratic = false;
  return generate_scenario(spec, seed);
}

AsterModel model_of(const Scenario& s) { return make_model(*s.design, s.data); }

}  // namespace

TEST_SUITE("model") {

TEST_CASE("log likelihood matches per-individual enumeration") {
  const Scenario s = small_chain(40, 2);
  const AsterModel m = model_of(s);
  Eigen::VectorXd beta(m.dim());
  beta << -1.5, 0.8, 0.3, -0.2;
  const Eigen::VectorXd phi = m.linear_predictor(beta);
  double ref = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    const auto r = oracle::chain_by_enumeration(phi[2 * i], phi[2 * i + 1]);
    ref += m.response()[2 * i] * phi[2 * i] + m.response()[2 * i + 1] * phi[2 * i + 1] - r.cumulant;
  }
  CHECK(log_lik(m, beta) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("score and Fisher information are derivatives of the log likelihood") {
  const Scenario s = small_chain(60, 3);
  const AsterModel m = model_of(s);
  Eigen::VectorXd beta(m.dim());
  beta << -1.2, 0.5, 0.4, 0.1;
  const Eigen::VectorXd g = oracle::gradient([&](const Eigen::VectorXd& b) { return log_lik(m, b); }, beta);
  CHECK((score(m, beta) - g).cwiseAbs().maxCoeff() < 1e-5 * (1 + g.cwiseAbs().maxCoeff()));
  const Eigen::MatrixXd H = oracle::jacobian([&](const Eigen::VectorXd& b) { return score(m, b); }, beta);
  const Eigen::MatrixXd F = fisher_info(m, beta);
  CHECK((F + H).cwiseAbs().maxCoeff() < 1e-5 * (1 + F.cwiseAbs().maxCoeff()));
  CHECK((F - F.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit solves observed equals expected") {
  const Scenario s = generate_scenario(ScenarioSpec{}, 4);
  const AsterModel m = model_of(s);
  const FitResult fit = fit_mle(m);
  CHECK(observed_expected_gap(m, fit.mu) < 1e-7);
  CHECK(fit.sigma.rows() == static_cast<Eigen::Index>(m.dim()));
  CHECK(fit.sigma_vv.rows() == static_cast<Eigen::Index>(m.interest_dim()));
  for (std::size_t t = 1; t < fit.trace.size(); ++t) CHECK(fit.trace[t] >= fit.trace[t - 1] - 1e-9);
  // The fitted value maximizes: small perturbations lower the likelihood.
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    Eigen::VectorXd b = fit.beta;
    b[j] += 1e-3;
    CHECK(log_lik(m, b) < fit.loglik);
  }
  NewtonOptions lean;
  lean.fisher_at_solution = false;
  const FitResult f2 = fit_mle(m, {}, lean);
  CHECK(f2.sigma.size() == 0);
  CHECK((f2.beta - fit.beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("beta and tau round trip") {
  const Scenario s = generate_scenario(ScenarioSpec{}, 5);
  const AsterModel m = model_of(s);
  const Eigen::VectorXd tau = beta_to_tau(m, s.beta);
  CHECK((tau - s.tau).cwiseAbs().maxCoeff() < 1e-8 * (1 + tau.cwiseAbs().maxCoeff()));
  const Eigen::VectorXd back = tau_to_beta(m, tau);
  CHECK((back - s.beta).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("transformed models fit in reduced coordinates") {
  const Scenario s = small_chain(500, 6);
  const AsterModel m = model_of(s);
  // Project the two covariate effects onto one direction.
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(4, 4);
  const Eigen::Vector2d d = Eigen::Vector2d(1.0, 1.0).normalized();
  T.bottomRightCorner(2, 2) = d * d.transpose();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(4, 3);
  B(0, 0) = B(1, 1) = 1.0;
  B.bottomRightCorner(2, 1) = d;
  const AsterModel mt = m.with_transform(T, B);
  CHECK(mt.rank() == 3);
  const FitResult fit = fit_mle(mt);
  CHECK(observed_expected_gap(mt, fit.mu) < 1e-7);
  // Minimum norm: beta lies in the row space of M T.
  CHECK(std::abs(fit.beta[2] - fit.beta[3]) < 1e-10);
  // The same fit by direct reparameterization.
  const Eigen::MatrixXd M3 = m.base_matrix() * B;
  const AsterModel direct(m.graph_ptr(), m.response(), std::make_shared<const Eigen::MatrixXd>(M3), m.offset_ptr(), 1);
  const FitResult fd = fit_mle(direct);
  CHECK(fit.loglik == doctest::Approx(fd.loglik).epsilon(1e-10));
  CHECK((B * fd.beta - fit.beta).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("input errors") {
  const Scenario s = small_chain(20, 7);
  const AsterModel m = model_of(s);
  Eigen::VectorXd y = m.response();
  y[0] = 0.0;
  y[1] = 2.0;
  CHECK_THROWS_AS(check_response(m.graph(), y), ValidationError);
  y = m.response();
  y[1] = 0.5;
  CHECK_THROWS_AS(m.with_response(y), ValidationError);
  Eigen::MatrixXd M = m.base_matrix();
  M.col(3) = M.col(2);
  try {
    AsterModel bad(m.graph_ptr(), m.response(), std::make_shared<const Eigen::MatrixXd>(M), m.offset_ptr(), 2);
    FAIL("expected rank deficiency");
  } catch (const NumericalError& e) {
    CHECK(e.kind() == NumericalError::Kind::RankDeficient);
  }
}

}
