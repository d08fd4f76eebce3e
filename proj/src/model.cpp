#include "asterenv/model.hpp"

#include <cmath>
#include <string>

#include "asterenv/error.hpp"

namespace asterenv {

void check_response(const Graph& graph, const Eigen::VectorXd& y) {
  const std::size_t N = graph.size();
  const std::size_t n = static_cast<std::size_t>(y.size()) / N;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const double v = y[static_cast<Eigen::Index>(i * N + j)];
      if (!(v >= 0.0) || v != std::floor(v)) {
        throw ValidationError("individual " + std::to_string(i) + ", node " + graph.id(j) +
                              ": response must be a nonnegative integer, got " + std::to_string(v));
      }
      const int p = graph.predecessor(j);
      if (p >= 0 && v > 0.0 && y[static_cast<Eigen::Index>(i * N + p)] == 0.0) {
        throw ValidationError("individual " + std::to_string(i) + ", node " + graph.id(j) +
                              ": positive response below a zero predecessor (" + graph.id(p) + ")");
      }
    }
  }
}

AsterModel::AsterModel(std::shared_ptr<const Graph> graph, Eigen::VectorXd y, std::shared_ptr<const Eigen::MatrixXd> M,
                       std::shared_ptr<const Eigen::VectorXd> offset, std::size_t interest_dim)
    : graph_(std::move(graph)), y_(std::move(y)), M_(std::move(M)), offset_(std::move(offset)),
      interest_dim_(interest_dim) {
  const auto N = static_cast<Eigen::Index>(graph_->size());
  if (M_->rows() == 0 || M_->rows() % N != 0) {
    throw ValidationError("model matrix rows must be a positive multiple of the node count");
  }
  if (y_.size() != M_->rows() || offset_->size() != M_->rows()) {
    throw ValidationError("response, offset and model matrix disagree in length");
  }
  if (interest_dim_ > static_cast<std::size_t>(M_->cols())) {
    throw ValidationError("interest dimension exceeds the number of model matrix columns");
  }
  n_individuals_ = static_cast<std::size_t>(M_->rows() / N);
  check_response(*graph_, y_);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(*M_);
  if (qr.rank() < M_->cols()) {
    throw NumericalError(NumericalError::Kind::RankDeficient,
                         "model matrix has rank " + std::to_string(qr.rank()) + " < " + std::to_string(M_->cols()) +
                             " columns");
  }
  reduced_ = M_;
}

AsterModel AsterModel::with_response(Eigen::VectorXd y) const {
  if (y.size() != y_.size()) throw ValidationError("response length mismatch");
  check_response(*graph_, y);
  AsterModel copy = *this;
  copy.y_ = std::move(y);
  return copy;
}

AsterModel AsterModel::with_transform(const Eigen::MatrixXd& T, const Eigen::MatrixXd& basis) const {
  if (transform_) throw ValidationError("model already carries a column transform");
  const auto p = M_->cols();
  if (T.rows() != p || T.cols() != p || basis.rows() != p || basis.cols() == 0 || basis.cols() > p) {
    throw ValidationError("column transform or basis has the wrong shape");
  }
  AsterModel copy = *this;
  copy.transform_ = std::make_shared<const Eigen::MatrixXd>(T);
  copy.basis_ = std::make_shared<const Eigen::MatrixXd>(basis);
  copy.reduced_ = std::make_shared<const Eigen::MatrixXd>((*M_) * (T * basis));
  return copy;
}

Eigen::VectorXd AsterModel::tau_of(const Eigen::VectorXd& v) const {
  Eigen::VectorXd t = M_->transpose() * v;
  if (transform_) t = transform_->transpose() * t;
  return t;
}

Eigen::VectorXd AsterModel::linear_predictor(const Eigen::VectorXd& beta) const {
  if (transform_) return *offset_ + (*M_) * ((*transform_) * beta);
  return *offset_ + (*M_) * beta;
}

Eigen::MatrixXd AsterModel::effective_matrix() const {
  if (transform_) return (*M_) * (*transform_);
  return *M_;
}

Eigen::VectorXd AsterModel::to_reduced(const Eigen::VectorXd& beta) const {
  if (basis_) return basis_->transpose() * beta;
  return beta;
}

Eigen::VectorXd AsterModel::from_reduced(const Eigen::VectorXd& eta) const {
  if (basis_) return (*basis_) * eta;
  return eta;
}

namespace {

struct Point {
  Eigen::VectorXd eta;
  SaturatedState sat;
  double value = 0.0;
  Eigen::VectorXd grad;
};

Point evaluate(const AsterModel& model, const Eigen::VectorXd& target, const Eigen::VectorXd& eta, double phi_bound) {
  Point pt;
  pt.eta = eta;
  const Eigen::VectorXd phi = model.offset() + model.reduced_matrix() * eta;
  if (!phi.allFinite()) {
    throw NumericalError(NumericalError::Kind::Overflow, "linear predictor is not finite");
  }
  const double bound = phi.cwiseAbs().maxCoeff();
  if (bound > phi_bound) {
    throw NumericalError(NumericalError::Kind::Boundary,
                         "|phi| reached " + std::to_string(bound) +
                             " during iteration; data are on or near the boundary of the mean-value space");
  }
  pt.sat = evaluate_saturated(model.graph(), phi);
  pt.value = target.dot(eta) - pt.sat.cumulant;
  pt.grad = target - model.reduced_matrix().transpose() * pt.sat.mu;
  return pt;
}

Eigen::MatrixXd reduced_fisher(const AsterModel& model, const SaturatedState& sat) {
  const auto& X = model.reduced_matrix();
  return variance_gram(model.graph(), sat, X);
}

struct Solution {
  Point point;
  Eigen::MatrixXd fisher;  // reduced
  int iterations = 0;
  std::vector<double> trace;
};

// Maximizes <target, eta> - c(a + X eta) by Newton with step halving.
Solution newton(const AsterModel& model, const Eigen::VectorXd& target, Eigen::VectorXd eta,
                const NewtonOptions& opts) {
  const double tol = opts.rel_tol * (1.0 + target.cwiseAbs().maxCoeff());
  Solution sol;
  Point cur = evaluate(model, target, eta, opts.phi_bound);
  sol.trace.push_back(cur.value);
  for (int iter = 0;; ++iter) {
    const double gnorm = cur.grad.cwiseAbs().maxCoeff();
    if (gnorm < tol) {
      if (opts.fisher_at_solution) sol.fisher = reduced_fisher(model, cur.sat);
      sol.point = std::move(cur);
      sol.iterations = iter;
      return sol;
    }
    Eigen::MatrixXd H = reduced_fisher(model, cur.sat);
    if (iter >= opts.max_iter) {
      throw NumericalError(NumericalError::Kind::NonConvergence,
                           "Newton iterations did not converge in " + std::to_string(opts.max_iter) +
                               " steps (||score|| = " + std::to_string(gnorm) + ")");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > opts.max_condition) {
      throw NumericalError(NumericalError::Kind::IllConditioned,
                           "Fisher information is numerically singular (condition " + std::to_string(hi / lo) + ")");
    }
    const Eigen::VectorXd step = H.llt().solve(cur.grad);
    const double predicted = cur.grad.dot(step);
    bool accepted = false;
    double scale = 1.0;
    std::string rejected;
    for (int halving = 0; halving < 40 && !accepted; ++halving, scale *= 0.5) {
      Point trial;
      try {
        trial = evaluate(model, target, cur.eta + scale * step, opts.phi_bound);
      } catch (const NumericalError& e) {
        // Too long a step leaves the representable region; shorten it.
        rejected = e.what();
        continue;
      }
      if (trial.value > cur.value) {
        accepted = true;
      } else if (halving == 0 && 0.5 * predicted <= 1e-12 * (1.0 + std::abs(cur.value)) &&
                 trial.grad.cwiseAbs().maxCoeff() < gnorm) {
        // Roundoff regime: the likelihood cannot resolve the gain, the score can.
        accepted = true;
      }
      if (accepted) cur = std::move(trial);
    }
    if (!accepted) {
      if (!rejected.empty()) throw NumericalError(NumericalError::Kind::Boundary, rejected);
      throw NumericalError(NumericalError::Kind::NonConvergence,
                           "step halving failed to increase the log likelihood");
    }
    sol.trace.push_back(cur.value);
  }
}

Eigen::VectorXd start_or_zero(const AsterModel& model, const Eigen::VectorXd& beta0) {
  if (beta0.size() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.rank()));
  if (beta0.size() != static_cast<Eigen::Index>(model.dim())) throw ValidationError("start vector has wrong length");
  if (!beta0.allFinite()) throw NumericalError(NumericalError::Kind::Domain, "start vector is not finite");
  return model.to_reduced(beta0);
}

void check_beta(const AsterModel& model, const Eigen::VectorXd& beta) {
  if (beta.size() != static_cast<Eigen::Index>(model.dim())) throw ValidationError("beta has wrong length");
  if (!beta.allFinite()) throw NumericalError(NumericalError::Kind::Domain, "beta is not finite");
}

}  // namespace

double log_lik(const AsterModel& model, const Eigen::VectorXd& beta) {
  check_beta(model, beta);
  const auto sat = evaluate_saturated(model.graph(), model.linear_predictor(beta));
  return model.tau_of(model.response()).dot(beta) - sat.cumulant;
}

Eigen::VectorXd score(const AsterModel& model, const Eigen::VectorXd& beta) {
  check_beta(model, beta);
  const auto sat = evaluate_saturated(model.graph(), model.linear_predictor(beta));
  return model.tau_of(model.response()) - model.tau_of(sat.mu);
}

Eigen::MatrixXd fisher_info(const AsterModel& model, const Eigen::VectorXd& beta) {
  check_beta(model, beta);
  const auto sat = evaluate_saturated(model.graph(), model.linear_predictor(beta));
  const Eigen::MatrixXd X = model.effective_matrix();
  return variance_gram(model.graph(), sat, X);
}

Eigen::VectorXd beta_to_tau(const AsterModel& model, const Eigen::VectorXd& beta) {
  check_beta(model, beta);
  const auto sat = evaluate_saturated(model.graph(), model.linear_predictor(beta));
  return model.tau_of(sat.mu);
}

double observed_expected_gap(const AsterModel& model, const Eigen::VectorXd& mu) {
  const Eigen::VectorXd observed = model.tau_of(model.response());
  const Eigen::VectorXd expected = model.tau_of(mu);
  return (expected - observed).cwiseAbs().maxCoeff() / (1.0 + observed.cwiseAbs().maxCoeff());
}

FitResult fit_mle(const AsterModel& model, const Eigen::VectorXd& beta0, const NewtonOptions& opts) {
  FitResult fit;
  fit.tau = model.tau_of(model.response());
  const Eigen::VectorXd target = model.to_reduced(fit.tau);
  Solution sol = newton(model, target, start_or_zero(model, beta0), opts);
  fit.beta = model.from_reduced(sol.point.eta);
  fit.mu = std::move(sol.point.sat.mu);
  fit.loglik = sol.point.value;
  fit.iterations = sol.iterations;
  fit.score_norm = sol.point.grad.cwiseAbs().maxCoeff();
  fit.trace = std::move(sol.trace);
  if (!opts.fisher_at_solution) return fit;
  if (const auto* B = model.basis()) {
    fit.sigma = (*B) * sol.fisher * B->transpose();
  } else {
    fit.sigma = std::move(sol.fisher);
  }
  const auto k = static_cast<Eigen::Index>(model.interest_dim());
  fit.sigma_vv = fit.sigma.bottomRightCorner(k, k);
  return fit;
}

Eigen::VectorXd tau_to_beta(const AsterModel& model, const Eigen::VectorXd& tau, const Eigen::VectorXd& beta0,
                            const NewtonOptions& opts) {
  if (tau.size() != static_cast<Eigen::Index>(model.dim())) throw ValidationError("tau has wrong length");
  if (!tau.allFinite()) throw NumericalError(NumericalError::Kind::Domain, "tau is not finite");
  const Eigen::VectorXd target = model.to_reduced(tau);
  NewtonOptions lean = opts;
  lean.fisher_at_solution = false;
  Solution sol = newton(model, target, start_or_zero(model, beta0), lean);
  // A score tolerance of 1e-8 leaves beta short of working precision, which
  // round trips through tau should reach; full Newton steps polish it while
  // the score keeps shrinking.
  for (int polish = 0; polish < 3; ++polish) {
    const Eigen::MatrixXd H = reduced_fisher(model, sol.point.sat);
    try {
      Point trial = evaluate(model, target, sol.point.eta + H.llt().solve(sol.point.grad), opts.phi_bound);
      if (!(trial.grad.cwiseAbs().maxCoeff() < sol.point.grad.cwiseAbs().maxCoeff())) break;
      sol.point = std::move(trial);
    } catch (const NumericalError&) {
      break;
    }
  }
  Eigen::VectorXd beta = model.from_reduced(sol.point.eta);
  if (model.basis()) {
    // tau must lie in the row space for the system to be solvable at all.
    const Eigen::VectorXd achieved = model.tau_of(sol.point.sat.mu);
    const double gap = (achieved - tau).cwiseAbs().maxCoeff();
    if (gap > 1e3 * opts.rel_tol * (1.0 + tau.cwiseAbs().maxCoeff())) {
      throw NumericalError(NumericalError::Kind::NonConvergence,
                           "tau is not in the mean-value space of this model (residual " + std::to_string(gap) + ")");
    }
  }
  return beta;
}

}  // namespace asterenv
