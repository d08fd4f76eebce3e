#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <vector>

#include "asterenv/graph.hpp"

namespace asterenv {

/// Canonical affine submodel phi = a + M beta over a fixed population.
///
/// The effective model matrix is M T, where T is the identity for an ordinary
/// model and diag(I, P) for an envelope model. Fitting always happens in a
/// full-rank parameterization beta = B eta, with B an orthonormal basis of the
/// row space of M T, so rank-deficient envelope models get the minimum-norm beta.
/// The interest block (upsilon) is the trailing `interest_dim` columns.
class AsterModel {
 public:
  /// Ordinary model. Checks dimensions, response consistency with the graph,
  /// and full column rank of M (throws NumericalError(RankDeficient)).
  AsterModel(std::shared_ptr<const Graph> graph, Eigen::VectorXd y, std::shared_ptr<const Eigen::MatrixXd> M,
             std::shared_ptr<const Eigen::VectorXd> offset, std::size_t interest_dim);

  /// Same design and offset with a new response vector (bootstrap data).
  AsterModel with_response(Eigen::VectorXd y) const;

  /// Model with effective matrix M T. `basis` must be an orthonormal p x r
  /// basis of the row space of M T.
  AsterModel with_transform(const Eigen::MatrixXd& T, const Eigen::MatrixXd& basis) const;

  const Graph& graph() const noexcept { return *graph_; }
  std::shared_ptr<const Graph> graph_ptr() const noexcept { return graph_; }
  std::size_t n_individuals() const noexcept { return n_individuals_; }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(M_->rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(M_->cols()); }
  std::size_t rank() const noexcept { return static_cast<std::size_t>(basis_cols()); }
  std::size_t interest_dim() const noexcept { return interest_dim_; }
  std::size_t nuisance_dim() const noexcept { return dim() - interest_dim_; }
  bool transformed() const noexcept { return transform_ != nullptr; }

  const Eigen::VectorXd& response() const noexcept { return y_; }
  const Eigen::MatrixXd& base_matrix() const noexcept { return *M_; }
  std::shared_ptr<const Eigen::MatrixXd> base_matrix_ptr() const noexcept { return M_; }
  const Eigen::VectorXd& offset() const noexcept { return *offset_; }
  std::shared_ptr<const Eigen::VectorXd> offset_ptr() const noexcept { return offset_; }
  /// T, or nullptr for the identity.
  const Eigen::MatrixXd* transform() const noexcept { return transform_.get(); }
  /// B, or nullptr for the identity.
  const Eigen::MatrixXd* basis() const noexcept { return basis_.get(); }
  /// M T B: the full-rank matrix Newton iterations run on.
  const Eigen::MatrixXd& reduced_matrix() const noexcept { return *reduced_; }

  /// (M T)^T v.
  Eigen::VectorXd tau_of(const Eigen::VectorXd& v) const;
  /// a + M T beta.
  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& beta) const;
  /// Materialized M T.
  Eigen::MatrixXd effective_matrix() const;

  Eigen::VectorXd to_reduced(const Eigen::VectorXd& beta) const;
  Eigen::VectorXd from_reduced(const Eigen::VectorXd& eta) const;

 private:
  AsterModel() = default;
  Eigen::Index basis_cols() const noexcept { return reduced_->cols(); }

  std::shared_ptr<const Graph> graph_;
  std::size_t n_individuals_ = 0;
  Eigen::VectorXd y_;
  std::shared_ptr<const Eigen::MatrixXd> M_;
  std::shared_ptr<const Eigen::VectorXd> offset_;
  std::size_t interest_dim_ = 0;
  std::shared_ptr<const Eigen::MatrixXd> transform_;
  std::shared_ptr<const Eigen::MatrixXd> basis_;
  std::shared_ptr<const Eigen::MatrixXd> reduced_;
};

/// Rejects responses that are negative, non-integer, or positive below a zero
/// predecessor. Messages carry the individual and node.
void check_response(const Graph& graph, const Eigen::VectorXd& y);

struct NewtonOptions {
  double rel_tol = 1e-8;   // on ||score||_inf / (1 + ||target||_inf)
  int max_iter = 100;
  double phi_bound = 100.0;
  double max_condition = 1e12;
  /// When false the Fisher information at the solution is not formed and
  /// FitResult::sigma stays empty.
  bool fisher_at_solution = true;
};

struct FitResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd tau;         // (M T)^T y, exactly
  Eigen::VectorXd mu;          // fitted saturated means
  Eigen::MatrixXd sigma;       // Fisher information for beta, p x p
  Eigen::MatrixXd sigma_vv;    // trailing interest block
  double loglik = 0.0;
  int iterations = 0;
  double score_norm = 0.0;     // final ||score||_inf
  std::vector<double> trace;   // log likelihood after each accepted step
};

/// l(beta) = <(MT)^T y, beta> - c(a + M T beta).
double log_lik(const AsterModel& model, const Eigen::VectorXd& beta);
Eigen::VectorXd score(const AsterModel& model, const Eigen::VectorXd& beta);
/// (MT)^T Var(Y) (MT) at beta.
Eigen::MatrixXd fisher_info(const AsterModel& model, const Eigen::VectorXd& beta);

/// Maximum likelihood by damped Newton. beta0 defaults to zero.
FitResult fit_mle(const AsterModel& model, const Eigen::VectorXd& beta0 = {}, const NewtonOptions& opts = {});

/// Solves (MT)^T mu(beta) = tau; minimum-norm beta for rank-deficient models.
Eigen::VectorXd tau_to_beta(const AsterModel& model, const Eigen::VectorXd& tau, const Eigen::VectorXd& beta0 = {},
                            const NewtonOptions& opts = {});

/// tau(beta) = (MT)^T mu(beta).
Eigen::VectorXd beta_to_tau(const AsterModel& model, const Eigen::VectorXd& beta);

/// max |(MT)^T mu_hat - (MT)^T y| relative to 1 + ||(MT)^T y||_inf.
double observed_expected_gap(const AsterModel& model, const Eigen::VectorXd& mu);

}  // namespace asterenv
