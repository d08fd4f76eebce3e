#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asterenv/model.hpp"

namespace asterenv {

/// Spectral decomposition with eigenvalues strictly decreasing.
struct EigenBasis {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
  double min_relative_gap = 0.0;
};

/// Relative gap below which two eigenvalues count as equal.
inline constexpr double kEigenGapTolerance = 1e-8;

/// Sorted eigendecomposition of a symmetric positive definite matrix. Each
/// eigenvector's largest-magnitude entry is positive. Throws
/// NumericalError(Multiplicity) when adjacent eigenvalues are closer than
/// kEigenGapTolerance relative, and ValidationError for non-SPD input.
EigenBasis eigen_decompose(const Eigen::MatrixXd& sigma_vv);

/// Zero-based index sets. Sizes ascending, lexicographic within a size.
using IndexSet = std::vector<int>;

inline constexpr int kMaxReducingDim = 20;

/// Every nonempty subset of {0..k-1}; refuses k > kMaxReducingDim.
std::vector<IndexSet> enumerate_reducing_subspaces(int k);

enum class Method { ReducingSubspace, OneD };
enum class Criterion { AIC, BIC };

std::string to_string(Method m);
std::string to_string(Criterion c);
Method parse_method(const std::string& s);
Criterion parse_criterion(const std::string& s);

struct EnvelopeStructure {
  Method method = Method::ReducingSubspace;
  IndexSet index_set;       // reducing-subspace method only
  Eigen::MatrixXd gamma;    // k x u orthonormal basis
  Eigen::MatrixXd projection;
  int u = 0;
  double criterion_value = 0.0;

  bool full() const noexcept { return u == static_cast<int>(projection.rows()); }
};

/// Projection onto the span of the selected eigenvectors and the projected
/// interest estimate P upsilon_hat.
std::pair<EnvelopeStructure, Eigen::VectorXd> envelope_from_subspace(const EigenBasis& basis, const IndexSet& index_set,
                                                                     const Eigen::VectorXd& upsilon_hat);

/// Sequential one-direction envelope basis estimate from a k x k SPD matrix
/// M and a PSD matrix U. Returns an orthonormal k x u basis. Each direction
/// minimizes log(w'Mj w) + log(w'(Mj+Uj)^{-1} w) over unit w in the orthogonal
/// complement of the directions found so far, using multi-start projected
/// gradient descent polished by Riemannian Newton steps.
Eigen::MatrixXd onedim_algorithm(const Eigen::MatrixXd& M, const Eigen::MatrixXd& U, int u,
                                 std::uint64_t seed = 0x1d1d1d1dULL);

/// Value of the one-direction objective at w (not necessarily unit length).
double onedim_objective(const Eigen::MatrixXd& M, const Eigen::MatrixXd& U, const Eigen::VectorXd& w);

/// M diag(I, P): the interest block of M right-multiplied by P.
Eigen::MatrixXd build_envelope_matrix(const Eigen::MatrixXd& M, const Eigen::MatrixXd& P, std::size_t nuisance_dim);

/// The aster model with model matrix M diag(I, gamma gamma^T), fitted in the
/// coordinates diag(I, gamma).
AsterModel envelope_model(const AsterModel& base, const Eigen::MatrixXd& gamma);

/// Maximum likelihood fit of the envelope model; beta is minimum-norm.
struct EnvelopeFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd tau;  // (gamma_hat, P upsilon_hat)
  Eigen::VectorXd mu;
  double loglik = 0.0;
  double oe_gap = 0.0;  // observed-equals-expected residual of this fit
};

/// Fits the envelope model for `gamma`; a full-dimension gamma returns the base
/// fit unchanged.
EnvelopeFit fit_envelope(const AsterModel& base, const FitResult& base_fit, const Eigen::MatrixXd& gamma,
                         const NewtonOptions& opts = {});

struct CandidateReport {
  IndexSet index_set;  // empty for the 1D method
  int u = 0;
  double loglik = 0.0;
  int df = 0;
  double criterion_value = 0.0;
  bool skipped = false;
  std::string note;
};

struct SelectOptions {
  /// Evaluate only this index set (reducing-subspace) or dimension (1D).
  std::optional<IndexSet> fixed_index_set;
  std::optional<int> fixed_u;
  std::uint64_t onedim_seed = 0x1d1d1d1dULL;
  NewtonOptions newton;
  /// Skip candidates that provably cannot win. A candidate's maximized log
  /// likelihood is at most that of any candidate containing it, which bounds
  /// its criterion from below; candidates whose bound exceeds the best value
  /// so far are reported with note "pruned" and never fitted. The selection
  /// is the same as without pruning.
  bool prune = false;
};

struct Selection {
  EnvelopeStructure structure;
  EnvelopeFit fit;
  EigenBasis eigen;
  std::vector<CandidateReport> candidates;
};

/// Scores every candidate envelope by AIC = -2l + 2 df or BIC = -2l + df log n,
/// df = nuisance_dim + u and n the number of individuals, and returns the
/// minimizer (ties: smaller u, then earlier candidate). Candidates whose fit
/// fails are skipped and reported.
Selection select_structure(const AsterModel& model, const FitResult& fit, Method method, Criterion criterion,
                           const SelectOptions& opts = {});

/// Sine of the largest principal angle between the column spans of two
/// orthonormal matrices with the same number of columns.
double max_principal_angle_sin(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

/// Orthonormal basis of the orthogonal complement of span(A) (A orthonormal).
Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& A);

}  // namespace asterenv
