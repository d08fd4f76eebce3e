#include "asterenv/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "asterenv/error.hpp"

namespace asterenv {

std::string to_string(Method m) { return m == Method::OneD ? "1d" : "subspace"; }
std::string to_string(Criterion c) { return c == Criterion::AIC ? "aic" : "bic"; }

Method parse_method(const std::string& s) {
  if (s == "subspace" || s == "reducing" || s == "reducing_subspace") return Method::ReducingSubspace;
  if (s == "1d" || s == "onedim" || s == "OneD") return Method::OneD;
  throw ValidationError("unknown envelope method \"" + s + "\" (expected subspace or 1d)");
}

Criterion parse_criterion(const std::string& s) {
  if (s == "aic" || s == "AIC") return Criterion::AIC;
  if (s == "bic" || s == "BIC") return Criterion::BIC;
  throw ValidationError("unknown criterion \"" + s + "\" (expected aic or bic)");
}

EigenBasis eigen_decompose(const Eigen::MatrixXd& sigma_vv) {
  const auto k = sigma_vv.rows();
  if (k < 1 || sigma_vv.cols() != k) throw ValidationError("eigen_decompose needs a nonempty square matrix");
  const double scale = sigma_vv.cwiseAbs().maxCoeff();
  if ((sigma_vv - sigma_vv.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ValidationError("matrix to decompose is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sigma_vv + sigma_vv.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError(NumericalError::Kind::NonConvergence, "eigensolver failed");
  EigenBasis out;
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  if (!(out.values[k - 1] > 0.0)) throw ValidationError("matrix to decompose is not positive definite");
  out.min_relative_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i + 1 < k; ++i) {
    const double gap = (out.values[i] - out.values[i + 1]) / out.values[i];
    out.min_relative_gap = std::min(out.min_relative_gap, gap);
    if (gap < kEigenGapTolerance) {
      throw NumericalError(NumericalError::Kind::Multiplicity,
                           "eigenvalues " + std::to_string(i + 1) + " and " + std::to_string(i + 2) +
                               " coincide (relative gap " + std::to_string(gap) + "); multiplicity one is required");
    }
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    out.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, c) < 0.0) out.vectors.col(c) *= -1.0;
  }
  return out;
}

std::vector<IndexSet> enumerate_reducing_subspaces(int k) {
  if (k < 1 || k > kMaxReducingDim) {
    throw ValidationError("reducing-subspace enumeration needs 1 <= k <= " + std::to_string(kMaxReducingDim) +
                          " (got " + std::to_string(k) + ")");
  }
  std::vector<IndexSet> out;
  out.reserve((std::size_t{1} << k) - 1);
  for (int size = 1; size <= k; ++size) {
    // Lexicographic combinations of `size` out of k.
    IndexSet idx(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
      out.push_back(idx);
      int pos = size - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == k - size + pos) --pos;
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
      for (int i = pos + 1; i < size; ++i) idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
    }
  }
  return out;
}

std::pair<EnvelopeStructure, Eigen::VectorXd> envelope_from_subspace(const EigenBasis& basis, const IndexSet& index_set,
                                                                     const Eigen::VectorXd& upsilon_hat) {
  const auto k = basis.vectors.cols();
  if (upsilon_hat.size() != k) throw ValidationError("upsilon has the wrong length");
  IndexSet sorted = index_set;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty() || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 0 ||
      sorted.back() >= k) {
    throw ValidationError("index set must be a nonempty set of distinct eigenvector indices");
  }
  EnvelopeStructure s;
  s.method = Method::ReducingSubspace;
  s.index_set = sorted;
  s.u = static_cast<int>(sorted.size());
  s.gamma.resize(k, s.u);
  for (int c = 0; c < s.u; ++c) s.gamma.col(c) = basis.vectors.col(sorted[static_cast<std::size_t>(c)]);
  s.projection = s.gamma * s.gamma.transpose();
  Eigen::VectorXd projected = s.projection * upsilon_hat;
  return {std::move(s), std::move(projected)};
}

Eigen::MatrixXd build_envelope_matrix(const Eigen::MatrixXd& M, const Eigen::MatrixXd& P, std::size_t nuisance_dim) {
  const auto k = P.rows();
  if (P.cols() != k || static_cast<Eigen::Index>(nuisance_dim) + k != M.cols()) {
    throw ValidationError("projection does not match the interest block of the model matrix");
  }
  Eigen::MatrixXd out = M;
  out.rightCols(k) = M.rightCols(k) * P;
  return out;
}

namespace {

Eigen::MatrixXd block_diag_identity(Eigen::Index q, const Eigen::MatrixXd& lower) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q + lower.rows(), q + lower.cols());
  out.topLeftCorner(q, q).setIdentity();
  out.bottomRightCorner(lower.rows(), lower.cols()) = lower;
  return out;
}

}  // namespace

AsterModel envelope_model(const AsterModel& base, const Eigen::MatrixXd& gamma) {
  const auto q = static_cast<Eigen::Index>(base.nuisance_dim());
  if (gamma.rows() != static_cast<Eigen::Index>(base.interest_dim())) {
    throw ValidationError("envelope basis does not match the interest dimension");
  }
  return base.with_transform(block_diag_identity(q, gamma * gamma.transpose()), block_diag_identity(q, gamma));
}

EnvelopeFit fit_envelope(const AsterModel& base, const FitResult& base_fit, const Eigen::MatrixXd& gamma,
                         const NewtonOptions& opts) {
  EnvelopeFit out;
  if (gamma.cols() == static_cast<Eigen::Index>(base.interest_dim())) {
    out.beta = base_fit.beta;
    out.tau = base_fit.tau;
    out.mu = base_fit.mu;
    out.loglik = base_fit.loglik;
    out.oe_gap = observed_expected_gap(base, base_fit.mu);
    return out;
  }
  const AsterModel env = envelope_model(base, gamma);
  const Eigen::VectorXd start = env.from_reduced(env.to_reduced(base_fit.beta));
  FitResult fit = fit_mle(env, start, opts);
  out.beta = std::move(fit.beta);
  out.tau = std::move(fit.tau);
  out.oe_gap = observed_expected_gap(env, fit.mu);
  out.mu = std::move(fit.mu);
  out.loglik = fit.loglik;
  return out;
}

Selection select_structure(const AsterModel& model, const FitResult& fit, Method method, Criterion criterion,
                           const SelectOptions& opts) {
  const auto k = static_cast<int>(model.interest_dim());
  if (k < 1) throw ValidationError("envelope selection needs at least one interest column");
  const auto q = static_cast<int>(model.nuisance_dim());
  const double n = static_cast<double>(model.n_individuals());
  const Eigen::VectorXd upsilon = fit.tau.tail(k);

  Selection sel;
  sel.eigen = eigen_decompose(fit.sigma_vv);

  struct Candidate {
    IndexSet index_set;
    Eigen::MatrixXd gamma;
  };
  std::vector<Candidate> candidates;
  if (method == Method::ReducingSubspace) {
    std::vector<IndexSet> sets;
    if (opts.fixed_index_set) {
      sets.push_back(*opts.fixed_index_set);
    } else {
      sets = enumerate_reducing_subspaces(k);
    }
    for (auto& s : sets) {
      auto [structure, projected] = envelope_from_subspace(sel.eigen, s, upsilon);
      candidates.push_back({structure.index_set, std::move(structure.gamma)});
    }
  } else {
    // Per-individual scale: asymptotic covariance Sigma/n of upsilon_hat/n.
    const Eigen::VectorXd v = upsilon / n;
    const Eigen::MatrixXd full =
        onedim_algorithm(fit.sigma_vv / n, v * v.transpose(), opts.fixed_u ? *opts.fixed_u : k, opts.onedim_seed);
    if (opts.fixed_u) {
      if (*opts.fixed_u < 1 || *opts.fixed_u > k) throw ValidationError("envelope dimension out of range");
      candidates.push_back({{}, full});
    } else {
      for (int u = 1; u <= k; ++u) candidates.push_back({{}, full.leftCols(u)});
    }
  }

  const auto contains = [&](std::size_t outer, std::size_t inner) {
    const auto& a = candidates[outer];
    const auto& b = candidates[inner];
    if (method == Method::OneD) return a.gamma.cols() > b.gamma.cols();
    return a.index_set.size() > b.index_set.size() &&
           std::includes(a.index_set.begin(), a.index_set.end(), b.index_set.begin(), b.index_set.end());
  };
  // Larger candidates first so that every superset is settled before its subsets.
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].gamma.cols() > candidates[b].gamma.cols();
  });

  NewtonOptions newton = opts.newton;
  newton.fisher_at_solution = false;
  const double log_n = std::log(n);
  sel.candidates.resize(candidates.size());
  std::vector<double> deviance_floor(candidates.size(), -std::numeric_limits<double>::infinity());
  std::vector<EnvelopeFit> fits(candidates.size());
  int best = -1;
  const auto better = [&](std::size_t i) {
    if (best < 0) return true;
    const double a = sel.candidates[i].criterion_value;
    const double b = sel.candidates[static_cast<std::size_t>(best)].criterion_value;
    return a < b || (a == b && static_cast<int>(i) < best);
  };
  for (std::size_t i : order) {
    auto& cand = candidates[i];
    CandidateReport& rep = sel.candidates[i];
    rep.index_set = cand.index_set;
    rep.u = static_cast<int>(cand.gamma.cols());
    rep.df = q + rep.u;
    const double penalty = criterion == Criterion::AIC ? 2.0 * rep.df : rep.df * log_n;
    if (opts.prune) {
      for (std::size_t j : order) {
        if (j != i && contains(j, i)) deviance_floor[i] = std::max(deviance_floor[i], deviance_floor[j]);
      }
      const double margin = 1e-6 * (1.0 + std::abs(deviance_floor[i]));
      if (best >= 0 &&
          deviance_floor[i] + penalty > sel.candidates[static_cast<std::size_t>(best)].criterion_value + margin) {
        rep.skipped = true;
        rep.loglik = std::numeric_limits<double>::quiet_NaN();
        rep.criterion_value = std::numeric_limits<double>::quiet_NaN();
        rep.note = "pruned";
        continue;
      }
    }
    try {
      fits[i] = fit_envelope(model, fit, cand.gamma, newton);
      rep.loglik = fits[i].loglik;
      rep.criterion_value = -2.0 * rep.loglik + penalty;
      deviance_floor[i] = -2.0 * rep.loglik;
      if (better(i)) best = static_cast<int>(i);
    } catch (const NumericalError& e) {
      rep.skipped = true;
      rep.loglik = std::numeric_limits<double>::quiet_NaN();
      rep.criterion_value = std::numeric_limits<double>::quiet_NaN();
      rep.note = e.what();
    }
  }
  if (best < 0) {
    throw NumericalError(NumericalError::Kind::NonConvergence, "every envelope candidate failed to fit");
  }
  EnvelopeFit best_fit = std::move(fits[static_cast<std::size_t>(best)]);
  const auto& chosen = candidates[static_cast<std::size_t>(best)];
  sel.structure.method = method;
  sel.structure.index_set = chosen.index_set;
  sel.structure.gamma = chosen.gamma;
  sel.structure.projection = chosen.gamma * chosen.gamma.transpose();
  sel.structure.u = static_cast<int>(chosen.gamma.cols());
  sel.structure.criterion_value = sel.candidates[static_cast<std::size_t>(best)].criterion_value;
  sel.fit = std::move(best_fit);
  return sel;
}

double max_principal_angle_sin(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ValidationError("subspace bases differ in shape");
  const Eigen::MatrixXd residual = A - B * (B.transpose() * A);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
  return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& A) {
  const auto k = A.rows();
  if (A.cols() == 0) return Eigen::MatrixXd::Identity(k, k);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  return Q.rightCols(k - A.cols());
}

}  // namespace asterenv
