#include "asterenv/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "asterenv/error.hpp"
#include "asterenv/io.hpp"
#include "asterenv/model.hpp"
#include "asterenv/rng.hpp"

namespace asterenv {

ScenarioGraph parse_scenario_graph(const std::string& s) {
  if (s == "triplets") return ScenarioGraph::Triplets;
  if (s == "chain") return ScenarioGraph::Chain;
  throw ValidationError("unknown scenario graph \"" + s + "\" (expected triplets or chain)");
}

std::string to_string(ScenarioGraph g) { return g == ScenarioGraph::Triplets ? "triplets" : "chain"; }

GraphConfig triplet_graph_config() {
  GraphConfig g;
  for (int j = 1; j <= 10; ++j) {
    g.nodes.push_back({"U" + std::to_string(j), {j == 1 ? std::string(kRootId) : "U" + std::to_string(j - 1)},
                       "bernoulli", std::nullopt});
  }
  for (int j = 1; j <= 10; ++j) g.nodes.push_back({"V" + std::to_string(j), {"U" + std::to_string(j)}, "bernoulli", std::nullopt});
  for (int j = 1; j <= 10; ++j) {
    g.nodes.push_back({"W" + std::to_string(j), {"V" + std::to_string(j)}, "zero_truncated_poisson", std::nullopt});
    g.fitness_nodes.push_back("W" + std::to_string(j));
  }
  return g;
}

GraphConfig chain_graph_config() {
  GraphConfig g;
  g.nodes.push_back({"Y1", {kRootId}, "bernoulli", std::nullopt});
  g.nodes.push_back({"Y2", {"Y1"}, "zero_truncated_poisson", std::nullopt});
  g.fitness_nodes = {"Y2"};
  return g;
}

ModelConfig scenario_model_config(ScenarioGraph graph, bool quadratic) {
  ModelConfig m;
  m.covariates = {"z1", "z2"};
  m.quadratic = quadratic;
  if (graph == ScenarioGraph::Triplets) {
    auto layer = [](char c) {
      std::vector<std::string> ids;
      for (int j = 1; j <= 10; ++j) ids.push_back(std::string(1, c) + std::to_string(j));
      return ids;
    };
    m.nuisance = {{"survival", layer('U')}, {"first_survival", {"U1"}}, {"reproduced", layer('V')},
                  {"offspring", layer('W')}};
    m.interest_nodes = layer('W');
  } else {
    m.nuisance = {{"survival", {"Y1"}}, {"offspring", {"Y2"}}};
    m.interest_nodes = {"Y2"};
  }
  return m;
}

Eigen::VectorXd default_true_beta(ScenarioGraph graph, bool quadratic) {
  Eigen::VectorXd b;
  if (graph == ScenarioGraph::Triplets) {
    b.resize(quadratic ? 9 : 6);
    b.head(4) << -1.08, 0.3, -3.07, 1.25;
    b.segment(4, 2) << 0.1, 0.05;
    if (quadratic) b.tail(3) << -0.1, -0.08, 0.03;
  } else {
    b.resize(quadratic ? 7 : 4);
    b.head(4) << -1.95, 1.1, 0.2, -0.1;
    if (quadratic) b.tail(3) << -0.05, -0.04, 0.02;
  }
  return b;
}

void ScenarioSpec::validate() const {
  if (n_individuals < 1) throw ValidationError("scenario needs at least one individual");
  if (!(z_sd.array() >= 0.0).all()) throw ValidationError("covariate standard deviations must be nonnegative");
  if (true_subspace) {
    const int k = quadratic ? 5 : 2;
    if (true_subspace->empty()) throw ValidationError("true subspace must be nonempty");
    for (int i : *true_subspace) {
      if (i < 0 || i >= k) throw ValidationError("true subspace index out of range 1.." + std::to_string(k));
    }
  }
}

namespace {

Eigen::MatrixXd interest_block(const AsterModel& model, const Eigen::VectorXd& beta) {
  const auto k = static_cast<Eigen::Index>(model.interest_dim());
  return fisher_info(model, beta).bottomRightCorner(k, k);
}

// Equal-weight target minus the interest coefficients; v_j is oriented to
// agree with `orient` column j.
Eigen::VectorXd embed_residual(const AsterModel& model, const Eigen::VectorXd& beta, const IndexSet& G,
                               const Eigen::MatrixXd& orient, double length) {
  const auto k = static_cast<Eigen::Index>(model.interest_dim());
  const EigenBasis eb = eigen_decompose(interest_block(model, beta));
  Eigen::VectorXd r = -beta.tail(k);
  const double w = length / std::sqrt(static_cast<double>(G.size()));
  for (int j : G) {
    const double sign = eb.vectors.col(j).dot(orient.col(j)) < 0.0 ? -1.0 : 1.0;
    r += sign * w * eb.vectors.col(j);
  }
  return r / length;
}

// Interest coefficients outside the span of the designated eigenvectors,
// and the change in their length, both relative to `length`.
Eigen::VectorXd span_residual(const AsterModel& model, const Eigen::VectorXd& beta, const IndexSet& G,
                              double length) {
  const auto k = static_cast<Eigen::Index>(model.interest_dim());
  const EigenBasis eb = eigen_decompose(interest_block(model, beta));
  Eigen::VectorXd r(k + 1);
  r.head(k) = beta.tail(k);
  for (int j : G) r.head(k) -= eb.vectors.col(j) * eb.vectors.col(j).dot(beta.tail(k));
  r[k] = beta.tail(k).norm() - length;
  return r / length;
}

template <class Residual>
Eigen::MatrixXd fd_jacobian(const Residual& res, const Eigen::VectorXd& beta, Eigen::Index k) {
  const Eigen::Index q = beta.size() - k;
  Eigen::MatrixXd J;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double h = 1e-6 * std::max(1.0, std::abs(beta[q + c]));
    Eigen::VectorXd b = beta;
    b[q + c] += h;
    const Eigen::VectorXd fp = res(b);
    b[q + c] -= 2 * h;
    const Eigen::VectorXd fm = res(b);
    if (c == 0) J.resize(fp.size(), k);
    J.col(c) = (fp - fm) / (2 * h);
  }
  return J;
}

// Gauss-Newton with backtracking from `beta`; steps come from `solve`.
// Adds the iterations taken to `used`; false when stalled or out of budget.
template <class Residual, class Solve>
bool gauss_newton(const Residual& res, const Solve& solve, Eigen::VectorXd& beta, Eigen::Index k, int max_iterations,
                  double tolerance, int& used) {
  Eigen::VectorXd f = res(beta);
  for (int it = 1; it <= max_iterations; ++it, ++used) {
    const Eigen::VectorXd step = -solve(fd_jacobian(res, beta, k), f);
    bool accepted = false;
    double scale = 1.0;
    for (int halving = 0; halving < 30 && !accepted; ++halving, scale *= 0.5) {
      Eigen::VectorXd trial = beta;
      trial.tail(k) += scale * step;
      try {
        const Eigen::VectorXd ft = res(trial);
        if (ft.norm() < f.norm()) {
          beta = trial;
          f = ft;
          accepted = true;
        }
      } catch (const NumericalError&) {
      }
    }
    if (f.lpNorm<Eigen::Infinity>() < tolerance) return true;
    if (!accepted) return false;
  }
  return false;
}

// Builds a strict envelope structure: interest coefficients equal to
// r * sum_j s_j v_j / sqrt(|G|) with v_j the designated eigenvectors of
// Sigma_vv at beta itself, r the requested length and s_j the sign of the
// requested coordinate along v_j. Solved by Newton. When that system has no
// solution nearby, the weights are freed: minimum-norm Gauss-Newton steps on
// the off-span part at fixed length, from where Newton stopped. Returns the
// total iteration count.
int embed_subspace(const AsterModel& model, const IndexSet& G, Eigen::VectorXd& beta, const ScenarioSpec& spec) {
  const auto k = static_cast<Eigen::Index>(model.interest_dim());
  if (static_cast<Eigen::Index>(G.size()) == k) return 0;
  const double length = beta.tail(k).norm();
  if (length == 0.0) throw ValidationError("true-subspace embedding needs nonzero interest coefficients");
  Eigen::MatrixXd orient = eigen_decompose(interest_block(model, beta)).vectors;
  for (int j : G)
    if (orient.col(j).dot(beta.tail(k)) < 0.0) orient.col(j) *= -1.0;

  const auto equal_weight = [&](const Eigen::VectorXd& b) { return embed_residual(model, b, G, orient, length); };
  const auto newton = [](const Eigen::MatrixXd& J, const Eigen::VectorXd& f) -> Eigen::VectorXd {
    return J.colPivHouseholderQr().solve(f);
  };
  int used = 1;
  if (gauss_newton(equal_weight, newton, beta, k, spec.max_embed_iterations, spec.embed_tolerance, used)) return used;

  const auto free_weight = [&](const Eigen::VectorXd& b) { return span_residual(model, b, G, length); };
  const auto min_norm = [](const Eigen::MatrixXd& J, const Eigen::VectorXd& f) -> Eigen::VectorXd {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
    cod.setThreshold(1e-8);
    return cod.solve(f);
  };
  ++used;
  if (gauss_newton(free_weight, min_norm, beta, k, spec.max_embed_iterations, spec.embed_tolerance, used)) return used;
  throw NumericalError(NumericalError::Kind::NonConvergence,
                       "true-subspace embedding did not converge in " + std::to_string(spec.max_embed_iterations) +
                           " iterations");
}

}  // namespace

Scenario generate_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  Scenario s;
  s.spec = spec;
  s.seed = seed;
  s.graph = std::make_shared<const Graph>(spec.graph == ScenarioGraph::Triplets ? triplet_graph_config()
                                                                                 : chain_graph_config());
  s.design = std::make_shared<const Design>(s.graph, scenario_model_config(spec.graph, spec.quadratic));
  const std::size_t n = spec.n_individuals;
  const std::size_t N = s.graph->size();

  s.beta = spec.true_beta.size() ? spec.true_beta : default_true_beta(spec.graph, spec.quadratic);
  if (s.beta.size() != static_cast<Eigen::Index>(s.design->dim())) {
    throw ValidationError("true beta has length " + std::to_string(s.beta.size()) + ", model needs " +
                          std::to_string(s.design->dim()));
  }

  Rng zrng = stream(seed, {10});
  s.data.covariate_names = s.design->config().covariates;
  s.data.covariates.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    s.data.ids.push_back(std::to_string(i + 1));
    for (Eigen::Index c = 0; c < 2; ++c)
      s.data.covariates(static_cast<Eigen::Index>(i), c) = spec.z_mean[c] + spec.z_sd[c] * standard_normal(zrng);
  }
  s.data.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n * N));

  if (spec.true_subspace) {
    const AsterModel model = make_model(*s.design, s.data);
    s.embed_iterations = embed_subspace(model, *spec.true_subspace, s.beta, spec);
  }

  // Responses and tau need only the design rows, so tiny populations whose
  // model matrix is rank deficient still get data.
  const Eigen::MatrixXd M = s.design->model_matrix(s.design->select_covariates(s.data));
  s.theta = phi_to_theta(*s.graph, M * s.beta + s.design->offsets(n));
  Rng yrng = stream(seed, {11});
  s.data.y = simulate(*s.graph, s.theta, yrng);
  s.tau = M.transpose() * compute_mu(*s.graph, s.theta);
  try {
    const AsterModel model = make_model(*s.design, s.data);
    s.eigen = eigen_decompose(interest_block(model, s.beta));
  } catch (const NumericalError&) {
    // Rank-deficient design or tied eigenvalues: only the truth report loses
    // its eigenbasis.
  }
  s.profiles = s.data.covariates.topRows(static_cast<Eigen::Index>(std::min(n, spec.n_profiles)));
  return s;
}

void write_scenario(const std::filesystem::path& dir, const Scenario& s) {
  std::filesystem::create_directories(dir);
  write_dataset(dir / "data.csv", s.data, *s.graph);
  save_graph_config(dir / "graph.json", s.graph->config());
  save_model_config(dir / "model.json", s.design->config());
  write_profiles(dir / "profiles.csv", s.design->config().covariates, s.profiles);

  auto vec = [](const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(x);
    return a;
  };
  Json truth;
  truth["columns"] = s.design->column_names();
  truth["beta"] = vec(s.beta);
  truth["tau"] = vec(s.tau);
  if (s.spec.true_subspace) {
    Json idx = Json::array();
    for (int i : *s.spec.true_subspace) idx.push_back(i + 1);
    truth["true_subspace"] = idx;
    truth["embed_iterations"] = s.embed_iterations;
  }
  if (s.eigen.values.size()) {
    truth["eigenvalues"] = vec(s.eigen.values);
    Json vecs = Json::array();
    for (Eigen::Index c = 0; c < s.eigen.vectors.cols(); ++c) vecs.push_back(vec(s.eigen.vectors.col(c)));
    truth["eigenvectors"] = vecs;
  }
  write_json(dir / "truth.json", truth);

  Json config;
  config["graph"] = to_string(s.spec.graph);
  config["n"] = s.spec.n_individuals;
  config["quadratic"] = s.spec.quadratic;
  config["beta"] = vec(s.spec.true_beta.size() ? s.spec.true_beta : default_true_beta(s.spec.graph, s.spec.quadratic));
  config["z_mean"] = {s.spec.z_mean[0], s.spec.z_mean[1]};
  config["z_sd"] = {s.spec.z_sd[0], s.spec.z_sd[1]};
  if (s.spec.true_subspace) {
    Json idx = Json::array();
    for (int i : *s.spec.true_subspace) idx.push_back(i + 1);
    config["true_subspace"] = idx;
  }
  write_json(dir / "meta.json", make_meta(s.seed, config));
}

}  // namespace asterenv
