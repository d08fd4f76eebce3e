#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "asterenv/error.hpp"
#include "asterenv/graph.hpp"
#include "asterenv/scenario.hpp"
#include "oracles.hpp"

using namespace asterenv;

namespace {

bool has(const std::vector<Violation>& vs, const std::string& assumption, const std::string& node) {
  return std::any_of(vs.begin(), vs.end(),
                     [&](const Violation& v) { return v.assumption == assumption && v.node == node; });
}

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed, double scale) {
  Rng rng = stream(seed, {});
  Eigen::VectorXd v(n);
  for (auto& x : v) x = scale * (2 * uniform01(rng) - 1);
  return v;
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("scenario graphs are valid") {
  CHECK(validate(triplet_graph_config()).empty());
  CHECK(validate(chain_graph_config()).empty());
  const Graph g(triplet_graph_config());
  CHECK(g.size() == 30);
  CHECK(g.fitness_nodes().size() == 10);
  CHECK(g.predecessor(*g.index_of("U1")) == -1);
  CHECK(g.predecessor(*g.index_of("W3")) == static_cast<int>(*g.index_of("V3")));
  // Topological order puts every predecessor first.
  std::vector<int> pos(g.size());
  for (std::size_t r = 0; r < g.topo_order().size(); ++r) pos[static_cast<std::size_t>(g.topo_order()[r])] = static_cast<int>(r);
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g.predecessor(j) >= 0) CHECK(pos[static_cast<std::size_t>(g.predecessor(j))] < pos[j]);
  }
}

TEST_CASE("violations are reported per assumption") {
  GraphConfig cyc;
  cyc.nodes = {{"a", {"b"}, "bernoulli", {}}, {"b", {"a"}, "bernoulli", {}}, {"c", {"root"}, "poisson", {}}};
  cyc.fitness_nodes = {"c"};
  auto v = validate(cyc);
  CHECK(has(v, "A1", "a"));
  CHECK_FALSE(has(v, "A1", "c"));

  GraphConfig multi;
  multi.nodes = {{"a", {"root"}, "bernoulli", {}}, {"b", {"root"}, "bernoulli", {}}, {"c", {"a", "b"}, "poisson", {}}};
  multi.fitness_nodes = {"c"};
  CHECK(has(validate(multi), "A3", "c"));

  GraphConfig fam;
  fam.nodes = {{"a", {"root"}, "gamma", {}}};
  fam.fitness_nodes = {"a"};
  CHECK(has(validate(fam), "A6", "a"));

  GraphConfig grp;
  grp.nodes = {{"a", {"root"}, "bernoulli", "g"}, {"b", {"root"}, "bernoulli", "g"}, {"c", {"root"}, "bernoulli", "h"}};
  grp.fitness_nodes = {"a"};
  v = validate(grp);
  CHECK(has(v, "A2", "a"));
  CHECK_FALSE(has(v, "A2", "c"));

  GraphConfig fit;
  fit.nodes = {{"a", {"root"}, "bernoulli", {}}};
  fit.fitness_nodes = {"z"};
  CHECK(has(validate(fit), "fitness", "z"));

  GraphConfig dup;
  dup.nodes = {{"a", {"root"}, "bernoulli", {}}, {"a", {"root"}, "bernoulli", {}}, {"b", {"x"}, "bernoulli", {}}};
  dup.fitness_nodes = {"a"};
  v = validate(dup);
  CHECK(has(v, "config", "a"));
  CHECK(has(v, "config", "b"));

  CHECK_THROWS_AS(Graph{cyc}, ValidationError);
}

TEST_CASE("theta and phi round trip") {
  const Graph g(triplet_graph_config());
  const Eigen::VectorXd theta = random_vector(3 * 30, 5, 2.0);
  const Eigen::VectorXd phi = theta_to_phi(g, theta);
  CHECK((phi_to_theta(g, phi) - theta).cwiseAbs().maxCoeff() < 1e-12);
  // Leaves keep their parameter.
  CHECK(phi[*g.index_of("W4")] == theta[*g.index_of("W4")]);
}

TEST_CASE("two-node chain moments agree with enumeration") {
  const Graph g(chain_graph_config());
  for (auto [phi1, phi2] : {std::pair{-1.9, 1.1}, std::pair{0.4, -0.7}, std::pair{-3.0, 2.2}}) {
    CAPTURE(phi1);
    CAPTURE(phi2);
    const Eigen::Vector2d phi(phi1, phi2);
    const auto ref = oracle::chain_by_enumeration(phi1, phi2);
    const SaturatedState s = evaluate_saturated(g, phi);
    CHECK(s.cumulant == doctest::Approx(ref.cumulant).epsilon(1e-12));
    CHECK(joint_cumulant(g, phi) == doctest::Approx(ref.cumulant).epsilon(1e-12));
    CHECK((s.mu - ref.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((compute_mu(g, s.theta) - ref.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((variance_block(g, s, 0) - ref.cov).cwiseAbs().maxCoeff() < 1e-9);
    const Eigen::MatrixXd I = Eigen::Matrix2d::Identity();
    CHECK((apply_variance(g, s, I) - ref.cov).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((variance_gram(g, s, I) - ref.cov).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("mean is the gradient of the cumulant and variance its Hessian") {
  const Graph g(triplet_graph_config());
  const Eigen::VectorXd phi = theta_to_phi(g, random_vector(30, 8, 1.5));
  const SaturatedState s = evaluate_saturated(g, phi);
  const Eigen::VectorXd grad = oracle::gradient([&](const Eigen::VectorXd& p) { return joint_cumulant(g, p); }, phi);
  CHECK((grad - s.mu).cwiseAbs().maxCoeff() < 1e-6);
  const Eigen::MatrixXd hess =
      oracle::jacobian([&](const Eigen::VectorXd& p) { return evaluate_saturated(g, p).mu; }, phi);
  const Eigen::MatrixXd V = variance_block(g, s, 0);
  CHECK((hess - V).cwiseAbs().maxCoeff() < 1e-6);
  const Eigen::MatrixXd X = random_vector(30 * 4, 9, 1.0).reshaped(30, 4);
  CHECK((apply_variance(g, s, X) - V * X).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((variance_gram(g, s, X) - X.transpose() * V * X).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("simulation reproduces the unconditional means") {
  const Graph g(triplet_graph_config());
  const std::size_t n = 20000;
  Eigen::VectorXd theta_one(30);
  for (std::size_t j = 0; j < 30; ++j) theta_one[static_cast<Eigen::Index>(j)] = j < 20 ? 1.0 : 0.3;
  const Eigen::VectorXd theta = theta_one.replicate(static_cast<Eigen::Index>(n), 1);
  Rng rng = stream(3, {});
  const Eigen::VectorXd y = simulate(g, theta, rng);
  const Eigen::VectorXd mu = compute_mu(g, theta_one);
  const SaturatedState s = evaluate_saturated(g, theta_to_phi(g, theta_one));
  const Eigen::MatrixXd V = variance_block(g, s, 0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(30);
  for (std::size_t i = 0; i < n; ++i) mean += y.segment(static_cast<Eigen::Index>(i * 30), 30);
  mean /= static_cast<double>(n);
  for (Eigen::Index j = 0; j < 30; ++j) {
    CAPTURE(j);
    CHECK(std::abs(mean[j] - mu[j]) < 5.0 * std::sqrt(V(j, j) / static_cast<double>(n)));
  }
  // Structural zeros: nothing below a zero.
  int below_zero = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 30; ++j) {
      const int p = g.predecessor(j);
      if (p >= 0 && y[static_cast<Eigen::Index>(i * 30 + static_cast<std::size_t>(p))] == 0.0) {
        below_zero += y[static_cast<Eigen::Index>(i * 30 + j)] != 0.0;
      }
    }
  }
  CHECK(below_zero == 0);
}

TEST_CASE("overflow names the node") {
  const Graph g(chain_graph_config());
  const Eigen::Vector2d phi(0.0, 800.0);
  try {
    evaluate_saturated(g, phi);
    FAIL("expected an overflow");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("Y2") != std::string::npos);
  }
}

}
