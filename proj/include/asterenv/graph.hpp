#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "asterenv/exp_family.hpp"
#include "asterenv/rng.hpp"

namespace asterenv {

inline constexpr const char* kRootId = "root";

/// One node as written in a graph config. `predecessors` normally holds one
/// entry (a node id or "root"); more than one is kept so validation can report it.
struct NodeConfig {
  std::string id;
  std::vector<std::string> predecessors;
  std::string family;
  std::optional<std::string> group;

  bool operator==(const NodeConfig&) const = default;
};

struct GraphConfig {
  std::vector<NodeConfig> nodes;
  std::vector<std::string> fitness_nodes;

  bool operator==(const GraphConfig&) const = default;
};

struct Violation {
  std::string node;
  std::string assumption;  // "A1", "A2", "A3", "A6", "fitness", "config"
  std::string message;
};

/// Structural checks: acyclic arrows (A1), single predecessor per singleton
/// group (A3), a registered family per node (A6), fitness nodes present.
/// Multi-node dependence groups are not supported and are reported too.
std::vector<Violation> validate(const GraphConfig& config);

/// A validated life-history graph. Nodes keep their config order; recursions
/// walk `topo_order()`. Immutable after construction.
class Graph {
 public:
  /// Throws ValidationError carrying every violation.
  explicit Graph(const GraphConfig& config);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::string& id(std::size_t j) const { return ids_[j]; }
  Family family(std::size_t j) const { return families_[j]; }
  /// Predecessor node index, or -1 for the root constant.
  int predecessor(std::size_t j) const { return preds_[j]; }
  const std::vector<int>& children(std::size_t j) const { return children_[j]; }
  const std::vector<int>& topo_order() const noexcept { return order_; }
  const std::vector<int>& fitness_nodes() const noexcept { return fitness_; }
  bool is_fitness(std::size_t j) const { return is_fitness_[j]; }
  std::optional<std::size_t> index_of(const std::string& id) const;
  const GraphConfig& config() const noexcept { return config_; }

 private:
  GraphConfig config_;
  std::vector<std::string> ids_;
  std::vector<Family> families_;
  std::vector<int> preds_;
  std::vector<std::vector<int>> children_;
  std::vector<int> order_;
  std::vector<int> fitness_;
  std::vector<bool> is_fitness_;
};

// Vectors below hold one value per (individual, node), row-major by
// individual: entry i * graph.size() + j.

/// Unconditional canonical parameters from conditional ones:
/// phi_j = theta_j - sum over successors k of c_k(theta_k).
Eigen::VectorXd theta_to_phi(const Graph& graph, const Eigen::VectorXd& theta);

/// Inverse of theta_to_phi, solved from the leaves upward.
Eigen::VectorXd phi_to_theta(const Graph& graph, const Eigen::VectorXd& phi);

/// Unconditional means: mu_j = mu_pred(j) * c'_j(theta_j), root mean 1.
Eigen::VectorXd compute_mu(const Graph& graph, const Eigen::VectorXd& theta);

/// Sum over individuals of the joint cumulant of the saturated model at phi.
double joint_cumulant(const Graph& graph, const Eigen::VectorXd& phi);

/// Everything one pass over the graph yields at a saturated parameter phi.
struct SaturatedState {
  Eigen::VectorXd theta;
  Eigen::VectorXd mu;
  Eigen::VectorXd cond_mean;      // c'_j(theta_j)
  Eigen::VectorXd cond_variance;  // c''_j(theta_j)
  double cumulant = 0.0;          // joint cumulant summed over individuals
};

/// Throws NumericalError(Overflow) naming the node and individual on failure.
SaturatedState evaluate_saturated(const Graph& graph, const Eigen::VectorXd& phi);

/// Var(Y) * X without forming Var(Y): forward-mode derivative of mu(phi) along
/// each column of X. X has one row per (individual, node).
Eigen::MatrixXd apply_variance(const Graph& graph, const SaturatedState& state, const Eigen::MatrixXd& X);

/// X' Var(Y) X from the innovation form Y = A e, with e_j = Y_j - c'_j Y_pred(j)
/// uncorrelated of variance mu_pred(j) c''_j: the Gram matrix of A'X, which one
/// leaf-to-root pass produces.
Eigen::MatrixXd variance_gram(const Graph& graph, const SaturatedState& state, const Eigen::MatrixXd& X);

/// Var(Y) block of one individual, by the covariance recursion
/// Cov(Y_j, Y_k) = c'_j Cov(Y_pred(j), Y_k) for k not descended from j.
Eigen::MatrixXd variance_block(const Graph& graph, const SaturatedState& state, std::size_t individual);

/// Draws a response vector node by node: Y_j is the sum of Y_pred(j) draws.
Eigen::VectorXd simulate(const Graph& graph, const Eigen::VectorXd& theta, Rng& rng);

}  // namespace asterenv
