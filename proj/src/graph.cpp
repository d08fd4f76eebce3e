#include "asterenv/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "asterenv/error.hpp"

namespace asterenv {

std::vector<Violation> validate(const GraphConfig& config) {
  std::vector<Violation> out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < config.nodes.size(); ++j) {
    const auto& node = config.nodes[j];
    if (node.id.empty() || node.id == kRootId) {
      out.push_back({node.id, "config", "node id must be nonempty and not \"root\""});
    } else if (!index.emplace(node.id, j).second) {
      out.push_back({node.id, "config", "duplicate node id"});
    }
  }
  if (config.nodes.empty()) out.push_back({"", "config", "graph has no nodes"});

  std::unordered_map<std::string, int> group_size;
  for (const auto& node : config.nodes) {
    if (node.group) ++group_size[*node.group];
  }

  // Resolved predecessor per node; -1 root, -2 unusable.
  std::vector<int> pred(config.nodes.size(), -2);
  for (std::size_t j = 0; j < config.nodes.size(); ++j) {
    const auto& node = config.nodes[j];
    if (!parse_family(node.family)) {
      out.push_back({node.id, "A6", "no registered exponential family named \"" + node.family + "\""});
    }
    if (node.group && group_size[*node.group] > 1) {
      out.push_back({node.id, "A2",
                     "dependence group \"" + *node.group + "\" has " + std::to_string(group_size[*node.group]) +
                         " nodes; only single-node groups are supported"});
    }
    if (node.predecessors.size() != 1) {
      out.push_back({node.id, "A3",
                     "a single-node dependence group must have exactly one predecessor (found " +
                         std::to_string(node.predecessors.size()) + ")"});
      continue;
    }
    const auto& p = node.predecessors.front();
    if (p == kRootId) {
      pred[j] = -1;
    } else if (p == node.id) {
      out.push_back({node.id, "A1", "arrow from the node to itself"});
    } else if (auto it = index.find(p); it == index.end()) {
      out.push_back({node.id, "config", "unknown predecessor \"" + p + "\""});
    } else {
      pred[j] = static_cast<int>(it->second);
    }
  }

  // Nodes that never reach the root through resolved predecessors sit on a cycle
  // (or hang below one).
  std::vector<int> state(config.nodes.size(), 0);  // 0 unknown, 1 ok, 2 bad
  for (std::size_t j = 0; j < config.nodes.size(); ++j) {
    std::vector<std::size_t> path;
    std::unordered_set<std::size_t> on_path;
    std::size_t cur = j;
    int verdict = 0;
    while (true) {
      if (state[cur] != 0) {
        verdict = state[cur];
        break;
      }
      if (pred[cur] == -1) {
        verdict = 1;
        path.push_back(cur);
        break;
      }
      if (pred[cur] == -2 || on_path.count(cur)) {
        verdict = 2;
        if (on_path.count(cur) && pred[cur] != -2) {
          out.push_back({config.nodes[cur].id, "A1", "node lies on a directed cycle of arrows"});
        }
        path.push_back(cur);
        break;
      }
      on_path.insert(cur);
      path.push_back(cur);
      cur = static_cast<std::size_t>(pred[cur]);
    }
    for (auto k : path) state[k] = verdict;
  }

  if (config.fitness_nodes.empty()) out.push_back({"", "fitness", "fitness_nodes is empty"});
  for (const auto& f : config.fitness_nodes) {
    if (!index.count(f)) out.push_back({f, "fitness", "fitness node is not a graph node"});
  }
  return out;
}

Graph::Graph(const GraphConfig& config) : config_(config) {
  auto violations = validate(config);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "invalid graph:";
    for (const auto& v : violations) msg << " [" << v.assumption << " " << v.node << ": " << v.message << "]";
    throw ValidationError(msg.str());
  }
  const std::size_t n = config.nodes.size();
  for (const auto& node : config.nodes) {
    ids_.push_back(node.id);
    families_.push_back(*parse_family(node.family));
  }
  preds_.assign(n, -1);
  children_.assign(n, {});
  for (std::size_t j = 0; j < n; ++j) {
    const auto& p = config.nodes[j].predecessors.front();
    if (p != kRootId) {
      preds_[j] = static_cast<int>(*index_of(p));
      children_[static_cast<std::size_t>(preds_[j])].push_back(static_cast<int>(j));
    }
  }
  std::vector<bool> placed(n, false);
  while (order_.size() < n) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!placed[j] && (preds_[j] < 0 || placed[static_cast<std::size_t>(preds_[j])])) {
        placed[j] = true;
        order_.push_back(static_cast<int>(j));
      }
    }
  }
  is_fitness_.assign(n, false);
  for (const auto& f : config.fitness_nodes) {
    const auto j = *index_of(f);
    if (!is_fitness_[j]) {
      is_fitness_[j] = true;
      fitness_.push_back(static_cast<int>(j));
    }
  }
  std::sort(fitness_.begin(), fitness_.end());
}

std::optional<std::size_t> Graph::index_of(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

namespace {

std::size_t individuals(const Graph& graph, Eigen::Index length) {
  const auto nodes = static_cast<Eigen::Index>(graph.size());
  if (length % nodes != 0) {
    throw ValidationError("parameter vector length " + std::to_string(length) +
                          " is not a multiple of the node count " + std::to_string(nodes));
  }
  return static_cast<std::size_t>(length / nodes);
}

}  // namespace

Eigen::VectorXd theta_to_phi(const Graph& graph, const Eigen::VectorXd& theta) {
  const std::size_t N = graph.size();
  const std::size_t n = individuals(graph, theta.size());
  Eigen::VectorXd phi = theta;
  const auto& order = graph.topo_order();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * N;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto j = static_cast<std::size_t>(*it);
      const int p = graph.predecessor(j);
      if (p >= 0) phi[base + p] -= cumulant(graph.family(j), theta[base + j]);
    }
  }
  return phi;
}

Eigen::VectorXd phi_to_theta(const Graph& graph, const Eigen::VectorXd& phi) {
  return evaluate_saturated(graph, phi).theta;
}

Eigen::VectorXd compute_mu(const Graph& graph, const Eigen::VectorXd& theta) {
  const std::size_t N = graph.size();
  const std::size_t n = individuals(graph, theta.size());
  Eigen::VectorXd mu(theta.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * N;
    for (int j : graph.topo_order()) {
      const int p = graph.predecessor(j);
      const double parent = p >= 0 ? mu[base + p] : 1.0;
      mu[base + j] = parent * cumulant_d1(graph.family(j), theta[base + j]);
    }
  }
  return mu;
}

double joint_cumulant(const Graph& graph, const Eigen::VectorXd& phi) {
  return evaluate_saturated(graph, phi).cumulant;
}

SaturatedState evaluate_saturated(const Graph& graph, const Eigen::VectorXd& phi) {
  const std::size_t N = graph.size();
  const std::size_t n = individuals(graph, phi.size());
  SaturatedState s;
  s.theta = phi;
  s.mu.resize(phi.size());
  s.cond_mean.resize(phi.size());
  s.cond_variance.resize(phi.size());
  const auto& order = graph.topo_order();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * N;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto j = static_cast<std::size_t>(*it);
      CumulantDerivs d;
      try {
        d = cumulant_all(graph.family(j), s.theta[base + j]);
      } catch (const NumericalError& e) {
        throw NumericalError(NumericalError::Kind::Overflow,
                             "node " + graph.id(j) + ", individual " + std::to_string(i) + ": " + e.what());
      }
      s.cond_mean[base + j] = d.mean;
      s.cond_variance[base + j] = d.variance;
      const int p = graph.predecessor(j);
      if (p >= 0) {
        s.theta[base + p] += d.value;
      } else {
        total += d.value;
      }
    }
    for (int j : order) {
      const int p = graph.predecessor(j);
      s.mu[base + j] = (p >= 0 ? s.mu[base + p] : 1.0) * s.cond_mean[base + j];
    }
  }
  if (!std::isfinite(total)) {
    throw NumericalError(NumericalError::Kind::Overflow, "joint cumulant is not finite");
  }
  s.cumulant = total;
  return s;
}

Eigen::MatrixXd apply_variance(const Graph& graph, const SaturatedState& state, const Eigen::MatrixXd& X) {
  const std::size_t N = graph.size();
  const std::size_t n = individuals(graph, X.rows());
  Eigen::MatrixXd out(X.rows(), X.cols());
  const auto& order = graph.topo_order();
  std::vector<double> dtheta(N);
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double* x = X.col(c).data();
    double* y = out.col(c).data();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * N;
      for (std::size_t j = 0; j < N; ++j) dtheta[j] = x[base + j];
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int j = *it;
        const int p = graph.predecessor(j);
        if (p >= 0) dtheta[p] += state.cond_mean[base + j] * dtheta[j];
      }
      for (int j : order) {
        const int p = graph.predecessor(j);
        const double spread = state.cond_variance[base + j] * dtheta[j];
        y[base + j] = p >= 0 ? y[base + p] * state.cond_mean[base + j] + state.mu[base + p] * spread : spread;
      }
    }
  }
  return out;
}

Eigen::MatrixXd variance_gram(const Graph& graph, const SaturatedState& state, const Eigen::MatrixXd& X) {
  const std::size_t N = graph.size();
  const std::size_t n = individuals(graph, X.rows());
  const auto& order = graph.topo_order();
  Eigen::MatrixXd Z = X;
  Eigen::VectorXd d(X.rows());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * N;
    for (int j : order) {
      const int p = graph.predecessor(j);
      d[base + j] = (p >= 0 ? state.mu[base + p] : 1.0) * state.cond_variance[base + j];
    }
  }
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    double* z = Z.col(c).data();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * N;
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int p = graph.predecessor(*it);
        if (p >= 0) z[base + p] += state.cond_mean[base + *it] * z[base + *it];
      }
    }
  }
  const Eigen::VectorXd root = d.cwiseSqrt();
  for (Eigen::Index c = 0; c < Z.cols(); ++c) Z.col(c).array() *= root.array();
  Eigen::MatrixXd G = Z.transpose() * Z;
  return 0.5 * (G + G.transpose());
}

Eigen::MatrixXd variance_block(const Graph& graph, const SaturatedState& state, std::size_t individual) {
  const std::size_t N = graph.size();
  const std::size_t base = individual * N;
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(N, N);
  const auto& order = graph.topo_order();
  for (std::size_t a = 0; a < order.size(); ++a) {
    const int j = order[a];
    const int p = graph.predecessor(j);
    const double xi = state.cond_mean[base + j];
    for (std::size_t b = 0; b < a; ++b) {
      const int k = order[b];
      V(j, k) = p >= 0 ? xi * V(p, k) : 0.0;
      V(k, j) = V(j, k);
    }
    if (p >= 0) {
      V(j, j) = state.mu[base + p] * state.cond_variance[base + j] + xi * xi * V(p, p);
    } else {
      V(j, j) = state.cond_variance[base + j];
    }
  }
  return V;
}

Eigen::VectorXd simulate(const Graph& graph, const Eigen::VectorXd& theta, Rng& rng) {
  const std::size_t N = graph.size();
  const std::size_t n = individuals(graph, theta.size());
  Eigen::VectorXd y(theta.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = i * N;
    for (int j : graph.topo_order()) {
      const int p = graph.predecessor(j);
      const auto size = p >= 0 ? static_cast<std::int64_t>(y[base + p]) : std::int64_t{1};
      y[base + j] = static_cast<double>(sample_sum(graph.family(j), theta[base + j], size, rng));
    }
  }
  return y;
}

}  // namespace asterenv
