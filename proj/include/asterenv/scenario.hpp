#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "asterenv/design.hpp"
#include "asterenv/envelope.hpp"
#include "asterenv/graph.hpp"

namespace asterenv {

enum class ScenarioGraph {
  Triplets,  // ten survival -> reproduced -> offspring-count triplets, survival chained
  Chain,     // survival -> offspring count
};

ScenarioGraph parse_scenario_graph(const std::string& s);  // "triplets" | "chain"
std::string to_string(ScenarioGraph g);

GraphConfig triplet_graph_config();
GraphConfig chain_graph_config();

/// Default design: one intercept per layer (plus an extra first-survival
/// intercept on the triplet graph) and the covariate terms on the
/// offspring-count nodes.
ModelConfig scenario_model_config(ScenarioGraph graph, bool quadratic);

/// True coefficients used when the spec leaves them empty.
Eigen::VectorXd default_true_beta(ScenarioGraph graph, bool quadratic);

struct ScenarioSpec {
  ScenarioGraph graph = ScenarioGraph::Triplets;
  std::size_t n_individuals = 3000;
  bool quadratic = true;
  Eigen::VectorXd true_beta;           // empty: default_true_beta
  Eigen::Vector2d z_mean{0.0, 0.0};    // covariates are independent normals
  Eigen::Vector2d z_sd{1.0, 1.0};
  std::optional<IndexSet> true_subspace;  // zero-based eigenvector indices
  int max_embed_iterations = 200;
  double embed_tolerance = 1e-6;       // embedding residual, relative to the interest length
  std::size_t n_profiles = 100;        // leading individuals written as profiles

  void validate() const;
};

struct Scenario {
  ScenarioSpec spec;
  std::uint64_t seed = 0;
  std::shared_ptr<const Graph> graph;
  std::shared_ptr<const Design> design;
  Dataset data;
  Eigen::VectorXd beta;  // true coefficients after any embedding
  Eigen::VectorXd tau;   // M^T mu at beta
  Eigen::VectorXd theta;
  EigenBasis eigen;      // of the true interest block of Var(M^T Y)
  int embed_iterations = 0;
  Eigen::MatrixXd profiles;
};

/// Draws covariates, embeds the envelope structure if requested, then draws
/// responses. Deterministic in `seed`.
Scenario generate_scenario(const ScenarioSpec& spec, std::uint64_t seed);

/// data.csv, graph.json, model.json, truth.json, profiles.csv, meta.json.
void write_scenario(const std::filesystem::path& dir, const Scenario& s);

}  // namespace asterenv
