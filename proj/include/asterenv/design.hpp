#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "asterenv/graph.hpp"
#include "asterenv/model.hpp"

namespace asterenv {

/// How to build the model matrix. Columns are laid out as
///   [nuisance indicator blocks..., interest terms...]
/// where each interest term (a covariate, or with `quadratic` also every square
/// and pairwise product) is nonzero only on `interest_nodes`.
struct ModelConfig {
  struct Block {
    std::string name;
    std::vector<std::string> nodes;
    bool operator==(const Block&) const = default;
  };

  std::vector<std::string> covariates;
  bool quadratic = false;
  std::vector<Block> nuisance;
  std::vector<std::string> interest_nodes;
  std::map<std::string, double> offset;  // per node, missing nodes get 0

  bool operator==(const ModelConfig&) const = default;
};

/// Individuals in long format: one covariate row per individual and one
/// response per (individual, node).
struct Dataset {
  std::vector<std::string> ids;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;  // n x n_covariates
  Eigen::VectorXd y;           // n * nodes, row-major by individual

  std::size_t size() const noexcept { return ids.size(); }
  /// Column of a named covariate; throws ValidationError if absent.
  std::size_t covariate_index(const std::string& name) const;
};

class Design {
 public:
  Design(std::shared_ptr<const Graph> graph, ModelConfig config);

  const Graph& graph() const noexcept { return *graph_; }
  std::shared_ptr<const Graph> graph_ptr() const noexcept { return graph_; }
  const ModelConfig& config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return nuisance_dim() + interest_dim(); }
  std::size_t nuisance_dim() const noexcept { return config_.nuisance.size(); }
  std::size_t interest_dim() const noexcept { return term_names_.size(); }
  const std::vector<std::string>& term_names() const noexcept { return term_names_; }
  std::vector<std::string> column_names() const;

  /// Interest terms of one covariate vector (ordered as in config.covariates).
  Eigen::VectorXd terms(const Eigen::VectorXd& z) const;
  /// Model matrix rows of one individual: nodes x dim().
  Eigen::MatrixXd rows(const Eigen::VectorXd& z) const;
  /// Stacked rows for every row of `covariates` (n x n_covariates).
  Eigen::MatrixXd model_matrix(const Eigen::MatrixXd& covariates) const;
  Eigen::VectorXd offsets(std::size_t n_individuals) const;

  /// Covariates of `data` reordered to config.covariates.
  Eigen::MatrixXd select_covariates(const Dataset& data) const;

 private:
  std::shared_ptr<const Graph> graph_;
  ModelConfig config_;
  std::vector<std::string> term_names_;
  std::vector<std::vector<bool>> nuisance_mask_;  // block x node
  std::vector<bool> interest_mask_;
  Eigen::VectorXd node_offset_;
};

/// Ordinary aster model of `data` under `design`.
AsterModel make_model(const Design& design, const Dataset& data);

}  // namespace asterenv
