#include "asterenv/design.hpp"

#include <algorithm>

#include "asterenv/error.hpp"

namespace asterenv {

std::size_t Dataset::covariate_index(const std::string& name) const {
  auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  if (it == covariate_names.end()) throw ValidationError("data has no covariate column \"" + name + "\"");
  return static_cast<std::size_t>(it - covariate_names.begin());
}

Design::Design(std::shared_ptr<const Graph> graph, ModelConfig config)
    : graph_(std::move(graph)), config_(std::move(config)) {
  const std::size_t N = graph_->size();
  auto node_mask = [&](const std::vector<std::string>& nodes, const std::string& what) {
    std::vector<bool> mask(N, false);
    for (const auto& id : nodes) {
      auto j = graph_->index_of(id);
      if (!j) throw ValidationError(what + " names unknown node \"" + id + "\"");
      mask[*j] = true;
    }
    return mask;
  };
  for (const auto& block : config_.nuisance) nuisance_mask_.push_back(node_mask(block.nodes, "nuisance block " + block.name));
  interest_mask_ = node_mask(config_.interest_nodes, "interest_nodes");
  if (!config_.covariates.empty() && config_.interest_nodes.empty()) {
    throw ValidationError("covariates are declared but interest_nodes is empty");
  }
  node_offset_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  for (const auto& [id, value] : config_.offset) {
    auto j = graph_->index_of(id);
    if (!j) throw ValidationError("offset names unknown node \"" + id + "\"");
    node_offset_[static_cast<Eigen::Index>(*j)] = value;
  }
  const auto& cov = config_.covariates;
  term_names_ = cov;
  if (config_.quadratic) {
    for (const auto& c : cov) term_names_.push_back(c + "^2");
    for (std::size_t a = 0; a < cov.size(); ++a) {
      for (std::size_t b = a + 1; b < cov.size(); ++b) term_names_.push_back(cov[a] + "*" + cov[b]);
    }
  }
}

std::vector<std::string> Design::column_names() const {
  std::vector<std::string> names;
  for (const auto& block : config_.nuisance) names.push_back(block.name);
  names.insert(names.end(), term_names_.begin(), term_names_.end());
  return names;
}

Eigen::VectorXd Design::terms(const Eigen::VectorXd& z) const {
  const auto c = static_cast<Eigen::Index>(config_.covariates.size());
  if (z.size() != c) throw ValidationError("covariate vector has the wrong length");
  Eigen::VectorXd t(static_cast<Eigen::Index>(interest_dim()));
  Eigen::Index k = 0;
  for (Eigen::Index a = 0; a < c; ++a) t[k++] = z[a];
  if (config_.quadratic) {
    for (Eigen::Index a = 0; a < c; ++a) t[k++] = z[a] * z[a];
    for (Eigen::Index a = 0; a < c; ++a) {
      for (Eigen::Index b = a + 1; b < c; ++b) t[k++] = z[a] * z[b];
    }
  }
  return t;
}

Eigen::MatrixXd Design::rows(const Eigen::VectorXd& z) const {
  const auto N = static_cast<Eigen::Index>(graph_->size());
  const auto q = static_cast<Eigen::Index>(nuisance_dim());
  const Eigen::VectorXd t = terms(z);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(dim()));
  for (Eigen::Index j = 0; j < N; ++j) {
    for (Eigen::Index b = 0; b < q; ++b) R(j, b) = nuisance_mask_[b][j] ? 1.0 : 0.0;
    if (interest_mask_[j]) R.row(j).tail(t.size()) = t.transpose();
  }
  return R;
}

Eigen::MatrixXd Design::model_matrix(const Eigen::MatrixXd& covariates) const {
  const auto N = static_cast<Eigen::Index>(graph_->size());
  Eigen::MatrixXd M(covariates.rows() * N, static_cast<Eigen::Index>(dim()));
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    M.middleRows(i * N, N) = rows(covariates.row(i).transpose());
  }
  return M;
}

Eigen::VectorXd Design::offsets(std::size_t n_individuals) const {
  return node_offset_.replicate(static_cast<Eigen::Index>(n_individuals), 1);
}

Eigen::MatrixXd Design::select_covariates(const Dataset& data) const {
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(config_.covariates.size()));
  for (std::size_t a = 0; a < config_.covariates.size(); ++a) {
    Z.col(static_cast<Eigen::Index>(a)) =
        data.covariates.col(static_cast<Eigen::Index>(data.covariate_index(config_.covariates[a])));
  }
  return Z;
}

AsterModel make_model(const Design& design, const Dataset& data) {
  if (data.y.size() != static_cast<Eigen::Index>(data.size() * design.graph().size())) {
    throw ValidationError("response length does not match individuals x nodes");
  }
  auto M = std::make_shared<const Eigen::MatrixXd>(design.model_matrix(design.select_covariates(data)));
  auto a = std::make_shared<const Eigen::VectorXd>(design.offsets(data.size()));
  return AsterModel(design.graph_ptr(), data.y, std::move(M), std::move(a), design.interest_dim());
}

}  // namespace asterenv
