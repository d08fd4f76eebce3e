#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asterenv/envelope.hpp"
#include "asterenv/fitness.hpp"
#include "asterenv/model.hpp"

namespace asterenv {

/// Identifier written to report metadata for the standard error formula.
inline constexpr const char* kSeFormula = "sd_over_b_of_second_level_means";

struct BootstrapConfig {
  int B = 200;
  int K = 100;
  Criterion criterion = Criterion::BIC;
  Method method = Method::ReducingSubspace;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Restrict every selection to the full dimension (envelope = MLE).
  bool force_full = false;
  /// Redraws allowed per level, as a fraction of that level's replicate count.
  double redraw_fraction = 0.1;

  void validate() const;
};

/// One first-level replicate.
struct Replicate {
  int b = 0;
  IndexSet index_set;  // empty for the 1D method and the MLE pipeline
  int u = 0;
  Eigen::VectorXd beta;  // simulation parameter for the second level
  Eigen::VectorXd tau;   // tau_env^(b) (or tau^(b) for the MLE pipeline)
  Eigen::VectorXd g;     // fitness per profile
  int redraws = 0;
};

struct FirstLevel {
  std::vector<Replicate> replicates;
  Eigen::VectorXd g_hat;  // mean over b
  int redraws = 0;
  double max_oe_gap = 0.0;
};

struct SecondLevel {
  Eigen::MatrixXd means;  // B x profiles, mean over k of g^{(b)(k)}
  Eigen::VectorXd se;     // sd over b of `means`
  int redraws = 0;
  double max_oe_gap = 0.0;
};

/// Data-to-estimate step shared by both pipelines: refit, optionally reselect,
/// and return the estimate used for fitness and further simulation.
struct Estimate {
  Eigen::VectorXd beta;
  Eigen::VectorXd tau;
  IndexSet index_set;
  int u = 0;
  double oe_gap = 0.0;
};

/// Envelope estimate on `data`: MLE fit, structure selection with the run's
/// criterion, envelope fit. `start` seeds the MLE Newton iterations.
Estimate envelope_estimate(const AsterModel& data, const Eigen::VectorXd& start, const BootstrapConfig& cfg);
/// Plain MLE estimate on `data`.
Estimate mle_estimate(const AsterModel& data, const Eigen::VectorXd& start, const BootstrapConfig& cfg);

using Estimator = std::function<Estimate(const AsterModel&, const Eigen::VectorXd&, const BootstrapConfig&)>;

/// Steps 3-4: B replicates simulated at `beta0` (the estimate on the original
/// data), each re-estimated by `estimator`.
FirstLevel run_first_level(const AsterModel& model, const Eigen::VectorXd& beta0, const FitnessQuery& query,
                           const BootstrapConfig& cfg, const Estimator& estimator);

/// Steps 5-6: K replicates simulated at each first-level estimate.
SecondLevel run_second_level(const AsterModel& model, const FirstLevel& first, const FitnessQuery& query,
                             const BootstrapConfig& cfg, const Estimator& estimator);

/// Standard error of the smoothed estimator from second-level means.
Eigen::VectorXd double_bootstrap_se(const Eigen::MatrixXd& second_level_means);

struct PipelineResult {
  FirstLevel first;
  SecondLevel second;
  Eigen::VectorXd g_hat;
  Eigen::VectorXd se;
};

/// Full double bootstrap of the envelope estimator, starting from `initial`
/// (the envelope estimate on the original data).
PipelineResult envelope_bootstrap(const AsterModel& model, const Estimate& initial, const FitnessQuery& query,
                                  const BootstrapConfig& cfg);

/// Same skeleton with the envelope step replaced by the identity.
PipelineResult mle_reference_bootstrap(const AsterModel& model, const FitResult& fit, const FitnessQuery& query,
                                       const BootstrapConfig& cfg);

struct BootstrapReport {
  BootstrapConfig config;
  Estimate initial;  // envelope estimate on the original data
  PipelineResult env;
  PipelineResult mle;
  Eigen::VectorXd ratio;  // se_mle / se_env, unrounded
  std::map<std::string, int> selection_counts;  // first-level selections
};

/// Steps 1-6 for both pipelines on the same seed.
BootstrapReport run_bootstrap(const AsterModel& model, const FitResult& fit, const FitnessQuery& query,
                              const BootstrapConfig& cfg);

struct RatioRow {
  std::size_t profile = 0;
  double g_env = 0.0, se_env = 0.0, g_mle = 0.0, se_mle = 0.0, ratio = 0.0;
  bool top = false;
};

/// One row per profile sorted by g_env descending; the first `top_n` rows are flagged.
std::vector<RatioRow> ratio_table(const BootstrapReport& report, std::size_t top_n = 7);

/// "{1 4 5}" with one-based indices, or "u=3" for the 1D method.
std::string describe_selection(const IndexSet& index_set, int u);

/// Runs fn(0..n-1) on up to `threads` workers. Results must be written by index.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace asterenv
