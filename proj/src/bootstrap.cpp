#include "asterenv/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "asterenv/error.hpp"
#include "asterenv/rng.hpp"

namespace asterenv {

void BootstrapConfig::validate() const {
  if (B < 2) throw ValidationError("bootstrap needs B >= 2");
  if (K < 2) throw ValidationError("bootstrap needs K >= 2");
  if (threads < 1) throw ValidationError("thread count must be positive");
  if (!(redraw_fraction >= 0.0 && redraw_fraction < 1.0)) throw ValidationError("redraw fraction must lie in [0, 1)");
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

int redraw_cap(double fraction, std::size_t replicates) {
  return static_cast<int>(std::ceil(fraction * static_cast<double>(replicates)));
}

SelectOptions selection_options(const AsterModel& model, const BootstrapConfig& cfg) {
  SelectOptions opts;
  opts.prune = true;
  if (cfg.force_full) {
    const int k = static_cast<int>(model.interest_dim());
    if (cfg.method == Method::ReducingSubspace) {
      IndexSet all(static_cast<std::size_t>(k));
      std::iota(all.begin(), all.end(), 0);
      opts.fixed_index_set = all;
    } else {
      opts.fixed_u = k;
    }
  }
  return opts;
}

Estimate from_selection(const AsterModel& model, const FitResult& fit, const Selection& sel) {
  Estimate est;
  est.beta = sel.fit.beta;
  est.tau = sel.fit.tau;
  est.index_set = sel.structure.index_set;
  est.u = sel.structure.u;
  est.oe_gap = std::max(observed_expected_gap(model, fit.mu), sel.fit.oe_gap);
  return est;
}

Eigen::VectorXd generating_theta(const AsterModel& model, const Eigen::VectorXd& beta) {
  return phi_to_theta(model.graph(), model.linear_predictor(beta));
}

struct Draw {
  Estimate estimate;
  Eigen::VectorXd g;
  int redraws = 0;
  bool ok = false;
};

// Simulates at theta and re-estimates, redrawing on numerical failure.
Draw draw_replicate(const AsterModel& model, const Eigen::VectorXd& theta, const Eigen::VectorXd& start,
                    const FitnessQuery& query, const BootstrapConfig& cfg, const Estimator& estimator,
                    std::uint64_t level, std::uint64_t b, std::uint64_t k, int max_attempts) {
  Draw d;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng = stream(cfg.seed, {level, b, k, static_cast<std::uint64_t>(attempt)});
    try {
      const AsterModel data = model.with_response(simulate(model.graph(), theta, rng));
      d.estimate = estimator(data, start, cfg);
      d.g = fitness_at_beta(model, d.estimate.beta, query);
      d.ok = true;
      return d;
    } catch (const NumericalError&) {
      ++d.redraws;
    }
  }
  return d;
}

void check_redraws(int redraws, int cap, const char* level) {
  if (redraws > cap) {
    throw NumericalError(NumericalError::Kind::Boundary,
                         std::string(level) + " bootstrap needed " + std::to_string(redraws) +
                             " redraws (cap " + std::to_string(cap) +
                             "); the data are too small or extreme for the parametric bootstrap");
  }
}

}  // namespace

Estimate envelope_estimate(const AsterModel& data, const Eigen::VectorXd& start, const BootstrapConfig& cfg) {
  const FitResult fit = fit_mle(data, start);
  const Selection sel = select_structure(data, fit, cfg.method, cfg.criterion, selection_options(data, cfg));
  return from_selection(data, fit, sel);
}

Estimate mle_estimate(const AsterModel& data, const Eigen::VectorXd& start, const BootstrapConfig&) {
  const FitResult fit = fit_mle(data, start);
  Estimate est;
  est.beta = fit.beta;
  est.tau = fit.tau;
  est.u = static_cast<int>(data.interest_dim());
  est.oe_gap = observed_expected_gap(data, fit.mu);
  return est;
}

FirstLevel run_first_level(const AsterModel& model, const Eigen::VectorXd& beta0, const FitnessQuery& query,
                           const BootstrapConfig& cfg, const Estimator& estimator) {
  cfg.validate();
  const auto B = static_cast<std::size_t>(cfg.B);
  const int cap = redraw_cap(cfg.redraw_fraction, B);
  const Eigen::VectorXd theta = generating_theta(model, beta0);
  std::vector<Draw> draws(B);
  parallel_for(B, cfg.threads, [&](std::size_t b) {
    draws[b] = draw_replicate(model, theta, beta0, query, cfg, estimator, 1, b, 0, cap + 1);
  });

  FirstLevel out;
  for (const auto& d : draws) out.redraws += d.redraws;
  check_redraws(out.redraws, cap, "first-level");
  out.g_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(query.size()));
  for (std::size_t b = 0; b < B; ++b) {
    auto& d = draws[b];
    Replicate r;
    r.b = static_cast<int>(b);
    r.index_set = d.estimate.index_set;
    r.u = d.estimate.u;
    r.beta = std::move(d.estimate.beta);
    r.tau = std::move(d.estimate.tau);
    r.g = std::move(d.g);
    r.redraws = d.redraws;
    out.g_hat += r.g;
    out.max_oe_gap = std::max(out.max_oe_gap, d.estimate.oe_gap);
    out.replicates.push_back(std::move(r));
  }
  out.g_hat /= static_cast<double>(B);
  return out;
}

SecondLevel run_second_level(const AsterModel& model, const FirstLevel& first, const FitnessQuery& query,
                             const BootstrapConfig& cfg, const Estimator& estimator) {
  cfg.validate();
  const auto B = first.replicates.size();
  const auto K = static_cast<std::size_t>(cfg.K);
  const int cap = redraw_cap(cfg.redraw_fraction, B * K);
  const auto P = static_cast<Eigen::Index>(query.size());
  SecondLevel out;
  out.means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B), P);
  std::vector<int> redraws(B, 0);
  std::vector<double> gaps(B, 0.0);
  std::vector<bool> failed(B, false);
  parallel_for(B, cfg.threads, [&](std::size_t b) {
    const auto& rep = first.replicates[b];
    const Eigen::VectorXd theta = generating_theta(model, rep.beta);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(P);
    for (std::size_t k = 0; k < K; ++k) {
      Draw d = draw_replicate(model, theta, rep.beta, query, cfg, estimator, 2, b, k, cap + 1);
      redraws[b] += d.redraws;
      if (!d.ok) {
        failed[b] = true;
        return;
      }
      gaps[b] = std::max(gaps[b], d.estimate.oe_gap);
      sum += d.g;
    }
    out.means.row(static_cast<Eigen::Index>(b)) = (sum / static_cast<double>(K)).transpose();
  });
  out.redraws = std::accumulate(redraws.begin(), redraws.end(), 0);
  check_redraws(out.redraws, cap, "second-level");
  if (std::find(failed.begin(), failed.end(), true) != failed.end()) check_redraws(cap + 1, cap, "second-level");
  out.max_oe_gap = *std::max_element(gaps.begin(), gaps.end());
  out.se = double_bootstrap_se(out.means);
  return out;
}

Eigen::VectorXd double_bootstrap_se(const Eigen::MatrixXd& means) {
  const auto B = means.rows();
  if (B < 2) throw ValidationError("standard error needs at least two first-level replicates");
  const Eigen::RowVectorXd centre = means.colwise().mean();
  Eigen::VectorXd se(means.cols());
  for (Eigen::Index c = 0; c < means.cols(); ++c) {
    const double ss = (means.col(c).array() - centre[c]).square().sum();
    se[c] = std::sqrt(ss / static_cast<double>(B - 1));
  }
  return se;
}

PipelineResult envelope_bootstrap(const AsterModel& model, const Estimate& initial, const FitnessQuery& query,
                                  const BootstrapConfig& cfg) {
  PipelineResult out;
  out.first = run_first_level(model, initial.beta, query, cfg, envelope_estimate);
  out.second = run_second_level(model, out.first, query, cfg, envelope_estimate);
  out.g_hat = out.first.g_hat;
  out.se = out.second.se;
  return out;
}

PipelineResult mle_reference_bootstrap(const AsterModel& model, const FitResult& fit, const FitnessQuery& query,
                                       const BootstrapConfig& cfg) {
  PipelineResult out;
  out.first = run_first_level(model, fit.beta, query, cfg, mle_estimate);
  out.second = run_second_level(model, out.first, query, cfg, mle_estimate);
  out.g_hat = out.first.g_hat;
  out.se = out.second.se;
  return out;
}

BootstrapReport run_bootstrap(const AsterModel& model, const FitResult& fit, const FitnessQuery& query,
                              const BootstrapConfig& cfg) {
  cfg.validate();
  BootstrapReport report;
  report.config = cfg;
  const Selection sel = select_structure(model, fit, cfg.method, cfg.criterion, selection_options(model, cfg));
  report.initial = from_selection(model, fit, sel);
  report.env = envelope_bootstrap(model, report.initial, query, cfg);
  report.mle = mle_reference_bootstrap(model, fit, query, cfg);
  report.ratio = report.mle.se.array() / report.env.se.array();
  for (const auto& r : report.env.first.replicates) ++report.selection_counts[describe_selection(r.index_set, r.u)];
  return report;
}

std::vector<RatioRow> ratio_table(const BootstrapReport& report, std::size_t top_n) {
  const auto P = static_cast<std::size_t>(report.env.g_hat.size());
  std::vector<RatioRow> rows(P);
  for (std::size_t i = 0; i < P; ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    rows[i] = {i, report.env.g_hat[e], report.env.se[e], report.mle.g_hat[e], report.mle.se[e], report.ratio[e], false};
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RatioRow& a, const RatioRow& b) { return a.g_env > b.g_env; });
  for (std::size_t i = 0; i < std::min(top_n, P); ++i) rows[i].top = true;
  return rows;
}

std::string describe_selection(const IndexSet& index_set, int u) {
  if (index_set.empty()) return "u=" + std::to_string(u);
  std::string s = "{";
  for (std::size_t i = 0; i < index_set.size(); ++i) {
    if (i) s += " ";
    s += std::to_string(index_set[i] + 1);
  }
  return s + "}";
}

}  // namespace asterenv
