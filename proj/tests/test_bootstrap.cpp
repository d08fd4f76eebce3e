#include <doctest.h>

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "asterenv/bootstrap.hpp"
#include "asterenv/design.hpp"
#include "asterenv/error.hpp"
#include "asterenv/scenario.hpp"

using namespace asterenv;

namespace {

struct Setup {
  Scenario s;
  AsterModel model;
  FitResult fit;
  FitnessQuery query;
};

Setup chain_setup(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.graph = ScenarioGraph::Chain;
  spec.n_individuals = 400;
  spec.quadratic = false;
  Scenario s = generate_scenario(spec, seed);
  AsterModel m = make_model(*s.design, s.data);
  FitResult fit = fit_mle(m);
  FitnessQuery q(s.design, s.profiles.topRows(6));
  return {std::move(s), std::move(m), std::move(fit), std::move(q)};
}

BootstrapConfig small_config() {
  BootstrapConfig c;
  c.B = 4;
  c.K = 3;
  c.seed = 99;
  return c;
}

}  // namespace

TEST_SUITE("bootstrap") {

TEST_CASE("config validation") {
  BootstrapConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.B = 1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = small_config();
  c.threads = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = small_config();
  c.redraw_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("standard error is the sd over b of second-level means") {
  Eigen::MatrixXd means(4, 2);
  means << 1, 10, 2, 10, 3, 10, 6, 10;
  const Eigen::VectorXd se = double_bootstrap_se(means);
  // Column 0: mean 3, squared deviations 4+1+0+9 = 14, over B-1 = 3.
  CHECK(se[0] == doctest::Approx(std::sqrt(14.0 / 3.0)).epsilon(1e-14));
  CHECK(se[1] == 0.0);
}

TEST_CASE("parallel_for covers every index and rethrows the first failure") {
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) CHECK(h == 1);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 31) throw std::runtime_error("at " + std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "at 7");
  }
}

TEST_CASE("runs are deterministic and independent of the thread count") {
  const Setup st = chain_setup(41);
  BootstrapConfig c = small_config();
  const BootstrapReport a = run_bootstrap(st.model, st.fit, st.query, c);
  c.threads = 3;
  const BootstrapReport b = run_bootstrap(st.model, st.fit, st.query, c);
  CHECK(a.env.g_hat == b.env.g_hat);
  CHECK(a.env.se == b.env.se);
  CHECK(a.mle.se == b.mle.se);
  CHECK(a.env.second.means == b.env.second.means);
  CHECK(a.selection_counts == b.selection_counts);
  CHECK(a.env.first.replicates.size() == 4);
  CHECK(a.env.second.means.rows() == 4);
  CHECK(a.env.second.means.cols() == 6);
  for (Eigen::Index i = 0; i < a.ratio.size(); ++i) CHECK(a.ratio[i] == a.mle.se[i] / a.env.se[i]);
  int total = 0;
  for (const auto& [k, n] : a.selection_counts) total += n;
  CHECK(total == 4);
  c.seed = 100;
  const BootstrapReport d = run_bootstrap(st.model, st.fit, st.query, c);
  CHECK(d.env.se != a.env.se);
}

TEST_CASE("forcing the full dimension reproduces the MLE pipeline") {
  const Setup st = chain_setup(42);
  BootstrapConfig c = small_config();
  c.force_full = true;
  const BootstrapReport r = run_bootstrap(st.model, st.fit, st.query, c);
  CHECK(r.env.g_hat == r.mle.g_hat);
  CHECK(r.env.se == r.mle.se);
  for (Eigen::Index i = 0; i < r.ratio.size(); ++i) CHECK(r.ratio[i] == 1.0);
}

TEST_CASE("ratio table ordering") {
  BootstrapReport r;
  r.env.g_hat = Eigen::Vector4d(2.0, 5.0, 1.0, 5.0);
  r.env.se = Eigen::Vector4d(1.0, 1.0, 1.0, 2.0);
  r.mle.g_hat = r.env.g_hat;
  r.mle.se = Eigen::Vector4d(2.0, 3.0, 1.0, 2.0);
  r.ratio = r.mle.se.cwiseQuotient(r.env.se);
  const auto rows = ratio_table(r, 2);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].profile == 1);
  CHECK(rows[1].profile == 3);
  CHECK(rows[2].profile == 0);
  CHECK(rows[3].profile == 2);
  CHECK(rows[0].top);
  CHECK(rows[1].top);
  CHECK_FALSE(rows[2].top);
  CHECK(rows[0].ratio == 3.0);
}

TEST_CASE("redraw cap") {
  const Setup st = chain_setup(43);
  BootstrapConfig c = small_config();
  std::atomic<int> calls{0};
  const Estimator always_fails = [&](const AsterModel&, const Eigen::VectorXd&, const BootstrapConfig&) -> Estimate {
    ++calls;
    throw NumericalError(NumericalError::Kind::NonConvergence, "synthetic failure");
  };
  try {
    run_first_level(st.model, st.fit.beta, st.query, c, always_fails);
    FAIL("expected the redraw cap to trip");
  } catch (const NumericalError& e) {
    CHECK(e.kind() == NumericalError::Kind::Boundary);
  }
  CHECK(calls.load() > 0);

  // The cap is ceil(0.1 * 4) = 1, so a single failure is redrawn.
  std::atomic<int> n{0};
  const Estimator fails_once = [&](const AsterModel& d, const Eigen::VectorXd& s, const BootstrapConfig& cf) {
    if (n++ == 0) throw NumericalError(NumericalError::Kind::NonConvergence, "once");
    return mle_estimate(d, s, cf);
  };
  const FirstLevel fl = run_first_level(st.model, st.fit.beta, st.query, c, fails_once);
  CHECK(fl.redraws == 1);
}

TEST_CASE("selection descriptions") {
  CHECK(describe_selection({0, 3, 4}, 3) == "{1 4 5}");
  CHECK(describe_selection({}, 2) == "u=2");
}

}
