// Acceptance checks, one per criterion: `acceptance N` runs criterion N and
// prints a single PASS/FAIL line; `acceptance` alone runs all of them.

#include <unistd.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "asterenv/bootstrap.hpp"
#include "asterenv/design.hpp"
#include "asterenv/envelope.hpp"
#include "asterenv/error.hpp"
#include "asterenv/exp_family.hpp"
#include "asterenv/fitness.hpp"
#include "asterenv/io.hpp"
#include "asterenv/scenario.hpp"
#include "oracles.hpp"

using namespace asterenv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

int worker_count() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// The quadratic triplet scenario with eigenvectors 1 and 4 embedded.
Scenario embedded_scenario(std::uint64_t seed, std::size_t n = 3000) {
  ScenarioSpec spec;
  spec.n_individuals = n;
  spec.true_subspace = IndexSet{0, 3};
  return generate_scenario(spec, seed);
}

Outcome exp_family_correctness() {
  double worst = 0.0;
  for (Family f : {Family::Bernoulli, Family::Poisson, Family::ZeroTruncatedPoisson}) {
    for (int i = 0; i <= 400; ++i) {
      const double t = -5.0 + i * 0.025;
      const double d1 = oracle::derivative([f](double x) { return cumulant(f, x); }, t);
      const double d2 = oracle::derivative([f](double x) { return cumulant_d1(f, x); }, t);
      worst = std::max(worst, std::abs(cumulant_d1(f, t) - d1) / std::abs(d1));
      worst = std::max(worst, std::abs(cumulant_d2(f, t) - d2) / std::abs(d2));
    }
  }
  const double ztp = std::abs(cumulant_d1(Family::ZeroTruncatedPoisson, 0.0) - oracle::ztp_mean_series(1.0));
  const double closed = std::abs(oracle::ztp_mean_series(1.0) - std::numbers::e / (std::numbers::e - 1.0));
  return {worst < 1e-6 && ztp < 1e-9 && closed < 1e-9,
          "max relative derivative error " + fmt(worst) + ", ZTP mean error " + fmt(ztp)};
}

Outcome observed_equals_expected() {
  const Scenario s = embedded_scenario(2);
  const AsterModel m = make_model(*s.design, s.data);
  const FitResult fit = fit_mle(m);
  double worst = observed_expected_gap(m, fit.mu);
  int fits = 1;
  for (const auto& G : enumerate_reducing_subspaces(static_cast<int>(m.interest_dim()))) {
    const EigenBasis eb = eigen_decompose(fit.sigma_vv);
    Eigen::MatrixXd gamma(eb.vectors.rows(), static_cast<Eigen::Index>(G.size()));
    for (std::size_t c = 0; c < G.size(); ++c) gamma.col(static_cast<Eigen::Index>(c)) = eb.vectors.col(G[c]);
    worst = std::max(worst, fit_envelope(m, fit, gamma).oe_gap);
    ++fits;
  }
  for (int u = 1; u <= static_cast<int>(m.interest_dim()); ++u) {
    SelectOptions o;
    o.fixed_u = u;
    worst = std::max(worst, select_structure(m, fit, Method::OneD, Criterion::BIC, o).fit.oe_gap);
    ++fits;
  }
  BootstrapConfig cfg;
  cfg.B = 5;
  cfg.K = 3;
  cfg.seed = 2;
  cfg.threads = worker_count();
  const FitnessQuery q(s.design, s.profiles.topRows(10));
  const BootstrapReport r = run_bootstrap(m, fit, q, cfg);
  worst = std::max({worst, r.env.first.max_oe_gap, r.env.second.max_oe_gap, r.mle.first.max_oe_gap,
                    r.mle.second.max_oe_gap});
  fits += 2 * (cfg.B + cfg.B * cfg.K);
  return {worst < 1e-6, std::to_string(fits) + " fits, max relative gap " + fmt(worst)};
}

Outcome parameterization_round_trips() {
  double worst = 0.0;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (int rep = 0; rep < 100; ++rep) {
    ScenarioSpec spec;
    spec.graph = rep % 2 ? ScenarioGraph::Chain : ScenarioGraph::Triplets;
    spec.n_individuals = 200;
    spec.quadratic = rep % 4 < 2;
    const Scenario s = generate_scenario(spec, 1000 + static_cast<std::uint64_t>(rep));
    const AsterModel m = make_model(*s.design, s.data);
    Eigen::VectorXd beta = s.beta;
    for (auto& b : beta) b += nd(rng);
    const Eigen::VectorXd back = tau_to_beta(m, beta_to_tau(m, beta));
    worst = std::max(worst, (back - beta).cwiseAbs().maxCoeff() / (1.0 + beta.cwiseAbs().maxCoeff()));
  }
  return {worst < 1e-8, "100 instances, max relative error " + fmt(worst)};
}

Outcome fisher_information() {
  double worst_fd = 0.0;
  for (auto graph : {ScenarioGraph::Chain, ScenarioGraph::Triplets}) {
    ScenarioSpec spec;
    spec.graph = graph;
    spec.n_individuals = 40;
    const Scenario s = generate_scenario(spec, 4);
    const AsterModel m = make_model(*s.design, s.data);
    const Eigen::MatrixXd F = fisher_info(m, s.beta);
    // Hessian of the log likelihood: differences of its finite-difference gradient.
    const auto grad = [&](const Eigen::VectorXd& b) {
      return oracle::gradient([&](const Eigen::VectorXd& x) { return log_lik(m, x); }, b, 1e-4);
    };
    const Eigen::MatrixXd H = oracle::jacobian(grad, s.beta, 1e-4);
    worst_fd = std::max(worst_fd, (F + 0.5 * (H + H.transpose())).norm() / F.norm());
  }

  ScenarioSpec spec;
  spec.graph = ScenarioGraph::Chain;
  spec.n_individuals = 20;
  const Scenario s = generate_scenario(spec, 5);
  const AsterModel m = make_model(*s.design, s.data);
  const Eigen::MatrixXd F = fisher_info(m, s.beta);
  const Eigen::MatrixXd Mt = m.base_matrix().transpose();
  const auto p = F.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(p, p);
  Rng rng = stream(5, {1});
  const int R = 100000;
  for (int r = 0; r < R; ++r) {
    const Eigen::VectorXd t = Mt * simulate(m.graph(), s.theta, rng);
    sum += t;
    sq.selfadjointView<Eigen::Lower>().rankUpdate(t);
  }
  const Eigen::VectorXd mean = sum / R;
  Eigen::MatrixXd emp = sq.selfadjointView<Eigen::Lower>();
  emp = (emp - R * mean * mean.transpose()) / (R - 1);
  const double emp_err = (emp - F).norm() / F.norm();
  return {worst_fd < 1e-4 && emp_err < 0.05,
          "finite-difference Hessian " + fmt(worst_fd) + ", empirical Var(M'Y) over 1e5 draws " + fmt(emp_err)};
}

// Orthonormal k x k matrix with Haar-like distribution.
Eigen::MatrixXd random_rotation(int k, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd A(k, k);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
}

Outcome onedim_equivalence() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.1, 10.0);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int k = 3 + rep % 3;
    const int u = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(k - 1));
    const Eigen::MatrixXd R = random_rotation(k, rng);
    Eigen::VectorXd lambda(k);
    for (auto& l : lambda) l = unif(rng);
    const Eigen::MatrixXd Sigma = R * lambda.asDiagonal() * R.transpose();
    Eigen::VectorXd v(k);
    for (auto& x : v) x = nd(rng);
    const Eigen::MatrixXd U = v * v.transpose();

    // Reducing-subspace estimate: u eigenvectors chosen at random.
    const EigenBasis eb = eigen_decompose(Sigma);
    std::vector<int> all(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i;
    std::shuffle(all.begin(), all.end(), rng);
    IndexSet G(all.begin(), all.begin() + u);
    std::sort(G.begin(), G.end());
    const EnvelopeStructure st = envelope_from_subspace(eb, G, v).first;

    // O = O_G O_u^T with O_u from the 1D output on the original inputs.
    const Eigen::MatrixXd gu = onedim_algorithm(Sigma, U, u);
    Eigen::MatrixXd Ou(k, k), OG(k, k);
    Ou << gu, orthogonal_complement(gu);
    OG << st.gamma, orthogonal_complement(st.gamma);
    const Eigen::MatrixXd O = OG * Ou.transpose();
    const Eigen::MatrixXd out = onedim_algorithm(O * Sigma * O.transpose(), O * U * O.transpose(), u);
    worst = std::max(worst, std::asin(std::min(1.0, max_principal_angle_sin(out, st.gamma))));
  }
  return {worst < 1e-6, "50 instances, largest principal angle " + fmt(worst) + " rad"};
}

Outcome envelope_identities() {
  const Scenario s = embedded_scenario(6);
  const AsterModel m = make_model(*s.design, s.data);
  const FitResult fit = fit_mle(m);
  const auto k = static_cast<Eigen::Index>(m.interest_dim());
  const EnvelopeFit full = fit_envelope(m, fit, Eigen::MatrixXd::Identity(k, k));
  SelectOptions fixed;
  fixed.fixed_index_set = enumerate_reducing_subspaces(static_cast<int>(k)).back();
  const Selection sel = select_structure(m, fit, Method::ReducingSubspace, Criterion::BIC, fixed);
  const bool same = full.beta == fit.beta && full.tau == fit.tau && sel.fit.beta == fit.beta &&
                    sel.fit.tau == fit.tau;

  const Eigen::MatrixXd& S = fit.sigma_vv;
  const EigenBasis eb = eigen_decompose(S);
  const double scale = S.cwiseAbs().maxCoeff();
  double decomp = 0.0, commute = 0.0;
  for (const auto& G : enumerate_reducing_subspaces(static_cast<int>(k))) {
    const Eigen::MatrixXd P = envelope_from_subspace(eb, G, fit.tau.tail(k)).first.projection;
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(k, k) - P;
    decomp = std::max(decomp, (P * S * P + Q * S * Q - S).cwiseAbs().maxCoeff() / scale);
    commute = std::max(commute, (P * S - S * P).cwiseAbs().maxCoeff() / scale);
  }
  return {same && decomp < 1e-10 && commute < 1e-8,
          std::string("full envelope ") + (same ? "equals" : "differs from") + " MLE; PSP+QSQ-S " + fmt(decomp) +
              ", PS-SP " + fmt(commute) + " (relative to max|S|)"};
}

Outcome variance_reduction() {
  const Scenario s = embedded_scenario(1);
  const AsterModel m = make_model(*s.design, s.data);
  const FitResult fit = fit_mle(m);
  const FitnessQuery q(s.design, s.profiles);
  BootstrapConfig cfg;
  cfg.B = 200;
  cfg.K = 100;
  cfg.seed = 7;
  cfg.criterion = Criterion::BIC;
  cfg.method = Method::ReducingSubspace;
  cfg.threads = worker_count();
  const BootstrapReport r = run_bootstrap(m, fit, q, cfg);
  const auto rows = ratio_table(r, 7);
  int above = 0;
  std::string ratios;
  for (const auto& row : rows) {
    if (!row.top) continue;
    above += row.ratio > 1.0;
    ratios += (ratios.empty() ? "" : " ") + fmt(row.ratio);
  }
  return {above >= 5, std::to_string(above) + " of top 7 ratios exceed 1 (" + ratios + "), initial selection " +
                          describe_selection(r.initial.index_set, r.initial.u)};
}

Outcome bootstrap_vs_delta() {
  ScenarioSpec spec;
  spec.graph = ScenarioGraph::Chain;
  spec.quadratic = false;
  spec.n_individuals = 10000;
  const Scenario s = generate_scenario(spec, 8);
  const AsterModel m = make_model(*s.design, s.data);
  const FitResult fit = fit_mle(m);
  const FitnessQuery q(s.design, s.profiles.topRows(10));
  const Eigen::VectorXd delta = delta_method_se(m, fit, q);
  BootstrapConfig cfg;
  cfg.B = 200;
  cfg.K = 10;
  cfg.seed = 8;
  cfg.force_full = true;
  cfg.threads = worker_count();
  const PipelineResult r = mle_reference_bootstrap(m, fit, q, cfg);
  const double worst = (r.se.array() / delta.array() - 1.0).abs().maxCoeff();
  return {worst < 0.2, "10 profiles, max |se_boot / se_delta - 1| = " + fmt(worst)};
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(ASTERENV_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("asterenv_determinism_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const std::string d = dir.string();
  if (run_cli("simulate --graph triplets --n 3000 --seed 9 --true-subspace 1,4 --out " + d + "/sc") != 0) {
    return {false, "simulate failed"};
  }
  const std::string boot = "bootstrap --graph " + d + "/sc/graph.json --model " + d + "/sc/model.json --data " + d +
                           "/sc/data.csv --profiles " + d + "/sc/profiles.csv --B 4 --K 4 --seed 9";
  if (run_cli(boot + " --threads 1 --out " + d + "/t1") != 0 || run_cli(boot + " --threads 3 --out " + d + "/t3") != 0) {
    return {false, "bootstrap failed"};
  }
  int identical = 0;
  for (const char* f : {"report.csv", "replicates.csv", "meta.json"}) {
    const std::string a = slurp(dir / "t1" / f);
    identical += !a.empty() && a == slurp(dir / "t3" / f);
  }
  fs::remove_all(dir);
  return {identical == 3, std::to_string(identical) + " of 3 report files byte-identical across 1 and 3 threads"};
}

Outcome selection_reproduction() {
  int hits = 0;
  std::map<std::string, int> seen;
  SelectOptions opts;
  opts.prune = true;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Scenario s = embedded_scenario(1000 + seed);
    const AsterModel m = make_model(*s.design, s.data);
    const FitResult fit = fit_mle(m);
    const Selection sel = select_structure(m, fit, Method::ReducingSubspace, Criterion::BIC, opts);
    const IndexSet& G = sel.structure.index_set;
    hits += std::includes(G.begin(), G.end(), s.spec.true_subspace->begin(), s.spec.true_subspace->end());
    ++seen[describe_selection(G, sel.structure.u)];
  }
  std::string mix;
  for (const auto& [k, n] : seen) mix += (mix.empty() ? "" : ", ") + k + " x" + std::to_string(n);
  return {hits >= 40, std::to_string(hits) + " of 50 selections contain {1 4} (" + mix + ")"};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria = {
    {"exponential-family derivatives and ZTP mean", exp_family_correctness},
    {"observed equals expected after every fit", observed_equals_expected},
    {"beta -> tau -> beta round trips", parameterization_round_trips},
    {"Fisher information vs finite differences and simulation", fisher_information},
    {"1D algorithm on rotated inputs returns the reducing-subspace estimate", onedim_equivalence},
    {"envelope identities", envelope_identities},
    {"envelope reduces bootstrap standard errors", variance_reduction},
    {"bootstrap vs delta-method standard errors", bootstrap_vs_delta},
    {"bootstrap output independent of worker count", determinism},
    {"BIC selection contains the true subspace", selection_reproduction},
};

bool run(std::size_t c) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = kCriteria[c - 1].second();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << kCriteria[c - 1].first << "  ["
            << o.detail << "; " << fmt(secs) << " s]" << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> which;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (c < 1 || c > static_cast<int>(kCriteria.size())) {
      std::cerr << "usage: acceptance [criterion 1.." << kCriteria.size() << "]...\n";
      return 2;
    }
    which.push_back(static_cast<std::size_t>(c));
  }
  if (which.empty()) {
    for (std::size_t c = 1; c <= kCriteria.size(); ++c) which.push_back(c);
  }
  bool ok = true;
  for (std::size_t c : which) ok = run(c) && ok;
  return ok ? 0 : 1;
}
