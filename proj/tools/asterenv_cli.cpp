#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "asterenv/bootstrap.hpp"
#include "asterenv/error.hpp"
#include "asterenv/fitness.hpp"
#include "asterenv/io.hpp"
#include "asterenv/scenario.hpp"

namespace fs = std::filesystem;
using namespace asterenv;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::string g_command = "asterenv";

void log_line(const std::string& level, const std::string& kind, const std::string& message) {
  Json j;
  j["level"] = level;
  j["command"] = g_command;
  j["kind"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

struct Inputs {
  std::string graph, model, data;
};

void add_inputs(CLI::App* cmd, Inputs& in, bool need_data = true) {
  cmd->add_option("--graph", in.graph, "graph config (JSON)")->required()->check(CLI::ExistingFile);
  auto* m = cmd->add_option("--model", in.model, "model config (JSON)")->check(CLI::ExistingFile);
  auto* d = cmd->add_option("--data", in.data, "long-format data CSV")->check(CLI::ExistingFile);
  if (need_data) {
    m->required();
    d->required();
  }
}

struct Loaded {
  std::shared_ptr<const Graph> graph;
  std::shared_ptr<const Design> design;
  Dataset data;
  std::unique_ptr<AsterModel> model;
};

Loaded load(const Inputs& in) {
  Loaded l;
  l.graph = std::make_shared<const Graph>(load_graph_config(in.graph));
  l.design = std::make_shared<const Design>(l.graph, load_model_config(in.model));
  l.data = read_dataset(in.data, *l.graph);
  l.model = std::make_unique<AsterModel>(make_model(*l.design, l.data));
  return l;
}

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

Json input_echo(const Inputs& in) {
  return {{"graph_hash", hex64(fnv1a(read_json(in.graph).dump()))},
          {"model_hash", hex64(fnv1a(read_json(in.model).dump()))},
          {"data", fs::path(in.data).filename().string()}};
}

IndexSet parse_index_list(const std::string& s) {
  IndexSet out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 1) throw ValidationError("bad index \"" + item + "\" (one-based integers expected)");
    out.push_back(v - 1);
  }
  return out;
}

int cmd_validate(const Inputs& in) {
  const GraphConfig config = load_graph_config(in.graph);
  const auto violations = validate(config);
  for (const auto& v : violations) std::cout << v.assumption << "\t" << v.node << "\t" << v.message << '\n';
  if (!violations.empty()) {
    log_line("error", "validation", std::to_string(violations.size()) + " graph violation(s)");
    return kExitValidation;
  }
  const auto graph = std::make_shared<const Graph>(config);
  if (!in.model.empty()) {
    const Design design(graph, load_model_config(in.model));
    if (!in.data.empty()) make_model(design, read_dataset(in.data, *graph));
  } else if (!in.data.empty()) {
    read_dataset(in.data, *graph);
  }
  std::cout << "ok: " << graph->size() << " nodes\n";
  return 0;
}

struct SimulateArgs {
  std::string graph = "triplets";
  std::size_t n = 3000;
  bool linear = false;
  std::string true_subspace;
  std::vector<double> beta;
  std::uint64_t seed = 0;
  std::size_t profiles = 100;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  ScenarioSpec spec;
  spec.graph = parse_scenario_graph(a.graph);
  spec.n_individuals = a.n;
  spec.quadratic = !a.linear;
  spec.n_profiles = a.profiles;
  if (!a.beta.empty()) spec.true_beta = Eigen::Map<const Eigen::VectorXd>(a.beta.data(), static_cast<Eigen::Index>(a.beta.size()));
  if (!a.true_subspace.empty()) spec.true_subspace = parse_index_list(a.true_subspace);
  const Scenario s = generate_scenario(spec, a.seed);
  write_scenario(a.out, s);
  std::cout << "wrote " << s.data.size() << " individuals to " << a.out << '\n';
  return 0;
}

int cmd_fit(const Inputs& in, const std::string& out) {
  const Loaded l = load(in);
  const FitResult fit = fit_mle(*l.model);
  fs::create_directories(out);
  const auto names = l.design->column_names();
  CsvTable coef;
  coef.header = {"name", "beta", "tau", "se"};
  const Eigen::MatrixXd cov = fit.sigma.inverse();
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto e = static_cast<Eigen::Index>(c);
    coef.rows.push_back({names[c], format_double(fit.beta[e]), format_double(fit.tau[e]), format_double(std::sqrt(cov(e, e)))});
  }
  write_csv(fs::path(out) / "coefficients.csv", coef);
  write_csv(fs::path(out) / "fisher.csv", matrix_table(names, fit.sigma));
  Json summary;
  summary["loglik"] = fit.loglik;
  summary["iterations"] = fit.iterations;
  summary["score_norm"] = fit.score_norm;
  summary["observed_expected_gap"] = observed_expected_gap(*l.model, fit.mu);
  summary["n_individuals"] = l.model->n_individuals();
  summary["nuisance_dim"] = l.model->nuisance_dim();
  summary["interest_dim"] = l.model->interest_dim();
  write_json(fs::path(out) / "summary.json", summary);
  write_json(fs::path(out) / "meta.json", make_meta(0, {{"command", "fit"}, {"inputs", input_echo(in)}}));
  std::cout << "loglik " << format_double(fit.loglik) << " after " << fit.iterations << " iterations\n";
  return 0;
}

int cmd_envelope(const Inputs& in, const std::string& method, const std::string& criterion, const std::string& out) {
  const Loaded l = load(in);
  const FitResult fit = fit_mle(*l.model);
  const Selection sel = select_structure(*l.model, fit, parse_method(method), parse_criterion(criterion));
  fs::create_directories(out);
  CsvTable t;
  t.header = {"candidate", "u", "loglik", "df", "criterion", "skipped", "selected", "note"};
  for (const auto& c : sel.candidates) {
    const bool chosen = !c.skipped && c.u == sel.structure.u && c.index_set == sel.structure.index_set;
    t.rows.push_back({describe_selection(c.index_set, c.u), std::to_string(c.u), format_double(c.loglik),
                      std::to_string(c.df), format_double(c.criterion_value), c.skipped ? "1" : "0",
                      chosen ? "1" : "0", c.note});
  }
  write_csv(fs::path(out) / "selection.csv", t);
  Json summary;
  summary["method"] = method;
  summary["criterion"] = criterion;
  summary["selected"] = describe_selection(sel.structure.index_set, sel.structure.u);
  summary["u"] = sel.structure.u;
  summary["eigenvalues"] = vec_json(sel.eigen.values);
  summary["tau_env"] = vec_json(sel.fit.tau);
  summary["loglik"] = sel.fit.loglik;
  write_json(fs::path(out) / "envelope.json", summary);
  write_json(fs::path(out) / "meta.json",
             make_meta(0, {{"command", "envelope"}, {"method", method}, {"criterion", criterion}, {"inputs", input_echo(in)}}));
  std::cout << sel.candidates.size() << " candidates, selected " << summary["selected"].get<std::string>() << '\n';
  return 0;
}

struct LandscapeArgs {
  std::string z1 = "z1", z2 = "z2";
  std::vector<double> r1, r2;
  int n1 = 50, n2 = 50;
  bool se = false;
  std::string out;
};

int cmd_landscape(const Inputs& in, const LandscapeArgs& a) {
  const Loaded l = load(in);
  const FitResult fit = fit_mle(*l.model);
  const Eigen::MatrixXd Z = l.design->select_covariates(l.data);
  const auto& covs = l.design->config().covariates;
  auto col = [&](const std::string& name) {
    auto it = std::find(covs.begin(), covs.end(), name);
    if (it == covs.end()) throw ValidationError("model has no covariate \"" + name + "\"");
    return static_cast<Eigen::Index>(it - covs.begin());
  };
  GridSpec grid;
  grid.z1 = a.z1;
  grid.z2 = a.z2;
  grid.n1 = a.n1;
  grid.n2 = a.n2;
  const auto c1 = col(a.z1), c2 = col(a.z2);
  grid.z1_min = a.r1.empty() ? Z.col(c1).minCoeff() : a.r1[0];
  grid.z1_max = a.r1.empty() ? Z.col(c1).maxCoeff() : a.r1[1];
  grid.z2_min = a.r2.empty() ? Z.col(c2).minCoeff() : a.r2[0];
  grid.z2_max = a.r2.empty() ? Z.col(c2).maxCoeff() : a.r2[1];
  const Eigen::VectorXd tmpl = Z.colwise().mean().transpose();
  const auto points = landscape_grid(*l.model, fit.beta, l.design, grid, tmpl);
  Eigen::VectorXd se;
  if (a.se) se = delta_method_se(*l.model, fit, FitnessQuery(l.design, grid_profiles(*l.design, grid, tmpl)));
  CsvTable t;
  t.header = {"z1", "z2", "ghat"};
  if (a.se) t.header.push_back("se");
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<std::string> row{format_double(points[i].z1), format_double(points[i].z2), format_double(points[i].ghat)};
    if (a.se) row.push_back(format_double(se[static_cast<Eigen::Index>(i)]));
    t.rows.push_back(std::move(row));
  }
  fs::create_directories(a.out);
  write_csv(fs::path(a.out) / "grid.csv", t);
  write_json(fs::path(a.out) / "meta.json",
             make_meta(0, {{"command", "landscape"}, {"z1", a.z1}, {"z2", a.z2}, {"n1", a.n1}, {"n2", a.n2},
                           {"inputs", input_echo(in)}}));
  std::cout << points.size() << " grid points\n";
  return 0;
}

struct BootstrapArgs {
  std::string profiles;
  int B = 200, K = 100;
  std::uint64_t seed = 0;
  std::string criterion = "bic", method = "subspace";
  int threads = 1;
  bool force_full = false;
  std::size_t top = 7;
  std::string out;
};

int cmd_bootstrap(const Inputs& in, const BootstrapArgs& a) {
  const Loaded l = load(in);
  BootstrapConfig cfg;
  cfg.B = a.B;
  cfg.K = a.K;
  cfg.seed = a.seed;
  cfg.criterion = parse_criterion(a.criterion);
  cfg.method = parse_method(a.method);
  cfg.threads = a.threads;
  cfg.force_full = a.force_full;
  cfg.validate();
  const auto& covs = l.design->config().covariates;
  const FitnessQuery query(l.design, read_profiles(a.profiles, covs));
  const FitResult fit = fit_mle(*l.model);
  const BootstrapReport rep = run_bootstrap(*l.model, fit, query, cfg);

  fs::create_directories(a.out);
  CsvTable report;
  report.header = {"profile"};
  report.header.insert(report.header.end(), covs.begin(), covs.end());
  for (const char* h : {"g_env", "se_env", "g_mle", "se_mle", "ratio", "top"}) report.header.push_back(h);
  for (const auto& r : ratio_table(rep, a.top)) {
    std::vector<std::string> row{std::to_string(r.profile + 1)};
    for (Eigen::Index c = 0; c < query.profiles().cols(); ++c)
      row.push_back(format_double(query.profiles()(static_cast<Eigen::Index>(r.profile), c)));
    for (double v : {r.g_env, r.se_env, r.g_mle, r.se_mle, r.ratio}) row.push_back(format_double(v));
    row.push_back(r.top ? "1" : "0");
    report.rows.push_back(std::move(row));
  }
  write_csv(fs::path(a.out) / "report.csv", report);

  CsvTable reps;
  reps.header = {"pipeline", "b", "selection", "u", "redraws"};
  const auto names = l.design->column_names();
  for (const auto& n : names) reps.header.push_back("tau_" + n);
  for (std::size_t p = 0; p < query.size(); ++p) reps.header.push_back("g_" + std::to_string(p + 1));
  auto add = [&](const char* pipeline, const FirstLevel& first) {
    for (const auto& r : first.replicates) {
      std::vector<std::string> row{pipeline, std::to_string(r.b + 1), describe_selection(r.index_set, r.u),
                                   std::to_string(r.u), std::to_string(r.redraws)};
      for (double v : r.tau) row.push_back(format_double(v));
      for (double v : r.g) row.push_back(format_double(v));
      reps.rows.push_back(std::move(row));
    }
  };
  add("envelope", rep.env.first);
  add("mle", rep.mle.first);
  write_csv(fs::path(a.out) / "replicates.csv", reps);

  Json config;
  config["command"] = "bootstrap";
  config["B"] = a.B;
  config["K"] = a.K;
  config["criterion"] = a.criterion;
  config["method"] = a.method;
  config["force_full"] = a.force_full;
  config["profiles"] = query.size();
  config["inputs"] = input_echo(in);
  Json meta = make_meta(a.seed, config);
  meta["se_formula"] = kSeFormula;
  meta["initial_selection"] = describe_selection(rep.initial.index_set, rep.initial.u);
  meta["redraws"] = {{"envelope_first", rep.env.first.redraws},
                     {"envelope_second", rep.env.second.redraws},
                     {"mle_first", rep.mle.first.redraws},
                     {"mle_second", rep.mle.second.redraws}};
  Json counts = Json::object();
  for (const auto& [sel, count] : rep.selection_counts) counts[sel] = count;
  meta["selection_counts"] = counts;
  meta["max_observed_expected_gap"] = std::max({rep.env.first.max_oe_gap, rep.env.second.max_oe_gap,
                                                rep.mle.first.max_oe_gap, rep.mle.second.max_oe_gap});
  write_json(fs::path(a.out) / "meta.json", meta);
  std::cout << "initial selection " << meta["initial_selection"].get<std::string>() << "; report written to "
            << a.out << '\n';
  return 0;
}

int cmd_report(const std::string& dir, bool all) {
  const CsvTable t = read_csv(fs::path(dir) / "report.csv");
  const std::size_t top = t.column("top");
  std::cout << std::setw(10) << "g_env" << std::setw(10) << "se_env" << std::setw(10) << "g_mle" << std::setw(10)
            << "se_mle" << std::setw(10) << "ratio" << '\n';
  std::cout << std::fixed << std::setprecision(3);
  for (const auto& row : t.rows) {
    if (!all && row[top] != "1") continue;
    for (const char* c : {"g_env", "se_env", "g_mle", "se_mle", "ratio"})
      std::cout << std::setw(10) << std::stod(row[t.column(c)]);
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aster models with envelope estimators of expected fitness"};
  app.set_version_flag("--version", ASTERENV_VERSION);
  app.require_subcommand(1);

  Inputs validate_in, fit_in, env_in, land_in, boot_in;
  auto* validate_cmd = app.add_subcommand("validate", "check a graph config (and optionally model and data)");
  add_inputs(validate_cmd, validate_in, false);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "generate a synthetic scenario");
  simulate_cmd->add_option("--graph", sim.graph, "triplets | chain")->capture_default_str();
  simulate_cmd->add_option("--n", sim.n, "number of individuals")->capture_default_str();
  simulate_cmd->add_flag("--linear", sim.linear, "linear instead of full quadratic covariate terms");
  simulate_cmd->add_option("--true-subspace", sim.true_subspace, "one-based eigenvector indices, e.g. 1,4");
  simulate_cmd->add_option("--beta", sim.beta, "true coefficients (default built in)")->delimiter(',');
  simulate_cmd->add_option("--seed", sim.seed, "master seed")->required();
  simulate_cmd->add_option("--profiles", sim.profiles, "individuals written to profiles.csv")->capture_default_str();
  simulate_cmd->add_option("--out", sim.out, "output directory")->required();

  std::string fit_out;
  auto* fit_cmd = app.add_subcommand("fit", "maximum likelihood fit");
  add_inputs(fit_cmd, fit_in);
  fit_cmd->add_option("--out", fit_out, "output directory")->required();

  std::string env_method = "subspace", env_criterion = "bic", env_out;
  auto* env_cmd = app.add_subcommand("envelope", "envelope structure selection");
  add_inputs(env_cmd, env_in);
  env_cmd->add_option("--method", env_method, "subspace | 1d")->capture_default_str();
  env_cmd->add_option("--criterion", env_criterion, "aic | bic")->capture_default_str();
  env_cmd->add_option("--out", env_out, "output directory")->required();

  LandscapeArgs land;
  auto* land_cmd = app.add_subcommand("landscape", "expected fitness over a covariate grid");
  add_inputs(land_cmd, land_in);
  land_cmd->add_option("--z1", land.z1)->capture_default_str();
  land_cmd->add_option("--z2", land.z2)->capture_default_str();
  land_cmd->add_option("--z1-range", land.r1, "min,max (default: data range)")->delimiter(',')->expected(2);
  land_cmd->add_option("--z2-range", land.r2, "min,max (default: data range)")->delimiter(',')->expected(2);
  land_cmd->add_option("--n1", land.n1)->capture_default_str()->check(CLI::PositiveNumber);
  land_cmd->add_option("--n2", land.n2)->capture_default_str()->check(CLI::PositiveNumber);
  land_cmd->add_flag("--se", land.se, "add delta-method standard errors");
  land_cmd->add_option("--out", land.out, "output directory")->required();

  BootstrapArgs boot;
  auto* boot_cmd = app.add_subcommand("bootstrap", "double parametric bootstrap, envelope vs MLE");
  add_inputs(boot_cmd, boot_in);
  boot_cmd->add_option("--profiles", boot.profiles, "CSV of covariate profiles")->required()->check(CLI::ExistingFile);
  boot_cmd->add_option("--B", boot.B, "first-level replicates")->capture_default_str();
  boot_cmd->add_option("--K", boot.K, "second-level replicates")->capture_default_str();
  boot_cmd->add_option("--seed", boot.seed, "master seed")->required();
  boot_cmd->add_option("--criterion", boot.criterion, "aic | bic")->capture_default_str();
  boot_cmd->add_option("--method", boot.method, "subspace | 1d")->capture_default_str();
  boot_cmd->add_option("--threads", boot.threads, "worker threads")->capture_default_str();
  boot_cmd->add_flag("--force-full", boot.force_full, "restrict selection to the full dimension");
  boot_cmd->add_option("--top", boot.top, "rows flagged as top in report.csv")->capture_default_str();
  boot_cmd->add_option("--out", boot.out, "output directory")->required();

  std::string report_dir;
  bool report_all = false;
  auto* report_cmd = app.add_subcommand("report", "print the ratio table of a bootstrap run");
  report_cmd->add_option("--in", report_dir, "bootstrap output directory")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_flag("--all", report_all, "print every profile, not only the top rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) log_line("error", "usage", e.what());
    return app.exit(e) == 0 ? 0 : kExitValidation;
  }

  g_command = app.get_subcommands().front()->get_name();
  try {
    if (*validate_cmd) return cmd_validate(validate_in);
    if (*simulate_cmd) return cmd_simulate(sim);
    if (*fit_cmd) return cmd_fit(fit_in, fit_out);
    if (*env_cmd) return cmd_envelope(env_in, env_method, env_criterion, env_out);
    if (*land_cmd) return cmd_landscape(land_in, land);
    if (*boot_cmd) return cmd_bootstrap(boot_in, boot);
    if (*report_cmd) return cmd_report(report_dir, report_all);
  } catch (const ValidationError& e) {
    log_line("error", "validation", e.what());
    return kExitValidation;
  } catch (const NumericalError& e) {
    log_line("error", "numerical", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    log_line("error", "io", e.what());
    return kExitValidation;
  }
  return 0;
}
