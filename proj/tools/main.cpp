#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "starsec/experiment.hpp"
#include "starsec/optimizer.hpp"
#include "starsec/scenario.hpp"
#include "starsec/verify.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitSolverCap = 3;

struct LoadedConfig {
  starsec::ScenarioConfig config;
  starsec::SolverOptions solver;
};

LoadedConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  nlohmann::json doc;
  in >> doc;
  LoadedConfig loaded;
  loaded.config = starsec::config_from_json(doc);
  if (doc.contains("solver")) loaded.solver = starsec::solver_options_from_json(doc.at("solver"));
  return loaded;
}

nlohmann::json solve_to_json(const starsec::ScenarioConfig& config,
                             const starsec::SolveResult& res) {
  nlohmann::json doc;
  doc["config"] = starsec::config_to_json(config);
  doc["assr_nats"] = res.assr_nats;
  doc["assr_bits"] = res.assr_nats / std::log(2.0);
  doc["user_rates_nats"] = res.user_rates;
  doc["sensing_rates_nats"] = res.sensing_rates;
  doc["residuals"] = res.residuals;
  doc["converged"] = res.converged;
  doc["outer_iterations"] = res.outer_iterations;
  doc["inner_iterations"] = res.total_inner_iterations;
  doc["rho_final"] = res.pdd.rho;
  doc["dual_multipliers"] = res.pdd.nu;
  doc["slack_tau"] = res.pdd.tau;
  return doc;
}

int cmd_solve(const std::string& config_path, const std::string& variant_flag,
              std::uint64_t seed_flag, bool seed_set, const std::string& trace_path,
              const std::string& dump_path, const std::string& out_path) {
  LoadedConfig loaded;
  try {
    loaded = read_config_file(config_path);
    if (!variant_flag.empty())
      loaded.config.system_variant = starsec::variant_from_name(variant_flag);
    if (seed_set) loaded.config.rng_seed = seed_flag;
    loaded.config.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  const starsec::ScenarioConfig& cfg = loaded.config;
  starsec::ChannelSet channels = starsec::generate_channels(
      cfg, starsec::default_geometry(cfg, cfg.rng_seed), cfg.rng_seed);
  if (!dump_path.empty()) starsec::dump_channels(channels, dump_path);

  starsec::SolveResult res = starsec::solve_variant(channels, cfg, loaded.solver);

  std::cout << "variant:          " << starsec::variant_name(cfg.system_variant) << "\n"
            << "seed:             " << cfg.rng_seed << "\n"
            << "assr [nats/s/Hz]: " << res.assr_nats << "\n"
            << "assr [bits/s/Hz]: " << res.assr_nats / std::log(2.0) << "\n"
            << "outer iterations: " << res.outer_iterations << "\n"
            << "inner iterations: " << res.total_inner_iterations << "\n"
            << "converged:        " << (res.converged ? "yes" : "no") << "\n";
  for (std::size_t l = 0; l < res.sensing_rates.size(); ++l)
    std::cout << "sensing rate " << l << ":   " << res.sensing_rates[l]
              << " (residual " << res.residuals[l] << ")\n";

  if (!trace_path.empty()) starsec::emit_trace_csv(res.trace, trace_path);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open output file: " + out_path);
    out << solve_to_json(cfg, res).dump(2) << '\n';
  }
  return res.converged ? 0 : kExitSolverCap;
}

int cmd_sweep(const std::string& plan_path, const std::string& out_dir, bool paper_scale,
              int workers) {
  starsec::ExperimentPlan plan;
  try {
    plan = starsec::load_plan(plan_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  if (paper_scale) {
    plan.n_realizations = 100;
    if (plan.sweep_axis != starsec::SweepAxis::RisElements) plan.base.n_ris_elements = 100;
    plan.base.validate();
  }

  std::filesystem::create_directories(out_dir);
  const auto rows = starsec::run_experiment(plan, workers);
  const std::string csv_path = (std::filesystem::path(out_dir) / "results.csv").string();
  const std::string summary_path = (std::filesystem::path(out_dir) / "summary.json").string();
  starsec::emit_results(rows, csv_path);
  starsec::emit_summary(rows, summary_path);

  int failed = 0;
  for (const auto& row : rows)
    if (row.failed) ++failed;
  std::cout << rows.size() << " rows -> " << csv_path << "\n";
  if (failed > 0) std::cout << failed << " rows recorded a solver failure\n";
  std::cout << starsec::summarize(rows).dump(2) << "\n";
  return 0;
}

int cmd_bench(const std::vector<int>& ns, const std::string& out_path,
              const std::string& config_path, int iters) {
  starsec::ScenarioConfig base;
  if (!config_path.empty()) {
    try {
      base = read_config_file(config_path).config;
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfigError;
    }
  }
  const starsec::TimingReport report = starsec::timing_probe(base, ns, iters);
  for (const auto& p : report.points)
    std::cout << "N_S=" << p.n_ris << "  median " << p.median_iter_ms << " ms/iteration  ("
              << p.iterations << " iterations)\n";
  if (report.slope_defined)
    std::cout << "log-log slope: " << report.slope << "\n";
  else
    std::cout << "log-log slope: undefined (series too short or too narrow)\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open output file: " + out_path);
    out << starsec::timing_to_json(report).dump(2) << '\n';
  }
  return 0;
}

int cmd_check(std::uint64_t seed) {
  const auto reports = starsec::run_all_checks(seed);
  bool all_passed = true;
  for (const auto& r : reports) {
    std::printf("[%s] %-22s worst %.3e  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.worst, r.detail.c_str());
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STAR-RIS ISAC sum secrecy rate solver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string variant_flag;
  std::uint64_t seed_flag = 0;
  std::string trace_path;
  std::string dump_path;
  std::string solve_out;
  auto* solve = app.add_subcommand("solve", "Solve one scenario instance");
  solve->add_option("--config", config_path, "Scenario config JSON")->required();
  solve->add_option("--variant", variant_flag, "Override surface variant: star|cris|noris");
  auto* seed_opt = solve->add_option("--seed", seed_flag, "Override RNG seed");
  solve->add_option("--trace", trace_path, "Write per-iteration trace CSV here");
  solve->add_option("--dump-channels", dump_path, "Write the channel realization here");
  solve->add_option("--out", solve_out, "Write the result JSON here");

  std::string plan_path;
  std::string sweep_out;
  bool paper_scale = false;
  int workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a Monte-Carlo sweep plan");
  sweep->add_option("--plan", plan_path, "Experiment plan JSON")->required();
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_flag("--paper-scale", paper_scale, "100 realizations on a 100-element surface");
  sweep->add_option("--workers", workers, "Worker thread count");

  std::vector<int> bench_ns{128, 256, 512, 1024};
  std::string bench_out;
  std::string bench_config;
  int bench_iters = 40;
  auto* bench = app.add_subcommand("bench", "Per-iteration timing across surface sizes");
  bench->add_option("--ns", bench_ns, "Comma-separated surface sizes")->delimiter(',');
  bench->add_option("--out", bench_out, "Write the timing JSON here");
  bench->add_option("--config", bench_config, "Base scenario config JSON");
  bench->add_option("--iters", bench_iters, "Inner iterations per timing point");

  std::uint64_t check_seed = 7;
  auto* check = app.add_subcommand("check", "Run the numerical self-check suites");
  check->add_option("--seed", check_seed, "Base seed for the check suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed())
      return cmd_solve(config_path, variant_flag, seed_flag, !seed_opt->empty(), trace_path,
                       dump_path, solve_out);
    if (sweep->parsed()) return cmd_sweep(plan_path, sweep_out, paper_scale, workers);
    if (bench->parsed()) return cmd_bench(bench_ns, bench_out, bench_config, bench_iters);
    if (check->parsed()) return cmd_check(check_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
