#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "starsec/experiment.hpp"
#include "starsec/optimizer.hpp"
#include "starsec/scenario.hpp"

using namespace starsec;

namespace {

ScenarioConfig tiny_config(SystemVariant variant = SystemVariant::Star) {
  ScenarioConfig cfg;
  cfg.n_tx = 2;
  cfg.n_rx = 2;
  cfg.n_user_antennas = 1;
  cfg.n_ris_elements = 4;
  cfg.n_users = 1;
  cfg.n_targets = 1;
  cfg.reflection_user_indices = {0};
  cfg.system_variant = variant;
  cfg.rng_seed = 9;
  return cfg;
}

SolverOptions fast_solver() {
  SolverOptions opts;
  opts.inner_cap = 40;
  opts.outer_cap = 4;
  return opts;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ResultRow make_row(SystemVariant variant, double sweep_value, std::uint64_t seed, double nats,
                   bool converged = true, bool failed = false) {
  ResultRow row;
  row.variant = variant;
  row.sweep_value = sweep_value;
  row.seed = seed;
  row.assr_nats = nats;
  row.assr_bits = nats / std::log(2.0);
  row.converged = converged;
  row.failed = failed;
  return row;
}

const nlohmann::json* find_group(const nlohmann::json& summary, const std::string& variant,
                                 double sweep_value) {
  for (const auto& g : summary.at("groups")) {
    if (g.at("variant").get<std::string>() == variant &&
        g.at("sweep_value").get<double>() == sweep_value)
      return &g;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("sweep axis names round-trip and reject unknowns") {
  const SweepAxis axes[] = {SweepAxis::None,          SweepAxis::RisElements,
                            SweepAxis::PmaxDbm,       SweepAxis::SensingSinrDb,
                            SweepAxis::UserAntennas,  SweepAxis::Targets};
  for (SweepAxis axis : axes) CHECK(sweep_axis_from_name(sweep_axis_name(axis)) == axis);
  CHECK(sweep_axis_name(SweepAxis::RisElements) == "n_ris_elements");
  CHECK(sweep_axis_from_name("") == SweepAxis::None);
  CHECK_THROWS_AS(sweep_axis_from_name("bandwidth"), std::invalid_argument);
}

TEST_CASE("apply_sweep overrides exactly one field") {
  const ScenarioConfig base = tiny_config();

  ScenarioConfig c = apply_sweep(base, SweepAxis::None, 123.0);
  CHECK(c.n_ris_elements == base.n_ris_elements);
  CHECK(c.p_max == doctest::Approx(base.p_max));

  c = apply_sweep(base, SweepAxis::RisElements, 32.0);
  CHECK(c.n_ris_elements == 32);
  CHECK(c.n_tx == base.n_tx);

  c = apply_sweep(base, SweepAxis::PmaxDbm, 20.0);
  CHECK(c.p_max == doctest::Approx(dbm_to_watts(20.0)).epsilon(1e-12));
  CHECK(c.n_ris_elements == base.n_ris_elements);

  c = apply_sweep(base, SweepAxis::SensingSinrDb, 10.0);
  CHECK(c.sensing_sinr_threshold == doctest::Approx(db_to_linear(10.0)).epsilon(1e-12));

  c = apply_sweep(base, SweepAxis::UserAntennas, 3.0);
  CHECK(c.n_user_antennas == 3);

  c = apply_sweep(base, SweepAxis::Targets, 2.0);
  CHECK(c.n_targets == 2);

  // The override is validated, so an impossible grid point is rejected here.
  CHECK_THROWS_AS(apply_sweep(base, SweepAxis::Targets, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(apply_sweep(base, SweepAxis::UserAntennas, -1.0), std::invalid_argument);
}

TEST_CASE("plan parsing applies fields, defaults, and rejections") {
  nlohmann::json base_doc = {
      {"n_tx", 2},           {"n_rx", 2},      {"n_user_antennas", 1},
      {"n_ris_elements", 4}, {"n_users", 1},   {"n_targets", 1},
      {"rng_seed", 9},       {"system_variant", "star"}};

  SUBCASE("full document") {
    nlohmann::json doc = {{"base", base_doc},
                          {"sweep_axis", "n_ris_elements"},
                          {"sweep_values", {4.0, 8.0}},
                          {"n_realizations", 2},
                          {"variants", {"star", "noris"}},
                          {"solver", {{"inner_cap", 25}, {"outer_cap", 3}}},
                          {"freeze_positions", true},
                          {"output_path", "rows.csv"}};
    ExperimentPlan p = plan_from_json(doc);
    CHECK(p.sweep_axis == SweepAxis::RisElements);
    REQUIRE(p.sweep_values.size() == 2);
    CHECK(p.sweep_values[1] == 8.0);
    CHECK(p.n_realizations == 2);
    REQUIRE(p.variants.size() == 2);
    CHECK(p.variants[0] == SystemVariant::Star);
    CHECK(p.variants[1] == SystemVariant::NoRis);
    CHECK(p.base.n_ris_elements == 4);
    CHECK(p.solver.inner_cap == 25);
    CHECK(p.solver.outer_cap == 3);
    CHECK(p.freeze_positions);
    CHECK(p.output_path == "rows.csv");
  }

  SUBCASE("defaults when only a base is given") {
    ExperimentPlan p = plan_from_json({{"base", base_doc}});
    CHECK(p.sweep_axis == SweepAxis::None);
    CHECK(p.sweep_values.empty());
    CHECK(p.n_realizations == 5);
    REQUIRE(p.variants.size() == 3);
    CHECK(p.variants[0] == SystemVariant::Star);
    CHECK(p.variants[1] == SystemVariant::ConventionalRis);
    CHECK(p.variants[2] == SystemVariant::NoRis);
    CHECK_FALSE(p.freeze_positions);
  }

  SUBCASE("unknown keys are rejected at both levels") {
    CHECK_THROWS_AS(plan_from_json({{"base", base_doc}, {"sweeep_axis", "none"}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        plan_from_json({{"base", base_doc}, {"solver", {{"inner_capacity", 5}}}}),
        std::invalid_argument);
  }

  SUBCASE("plan validation") {
    ExperimentPlan p;
    p.base = tiny_config();
    p.n_realizations = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.n_realizations = 1;
    p.sweep_axis = SweepAxis::PmaxDbm;
    p.sweep_values.clear();
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.sweep_values = {0.0, 10.0};
    CHECK_NOTHROW(p.validate());
    // A grid value that produces an invalid scenario fails fast.
    p.sweep_axis = SweepAxis::Targets;
    p.sweep_values = {1.0, 0.0};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
}

TEST_CASE("solver options json covers armijo knobs") {
  nlohmann::json doc = {{"inner_tol", 1e-7},
                        {"inner_cap", 123},
                        {"outer_cap", 9},
                        {"rho_init", 2.5},
                        {"zeta", 0.25},
                        {"rng_seed", 77},
                        {"armijo_initial_step", 0.5},
                        {"armijo_max_backtracks", 11},
                        {"armijo_warm_start", false}};
  SolverOptions o = solver_options_from_json(doc);
  CHECK(o.inner_tol == doctest::Approx(1e-7));
  CHECK(o.inner_cap == 123);
  CHECK(o.outer_cap == 9);
  CHECK(o.rho_init == doctest::Approx(2.5));
  CHECK(o.zeta == doctest::Approx(0.25));
  CHECK(o.rng_seed == 77);
  CHECK(o.armijo.initial_step == doctest::Approx(0.5));
  CHECK(o.armijo.max_backtracks == 11);
  CHECK_FALSE(o.armijo.warm_start);

  SolverOptions defaults;
  SolverOptions partial = solver_options_from_json({{"inner_cap", 5}});
  CHECK(partial.inner_cap == 5);
  CHECK(partial.outer_cap == defaults.outer_cap);
  CHECK(partial.armijo.shrink == doctest::Approx(defaults.armijo.shrink));

  CHECK_THROWS_AS(solver_options_from_json({{"step_size", 0.1}}), std::invalid_argument);
}

TEST_CASE("runs are deterministic and paired across variants") {
  ExperimentPlan plan;
  plan.base = tiny_config();
  plan.n_realizations = 2;
  plan.variants = {SystemVariant::Star, SystemVariant::NoRis};
  plan.solver = fast_solver();

  const std::vector<ResultRow> rows = run_experiment(plan);
  REQUIRE(rows.size() == 4);

  SUBCASE("rows arrive sorted by variant then seed") {
    CHECK(rows[0].variant == SystemVariant::Star);
    CHECK(rows[1].variant == SystemVariant::Star);
    CHECK(rows[2].variant == SystemVariant::NoRis);
    CHECK(rows[3].variant == SystemVariant::NoRis);
    CHECK(rows[0].seed < rows[1].seed);
    CHECK(rows[2].seed < rows[3].seed);
    for (const ResultRow& row : rows) {
      CHECK_FALSE(row.failed);
      CHECK(std::isfinite(row.assr_nats));
      CHECK(row.assr_bits == doctest::Approx(row.assr_nats / std::log(2.0)).epsilon(1e-12));
      CHECK(row.iterations > 0);
    }
  }

  SUBCASE("a second run reproduces every objective bit-for-bit") {
    const std::vector<ResultRow> again = run_experiment(plan);
    REQUIRE(again.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(again[i].variant == rows[i].variant);
      CHECK(again[i].seed == rows[i].seed);
      CHECK(again[i].assr_nats == rows[i].assr_nats);
      CHECK(again[i].converged == rows[i].converged);
      CHECK(again[i].iterations == rows[i].iterations);
    }
  }

  SUBCASE("worker count does not change the rows") {
    const std::vector<ResultRow> par = run_experiment(plan, 3);
    REQUIRE(par.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(par[i].seed == rows[i].seed);
      CHECK(par[i].assr_nats == rows[i].assr_nats);
    }
  }

  SUBCASE("each cell reproduces a hand-built paired solve") {
    // Variants within a realization share one channel draw: the draw comes
    // from the full-surface configuration at the realization seed.
    const std::uint64_t seed = plan.base.rng_seed * 1000000ull;
    ScenarioConfig cfg = apply_sweep(plan.base, plan.sweep_axis, 0.0);
    cfg.rng_seed = seed;
    ScenarioConfig gen = cfg;
    gen.system_variant = SystemVariant::Star;
    const ChannelSet ch = generate_channels(gen, default_geometry(gen, seed), seed);

    for (SystemVariant variant : plan.variants) {
      ScenarioConfig vcfg = cfg;
      vcfg.system_variant = variant;
      const SolveResult res = solve_variant(ch, vcfg, plan.solver);
      bool matched = false;
      for (const ResultRow& row : rows) {
        if (row.variant == variant && row.seed == seed) {
          CHECK(row.assr_nats == res.assr_nats);
          matched = true;
        }
      }
      CHECK(matched);
    }
  }
}

TEST_CASE("surface size is irrelevant without a surface") {
  ExperimentPlan plan;
  plan.base = tiny_config(SystemVariant::NoRis);
  plan.sweep_axis = SweepAxis::RisElements;
  plan.sweep_values = {4.0, 16.0};
  plan.n_realizations = 1;
  plan.variants = {SystemVariant::NoRis};
  plan.solver = fast_solver();

  const std::vector<ResultRow> rows = run_experiment(plan);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].assr_nats ==
        doctest::Approx(rows[1].assr_nats).epsilon(1e-9));
}

TEST_CASE("experiment handles empty work and records sweep metadata") {
  ExperimentPlan plan;
  plan.base = tiny_config();
  plan.n_realizations = 1;
  plan.variants.clear();
  CHECK(run_experiment(plan).empty());

  plan.variants = {SystemVariant::Star};
  plan.sweep_axis = SweepAxis::PmaxDbm;
  plan.sweep_values = {0.0};
  plan.solver = fast_solver();
  const std::vector<ResultRow> rows = run_experiment(plan);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].sweep_axis == SweepAxis::PmaxDbm);
  CHECK(rows[0].sweep_value == 0.0);
}

TEST_CASE("results csv is stable and parseable") {
  const std::string path = "/tmp/starsec_test_rows.csv";
  const std::string header =
      "variant,sweep_axis,sweep_value,seed,assr_nats,assr_bits,"
      "min_sensing_rate,converged,iterations,wall_ms\n";

  SUBCASE("no rows still yields the header") {
    emit_results({}, path);
    CHECK(slurp(path) == header);
  }

  SUBCASE("rows carry the variant name and flags") {
    ResultRow row = make_row(SystemVariant::ConventionalRis, 16.0, 42, 1.5, false);
    row.sweep_axis = SweepAxis::RisElements;
    row.sensing_rates = {0.75, 0.25};
    row.iterations = 7;
    emit_results({row}, path);
    const std::string text = slurp(path);
    CHECK(text.substr(0, header.size()) == header);
    CHECK(text.find("cRIS,n_ris_elements,16,42,1.5,") != std::string::npos);
    CHECK(text.find(",0.25,0,7,") != std::string::npos);  // min sensing rate, converged=0
  }

  std::remove(path.c_str());
}

TEST_CASE("trace csv mirrors the convergence records") {
  ConvergenceTrace trace;
  TraceRecord a;
  a.iteration = 0;
  a.augmented = 1.25;
  a.true_objective = 1.0;
  a.residuals = {0.5, 0.125};
  a.branch_j = 'G';
  a.branch_theta = 'A';
  a.rho = 10.0;
  a.outer = 0;
  TraceRecord b = a;
  b.iteration = 1;
  b.residuals.clear();
  trace.records = {a, b};

  const std::string path = "/tmp/starsec_test_trace.csv";
  emit_trace_csv(trace, path);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "iter,augmented,true,min_residual,branch_J,branch_theta,rho,outer");
  REQUIRE(std::getline(in, line));
  CHECK(line == "0,1.25,1,0.125,G,A,10,0");
  REQUIRE(std::getline(in, line));
  CHECK(line == "1,1.25,1,0,G,A,10,0");  // empty residuals report zero
  CHECK_FALSE(std::getline(in, line));
  std::remove(path.c_str());
}

TEST_CASE("summary aggregates groups and paired dominance") {
  std::vector<ResultRow> rows;
  rows.push_back(make_row(SystemVariant::Star, 0.0, 100, 1.0));
  rows.push_back(make_row(SystemVariant::Star, 0.0, 101, 2.0));
  rows.push_back(make_row(SystemVariant::Star, 0.0, 102, 4.0, false));
  rows.push_back(make_row(SystemVariant::ConventionalRis, 0.0, 100, 0.5));
  rows.push_back(make_row(SystemVariant::ConventionalRis, 0.0, 101, 2.5));
  rows.push_back(make_row(SystemVariant::ConventionalRis, 0.0, 102, 3.0));
  // A failed row is counted but never pollutes the statistics.
  rows.push_back(make_row(SystemVariant::Star, 0.0, 103, 1e9, true, true));

  const nlohmann::json summary = summarize(rows);
  const nlohmann::json* star = find_group(summary, "STAR", 0.0);
  REQUIRE(star != nullptr);
  CHECK((*star)["n"] == 3);
  CHECK((*star)["n_failed"] == 1);
  CHECK((*star)["n_converged"] == 2);
  const double mean = 7.0 / 3.0;
  CHECK((*star)["mean_assr_nats"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
  double ss = 0.0;
  for (double x : {1.0, 2.0, 4.0}) ss += (x - mean) * (x - mean);
  const double se = std::sqrt(ss / 2.0) / std::sqrt(3.0);
  CHECK((*star)["stderr_assr_nats"].get<double>() == doctest::Approx(se).epsilon(1e-12));
  CHECK((*star)["mean_assr_bits"].get<double>() ==
        doctest::Approx(mean / std::log(2.0)).epsilon(1e-12));

  REQUIRE(summary.contains("paired_star_vs_cris"));
  CHECK(summary["paired_star_vs_cris"]["n_pairs"] == 3);
  CHECK(summary["paired_star_vs_cris"]["fraction_star_ge_cris"].get<double>() ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  SUBCASE("single sample has zero standard error") {
    const nlohmann::json solo = summarize({make_row(SystemVariant::NoRis, 0.0, 1, 3.0)});
    const nlohmann::json* g = find_group(solo, "NoRIS", 0.0);
    REQUIRE(g != nullptr);
    CHECK((*g)["n"] == 1);
    CHECK((*g)["stderr_assr_nats"].get<double>() == 0.0);
    CHECK_FALSE(solo.contains("paired_star_vs_cris"));
  }

  SUBCASE("emit_summary writes the same document") {
    const std::string path = "/tmp/starsec_test_summary.json";
    emit_summary(rows, path);
    std::ifstream in(path);
    nlohmann::json loaded;
    in >> loaded;
    CHECK(loaded == summary);
    std::remove(path.c_str());
  }
}

TEST_CASE("timing probe guards its inputs and its slope") {
  ScenarioConfig base = tiny_config();

  CHECK_THROWS_AS(timing_probe(base, {4}, 1), std::invalid_argument);

  SUBCASE("one point or a narrow span leaves the slope undefined") {
    TimingReport one = timing_probe(base, {4}, 3);
    REQUIRE(one.points.size() == 1);
    CHECK(one.points[0].n_ris == 4);
    CHECK(one.points[0].median_iter_ms >= 0.0);
    CHECK_FALSE(one.slope_defined);

    TimingReport narrow = timing_probe(base, {4, 16}, 3);
    REQUIRE(narrow.points.size() == 2);
    CHECK_FALSE(narrow.slope_defined);

    const nlohmann::json doc = timing_to_json(narrow);
    CHECK(doc.at("slope").is_null());
    REQUIRE(doc.at("points").size() == 2);
    CHECK(doc["points"][1]["n_ris_elements"] == 16);
  }

  SUBCASE("an 8x span defines the slope") {
    TimingReport wide = timing_probe(base, {4, 32}, 3);
    REQUIRE(wide.points.size() == 2);
    CHECK(wide.slope_defined);
    CHECK(std::isfinite(wide.slope));
    const nlohmann::json doc = timing_to_json(wide);
    CHECK(doc.at("slope").is_number());
  }
}

}  // TEST_SUITE
