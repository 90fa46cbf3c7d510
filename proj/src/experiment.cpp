#include "starsec/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "starsec/rng.hpp"

namespace starsec {

namespace {

constexpr std::uint64_t kRealizationStride = 1000000ull;

std::string fmt_g(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  double hi = xs[mid];
  if (xs.size() % 2 == 1) return hi;
  const double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::None: return "none";
    case SweepAxis::RisElements: return "n_ris_elements";
    case SweepAxis::PmaxDbm: return "p_max_dbm";
    case SweepAxis::SensingSinrDb: return "sensing_sinr_db";
    case SweepAxis::UserAntennas: return "n_user_antennas";
    case SweepAxis::Targets: return "n_targets";
  }
  throw std::invalid_argument("unknown sweep axis");
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "none" || name.empty()) return SweepAxis::None;
  if (name == "n_ris_elements") return SweepAxis::RisElements;
  if (name == "p_max_dbm") return SweepAxis::PmaxDbm;
  if (name == "sensing_sinr_db") return SweepAxis::SensingSinrDb;
  if (name == "n_user_antennas") return SweepAxis::UserAntennas;
  if (name == "n_targets") return SweepAxis::Targets;
  throw std::invalid_argument("unknown sweep axis: " + name);
}

ScenarioConfig apply_sweep(const ScenarioConfig& base, SweepAxis axis, double value) {
  ScenarioConfig c = base;
  switch (axis) {
    case SweepAxis::None:
      break;
    case SweepAxis::RisElements:
      c.n_ris_elements = static_cast<int>(std::lround(value));
      break;
    case SweepAxis::PmaxDbm:
      c.p_max = dbm_to_watts(value);
      break;
    case SweepAxis::SensingSinrDb:
      c.sensing_sinr_threshold = db_to_linear(value);
      break;
    case SweepAxis::UserAntennas:
      c.n_user_antennas = static_cast<int>(std::lround(value));
      break;
    case SweepAxis::Targets:
      c.n_targets = static_cast<int>(std::lround(value));
      break;
  }
  c.validate();
  return c;
}

void ExperimentPlan::validate() const {
  base.validate();
  if (n_realizations < 1) throw std::invalid_argument("n_realizations must be at least 1");
  if (sweep_axis != SweepAxis::None && sweep_values.empty())
    throw std::invalid_argument("sweep_values must be non-empty for a swept axis");
  for (double v : sweep_values) apply_sweep(base, sweep_axis, v);  // fail fast on bad grid
}

SolverOptions solver_options_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("solver options must be a JSON object");
  static const std::set<std::string> known = {
      "inner_tol", "inner_lag", "inner_cap", "outer_tol", "outer_cap", "rho_init",
      "zeta", "rho_floor", "rng_seed", "armijo_initial_step", "armijo_shrink",
      "armijo_slope", "armijo_max_backtracks", "armijo_warm_start", "armijo_warm_growth"};
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!known.count(key)) throw std::invalid_argument("unknown solver field: " + key);
  }
  SolverOptions o;
  o.inner_tol = doc.value("inner_tol", o.inner_tol);
  o.inner_lag = doc.value("inner_lag", o.inner_lag);
  o.inner_cap = doc.value("inner_cap", o.inner_cap);
  o.outer_tol = doc.value("outer_tol", o.outer_tol);
  o.outer_cap = doc.value("outer_cap", o.outer_cap);
  o.rho_init = doc.value("rho_init", o.rho_init);
  o.zeta = doc.value("zeta", o.zeta);
  o.rho_floor = doc.value("rho_floor", o.rho_floor);
  o.rng_seed = doc.value("rng_seed", o.rng_seed);
  o.armijo.initial_step = doc.value("armijo_initial_step", o.armijo.initial_step);
  o.armijo.shrink = doc.value("armijo_shrink", o.armijo.shrink);
  o.armijo.slope = doc.value("armijo_slope", o.armijo.slope);
  o.armijo.max_backtracks = doc.value("armijo_max_backtracks", o.armijo.max_backtracks);
  o.armijo.warm_start = doc.value("armijo_warm_start", o.armijo.warm_start);
  o.armijo.warm_growth = doc.value("armijo_warm_growth", o.armijo.warm_growth);
  return o;
}

ExperimentPlan plan_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("plan document must be a JSON object");
  static const std::set<std::string> known = {
      "sweep_axis", "sweep_values", "n_realizations", "variants",
      "base", "solver", "freeze_positions", "output_path"};
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!known.count(key)) throw std::invalid_argument("unknown plan field: " + key);
  }
  ExperimentPlan p;
  if (doc.contains("sweep_axis"))
    p.sweep_axis = sweep_axis_from_name(doc.at("sweep_axis").get<std::string>());
  if (doc.contains("sweep_values"))
    p.sweep_values = doc.at("sweep_values").get<std::vector<double>>();
  p.n_realizations = doc.value("n_realizations", p.n_realizations);
  if (doc.contains("variants")) {
    p.variants.clear();
    for (const auto& v : doc.at("variants"))
      p.variants.push_back(variant_from_name(v.get<std::string>()));
  }
  if (doc.contains("base")) p.base = config_from_json(doc.at("base"));
  if (doc.contains("solver")) p.solver = solver_options_from_json(doc.at("solver"));
  p.freeze_positions = doc.value("freeze_positions", p.freeze_positions);
  p.output_path = doc.value("output_path", p.output_path);
  p.validate();
  return p;
}

ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plan file: " + path);
  nlohmann::json doc;
  in >> doc;
  return plan_from_json(doc);
}

double ResultRow::min_sensing_rate() const {
  if (sensing_rates.empty()) return 0.0;
  return *std::min_element(sensing_rates.begin(), sensing_rates.end());
}

namespace {

// One channel realization covering every variant of a (sweep value,
// realization) cell; variant-specific zeroing happens inside solve_variant.
void run_cell(const ExperimentPlan& plan, double value, int realization, ResultRow* out) {
  const std::uint64_t seed =
      plan.base.rng_seed * kRealizationStride + static_cast<std::uint64_t>(realization);
  for (std::size_t vi = 0; vi < plan.variants.size(); ++vi) {
    ResultRow& row = out[vi];
    row.variant = plan.variants[vi];
    row.sweep_axis = plan.sweep_axis;
    row.sweep_value = value;
    row.seed = seed;
    row.assr_nats = std::numeric_limits<double>::quiet_NaN();
    row.assr_bits = std::numeric_limits<double>::quiet_NaN();
  }

  ChannelSet channels;
  ScenarioConfig cfg;
  try {
    cfg = apply_sweep(plan.base, plan.sweep_axis, value);
    cfg.rng_seed = seed;
    ScenarioConfig gen = cfg;
    gen.system_variant = SystemVariant::Star;
    const std::uint64_t geom_seed =
        plan.freeze_positions ? plan.base.rng_seed * kRealizationStride : seed;
    channels = generate_channels(gen, default_geometry(gen, geom_seed), seed);
  } catch (const std::exception& e) {
    for (std::size_t vi = 0; vi < plan.variants.size(); ++vi) {
      out[vi].failed = true;
      out[vi].error = e.what();
    }
    return;
  }

  for (std::size_t vi = 0; vi < plan.variants.size(); ++vi) {
    ResultRow& row = out[vi];
    try {
      ScenarioConfig vcfg = cfg;
      vcfg.system_variant = plan.variants[vi];
      const auto t0 = std::chrono::steady_clock::now();
      SolveResult res = solve_variant(channels, vcfg, plan.solver);
      const auto t1 = std::chrono::steady_clock::now();
      row.assr_nats = res.assr_nats;
      row.assr_bits = res.assr_nats / std::log(2.0);
      row.sensing_rates = res.sensing_rates;
      row.converged = res.converged;
      row.iterations = res.total_inner_iterations;
      row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  }
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentPlan& plan, int workers) {
  plan.validate();
  std::vector<double> values = plan.sweep_values;
  if (plan.sweep_axis == SweepAxis::None) values.assign(1, 0.0);
  if (plan.variants.empty() || values.empty()) return {};

  struct Cell {
    double value;
    int realization;
  };
  std::vector<Cell> cells;
  for (double v : values)
    for (int r = 0; r < plan.n_realizations; ++r) cells.push_back({v, r});

  std::vector<ResultRow> rows(cells.size() * plan.variants.size());
  std::atomic<std::size_t> next{0};
  auto pump = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      run_cell(plan, cells[i].value, cells[i].realization, &rows[i * plan.variants.size()]);
    }
  };

  const int pool = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
  if (pool == 1) {
    pump();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(pool));
    for (int t = 0; t < pool; ++t) threads.emplace_back(pump);
    for (auto& t : threads) t.join();
  }

  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.variant != b.variant) return static_cast<int>(a.variant) < static_cast<int>(b.variant);
    if (a.sweep_value != b.sweep_value) return a.sweep_value < b.sweep_value;
    return a.seed < b.seed;
  });
  return rows;
}

void emit_results(const std::vector<ResultRow>& rows, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot open results file: " + csv_path);
  out << "variant,sweep_axis,sweep_value,seed,assr_nats,assr_bits,"
         "min_sensing_rate,converged,iterations,wall_ms\n";
  for (const ResultRow& row : rows) {
    out << variant_name(row.variant) << ',' << sweep_axis_name(row.sweep_axis) << ','
        << fmt_g(row.sweep_value) << ',' << row.seed << ',' << fmt_g(row.assr_nats) << ','
        << fmt_g(row.assr_bits) << ',' << fmt_g(row.min_sensing_rate()) << ','
        << (row.converged ? 1 : 0) << ',' << row.iterations << ',' << fmt_g(row.wall_ms) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for results file: " + csv_path);
}

void emit_trace_csv(const ConvergenceTrace& trace, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot open trace file: " + csv_path);
  out << "iter,augmented,true,min_residual,branch_J,branch_theta,rho,outer\n";
  for (const TraceRecord& rec : trace.records) {
    double min_residual = 0.0;
    if (!rec.residuals.empty())
      min_residual = *std::min_element(rec.residuals.begin(), rec.residuals.end());
    out << rec.iteration << ',' << fmt_g(rec.augmented) << ',' << fmt_g(rec.true_objective) << ','
        << fmt_g(min_residual) << ',' << rec.branch_j << ',' << rec.branch_theta << ','
        << fmt_g(rec.rho) << ',' << rec.outer << '\n';
  }
  if (!out) throw std::runtime_error("write failed for trace file: " + csv_path);
}

nlohmann::json summarize(const std::vector<ResultRow>& rows) {
  struct Acc {
    std::vector<double> nats;
    int n_failed = 0;
    int n_converged = 0;
  };
  std::map<std::pair<int, double>, Acc> groups;
  for (const ResultRow& row : rows) {
    Acc& acc = groups[{static_cast<int>(row.variant), row.sweep_value}];
    if (row.failed) {
      ++acc.n_failed;
      continue;
    }
    acc.nats.push_back(row.assr_nats);
    if (row.converged) ++acc.n_converged;
  }

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& [key, acc] : groups) {
    const auto n = static_cast<double>(acc.nats.size());
    double mean = 0.0;
    double stderr_nats = 0.0;
    if (n > 0) {
      for (double x : acc.nats) mean += x;
      mean /= n;
      if (n > 1) {
        double ss = 0.0;
        for (double x : acc.nats) ss += (x - mean) * (x - mean);
        stderr_nats = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
    }
    summary.push_back({{"variant", variant_name(static_cast<SystemVariant>(key.first))},
                       {"sweep_value", key.second},
                       {"n", acc.nats.size()},
                       {"n_failed", acc.n_failed},
                       {"n_converged", acc.n_converged},
                       {"mean_assr_nats", mean},
                       {"stderr_assr_nats", stderr_nats},
                       {"mean_assr_bits", mean / std::log(2.0)},
                       {"stderr_assr_bits", stderr_nats / std::log(2.0)}});
  }

  // Paired dominance: same (sweep value, seed) solved under both surfaces.
  std::map<std::pair<double, std::uint64_t>, double> star;
  std::map<std::pair<double, std::uint64_t>, double> cris;
  for (const ResultRow& row : rows) {
    if (row.failed) continue;
    if (row.variant == SystemVariant::Star) star[{row.sweep_value, row.seed}] = row.assr_nats;
    if (row.variant == SystemVariant::ConventionalRis)
      cris[{row.sweep_value, row.seed}] = row.assr_nats;
  }
  int pairs = 0;
  int dominant = 0;
  for (const auto& [key, nats] : star) {
    auto it = cris.find(key);
    if (it == cris.end()) continue;
    ++pairs;
    if (nats >= it->second) ++dominant;
  }

  nlohmann::json doc;
  doc["groups"] = summary;
  if (pairs > 0) {
    doc["paired_star_vs_cris"] = {
        {"n_pairs", pairs},
        {"fraction_star_ge_cris", static_cast<double>(dominant) / static_cast<double>(pairs)}};
  }
  return doc;
}

void emit_summary(const std::vector<ResultRow>& rows, const std::string& json_path) {
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("cannot open summary file: " + json_path);
  out << summarize(rows).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for summary file: " + json_path);
}

TimingReport timing_probe(const ScenarioConfig& base, const std::vector<int>& ris_sizes,
                          int iterations_per_point) {
  if (iterations_per_point < 2)
    throw std::invalid_argument("timing probe needs at least 2 iterations per point");
  TimingReport report;
  for (int n_ris : ris_sizes) {
    ScenarioConfig cfg = base;
    cfg.system_variant = SystemVariant::Star;
    cfg.n_ris_elements = n_ris;
    cfg.validate();
    ChannelSet channels =
        generate_channels(cfg, default_geometry(cfg, cfg.rng_seed), cfg.rng_seed);

    SolverOptions opts;
    opts.inner_tol = -1.0;  // fixed-length pass: the convergence test never fires
    opts.inner_cap = iterations_per_point;
    opts.rng_seed = cfg.rng_seed;

    PddState pdd;
    pdd.nu.assign(static_cast<std::size_t>(cfg.n_targets), 0.0);
    pdd.tau.assign(static_cast<std::size_t>(cfg.n_targets), 0.0);
    pdd.rho = opts.rho_init;
    pdd.zeta = opts.zeta;

    TransmitCovariances j = TransmitCovariances::zeros(cfg.n_tx, cfg.n_users, cfg.n_targets);
    StarRisProfile theta = StarRisProfile::power_split_init(cfg.n_ris_elements);
    Rng init_rng = Rng(cfg.rng_seed).substream(rng_block::kBeamformerInit);
    ReceiveBeamformers phis;
    phis.phis.reserve(static_cast<std::size_t>(cfg.n_targets));
    for (int l = 0; l < cfg.n_targets; ++l) phis.phis.push_back(init_rng.unit_vector(cfg.n_rx));

    ConvergenceTrace trace;
    run_inner(channels, cfg, j, theta, phis, pdd, opts, 1, trace);

    std::vector<double> iter_ms;
    // The first iteration pays one-off allocation costs; drop it from the median.
    for (std::size_t i = (trace.records.size() > 1 ? 1 : 0); i < trace.records.size(); ++i)
      iter_ms.push_back(static_cast<double>(trace.records[i].wall_ns) * 1e-6);
    report.points.push_back({n_ris, median_of(iter_ms), static_cast<int>(trace.records.size())});
  }

  int lo = 0;
  int hi = 0;
  for (const TimingPoint& p : report.points) {
    if (lo == 0 || p.n_ris < lo) lo = p.n_ris;
    if (p.n_ris > hi) hi = p.n_ris;
  }
  if (report.points.size() >= 2 && lo > 0 && hi >= 8 * lo) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto n = static_cast<double>(report.points.size());
    for (const TimingPoint& p : report.points) {
      const double x = std::log(static_cast<double>(p.n_ris));
      const double y = std::log(std::max(p.median_iter_ms, 1e-9));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    report.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    report.slope_defined = true;
  }
  return report;
}

nlohmann::json timing_to_json(const TimingReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const TimingPoint& p : report.points)
    points.push_back({{"n_ris_elements", p.n_ris},
                      {"median_iter_ms", p.median_iter_ms},
                      {"iterations", p.iterations}});
  nlohmann::json doc;
  doc["points"] = points;
  if (report.slope_defined)
    doc["slope"] = report.slope;
  else
    doc["slope"] = nullptr;
  return doc;
}

}  // namespace starsec
