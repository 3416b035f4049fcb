// tvflcm command-line front end: fit, simulate, predict, landmark-build.
// Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.

#include "tvflcm/error.hpp"
#include "tvflcm/format.hpp"
#include "tvflcm/io.hpp"
#include "tvflcm/landmark.hpp"
#include "tvflcm/predict.hpp"
#include "tvflcm/simulate.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace tvflcm;

namespace {

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (auto f : split_fields(text)) {
    double v = 0;
    if (!parse_double(trim(f), v)) throw ValidationError(what + ": '" + std::string(trim(f)) + "' is not a number");
    out.push_back(v);
  }
  return out;
}

// "start:step:count" or an explicit comma list.
LandmarkGrid parse_landmarks(const std::string& spec, const std::string& window) {
  LandmarkGrid g;
  if (spec.find(':') != std::string::npos) {
    std::vector<double> p;
    std::string_view rest = spec;
    for (std::size_t at; (at = rest.find(':')) != std::string_view::npos; rest.remove_prefix(at + 1)) {
      double v = 0;
      if (!parse_double(rest.substr(0, at), v)) throw ValidationError("--landmarks: malformed '" + spec + "'");
      p.push_back(v);
    }
    double v = 0;
    if (!parse_double(rest, v)) throw ValidationError("--landmarks: malformed '" + spec + "'");
    p.push_back(v);
    if (p.size() != 3 || p[2] < 1 || p[2] != std::floor(p[2]))
      throw ValidationError("--landmarks: expected start:step:count, got '" + spec + "'");
    for (int l = 0; l < static_cast<int>(p[2]); ++l) g.s.push_back(p[0] + l * p[1]);
  } else {
    g.s = parse_list(spec, "--landmarks");
  }
  const std::vector<double> w = parse_list(window, "--window");
  if (w.size() == 1)
    g.w.assign(g.s.size(), w.front());
  else if (w.size() == g.s.size())
    g.w = w;
  else
    throw ValidationError("--window: give one value or one per landmark");
  g.validate();
  return g;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw ValidationError("cannot write '" + p.string() + "'");
  return f;
}

struct FitArgs {
  std::string data, grid = "uniform:0", route = "landmark", landmarks = "0", window = "inf", out_dir = "tvflcm_fit";
  std::string u_family = "cc", t_family = "cr", time_margin = "spline", constraint = "predictor_sum_to_zero";
  std::string lambda, likelihood = "poisson";
  int k_u = 5, k_s = 5, k_1 = 5, surface_intervals = 100;
  bool no_center = false, separate = false;
};

std::vector<double> surface_t_grid(const RouteFit& f, int intervals) {
  if (f.t_margin.kind() == MarginKind::indicator) return f.t_margin.levels();
  if (f.route == Route::landmark && f.strata_times.back() > f.strata_times.front())
    return uniform_points(f.strata_times.front(), f.strata_times.back(), intervals);
  const Interval d = f.t_margin.domain();
  return uniform_points(d.lo, d.hi, intervals);
}

int cmd_fit(const FitArgs& a) {
  const GridDefinition grid = resolve_grid(a.grid);
  const FunctionalDataset d = read_functional_file(a.data, grid);
  RouteConfig rc;
  rc.k_u = a.k_u;
  rc.k_s = a.k_s;
  rc.k_1 = a.k_1;
  rc.u_family = spline_family_from_string(a.u_family);
  rc.t_family = spline_family_from_string(a.t_family);
  if (a.time_margin == "spline") rc.time_margin = TimeMargin::spline;
  else if (a.time_margin == "constant") rc.time_margin = TimeMargin::constant;
  else if (a.time_margin == "indicator") rc.time_margin = TimeMargin::indicator;
  else throw ValidationError("--time-margin must be spline, constant or indicator");
  rc.constraint = constraint_kind_from_string(a.constraint);
  rc.center = !a.no_center;
  rc.separate_models = a.separate;
  if (!a.lambda.empty()) rc.log10_lambda = parse_list(a.lambda, "--lambda");
  if (a.likelihood == "poisson") rc.expanded_likelihood = LikelihoodKind::poisson;
  else if (a.likelihood == "cox") rc.expanded_likelihood = LikelihoodKind::cox_stratified;
  else throw ValidationError("--likelihood must be poisson or cox");
  const Route route = route_from_string(a.route);
  const LandmarkGrid lg = parse_landmarks(a.landmarks, a.window);
  const RouteFit f = route == Route::poisson ? fit_tvflcm_poisson(d.records, d.z, rc)
                                             : fit_tvflcm_landmark(d.records, d.z, lg, rc);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  {
    const Interval ud = f.u_margin.domain();
    const SurfaceGrid s = eval_surface(f.surface(), uniform_points(ud.lo, ud.hi, a.surface_intervals),
                                       surface_t_grid(f, a.surface_intervals));
    auto out = open_out(dir / "surface.csv");
    write_surface(out, s);
  }
  {
    auto out = open_out(dir / "model.json");
    save_model(out, f);
  }
  {
    auto out = open_out(dir / "baseline.csv");
    out << "stratum,s,time,jump,cumulative\n";
    for (std::size_t l = 0; l < f.baseline.size(); ++l) {
      const double s = f.route == Route::landmark ? f.strata_times[l] : 0.0;
      const auto& h = f.baseline[l];
      for (std::size_t k = 0; k < h.times.size(); ++k)
        out << l << ',' << format_double(s) << ',' << format_double(h.times[k]) << ',' << format_double(h.jumps[k])
            << ',' << format_double(h.cumulative[k]) << '\n';
    }
  }
  {
    // survival of every subject at the end of each window it belongs to
    auto out = open_out(dir / "survival.csv");
    out << "id,stratum,s,t,survival\n";
    for (int i = 0; i < d.z.subjects(); ++i) {
      SubjectData sd;
      sd.x = d.records[i].x;
      sd.z.resize(static_cast<std::size_t>(d.z.grid_size()));
      for (int v = 0; v < d.z.grid_size(); ++v) sd.z[v] = d.z.values(i, v);
      sd.followed_to = d.records[i].y;
      const int strata = f.route == Route::landmark ? static_cast<int>(f.strata_times.size()) : 1;
      for (int l = 0; l < strata; ++l) {
        const double s = f.route == Route::landmark ? f.strata_times[l] : 0.0;
        if (f.route == Route::landmark && !(d.records[i].y > s)) continue;
        const SurvivalCurve c = survival_curve(f, sd, l);
        double t = c.time.back();
        if (f.route == Route::landmark && l < static_cast<int>(f.windows.size()) && std::isfinite(f.windows[l]))
          t = s + f.windows[l];
        out << d.records[i].id << ',' << l << ',' << format_double(s) << ',' << format_double(t) << ','
            << format_double(survival_at(c, t)) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "report.txt");
    out << "# tvflcm fit " << timestamp() << '\n';
    out << "key,value\n";
    int events = 0;
    for (const auto& r : d.records) events += r.delta;
    out << "route," << to_string(f.route) << '\n'
        << "subjects," << d.records.size() << '\n'
        << "events," << events << '\n'
        << "rows," << f.rows << '\n'
        << "k_u," << f.u_margin.dimension() << '\n'
        << "k_s," << f.t_margin.dimension() << '\n'
        << "k_1," << f.scalar_margin.dimension() << '\n'
        << "coefficients," << f.fit.coefficients.size() << '\n'
        << "constraint_rank," << f.constraint_rank << '\n'
        << "loglik," << format_double(f.fit.loglik) << '\n'
        << "reml," << format_double(f.fit.reml.value) << '\n'
        << "edf_total," << format_double(f.fit.edf_total) << '\n'
        << "iterations," << f.fit.convergence.iterations << '\n'
        << "ties_jittered," << f.ties.jittered << '\n';
    out << "log10_lambda,";
    for (std::size_t q = 0; q < f.fit.log10_lambdas.size(); ++q)
      out << (q ? ";" : "") << format_double(f.fit.log10_lambdas[q]);
    out << '\n';
    for (const auto& w : f.warnings) out << "warning," << w << '\n';
    out << "# expand_seconds," << format_double(f.expand_seconds) << '\n';
    out << "# fit_seconds," << format_double(f.fit_seconds) << '\n';
  }
  for (const auto& w : f.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << to_string(f.route) << " fit: " << f.rows << " rows, log10 lambda";
  for (double l : f.fit.log10_lambdas) std::cout << ' ' << format_double(l);
  std::cout << ", REML " << format_double(f.fit.reml.value) << "; outputs in " << a.out_dir << '\n';
  return 0;
}

struct SimArgs {
  std::string scenario = "f1", out, keep_surfaces, export_data, methods = "landmark_w,landmark_inf,poisson";
  std::optional<int> ku, ks;
  SimulationConfig cfg;
};

int cmd_simulate(SimArgs a) {
  a.cfg.gamma = gamma_name_from_string(a.scenario);
  a.cfg.k_u = a.ku.value_or(scenario_basis_dimension(a.cfg.gamma));
  a.cfg.k_s = a.ks.value_or(scenario_basis_dimension(a.cfg.gamma));
  a.cfg.methods.clear();
  for (auto m : split_fields(a.methods)) {
    const std::string_view t = trim(m);
    if (t == "landmark_w") a.cfg.methods.push_back(StudyMethod::landmark_window);
    else if (t == "landmark_inf") a.cfg.methods.push_back(StudyMethod::landmark_infinite);
    else if (t == "poisson") a.cfg.methods.push_back(StudyMethod::poisson);
    else throw ValidationError("--methods: unknown method '" + std::string(t) + "'");
  }
  a.cfg.keep_surfaces = !a.keep_surfaces.empty();
  a.cfg.validate();
  if (!a.export_data.empty()) {
    Rng rng(replication_seed(a.cfg.seed, 0));
    const PredictorDraw draw = gen_functional_predictors(a.cfg, rng);
    FunctionalDataset d;
    d.records = simulate_survival(draw.z_true, a.cfg.gamma, a.cfg, rng);
    d.z = draw.z_observed;
    auto out = open_out(a.export_data);
    write_functional_csv(out, d);
    auto g = open_out(a.export_data + ".grid");
    write_grid_sidecar(g, {d.z.grid, d.z.weights});
  }
  const StudyReport r = run_study(a.cfg);
  std::ostringstream body;
  body << "# tvflcm simulate " << timestamp() << '\n';
  write_study_report(body, r);
  if (a.out.empty()) {
    std::cout << body.str();
  } else {
    auto out = open_out(a.out);
    out << body.str();
  }
  if (a.cfg.keep_surfaces) {
    fs::create_directories(a.keep_surfaces);
    for (std::size_t mi = 0; mi < r.surfaces.size(); ++mi)
      for (std::size_t b = 0; b < r.surfaces[mi].size(); ++b) {
        auto out = open_out(fs::path(a.keep_surfaces) / ("surface_" + std::string(to_string(a.cfg.methods[mi])) +
                                                         "_" + std::to_string(b) + ".csv"));
        write_surface(out, r.surfaces[mi][b]);
      }
  }
  for (const auto& s : r.methods)
    std::cerr << to_string(s.method) << ": AMSE " << format_double(s.amse)
              << (s.coverage ? ", coverage " + format_double(*s.coverage) : std::string()) << ", " << s.failures
              << " failures\n";
  return 0;
}

struct PredictArgs {
  std::string model, data, out;
  double t_star = 0.0;
  int origin = 0;
};

int cmd_predict(const PredictArgs& a) {
  std::ifstream min(a.model);
  if (!min) throw ValidationError("cannot open model '" + a.model + "'");
  const RouteFit f = load_model(min);
  const FunctionalDataset d = read_functional_file(a.data, {f.grid, f.weights});
  std::ostringstream body;
  body << "id,t_star,direct,chained,difference,direct_covers\n";
  for (int i = 0; i < d.z.subjects(); ++i) {
    SubjectData sd;
    sd.x = d.records[i].x;
    sd.z.resize(static_cast<std::size_t>(d.z.grid_size()));
    for (int v = 0; v < d.z.grid_size(); ++v) sd.z[v] = d.z.values(i, v);
    const DynamicPrediction p = dynamic_predict(f, sd, a.t_star, a.origin);
    body << d.records[i].id << ',' << format_double(a.t_star) << ',' << format_double(p.direct) << ','
         << format_double(p.chained) << ',' << format_double(p.difference) << ',' << (p.direct_covers ? 1 : 0) << '\n';
  }
  if (a.out.empty()) {
    std::cout << body.str();
  } else {
    auto out = open_out(a.out);
    out << body.str();
  }
  return 0;
}

struct LandmarkArgs {
  std::string data, grid = "uniform:0", landmarks = "0", window = "inf", out, layout = "flat";
  bool print_example = false, center = false;
};

int cmd_landmark_build(const LandmarkArgs& a) {
  if (a.print_example) {
    const LandmarkExample ex = two_subject_example();
    write_table_layout(std::cout, build_landmark_dataset(ex.records, ex.z, ex.grid));
    return 0;
  }
  if (a.data.empty()) throw ValidationError("landmark-build: --data is required unless --print-example is given");
  const FunctionalDataset d = read_functional_file(a.data, resolve_grid(a.grid));
  StackedLandmarkData s = build_landmark_dataset(d.records, d.z, parse_landmarks(a.landmarks, a.window));
  if (a.center) s = center_by_landmark(std::move(s));
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
  std::ostringstream body;
  if (a.layout == "table") write_table_layout(body, s);
  else if (a.layout == "flat") write_stacked(body, s);
  else throw ValidationError("--layout must be flat or table");
  if (a.out.empty()) {
    std::cout << body.str();
  } else {
    auto out = open_out(a.out);
    out << body.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cox regression with a functional predictor whose effect changes over follow-up time"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a coefficient surface to a wide functional-data file");
  fit->add_option("--data", fa.data, "Input CSV (id,time,delta,<scalars>,z_0001..)")->required();
  fit->add_option("--grid", fa.grid, "uniform:J or a sidecar file of abscissae")->required();
  fit->add_option("--route", fa.route, "poisson or landmark")->capture_default_str();
  fit->add_option("--landmarks", fa.landmarks, "start:step:count or comma list")->capture_default_str();
  fit->add_option("--window", fa.window, "Window length (inf allowed), one or per landmark")->capture_default_str();
  fit->add_option("--ku", fa.k_u, "Basis size along u")->capture_default_str();
  fit->add_option("--ks", fa.k_s, "Basis size along t (1: constant in t)")->capture_default_str();
  fit->add_option("--k1", fa.k_1, "Basis size of scalar effects")->capture_default_str();
  fit->add_option("--u-family", fa.u_family, "cc, cr or bs")->capture_default_str();
  fit->add_option("--t-family", fa.t_family, "cr, cc or bs")->capture_default_str();
  fit->add_option("--time-margin", fa.time_margin, "spline, constant or indicator")->capture_default_str();
  fit->add_option("--constraint", fa.constraint, "none, predictor_sum_to_zero or time_margin_centering")
      ->capture_default_str();
  fit->add_option("--lambda", fa.lambda, "Fixed log10 smoothing parameters (comma list); REML when omitted");
  fit->add_option("--likelihood", fa.likelihood, "Poisson route likelihood: poisson or cox")->capture_default_str();
  fit->add_option("--surface-intervals", fa.surface_intervals, "Surface grid intervals per axis")
      ->capture_default_str();
  fit->add_flag("--no-center", fa.no_center, "Do not centre the predictor within risk sets / landmarks");
  fit->add_flag("--separate", fa.separate, "Landmark route: independent per-landmark fits");
  fit->add_option("--out-dir", fa.out_dir, "Output directory")->capture_default_str();

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a replication study");
  sim->add_option("--scenario", sa.scenario, "f1, f2, f3, f4 or zero")->capture_default_str();
  sim->add_option("--n", sa.cfg.n, "Subjects")->capture_default_str();
  sim->add_option("--j", sa.cfg.j, "Functional grid size")->capture_default_str();
  sim->add_option("--nt", sa.cfg.n_t, "Survival grid intervals")->capture_default_str();
  sim->add_option("--reps", sa.cfg.reps, "Replications")->capture_default_str();
  sim->add_option("--seed", sa.cfg.seed, "Master seed")->capture_default_str();
  sim->add_option("--window", sa.cfg.window, "Finite landmark window")->capture_default_str();
  sim->add_option("--landmark-step", sa.cfg.landmark_step, "Landmark spacing")->capture_default_str();
  sim->add_option("--landmarks", sa.cfg.landmarks, "Number of landmarks")->capture_default_str();
  sim->add_option("--ku", sa.ku, "Basis size along u (default 15 for f3, else 5)");
  sim->add_option("--ks", sa.ks, "Basis size along t (default 15 for f3, else 5)");
  sim->add_option("--baseline-hazard", sa.cfg.baseline_hazard, "Constant baseline hazard")->capture_default_str();
  sim->add_option("--methods", sa.methods, "Comma list of landmark_w, landmark_inf, poisson")->capture_default_str();
  sim->add_option("--threads", sa.cfg.threads, "Worker threads (0: all cores)")->capture_default_str();
  sim->add_option("--out", sa.out, "Report path (stdout when omitted)");
  sim->add_option("--keep-surfaces", sa.keep_surfaces, "Directory for one surface file per method and replication");
  sim->add_option("--export-data", sa.export_data, "Write replication 0 as a wide CSV (+ .grid sidecar)");

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Dynamic survival prediction from a saved model");
  pred->add_option("--model", pa.model, "model.json written by fit")->required();
  pred->add_option("--data", pa.data, "Subjects in the fit input format (time and delta ignored)")->required();
  pred->add_option("--t-star", pa.t_star, "Prediction horizon")->required();
  pred->add_option("--origin", pa.origin, "Index of the conditioning landmark")->capture_default_str();
  pred->add_option("--out", pa.out, "Output CSV (stdout when omitted)");

  LandmarkArgs la;
  auto* lm = app.add_subcommand("landmark-build", "Build the stacked landmark dataset");
  lm->add_flag("--print-example", la.print_example, "Print the two-subject illustration in table layout");
  lm->add_option("--data", la.data, "Input CSV");
  lm->add_option("--grid", la.grid, "uniform:J or a sidecar file")->capture_default_str();
  lm->add_option("--landmarks", la.landmarks, "start:step:count or comma list")->capture_default_str();
  lm->add_option("--window", la.window, "Window length(s)")->capture_default_str();
  lm->add_flag("--center", la.center, "Centre Z within each landmark");
  lm->add_option("--layout", la.layout, "flat or table")->capture_default_str();
  lm->add_option("--out", la.out, "Output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (*fit) return cmd_fit(fa);
    if (*sim) return cmd_simulate(sa);
    if (*pred) return cmd_predict(pa);
    if (*lm) return cmd_landmark_build(la);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
