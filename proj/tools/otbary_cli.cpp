// Command-line front end: barycenter runs, closed-form Gaussian queries,
// convergence benchmarks, test-data generation, divergence reports and
// barycentric-coordinate fits. Structured options arrive as JSON configs;
// reports are JSON with a schema_version field. Exit codes: 0 success,
// 1 config/IO/numeric error, 2 iteration budget exhausted (result written).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <otbary/otbary.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace otbary;

namespace {

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;
  return j;
}

// Strict schema check: every required key present, nothing outside
// required + optional accepted.
void check_keys(const json& j, const std::vector<std::string>& required,
                const std::vector<std::string>& optional) {
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
  for (const std::string& k : required)
    if (!j.contains(k)) throw std::runtime_error("config: missing key '" + k + "'");
  std::set<std::string> allowed(required.begin(), required.end());
  allowed.insert(optional.begin(), optional.end());
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw std::runtime_error("config: unknown key '" + item.key() + "'");
}

UniformGrid grid_from_config(const json& j) {
  if (j.contains("grid") == j.contains("grid_json"))
    throw std::runtime_error("config: exactly one of 'grid' or 'grid_json' required");
  if (j.contains("grid")) return UniformGrid::from_json(j.at("grid"));
  return load_grid(j.at("grid_json").get<std::string>());
}

KernelOperator kernel_from_config(const json& j, const UniformGrid& grid, double epsilon) {
  const std::string backend = j.value("kernel", "separable");
  if (backend == "separable") return KernelOperator::separable(grid, epsilon);
  if (backend == "dense") return KernelOperator::dense(grid, epsilon);
  throw std::runtime_error("config: kernel must be 'separable' or 'dense'");
}

void write_json(const json& j, const std::string& path) {
  if (path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

double entropy(const std::vector<double>& w) {
  double h = 0.0;
  for (double x : w)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

json moments_block(const DiscreteMeasure& m) {
  const Moments mo = moments(m);
  return json{{"mean", mo.mean}, {"variance", mo.variance}, {"entropy", entropy(m.weights)}};
}

DivergenceKind kind_for_method(BarycenterMethod m) {
  switch (m) {
    case BarycenterMethod::ibp: return DivergenceKind::lebesgue;
    case BarycenterMethod::debiased: return DivergenceKind::debiased;
    case BarycenterMethod::product: return DivergenceKind::product;
  }
  throw std::runtime_error("bad method");
}

int cmd_barycenter(const json& cfg, bool verbose) {
  check_keys(cfg,
             {"method", "epsilon", "inputs", "weights", "output_csv", "report_json"},
             {"grid", "grid_json", "tol", "max_iter", "outer_iterations", "inner_tol",
              "kernel", "support_floor", "oracle"});
  const UniformGrid grid = grid_from_config(cfg);
  const double epsilon = cfg.at("epsilon").get<double>();
  const BarycenterMethod method =
      barycenter_method_from_string(cfg.at("method").get<std::string>());
  const KernelOperator K = kernel_from_config(cfg, grid, epsilon);

  BarycenterProblem p;
  const double floor = cfg.value("support_floor", 1e-10);
  for (const auto& path : cfg.at("inputs"))
    p.measures.push_back(load_measure(path.get<std::string>(), grid, floor));
  p.weights = cfg.at("weights").get<std::vector<double>>();
  p.kernel = &K;
  p.tol = cfg.value("tol", 1e-5);
  p.max_iter = cfg.value("max_iter", 5000);
  p.outer_iterations = cfg.value("outer_iterations", 30);
  p.inner_tol = cfg.value("inner_tol", -1.0);

  BarycenterResult r;
  switch (method) {
    case BarycenterMethod::ibp: r = ibp_barycenter(p); break;
    case BarycenterMethod::debiased: r = debiased_barycenter(p); break;
    case BarycenterMethod::product: r = product_barycenter(p); break;
  }
  save_measure(r.barycenter, cfg.at("output_csv").get<std::string>());

  json report{{"schema_version", 1},
              {"method", to_string(method)},
              {"epsilon", epsilon},
              {"iterations", r.iterations},
              {"final_change", r.final_change},
              {"converged", r.converged},
              {"wall_ms", r.wall_ms},
              {"kernel_applies", r.kernel_applies},
              {"per_sweep_kernel_applies",
               r.iterations > 0 ? static_cast<double>(r.kernel_applies) / r.iterations : 0.0},
              {"moments", moments_block(r.barycenter)}};
  if (method == BarycenterMethod::debiased) report["debias_residual"] = r.debias_residual;
  if (method == BarycenterMethod::product) {
    report["outer_iterations"] = r.outer_iterations;
    report["collapse_detected"] = r.collapse_detected;
  }
  if (cfg.contains("oracle")) {
    const json& oc = cfg.at("oracle");
    check_keys(oc, {"mus", "sigma2s"}, {});
    GaussianBarycenterSpec spec;
    spec.mus = oc.at("mus").get<std::vector<double>>();
    spec.sigma2s = oc.at("sigma2s").get<std::vector<double>>();
    spec.weights = p.weights;
    spec.epsilon = epsilon;
    spec.kind = kind_for_method(method);
    const OracleResult expect = solve_variance(spec);
    const Moments got = moments(r.barycenter);
    json ob{{"expected_mean", expect.mean},
            {"expected_variance", expect.variance},
            {"is_dirac", expect.is_dirac},
            {"observed_mean", got.mean[0]},
            {"observed_variance", got.variance[0]}};
    if (!expect.is_dirac && expect.variance > 0.0)
      ob["relative_error"] = std::abs(got.variance[0] - expect.variance) / expect.variance;
    report["oracle"] = ob;
  }
  write_json(report, cfg.at("report_json").get<std::string>());
  if (verbose)
    std::cerr << "barycenter: " << r.iterations << " sweeps, change " << r.final_change
              << (r.converged ? "" : " (budget exhausted)") << '\n';
  return r.converged ? 0 : 2;
}

int cmd_oracle(const json& cfg) {
  check_keys(cfg, {"kind", "mus", "sigma2s", "weights", "epsilon"}, {"output_json"});
  GaussianBarycenterSpec spec;
  spec.kind = divergence_kind_from_string(cfg.at("kind").get<std::string>());
  spec.mus = cfg.at("mus").get<std::vector<double>>();
  spec.sigma2s = cfg.at("sigma2s").get<std::vector<double>>();
  spec.weights = cfg.at("weights").get<std::vector<double>>();
  spec.epsilon = cfg.at("epsilon").get<double>();
  const OracleResult r = solve_variance(spec);
  write_json(json{{"schema_version", 1},
                  {"kind", to_string(spec.kind)},
                  {"mean", r.mean},
                  {"variance", r.variance},
                  {"is_dirac", r.is_dirac},
                  {"bracket", {r.bracket_lo, r.bracket_hi}},
                  {"residual", r.residual}},
             cfg.value("output_json", "-"));
  return 0;
}

int cmd_bench_convergence(const json& cfg) {
  check_keys(cfg, {"mus", "sigma2s", "weights", "epsilon", "sweeps", "output_csv"},
             {"grid", "grid_json", "kernel", "report_json"});
  const UniformGrid grid = grid_from_config(cfg);
  if (grid.ndim() != 1) throw std::runtime_error("bench-convergence: 1D grid required");
  const double epsilon = cfg.at("epsilon").get<double>();
  const auto mus = cfg.at("mus").get<std::vector<double>>();
  const auto sigma2s = cfg.at("sigma2s").get<std::vector<double>>();
  const auto weights = cfg.at("weights").get<std::vector<double>>();
  const int sweeps = cfg.at("sweeps").get<int>();
  if (sweeps < 0) throw std::runtime_error("bench-convergence: sweeps must be >= 0");
  const KernelOperator K = kernel_from_config(cfg, grid, epsilon);

  BarycenterProblem p;
  for (std::size_t k = 0; k < mus.size(); ++k)
    p.measures.push_back(discretize_gaussian(grid, {mus[k]}, {sigma2s[k]}));
  p.weights = weights;
  p.kernel = &K;
  p.tol = 1e-300;  // run the full sweep budget; the curve is the product
  p.max_iter = sweeps;

  struct Curve {
    std::vector<double> err, ms;
    std::uint64_t applies = 0;
  };
  auto run = [&](BarycenterMethod method, DivergenceKind kind) {
    Curve c;
    if (sweeps == 0) return c;
    GaussianBarycenterSpec spec{mus, sigma2s, weights, epsilon, kind};
    const DiscreteMeasure target = oracle_measure(spec, grid);
    auto last = std::chrono::steady_clock::now();
    BarycenterProblem q = p;
    q.on_sweep = [&](int, std::span<const double> alpha) {
      const auto now = std::chrono::steady_clock::now();
      c.ms.push_back(std::chrono::duration<double, std::milli>(now - last).count());
      last = now;
      double total = 0.0;
      for (double x : alpha) total += x;
      double err = 0.0;
      for (std::size_t i = 0; i < alpha.size(); ++i)
        err += std::abs(alpha[i] / total - target.weights[i]);
      c.err.push_back(err);
    };
    const BarycenterResult r = method == BarycenterMethod::ibp ? ibp_barycenter(q)
                                                               : debiased_barycenter(q);
    c.applies = r.kernel_applies;
    return c;
  };
  const Curve ibp = run(BarycenterMethod::ibp, DivergenceKind::lebesgue);
  const Curve deb = run(BarycenterMethod::debiased, DivergenceKind::debiased);

  std::ofstream out(cfg.at("output_csv").get<std::string>());
  if (!out) throw std::runtime_error("cannot open for writing bench csv");
  out << "sweep,err_ibp,err_debiased,ms_ibp,ms_debiased\n";
  char buf[128];
  for (int s = 0; s < sweeps; ++s) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.6f,%.6f\n", s + 1, ibp.err[s],
                  deb.err[s], ibp.ms[s], deb.ms[s]);
    out << buf;
  }
  if (cfg.contains("report_json")) {
    auto total = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s;
    };
    write_json(
        json{{"schema_version", 1},
             {"epsilon", epsilon},
             {"sweeps", sweeps},
             {"ibp",
              {{"kernel_applies", ibp.applies},
               {"per_sweep_kernel_applies",
                sweeps > 0 ? static_cast<double>(ibp.applies) / sweeps : 0.0},
               {"final_err", sweeps > 0 ? ibp.err.back() : 0.0},
               {"total_ms", total(ibp.ms)}}},
             {"debiased",
              {{"kernel_applies", deb.applies},
               {"per_sweep_kernel_applies",
                sweeps > 0 ? static_cast<double>(deb.applies) / sweeps : 0.0},
               {"final_err", sweeps > 0 ? deb.err.back() : 0.0},
               {"total_ms", total(deb.ms)}}}},
        cfg.at("report_json").get<std::string>());
  }
  return 0;
}

int cmd_gen_ellipses(const json& cfg, long seed_override) {
  check_keys(cfg, {"count", "image_side", "seed", "output_dir"}, {});
  const std::size_t count = cfg.at("count").get<std::size_t>();
  const std::size_t side = cfg.at("image_side").get<std::size_t>();
  const std::uint32_t seed = seed_override >= 0 ? static_cast<std::uint32_t>(seed_override)
                                                : cfg.at("seed").get<std::uint32_t>();
  const fs::path dir = cfg.at("output_dir").get<std::string>();
  fs::create_directories(dir);
  const std::vector<DiscreteMeasure> measures = generate_nested_ellipses(count, side, seed);
  save_grid(measures.front().grid, (dir / "grid.json").string());
  char name[32];
  for (std::size_t i = 0; i < measures.size(); ++i) {
    std::snprintf(name, sizeof(name), "measure_%03zu.csv", i);
    save_measure(measures[i], (dir / name).string());
  }
  return 0;
}

int cmd_embed(const json& cfg) {
  check_keys(cfg, {"dictionary_dir", "target_csv", "epsilon", "unroll_length", "output_json"},
             {"method", "steps", "learning_rate", "gtol", "kernel", "target_grid_json",
              "support_floor"});
  const fs::path dir = cfg.at("dictionary_dir").get<std::string>();
  const UniformGrid grid = load_grid((dir / "grid.json").string());
  if (cfg.contains("target_grid_json")) {
    const UniformGrid tgrid = load_grid(cfg.at("target_grid_json").get<std::string>());
    if (tgrid != grid) throw std::runtime_error("embed: target grid does not match dictionary");
  }
  const double floor = cfg.value("support_floor", 1e-10);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("measure_", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) throw std::runtime_error("embed: dictionary needs >= 2 measures");

  const double epsilon = cfg.at("epsilon").get<double>();
  const KernelOperator K = kernel_from_config(cfg, grid, epsilon);
  Dictionary dict;
  for (const std::string& f : files) dict.atoms.push_back(load_measure(f, grid, floor));
  dict.kernel = &K;
  dict.unroll_length = cfg.at("unroll_length").get<int>();

  const DiscreteMeasure target =
      load_measure(cfg.at("target_csv").get<std::string>(), grid, floor);
  FitOptions opts;
  opts.steps = cfg.value("steps", 300);
  opts.learning_rate = cfg.value("learning_rate", 0.1);
  opts.gtol = cfg.value("gtol", 1e-10);
  const BarycenterMethod method =
      barycenter_method_from_string(cfg.value("method", "debiased"));
  const EmbeddingFit fit = fit_coordinates(dict, target, opts, method);
  write_json(json{{"schema_version", 1},
                  {"w", fit.w},
                  {"loss", fit.loss},
                  {"iterations", fit.iterations},
                  {"grad_norm", fit.grad_norm},
                  {"method", to_string(method)},
                  {"epsilon", epsilon},
                  {"unroll_length", dict.unroll_length},
                  {"kernel_applies", K.apply_count()}},
             cfg.at("output_json").get<std::string>());
  return 0;
}

int cmd_divergence(const json& cfg) {
  check_keys(cfg, {"alpha_csv", "beta_csv", "epsilon"},
             {"grid", "grid_json", "tol", "max_iter", "kernel", "output_json",
              "support_floor"});
  const UniformGrid grid = grid_from_config(cfg);
  const double epsilon = cfg.at("epsilon").get<double>();
  const double floor = cfg.value("support_floor", 1e-10);
  const KernelOperator K = kernel_from_config(cfg, grid, epsilon);
  const DiscreteMeasure alpha = load_measure(cfg.at("alpha_csv").get<std::string>(), grid, floor);
  const DiscreteMeasure beta = load_measure(cfg.at("beta_csv").get<std::string>(), grid, floor);
  const double tol = cfg.value("tol", 1e-9);
  const int max_iter = cfg.value("max_iter", 100000);
  const auto t0 = std::chrono::steady_clock::now();
  const DivergenceValue v = sinkhorn_divergence(alpha, beta, K, tol, max_iter);
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_json(json{{"schema_version", 1},
                  {"epsilon", epsilon},
                  {"ot_ab", v.ot_ab},
                  {"ot_aa", v.ot_aa},
                  {"ot_bb", v.ot_bb},
                  {"sdiv", v.sdiv},
                  {"kernel_applies", K.apply_count()},
                  {"wall_ms", wall_ms}},
             cfg.value("output_json", "-"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropic optimal-transport barycenters on fixed grids"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("--verbose", verbose, "log progress to stderr");

  std::string config_path;
  long seed_override = -1;

  auto add = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "JSON config file")->required();
    return sub;
  };
  CLI::App* sub_bary = add("barycenter", "compute a fixed-support barycenter");
  CLI::App* sub_oracle = add("oracle", "closed-form Gaussian barycenter query");
  CLI::App* sub_bench = add("bench-convergence", "per-sweep error against the closed form");
  CLI::App* sub_gen = add("gen-ellipses", "generate nested-ellipse test measures");
  sub_gen->add_option("--seed", seed_override, "override the config seed");
  CLI::App* sub_embed = add("embed", "fit barycentric coordinates to a target");
  CLI::App* sub_div = add("divergence", "pairwise Sinkhorn divergence report");

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = load_config(config_path);
    if (sub_bary->parsed()) return cmd_barycenter(cfg, verbose);
    if (sub_oracle->parsed()) return cmd_oracle(cfg);
    if (sub_bench->parsed()) return cmd_bench_convergence(cfg);
    if (sub_gen->parsed()) return cmd_gen_ellipses(cfg, seed_override);
    if (sub_embed->parsed()) return cmd_embed(cfg);
    if (sub_div->parsed()) return cmd_divergence(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
