// Fixed-support barycenter solvers sharing one sweep structure:
//
//   ibp        a_k <- alpha_k / K b_k;  alpha <- prod_k (K^T a_k)^{w_k};
//              b_k <- alpha / K^T a_k                       (2K applies/sweep)
//   debiased   same sweep with alpha <- d . prod_k (K^T a_k)^{w_k} and the
//              trailing update d <- sqrt(d . alpha / K d), plus the debiasing
//              residual || d . K d - alpha ||_1 as a convergence diagnostic
//              (2K+2 applies/sweep)
//   product    outer minimization-majorization loop: the concave -eps KL(alpha|U)
//              term of the product-reference objective is linearized at the
//              outer iterate alpha_t, which turns the inner alpha update into
//              alpha <- N[ alpha_t . prod_k (K^T a_k)^{w_k} ] with N the
//              normalization to unit mass   (2K applies/inner sweep)
//
// Sweeps stop when the max relative change of alpha between sweeps drops
// below tol. Iterates stay unnormalized (ibp/debiased) until return. Inputs
// with w_k = 0 are skipped exactly.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <otbary/kernel.hpp>
#include <otbary/measure.hpp>

namespace otbary {

enum class BarycenterMethod { ibp, debiased, product };

inline const char* to_string(BarycenterMethod m) {
  switch (m) {
    case BarycenterMethod::ibp: return "ibp";
    case BarycenterMethod::debiased: return "debiased";
    case BarycenterMethod::product: return "product";
  }
  return "?";
}

inline BarycenterMethod barycenter_method_from_string(const std::string& s) {
  if (s == "ibp") return BarycenterMethod::ibp;
  if (s == "debiased") return BarycenterMethod::debiased;
  if (s == "product") return BarycenterMethod::product;
  throw std::invalid_argument("unknown barycenter method: " + s);
}

struct BarycenterProblem {
  std::vector<DiscreteMeasure> measures;  // all on the kernel's grid, > 0
  std::vector<double> weights;            // nonnegative, sum to 1
  const KernelOperator* kernel = nullptr;
  double tol = 1e-5;       // max relative change of alpha between sweeps
  int max_iter = 5000;     // sweep budget (total inner sweeps for product)
  int outer_iterations = 30;  // product only
  double inner_tol = -1.0;    // product only; < 0 means tol
  bool record_history = false;
  // Called after every sweep with the raw (unnormalized) iterate.
  std::function<void(int, std::span<const double>)> on_sweep;
};

struct BarycenterResult {
  DiscreteMeasure barycenter;  // normalized at return
  int iterations = 0;
  double final_change = std::numeric_limits<double>::infinity();
  bool converged = false;
  double wall_ms = 0.0;
  std::uint64_t kernel_applies = 0;
  double mass_before_normalization = 0.0;
  double debias_residual = 0.0;  // debiased only
  int outer_iterations = 0;      // product only
  bool collapse_detected = false;  // product only: variance at grid-cell scale
  std::vector<double> history;   // per-sweep change when recorded
};

// Sinkhorn scalings carried across runs (warm starts in weight sweeps).
struct ScalingState {
  std::vector<std::vector<double>> b;  // one per input
  std::vector<double> d;               // debiasing vector
  std::vector<double> outer_alpha;     // product only: current MM linearization point
};

namespace detail {

inline void validate_problem(const BarycenterProblem& p) {
  if (p.kernel == nullptr) throw std::invalid_argument("barycenter: kernel is required");
  const std::size_t K = p.measures.size();
  if (K < 1 || p.weights.size() != K)
    throw std::invalid_argument("barycenter: need K >= 1 measures with matching weights");
  double wsum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (p.measures[k].grid != p.kernel->grid())
      throw std::invalid_argument("barycenter: measure grid does not match kernel grid");
    require_interior(p.measures[k]);
    if (p.weights[k] < 0.0) throw std::invalid_argument("barycenter: weights must be >= 0");
    wsum += p.weights[k];
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("barycenter: weights must sum to 1");
  if (!(p.tol > 0.0)) throw std::invalid_argument("barycenter: tol must be > 0");
  if (p.max_iter < 1) throw std::invalid_argument("barycenter: max_iter must be >= 1");
}

inline double relative_change(const std::vector<double>& cur, const std::vector<double>& prev) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    diff = std::max(diff, std::abs(cur[i] - prev[i]));
    scale = std::max(scale, std::abs(cur[i]));
  }
  return diff / scale;
}

inline void check_finite_iterate(const std::vector<double>& v, int sweep) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error("scaling blow-up in barycenter sweep " + std::to_string(sweep));
}

struct SweepDriver {
  const BarycenterProblem& p;
  const KernelOperator& K;
  std::size_t n;
  std::vector<std::size_t> active;  // inputs with w_k > 0
  ScalingState& state;

  std::vector<std::vector<double>> a, Ka;
  std::vector<double> alpha, alpha_prev, log_acc, Kd;

  SweepDriver(const BarycenterProblem& prob, ScalingState& st)
      : p(prob), K(*prob.kernel), n(prob.kernel->grid().size()), state(st) {
    for (std::size_t k = 0; k < p.measures.size(); ++k)
      if (p.weights[k] > 0.0) active.push_back(k);
    if (state.b.size() != p.measures.size()) {
      state.b.assign(p.measures.size(), std::vector<double>(n, 1.0));
      state.d.assign(n, 1.0);
    }
    a.assign(p.measures.size(), std::vector<double>(n));
    Ka.assign(p.measures.size(), std::vector<double>(n));
    alpha.assign(n, 0.0);
    log_acc.assign(n, 0.0);
    Kd.assign(n, 0.0);
  }

  // One sweep in listing order; multiplier scales the geometric mean
  // elementwise (the debiasing vector d, or the MM linearization point).
  void sweep(const std::vector<double>* multiplier, bool normalize, int sweep_no) {
    for (std::size_t k : active) {
      K.apply(state.b[k], a[k]);
      for (std::size_t i = 0; i < n; ++i) a[k][i] = p.measures[k].weights[i] / a[k][i];
    }
    for (std::size_t k : active) K.apply_transpose(a[k], Ka[k]);
    if (multiplier != nullptr)
      for (std::size_t i = 0; i < n; ++i) log_acc[i] = std::log((*multiplier)[i]);
    else
      std::fill(log_acc.begin(), log_acc.end(), 0.0);
    for (std::size_t k : active) {
      const double w = p.weights[k];
      for (std::size_t i = 0; i < n; ++i) log_acc[i] += w * std::log(Ka[k][i]);
    }
    alpha.swap(alpha_prev);
    alpha.resize(n);
    for (std::size_t i = 0; i < n; ++i) alpha[i] = std::exp(log_acc[i]);
    if (normalize) {
      double total = 0.0;
      for (double x : alpha) total += x;
      for (double& x : alpha) x /= total;
    }
    check_finite_iterate(alpha, sweep_no);
    for (std::size_t k : active)
      for (std::size_t i = 0; i < n; ++i) state.b[k][i] = alpha[i] / Ka[k][i];
  }

  // d <- sqrt(d . alpha / K d) with the stale d on both sides, then the
  // fixed-point residual of the fresh d against the current iterate.
  double debias_update(int sweep_no) {
    K.apply(state.d, Kd);
    for (std::size_t i = 0; i < n; ++i)
      state.d[i] = std::sqrt(state.d[i] * alpha[i] / Kd[i]);
    check_finite_iterate(state.d, sweep_no);
    K.apply(state.d, Kd);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += std::abs(state.d[i] * Kd[i] - alpha[i]);
    return res;
  }
};

inline BarycenterResult finish(const BarycenterProblem& p, std::vector<double> alpha,
                               BarycenterResult r,
                               std::chrono::steady_clock::time_point t0,
                               std::uint64_t applies0) {
  r.kernel_applies = p.kernel->apply_count() - applies0;
  for (double x : alpha) r.mass_before_normalization += x;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
  r.barycenter = make_measure(p.kernel->grid(), std::move(alpha));
  return r;
}

inline BarycenterResult run_scaling_barycenter(const BarycenterProblem& p,
                                               BarycenterMethod method,
                                               ScalingState& state) {
  validate_problem(p);
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t applies0 = p.kernel->apply_count();
  SweepDriver drv(p, state);
  BarycenterResult r;
  for (int sweep = 1; sweep <= p.max_iter; ++sweep) {
    drv.sweep(method == BarycenterMethod::debiased ? &state.d : nullptr, false, sweep);
    if (method == BarycenterMethod::debiased) r.debias_residual = drv.debias_update(sweep);
    r.iterations = sweep;
    const double change = sweep == 1 ? std::numeric_limits<double>::infinity()
                                     : relative_change(drv.alpha, drv.alpha_prev);
    r.final_change = change;
    if (p.record_history) r.history.push_back(change);
    if (p.on_sweep) p.on_sweep(sweep, std::span<const double>(drv.alpha));
    if (change <= p.tol) {
      r.converged = true;
      break;
    }
  }
  return finish(p, std::move(drv.alpha), std::move(r), t0, applies0);
}

inline BarycenterResult product_barycenter(const BarycenterProblem& p, ScalingState& state) {
  validate_problem(p);
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t applies0 = p.kernel->apply_count();
  const double inner_tol = p.inner_tol > 0.0 ? p.inner_tol : p.tol;
  SweepDriver drv(p, state);
  const std::size_t n = drv.n;
  if (state.outer_alpha.size() != n)
    state.outer_alpha.assign(n, 1.0 / static_cast<double>(n));
  BarycenterResult r;
  int total_sweeps = 0;
  for (int outer = 1; outer <= p.outer_iterations; ++outer) {
    r.outer_iterations = outer;
    int inner = 0;
    while (total_sweeps < p.max_iter) {
      ++inner;
      ++total_sweeps;
      drv.sweep(&state.outer_alpha, true, total_sweeps);
      r.iterations = total_sweeps;
      const double change = inner == 1 ? std::numeric_limits<double>::infinity()
                                       : relative_change(drv.alpha, drv.alpha_prev);
      if (p.record_history) r.history.push_back(change);
      if (p.on_sweep) p.on_sweep(total_sweeps, std::span<const double>(drv.alpha));
      if (change <= inner_tol) break;
    }
    const double outer_change = relative_change(drv.alpha, state.outer_alpha);
    r.final_change = outer_change;
    state.outer_alpha = drv.alpha;
    if (outer_change <= p.tol) {
      r.converged = true;
      break;
    }
    if (total_sweeps >= p.max_iter) break;
  }
  r = finish(p, std::move(drv.alpha), std::move(r), t0, applies0);
  const Moments m = moments(r.barycenter);
  r.collapse_detected = true;
  for (std::size_t a = 0; a < r.barycenter.grid.ndim(); ++a) {
    const double cell_var = r.barycenter.grid.spacing(a) * r.barycenter.grid.spacing(a) / 12.0;
    if (m.variance[a] >= 4.0 * cell_var) r.collapse_detected = false;
  }
  return r;
}

}  // namespace detail

inline BarycenterResult ibp_barycenter(const BarycenterProblem& p) {
  ScalingState state;
  return detail::run_scaling_barycenter(p, BarycenterMethod::ibp, state);
}

inline BarycenterResult debiased_barycenter(const BarycenterProblem& p) {
  ScalingState state;
  return detail::run_scaling_barycenter(p, BarycenterMethod::debiased, state);
}

inline BarycenterResult product_barycenter(const BarycenterProblem& p) {
  ScalingState state;
  return detail::product_barycenter(p, state);
}

// One run per weight pair (w, 1-w), warm-starting the scalings (and the MM
// linearization point for the product method) from the previous weight.
inline std::vector<BarycenterResult> weighted_interpolation(
    const BarycenterProblem& p, const std::vector<std::pair<double, double>>& weight_path,
    BarycenterMethod method = BarycenterMethod::debiased) {
  if (p.measures.size() != 2)
    throw std::invalid_argument("weighted_interpolation: exactly 2 inputs required");
  std::vector<BarycenterResult> results;
  results.reserve(weight_path.size());
  ScalingState state;
  BarycenterProblem q = p;
  for (const auto& [w0, w1] : weight_path) {
    q.weights = {w0, w1};
    if (method == BarycenterMethod::product)
      results.push_back(detail::product_barycenter(q, state));
    else
      results.push_back(detail::run_scaling_barycenter(q, method, state));
  }
  return results;
}

}  // namespace otbary
