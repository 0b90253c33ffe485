// Closed-form barycenters of univariate Gaussians under the three entropic
// divergences. With eps = 2 eps'^2, the barycenter of N(mu_k, sigma_k^2) with
// weights w_k is N(mean, S2) where mean = sum w_k mu_k and S2 solves
//
//   sum_k w_k sqrt(eps'^4 + 4 sigma_k^2 S2) = RHS(S2),
//
//   RHS = 2 S2 - eps'^2          uniform/Lebesgue reference (blur),
//   RHS = 2 S2 + eps'^2          product reference (shrink); Dirac at the
//                                weighted mean once eps'^2 >= sum w_k sigma_k^2,
//   RHS = sqrt(eps'^4 + 4 S2^2)  Sinkhorn divergence (debiased).
//
// Roots are isolated by bisection inside brackets the equations guarantee.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <otbary/measure.hpp>

namespace otbary {

enum class DivergenceKind { lebesgue, product, debiased };

inline const char* to_string(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::lebesgue: return "lebesgue";
    case DivergenceKind::product: return "product";
    case DivergenceKind::debiased: return "debiased";
  }
  return "?";
}

inline DivergenceKind divergence_kind_from_string(const std::string& s) {
  if (s == "lebesgue") return DivergenceKind::lebesgue;
  if (s == "product") return DivergenceKind::product;
  if (s == "debiased") return DivergenceKind::debiased;
  throw std::invalid_argument("unknown divergence kind: " + s);
}

struct GaussianBarycenterSpec {
  std::vector<double> mus;
  std::vector<double> sigma2s;   // > 0
  std::vector<double> weights;   // nonnegative, sum to 1
  double epsilon = 0.0;          // > 0; eps'^2 = epsilon / 2
  DivergenceKind kind = DivergenceKind::debiased;
};

struct OracleResult {
  double mean = 0.0;
  double variance = 0.0;
  bool is_dirac = false;
  double bracket_lo = 0.0, bracket_hi = 0.0;
  double residual = 0.0;         // variance equation evaluated at the root
};

// f(S2) = sum w_k sqrt(eps'^4 + 4 sigma_k^2 S2) - RHS(kind, S2).
inline double variance_equation(DivergenceKind kind, double S2,
                                const std::vector<double>& sigma2s,
                                const std::vector<double>& weights, double eps_prime2) {
  const double e4 = eps_prime2 * eps_prime2;
  double lhs = 0.0;
  for (std::size_t k = 0; k < sigma2s.size(); ++k)
    lhs += weights[k] * std::sqrt(e4 + 4.0 * sigma2s[k] * S2);
  double rhs = 0.0;
  switch (kind) {
    case DivergenceKind::lebesgue: rhs = 2.0 * S2 - eps_prime2; break;
    case DivergenceKind::product: rhs = 2.0 * S2 + eps_prime2; break;
    case DivergenceKind::debiased: rhs = std::sqrt(e4 + 4.0 * S2 * S2); break;
  }
  return lhs - rhs;
}

namespace detail {

inline void validate(const GaussianBarycenterSpec& spec) {
  const std::size_t K = spec.mus.size();
  if (K < 1 || spec.sigma2s.size() != K || spec.weights.size() != K)
    throw std::invalid_argument("gaussian spec: mus/sigma2s/weights length mismatch");
  if (!(spec.epsilon > 0.0)) throw std::invalid_argument("gaussian spec: epsilon must be > 0");
  double wsum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!(spec.sigma2s[k] > 0.0))
      throw std::invalid_argument("gaussian spec: sigma2 must be > 0");
    if (spec.weights[k] < 0.0)
      throw std::invalid_argument("gaussian spec: weights must be >= 0");
    wsum += spec.weights[k];
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("gaussian spec: weights must sum to 1");
}

}  // namespace detail

inline OracleResult solve_variance(const GaussianBarycenterSpec& spec) {
  detail::validate(spec);
  const double e2 = 0.5 * spec.epsilon;
  OracleResult out;
  double sigma_bar2 = 0.0;
  for (std::size_t k = 0; k < spec.mus.size(); ++k) {
    out.mean += spec.weights[k] * spec.mus[k];
    sigma_bar2 += spec.weights[k] * spec.sigma2s[k];
  }

  if (spec.kind == DivergenceKind::product && e2 >= sigma_bar2) {
    out.is_dirac = true;
    out.variance = 0.0;
    return out;
  }

  const auto f = [&](double S2) {
    return variance_equation(spec.kind, S2, spec.sigma2s, spec.weights, e2);
  };

  double lo = 0.0, hi = 0.0;
  switch (spec.kind) {
    case DivergenceKind::lebesgue: {
      // f(0) = 2 eps'^2 > 0; expand the upper edge until the sign flips.
      lo = 0.0;
      hi = sigma_bar2 + 2.0 * e2 + 1.0;
      int guard = 0;
      while (f(hi) > 0.0) {
        hi *= 2.0;
        if (++guard > 200)
          throw std::runtime_error("solve_variance: no sign change for lebesgue bracket");
      }
      break;
    }
    case DivergenceKind::product: {
      // S2 = 0 is a spurious root; start just past it where f > 0.
      lo = 1e-8 * sigma_bar2;
      if (!(f(lo) > 0.0)) {
        lo = 1e-12 * sigma_bar2;
        if (!(f(lo) > 0.0))
          throw std::runtime_error("solve_variance: product bracket failed past the zero root");
      }
      hi = sigma_bar2;
      int guard = 0;
      while (f(hi) > 0.0) {
        hi *= 2.0;
        if (++guard > 200)
          throw std::runtime_error("solve_variance: no sign change for product bracket");
      }
      break;
    }
    case DivergenceKind::debiased: {
      lo = *std::min_element(spec.sigma2s.begin(), spec.sigma2s.end());
      hi = *std::max_element(spec.sigma2s.begin(), spec.sigma2s.end());
      if (lo == hi) {
        out.variance = lo;  // equal variances solve the equation exactly
        out.bracket_lo = lo;
        out.bracket_hi = hi;
        out.residual = f(lo);
        return out;
      }
      // the endpoint signs are guaranteed analytically; allow rounding noise
      // when the input variances nearly coincide
      if (f(lo) < -1e-9 || f(hi) > 1e-9)
        throw std::runtime_error("solve_variance: debiased bracket lost its guaranteed signs");
      break;
    }
  }

  out.bracket_lo = lo;
  out.bracket_hi = hi;
  while (hi - lo > 1e-14 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  out.variance = 0.5 * (lo + hi);
  out.residual = f(out.variance);
  return out;
}

// Discretizes the closed form on a 1D grid; Dirac results become one-hot at
// the nearest bin to the mean.
inline DiscreteMeasure oracle_measure(const GaussianBarycenterSpec& spec,
                                      const UniformGrid& grid) {
  if (grid.ndim() != 1)
    throw std::invalid_argument("oracle_measure: 1D grid required");
  const OracleResult r = solve_variance(spec);
  if (!r.is_dirac) return discretize_gaussian(grid, {r.mean}, {r.variance});
  if (r.mean < grid.lower()[0] || r.mean > grid.upper()[0])
    throw std::invalid_argument("oracle_measure: Dirac mean outside the grid box");
  std::vector<double> w(grid.size(), 0.0);
  double best = std::abs(grid.center(0, 0) - r.mean);
  std::size_t best_i = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double d = std::abs(grid.center(0, i) - r.mean);
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  w[best_i] = 1.0;
  return DiscreteMeasure{grid, std::move(w)};
}

}  // namespace otbary
