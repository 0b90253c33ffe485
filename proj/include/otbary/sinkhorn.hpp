// Pairwise entropic OT with the uniform reference, the symmetric
// autocorrelation fixed point, Sinkhorn divergences and their gradient.
//
// Conventions: the plan is pi = diag(a) K diag(b); dual potentials are
// reported as f = eps log(n a), g = eps log(n b), so the OT value at the
// computed scalings is eps(<alpha, log a> + <beta, log b>) + 2 eps log n.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <otbary/kernel.hpp>
#include <otbary/measure.hpp>

namespace otbary {

struct PairScalings {
  std::vector<double> a, b;    // strictly positive
  int iterations = 0;
  double marginal_error = 0.0; // l1 error of the alpha marginal at return
  bool converged = false;      // beta marginal is exact by construction
};

struct SymScaling {
  std::vector<double> c;       // symmetric scaling, h = eps log(n c)
  int iterations = 0;
  double residual = 0.0;       // || c . Kc - alpha ||_1 at return
  bool converged = false;
};

struct DivergenceValue {
  double ot_ab = 0.0, ot_aa = 0.0, ot_bb = 0.0;
  double sdiv = 0.0;           // ot_ab - (ot_aa + ot_bb) / 2
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* what, int iter) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error(std::string("scaling blow-up in ") + what +
                               " at iteration " + std::to_string(iter));
}

inline void check_same_grid(const DiscreteMeasure& m, const KernelOperator& K) {
  if (m.grid != K.grid())
    throw std::invalid_argument("measure grid does not match kernel grid");
}

}  // namespace detail

// Alternating updates a <- alpha / Kb, b <- beta / K^T a from b = 1, stopped
// on the l1 error of the alpha marginal of diag(a) K diag(b).
inline PairScalings sinkhorn_pair(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                  const KernelOperator& K, double tol = 1e-9,
                                  int max_iter = 100000) {
  detail::check_same_grid(alpha, K);
  detail::check_same_grid(beta, K);
  require_interior(alpha);
  require_interior(beta);
  if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn_pair: tol must be > 0");
  const std::size_t n = K.grid().size();
  PairScalings s;
  s.a.assign(n, 1.0);
  s.b.assign(n, 1.0);
  std::vector<double> Kb = K.apply(s.b);
  std::vector<double> Ka(n);
  for (int iter = 1; iter <= max_iter; ++iter) {
    for (std::size_t i = 0; i < n; ++i) s.a[i] = alpha.weights[i] / Kb[i];
    K.apply_transpose(s.a, Ka);
    for (std::size_t i = 0; i < n; ++i) s.b[i] = beta.weights[i] / Ka[i];
    detail::check_finite(s.a, "sinkhorn_pair", iter);
    detail::check_finite(s.b, "sinkhorn_pair", iter);
    Kb = K.apply(s.b);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err += std::abs(s.a[i] * Kb[i] - alpha.weights[i]);
    s.iterations = iter;
    s.marginal_error = err;
    if (err <= tol) {
      s.converged = true;
      break;
    }
  }
  return s;
}

// Dual value of the uniform-reference problem at the computed potentials;
// accurate to O(tol * eps).
inline double ot_value(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                       const PairScalings& s, const KernelOperator& K) {
  const std::size_t n = K.grid().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s.a[i] > 0.0) || !(s.b[i] > 0.0))
      throw std::invalid_argument("ot_value: scalings must be strictly positive");
    acc += alpha.weights[i] * std::log(s.a[i]) + beta.weights[i] * std::log(s.b[i]);
  }
  return K.epsilon() * acc + 2.0 * K.epsilon() * std::log(static_cast<double>(n));
}

// Square-root damped fixed point c <- sqrt(c . alpha / Kc) from c = 1; plain
// alternation oscillates for the symmetric problem.
inline SymScaling sinkhorn_symmetric(const DiscreteMeasure& alpha, const KernelOperator& K,
                                     double tol = 1e-9, int max_iter = 100000,
                                     std::vector<double>* residual_history = nullptr) {
  detail::check_same_grid(alpha, K);
  require_interior(alpha);
  if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn_symmetric: tol must be > 0");
  const std::size_t n = K.grid().size();
  SymScaling s;
  s.c.assign(n, 1.0);
  std::vector<double> Kc = K.apply(s.c);
  for (int iter = 1; iter <= max_iter; ++iter) {
    for (std::size_t i = 0; i < n; ++i)
      s.c[i] = std::sqrt(s.c[i] * alpha.weights[i] / Kc[i]);
    detail::check_finite(s.c, "sinkhorn_symmetric", iter);
    Kc = K.apply(s.c);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += std::abs(s.c[i] * Kc[i] - alpha.weights[i]);
    s.iterations = iter;
    s.residual = res;
    if (residual_history != nullptr) residual_history->push_back(res);
    if (res <= tol) {
      s.converged = true;
      break;
    }
  }
  return s;
}

// Symmetric dual value 2 eps <alpha, log(n c)>.
inline double ot_value_symmetric(const DiscreteMeasure& alpha, const SymScaling& s,
                                 const KernelOperator& K) {
  const std::size_t n = K.grid().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s.c[i] > 0.0))
      throw std::invalid_argument("ot_value_symmetric: scaling must be strictly positive");
    acc += alpha.weights[i] * std::log(s.c[i]);
  }
  return 2.0 * K.epsilon() * (acc + std::log(static_cast<double>(n)));
}

inline DivergenceValue sinkhorn_divergence(const DiscreteMeasure& alpha,
                                           const DiscreteMeasure& beta,
                                           const KernelOperator& K, double tol = 1e-9,
                                           int max_iter = 100000) {
  DivergenceValue v;
  const PairScalings ab = sinkhorn_pair(alpha, beta, K, tol, max_iter);
  v.ot_ab = ot_value(alpha, beta, ab, K);
  v.ot_aa = ot_value_symmetric(alpha, sinkhorn_symmetric(alpha, K, tol, max_iter), K);
  v.ot_bb = ot_value_symmetric(beta, sinkhorn_symmetric(beta, K, tol, max_iter), K);
  v.sdiv = v.ot_ab - 0.5 * (v.ot_aa + v.ot_bb);
  return v;
}

struct GradientCheck {
  double analytic = 0.0;  // <g - h_beta, direction>
  double numeric = 0.0;   // central difference of sdiv along direction
};

// direction must sum to zero and keep beta strictly inside the simplex for
// the central-difference step.
inline GradientCheck divergence_gradient_check(const DiscreteMeasure& alpha,
                                               const DiscreteMeasure& beta,
                                               const KernelOperator& K,
                                               const std::vector<double>& direction,
                                               double step = 1e-5, double tol = 1e-11) {
  const std::size_t n = K.grid().size();
  if (direction.size() != n)
    throw std::invalid_argument("gradient check: direction length mismatch");
  double dir_sum = 0.0;
  for (double d : direction) dir_sum += d;
  if (std::abs(dir_sum) > 1e-12)
    throw std::invalid_argument("gradient check: direction must sum to zero");

  GradientCheck out;
  const PairScalings ab = sinkhorn_pair(alpha, beta, K, tol);
  const SymScaling bb = sinkhorn_symmetric(beta, K, tol);
  const double eps = K.epsilon();
  for (std::size_t i = 0; i < n; ++i)
    out.analytic += direction[i] * eps * (std::log(ab.b[i]) - std::log(bb.c[i]));

  std::vector<double> plus(n), minus(n);
  for (std::size_t i = 0; i < n; ++i) {
    plus[i] = beta.weights[i] + step * direction[i];
    minus[i] = beta.weights[i] - step * direction[i];
    if (!(plus[i] > 0.0) || !(minus[i] > 0.0))
      throw std::invalid_argument("gradient check: step leaves simplex interior");
  }
  const DiscreteMeasure beta_plus{beta.grid, plus};
  const DiscreteMeasure beta_minus{beta.grid, minus};
  const double f_plus = sinkhorn_divergence(alpha, beta_plus, K, tol).sdiv;
  const double f_minus = sinkhorn_divergence(alpha, beta_minus, K, tol).sdiv;
  out.numeric = (f_plus - f_minus) / (2.0 * step);
  return out;
}

}  // namespace otbary
