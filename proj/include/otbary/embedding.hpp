// Barycentric coordinates: run exactly l barycenter sweeps as a smooth map
// w -> alpha^(l)(w), differentiate it in the K weights by forward-mode
// tangent propagation (one tangent per softmax logit through every division,
// kernel application, geometric mean and square root of the sweep), and fit
// w = softmax(theta) to a target by Adam on the squared error.
//
// Forward mode over reverse mode: with K tangents the cost is (K+1) times
// one unrolled run and nothing is stored across sweeps, whereas reverse mode
// would checkpoint l sweeps of intermediates; dictionaries here are small
// (K of order tens), so the K tangents are the cheaper side.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <otbary/barycenter.hpp>
#include <otbary/kernel.hpp>
#include <otbary/measure.hpp>

namespace otbary {

struct Dictionary {
  std::vector<DiscreteMeasure> atoms;  // K >= 2, on the kernel grid
  const KernelOperator* kernel = nullptr;
  int unroll_length = 30;  // fixed sweep count l
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d theta
};

struct FitOptions {
  int steps = 300;
  double learning_rate = 0.1;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  double gtol = 1e-10;  // stop early when the gradient norm drops below this
};

struct EmbeddingFit {
  std::vector<double> theta;  // best-loss logits
  std::vector<double> w;      // softmax(theta)
  double loss = 0.0;
  double grad_norm = 0.0;     // at exit
  int iterations = 0;         // optimizer steps taken
};

inline std::vector<double> softmax(const std::vector<double>& theta) {
  double mx = theta[0];
  for (double t : theta) mx = std::max(mx, t);
  std::vector<double> w(theta.size());
  double total = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    w[k] = std::exp(theta[k] - mx);
    total += w[k];
  }
  for (double& x : w) x /= total;
  return w;
}

namespace detail {

inline void validate_dictionary(const Dictionary& dict) {
  if (dict.kernel == nullptr) throw std::invalid_argument("dictionary: kernel is required");
  if (dict.atoms.size() < 2) throw std::invalid_argument("dictionary: need K >= 2 atoms");
  if (dict.unroll_length < 1) throw std::invalid_argument("dictionary: unroll_length >= 1");
  for (const DiscreteMeasure& m : dict.atoms) {
    if (m.grid != dict.kernel->grid())
      throw std::invalid_argument("dictionary: atom grid does not match kernel grid");
    require_interior(m);
  }
}

// Value plus tangents with respect to the K logits. An empty tangent list
// runs the same code value-only.
struct Jet {
  std::vector<double> v;
  std::vector<std::vector<double>> t;

  Jet() = default;
  Jet(std::size_t n, std::size_t ntan, double fill = 0.0)
      : v(n, fill), t(ntan, std::vector<double>(n, 0.0)) {}
};

// One interleaved kernel application for the value and all tangents; the
// lanes share the contraction pass.
inline void jet_kernel_apply(const KernelOperator& K, const Jet& x, Jet& out,
                             std::vector<double>& stage_in, std::vector<double>& stage_out) {
  const std::size_t n = x.v.size();
  const std::size_t lanes = 1 + x.t.size();
  stage_in.resize(n * lanes);
  stage_out.resize(n * lanes);
  for (std::size_t i = 0; i < n; ++i) stage_in[i * lanes] = x.v[i];
  for (std::size_t m = 0; m + 1 < lanes; ++m)
    for (std::size_t i = 0; i < n; ++i) stage_in[i * lanes + m + 1] = x.t[m][i];
  K.apply_batch(stage_in, stage_out, lanes);
  for (std::size_t i = 0; i < n; ++i) out.v[i] = stage_out[i * lanes];
  for (std::size_t m = 0; m + 1 < lanes; ++m)
    for (std::size_t i = 0; i < n; ++i) out.t[m][i] = stage_out[i * lanes + m + 1];
}

inline void check_jet_finite(const Jet& x, int sweep) {
  for (double a : x.v)
    if (!std::isfinite(a))
      throw std::runtime_error("unrolled barycenter blow-up at sweep " + std::to_string(sweep));
  for (const auto& tv : x.t)
    for (double a : tv)
      if (!std::isfinite(a))
        throw std::runtime_error("non-finite tangent at sweep " + std::to_string(sweep));
}

// Runs l sweeps with the given weight values and (optional) weight tangents,
// returning the normalized iterate as a Jet.
inline Jet unroll(const Dictionary& dict, const std::vector<double>& w,
                  const std::vector<std::vector<double>>& wdot, BarycenterMethod method) {
  if (method == BarycenterMethod::product)
    throw std::invalid_argument("unrolled barycenter: method must be ibp or debiased");
  const KernelOperator& K = *dict.kernel;
  const std::size_t n = K.grid().size();
  const std::size_t nk = dict.atoms.size();
  const std::size_t nt = wdot.size();
  const bool debiased = method == BarycenterMethod::debiased;

  std::vector<Jet> b(nk, Jet(n, nt, 1.0)), a(nk, Jet(n, nt)), Ka(nk, Jet(n, nt));
  Jet d(n, nt, 1.0), alpha(n, nt), Kb(n, nt), Kd(n, nt), r(n, nt);
  std::vector<double> log_ka(n), stage_in, stage_out;

  for (int sweep = 1; sweep <= dict.unroll_length; ++sweep) {
    for (std::size_t k = 0; k < nk; ++k) {
      jet_kernel_apply(K, b[k], Kb, stage_in, stage_out);
      const std::vector<double>& ak_w = dict.atoms[k].weights;
      for (std::size_t i = 0; i < n; ++i) a[k].v[i] = ak_w[i] / Kb.v[i];
      for (std::size_t m = 0; m < nt; ++m)
        for (std::size_t i = 0; i < n; ++i)
          a[k].t[m][i] = -a[k].v[i] * Kb.t[m][i] / Kb.v[i];
      jet_kernel_apply(K, a[k], Ka[k], stage_in, stage_out);
    }

    // alpha = [d .] prod_k Ka_k^{w_k}; tangents carry both the w_k variation
    // and the Ka_k variation.
    for (std::size_t i = 0; i < n; ++i) alpha.v[i] = debiased ? std::log(d.v[i]) : 0.0;
    for (std::size_t m = 0; m < nt; ++m)
      for (std::size_t i = 0; i < n; ++i)
        alpha.t[m][i] = debiased ? d.t[m][i] / d.v[i] : 0.0;
    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t i = 0; i < n; ++i) log_ka[i] = std::log(Ka[k].v[i]);
      for (std::size_t i = 0; i < n; ++i) alpha.v[i] += w[k] * log_ka[i];
      for (std::size_t m = 0; m < nt; ++m)
        for (std::size_t i = 0; i < n; ++i)
          alpha.t[m][i] += wdot[m][k] * log_ka[i] + w[k] * Ka[k].t[m][i] / Ka[k].v[i];
    }
    for (std::size_t i = 0; i < n; ++i) alpha.v[i] = std::exp(alpha.v[i]);
    for (std::size_t m = 0; m < nt; ++m)
      for (std::size_t i = 0; i < n; ++i) alpha.t[m][i] *= alpha.v[i];
    check_jet_finite(alpha, sweep);

    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t i = 0; i < n; ++i) b[k].v[i] = alpha.v[i] / Ka[k].v[i];
      for (std::size_t m = 0; m < nt; ++m)
        for (std::size_t i = 0; i < n; ++i)
          b[k].t[m][i] =
              (alpha.t[m][i] - b[k].v[i] * Ka[k].t[m][i]) / Ka[k].v[i];
    }

    if (debiased) {
      jet_kernel_apply(K, d, Kd, stage_in, stage_out);
      for (std::size_t i = 0; i < n; ++i) r.v[i] = d.v[i] * alpha.v[i] / Kd.v[i];
      for (std::size_t m = 0; m < nt; ++m)
        for (std::size_t i = 0; i < n; ++i)
          r.t[m][i] = (d.t[m][i] * alpha.v[i] + d.v[i] * alpha.t[m][i] -
                       r.v[i] * Kd.t[m][i]) /
                      Kd.v[i];
      for (std::size_t i = 0; i < n; ++i) d.v[i] = std::sqrt(r.v[i]);
      for (std::size_t m = 0; m < nt; ++m)
        for (std::size_t i = 0; i < n; ++i) d.t[m][i] = r.t[m][i] / (2.0 * d.v[i]);
      check_jet_finite(d, sweep);
    }
  }

  // Final normalization is part of the differentiated map.
  double s = 0.0;
  for (double x : alpha.v) s += x;
  std::vector<double> sdot(nt, 0.0);
  for (std::size_t m = 0; m < nt; ++m)
    for (std::size_t i = 0; i < n; ++i) sdot[m] += alpha.t[m][i];
  for (std::size_t m = 0; m < nt; ++m)
    for (std::size_t i = 0; i < n; ++i)
      alpha.t[m][i] = alpha.t[m][i] / s - alpha.v[i] * sdot[m] / (s * s);
  for (std::size_t i = 0; i < n; ++i) alpha.v[i] /= s;
  return alpha;
}

}  // namespace detail

inline DiscreteMeasure unrolled_barycenter(const Dictionary& dict,
                                           const std::vector<double>& w,
                                           BarycenterMethod method = BarycenterMethod::debiased) {
  detail::validate_dictionary(dict);
  if (w.size() != dict.atoms.size())
    throw std::invalid_argument("unrolled barycenter: weight count mismatch");
  double total = 0.0;
  for (double x : w) {
    if (!(x > 0.0))
      throw std::invalid_argument("unrolled barycenter: weights must be interior");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("unrolled barycenter: weights must sum to 1");
  std::vector<double> wn = w;
  for (double& x : wn) x /= total;
  detail::Jet out = detail::unroll(dict, wn, {}, method);
  return DiscreteMeasure{dict.kernel->grid(), std::move(out.v)};
}

// loss = 0.5 || alpha^(l)(softmax(theta)) - beta ||_2^2 and its exact
// gradient in theta via the softmax Jacobian w_k (delta_km - w_m).
inline LossGradient loss_and_gradient(const Dictionary& dict, const DiscreteMeasure& beta,
                                      const std::vector<double>& theta,
                                      BarycenterMethod method = BarycenterMethod::debiased) {
  detail::validate_dictionary(dict);
  if (beta.grid != dict.kernel->grid())
    throw std::invalid_argument("loss_and_gradient: target grid mismatch");
  const std::size_t nk = dict.atoms.size();
  if (theta.size() != nk) throw std::invalid_argument("loss_and_gradient: theta size mismatch");
  const std::vector<double> w = softmax(theta);
  std::vector<std::vector<double>> wdot(nk, std::vector<double>(nk));
  for (std::size_t m = 0; m < nk; ++m)
    for (std::size_t k = 0; k < nk; ++k)
      wdot[m][k] = w[k] * ((k == m ? 1.0 : 0.0) - w[m]);

  const detail::Jet y = detail::unroll(dict, w, wdot, method);
  const std::size_t n = y.v.size();
  LossGradient out;
  out.grad.assign(nk, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y.v[i] - beta.weights[i];
    out.loss += 0.5 * e * e;
    for (std::size_t m = 0; m < nk; ++m) out.grad[m] += e * y.t[m][i];
  }
  return out;
}

// Adam on the logits from theta = 0; keeps the best-loss iterate.
inline EmbeddingFit fit_coordinates(const Dictionary& dict, const DiscreteMeasure& beta,
                                    const FitOptions& opts = {},
                                    BarycenterMethod method = BarycenterMethod::debiased) {
  const std::size_t nk = dict.atoms.size();
  std::vector<double> theta(nk, 0.0);
  std::vector<double> m1(nk, 0.0), m2(nk, 0.0);

  EmbeddingFit fit;
  LossGradient lg = loss_and_gradient(dict, beta, theta, method);
  fit.theta = theta;
  fit.loss = lg.loss;
  auto norm = [](const std::vector<double>& g) {
    double s = 0.0;
    for (double x : g) s += x * x;
    return std::sqrt(s);
  };
  fit.grad_norm = norm(lg.grad);

  for (int step = 1; step <= opts.steps; ++step) {
    if (fit.grad_norm <= opts.gtol) break;
    const double bc1 = 1.0 - std::pow(opts.beta1, step);
    const double bc2 = 1.0 - std::pow(opts.beta2, step);
    for (std::size_t k = 0; k < nk; ++k) {
      m1[k] = opts.beta1 * m1[k] + (1.0 - opts.beta1) * lg.grad[k];
      m2[k] = opts.beta2 * m2[k] + (1.0 - opts.beta2) * lg.grad[k] * lg.grad[k];
      theta[k] -= opts.learning_rate * (m1[k] / bc1) /
                  (std::sqrt(m2[k] / bc2) + opts.adam_eps);
    }
    lg = loss_and_gradient(dict, beta, theta, method);
    fit.iterations = step;
    fit.grad_norm = norm(lg.grad);
    if (lg.loss < fit.loss) {
      fit.loss = lg.loss;
      fit.theta = theta;
    }
  }
  fit.w = softmax(fit.theta);
  return fit;
}

}  // namespace otbary
