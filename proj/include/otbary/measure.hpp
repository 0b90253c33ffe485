// Discrete probability measures on uniform grids: construction, moments,
// Gaussian discretization and CSV round-trips.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <otbary/grid.hpp>

namespace otbary {

struct DiscreteMeasure {
  UniformGrid grid;
  std::vector<double> weights;     // nonnegative, sums to 1 within 1e-12
  bool range_warning = false;      // set when a discretized pdf was clipped by the box
};

struct Moments {
  std::vector<double> mean;        // per axis, grid units
  std::vector<double> variance;    // per axis
  double mass = 0.0;
};

// (raw + floor) / sum(raw + floor). floor = 0 keeps exact zeros.
inline std::vector<double> normalize_weights(std::vector<double> raw, double floor = 0.0) {
  if (floor < 0.0) throw std::invalid_argument("normalize: floor must be >= 0");
  double total = 0.0;
  bool any_positive = false;
  for (double& w : raw) {
    if (w < 0.0 || !std::isfinite(w))
      throw std::invalid_argument("normalize: weights must be finite and >= 0");
    if (w > 0.0) any_positive = true;
    w += floor;
    total += w;
  }
  if (!any_positive && floor == 0.0) throw std::invalid_argument("degenerate measure");
  for (double& w : raw) w /= total;
  return raw;
}

inline DiscreteMeasure make_measure(UniformGrid grid, std::vector<double> raw,
                                    double floor = 0.0) {
  if (raw.size() != grid.size())
    throw std::invalid_argument("measure: weight count does not match grid size");
  return DiscreteMeasure{std::move(grid), normalize_weights(std::move(raw), floor)};
}

inline void require_interior(const DiscreteMeasure& m) {
  for (double w : m.weights)
    if (!(w > 0.0)) throw std::invalid_argument("measure must be strictly positive");
}

// Midpoint-rule discretization of a separable Gaussian pdf, normalized.
// Sets range_warning when [mu - 6 sigma, mu + 6 sigma] leaves the box.
inline DiscreteMeasure discretize_gaussian(const UniformGrid& grid,
                                           const std::vector<double>& mu,
                                           const std::vector<double>& sigma2) {
  const std::size_t d = grid.ndim();
  if (mu.size() != d || sigma2.size() != d)
    throw std::invalid_argument("discretize_gaussian: mu/sigma2 length mismatch");
  bool warn = false;
  std::vector<std::vector<double>> axis(d);
  for (std::size_t a = 0; a < d; ++a) {
    if (!(sigma2[a] > 0.0)) throw std::invalid_argument("discretize_gaussian: sigma2 must be > 0");
    const double sigma = std::sqrt(sigma2[a]);
    if (mu[a] - 6.0 * sigma < grid.lower()[a] || mu[a] + 6.0 * sigma > grid.upper()[a])
      warn = true;
    axis[a].resize(grid.dims()[a]);
    for (std::size_t i = 0; i < grid.dims()[a]; ++i) {
      const double z = grid.center(a, i) - mu[a];
      axis[a][i] = std::exp(-z * z / (2.0 * sigma2[a]));
    }
  }
  std::vector<double> w(grid.size());
  std::vector<std::size_t> idx(d);
  for (std::size_t flat = 0; flat < grid.size(); ++flat) {
    grid.unflatten(flat, idx);
    double v = 1.0;
    for (std::size_t a = 0; a < d; ++a) v *= axis[a][idx[a]];
    w[flat] = v;
  }
  DiscreteMeasure m = make_measure(grid, std::move(w));
  m.range_warning = warn;
  return m;
}

// mean_a = sum_i w_i c_i, var_a = sum_i w_i (c_i - mean_a)^2, per axis.
inline Moments moments(const DiscreteMeasure& m) {
  const UniformGrid& g = m.grid;
  const std::size_t d = g.ndim();
  Moments out;
  out.mean.assign(d, 0.0);
  out.variance.assign(d, 0.0);
  std::vector<std::size_t> idx(d);
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    const double w = m.weights[flat];
    out.mass += w;
    g.unflatten(flat, idx);
    for (std::size_t a = 0; a < d; ++a) out.mean[a] += w * g.center(a, idx[a]);
  }
  for (std::size_t a = 0; a < d; ++a) out.mean[a] /= out.mass;
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    const double w = m.weights[flat];
    g.unflatten(flat, idx);
    for (std::size_t a = 0; a < d; ++a) {
      const double z = g.center(a, idx[a]) - out.mean[a];
      out.variance[a] += w * z * z;
    }
  }
  for (std::size_t a = 0; a < d; ++a) out.variance[a] /= out.mass;
  return out;
}

// CSV format: header "index,weight", one row per bin in row-major order,
// weights printed with 17 significant digits so round-trips are bit-exact.
inline void save_measure(const DiscreteMeasure& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "index,weight\n";
  char buf[40];
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", m.weights[i]);
    out << i << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Weights already normalized (|sum - 1| <= 1e-12) are kept verbatim; anything
// else is renormalized with the given floor.
inline DiscreteMeasure load_measure(const std::string& path, const UniformGrid& grid,
                                    double floor = 0.0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open measure file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "index,weight")
    throw std::runtime_error("measure csv: bad header in " + path);
  std::vector<double> w;
  w.reserve(grid.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("measure csv: bad row in " + path);
    const double v = std::stod(line.substr(comma + 1));
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::runtime_error("measure csv: negative or non-finite weight in " + path);
    w.push_back(v);
  }
  if (w.size() != grid.size())
    throw std::runtime_error("measure csv: row count does not match grid size in " + path);
  double total = 0.0;
  for (double v : w) total += v;
  if (std::abs(total - 1.0) <= 1e-12 && floor == 0.0) return DiscreteMeasure{grid, std::move(w)};
  return make_measure(grid, std::move(w), floor);
}

inline void save_grid(const UniformGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << grid.to_json().dump(2) << '\n';
}

inline UniformGrid load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file: " + path);
  nlohmann::json j;
  in >> j;
  return UniformGrid::from_json(j);
}

}  // namespace otbary
