// The Gibbs kernel K = exp(-C/eps) over grid bin centers as a linear
// operator, with a dense backend (any cost exponent p in (0,2]) and a
// separable backend (p = 2) that contracts one axis at a time:
// O(n^{3/2}) multiply-adds in 2D and O(n^{4/3}) in 3D instead of O(n^2).
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <otbary/grid.hpp>

namespace otbary {

// Costs are squared (or p-powered) Euclidean distances in the grid's physical
// units, so eps is in squared physical units. Construction refuses an eps too
// small to couple adjacent bins: once exp(-spacing^p/eps) underflows, the
// kernel is numerically the identity and Sinkhorn-style iterations stall
// (the instability regime we refuse rather than stabilize in log domain).
// Entries for very distant pairs may still underflow to zero on large boxes;
// that truncation is harmless as long as neighbors stay coupled.
class KernelOperator {
 public:
  static KernelOperator dense(const UniformGrid& grid, double epsilon, double p = 2.0,
                              std::size_t dense_limit = 16384) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("kernel: epsilon must be > 0");
    if (!(p > 0.0) || p > 2.0) throw std::invalid_argument("kernel: p must be in (0, 2]");
    if (grid.size() > dense_limit)
      throw std::invalid_argument("kernel: grid exceeds dense backend limit");
    check_resolvable(grid, epsilon, p);
    KernelOperator op(grid, epsilon);
    const std::size_t n = grid.size();
    const std::size_t d = grid.ndim();
    op.dense_.resize(n * n);
    std::vector<std::vector<double>> centers(d);
    for (std::size_t a = 0; a < d; ++a) centers[a] = grid.axis_centers(a);
    std::vector<std::size_t> bi(d), bj(d);
    for (std::size_t i = 0; i < n; ++i) {
      grid.unflatten(i, bi);
      for (std::size_t j = 0; j < n; ++j) {
        grid.unflatten(j, bj);
        double dist2 = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
          const double z = centers[a][bi[a]] - centers[a][bj[a]];
          dist2 += z * z;
        }
        const double cost = p == 2.0 ? dist2 : std::pow(dist2, 0.5 * p);
        op.dense_[i * n + j] = std::exp(-cost / epsilon);
      }
    }
    return op;
  }

  static KernelOperator separable(const UniformGrid& grid, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("kernel: epsilon must be > 0");
    check_resolvable(grid, epsilon, 2.0);
    KernelOperator op(grid, epsilon);
    op.axis_.resize(grid.ndim());
    for (std::size_t a = 0; a < grid.ndim(); ++a) {
      const std::vector<double> c = grid.axis_centers(a);
      const std::size_t m = c.size();
      op.axis_[a].resize(m * m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double z = c[i] - c[j];
          op.axis_[a][i * m + j] = std::exp(-z * z / epsilon);
        }
    }
    return op;
  }

  KernelOperator(KernelOperator&& o) noexcept
      : grid_(std::move(o.grid_)),
        epsilon_(o.epsilon_),
        dense_(std::move(o.dense_)),
        axis_(std::move(o.axis_)),
        calls_(o.calls_.load()) {}
  KernelOperator& operator=(KernelOperator&& o) noexcept {
    grid_ = std::move(o.grid_);
    epsilon_ = o.epsilon_;
    dense_ = std::move(o.dense_);
    axis_ = std::move(o.axis_);
    calls_.store(o.calls_.load());
    return *this;
  }

  const UniformGrid& grid() const { return grid_; }
  double epsilon() const { return epsilon_; }
  bool is_dense() const { return !dense_.empty(); }

  void apply(std::span<const double> v, std::span<double> out) const {
    if (v.size() != grid_.size() || out.size() != grid_.size())
      throw std::invalid_argument("kernel apply: dimension mismatch");
    ++calls_;
    if (is_dense())
      apply_dense(v, out);
    else
      apply_separable(v, out);
  }

  // C is symmetric here, so K^T = K; kept as a named operation because the
  // solvers are written against both sides of the scaling.
  void apply_transpose(std::span<const double> v, std::span<double> out) const {
    apply(v, out);
  }

  // Applies K to `count` vectors stored interleaved: in[i * count + c] is
  // entry i of vector c. Counts as `count` kernel applications. The lanes
  // keep the kernel contraction vectorizable when differentiating sweeps
  // against several tangents at once.
  void apply_batch(std::span<const double> in, std::span<double> out,
                   std::size_t count) const {
    const std::size_t n = grid_.size();
    if (count == 0 || in.size() != n * count || out.size() != n * count)
      throw std::invalid_argument("kernel apply_batch: dimension mismatch");
    calls_ += count;
    if (is_dense()) {
      std::vector<double> acc(4 * count);
      for (std::size_t i = 0; i < n; ++i)
        dot_rows_lanes(dense_.data() + i * n, in.data(), n, count,
                       out.data() + i * count, acc.data());
      return;
    }
    contract_axes(in.data(), out.data(), count);
  }

  std::vector<double> apply(const std::vector<double>& v) const {
    std::vector<double> out(v.size());
    apply(std::span<const double>(v), std::span<double>(out));
    return out;
  }
  std::vector<double> apply_transpose(const std::vector<double>& v) const {
    return apply(v);
  }

  // Scalar multiply-adds one apply performs; dense is n^2, separable is
  // n * sum(dims) = O(n^{3/2}) in 2D and O(n^{4/3}) in 3D on square grids.
  std::uint64_t madds_per_apply() const {
    const std::uint64_t n = grid_.size();
    if (is_dense()) return n * n;
    std::uint64_t total = 0;
    for (std::size_t a = 0; a < grid_.ndim(); ++a) total += n * grid_.dims()[a];
    return total;
  }

  std::uint64_t apply_count() const { return calls_.load(); }
  void reset_apply_count() const { calls_.store(0); }

 private:
  KernelOperator(const UniformGrid& grid, double epsilon) : grid_(grid), epsilon_(epsilon) {}

  static void check_resolvable(const UniformGrid& grid, double epsilon, double p) {
    const double log_min = std::log(std::numeric_limits<double>::min());
    for (std::size_t a = 0; a < grid.ndim(); ++a) {
      const double step = grid.spacing(a);
      if (-std::pow(step * step, 0.5 * p) / epsilon < log_min)
        throw std::invalid_argument("epsilon too small for grid diameter");
    }
  }

  // drow[c] = sum_j krow[j] * src[j * lanes + c] over four fixed accumulator
  // chains per lane. The chain layout keeps a deterministic summation order
  // that is the same for every lane count (the strict FP model forbids the
  // compiler from reassociating the reduction itself), and the lane loop
  // vectorizes. acc must hold 4 * lanes scratch doubles.
  static void dot_rows_lanes(const double* krow, const double* src, std::size_t m,
                             std::size_t lanes, double* drow, double* acc) {
    double* a0 = acc;
    double* a1 = acc + lanes;
    double* a2 = acc + 2 * lanes;
    double* a3 = acc + 3 * lanes;
    for (std::size_t c = 0; c < 4 * lanes; ++c) acc[c] = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= m; j += 4) {
      const double k0 = krow[j], k1 = krow[j + 1], k2 = krow[j + 2], k3 = krow[j + 3];
      const double* s0 = src + j * lanes;
      const double* s1 = s0 + lanes;
      const double* s2 = s1 + lanes;
      const double* s3 = s2 + lanes;
      for (std::size_t c = 0; c < lanes; ++c) {
        a0[c] += k0 * s0[c];
        a1[c] += k1 * s1[c];
        a2[c] += k2 * s2[c];
        a3[c] += k3 * s3[c];
      }
    }
    for (std::size_t c = 0; c < lanes; ++c) drow[c] = (a0[c] + a1[c]) + (a2[c] + a3[c]);
    for (; j < m; ++j) {
      const double kj = krow[j];
      const double* sj = src + j * lanes;
      for (std::size_t c = 0; c < lanes; ++c) drow[c] += kj * sj[c];
    }
  }

  void apply_dense(std::span<const double> v, std::span<double> out) const {
    const std::size_t n = grid_.size();
    double acc[4];
    for (std::size_t i = 0; i < n; ++i)
      dot_rows_lanes(dense_.data() + i * n, v.data(), n, 1, out.data() + i, acc);
  }

  void apply_separable(std::span<const double> v, std::span<double> out) const {
    contract_axes(v.data(), out.data(), 1);
  }

  // Contract each axis in turn over the row-major tensor with `lanes`
  // trailing vector lanes: with strides (outer, m, inner),
  // out[o, i, in] = sum_j k[i, j] buf[o, j, in], inner = grid inner * lanes.
  void contract_axes(const double* v, double* out, std::size_t lanes) const {
    const std::size_t d = grid_.ndim();
    const std::size_t total = grid_.size() * lanes;
    std::vector<double> buf(v, v + total);
    std::vector<double> tmp(total);
    std::vector<double> acc(4 * lanes);
    std::size_t inner = total;
    std::size_t outer = 1;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t m = grid_.dims()[a];
      inner /= m;
      const double* k = axis_[a].data();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = buf.data() + o * m * inner;
        double* dst = tmp.data() + o * m * inner;
        if (inner == lanes) {
          // last grid axis: per-lane dots in the lane-invariant chain order
          for (std::size_t i = 0; i < m; ++i)
            dot_rows_lanes(k + i * m, src, m, lanes, dst + i * lanes, acc.data());
          continue;
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double* krow = k + i * m;
          double* drow = dst + i * inner;
          for (std::size_t in = 0; in < inner; ++in) drow[in] = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            const double kij = krow[j];
            const double* srow = src + j * inner;
            for (std::size_t in = 0; in < inner; ++in) drow[in] += kij * srow[in];
          }
        }
      }
      buf.swap(tmp);
      outer *= m;
    }
    std::copy(buf.begin(), buf.end(), out);
  }

  UniformGrid grid_;
  double epsilon_;
  std::vector<double> dense_;               // n x n, row-major
  std::vector<std::vector<double>> axis_;   // per-axis m x m blocks
  mutable std::atomic<std::uint64_t> calls_{0};
};

}  // namespace otbary
