// Synthetic test images: pairs of nested ellipse outlines on a square grid
// over the unit box, deterministic for a given seed.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <otbary/measure.hpp>

namespace otbary {

namespace detail {

// Uniform double in [lo, hi) from raw engine output; avoids the
// implementation-defined behavior of std::uniform_real_distribution.
inline double uniform(std::mt19937& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng()) / 4294967296.0);
}

// One-pixel ring by dense angular sampling, no anti-aliasing. Out-of-range
// pixels are skipped.
inline void draw_ellipse_ring(std::vector<double>& img, std::size_t side, double cr,
                              double cc, double rr, double rc) {
  const std::size_t steps =
      std::max<std::size_t>(256, static_cast<std::size_t>(8.0 * (rr + rc)));
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = 2.0 * M_PI * static_cast<double>(s) / static_cast<double>(steps);
    const long r = std::lround(cr + rr * std::cos(t));
    const long c = std::lround(cc + rc * std::sin(t));
    if (r >= 0 && c >= 0 && r < static_cast<long>(side) && c < static_cast<long>(side))
      img[static_cast<std::size_t>(r) * side + static_cast<std::size_t>(c)] = 1.0;
  }
}

}  // namespace detail

// Convention (the generator is a fixture, so the constants are pinned):
// centers drift from the top-left quarter (0.25 side) to the bottom-right
// quarter (0.75 side) across the list with +-0.05 side jitter; outer radii are
// drawn uniformly in [0.25, 0.45] side per axis and clamped to fit the image,
// inner radii in [0.08, 0.18] side clamped below 0.85 of the outer radius.
// Each image gets a 1e-10 support floor before normalization.
inline std::vector<DiscreteMeasure> generate_nested_ellipses(std::size_t count,
                                                             std::size_t image_side,
                                                             std::uint32_t seed) {
  if (image_side < 16) throw std::invalid_argument("ellipses: image_side must be >= 16");
  if (count < 1) throw std::invalid_argument("ellipses: count must be >= 1");
  std::mt19937 rng(seed);
  const double side = static_cast<double>(image_side);
  UniformGrid grid({image_side, image_side}, {0.0, 0.0}, {1.0, 1.0});
  std::vector<DiscreteMeasure> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(count - 1);
    double cr = (0.25 + 0.5 * t) * side + detail::uniform(rng, -0.05, 0.05) * side;
    double cc = (0.25 + 0.5 * t) * side + detail::uniform(rng, -0.05, 0.05) * side;
    cr = std::clamp(cr, 0.15 * side, 0.85 * side);
    cc = std::clamp(cc, 0.15 * side, 0.85 * side);
    const double fit_r = 0.95 * std::min(cr, side - 1.0 - cr);
    const double fit_c = 0.95 * std::min(cc, side - 1.0 - cc);
    const double orr = std::min(detail::uniform(rng, 0.25, 0.45) * side, fit_r);
    const double orc = std::min(detail::uniform(rng, 0.25, 0.45) * side, fit_c);
    const double irr =
        std::max(1.0, std::min(detail::uniform(rng, 0.08, 0.18) * side, 0.85 * orr));
    const double irc =
        std::max(1.0, std::min(detail::uniform(rng, 0.08, 0.18) * side, 0.85 * orc));
    std::vector<double> img(image_side * image_side, 0.0);
    detail::draw_ellipse_ring(img, image_side, cr, cc, orr, orc);
    detail::draw_ellipse_ring(img, image_side, cr, cc, irr, irc);
    out.push_back(make_measure(grid, std::move(img), 1e-10));
  }
  return out;
}

}  // namespace otbary
