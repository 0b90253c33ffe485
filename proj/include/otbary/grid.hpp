// Uniform axis-aligned grids in 1, 2 or 3 dimensions.
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace otbary {

// Box [lower, upper] split into dims[a] equal cells per axis; bin centers sit
// at cell midpoints. Flat indices are row-major (last axis fastest).
class UniformGrid {
 public:
  // Placeholder grid for default-constructed holders; real grids come from
  // the validating constructor below.
  UniformGrid() : UniformGrid({2}, {0.0}, {1.0}) {}

  UniformGrid(std::vector<std::size_t> dims, std::vector<double> lower,
              std::vector<double> upper)
      : dims_(std::move(dims)), lower_(std::move(lower)), upper_(std::move(upper)) {
    if (dims_.empty() || dims_.size() > 3)
      throw std::invalid_argument("grid: 1 to 3 axes required");
    if (lower_.size() != dims_.size() || upper_.size() != dims_.size())
      throw std::invalid_argument("grid: dims/lower/upper length mismatch");
    size_ = 1;
    spacing_.resize(dims_.size());
    for (std::size_t a = 0; a < dims_.size(); ++a) {
      if (dims_[a] < 2) throw std::invalid_argument("grid: every axis needs >= 2 bins");
      if (!(upper_[a] > lower_[a]))
        throw std::invalid_argument("grid: upper must exceed lower on every axis");
      spacing_[a] = (upper_[a] - lower_[a]) / static_cast<double>(dims_[a]);
      size_ *= dims_[a];
    }
  }

  std::size_t ndim() const { return dims_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  double spacing(std::size_t axis) const { return spacing_[axis]; }

  double center(std::size_t axis, std::size_t i) const {
    return lower_[axis] + (static_cast<double>(i) + 0.5) * spacing_[axis];
  }

  std::vector<double> axis_centers(std::size_t axis) const {
    std::vector<double> c(dims_[axis]);
    for (std::size_t i = 0; i < dims_[axis]; ++i) c[i] = center(axis, i);
    return c;
  }

  std::size_t flatten(std::span<const std::size_t> idx) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dims_.size(); ++a) flat = flat * dims_[a] + idx[a];
    return flat;
  }

  void unflatten(std::size_t flat, std::span<std::size_t> idx) const {
    for (std::size_t a = dims_.size(); a-- > 0;) {
      idx[a] = flat % dims_[a];
      flat /= dims_[a];
    }
  }

  bool operator==(const UniformGrid& o) const {
    return dims_ == o.dims_ && lower_ == o.lower_ && upper_ == o.upper_;
  }
  bool operator!=(const UniformGrid& o) const { return !(*this == o); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"dims", dims_}, {"lower", lower_}, {"upper", upper_}};
  }

  static UniformGrid from_json(const nlohmann::json& j) {
    for (const auto& item : j.items())
      if (item.key() != "dims" && item.key() != "lower" && item.key() != "upper")
        throw std::invalid_argument("grid json: unknown key '" + item.key() + "'");
    if (!j.contains("dims") || !j.contains("lower") || !j.contains("upper"))
      throw std::invalid_argument("grid json: dims/lower/upper required");
    return UniformGrid(j.at("dims").get<std::vector<std::size_t>>(),
                       j.at("lower").get<std::vector<double>>(),
                       j.at("upper").get<std::vector<double>>());
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> lower_, upper_;
  std::vector<double> spacing_;
  std::size_t size_ = 0;
};

}  // namespace otbary
