#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hprune {

// Dense row-major tensor of doubles. Every dimension is positive.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }

  // Contiguous slice along the leading axis (one channel of a CHW map).
  std::span<double> plane(std::size_t index);
  std::span<const double> plane(std::size_t index) const;

  bool operator==(const Tensor&) const = default;
};

std::size_t shape_volume(std::span<const std::size_t> shape);

double l2_norm(const Tensor& t);
double l2_distance(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);
double max_abs_difference(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// a*x + b*y, shapes must agree.
Tensor linear_combination(double a, const Tensor& x, double b, const Tensor& y);

// Inputs fed through a network; all examples share one (m, H, W) shape.
struct Dataset {
  std::vector<Tensor> examples;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  // Throws DimensionError on mixed shapes, InvalidArgument when empty.
  void validate() const;
  const std::vector<std::size_t>& example_shape() const;
};

// Dataset <-> rank-4 (N, m, H, W) tensor, the on-disk layout.
Tensor stack(const Dataset& data);
Dataset unstack(const Tensor& batch);

}  // namespace hprune
