#include "hprune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hprune/error.hpp"

namespace hprune {

namespace {

void check_positive(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw DimensionError("tensor rank must be at least 1");
  for (std::size_t d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
}

void check_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw DimensionError("tensor shapes differ");
}

}  // namespace

std::size_t shape_volume(std::span<const std::size_t> shape) {
  std::size_t v = 1;
  for (std::size_t d : shape) {
    if (d != 0 && v > std::numeric_limits<std::size_t>::max() / d)
      throw DimensionError("tensor volume overflows");
    v *= d;
  }
  return v;
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
  check_positive(shape);
  data.assign(shape_volume(shape), fill);
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  check_positive(shape);
  if (data.size() != shape_volume(shape))
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape volume " + std::to_string(shape_volume(shape)));
}

std::span<double> Tensor::plane(std::size_t index) {
  const std::size_t stride = data.size() / shape.at(0);
  return std::span<double>(data).subspan(index * stride, stride);
}

std::span<const double> Tensor::plane(std::size_t index) const {
  const std::size_t stride = data.size() / shape.at(0);
  return std::span<const double>(data).subspan(index * stride, stride);
}

double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

double l2_distance(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

Tensor linear_combination(double a, const Tensor& x, double b, const Tensor& y) {
  check_same_shape(x, y);
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = a * x.data[i] + b * y.data[i];
  return out;
}

void Dataset::validate() const {
  if (examples.empty()) throw InvalidArgument("dataset is empty");
  const auto& s = examples.front().shape;
  for (std::size_t i = 1; i < examples.size(); ++i)
    if (examples[i].shape != s)
      throw DimensionError("dataset example " + std::to_string(i) + " has a different shape");
}

const std::vector<std::size_t>& Dataset::example_shape() const {
  if (examples.empty()) throw InvalidArgument("dataset is empty");
  return examples.front().shape;
}

Tensor stack(const Dataset& data) {
  data.validate();
  std::vector<std::size_t> shape{data.size()};
  const auto& inner = data.example_shape();
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> flat;
  flat.reserve(shape_volume(shape));
  for (const auto& e : data.examples) flat.insert(flat.end(), e.data.begin(), e.data.end());
  return Tensor(std::move(shape), std::move(flat));
}

Dataset unstack(const Tensor& batch) {
  if (batch.rank() < 2) throw DimensionError("dataset tensor needs a leading example axis");
  std::vector<std::size_t> inner(batch.shape.begin() + 1, batch.shape.end());
  Dataset out;
  out.examples.reserve(batch.dim(0));
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    auto p = batch.plane(i);
    out.examples.emplace_back(inner, std::vector<double>(p.begin(), p.end()));
  }
  return out;
}

}  // namespace hprune
