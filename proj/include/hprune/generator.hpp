#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hprune/conv.hpp"
#include "hprune/tensor.hpp"

namespace hprune {

struct GeneratorConfig {
  std::size_t layers = 3;
  std::size_t channels = 8;
  std::size_t kernel = 3;
  std::size_t input_channels = 0;  // 0: same as channels
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t examples = 16;
  // Fraction of filters per layer that are linear combinations of the others.
  // One value applies to every layer; otherwise one value per layer.
  std::vector<double> redundancy{0.0};
  std::uint64_t seed = 0;
  Activation activation = Activation::ReLU;

  void validate() const;
  double redundancy_of(std::size_t layer) const;
};

// Filter `index` equals sum_q coefficients[q] * filter basis[q].
struct PlantedFilter {
  std::size_t layer = 0;
  std::size_t index = 0;
  std::vector<std::size_t> basis;
  std::vector<double> coefficients;
};

struct GeneratedModel {
  Network net;
  Dataset data;
  std::vector<PlantedFilter> planted;
  std::vector<std::size_t> input_shape;  // (m, H, W)
};

// round(r n) filters per layer are planted (at most n - 1), at shuffled
// positions, as random combinations of the independently drawn ones.
GeneratedModel generate(const GeneratorConfig& cfg);

std::size_t planted_count(std::size_t n, double redundancy);

// Sidecar JSON listing every planted combination.
std::string manifest_json(const GeneratorConfig& cfg, const std::vector<PlantedFilter>& planted);

}  // namespace hprune
