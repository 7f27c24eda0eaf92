#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hprune/conv.hpp"

namespace hprune {

struct LayerStats {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;  // multiply-accumulates
  bool operator==(const LayerStats&) const = default;
};

struct ModelStats {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::vector<LayerStats> per_layer;
  bool operator==(const ModelStats&) const = default;
};

// input_shape is (m, H, W) of one example.
ModelStats count_stats(const Network& net, std::span<const std::size_t> input_shape);
std::uint64_t count_params(const Network& net);

struct Reduction {
  double param_drop = 0.0;  // percent
  double flops_drop = 0.0;  // percent
  bool operator==(const Reduction&) const = default;
};

Reduction reduction_report(const ModelStats& before, const ModelStats& after);

// Percentage rendered to 0.1 precision, e.g. "50.0".
std::string format_percent(double percent);

}  // namespace hprune
