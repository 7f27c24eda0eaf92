#include "hprune/metrics.hpp"

#include <cstdio>

#include "hprune/error.hpp"

namespace hprune {

ModelStats count_stats(const Network& net, std::span<const std::size_t> input_shape) {
  net.validate();
  if (input_shape.size() != 3) throw DimensionError("input shape must be (m, H, W)");
  if (!net.layers.empty() && input_shape[0] != net.layers.front().in_channels)
    throw DimensionError("input channels do not match the first layer");
  const std::uint64_t pixels = static_cast<std::uint64_t>(input_shape[1]) * input_shape[2];

  ModelStats stats;
  for (const auto& layer : net.layers) {
    LayerStats ls;
    ls.params = static_cast<std::uint64_t>(layer.out_channels) * layer.filter_size();
    if (layer.comp)
      ls.params += static_cast<std::uint64_t>(layer.comp->rows()) *
                   static_cast<std::uint64_t>(layer.comp->cols());
    // Same padding and stride 1: every weight is applied once per pixel.
    ls.flops = pixels * ls.params;
    stats.params += ls.params;
    stats.flops += ls.flops;
    stats.per_layer.push_back(ls);
  }
  return stats;
}

std::uint64_t count_params(const Network& net) {
  std::uint64_t p = 0;
  for (const auto& layer : net.layers) {
    p += static_cast<std::uint64_t>(layer.out_channels) * layer.filter_size();
    if (layer.comp)
      p += static_cast<std::uint64_t>(layer.comp->rows()) *
           static_cast<std::uint64_t>(layer.comp->cols());
  }
  return p;
}

Reduction reduction_report(const ModelStats& before, const ModelStats& after) {
  if (before.params == 0) throw InvalidArgument("reference model has no parameters");
  Reduction r;
  r.param_drop = 100.0 * (1.0 - static_cast<double>(after.params) / static_cast<double>(before.params));
  if (before.flops > 0)
    r.flops_drop = 100.0 * (1.0 - static_cast<double>(after.flops) / static_cast<double>(before.flops));
  return r;
}

std::string format_percent(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", percent);
  return buf;
}

}  // namespace hprune
