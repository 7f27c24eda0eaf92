#include "hprune/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "hprune/error.hpp"

namespace hprune {

namespace {

// Independent stream per (seed, purpose, index).
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose, std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose, index};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kWeights = 1;
constexpr std::uint32_t kData = 2;

}  // namespace

void GeneratorConfig::validate() const {
  if (layers < 1) throw InvalidArgument("need at least one layer");
  if (channels < 1 || kernel < 1 || height < 1 || width < 1 || examples < 1)
    throw InvalidArgument("channels, kernel, height, width and examples must be positive");
  if (kernel % 2 == 0) throw InvalidArgument("kernel size must be odd");
  if (redundancy.empty()) throw InvalidArgument("redundancy list is empty");
  if (redundancy.size() != 1 && redundancy.size() != layers)
    throw InvalidArgument("redundancy needs one value or one per layer");
  for (double r : redundancy)
    if (!(r >= 0.0 && r < 1.0)) throw InvalidArgument("redundancy must lie in [0, 1)");
}

double GeneratorConfig::redundancy_of(std::size_t layer) const {
  return redundancy.size() == 1 ? redundancy.front() : redundancy.at(layer);
}

std::size_t planted_count(std::size_t n, double redundancy) {
  const auto p = static_cast<std::size_t>(std::llround(redundancy * static_cast<double>(n)));
  return std::min(p, n - 1);
}

GeneratedModel generate(const GeneratorConfig& cfg) {
  cfg.validate();
  GeneratedModel out;
  const std::size_t m0 = cfg.input_channels == 0 ? cfg.channels : cfg.input_channels;
  out.input_shape = {m0, cfg.height, cfg.width};
  const double gain = cfg.activation == Activation::ReLU ? 2.0 : 1.0;

  for (std::size_t c = 0; c < cfg.layers; ++c) {
    const std::size_t m = c == 0 ? m0 : cfg.channels;
    const std::size_t n = cfg.channels;
    ConvLayer layer(m, n, cfg.kernel, cfg.activation);
    const std::size_t fs = layer.filter_size();
    auto rng = stream(cfg.seed, kWeights, static_cast<std::uint32_t>(c));
    std::normal_distribution<double> weight(0.0, std::sqrt(gain / static_cast<double>(fs)));
    std::normal_distribution<double> unit(0.0, 1.0);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t planted = planted_count(n, cfg.redundancy_of(c));
    std::vector<std::size_t> base(order.begin(), order.end() - static_cast<std::ptrdiff_t>(planted));
    std::sort(base.begin(), base.end());

    for (std::size_t j : base)
      for (std::size_t q = 0; q < fs; ++q) layer.weights[j * fs + q] = weight(rng);

    for (auto it = order.end() - static_cast<std::ptrdiff_t>(planted); it != order.end(); ++it) {
      PlantedFilter pf;
      pf.layer = c;
      pf.index = *it;
      pf.basis = base;
      const double scale = 1.0 / std::sqrt(static_cast<double>(base.size()));
      for (std::size_t b = 0; b < base.size(); ++b) pf.coefficients.push_back(scale * unit(rng));
      for (std::size_t q = 0; q < fs; ++q) {
        double v = 0.0;
        for (std::size_t b = 0; b < base.size(); ++b)
          v += pf.coefficients[b] * layer.weights[base[b] * fs + q];
        layer.weights[pf.index * fs + q] = v;
      }
      out.planted.push_back(std::move(pf));
    }
    std::sort(out.planted.begin(), out.planted.end(), [](const auto& a, const auto& b) {
      return std::tie(a.layer, a.index) < std::tie(b.layer, b.index);
    });
    out.net.layers.push_back(std::move(layer));
  }

  auto rng = stream(cfg.seed, kData, 0);
  std::normal_distribution<double> pixel(0.0, 1.0);
  for (std::size_t i = 0; i < cfg.examples; ++i) {
    Tensor x(out.input_shape);
    for (double& v : x.data) v = pixel(rng);
    out.data.examples.push_back(std::move(x));
  }
  return out;
}

std::string manifest_json(const GeneratorConfig& cfg, const std::vector<PlantedFilter>& planted) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["layers"] = cfg.layers;
  j["channels"] = cfg.channels;
  j["kernel"] = cfg.kernel;
  j["redundancy"] = cfg.redundancy;
  j["activation"] = to_string(cfg.activation);
  auto list = nlohmann::ordered_json::array();
  for (const auto& p : planted)
    list.push_back({{"layer", p.layer},
                    {"filter", p.index},
                    {"basis", p.basis},
                    {"coefficients", p.coefficients}});
  j["planted"] = list;
  return j.dump(2) + "\n";
}

}  // namespace hprune
