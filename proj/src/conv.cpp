#include "hprune/conv.hpp"

#include <algorithm>
#include <string>

#include "hprune/error.hpp"

namespace hprune {

std::string_view to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

ConvLayer::ConvLayer(std::size_t in, std::size_t out, std::size_t k, Activation act)
    : in_channels(in), out_channels(out), kernel_size(k), weights(in * out * k * k, 0.0),
      activation(act) {}

void ConvLayer::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_size == 0)
    throw DimensionError("conv layer dimensions must be positive");
  if (weights.size() != out_channels * filter_size())
    throw DimensionError("conv layer has " + std::to_string(weights.size()) +
                         " weights, expected " + std::to_string(out_channels * filter_size()));
  if (comp && (static_cast<std::size_t>(comp->rows()) != out_channels || comp->cols() == 0))
    throw DimensionError("1x1 map must have one row per filter");
}

bool ConvLayer::operator==(const ConvLayer& o) const {
  if (in_channels != o.in_channels || out_channels != o.out_channels ||
      kernel_size != o.kernel_size || activation != o.activation || weights != o.weights ||
      comp.has_value() != o.comp.has_value())
    return false;
  if (!comp) return true;
  return comp->rows() == o.comp->rows() && comp->cols() == o.comp->cols() &&
         *comp == *o.comp;
}

void Network::validate() const {
  for (std::size_t c = 0; c < layers.size(); ++c) {
    layers[c].validate();
    if (c + 1 < layers.size() && layers[c].width() != layers[c + 1].in_channels)
      throw DimensionError("layer " + std::to_string(c) + " emits " +
                           std::to_string(layers[c].width()) + " channels but layer " +
                           std::to_string(c + 1) + " expects " +
                           std::to_string(layers[c + 1].in_channels));
  }
}

Tensor convolve(std::span<const double> weights, std::size_t out_channels, std::size_t k,
                const Tensor& input) {
  if (input.rank() != 3) throw DimensionError("convolution input must be (m, H, W)");
  const std::size_t m = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  if (weights.size() != out_channels * m * k * k)
    throw DimensionError("weight block does not match input channels");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);

  Tensor out({out_channels, h, w});
  const double* src = input.data.data();
  double* dst = out.data.data();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(out_channels); ++j) {
    double* yj = dst + j * h * w;
    for (std::size_t i = 0; i < m; ++i) {
      const double* xi = src + i * h * w;
      const double* f = weights.data() + (j * m + i) * k * k;
      for (std::size_t r = 0; r < k; ++r) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(r) - pad;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H, H - dy);
        for (std::size_t c = 0; c < k; ++c) {
          const double coeff = f[r * k + c];
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(c) - pad;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            double* row = yj + y * W;
            const double* in_row = xi + (y + dy) * W + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) row[x] += coeff * in_row[x];
          }
        }
      }
    }
  }
  return out;
}

Tensor mix_channels(const Tensor& y, const Eigen::MatrixXd& comp) {
  if (y.rank() != 3 || static_cast<std::size_t>(comp.rows()) != y.dim(0))
    throw DimensionError("1x1 map rows must equal the input channel count");
  const std::size_t n = y.dim(0);
  const std::size_t plane = y.dim(1) * y.dim(2);
  const std::size_t width = static_cast<std::size_t>(comp.cols());
  Tensor z({width, y.dim(1), y.dim(2)});

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(width); ++k) {
    double* zk = z.data.data() + k * plane;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = comp(static_cast<Eigen::Index>(j), k);
      const double* yj = y.data.data() + j * plane;
      for (std::size_t p = 0; p < plane; ++p) zk[p] += g * yj[p];
    }
  }
  return z;
}

void apply_activation(Activation a, Tensor& t) {
  if (a == Activation::ReLU)
    for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

Tensor conv_forward_linear(const ConvLayer& layer, const Tensor& input) {
  layer.validate();
  if (input.rank() != 3 || input.dim(0) != layer.in_channels)
    throw DimensionError("layer expects " + std::to_string(layer.in_channels) +
                         " input channels");
  Tensor y = convolve(layer.weights, layer.out_channels, layer.kernel_size, input);
  if (layer.comp) return mix_channels(y, *layer.comp);
  return y;
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  Tensor z = conv_forward_linear(layer, input);
  apply_activation(layer.activation, z);
  return z;
}

std::vector<Tensor> forward_all_layers(const Network& net, const Tensor& input) {
  std::vector<Tensor> outs;
  outs.reserve(net.depth());
  const Tensor* prev = &input;
  for (const auto& layer : net.layers) {
    outs.push_back(conv_forward(layer, *prev));
    prev = &outs.back();
  }
  return outs;
}

Tensor forward(const Network& net, const Tensor& input) {
  Tensor y = input;
  for (const auto& layer : net.layers) y = conv_forward(layer, y);
  return y;
}

}  // namespace hprune
