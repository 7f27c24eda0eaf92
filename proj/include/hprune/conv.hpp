#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hprune/tensor.hpp"

namespace hprune {

enum class Activation { Identity, ReLU };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

// K x K convolution, "same" zero padding, stride 1, no bias, followed by an
// optional 1x1 channel-mixing map and an elementwise activation.
//
// weights are laid out (out, in, row, col). comp, when present, has one row
// per K x K filter and one column per composite output channel, so
// Z_k = sum_j Y_j * comp(j, k). An unpruned layer with a map has it square;
// pruning the layer shrinks the rows and keeps the columns.
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 0;
  std::vector<double> weights;
  std::optional<Eigen::MatrixXd> comp;
  Activation activation = Activation::ReLU;

  ConvLayer() = default;
  ConvLayer(std::size_t in, std::size_t out, std::size_t k, Activation act = Activation::ReLU);

  // Channels seen by the next layer.
  std::size_t width() const noexcept {
    return comp ? static_cast<std::size_t>(comp->cols()) : out_channels;
  }
  std::size_t filter_size() const noexcept { return in_channels * kernel_size * kernel_size; }

  double& weight(std::size_t out, std::size_t in, std::size_t row, std::size_t col) {
    return weights[((out * in_channels + in) * kernel_size + row) * kernel_size + col];
  }
  double weight(std::size_t out, std::size_t in, std::size_t row, std::size_t col) const {
    return weights[((out * in_channels + in) * kernel_size + row) * kernel_size + col];
  }

  void validate() const;
  bool operator==(const ConvLayer& other) const;
};

struct Network {
  std::vector<ConvLayer> layers;

  std::size_t depth() const noexcept { return layers.size(); }
  // Per-layer checks plus channel compatibility along the chain.
  void validate() const;
  bool operator==(const Network&) const = default;
};

// Plain K x K convolution of a (m, H, W) input with an (n, m, K, K) weight
// block. OpenMP-parallel over output channels; each output element sums its
// terms in (in, row, col) order regardless of the thread count.
Tensor convolve(std::span<const double> weights, std::size_t out_channels, std::size_t kernel_size,
                const Tensor& input);

// Z = Y * comp, channel mixing of a (n, H, W) map by an n x w matrix.
Tensor mix_channels(const Tensor& y, const Eigen::MatrixXd& comp);

void apply_activation(Activation a, Tensor& t);

// Convolution followed by the 1x1 map, before the activation.
Tensor conv_forward_linear(const ConvLayer& layer, const Tensor& input);
Tensor conv_forward(const ConvLayer& layer, const Tensor& input);

// [y_1, ..., y_C] with y_c = conv_forward(layer_c, y_{c-1}) and y_0 = input.
std::vector<Tensor> forward_all_layers(const Network& net, const Tensor& input);
Tensor forward(const Network& net, const Tensor& input);

}  // namespace hprune
