#include "hprune/reference.hpp"

#include <cmath>
#include <limits>

#include "hprune/error.hpp"

namespace hprune::reference {

using Eigen::Index;
using Eigen::MatrixXd;

Tensor convolve(std::span<const double> weights, std::size_t out_channels,
                std::size_t kernel_size, const Tensor& input) {
  if (input.rank() != 3) throw DimensionError("convolution input must be (m, H, W)");
  const std::size_t m = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t k = kernel_size;
  if (weights.size() != out_channels * m * k * k) throw DimensionError("weight block size");
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);

  Tensor out({out_channels, h, w});
  for (std::size_t o = 0; o < out_channels; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) {
              const auto yy = static_cast<std::ptrdiff_t>(y + r) - pad;
              const auto xx = static_cast<std::ptrdiff_t>(x + c) - pad;
              if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) ||
                  xx >= static_cast<std::ptrdiff_t>(w))
                continue;
              acc += weights[((o * m + i) * k + r) * k + c] *
                     input.data[(i * h + static_cast<std::size_t>(yy)) * w +
                                static_cast<std::size_t>(xx)];
            }
        out.data[(o * h + y) * w + x] = acc;
      }
  return out;
}

Tensor conv_forward_linear(const ConvLayer& layer, const Tensor& input) {
  Tensor y = reference::convolve(layer.weights, layer.out_channels, layer.kernel_size, input);
  if (!layer.comp) return y;
  const MatrixXd& g = *layer.comp;
  const std::size_t plane = y.size() / y.dim(0);
  Tensor z({static_cast<std::size_t>(g.cols()), y.dim(1), y.dim(2)});
  for (Index k = 0; k < g.cols(); ++k)
    for (std::size_t p = 0; p < plane; ++p) {
      double acc = 0.0;
      for (Index j = 0; j < g.rows(); ++j)
        acc += y.data[static_cast<std::size_t>(j) * plane + p] * g(j, k);
      z.data[static_cast<std::size_t>(k) * plane + p] = acc;
    }
  return z;
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  Tensor z = reference::conv_forward_linear(layer, input);
  if (layer.activation == Activation::ReLU)
    for (double& v : z.data) v = v > 0.0 ? v : 0.0;
  return z;
}

Tensor forward(const Network& net, const Tensor& input) {
  Tensor x = input;
  for (const auto& layer : net.layers) x = reference::conv_forward(layer, x);
  return x;
}

SelectionResult fp_omp_keep(const FilterMatrix& filters, std::size_t keep) {
  const auto n = static_cast<std::size_t>(filters.cols());
  if (keep < 1 || keep > n) throw InvalidArgument("retained count out of range");
  const MatrixXd unit = filters.normalized();
  const double ridge = default_ridge(unit);

  std::vector<std::size_t> selected;
  std::vector<char> in_set(n, 0);
  MatrixXd residual = unit;
  while (selected.size() < keep) {
    Eigen::VectorXd scores = Eigen::VectorXd::Constant(static_cast<Index>(n), -1.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (in_set[i]) continue;
      double xi = 0.0;
      for (Index j = 0; j < residual.cols(); ++j)
        xi += std::abs(residual.col(j).dot(unit.col(static_cast<Index>(i))));
      scores(static_cast<Index>(i)) = xi;
    }
    const std::size_t best = first_near_max(scores);
    selected.push_back(best);
    in_set[best] = 1;

    MatrixXd a_s(unit.rows(), static_cast<Index>(selected.size()));
    for (std::size_t l = 0; l < selected.size(); ++l)
      a_s.col(static_cast<Index>(l)) = unit.col(static_cast<Index>(selected[l]));
    const MatrixXd lambda = least_squares_lambda(a_s, unit, ridge);
    residual = unit - a_s * lambda;
  }

  SelectionResult out = solve_selection(filters, selected, default_ridge(filters.columns()));
  out.order = std::move(selected);
  return out;
}

LayerErrors final_output_errors(const Network& current, const Candidates& candidates,
                                const Dataset& data, ErrorPoint point, std::size_t* passes) {
  const std::size_t depth = current.depth();
  if (candidates.size() != depth) throw DimensionError("one candidate slot per layer required");
  auto run = [&](const Network& net, const Tensor& x) {
    Tensor h = x;
    for (std::size_t c = 0; c + 1 < net.depth(); ++c) h = reference::conv_forward(net.layers[c], h);
    return point == ErrorPoint::PreActivation ? reference::conv_forward_linear(net.layers.back(), h)
                                              : reference::conv_forward(net.layers.back(), h);
  };

  LayerErrors out;
  out.errors.assign(depth, 0.0);
  for (const auto& example : data.examples) {
    const Tensor ref = run(current, example);
    const double norm = l2_norm(ref);
    if (norm == 0.0) ++out.zero_reference;
    for (std::size_t l = 0; l < depth; ++l) {
      Network swapped = current;
      if (candidates[l]) swapped.layers[l] = *candidates[l];
      const Tensor hyp = run(swapped, example);
      if (passes) ++*passes;
      if (norm != 0.0) out.errors[l] += l2_distance(ref, hyp) / norm;
    }
  }
  for (std::size_t l = 0; l < depth; ++l)
    if (!candidates[l]) out.errors[l] = std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace hprune::reference
