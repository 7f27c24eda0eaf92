#pragma once

#include <cstddef>
#include <span>

#include "hprune/conv.hpp"
#include "hprune/layer_select.hpp"
#include "hprune/sparse_approx.hpp"
#include "hprune/tensor.hpp"

// Straightforward serial versions of the optimized kernels. They favour
// obviousness over speed and exist to cross-check the parallel code.
namespace hprune::reference {

Tensor convolve(std::span<const double> weights, std::size_t out_channels,
                std::size_t kernel_size, const Tensor& input);
Tensor conv_forward_linear(const ConvLayer& layer, const Tensor& input);
Tensor conv_forward(const ConvLayer& layer, const Tensor& input);
Tensor forward(const Network& net, const Tensor& input);

// Forward selection that keeps the residual matrix R = U - U_S Lambda
// explicitly and re-solves the least-squares fit after every addition.
SelectionResult fp_omp_keep(const FilterMatrix& filters, std::size_t keep);

// Final-output errors computed by running the whole network once per
// (candidate layer, example), swapping in that layer's candidate. Every layer
// costs one pass per example, eligible or not; `passes` counts them.
LayerErrors final_output_errors(const Network& current, const Candidates& candidates,
                                const Dataset& data, ErrorPoint point,
                                std::size_t* passes = nullptr);

}  // namespace hprune::reference
