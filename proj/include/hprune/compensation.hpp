#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "hprune/conv.hpp"
#include "hprune/sparse_approx.hpp"

namespace hprune {

// Updated 1x1 weights after removing filters, plus the reconstruction error
// vector of every removed filter.
struct CompensationUpdate {
  std::vector<std::size_t> retained;
  std::vector<std::size_t> removed;
  // Output variant: |S| x w, row l belongs to retained[l].
  // Input variant: r x |S|, column l belongs to retained[l].
  Eigen::MatrixXd g_prime;
  // epsilons[q] = f_removed[q] - sum_l lambda(l, removed[q]) f_retained[l].
  std::vector<Eigen::VectorXd> epsilons;
};

// g'_{l,:} = g_{l,:} + sum_{j not in S} lambda_{j,l} g_{j,:} for l in S.
// g has one row per filter of the selection (rows may differ from columns once
// a layer has been pruned before).
CompensationUpdate compensate_output(const Eigen::MatrixXd& g, const SelectionResult& sel,
                                     const FilterMatrix& filters);

// g'_{:,l} = g_{:,l} + sum_{j not in S} lambda_{j,l} g_{:,j} for l in S.
CompensationUpdate compensate_input(const Eigen::MatrixXd& g, const SelectionResult& sel,
                                    const FilterMatrix& filters);

// The layer's 1x1 map, or an identity map when it has none.
Eigen::MatrixXd compensation_or_identity(const ConvLayer& layer);

// Layer restricted to the retained filters with the compensated 1x1 map.
// The composite output width is unchanged.
ConvLayer apply_pruning(const ConvLayer& layer, const SelectionResult& sel,
                        const CompensationUpdate& comp);

// flatten -> select `keep` filters -> compensate -> apply, in one call.
enum class FilterMethod { OMP, Backward };
ConvLayer prune_layer(const ConvLayer& layer, std::size_t keep, FilterMethod method);

}  // namespace hprune
