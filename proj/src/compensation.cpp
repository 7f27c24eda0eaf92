#include "hprune/compensation.hpp"

#include <algorithm>
#include <string>

#include "hprune/error.hpp"

namespace hprune {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

void check_selection(const SelectionResult& sel, const FilterMatrix& filters) {
  const auto n = static_cast<std::size_t>(filters.cols());
  if (sel.retained.empty()) throw ConsistencyError("selection retains no filter");
  if (!std::is_sorted(sel.retained.begin(), sel.retained.end()) ||
      std::adjacent_find(sel.retained.begin(), sel.retained.end()) != sel.retained.end() ||
      sel.retained.back() >= n)
    throw ConsistencyError("retained indices must be sorted, distinct and below " +
                           std::to_string(n));
  if (sel.lambda.rows() != static_cast<Index>(sel.retained.size()) ||
      sel.lambda.cols() != static_cast<Index>(n))
    throw ConsistencyError("lambda is " + std::to_string(sel.lambda.rows()) + "x" +
                           std::to_string(sel.lambda.cols()) + ", expected " +
                           std::to_string(sel.retained.size()) + "x" + std::to_string(n));
}

std::vector<Eigen::VectorXd> residual_vectors(const SelectionResult& sel,
                                              const FilterMatrix& filters,
                                              const std::vector<std::size_t>& removed) {
  const MatrixXd a_s = filters.select(sel.retained);
  std::vector<Eigen::VectorXd> eps;
  eps.reserve(removed.size());
  for (std::size_t j : removed)
    eps.push_back(filters.columns().col(static_cast<Index>(j)) -
                  a_s * sel.lambda.col(static_cast<Index>(j)));
  return eps;
}

}  // namespace

CompensationUpdate compensate_output(const MatrixXd& g, const SelectionResult& sel,
                                     const FilterMatrix& filters) {
  check_selection(sel, filters);
  if (g.rows() != filters.cols())
    throw ConsistencyError("1x1 map needs one row per filter");

  CompensationUpdate out;
  out.retained = sel.retained;
  out.removed = sel.removed(static_cast<std::size_t>(filters.cols()));
  out.g_prime.resize(static_cast<Index>(sel.retained.size()), g.cols());
  for (std::size_t l = 0; l < sel.retained.size(); ++l) {
    auto row = out.g_prime.row(static_cast<Index>(l));
    row = g.row(static_cast<Index>(sel.retained[l]));
    for (std::size_t j : out.removed)
      row += sel.lambda(static_cast<Index>(l), static_cast<Index>(j)) *
             g.row(static_cast<Index>(j));
  }
  out.epsilons = residual_vectors(sel, filters, out.removed);
  return out;
}

CompensationUpdate compensate_input(const MatrixXd& g, const SelectionResult& sel,
                                    const FilterMatrix& filters) {
  check_selection(sel, filters);
  if (g.cols() != filters.cols())
    throw ConsistencyError("1x1 map needs one column per filter");

  CompensationUpdate out;
  out.retained = sel.retained;
  out.removed = sel.removed(static_cast<std::size_t>(filters.cols()));
  out.g_prime.resize(g.rows(), static_cast<Index>(sel.retained.size()));
  for (std::size_t l = 0; l < sel.retained.size(); ++l) {
    auto col = out.g_prime.col(static_cast<Index>(l));
    col = g.col(static_cast<Index>(sel.retained[l]));
    for (std::size_t j : out.removed)
      col += sel.lambda(static_cast<Index>(l), static_cast<Index>(j)) *
             g.col(static_cast<Index>(j));
  }
  out.epsilons = residual_vectors(sel, filters, out.removed);
  return out;
}

MatrixXd compensation_or_identity(const ConvLayer& layer) {
  if (layer.comp) return *layer.comp;
  const auto n = static_cast<Index>(layer.out_channels);
  return MatrixXd::Identity(n, n);
}

ConvLayer apply_pruning(const ConvLayer& layer, const SelectionResult& sel,
                        const CompensationUpdate& comp) {
  layer.validate();
  if (sel.retained.empty()) throw InvalidArgument("cannot prune every filter of a layer");
  if (comp.retained != sel.retained)
    throw ConsistencyError("compensation and selection disagree on the retained set");
  if (sel.retained.back() >= layer.out_channels)
    throw ConsistencyError("retained index exceeds the layer's filter count");
  const auto width = static_cast<Index>(layer.width());
  if (comp.g_prime.rows() != static_cast<Index>(sel.retained.size()) ||
      comp.g_prime.cols() != width)
    throw ConsistencyError("compensated map must be |S| x composite width");

  ConvLayer out(layer.in_channels, sel.retained.size(), layer.kernel_size, layer.activation);
  const std::size_t fs = layer.filter_size();
  for (std::size_t l = 0; l < sel.retained.size(); ++l)
    std::copy_n(layer.weights.begin() + static_cast<std::ptrdiff_t>(sel.retained[l] * fs), fs,
                out.weights.begin() + static_cast<std::ptrdiff_t>(l * fs));
  out.comp = comp.g_prime;
  return out;
}

ConvLayer prune_layer(const ConvLayer& layer, std::size_t keep, FilterMethod method) {
  const FilterMatrix filters = flatten_filters(layer, FilterDirection::Output);
  const SelectionResult sel = method == FilterMethod::OMP ? fp_omp_keep(filters, keep)
                                                          : fp_backward_keep(filters, keep);
  const CompensationUpdate comp =
      compensate_output(compensation_or_identity(layer), sel, filters);
  return apply_pruning(layer, sel, comp);
}

}  // namespace hprune
