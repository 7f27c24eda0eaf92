#include "hprune/sparse_approx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>

#include "hprune/error.hpp"

namespace hprune {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Cholesky of a ridged Gram; rejects numerically singular systems.
Eigen::LLT<MatrixXd> factor_gram(const MatrixXd& gram) {
  Eigen::LLT<MatrixXd> llt(gram);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  const double floor = std::numeric_limits<double>::epsilon() * static_cast<double>(gram.rows());
  if (llt.info() != Eigen::Success || !(rcond > floor)) {
    const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    throw SingularError("Gram matrix is numerically singular (condition estimate " +
                            std::to_string(cond) + ")",
                        cond);
  }
  return llt;
}

MatrixXd ridged_gram(const MatrixXd& a, double ridge) {
  MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += ridge;
  return gram;
}

MatrixXd drop_index(const MatrixXd& m, Index k) {
  const Index n = m.rows();
  MatrixXd out(n - 1, n - 1);
  const Index tail = n - k - 1;
  out.topLeftCorner(k, k) = m.topLeftCorner(k, k);
  out.topRightCorner(k, tail) = m.topRightCorner(k, tail);
  out.bottomLeftCorner(tail, k) = m.bottomLeftCorner(tail, k);
  out.bottomRightCorner(tail, tail) = m.bottomRightCorner(tail, tail);
  return out;
}

MatrixXd drop_column(const MatrixXd& m, Index k) {
  MatrixXd out(m.rows(), m.cols() - 1);
  out.leftCols(k) = m.leftCols(k);
  out.rightCols(m.cols() - k - 1) = m.rightCols(m.cols() - k - 1);
  return out;
}

MatrixXd select_rows(const MatrixXd& m, std::span<const std::size_t> rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(static_cast<Index>(rows[r]));
  return out;
}

void check_keep(std::size_t keep, std::size_t n) {
  if (keep < 1 || keep > n)
    throw InvalidArgument("retained count " + std::to_string(keep) + " outside [1, " +
                          std::to_string(n) + "]");
}

}  // namespace

std::size_t first_near_max(const VectorXd& scores, double rel_tol) {
  const double top = scores.maxCoeff();
  const double cut = top - rel_tol * std::abs(top);
  for (Index i = 0; i < scores.size(); ++i)
    if (scores(i) >= cut) return static_cast<std::size_t>(i);
  return 0;
}

FilterMatrix::FilterMatrix(MatrixXd columns) : columns_(std::move(columns)) {
  if (columns_.cols() == 0 || columns_.rows() == 0)
    throw InvalidArgument("filter matrix needs at least one filter");
  col_norms_ = columns_.colwise().norm().transpose();
  for (Index j = 0; j < col_norms_.size(); ++j)
    if (!(col_norms_(j) > 1e-300))
      throw InvalidArgument("filter " + std::to_string(j) + " is the zero vector");
}

MatrixXd FilterMatrix::normalized() const {
  return columns_ * col_norms_.cwiseInverse().asDiagonal();
}

MatrixXd FilterMatrix::select(std::span<const std::size_t> indices) const {
  MatrixXd out(rows(), static_cast<Index>(indices.size()));
  for (std::size_t l = 0; l < indices.size(); ++l)
    out.col(static_cast<Index>(l)) = columns_.col(static_cast<Index>(indices[l]));
  return out;
}

FilterMatrix flatten_filters(const ConvLayer& layer, FilterDirection direction) {
  layer.validate();
  const std::size_t kk = layer.kernel_size * layer.kernel_size;
  if (direction == FilterDirection::Output) {
    const std::size_t rows = layer.filter_size();
    MatrixXd a(static_cast<Index>(rows), static_cast<Index>(layer.out_channels));
    for (std::size_t j = 0; j < layer.out_channels; ++j)
      for (std::size_t r = 0; r < rows; ++r)
        a(static_cast<Index>(r), static_cast<Index>(j)) = layer.weights[j * rows + r];
    return FilterMatrix(std::move(a));
  }
  const std::size_t rows = layer.out_channels * kk;
  MatrixXd a(static_cast<Index>(rows), static_cast<Index>(layer.in_channels));
  for (std::size_t i = 0; i < layer.in_channels; ++i)
    for (std::size_t j = 0; j < layer.out_channels; ++j)
      for (std::size_t q = 0; q < kk; ++q)
        a(static_cast<Index>(j * kk + q), static_cast<Index>(i)) =
            layer.weights[(j * layer.in_channels + i) * kk + q];
  return FilterMatrix(std::move(a));
}

std::vector<std::size_t> SelectionResult::removed(std::size_t n) const {
  std::vector<std::size_t> out;
  std::size_t r = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (r < retained.size() && retained[r] == j) {
      ++r;
      continue;
    }
    out.push_back(j);
  }
  return out;
}

double default_ridge(const MatrixXd& columns) {
  return 1e-10 * columns.squaredNorm() / static_cast<double>(columns.cols());
}

std::size_t retained_target(std::size_t n, double beta) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw InvalidArgument("pruning fraction must lie in [0, 1), got " + std::to_string(beta));
  const double t = std::round((1.0 - beta) * static_cast<double>(n));
  if (t < 1.0) throw InvalidArgument("pruning fraction leaves no filter");
  return std::min(n, static_cast<std::size_t>(t));
}

MatrixXd least_squares_lambda(const MatrixXd& a_sub, const MatrixXd& b, double ridge) {
  if (a_sub.cols() < 1) throw InvalidArgument("least squares needs a non-empty retained set");
  if (a_sub.rows() != b.rows()) throw DimensionError("A_S and B row counts differ");
  const auto llt = factor_gram(ridged_gram(a_sub, ridge));
  return llt.solve(a_sub.transpose() * b);
}

ErrorBreakdown total_error(const MatrixXd& a_sub, const MatrixXd& b, const MatrixXd& lambda) {
  if (lambda.rows() != a_sub.cols() || lambda.cols() != b.cols() || a_sub.rows() != b.rows())
    throw DimensionError("lambda must be |S| x n and A_S, B must share rows");
  ErrorBreakdown out;
  out.per_target = (b - a_sub * lambda).colwise().squaredNorm().transpose();
  out.total = out.per_target.sum();
  return out;
}

VectorXd GramBlocks::off_diagonal(Index k) const {
  const Index n = size();
  VectorXd g(n - 1);
  g.head(k) = inverse.col(k).head(k);
  g.tail(n - k - 1) = inverse.col(k).tail(n - k - 1);
  return g;
}

GramBlocks make_gram_blocks(const MatrixXd& a_sub, double ridge) {
  if (a_sub.cols() < 1) throw InvalidArgument("Gram blocks need at least one column");
  GramBlocks blocks;
  blocks.ridge = ridge;
  blocks.gram = ridged_gram(a_sub, ridge);
  const auto llt = factor_gram(blocks.gram);
  blocks.inverse = llt.solve(MatrixXd::Identity(a_sub.cols(), a_sub.cols()));
  blocks.inverse = 0.5 * (blocks.inverse + blocks.inverse.transpose()).eval();
  return blocks;
}

VectorXd elimination_scores(const MatrixXd& a_sub, const MatrixXd& b, const GramBlocks& blocks) {
  const Index s = a_sub.cols();
  if (blocks.size() != s || a_sub.rows() != b.rows())
    throw DimensionError("Gram blocks do not match A_S");
  const double entry = a_sub.col(0).squaredNorm() + blocks.ridge;
  if (std::abs(entry - blocks.gram(0, 0)) > 1e-8 * std::max(std::abs(entry), 1e-300))
    throw ConsistencyError("Gram blocks were built from a different matrix");

  VectorXd u(s);
  for (Index k = 0; k < s; ++k) {
    const double gamma = blocks.gamma(k);
    if (!(gamma > 0.0))
      throw PositiveDefinitenessError("gamma_" + std::to_string(k) + " is not positive");
    VectorXd d = a_sub.col(k) * gamma;
    if (s > 1) d += drop_column(a_sub, k) * blocks.off_diagonal(k);
    u(k) = (b.transpose() * d).squaredNorm() / gamma;
  }
  return u;
}

GramBlocks downdate_gram(const GramBlocks& blocks, Index k) {
  const Index s = blocks.size();
  if (k < 0 || k >= s) throw InvalidArgument("downdate index out of range");
  if (s < 2) throw InvalidArgument("cannot downdate a 1x1 Gram");
  const VectorXd g = blocks.off_diagonal(k);
  const double gamma = blocks.gamma(k);
  if (!(gamma > 0.0)) throw PositiveDefinitenessError("gamma is not positive");
  GramBlocks out;
  out.ridge = blocks.ridge;
  out.gram = drop_index(blocks.gram, k);
  out.inverse = drop_index(blocks.inverse, k);
  out.inverse.noalias() -= (g * g.transpose()) / gamma;
  return out;
}

SelectionResult solve_selection(const FilterMatrix& filters, std::vector<std::size_t> retained,
                                double ridge) {
  const auto n = static_cast<std::size_t>(filters.cols());
  std::sort(retained.begin(), retained.end());
  if (retained.empty()) throw InvalidArgument("retained set is empty");
  if (std::adjacent_find(retained.begin(), retained.end()) != retained.end() ||
      retained.back() >= n)
    throw ConsistencyError("retained indices must be distinct and in range");

  SelectionResult out;
  out.retained = std::move(retained);
  const auto s = static_cast<Index>(out.retained.size());
  out.lambda = MatrixXd::Zero(s, static_cast<Index>(n));
  out.per_target_error = VectorXd::Zero(static_cast<Index>(n));

  for (Index l = 0; l < s; ++l) out.lambda(l, static_cast<Index>(out.retained[l])) = 1.0;
  const auto removed = out.removed(n);
  if (!removed.empty()) {
    const MatrixXd a_s = filters.select(out.retained);
    const MatrixXd b = filters.select(removed);
    const MatrixXd lam = least_squares_lambda(a_s, b, ridge);
    const VectorXd err = (b - a_s * lam).colwise().squaredNorm().transpose();
    for (std::size_t r = 0; r < removed.size(); ++r) {
      out.lambda.col(static_cast<Index>(removed[r])) = lam.col(static_cast<Index>(r));
      out.per_target_error(static_cast<Index>(removed[r])) = err(static_cast<Index>(r));
    }
  }
  out.residual_error = out.per_target_error.sum();
  return out;
}

SelectionResult fp_omp(const FilterMatrix& filters, double beta) {
  return fp_omp_keep(filters, retained_target(static_cast<std::size_t>(filters.cols()), beta));
}

SelectionResult fp_omp_keep(const FilterMatrix& filters, std::size_t keep) {
  const auto n = static_cast<std::size_t>(filters.cols());
  check_keep(keep, n);

  // Residual projections live in Gram space: R_j . f_i = G_ij - G_iS lambda_Sj.
  const MatrixXd unit = filters.normalized();
  const MatrixXd gram = unit.transpose() * unit;
  const double ridge = default_ridge(unit);
  MatrixXd proj = gram;

  std::vector<std::size_t> selected;
  std::vector<char> in_set(n, 0);
  while (selected.size() < keep) {
    VectorXd xi = VectorXd::Constant(static_cast<Index>(n), -1.0);
    for (std::size_t i = 0; i < n; ++i)
      if (!in_set[i]) xi(static_cast<Index>(i)) = proj.row(static_cast<Index>(i)).cwiseAbs().sum();
    const std::size_t best = first_near_max(xi);
    selected.push_back(best);
    in_set[best] = 1;

    const MatrixXd gram_ss = select_rows(gram, selected)(Eigen::all, selected);
    MatrixXd system = gram_ss;
    system.diagonal().array() += ridge;
    const MatrixXd lambda = factor_gram(system).solve(select_rows(gram, selected));
    proj = gram - gram(Eigen::all, selected) * lambda;
  }

  SelectionResult out = solve_selection(filters, selected, default_ridge(filters.columns()));
  out.order = std::move(selected);
  return out;
}

SelectionResult fp_backward(const FilterMatrix& filters, double beta,
                            const BackwardOptions& options) {
  return fp_backward_keep(filters, retained_target(static_cast<std::size_t>(filters.cols()), beta),
                          options);
}

SelectionResult fp_backward_keep(const FilterMatrix& filters, std::size_t keep,
                                 const BackwardOptions& options) {
  const auto n = static_cast<std::size_t>(filters.cols());
  check_keep(keep, n);
  const MatrixXd& a = filters.columns();
  const double ridge = options.ridge.value_or(default_ridge(a));

  std::vector<std::size_t> working(n);
  std::iota(working.begin(), working.end(), std::size_t{0});
  std::vector<std::size_t> eliminated;
  if (keep == n) {
    SelectionResult out = solve_selection(filters, working, ridge);
    return out;
  }

  // B stays fixed at all original filters, so A_S^T B is a row subset of A^T A.
  const MatrixXd cross = a.transpose() * a;
  GramBlocks blocks = make_gram_blocks(a, ridge);

  while (working.size() > keep) {
    if (options.fresh_inverse_each_step && working.size() < n)
      blocks = make_gram_blocks(filters.select(working), ridge);

    const MatrixXd lambda = blocks.inverse * select_rows(cross, working);
    const auto s = static_cast<Index>(working.size());
    VectorXd u(s);
    for (Index k = 0; k < s; ++k) {
      const double gamma = blocks.gamma(k);
      if (!(gamma > 0.0))
        throw PositiveDefinitenessError("gamma for filter " + std::to_string(working[k]) +
                                        " is not positive");
      u(k) = lambda.row(k).squaredNorm() / gamma;
    }
    // working is kept ascending, so the first minimum is the smallest index.
    Index k_star = 0;
    for (Index k = 1; k < s; ++k)
      if (u(k) < u(k_star)) k_star = k;

    BackwardStep step;
    if (options.trace) {
      step.retained_before = working;
      step.scores = u;
      step.removed_position = static_cast<std::size_t>(k_star);
      step.removed = working[k_star];
    }
    eliminated.push_back(working[k_star]);
    working.erase(working.begin() + k_star);
    blocks = downdate_gram(blocks, k_star);
    if (options.trace) {
      step.inverse_after = blocks.inverse;
      options.trace->push_back(std::move(step));
    }
  }

  SelectionResult out = solve_selection(filters, working, ridge);
  out.order = std::move(eliminated);
  return out;
}

}  // namespace hprune
