#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hprune/conv.hpp"

namespace hprune {

enum class FilterDirection { Output, Input };

// Filters flattened into columns. Output direction: n columns of length K^2 m.
// Input direction: m columns of length K^2 n.
class FilterMatrix {
 public:
  // Throws InvalidArgument if any column is numerically zero.
  explicit FilterMatrix(Eigen::MatrixXd columns);

  const Eigen::MatrixXd& columns() const noexcept { return columns_; }
  const Eigen::VectorXd& col_norms() const noexcept { return col_norms_; }
  Eigen::Index rows() const noexcept { return columns_.rows(); }
  Eigen::Index cols() const noexcept { return columns_.cols(); }

  // Copy with every column scaled to unit length.
  Eigen::MatrixXd normalized() const;
  Eigen::MatrixXd select(std::span<const std::size_t> indices) const;

 private:
  Eigen::MatrixXd columns_;
  Eigen::VectorXd col_norms_;
};

FilterMatrix flatten_filters(const ConvLayer& layer, FilterDirection direction);

// Outcome of one filter-pruning call on a single layer.
//
// lambda is |S| x n; lambda(l, j) is the coefficient of retained filter
// retained[l] in the reconstruction of filter j, against the original
// (unnormalized) filters. Columns for retained filters are unit vectors.
struct SelectionResult {
  std::vector<std::size_t> retained;  // sorted ascending
  Eigen::MatrixXd lambda;
  double residual_error = 0.0;
  Eigen::VectorXd per_target_error;
  // Order in which filters were added (OMP) or eliminated (backward).
  std::vector<std::size_t> order;

  std::vector<std::size_t> removed(std::size_t n) const;
};

// Ridge added to every Gram before inversion: 1e-10 * trace(A^T A) / n.
double default_ridge(const Eigen::MatrixXd& columns);

// Retained count for a pruning fraction: round((1 - beta) n) clamped to [1, n].
// Throws InvalidArgument when beta is outside [0, 1) or the count rounds to 0.
std::size_t retained_target(std::size_t n, double beta);

// lambda(:, j) = (A_S^T A_S + ridge I)^{-1} A_S^T B(:, j), each target solved
// independently. Throws SingularError when the ridged Gram is numerically singular.
Eigen::MatrixXd least_squares_lambda(const Eigen::MatrixXd& a_sub, const Eigen::MatrixXd& b,
                                     double ridge = 0.0);

struct ErrorBreakdown {
  double total = 0.0;
  Eigen::VectorXd per_target;
};

// E = sum_j ||B_j - A_S lambda_j||^2.
ErrorBreakdown total_error(const Eigen::MatrixXd& a_sub, const Eigen::MatrixXd& b,
                           const Eigen::MatrixXd& lambda);

// Inverse Gram G = (A_S^T A_S + ridge I)^{-1} together with the ridged Gram
// itself. Per-column blocks: gamma_k = G(k, k), g_k = G(-k, k).
struct GramBlocks {
  Eigen::MatrixXd gram;
  Eigen::MatrixXd inverse;
  double ridge = 0.0;

  Eigen::Index size() const noexcept { return inverse.rows(); }
  double gamma(Eigen::Index k) const { return inverse(k, k); }
  Eigen::VectorXd off_diagonal(Eigen::Index k) const;
};

GramBlocks make_gram_blocks(const Eigen::MatrixXd& a_sub, double ridge = 0.0);

// u_k = sum_j (d_k^T B_j)^2 / gamma_k with d_k = A_{-k} g_k + a_k gamma_k: the
// increase of the total least-squares error when column k is dropped.
Eigen::VectorXd elimination_scores(const Eigen::MatrixXd& a_sub, const Eigen::MatrixXd& b,
                                   const GramBlocks& blocks);

// Inverse Gram with column k deleted, G' = G_k - g_k g_k^T / gamma_k.
GramBlocks downdate_gram(const GramBlocks& blocks, Eigen::Index k);

// Smallest index whose score is within rel_tol * |max| of the maximum. Scores
// that tie in exact arithmetic (e.g. the first pick among two filters) differ
// by rounding noise only, so exact comparison would not honour the tie rule.
std::size_t first_near_max(const Eigen::VectorXd& scores, double rel_tol = 1e-12);

// Forward greedy selection (orthogonal matching pursuit on unit-normalized
// copies, scoring candidates by the summed absolute projection over all
// residuals). Ties go to the smallest index.
SelectionResult fp_omp(const FilterMatrix& filters, double beta);
SelectionResult fp_omp_keep(const FilterMatrix& filters, std::size_t keep);

struct BackwardStep {
  std::vector<std::size_t> retained_before;  // original indices, working order
  Eigen::VectorXd scores;
  std::size_t removed_position = 0;
  std::size_t removed = 0;  // original index
  Eigen::MatrixXd inverse_after;
};

struct BackwardOptions {
  // Re-invert the Gram every iteration instead of downdating.
  bool fresh_inverse_each_step = false;
  // Defaults to default_ridge(filters).
  std::optional<double> ridge;
  // When set, one entry per elimination is appended.
  std::vector<BackwardStep>* trace = nullptr;
};

// Backward elimination: start from all filters, repeatedly drop the one with
// the smallest error increase. Ties go to the smallest original index.
SelectionResult fp_backward(const FilterMatrix& filters, double beta,
                            const BackwardOptions& options = {});
SelectionResult fp_backward_keep(const FilterMatrix& filters, std::size_t keep,
                                 const BackwardOptions& options = {});

// Final coefficients for a retained set against the original filters.
SelectionResult solve_selection(const FilterMatrix& filters, std::vector<std::size_t> retained,
                                double ridge);

}  // namespace hprune
