#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hprune/conv.hpp"
#include "hprune/layer_select.hpp"
#include "hprune/sparse_approx.hpp"

// Brute-force oracles and the randomized suites built on them.
namespace hprune::verify {

struct SuiteResult {
  std::string name;
  std::size_t trials = 0;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::optional<std::uint64_t> failing_seed;  // first trial seed over tolerance
};

// Per-trial generator: trial t of a suite seeded with s draws from (s, t) only.
std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial);

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols);
Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape);
ConvLayer random_layer(std::mt19937_64& rng, std::size_t in, std::size_t out, std::size_t kernel,
                       Activation act, bool with_comp);

// ||P_A B - P_{A'} B||_F^2 for A' = A without column k: the exact error
// increase from dropping column k, from thin QR factorizations.
double scratch_error_increase(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::Index k);
// min_lambda ||B - A lambda||_F^2 via QR.
double scratch_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
// Column whose removal leaves the smallest scratch error; ties to the lowest.
Eigen::Index brute_force_removal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
// 2-norm condition number via SVD.
double condition_number(const Eigen::MatrixXd& m);

SuiteResult elimination_score_suite(std::uint64_t seed, std::size_t trials);
SuiteResult compensation_suite(std::uint64_t seed, std::size_t trials);
SuiteResult omp_suite(std::uint64_t seed, std::size_t trials);
// Counts elimination mismatches against brute force; tolerance 0.
SuiteResult backward_suite(std::uint64_t seed, std::size_t trials);
// Downdated inverse vs a fresh inverse after every elimination.
SuiteResult downdate_suite(std::uint64_t seed, std::size_t trials);
// Tree propagation vs naive passes, every round of a pruning run.
SuiteResult tree_suite(std::uint64_t seed, std::size_t trials, std::size_t max_layers = 6);

const std::vector<std::string>& suite_names();  // includes "all"
// Throws InvalidArgument on an unknown name.
std::vector<SuiteResult> run_suite(std::string_view name, std::uint64_t seed, std::size_t trials);

}  // namespace hprune::verify
