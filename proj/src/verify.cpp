#include "hprune/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "hprune/compensation.hpp"
#include "hprune/error.hpp"
#include "hprune/reference.hpp"

namespace hprune::verify {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

MatrixXd thin_q(const MatrixXd& a) {
  Eigen::HouseholderQR<MatrixXd> qr(a);
  return qr.householderQ() * MatrixXd::Identity(a.rows(), a.cols());
}

MatrixXd without_column(const MatrixXd& a, Index k) {
  MatrixXd out(a.rows(), a.cols() - 1);
  out << a.leftCols(k), a.rightCols(a.cols() - k - 1);
  return out;
}

MatrixXd columns_of(const MatrixXd& a, const std::vector<std::size_t>& idx) {
  MatrixXd out(a.rows(), static_cast<Index>(idx.size()));
  for (std::size_t l = 0; l < idx.size(); ++l) out.col(static_cast<Index>(l)) = a.col(static_cast<Index>(idx[l]));
  return out;
}

SuiteResult start(std::string name, double tolerance) {
  SuiteResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  return r;
}

// Records one trial's deviation and the first seed that broke tolerance.
void record(SuiteResult& r, double deviation, std::uint64_t trial) {
  if (!(deviation <= r.max_deviation)) r.max_deviation = deviation;
  if (!(deviation <= r.tolerance) && r.passed) {
    r.passed = false;
    r.failing_seed = trial;
  }
  ++r.trials;
}

// Well-conditioned full-column-rank instance with rows >= cols.
MatrixXd conditioned_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  for (;;) {
    MatrixXd a = random_matrix(rng, rows, cols);
    if (condition_number(a.transpose() * a) < 1e8) return a;
  }
}

MatrixXd backward_instance(std::mt19937_64& rng) {
  const auto n = static_cast<Index>(uniform(rng, 2, 10));
  const auto rows = static_cast<Index>(uniform(rng, static_cast<std::size_t>(n), 3 * n + 4));
  return conditioned_matrix(rng, rows, n);
}

}  // namespace

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

MatrixXd random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = dist(rng);
  return t;
}

ConvLayer random_layer(std::mt19937_64& rng, std::size_t in, std::size_t out, std::size_t kernel,
                       Activation act, bool with_comp) {
  ConvLayer layer(in, out, kernel, act);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(layer.filter_size())));
  for (double& w : layer.weights) w = dist(rng);
  if (with_comp) {
    const auto n = static_cast<Index>(out);
    layer.comp = MatrixXd::Identity(n, n) + 0.3 * random_matrix(rng, n, n) / std::sqrt(double(n));
  }
  return layer;
}

double scratch_error(const MatrixXd& a, const MatrixXd& b) {
  const MatrixXd q = thin_q(a);
  return (b - q * (q.transpose() * b)).squaredNorm();
}

double scratch_error_increase(const MatrixXd& a, const MatrixXd& b, Index k) {
  const MatrixXd q = thin_q(a);
  MatrixXd diff = q * (q.transpose() * b);
  if (a.cols() > 1) {
    const MatrixXd q_minus = thin_q(without_column(a, k));
    diff -= q_minus * (q_minus.transpose() * b);
  }
  return diff.squaredNorm();
}

Index brute_force_removal(const MatrixXd& a, const MatrixXd& b) {
  Index best = 0;
  double best_value = kInf;
  for (Index k = 0; k < a.cols(); ++k) {
    const double v = scratch_error_increase(a, b, k);
    if (v < best_value) {
      best_value = v;
      best = k;
    }
  }
  return best;
}

double condition_number(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) == 0.0) return kInf;
  return s(0) / s(s.size() - 1);
}

SuiteResult elimination_score_suite(std::uint64_t seed, std::size_t trials) {
  SuiteResult r = start("theorem2", 1e-8);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto rng = trial_rng(seed, t);
    const auto cols = static_cast<Index>(uniform(rng, 4, 16));
    const auto rows = static_cast<Index>(uniform(rng, std::max<std::size_t>(8, cols), 64));
    const MatrixXd a = conditioned_matrix(rng, rows, cols);
    const MatrixXd b = random_matrix(rng, rows, static_cast<Index>(uniform(rng, 1, 8)));

    const Eigen::VectorXd u = elimination_scores(a, b, make_gram_blocks(a, 0.0));
    double dev = 0.0;
    for (Index k = 0; k < cols; ++k) {
      const double scratch = scratch_error_increase(a, b, k);
      dev = std::max(dev, std::abs(u(k) - scratch) / std::max(scratch, 1e-300));
    }
    record(r, dev, t);
  }
  return r;
}

SuiteResult compensation_suite(std::uint64_t seed, std::size_t trials) {
  SuiteResult r = start("theorem1", 1e-8);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto rng = trial_rng(seed, t);
    const std::size_t m = uniform(rng, 1, 8);
    const std::size_t n = uniform(rng, 2, 8);
    const std::size_t k = uniform(rng, 0, 1) ? 3 : 1;
    const ConvLayer layer = random_layer(rng, m, n, k, Activation::Identity, uniform(rng, 0, 1));
    const std::size_t drop = uniform(rng, 1, std::min<std::size_t>(3, n - 1));

    const FilterMatrix filters = flatten_filters(layer, FilterDirection::Output);
    const SelectionResult sel = t % 2 == 0 ? fp_omp_keep(filters, n - drop)
                                           : fp_backward_keep(filters, n - drop);
    const MatrixXd g = compensation_or_identity(layer);
    const CompensationUpdate upd = compensate_output(g, sel, filters);
    const ConvLayer pruned = apply_pruning(layer, sel, upd);

    double dev = 0.0;
    for (int trial_input = 0; trial_input < 5; ++trial_input) {
      const std::size_t h = uniform(rng, 2, 7), w = uniform(rng, 2, 7);
      const Tensor x = random_tensor(rng, {m, h, w});
      const Tensor z = conv_forward_linear(layer, x);
      const Tensor z_pruned = conv_forward_linear(pruned, x);
      Tensor rhs(z.shape);
      const std::size_t plane = h * w;
      for (std::size_t q = 0; q < upd.removed.size(); ++q) {
        const Eigen::VectorXd& eps = upd.epsilons[q];
        const Tensor conv = reference::convolve(
            std::span<const double>(eps.data(), static_cast<std::size_t>(eps.size())), 1, k, x);
        for (Index col = 0; col < g.cols(); ++col) {
          const double coeff = g(static_cast<Index>(upd.removed[q]), col);
          for (std::size_t p = 0; p < plane; ++p)
            rhs.data[static_cast<std::size_t>(col) * plane + p] += coeff * conv.data[p];
        }
      }
      double worst = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i)
        worst = std::max(worst, std::abs(z.data[i] - z_pruned.data[i] - rhs.data[i]));
      dev = std::max(dev, worst / std::max(max_abs(z), 1e-300));
    }
    record(r, dev, t);
  }
  return r;
}

SuiteResult omp_suite(std::uint64_t seed, std::size_t trials) {
  SuiteResult r = start("omp-oracle", 1e-8);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto rng = trial_rng(seed, t);
    const auto n = static_cast<Index>(uniform(rng, 2, 12));
    const auto rows = static_cast<Index>(uniform(rng, 4, 40));
    const FilterMatrix filters(random_matrix(rng, rows, n));
    const std::size_t keep = uniform(rng, 1, static_cast<std::size_t>(n));

    const SelectionResult fast = fp_omp_keep(filters, keep);
    const SelectionResult literal = reference::fp_omp_keep(filters, keep);
    double dev = kInf;
    if (fast.order == literal.order) {
      const double scale = std::max(1.0, literal.lambda.cwiseAbs().maxCoeff());
      dev = (fast.lambda - literal.lambda).cwiseAbs().maxCoeff() / scale;
    }
    record(r, dev, t);
  }
  return r;
}

SuiteResult backward_suite(std::uint64_t seed, std::size_t trials) {
  SuiteResult r = start("backward-oracle", 0.0);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto rng = trial_rng(seed, t);
    const MatrixXd a = backward_instance(rng);
    const auto n = static_cast<std::size_t>(a.cols());
    const std::size_t keep = uniform(rng, 1, n - 1);

    std::vector<BackwardStep> steps;
    fp_backward_keep(FilterMatrix(a), keep, {.ridge = 0.0, .trace = &steps});
    double mismatches = 0.0;
    for (const auto& step : steps) {
      const Index expected = brute_force_removal(columns_of(a, step.retained_before), a);
      if (static_cast<std::size_t>(expected) != step.removed_position) mismatches += 1.0;
    }
    record(r, mismatches, t);
  }
  return r;
}

SuiteResult downdate_suite(std::uint64_t seed, std::size_t trials) {
  SuiteResult r = start("gram-downdate", 1e-8);
  for (std::uint64_t t = 0; t < trials; ++t) {
    // Same instances as backward_suite.
    auto rng = trial_rng(seed, t);
    const MatrixXd a = backward_instance(rng);
    const auto n = static_cast<std::size_t>(a.cols());
    const std::size_t keep = uniform(rng, 1, n - 1);

    std::vector<BackwardStep> steps;
    fp_backward_keep(FilterMatrix(a), keep, {.ridge = 0.0, .trace = &steps});
    double dev = 0.0;
    for (const auto& step : steps) {
      std::vector<std::size_t> after = step.retained_before;
      after.erase(after.begin() + static_cast<std::ptrdiff_t>(step.removed_position));
      const MatrixXd a_s = columns_of(a, after);
      const MatrixXd fresh = (a_s.transpose() * a_s).fullPivLu().inverse();
      dev = std::max(dev, (step.inverse_after - fresh).cwiseAbs().maxCoeff() /
                              fresh.cwiseAbs().maxCoeff());
    }
    record(r, dev, t);
  }
  return r;
}

SuiteResult tree_suite(std::uint64_t seed, std::size_t trials, std::size_t max_layers) {
  SuiteResult r = start("tree-oracle", 1e-10);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto rng = trial_rng(seed, t);
    const std::size_t depth = uniform(rng, 1, max_layers);
    const std::size_t m0 = uniform(rng, 1, 4);
    const std::size_t side = uniform(rng, 3, 6);
    Network net;
    std::size_t in = m0;
    for (std::size_t c = 0; c < depth; ++c) {
      const std::size_t n = uniform(rng, 2, 8);
      const Activation act = uniform(rng, 0, 1) ? Activation::ReLU : Activation::Identity;
      net.layers.push_back(random_layer(rng, in, n, uniform(rng, 0, 1) ? 3 : 1, act,
                                        uniform(rng, 0, 3) == 0));
      in = n;
    }
    Dataset data;
    for (int i = 0; i < 20; ++i) data.examples.push_back(random_tensor(rng, {m0, side, side}));

    PruneConfig cfg;
    cfg.alpha = uniform(rng, 1, 3);
    cfg.beta = 0.2 + 0.4 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    cfg.fp_method = uniform(rng, 0, 1) ? FilterMethod::Backward : FilterMethod::OMP;
    cfg.error_point = uniform(rng, 0, 1) ? ErrorPoint::PostActivation : ErrorPoint::PreActivation;

    PassCounter counter;
    std::vector<std::vector<double>> naive;
    bool counts_ok = true;
    PruneHooks hooks;
    hooks.passes = &counter;
    hooks.on_round = [&](std::size_t round, const Network& cur, const Candidates& cands) {
      if (counter.passes.load() != round * data.size()) counts_ok = false;
      std::size_t passes = 0;
      naive.push_back(
          reference::final_output_errors(cur, cands, data, cfg.error_point, &passes).errors);
      if (passes != cur.depth() * data.size()) counts_ok = false;
    };
    const PruneOutcome outcome = hbgts(net, data, cfg, hooks);
    if (counter.passes.load() != naive.size() * data.size()) counts_ok = false;

    double dev = counts_ok ? 0.0 : kInf;
    for (std::size_t round = 0; round < outcome.rounds.size(); ++round) {
      const auto& fast = outcome.rounds[round].errors;
      for (std::size_t l = 0; l < fast.size(); ++l) {
        if (std::isinf(fast[l]) || std::isinf(naive[round][l])) {
          if (std::isinf(fast[l]) != std::isinf(naive[round][l])) dev = kInf;
          continue;
        }
        dev = std::max(dev, std::abs(fast[l] - naive[round][l]));
      }
    }
    record(r, dev, t);
  }
  return r;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"theorem1",        "theorem2",    "omp-oracle",
                                              "backward-oracle", "tree-oracle", "all"};
  return names;
}

std::vector<SuiteResult> run_suite(std::string_view name, std::uint64_t seed, std::size_t trials) {
  std::vector<SuiteResult> out;
  const bool all = name == "all";
  if (all || name == "theorem1") out.push_back(compensation_suite(seed, trials));
  if (all || name == "theorem2") out.push_back(elimination_score_suite(seed, trials));
  if (all || name == "omp-oracle") out.push_back(omp_suite(seed, trials));
  if (all || name == "backward-oracle") {
    out.push_back(backward_suite(seed, trials));
    out.push_back(downdate_suite(seed, trials));
  }
  if (all || name == "tree-oracle") out.push_back(tree_suite(seed, trials));
  if (out.empty()) throw InvalidArgument("unknown verification suite '" + std::string(name) + "'");
  return out;
}

}  // namespace hprune::verify
