#include "hprune/layer_select.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <string>

#include "hprune/error.hpp"
#include "hprune/metrics.hpp"

namespace hprune {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// OpenMP loop that rethrows the first exception after the region ends.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(hprune_parallel_for)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

Tensor layer_output(const ConvLayer& layer, const Tensor& input, ErrorPoint point) {
  return point == ErrorPoint::PreActivation ? conv_forward_linear(layer, input)
                                            : conv_forward(layer, input);
}

std::uint64_t layer_params(const ConvLayer& layer) {
  Network single;
  single.layers.push_back(layer);
  return count_params(single);
}

void check_inputs(const Network& net, const Dataset& data) {
  net.validate();
  data.validate();
  if (net.layers.empty()) throw InvalidArgument("network has no layers");
  const auto& shape = data.example_shape();
  if (shape.size() != 3 || shape[0] != net.layers.front().in_channels)
    throw DimensionError("dataset examples do not match the first layer");
}

// Sums per-example contributions in example order, then masks ineligible layers.
LayerErrors reduce_contributions(const std::vector<std::vector<double>>& contrib,
                                 const std::vector<std::size_t>& zero_refs,
                                 const Candidates& candidates) {
  LayerErrors out;
  out.errors.assign(candidates.size(), 0.0);
  for (std::size_t i = 0; i < contrib.size(); ++i) {
    for (std::size_t c = 0; c < candidates.size(); ++c) out.errors[c] += contrib[i][c];
    out.zero_reference += zero_refs[i];
  }
  for (std::size_t c = 0; c < candidates.size(); ++c)
    if (!candidates[c]) out.errors[c] = kInf;
  return out;
}

double relative_term(const Tensor& reference, const Tensor& other, std::size_t& zero_refs) {
  const double norm = l2_norm(reference);
  if (norm == 0.0) {
    ++zero_refs;
    return 0.0;
  }
  return l2_distance(reference, other) / norm;
}

std::vector<std::size_t> retained_counts(const Network& net) {
  std::vector<std::size_t> out;
  for (const auto& l : net.layers) out.push_back(l.out_channels);
  return out;
}

std::optional<std::size_t> argmin_finite(const std::vector<double>& e) {
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < e.size(); ++c) {
    if (!std::isfinite(e[c])) continue;
    if (!best || e[c] < e[*best]) best = c;
  }
  return best;
}

using Scorer = std::function<LayerErrors(std::size_t, const Network&, const Candidates&)>;
using Chooser = std::function<std::optional<std::size_t>(std::size_t, const LayerErrors&,
                                                          const Candidates&)>;

// Shared round loop of the greedy selectors: build candidates (reusing those
// whose layer did not change), score, commit one layer, refine, repeat until
// the parameter budget is met.
PruneOutcome greedy_prune(const Network& net, const Dataset& data, const PruneConfig& cfg,
                          const PruneHooks& hooks, const Scorer& score, const Chooser& choose) {
  cfg.validate();
  check_inputs(net, data);
  const FinetuneHook& refine = hooks.finetune ? hooks.finetune : FinetuneHook(finetune_hook);

  PruneOutcome out;
  out.network = net;
  Candidates cache(net.depth());
  std::vector<char> stale(net.depth(), 1);

  for (std::size_t t = 0; parameter_ratio(net, out.network) < cfg.beta; ++t) {
    std::vector<std::size_t> todo;
    for (std::size_t c = 0; c < stale.size(); ++c)
      if (stale[c]) todo.push_back(c);
    parallel_for(todo.size(), [&](std::size_t q) {
      cache[todo[q]] = build_candidate(out.network.layers[todo[q]], cfg);
    });
    std::fill(stale.begin(), stale.end(), 0);
    if (hooks.on_round) hooks.on_round(t, out.network, cache);

    const LayerErrors errors = score(t, out.network, cache);
    out.zero_reference += errors.zero_reference;
    const auto cmin = choose(t, errors, cache);
    if (!cmin) {
      out.status = PruneStatus::Partial;
      return out;
    }

    Network committed = out.network;
    committed.layers[*cmin] = *cache[*cmin];
    Network refined = refine(committed, data);
    refined.validate();
    for (std::size_t c = 0; c < refined.depth(); ++c)
      if (c == *cmin || !(refined.layers[c] == out.network.layers[c])) stale[c] = 1;
    out.network = std::move(refined);

    PruneRound round;
    round.t = t;
    round.errors = errors.errors;
    round.chosen = *cmin;
    round.retained = retained_counts(out.network);
    round.param_ratio = parameter_ratio(net, out.network);
    out.rounds.push_back(std::move(round));
  }
  out.status = PruneStatus::Reached;
  return out;
}

}  // namespace

std::string_view to_string(Selector s) {
  switch (s) {
    case Selector::HBGS: return "hbgs";
    case Selector::HBGTS: return "hbgts";
    case Selector::Uniform: return "uniform";
    case Selector::Random: return "random";
  }
  return "?";
}

std::string_view to_string(FilterMethod m) {
  return m == FilterMethod::OMP ? "fp-omp" : "fp-backward";
}

std::string_view to_string(ErrorPoint p) {
  return p == ErrorPoint::PreActivation ? "pre-activation" : "post-activation";
}

Selector parse_selector(std::string_view s) {
  if (s == "hbgs") return Selector::HBGS;
  if (s == "hbgts") return Selector::HBGTS;
  if (s == "uniform") return Selector::Uniform;
  if (s == "random") return Selector::Random;
  throw InvalidArgument("unknown selector '" + std::string(s) + "'");
}

FilterMethod parse_method(std::string_view s) {
  if (s == "fp-omp") return FilterMethod::OMP;
  if (s == "fp-backward") return FilterMethod::Backward;
  throw InvalidArgument("unknown filter pruning method '" + std::string(s) + "'");
}

ErrorPoint parse_error_point(std::string_view s) {
  if (s == "post-activation") return ErrorPoint::PostActivation;
  if (s == "pre-activation") return ErrorPoint::PreActivation;
  throw InvalidArgument("unknown error point '" + std::string(s) + "'");
}

void PruneConfig::validate() const {
  if (alpha < 1) throw InvalidArgument("alpha must be at least 1");
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
  if (floor < 1) throw InvalidArgument("floor must be at least 1");
}

std::optional<ConvLayer> build_candidate(const ConvLayer& layer, const PruneConfig& cfg) {
  if (layer.out_channels <= cfg.floor) return std::nullopt;
  const std::size_t count = std::min(cfg.alpha, layer.out_channels - cfg.floor);
  ConvLayer candidate = prune_layer(layer, layer.out_channels - count, cfg.fp_method);
  if (layer_params(candidate) >= layer_params(layer)) return std::nullopt;
  return candidate;
}

Candidates build_candidates(const Network& net, const PruneConfig& cfg) {
  Candidates out(net.depth());
  parallel_for(net.depth(), [&](std::size_t c) { out[c] = build_candidate(net.layers[c], cfg); });
  return out;
}

std::vector<std::vector<Tensor>> reference_outputs(const Network& net, const Dataset& data,
                                                   ErrorPoint point) {
  std::vector<std::vector<Tensor>> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const Tensor* prev = &data.examples[i];
    Tensor post;
    out[i].reserve(net.depth());
    for (const auto& layer : net.layers) {
      Tensor z = conv_forward_linear(layer, *prev);
      if (point == ErrorPoint::PreActivation) out[i].push_back(z);
      apply_activation(layer.activation, z);
      if (point == ErrorPoint::PostActivation) out[i].push_back(z);
      post = std::move(z);
      prev = &post;
    }
  });
  return out;
}

LayerErrors relative_error_hbgs(const Network& current,
                                const std::vector<std::vector<Tensor>>& baseline,
                                const Candidates& candidates, const Dataset& data,
                                ErrorPoint point) {
  const std::size_t depth = current.depth();
  if (candidates.size() != depth) throw DimensionError("one candidate slot per layer required");
  if (baseline.size() != data.size()) throw DimensionError("baseline does not cover the dataset");

  std::vector<std::vector<double>> contrib(data.size(), std::vector<double>(depth, 0.0));
  std::vector<std::size_t> zero_refs(data.size(), 0);
  parallel_for(data.size(), [&](std::size_t i) {
    if (baseline[i].size() != depth) throw DimensionError("baseline does not cover every layer");
    Tensor prev = data.examples[i];
    for (std::size_t c = 0; c < depth; ++c) {
      if (candidates[c]) {
        const Tensor hyp = layer_output(*candidates[c], prev, point);
        contrib[i][c] = relative_term(baseline[i][c], hyp, zero_refs[i]);
      }
      prev = conv_forward(current.layers[c], prev);
    }
  });
  return reduce_contributions(contrib, zero_refs, candidates);
}

PropagationBuffer propagate_tree(const Network& current, const Candidates& candidates,
                                 const Tensor& example, PassCounter* counter) {
  const std::size_t depth = current.depth();
  if (candidates.size() != depth) throw DimensionError("one candidate slot per layer required");
  PropagationBuffer buf;
  buf.y.resize(depth);

  for (std::size_t c = 0; c < depth; ++c) {
    const ConvLayer& layer = current.layers[c];
    const ConvLayer& hyp = candidates[c] ? *candidates[c] : layer;
    if (hyp.in_channels != layer.in_channels || hyp.width() != layer.width())
      throw DimensionError("layer " + std::to_string(c) +
                           ": hypothesis 1 changes the layer's channel interface");

    const Tensor& unpruned_in = c == 0 ? example : buf.y[c - 1][0];
    std::vector<Tensor> linear;
    linear.reserve(c + 2);
    linear.push_back(conv_forward_linear(layer, unpruned_in));
    linear.push_back(conv_forward_linear(hyp, unpruned_in));
    for (std::size_t j = 1; j <= c; ++j) linear.push_back(conv_forward_linear(layer, buf.y[c - 1][j]));

    if (c + 1 == depth) buf.final_linear = linear;
    for (auto& z : linear) apply_activation(layer.activation, z);
    buf.y[c] = std::move(linear);
  }
  if (counter) counter->passes.fetch_add(1, std::memory_order_relaxed);
  return buf;
}

LayerErrors final_output_errors(const Network& current, const Candidates& candidates,
                                const Dataset& data, ErrorPoint point, PassCounter* counter) {
  const std::size_t depth = current.depth();
  std::vector<std::vector<double>> contrib(data.size(), std::vector<double>(depth, 0.0));
  std::vector<std::size_t> zero_refs(data.size(), 0);
  parallel_for(data.size(), [&](std::size_t i) {
    const PropagationBuffer buf = propagate_tree(current, candidates, data.examples[i], counter);
    const auto& last = point == ErrorPoint::PreActivation ? buf.final_linear : buf.y.back();
    for (std::size_t l = 0; l < depth; ++l) {
      if (!candidates[l]) continue;
      contrib[i][l] = relative_term(last[0], last[buf.final_slot(l)], zero_refs[i]);
    }
  });
  return reduce_contributions(contrib, zero_refs, candidates);
}

Network finetune_hook(const Network& net, const Dataset&) { return net; }

double parameter_ratio(const Network& original, const Network& current) {
  const auto before = count_params(original);
  if (before == 0) throw InvalidArgument("reference network has no parameters");
  return 1.0 - static_cast<double>(count_params(current)) / static_cast<double>(before);
}

double final_output_error(const Network& reference, const Network& model, const Dataset& data) {
  data.validate();
  std::vector<double> terms(data.size(), 0.0);
  std::vector<std::size_t> zero_refs(data.size(), 0);
  parallel_for(data.size(), [&](std::size_t i) {
    terms[i] = relative_term(forward(reference, data.examples[i]),
                             forward(model, data.examples[i]), zero_refs[i]);
  });
  double sum = 0.0;
  for (double v : terms) sum += v;
  return sum / static_cast<double>(data.size());
}

FinetuneHook make_final_comp_refit_hook(Network reference) {
  return [reference = std::move(reference)](const Network& net, const Dataset& data) -> Network {
    if (net.layers.empty() || reference.depth() != net.depth()) return net;
    const ConvLayer& last = net.layers.back();
    if (last.width() != reference.layers.back().width()) return net;

    const auto s = static_cast<Eigen::Index>(last.out_channels);
    const auto w = static_cast<Eigen::Index>(last.width());
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(s, s);
    Eigen::MatrixXd xtt = Eigen::MatrixXd::Zero(s, w);
    for (const auto& example : data.examples) {
      Tensor in = example;
      for (std::size_t c = 0; c + 1 < net.depth(); ++c) in = conv_forward(net.layers[c], in);
      const Tensor y = convolve(last.weights, last.out_channels, last.kernel_size, in);
      Tensor ref_in = example;
      for (std::size_t c = 0; c + 1 < reference.depth(); ++c)
        ref_in = conv_forward(reference.layers[c], ref_in);
      const Tensor target = conv_forward_linear(reference.layers.back(), ref_in);

      const auto pixels = static_cast<Eigen::Index>(y.size() / y.dim(0));
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
          y.data.data(), s, pixels);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> tm(
          target.data.data(), w, pixels);
      xtx.noalias() += ym * ym.transpose();
      xtt.noalias() += ym * tm.transpose();
    }
    xtx.diagonal().array() += 1e-12 * xtx.trace() / static_cast<double>(s);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success) return net;

    Network refit = net;
    refit.layers.back().comp = ldlt.solve(xtt);
    if (!refit.layers.back().comp->allFinite())
      return net;
    if (final_output_error(reference, refit, data) <= final_output_error(reference, net, data))
      return refit;
    return net;
  };
}

PruneOutcome hbgs(const Network& net, const Dataset& data, const PruneConfig& cfg,
                  const PruneHooks& hooks) {
  check_inputs(net, data);
  // Reference outputs come from the unpruned network and are computed once.
  const auto baseline = reference_outputs(net, data, cfg.error_point);
  return greedy_prune(
      net, data, cfg, hooks,
      [&](std::size_t, const Network& cur, const Candidates& cands) {
        return relative_error_hbgs(cur, baseline, cands, data, cfg.error_point);
      },
      [](std::size_t, const LayerErrors& e, const Candidates&) { return argmin_finite(e.errors); });
}

PruneOutcome hbgts(const Network& net, const Dataset& data, const PruneConfig& cfg,
                   const PruneHooks& hooks) {
  return greedy_prune(
      net, data, cfg, hooks,
      [&](std::size_t, const Network& cur, const Candidates& cands) {
        return final_output_errors(cur, cands, data, cfg.error_point, hooks.passes);
      },
      [](std::size_t, const LayerErrors& e, const Candidates&) { return argmin_finite(e.errors); });
}

PruneOutcome random_baseline(const Network& net, const Dataset& data, const PruneConfig& cfg,
                             const PruneHooks& hooks) {
  check_inputs(net, data);
  const auto baseline = reference_outputs(net, data, cfg.error_point);
  return greedy_prune(
      net, data, cfg, hooks,
      [&](std::size_t, const Network& cur, const Candidates& cands) {
        return relative_error_hbgs(cur, baseline, cands, data, cfg.error_point);
      },
      [&](std::size_t t, const LayerErrors&, const Candidates& cands) -> std::optional<std::size_t> {
        std::vector<std::size_t> eligible;
        for (std::size_t c = 0; c < cands.size(); ++c)
          if (cands[c]) eligible.push_back(c);
        if (eligible.empty()) return std::nullopt;
        // Counter-based stream: the draw for round t depends only on (seed, t).
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                          static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
        return eligible[pick(rng)];
      });
}

PruneOutcome uniform_baseline(const Network& net, const Dataset& data, const PruneConfig& cfg,
                              const PruneHooks& hooks) {
  cfg.validate();
  check_inputs(net, data);
  const FinetuneHook& refine = hooks.finetune ? hooks.finetune : FinetuneHook(finetune_hook);

  Candidates pruned(net.depth());
  parallel_for(net.depth(), [&](std::size_t c) {
    const ConvLayer& layer = net.layers[c];
    const double keep_f = std::round((1.0 - cfg.beta) * static_cast<double>(layer.out_channels));
    const std::size_t keep = std::clamp<std::size_t>(static_cast<std::size_t>(keep_f), cfg.floor,
                                                     layer.out_channels);
    pruned[c] = keep < layer.out_channels ? prune_layer(layer, keep, cfg.fp_method) : layer;
  });
  if (hooks.on_round) hooks.on_round(0, net, pruned);

  const auto baseline = reference_outputs(net, data, cfg.error_point);
  const LayerErrors errors = relative_error_hbgs(net, baseline, pruned, data, cfg.error_point);

  Network committed;
  for (auto& layer : pruned) committed.layers.push_back(std::move(*layer));
  PruneOutcome out;
  out.network = refine(committed, data);
  out.network.validate();
  out.zero_reference = errors.zero_reference;

  PruneRound round;
  round.t = 0;
  round.errors = errors.errors;
  round.retained = retained_counts(out.network);
  round.param_ratio = parameter_ratio(net, out.network);
  out.rounds.push_back(std::move(round));
  out.status = PruneStatus::Reached;
  return out;
}

PruneOutcome run_selector(const Network& net, const Dataset& data, const PruneConfig& cfg,
                          const PruneHooks& hooks) {
  switch (cfg.selector) {
    case Selector::HBGS: return hbgs(net, data, cfg, hooks);
    case Selector::HBGTS: return hbgts(net, data, cfg, hooks);
    case Selector::Uniform: return uniform_baseline(net, data, cfg, hooks);
    case Selector::Random: return random_baseline(net, data, cfg, hooks);
  }
  throw InvalidArgument("unknown selector");
}

}  // namespace hprune
