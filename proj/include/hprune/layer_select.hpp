#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "hprune/compensation.hpp"
#include "hprune/conv.hpp"
#include "hprune/tensor.hpp"

namespace hprune {

enum class Selector { HBGS, HBGTS, Uniform, Random };
enum class ErrorPoint { PostActivation, PreActivation };

std::string_view to_string(Selector s);
std::string_view to_string(FilterMethod m);
std::string_view to_string(ErrorPoint p);
Selector parse_selector(std::string_view s);
FilterMethod parse_method(std::string_view s);
ErrorPoint parse_error_point(std::string_view s);

struct PruneConfig {
  std::size_t alpha = 5;  // filters removed per candidate per round
  double beta = 0.5;      // target parameter reduction over the network
  Selector selector = Selector::HBGTS;
  FilterMethod fp_method = FilterMethod::Backward;
  std::size_t floor = 1;  // minimum filters a layer keeps
  std::uint64_t seed = 0;
  ErrorPoint error_point = ErrorPoint::PostActivation;

  // alpha >= 1, 0 < beta < 1, floor >= 1.
  void validate() const;
  bool operator==(const PruneConfig&) const = default;
};

// One pruning hypothesis per layer; nullopt marks a layer that cannot be
// pruned further (at the floor, or pruning would not save parameters).
using Candidates = std::vector<std::optional<ConvLayer>>;

std::optional<ConvLayer> build_candidate(const ConvLayer& layer, const PruneConfig& cfg);
// Layers are processed concurrently; the result does not depend on scheduling.
Candidates build_candidates(const Network& net, const PruneConfig& cfg);

struct PassCounter {
  std::atomic<std::size_t> passes{0};
};

// Outputs of every layer for every example, [example][layer], taken at the
// requested point (before or after the activation).
std::vector<std::vector<Tensor>> reference_outputs(const Network& net, const Dataset& data,
                                                   ErrorPoint point);

struct LayerErrors {
  std::vector<double> errors;  // +inf for ineligible layers
  // Examples whose reference output had zero norm and were skipped.
  std::size_t zero_reference = 0;
};

// e_c = sum_i ||U_c(i) - G_c * y_{c-1}(i)|| / ||U_c(i)||, where U comes from the
// original network and y from the current one.
LayerErrors relative_error_hbgs(const Network& current,
                                const std::vector<std::vector<Tensor>>& baseline,
                                const Candidates& candidates, const Dataset& data,
                                ErrorPoint point);

// y[c][0]: unpruned output of layer c. y[c][1]: candidate of layer c applied to
// the unpruned input. y[c][j + 1]: layer c applied to y[c - 1][j], i.e. the
// hypothesis "prune layer c - j" carried forward. Row c holds c + 2 entries
// (0-based c). final_linear mirrors the last row before the activation.
struct PropagationBuffer {
  std::vector<std::vector<Tensor>> y;
  std::vector<Tensor> final_linear;

  // Slot of the last-layer row holding the hypothesis "prune layer L".
  std::size_t final_slot(std::size_t layer) const { return y.size() - layer; }
};

// One composite forward pass for one example covering every hypothesis.
PropagationBuffer propagate_tree(const Network& current, const Candidates& candidates,
                                 const Tensor& example, PassCounter* counter = nullptr);

// e_j = sum_i ||y_C(i) - y_C^{prune j}(i)|| / ||y_C(i)||, via propagate_tree.
LayerErrors final_output_errors(const Network& current, const Candidates& candidates,
                                const Dataset& data, ErrorPoint point,
                                PassCounter* counter = nullptr);

struct PruneRound {
  std::size_t t = 0;
  std::vector<double> errors;
  std::optional<std::size_t> chosen;  // empty for one-shot baselines
  std::vector<std::size_t> retained;  // filters per layer after the round
  double param_ratio = 0.0;           // cumulative parameter reduction
  bool operator==(const PruneRound&) const = default;
};

enum class PruneStatus { Reached, Partial };

struct PruneOutcome {
  Network network;
  std::vector<PruneRound> rounds;
  PruneStatus status = PruneStatus::Reached;
  std::size_t zero_reference = 0;
};

using FinetuneHook = std::function<Network(const Network&, const Dataset&)>;

// Default refinement step: the compensation is already analytic, so nothing
// changes.
Network finetune_hook(const Network& net, const Dataset& data);

// Refits the last layer's 1x1 map by least squares so the network's final
// pre-activation output matches `reference` on the data. The refit is kept
// only when the mean final-output relative error does not increase.
FinetuneHook make_final_comp_refit_hook(Network reference);

struct PruneHooks {
  FinetuneHook finetune;  // empty means finetune_hook
  // Called each round after candidates are built, before scoring.
  std::function<void(std::size_t, const Network&, const Candidates&)> on_round;
  PassCounter* passes = nullptr;
};

// 1 - params(current) / params(original).
double parameter_ratio(const Network& original, const Network& current);

// Mean over examples of ||f_ref(x) - f(x)|| / ||f_ref(x)|| on final outputs.
double final_output_error(const Network& reference, const Network& model, const Dataset& data);

PruneOutcome hbgs(const Network& net, const Dataset& data, const PruneConfig& cfg,
                  const PruneHooks& hooks = {});
PruneOutcome hbgts(const Network& net, const Dataset& data, const PruneConfig& cfg,
                   const PruneHooks& hooks = {});
// cfg.beta is the filter fraction removed from every layer in one shot.
PruneOutcome uniform_baseline(const Network& net, const Dataset& data, const PruneConfig& cfg,
                              const PruneHooks& hooks = {});
// Each round prunes alpha filters from a uniformly random eligible layer.
PruneOutcome random_baseline(const Network& net, const Dataset& data, const PruneConfig& cfg,
                             const PruneHooks& hooks = {});

// Dispatches on cfg.selector.
PruneOutcome run_selector(const Network& net, const Dataset& data, const PruneConfig& cfg,
                          const PruneHooks& hooks = {});

}  // namespace hprune
