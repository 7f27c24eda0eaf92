#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <random>

#include "hprune/error.hpp"
#include "hprune/generator.hpp"
#include "hprune/layer_select.hpp"
#include "hprune/metrics.hpp"
#include "hprune/reference.hpp"
#include "hprune/verify.hpp"

using namespace hprune;

namespace {

GeneratedModel small_model(std::uint64_t seed, std::vector<double> redundancy,
                           Activation act = Activation::ReLU) {
  GeneratorConfig g;
  g.layers = redundancy.size();
  g.channels = 6;
  g.input_channels = 2;
  g.height = 6;
  g.width = 6;
  g.examples = 8;
  g.redundancy = std::move(redundancy);
  g.seed = seed;
  g.activation = act;
  return generate(g);
}

}  // namespace

TEST_CASE("config validation and name parsing") {
  PruneConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.beta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.alpha = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.floor = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  for (auto s : {Selector::HBGS, Selector::HBGTS, Selector::Uniform, Selector::Random})
    CHECK(parse_selector(to_string(s)) == s);
  CHECK(parse_method("fp-omp") == FilterMethod::OMP);
  CHECK(parse_error_point("pre-activation") == ErrorPoint::PreActivation);
  CHECK_THROWS_AS(parse_selector("greedy"), InvalidArgument);
}

TEST_CASE("candidates respect the floor and the parameter saving rule") {
  std::mt19937_64 rng(51);
  PruneConfig cfg;
  cfg.alpha = 5;
  cfg.floor = 2;
  const ConvLayer wide = verify::random_layer(rng, 4, 8, 3, Activation::ReLU, false);
  const auto cand = build_candidate(wide, cfg);
  REQUIRE(cand);
  CHECK(cand->out_channels == 3);
  CHECK(cand->width() == 8);

  const ConvLayer at_floor = verify::random_layer(rng, 4, 2, 3, Activation::ReLU, false);
  CHECK_FALSE(build_candidate(at_floor, cfg));

  // 1x1 kernels on one channel: the added map costs more than the filter saves.
  cfg.floor = 1;
  const ConvLayer thin = verify::random_layer(rng, 1, 2, 1, Activation::ReLU, false);
  CHECK_FALSE(build_candidate(thin, cfg));
}

TEST_CASE("propagation buffer layout") {
  std::mt19937_64 rng(52);
  Network net;
  std::size_t in = 2;
  for (int c = 0; c < 4; ++c) {
    net.layers.push_back(verify::random_layer(rng, in, 5, 3, Activation::ReLU, false));
    in = 5;
  }
  PruneConfig cfg;
  cfg.alpha = 2;
  const Candidates cands = build_candidates(net, cfg);
  PassCounter counter;
  const Tensor x = verify::random_tensor(rng, {2, 5, 5});
  const PropagationBuffer buf = propagate_tree(net, cands, x, &counter);
  CHECK(counter.passes == 1);
  for (std::size_t c = 0; c < 4; ++c) CHECK(buf.y[c].size() == c + 2);
  CHECK(buf.y[3][0] == forward(net, x));
  for (std::size_t l = 0; l < 4; ++l) {
    Network swapped = net;
    swapped.layers[l] = *cands[l];
    CHECK(max_abs_difference(buf.y[3][buf.final_slot(l)], forward(swapped, x)) < 1e-12);
  }
}

TEST_CASE("tree errors match naive passes") {
  const auto r = verify::tree_suite(53, 8, 4);
  CHECK(r.passed);
}

TEST_CASE("hbgs errors of the first round are plain layerwise errors") {
  const auto model = small_model(54, {0.3, 0.3, 0.3});
  PruneConfig cfg;
  cfg.alpha = 2;
  const Candidates cands = build_candidates(model.net, cfg);
  const auto base = reference_outputs(model.net, model.data, ErrorPoint::PostActivation);
  const LayerErrors e =
      relative_error_hbgs(model.net, base, cands, model.data, ErrorPoint::PostActivation);
  for (std::size_t c = 0; c < 3; ++c) {
    double expected = 0.0;
    for (const auto& x : model.data.examples) {
      const auto outs = forward_all_layers(model.net, x);
      const Tensor& in = c == 0 ? x : outs[c - 1];
      expected += l2_distance(outs[c], conv_forward(*cands[c], in)) / l2_norm(outs[c]);
    }
    CHECK(e.errors[c] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("greedy selectors prefer the redundant layer") {
  const auto model = small_model(55, {0.0, 0.5, 0.0});
  PruneConfig cfg;
  cfg.alpha = 2;
  cfg.beta = 0.05;
  for (auto sel : {Selector::HBGS, Selector::HBGTS}) {
    cfg.selector = sel;
    const PruneOutcome out = run_selector(model.net, model.data, cfg);
    REQUIRE_FALSE(out.rounds.empty());
    CHECK(out.rounds[0].chosen == std::optional<std::size_t>(1));
    CHECK(out.rounds[0].errors[1] < 1e-6);
  }
}

TEST_CASE("candidate cache equals fresh candidates every round") {
  const auto model = small_model(56, {0.2, 0.5, 0.3, 0.1});
  PruneConfig cfg;
  cfg.alpha = 1;
  cfg.beta = 0.4;
  std::size_t rounds = 0;
  bool all_equal = true;
  PruneHooks hooks;
  hooks.on_round = [&](std::size_t, const Network& cur, const Candidates& cands) {
    ++rounds;
    for (std::size_t c = 0; c < cur.depth(); ++c) {
      const auto fresh = build_candidate(cur.layers[c], cfg);
      all_equal = all_equal && fresh.has_value() == cands[c].has_value() &&
                  (!fresh || *fresh == *cands[c]);
    }
  };
  const PruneOutcome out = hbgts(model.net, model.data, cfg, hooks);
  CHECK(rounds >= 3);
  CHECK(all_equal);
  CHECK(out.status == PruneStatus::Reached);
}

TEST_CASE("rounds are recorded consistently") {
  const auto model = small_model(57, {0.3, 0.3});
  PruneConfig cfg;
  cfg.alpha = 1;
  cfg.beta = 0.3;
  const PruneOutcome out = hbgts(model.net, model.data, cfg);
  double prev = 0.0;
  for (std::size_t t = 0; t < out.rounds.size(); ++t) {
    const auto& r = out.rounds[t];
    CHECK(r.t == t);
    CHECK(r.param_ratio > prev);
    prev = r.param_ratio;
    REQUIRE(r.chosen);
    CHECK(std::isfinite(r.errors[*r.chosen]));
  }
  CHECK(out.rounds.back().param_ratio >= cfg.beta);
  CHECK(out.rounds.back().retained[0] == out.network.layers[0].out_channels);
}

TEST_CASE("unreachable budgets end as partial") {
  const auto model = small_model(58, {0.0, 0.0});
  PruneConfig cfg;
  cfg.alpha = 3;
  cfg.floor = 3;
  cfg.beta = 0.9;
  const PruneOutcome out = hbgts(model.net, model.data, cfg);
  CHECK(out.status == PruneStatus::Partial);
  for (const auto& l : out.network.layers) CHECK(l.out_channels >= 3);
}

TEST_CASE("uniform baseline treats symmetric layers alike") {
  const auto model = small_model(59, {0.3, 0.3, 0.3});
  PruneConfig cfg;
  cfg.selector = Selector::Uniform;
  cfg.beta = 0.5;
  const PruneOutcome out = run_selector(model.net, model.data, cfg);
  REQUIRE(out.rounds.size() == 1);
  CHECK_FALSE(out.rounds[0].chosen);
  for (const auto& l : out.network.layers) CHECK(l.out_channels == 3);
}

TEST_CASE("random baseline is a function of its seed") {
  const auto model = small_model(60, {0.3, 0.3, 0.3});
  PruneConfig cfg;
  cfg.selector = Selector::Random;
  cfg.alpha = 1;
  cfg.beta = 0.3;
  cfg.seed = 99;
  const auto a = run_selector(model.net, model.data, cfg);
  const auto b = run_selector(model.net, model.data, cfg);
  CHECK(a.rounds == b.rounds);
  CHECK(a.network == b.network);
}

TEST_CASE("results do not depend on the thread count") {
  const auto model = small_model(61, {0.2, 0.6, 0.4});
  PruneConfig cfg;
  cfg.alpha = 1;
  cfg.beta = 0.35;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const PruneOutcome serial = hbgts(model.net, model.data, cfg);
  omp_set_num_threads(4);
  const PruneOutcome parallel = hbgts(model.net, model.data, cfg);
  omp_set_num_threads(saved);
  CHECK(serial.rounds == parallel.rounds);
  CHECK(serial.network == parallel.network);
}

TEST_CASE("all-zero references are skipped and counted") {
  const auto model = small_model(62, {0.3, 0.3});
  Dataset zeros;
  for (int i = 0; i < 3; ++i) zeros.examples.emplace_back(model.data.example_shape());
  PruneConfig cfg;
  const Candidates cands = build_candidates(model.net, cfg);
  const LayerErrors e = final_output_errors(model.net, cands, zeros, ErrorPoint::PostActivation);
  CHECK(e.zero_reference > 0);
  for (double v : e.errors) CHECK((v == 0.0 || std::isinf(v)));
}

TEST_CASE("width-changing hypotheses are rejected") {
  std::mt19937_64 rng(63);
  Network net;
  net.layers.push_back(verify::random_layer(rng, 2, 4, 3, Activation::ReLU, false));
  net.layers.push_back(verify::random_layer(rng, 4, 4, 3, Activation::ReLU, false));
  Candidates cands(2);
  cands[0] = verify::random_layer(rng, 2, 3, 3, Activation::ReLU, false);
  CHECK_THROWS_AS(propagate_tree(net, cands, verify::random_tensor(rng, {2, 4, 4})),
                  DimensionError);
}

TEST_CASE("final map refit never makes the output worse") {
  const auto model = small_model(64, {0.1, 0.1, 0.1});
  PruneConfig cfg;
  cfg.alpha = 2;
  cfg.beta = 0.3;
  const PruneOutcome plain = hbgts(model.net, model.data, cfg);
  const FinetuneHook refit = make_final_comp_refit_hook(model.net);
  const Network tuned = refit(plain.network, model.data);
  CHECK(final_output_error(model.net, tuned, model.data) <=
        final_output_error(model.net, plain.network, model.data));

  PruneHooks hooks;
  hooks.finetune = refit;
  CHECK(hbgts(model.net, model.data, cfg, hooks).status == PruneStatus::Reached);
}
