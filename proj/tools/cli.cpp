#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hprune/error.hpp"
#include "hprune/generator.hpp"
#include "hprune/layer_select.hpp"
#include "hprune/metrics.hpp"
#include "hprune/model_io.hpp"
#include "hprune/verify.hpp"

namespace hprune::cli {

namespace {

namespace fs = std::filesystem;

struct GenArgs {
  GeneratorConfig cfg;
  std::string activation = "relu";
  std::string out_model;
  std::string out_data;
};

struct PruneArgs {
  std::string model;
  std::string data;
  std::string method = "fp-backward";
  std::string selector = "hbgts";
  std::string error_point = "post-activation";
  PruneConfig cfg;
  std::string out;
  std::string report;
};

struct EvalArgs {
  std::string model;
  std::string data;
  std::string reference;
};

struct VerifyArgs {
  std::string suite = "all";
  std::uint64_t seed = 0;
  std::size_t trials = 100;
};

// A usage problem detected after CLI11 parsing but before any file I/O.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path manifest_path(const fs::path& model) {
  fs::path p = model;
  p.replace_filename(model.stem().string() + ".manifest.json");
  return p;
}

Dataset load_dataset(const std::string& path, const ModelFile& model) {
  const Tensor batch = read_tensor(path);
  if (batch.rank() != 4) throw FormatError(path + ": dataset must be a rank-4 tensor (N, m, H, W)");
  Dataset data = unstack(batch);
  if (data.example_shape() != model.input_shape)
    throw DimensionError(path + ": example shape does not match the model's input_shape");
  return data;
}

int cmd_gen(GenArgs& a, std::ostream& out) {
  try {
    a.cfg.activation = parse_activation(a.activation);
    a.cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const GeneratedModel g = generate(a.cfg);
  write_model(ModelFile{kModelSchemaVersion, g.input_shape, g.net}, a.out_model);
  write_tensor(stack(g.data), a.out_data);
  std::ofstream manifest(manifest_path(a.out_model), std::ios::binary | std::ios::trunc);
  if (!manifest) throw FormatError("cannot write " + manifest_path(a.out_model).string());
  manifest << manifest_json(a.cfg, g.planted);

  out << "model " << a.out_model << "\n"
      << "data " << a.out_data << " (" << g.data.size() << " examples)\n"
      << "manifest " << manifest_path(a.out_model).string() << " (" << g.planted.size()
      << " planted filters)\n";
  return kOk;
}

int cmd_prune(PruneArgs& a, std::ostream& out) {
  try {
    a.cfg.fp_method = parse_method(a.method);
    a.cfg.selector = parse_selector(a.selector);
    a.cfg.error_point = parse_error_point(a.error_point);
    a.cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const ModelFile model = read_model(a.model);
  const Dataset data = load_dataset(a.data, model);

  const PruneOutcome outcome = run_selector(model.network, data, a.cfg);
  const PruneReport report = make_report(a.cfg, model.network, outcome, model.input_shape);
  write_model(ModelFile{kModelSchemaVersion, model.input_shape, outcome.network}, a.out);
  write_report(report, a.report);

  out << "rounds " << outcome.rounds.size() << "\n"
      << "params " << report.before.params << " -> " << report.after.params << " ("
      << format_percent(report.reduction.param_drop) << "% drop)\n"
      << "flops " << report.before.flops << " -> " << report.after.flops << " ("
      << format_percent(report.reduction.flops_drop) << "% drop)\n";
  if (outcome.status == PruneStatus::Partial) {
    out << "status partial: no layer can be pruned further before reaching beta\n";
    return kPartial;
  }
  out << "status reached\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const ModelFile model = read_model(a.model);
  const ModelFile reference = read_model(a.reference);
  if (model.input_shape != reference.input_shape)
    throw DimensionError("model and reference expect different input shapes");
  const Dataset data = load_dataset(a.data, reference);
  if (model.network.layers.back().width() != reference.network.layers.back().width())
    throw DimensionError("model and reference produce different output channel counts");

  const double error = final_output_error(reference.network, model.network, data);
  const ModelStats before = count_stats(reference.network, reference.input_shape);
  const ModelStats after = count_stats(model.network, model.input_shape);
  const Reduction red = reduction_report(before, after);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", error);
  out << "relative_error " << buf << "\n"
      << "params " << before.params << " -> " << after.params << " ("
      << format_percent(red.param_drop) << "% drop)\n"
      << "flops " << before.flops << " -> " << after.flops << " ("
      << format_percent(red.flops_drop) << "% drop)\n";
  return kOk;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  bool ok = true;
  for (const auto& r : verify::run_suite(a.suite, a.seed, a.trials)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s trials %zu  max deviation %.3e  tolerance %.1e  %s",
                  r.name.c_str(), r.trials, r.max_deviation, r.tolerance,
                  r.passed ? "ok" : "FAILED");
    out << buf;
    if (r.failing_seed)
      out << "  (reproduce: --seed " << a.seed << ", trial " << *r.failing_seed << ")";
    out << "\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kVerifyFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structured filter pruning for small convolutional networks"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Synthesize a network with planted redundant filters");
  g->add_option("--layers", gen.cfg.layers, "Number of conv layers")->capture_default_str();
  g->add_option("--channels", gen.cfg.channels, "Filters per layer")->capture_default_str();
  g->add_option("--kernel", gen.cfg.kernel, "Kernel size K")->capture_default_str();
  g->add_option("--redundancy", gen.cfg.redundancy,
                "Planted fraction in [0,1): one value or one per layer, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  g->add_option("--examples", gen.cfg.examples, "Dataset size")->capture_default_str();
  g->add_option("--seed", gen.cfg.seed, "Random seed")->capture_default_str();
  g->add_option("--input-channels", gen.cfg.input_channels, "Input channels (0: --channels)")
      ->capture_default_str();
  g->add_option("--height", gen.cfg.height, "Example height")->capture_default_str();
  g->add_option("--width", gen.cfg.width, "Example width")->capture_default_str();
  g->add_option("--activation", gen.activation, "relu or identity")->capture_default_str();
  g->add_option("--out-model", gen.out_model, "Model file to write")->required();
  g->add_option("--out-data", gen.out_data, "Dataset tensor file to write")->required();

  PruneArgs prune;
  auto* p = app.add_subcommand("prune", "Prune a model to a parameter budget");
  p->add_option("--model", prune.model, "Input model")->required();
  p->add_option("--data", prune.data, "Dataset tensor")->required();
  p->add_option("--method", prune.method, "fp-omp or fp-backward")->capture_default_str();
  p->add_option("--selector", prune.selector, "hbgs, hbgts, uniform or random")
      ->capture_default_str();
  p->add_option("--alpha", prune.cfg.alpha, "Filters removed per round")->capture_default_str();
  p->add_option("--beta", prune.cfg.beta, "Target parameter reduction in (0,1)")
      ->capture_default_str();
  p->add_option("--floor", prune.cfg.floor, "Minimum filters per layer")->capture_default_str();
  p->add_option("--seed", prune.cfg.seed, "Seed for the random selector")->capture_default_str();
  p->add_option("--error-point", prune.error_point, "post-activation or pre-activation")
      ->capture_default_str();
  p->add_option("--out", prune.out, "Pruned model to write")->required();
  p->add_option("--report", prune.report, "Report JSON to write (heatmap CSV goes alongside)")
      ->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Compare a model against a reference model");
  e->add_option("--model", eval.model, "Model to evaluate")->required();
  e->add_option("--data", eval.data, "Dataset tensor")->required();
  e->add_option("--reference-model", eval.reference, "Reference model")->required();

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Run randomized oracle suites");
  v->add_option("--suite", ver.suite, "theorem1, theorem2, omp-oracle, backward-oracle, "
                                      "tree-oracle or all")
      ->check(CLI::IsMember(verify::suite_names()))
      ->capture_default_str();
  v->add_option("--seed", ver.seed, "Base seed")->capture_default_str();
  v->add_option("--trials", ver.trials, "Trials per suite")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (p->parsed()) return cmd_prune(prune, out);
    if (e->parsed()) return cmd_eval(eval, out);
    return cmd_verify(ver, out);
  } catch (const UsageError& ue) {
    err << "error: " << ue.what() << "\n";
    return kUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kFileError;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kFileError;
  }
}

}  // namespace hprune::cli
