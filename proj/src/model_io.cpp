#include "hprune/model_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "hprune/error.hpp"

namespace hprune {

namespace {

using ojson = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

// Whitespace tokenizer over the model text.
class Tokens {
 public:
  explicit Tokens(std::string_view text) : text_(text) {}

  std::optional<std::string_view> next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) return std::nullopt;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

class ModelParser {
 public:
  explicit ModelParser(std::string_view text) : tokens_(text) {}

  ModelFile parse() {
    ModelFile model;
    const auto magic = tokens_.next();
    if (!magic || *magic != "hprune-model") throw SchemaError("not an hprune model file");
    const auto version = tokens_.next();
    if (!version || *version != std::to_string(kModelSchemaVersion))
      throw SchemaError("unsupported model schema version '" +
                        std::string(version.value_or("")) + "'");
    model.schema_version = kModelSchemaVersion;

    expect("input_shape", "header");
    for (int d = 0; d < 3; ++d) model.input_shape.push_back(size_value("header"));
    expect("layers", "header");
    const std::size_t count = size_value("header");

    for (std::size_t c = 0; c < count; ++c) model.network.layers.push_back(layer(c));
    if (tokens_.next()) throw LengthError("model has content after the declared " +
                                          std::to_string(count) + " layers");

    try {
      model.network.validate();
    } catch (const DimensionError& e) {
      throw ChainError(std::string("incompatible layer chain: ") + e.what());
    }
    if (!model.network.layers.empty() &&
        model.input_shape[0] != model.network.layers.front().in_channels)
      throw ChainError("input_shape channels do not match layer 0");
    return model;
  }

 private:
  std::string_view token(const std::string& where) {
    const auto t = tokens_.next();
    if (!t) throw LengthError(where + ": file ends early");
    return *t;
  }

  void expect(std::string_view keyword, const std::string& where) {
    const auto t = token(where);
    if (t != keyword)
      throw LengthError(where + ": expected '" + std::string(keyword) + "', found '" +
                        std::string(t) + "'");
  }

  std::size_t size_value(const std::string& where) {
    const auto t = token(where);
    std::size_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
      throw FormatError(where + ": '" + std::string(t) + "' is not a count");
    return v;
  }

  void values(std::vector<double>& out, std::size_t count, const std::string& where,
              std::string_view what) {
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto t = tokens_.next();
      double v = 0.0;
      if (t) {
        const auto res = std::from_chars(t->data(), t->data() + t->size(), v);
        if (res.ec == std::errc() && res.ptr == t->data() + t->size()) {
          out[i] = v;
          continue;
        }
      }
      throw LengthError(where + ": " + std::string(what) + " declares " + std::to_string(count) +
                        " values but only " + std::to_string(i) + " are present");
    }
  }

  ConvLayer layer(std::size_t c) {
    const std::string where = "layer " + std::to_string(c);
    expect("layer", where);
    if (size_value(where) != c) throw LengthError(where + ": layers out of order");
    ConvLayer l;
    expect("in_channels", where);
    l.in_channels = size_value(where);
    expect("out_channels", where);
    l.out_channels = size_value(where);
    expect("kernel_size", where);
    l.kernel_size = size_value(where);
    expect("activation", where);
    try {
      l.activation = parse_activation(token(where));
    } catch (const InvalidArgument& e) {
      throw FormatError(where + ": " + e.what());
    }

    expect("weights", where);
    const std::size_t declared = size_value(where);
    if (declared != l.out_channels * l.filter_size())
      throw LengthError(where + ": declares " + std::to_string(declared) +
                        " weights but the shape needs " +
                        std::to_string(l.out_channels * l.filter_size()));
    values(l.weights, declared, where, "weights");

    expect("comp", where);
    const auto t = token(where);
    if (t != "none") {
      std::size_t rows = 0;
      const auto res = std::from_chars(t.data(), t.data() + t.size(), rows);
      if (res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw FormatError(where + ": bad comp header");
      const std::size_t cols = size_value(where);
      if (rows != l.out_channels)
        throw LengthError(where + ": comp has " + std::to_string(rows) + " rows but the layer has " +
                          std::to_string(l.out_channels) + " filters");
      std::vector<double> flat;
      values(flat, rows * cols, where, "comp");
      Eigen::MatrixXd g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < cols; ++k)
          g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = flat[r * cols + k];
      l.comp = std::move(g);
    }
    expect("end", where);
    return l;
  }

  Tokens tokens_;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[at + b]) << (8 * b);
  return v;
}

ojson stats_json(const ModelStats& s) {
  ojson layers = ojson::array();
  for (const auto& l : s.per_layer) layers.push_back({{"params", l.params}, {"flops", l.flops}});
  return {{"params", s.params}, {"flops", s.flops}, {"per_layer", layers}};
}

ModelStats stats_from(const ojson& j) {
  ModelStats s;
  s.params = j.at("params").get<std::uint64_t>();
  s.flops = j.at("flops").get<std::uint64_t>();
  for (const auto& l : j.at("per_layer"))
    s.per_layer.push_back({l.at("params").get<std::uint64_t>(), l.at("flops").get<std::uint64_t>()});
  return s;
}

// +inf (ineligible layer) is stored as null.
ojson error_json(double e) { return std::isfinite(e) ? ojson(e) : ojson(nullptr); }
double error_from(const ojson& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::string model_to_text(const ModelFile& model) {
  model.network.validate();
  std::ostringstream out;
  out << "hprune-model " << kModelSchemaVersion << "\n";
  out << "input_shape";
  for (std::size_t d : model.input_shape) out << ' ' << d;
  out << "\nlayers " << model.network.depth() << "\n";
  auto emit = [&out](const double* v, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
      out << format_double(v[i]) << ((i + 1) % 8 == 0 || i + 1 == count ? '\n' : ' ');
  };
  for (std::size_t c = 0; c < model.network.depth(); ++c) {
    const ConvLayer& l = model.network.layers[c];
    out << "layer " << c << "\n"
        << "in_channels " << l.in_channels << "\n"
        << "out_channels " << l.out_channels << "\n"
        << "kernel_size " << l.kernel_size << "\n"
        << "activation " << to_string(l.activation) << "\n"
        << "weights " << l.weights.size() << "\n";
    emit(l.weights.data(), l.weights.size());
    if (l.comp) {
      out << "comp " << l.comp->rows() << ' ' << l.comp->cols() << "\n";
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = *l.comp;
      emit(rm.data(), static_cast<std::size_t>(rm.size()));
    } else {
      out << "comp none\n";
    }
    out << "end\n";
  }
  return out.str();
}

ModelFile model_from_text(std::string_view text) { return ModelParser(text).parse(); }

void write_model(const ModelFile& model, const std::filesystem::path& path) {
  write_file(path, model_to_text(model));
}

ModelFile read_model(const std::filesystem::path& path) { return model_from_text(read_file(path)); }

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() == 0) throw FormatError("rank-0 tensors cannot be stored");
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.rank() + 8 * t.size());
  for (char c : {'P', 'K', 'T', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw FormatError("dimension exceeds the u32 range");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.data) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw LengthError("tensor file shorter than its header");
  if (!(bytes[0] == 'P' && bytes[1] == 'K' && bytes[2] == 'T' && bytes[3] == '1'))
    throw FormatError("bad tensor magic (expected PKT1)");
  const std::uint32_t rank = get_u32(bytes, 4);
  if (rank == 0) throw FormatError("rank-0 tensor rejected");
  if (bytes.size() < 8 + 4ull * rank) throw LengthError("tensor header truncated");

  std::vector<std::size_t> shape(rank);
  std::uint64_t volume = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    shape[d] = get_u32(bytes, 8 + 4 * std::size_t{d});
    if (shape[d] == 0) throw FormatError("tensor dimension is zero");
    if (volume > (std::numeric_limits<std::uint64_t>::max() / 8) / shape[d])
      throw FormatError("tensor dimensions overflow");
    volume *= shape[d];
  }
  const std::size_t header = 8 + 4 * std::size_t{rank};
  if (bytes.size() - header != 8 * volume)
    throw LengthError("tensor payload has " + std::to_string(bytes.size() - header) +
                      " bytes, dims require " + std::to_string(8 * volume));

  std::vector<double> data(static_cast<std::size_t>(volume));
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(bytes[header + 8 * i + b]) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Tensor read_tensor(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  return decode_tensor(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

PruneReport make_report(const PruneConfig& cfg, const Network& original,
                        const PruneOutcome& outcome, std::span<const std::size_t> input_shape) {
  PruneReport r;
  r.config = cfg;
  r.status = outcome.status;
  r.input_shape.assign(input_shape.begin(), input_shape.end());
  for (const auto& l : original.layers) r.original_filters.push_back(l.out_channels);
  r.rounds = outcome.rounds;
  r.before = count_stats(original, input_shape);
  r.after = count_stats(outcome.network, input_shape);
  r.reduction = reduction_report(r.before, r.after);
  r.zero_reference = outcome.zero_reference;
  return r;
}

std::vector<HeatmapRow> heatmap_rows(const PruneReport& report) {
  std::vector<HeatmapRow> rows;
  for (const auto& round : report.rounds) {
    for (std::size_t c = 0; c < round.retained.size(); ++c) {
      HeatmapRow row;
      row.round = round.t;
      row.layer = c;
      row.relative_error = c < round.errors.size() ? round.errors[c] : 0.0;
      row.pruned_percent =
          100.0 * (1.0 - static_cast<double>(round.retained[c]) /
                             static_cast<double>(report.original_filters.at(c)));
      rows.push_back(row);
    }
  }
  return rows;
}

std::string heatmap_csv(const PruneReport& report) {
  std::string out = "round,layer,relative_error,pruned_percent\n";
  for (const auto& row : heatmap_rows(report)) {
    out += std::to_string(row.round) + "," + std::to_string(row.layer) + "," +
           format_double(row.relative_error) + "," + format_double(row.pruned_percent) + "\n";
  }
  return out;
}

std::string report_to_json(const PruneReport& r) {
  ojson j;
  j["config"] = {{"alpha", r.config.alpha},
                 {"beta", r.config.beta},
                 {"selector", to_string(r.config.selector)},
                 {"method", to_string(r.config.fp_method)},
                 {"floor", r.config.floor},
                 {"seed", r.config.seed},
                 {"error_point", to_string(r.config.error_point)}};
  j["status"] = r.status == PruneStatus::Reached ? "reached" : "partial";
  j["input_shape"] = r.input_shape;
  j["original_filters"] = r.original_filters;
  ojson rounds = ojson::array();
  for (const auto& round : r.rounds) {
    ojson errs = ojson::array();
    for (double e : round.errors) errs.push_back(error_json(e));
    rounds.push_back({{"t", round.t},
                      {"errors", errs},
                      {"cmin", round.chosen ? ojson(*round.chosen) : ojson(nullptr)},
                      {"retained_counts", round.retained},
                      {"param_ratio", round.param_ratio}});
  }
  j["rounds"] = rounds;
  j["stats_before"] = stats_json(r.before);
  j["stats_after"] = stats_json(r.after);
  j["reduction"] = {{"param_drop_percent", r.reduction.param_drop},
                    {"flops_drop_percent", r.reduction.flops_drop},
                    {"param_drop", format_percent(r.reduction.param_drop)},
                    {"flops_drop", format_percent(r.reduction.flops_drop)}};
  j["zero_reference_examples"] = r.zero_reference;
  return j.dump(2) + "\n";
}

PruneReport report_from_json(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    PruneReport r;
    const auto& cfg = j.at("config");
    r.config.alpha = cfg.at("alpha").get<std::size_t>();
    r.config.beta = cfg.at("beta").get<double>();
    r.config.selector = parse_selector(cfg.at("selector").get<std::string>());
    r.config.fp_method = parse_method(cfg.at("method").get<std::string>());
    r.config.floor = cfg.at("floor").get<std::size_t>();
    r.config.seed = cfg.at("seed").get<std::uint64_t>();
    r.config.error_point = parse_error_point(cfg.at("error_point").get<std::string>());
    const auto status = j.at("status").get<std::string>();
    if (status != "reached" && status != "partial") throw SchemaError("unknown report status");
    r.status = status == "reached" ? PruneStatus::Reached : PruneStatus::Partial;
    r.input_shape = j.at("input_shape").get<std::vector<std::size_t>>();
    r.original_filters = j.at("original_filters").get<std::vector<std::size_t>>();
    for (const auto& round : j.at("rounds")) {
      PruneRound pr;
      pr.t = round.at("t").get<std::size_t>();
      for (const auto& e : round.at("errors")) pr.errors.push_back(error_from(e));
      if (!round.at("cmin").is_null()) pr.chosen = round.at("cmin").get<std::size_t>();
      pr.retained = round.at("retained_counts").get<std::vector<std::size_t>>();
      pr.param_ratio = round.at("param_ratio").get<double>();
      if (!r.rounds.empty() && pr.t <= r.rounds.back().t)
        throw SchemaError("report rounds are not strictly increasing");
      r.rounds.push_back(std::move(pr));
    }
    r.before = stats_from(j.at("stats_before"));
    r.after = stats_from(j.at("stats_after"));
    r.reduction.param_drop = j.at("reduction").at("param_drop_percent").get<double>();
    r.reduction.flops_drop = j.at("reduction").at("flops_drop_percent").get<double>();
    r.zero_reference = j.at("zero_reference_examples").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("report schema mismatch: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw SchemaError(std::string("report schema mismatch: ") + e.what());
  }
}

std::filesystem::path heatmap_path(const std::filesystem::path& report_path) {
  auto p = report_path;
  p.replace_filename(report_path.stem().string() + ".heatmap.csv");
  return p;
}

void write_report(const PruneReport& report, const std::filesystem::path& path) {
  write_file(path, report_to_json(report));
  write_file(heatmap_path(path), heatmap_csv(report));
}

PruneReport read_report(const std::filesystem::path& path) {
  return report_from_json(read_file(path));
}

}  // namespace hprune
