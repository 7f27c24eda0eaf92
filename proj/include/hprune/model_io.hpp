#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hprune/conv.hpp"
#include "hprune/layer_select.hpp"
#include "hprune/metrics.hpp"
#include "hprune/tensor.hpp"

namespace hprune {

inline constexpr int kModelSchemaVersion = 1;

// A network together with the (m, H, W) example shape it was built for.
struct ModelFile {
  int schema_version = kModelSchemaVersion;
  std::vector<std::size_t> input_shape;
  Network network;
  bool operator==(const ModelFile&) const = default;
};

// Line-oriented text format:
//
//   hprune-model 1
//   input_shape <m> <H> <W>
//   layers <C>
//   layer <c>
//   in_channels <m> / out_channels <n> / kernel_size <K> / activation relu|identity
//   weights <count>   followed by <count> values, order (out, in, row, col)
//   comp none | comp <rows> <cols>   followed by rows*cols values, row-major
//   end
//
// Values are shortest round-trip decimals, so write -> read is value-exact.
std::string model_to_text(const ModelFile& model);
// Throws SchemaError, LengthError (naming the layer) or ChainError.
ModelFile model_from_text(std::string_view text);
void write_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile read_model(const std::filesystem::path& path);

// Binary tensor: "PKT1", u32 rank, u32 dims[rank], f64 payload, all little-endian.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

struct PruneReport {
  PruneConfig config;
  PruneStatus status = PruneStatus::Reached;
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> original_filters;
  std::vector<PruneRound> rounds;
  ModelStats before;
  ModelStats after;
  Reduction reduction;
  std::size_t zero_reference = 0;
  bool operator==(const PruneReport&) const = default;
};

PruneReport make_report(const PruneConfig& cfg, const Network& original,
                        const PruneOutcome& outcome, std::span<const std::size_t> input_shape);

struct HeatmapRow {
  std::size_t round = 0;
  std::size_t layer = 0;
  double relative_error = 0.0;
  double pruned_percent = 0.0;
};

// One row per (round, layer), sorted by round then layer.
std::vector<HeatmapRow> heatmap_rows(const PruneReport& report);
std::string heatmap_csv(const PruneReport& report);

std::string report_to_json(const PruneReport& report);
PruneReport report_from_json(std::string_view json);

// "<dir>/<stem>.heatmap.csv" next to the report.
std::filesystem::path heatmap_path(const std::filesystem::path& report_path);
// Writes the JSON report and its heatmap CSV.
void write_report(const PruneReport& report, const std::filesystem::path& path);
PruneReport read_report(const std::filesystem::path& path);

}  // namespace hprune
