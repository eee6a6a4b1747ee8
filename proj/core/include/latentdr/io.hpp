#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "latentdr/datagen.hpp"
#include "latentdr/tensor.hpp"

namespace latentdr {

/// Decimal rendering with 17 significant digits; parses back to the
/// identical double.
std::string format_double(double value);
double parse_double(std::string_view text);

// ---------------------------------------------------------------------------
// Dataset file
//   C D N input_dim seed
//   class domain f_1 ... f_dim        (N lines)

std::string serialize_dataset(const SyntheticDataset& dataset);
SyntheticDataset parse_dataset(std::string_view text);
void write_dataset(const std::filesystem::path& path, const SyntheticDataset& dataset);
SyntheticDataset read_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoint file
//   LATENTDR-CHECKPOINT 1
//   params <count>
//   <name> f64 <rank> <extent>...     (count lines, registry order)
//   data
//   <raw little-endian float64 values, parameters in manifest order>

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

std::string serialize_checkpoint(const ParameterRegistry& registry);
std::vector<CheckpointEntry> parse_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const ParameterRegistry& registry);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);
/// Copies entries into same-named, same-shaped registry parameters. Every
/// registry parameter must be present.
void load_checkpoint(const std::vector<CheckpointEntry>& entries, ParameterRegistry& registry);

// ---------------------------------------------------------------------------
// Latent dump
//   B d C seed step
//   B rows of Z, B rows of Z_d, B rows of Z_r (d values each), B label rows

struct LatentDump {
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  Tensor z;
  Tensor z_degraded;
  Tensor z_restored;
  std::vector<int> labels;

  [[nodiscard]] std::size_t batch() const { return z.rows(); }
  [[nodiscard]] std::size_t dim() const { return z.cols(); }
};

std::string serialize_latent_dump(const LatentDump& dump);
LatentDump parse_latent_dump(std::string_view text);
void write_latent_dump(const std::filesystem::path& path, const LatentDump& dump);
LatentDump read_latent_dump(const std::filesystem::path& path);

/// Whole-file helpers that throw IoError with the path on failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace latentdr
