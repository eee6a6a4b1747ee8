#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "latentdr/config.hpp"
#include "latentdr/datagen.hpp"
#include "latentdr/model.hpp"

namespace latentdr {

struct EpochRow {
  std::size_t epoch = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double total = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct GroupAccuracy {
  double many = 0.0;
  double medium = 0.0;
  double few = 0.0;
};

struct FinalScores {
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  double clean_acc = 0.0;
  double degraded_acc = 0.0;
  double restored_acc = 0.0;
  double align_train = 0.0;
  double align_test = 0.0;
  double uniform_train = 0.0;
  double uniform_test = 0.0;
  /// Many/Medium/Few test accuracy (long-tail runs only).
  std::optional<GroupAccuracy> groups;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<EpochRow> epochs;
  FinalScores final;
  std::vector<int> test_predictions;
  double wall_time = 0.0;
  std::uint64_t seed = 0;
};

/// Everything a run produced, including the selected model.
struct TrainedRun {
  RunReport report;
  ModelBundle bundle;
  DatasetSplit split;
};

/// Builds the train/val/test splits a config describes.
DatasetSplit build_splits(const ExperimentConfig& cfg);

/// Trains, keeps the best-validation checkpoint, and evaluates it.
/// Validates the config before any compute.
TrainedRun train_and_evaluate(const ExperimentConfig& cfg);

/// `train_and_evaluate`, then (when `out_dir` is given) writes report.json,
/// checkpoint.bin and, if the config asks for it, latents.txt.
RunReport run_experiment(const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct GridCell {
  AblationVariant variant = AblationVariant::DPlusR;
  DegradationKind kind = DegradationKind::SelfAttention;
  int held_out = 0;
  std::uint64_t seed = 0;
};

/// {sample-aware kind, Gaussian} x {D_only, R_only, D_plus_R} plus ERM, for
/// every seed in [seed, seed + grid_seeds) and every held-out domain.
std::vector<GridCell> ablation_grid_cells(const ExperimentConfig& base);
ExperimentConfig cell_config(const ExperimentConfig& base, const GridCell& cell);

/// Runs configs on `workers` threads. Output order matches input order and
/// each report is independent of scheduling.
std::vector<RunReport> run_configs(const std::vector<ExperimentConfig>& configs,
                                   std::size_t workers);

std::vector<RunReport> run_ablation_grid(const ExperimentConfig& base);

inline const std::vector<std::size_t> kDefaultSweepSizes = {4, 8, 16, 32, 64, 100};

/// Same seeds and data for every size; only batch_size varies.
std::vector<ExperimentConfig> batch_sweep_configs(const ExperimentConfig& base,
                                                  const std::vector<std::size_t>& sizes);
std::vector<RunReport> batch_size_sweep(const ExperimentConfig& base,
                                        const std::vector<std::size_t>& sizes = kDefaultSweepSizes);

struct SummaryCell {
  std::string variant;
  std::string kind;
  std::size_t batch_size = 0;
  std::size_t runs = 0;
  double test_acc_mean = 0.0;
  double test_acc_sd = 0.0;
  double clean_acc_mean = 0.0;
  double degraded_acc_mean = 0.0;
  double restored_acc_mean = 0.0;
  double align_test_mean = 0.0;
  double uniform_test_mean = 0.0;
};

/// Mean and sample standard deviation per (variant, kind, batch_size), in
/// first-appearance order.
std::vector<SummaryCell> summarize(const std::vector<RunReport>& reports);
std::string format_summary_table(const std::vector<SummaryCell>& cells);

enum class ReportFormat { Json, Csv };
ReportFormat parse_report_format(std::string_view text);

/// JSON object mirroring RunReport; `wall_time` optional for byte comparisons.
std::string report_to_json(const RunReport& report, bool include_wall_time = true);
RunReport report_from_json(std::string_view text);

inline constexpr std::string_view kSummaryCsvHeader =
    "variant,kind,held_out,seed,test_acc,clean_acc,degraded_acc,restored_acc,align_test,uniform_test";
std::string reports_to_csv(const std::vector<RunReport>& reports);
std::string summary_to_json(const std::vector<RunReport>& reports);

void export_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format);
void export_summary(const std::vector<RunReport>& reports, const std::filesystem::path& path,
                    ReportFormat format);

}  // namespace latentdr
