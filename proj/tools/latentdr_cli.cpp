// latentdr: experiment runner for latent degradation/restoration training.
//
//   latentdr run --config <file> [--out <dir>]
//   latentdr grid --config <file> --out <dir>
//   latentdr sweep-batch --config <file> --out <dir>
//   latentdr metrics --latents <dump> --out <file>
//
// Exit codes: 0 success, 2 configuration error, 3 numerical error (NaN/Inf).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "latentdr/config.hpp"
#include "latentdr/errors.hpp"
#include "latentdr/harness.hpp"
#include "latentdr/io.hpp"
#include "latentdr/metrics.hpp"

namespace fs = std::filesystem;
using namespace latentdr;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string format = "json";
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ReportFormat format = parse_report_format(c.format);
  const std::optional<fs::path> out_dir =
      c.out.empty() ? std::nullopt : std::optional<fs::path>(c.out);
  const RunReport report = run_experiment(cfg, out_dir);
  if (out_dir) {
    if (format == ReportFormat::Csv) export_report(report, *out_dir / "report.csv", format);
    std::cerr << "wrote " << out_dir->string() << "\n";
  } else {
    std::cout << (format == ReportFormat::Json ? report_to_json(report) : reports_to_csv({report}));
  }
  std::cerr << "test_acc " << report.final.test_acc << "  degraded " << report.final.degraded_acc
            << "  restored " << report.final.restored_acc << "\n";
  return 0;
}

void write_collection(const std::vector<RunReport>& reports, const fs::path& out,
                      ReportFormat format, const std::string& stem) {
  const auto ext = format == ReportFormat::Json ? ".json" : ".csv";
  export_summary(reports, out / (stem + ext), format);
  // Per-run reports and the CSV summary are always written alongside.
  if (format != ReportFormat::Csv) export_summary(reports, out / (stem + ".csv"), ReportFormat::Csv);
  for (const RunReport& r : reports) {
    const std::string name = std::string(to_string(r.config.variant)) + "_" +
                             std::string(to_string(r.config.op_kind)) + "_b" +
                             std::to_string(r.config.batch_size) + "_h" +
                             std::to_string(r.config.held_out) + "_s" + std::to_string(r.seed) +
                             ".json";
    export_report(r, out / "runs" / name, ReportFormat::Json);
  }
  const std::string table = format_summary_table(summarize(reports));
  write_file(out / (stem + ".txt"), table);
  std::cout << table;
}

int cmd_grid(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const ReportFormat format = parse_report_format(c.format);
  write_collection(run_ablation_grid(cfg), c.out, format, "summary");
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<std::size_t>& sizes) {
  const ExperimentConfig cfg = load(c);
  const ReportFormat format = parse_report_format(c.format);
  for (const std::size_t b : sizes) {
    ExperimentConfig probe = cfg;
    probe.batch_size = b;
    probe.validate();
  }
  write_collection(batch_size_sweep(cfg, sizes), c.out, format, "sweep");
  return 0;
}

int cmd_metrics(const std::string& latents, const std::string& out, const std::string& fmt,
                std::size_t k, std::size_t queries) {
  const ReportFormat format = parse_report_format(fmt);
  const LatentDump dump = read_latent_dump(latents);
  struct Group {
    const char* name;
    const Tensor* latents;
  };
  const Group groups[] = {{"Z", &dump.z}, {"Z_d", &dump.z_degraded}, {"Z_r", &dump.z_restored}};

  nlohmann::ordered_json j;
  j["batch"] = dump.batch();
  j["dim"] = dump.dim();
  j["seed"] = dump.seed;
  j["step"] = dump.step;
  std::string csv = "group,align,uniform,align_pairs,uniform_pairs\n";
  for (const Group& g : groups) {
    const AlignmentScore a = alignment(*g.latents, dump.labels, dump.seed);
    const UniformityScore u = uniformity(*g.latents);
    j["metrics"][g.name] = {{"align", a.value},
                            {"uniform", u.value},
                            {"align_pairs", a.pair_count},
                            {"uniform_pairs", u.pair_count}};
    csv += std::string(g.name) + ',' + format_double(a.value) + ',' + format_double(u.value) + ',' +
           std::to_string(a.pair_count) + ',' + std::to_string(u.pair_count) + '\n';
  }
  // Nearest original latents of the first few degraded and restored queries.
  nlohmann::ordered_json nn = nlohmann::ordered_json::array();
  const std::size_t n_queries = std::min(queries, dump.batch());
  k = std::min(k, dump.batch());
  for (const Group& g : {groups[1], groups[2]}) {
    for (std::size_t q = 0; q < n_queries; ++q) {
      const NnQueryResult res = nearest_neighbors(g.latents->row(q), dump.z, k, std::nullopt, dump.labels);
      nn.push_back({{"group", g.name},
                    {"query", q},
                    {"query_class", dump.labels[q]},
                    {"neighbors", res.neighbor_ids},
                    {"distances", res.distances},
                    {"neighbor_classes", res.neighbor_classes}});
    }
  }
  j["nearest_neighbors"] = std::move(nn);
  const std::string text = format == ReportFormat::Json ? j.dump(2) + '\n' : csv;
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent degradation/restoration experiment runner"};
  app.require_subcommand(1);

  Common common;
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--format", common.format, "Output format: json or csv")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  run->add_option("--config", common.config_path, "Config file (key = value)")->required();
  run->add_option("--out", common.out, "Output directory");

  auto* grid = app.add_subcommand("grid", "Ablation grid over variants, seeds and held-out domains");
  grid->add_option("--config", common.config_path, "Config file (key = value)")->required();
  grid->add_option("--out", common.out, "Output directory")->required();

  std::vector<std::size_t> sizes = kDefaultSweepSizes;
  auto* sweep = app.add_subcommand("sweep-batch", "Per-domain batch size sweep");
  sweep->add_option("--config", common.config_path, "Config file (key = value)")->required();
  sweep->add_option("--out", common.out, "Output directory")->required();
  sweep->add_option("--sizes", sizes, "Batch sizes to sweep");

  std::string latents;
  std::string metrics_out;
  std::size_t k = 2;
  std::size_t queries = 8;
  auto* metrics = app.add_subcommand("metrics", "Alignment/uniformity and neighbors of a latent dump");
  metrics->add_option("--latents", latents, "Latent dump file")->required();
  metrics->add_option("--out", metrics_out, "Output file (stdout when omitted)");
  metrics->add_option("-k", k, "Neighbors per query");
  metrics->add_option("--queries", queries, "Number of queries per group");

  for (auto* sub : {run, grid, sweep, metrics}) {
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--format", common.format, "Output format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  common.seed = seed;

  try {
    if (*run) return cmd_run(common);
    if (*grid) return cmd_grid(common);
    if (*sweep) return cmd_sweep(common, sizes);
    if (*metrics) return cmd_metrics(latents, metrics_out, common.format, k, queries);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
