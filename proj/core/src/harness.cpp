#include "latentdr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "latentdr/errors.hpp"
#include "latentdr/io.hpp"
#include "latentdr/latentdr.hpp"
#include "latentdr/metrics.hpp"
#include "latentdr/ops.hpp"

namespace latentdr {

using Json = nlohmann::ordered_json;

DatasetSplit build_splits(const ExperimentConfig& cfg) {
  Rng data_rng = Rng(cfg.seed).split("data");
  Rng split_rng = data_rng.split("split");
  if (cfg.task == TaskKind::DomainGeneralization) {
    const MultiDomainParams params = cfg.multidomain_params();
    Rng gen_rng = data_rng.split("corpus");
    SyntheticDataset ds = generate_multidomain(params, gen_rng);
    ds.seed = cfg.seed;
    return leave_one_domain_out_split(ds, cfg.held_out, cfg.train_fraction, split_rng);
  }
  Rng gen_rng = data_rng.split("corpus");
  SyntheticDataset ds = generate_longtail(cfg.longtail_config(), cfg.input_dim, gen_rng);
  ds.seed = cfg.seed;
  // Held-in 80/20 split of the imbalanced corpus; balanced test set.
  DatasetSplit split;
  std::tie(split.train, split.val) = stratified_split(ds, cfg.train_fraction, split_rng);
  Rng test_rng = data_rng.split("test");
  split.test = sample_balanced_like(ds, cfg.test_per_class, cfg.within_class_std, cfg.noise_std,
                                    test_rng);
  return split;
}

namespace {

/// Indices of `split` grouped by domain, in ascending domain order.
std::vector<std::vector<std::size_t>> indices_by_domain(const SyntheticDataset& split) {
  std::map<int, std::vector<std::size_t>> grouped;
  for (std::size_t i = 0; i < split.samples.size(); ++i) grouped[split.samples[i].domain].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [domain, members] : grouped) out.push_back(std::move(members));
  return out;
}

double split_accuracy(const ModelBundle& bundle, const SyntheticDataset& split) {
  const auto labels = split.labels();
  return accuracy(bundle.predict(split.features()), labels);
}

void check_finite(const LossBreakdown& b, std::size_t epoch) {
  if (!std::isfinite(b.l_original) || !std::isfinite(b.l_degraded) ||
      !std::isfinite(b.l_restored) || !std::isfinite(b.total)) {
    throw NumericalError("NaN/Inf loss detected in epoch " + std::to_string(epoch));
  }
}

LatentDump make_latent_dump(const ModelBundle& bundle, const SyntheticDataset& split,
                            const ExperimentConfig& cfg, Rng rng, std::uint64_t step) {
  // Evenly spaced rows; splits are stored class by class.
  const std::size_t rows = std::min(split.size(), cfg.eval_batch_size);
  std::vector<std::size_t> picks(rows);
  for (std::size_t i = 0; i < rows; ++i) picks[i] = i * split.size() / rows;
  const SyntheticDataset chosen = subset(split, picks);
  Tensor x = chosen.features();
  Tape tape;
  const Var z = bundle.encode(tape.constant(std::move(x)));
  Rng d_rng = rng.fork();
  Rng r_rng = rng.fork();
  const Var zd = degrade(z, bundle.degrader(), false, d_rng);
  const Var zr = restore(zd, z, bundle.restorer(), false, r_rng);
  LatentDump dump;
  dump.classes = cfg.classes;
  dump.seed = cfg.seed;
  dump.step = step;
  dump.z = z.value().detached();
  dump.z_degraded = zd.value().detached();
  dump.z_restored = zr.value().detached();
  dump.labels = chosen.labels();
  return dump;
}

}  // namespace

TrainedRun train_and_evaluate(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  Rng root(cfg.seed);
  DatasetSplit split = build_splits(cfg);
  if (split.train.samples.empty() || split.val.samples.empty() || split.test.samples.empty()) {
    throw ConfigError("split produced an empty partition");
  }
  ModelBundle bundle(cfg.model_config(), root.split("model"));
  SgdOptimizer optimizer(SgdConfig{cfg.base_lr, cfg.momentum, cfg.weight_decay});
  Rng shuffle_rng = root.split("shuffle");
  Rng step_rng = root.split("train");
  const Rng eval_rng = root.split("eval");

  TrainStepOptions step_options;
  step_options.variant = cfg.variant;
  step_options.base_lr = cfg.base_lr;
  step_options.lr_adjust = cfg.lr_adjust;
  step_options.stop_grad_into_encoder_for_degraded = cfg.stop_grad_into_encoder_for_l2;

  const Tensor train_x = split.train.features();
  const std::vector<int> train_y = split.train.labels();
  auto domain_indices = indices_by_domain(split.train);
  const std::size_t dim = split.train.input_dim;

  RunReport report;
  report.config = cfg;
  report.seed = cfg.seed;

  double best_val = split_accuracy(bundle, split.val);
  std::size_t best_epoch = 0;
  auto best_snapshot = bundle.registry().snapshot();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::size_t longest = 0;
    for (auto& members : domain_indices) {
      shuffle_rng.shuffle(members);
      longest = std::max(longest, members.size());
    }
    const std::size_t steps = (longest + cfg.batch_size - 1) / cfg.batch_size;
    EpochRow row;
    row.epoch = epoch;
    for (std::size_t s = 0; s < steps; ++s) {
      // B samples from every training domain, wrapping within a domain.
      std::vector<std::size_t> batch;
      for (const auto& members : domain_indices) {
        for (std::size_t j = 0; j < cfg.batch_size; ++j) {
          batch.push_back(members[(s * cfg.batch_size + j) % members.size()]);
        }
      }
      Tensor xb({batch.size(), dim});
      std::vector<int> yb;
      yb.reserve(batch.size());
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto src = train_x.row(batch[r]);
        std::copy(src.begin(), src.end(), xb.row(r).begin());
        yb.push_back(train_y[batch[r]]);
      }
      const LossBreakdown b =
          training_step(xb, one_hot(yb, cfg.classes), bundle, optimizer, step_options, step_rng);
      check_finite(b, epoch);
      row.l1 += b.l_original;
      row.l2 += b.l_degraded;
      row.l3 += b.l_restored;
      row.total += b.total;
    }
    const auto n_steps = static_cast<double>(steps);
    row.l1 /= n_steps;
    row.l2 /= n_steps;
    row.l3 /= n_steps;
    row.total /= n_steps;
    row.train_acc = split_accuracy(bundle, split.train);
    row.val_acc = split_accuracy(bundle, split.val);
    report.epochs.push_back(row);
    if (row.val_acc > best_val) {
      best_val = row.val_acc;
      best_epoch = epoch;
      best_snapshot = bundle.registry().snapshot();
    }
  }
  bundle.registry().restore(best_snapshot);
  for (const Parameter& p : bundle.registry()) {
    if (!p.tensor.all_finite()) throw NumericalError("non-finite parameter '" + p.name + "'");
  }

  FinalScores& fin = report.final;
  fin.best_epoch = best_epoch;
  fin.best_val_acc = best_val;
  const std::vector<int> test_y = split.test.labels();
  report.test_predictions = bundle.predict(split.test.features());
  fin.test_acc = accuracy(report.test_predictions, test_y);
  const AccuracySuite suite = accuracy_suite(bundle, split.test, eval_rng.split("suite"),
                                             cfg.eval_batch_size);
  fin.clean_acc = suite.clean_acc;
  fin.degraded_acc = suite.degraded_acc;
  fin.restored_acc = suite.restored_acc;

  const Tensor train_latents = bundle.latents(split.train.features());
  const Tensor test_latents = bundle.latents(split.test.features());
  fin.align_train = alignment(train_latents, train_y, cfg.seed).value;
  fin.align_test = alignment(test_latents, test_y, cfg.seed).value;
  fin.uniform_train = uniformity(train_latents).value;
  fin.uniform_test = uniformity(test_latents).value;

  if (cfg.task == TaskKind::LongTail) {
    std::array<std::size_t, 3> hits{};
    std::array<std::size_t, 3> totals{};
    for (std::size_t i = 0; i < test_y.size(); ++i) {
      const auto g = static_cast<std::size_t>(
          frequency_group(static_cast<std::size_t>(test_y[i]), cfg.classes));
      ++totals[g];
      hits[g] += report.test_predictions[i] == test_y[i];
    }
    const auto ratio = [&](std::size_t g) {
      return totals[g] == 0 ? 0.0 : static_cast<double>(hits[g]) / static_cast<double>(totals[g]);
    };
    fin.groups = GroupAccuracy{ratio(0), ratio(1), ratio(2)};
  }

  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return TrainedRun{std::move(report), std::move(bundle), std::move(split)};
}

RunReport run_experiment(const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& out_dir) {
  TrainedRun run = train_and_evaluate(cfg);
  if (out_dir) {
    export_report(run.report, *out_dir / "report.json", ReportFormat::Json);
    write_checkpoint(*out_dir / "checkpoint.bin", run.bundle.registry());
    if (cfg.dump_latents) {
      const LatentDump dump = make_latent_dump(run.bundle, run.split.test, cfg,
                                               Rng(cfg.seed).split("eval").split("dump"),
                                               run.report.final.best_epoch);
      write_latent_dump(*out_dir / "latents.txt", dump);
    }
  }
  return std::move(run.report);
}

std::vector<GridCell> ablation_grid_cells(const ExperimentConfig& base) {
  const DegradationKind aware =
      base.op_kind == DegradationKind::Gaussian ? DegradationKind::SelfAttention : base.op_kind;
  struct Row {
    AblationVariant variant;
    DegradationKind kind;
  };
  const std::vector<Row> rows = {
      {AblationVariant::ERM, aware},
      {AblationVariant::DOnly, aware},
      {AblationVariant::ROnly, aware},
      {AblationVariant::DPlusR, aware},
      {AblationVariant::DOnly, DegradationKind::Gaussian},
      {AblationVariant::ROnly, DegradationKind::Gaussian},
      {AblationVariant::DPlusR, DegradationKind::Gaussian},
  };
  const std::size_t held_outs = base.task == TaskKind::DomainGeneralization ? base.domains : 1;
  std::vector<GridCell> cells;
  for (const Row& row : rows) {
    for (std::size_t s = 0; s < base.grid_seeds; ++s) {
      for (std::size_t h = 0; h < held_outs; ++h) {
        cells.push_back(GridCell{row.variant, row.kind, static_cast<int>(h), base.seed + s});
      }
    }
  }
  return cells;
}

ExperimentConfig cell_config(const ExperimentConfig& base, const GridCell& cell) {
  ExperimentConfig cfg = base;
  cfg.variant = cell.variant;
  cfg.op_kind = cell.kind;
  cfg.held_out = cell.held_out;
  cfg.seed = cell.seed;
  return cfg;
}

std::vector<RunReport> run_configs(const std::vector<ExperimentConfig>& configs,
                                   std::size_t workers) {
  for (const auto& cfg : configs) cfg.validate();
  std::vector<std::optional<RunReport>> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = train_and_evaluate(configs[i]).report;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, configs.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  std::vector<RunReport> out;
  out.reserve(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

std::vector<RunReport> run_ablation_grid(const ExperimentConfig& base) {
  std::vector<ExperimentConfig> configs;
  for (const GridCell& cell : ablation_grid_cells(base)) configs.push_back(cell_config(base, cell));
  return run_configs(configs, base.workers);
}

std::vector<ExperimentConfig> batch_sweep_configs(const ExperimentConfig& base,
                                                  const std::vector<std::size_t>& sizes) {
  std::vector<ExperimentConfig> configs;
  for (const std::size_t b : sizes) {
    for (std::size_t s = 0; s < base.grid_seeds; ++s) {
      ExperimentConfig cfg = base;
      cfg.batch_size = b;
      cfg.seed = base.seed + s;
      configs.push_back(cfg);
    }
  }
  return configs;
}

std::vector<RunReport> batch_size_sweep(const ExperimentConfig& base,
                                        const std::vector<std::size_t>& sizes) {
  return run_configs(batch_sweep_configs(base, sizes), base.workers);
}

namespace {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

}  // namespace

std::vector<SummaryCell> summarize(const std::vector<RunReport>& reports) {
  std::vector<SummaryCell> cells;
  std::vector<std::vector<const RunReport*>> members;
  for (const RunReport& r : reports) {
    const std::string variant(to_string(r.config.variant));
    const std::string kind(to_string(r.config.op_kind));
    auto it = std::find_if(cells.begin(), cells.end(), [&](const SummaryCell& c) {
      return c.variant == variant && c.kind == kind && c.batch_size == r.config.batch_size;
    });
    if (it == cells.end()) {
      cells.push_back(SummaryCell{variant, kind, r.config.batch_size});
      members.emplace_back();
      it = cells.end() - 1;
    }
    members[static_cast<std::size_t>(it - cells.begin())].push_back(&r);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto collect = [&](auto field) {
      std::vector<double> xs;
      for (const RunReport* r : members[i]) xs.push_back(field(*r));
      return mean_sd(xs);
    };
    SummaryCell& c = cells[i];
    c.runs = members[i].size();
    const MeanSd test = collect([](const RunReport& r) { return r.final.test_acc; });
    c.test_acc_mean = test.mean;
    c.test_acc_sd = test.sd;
    c.clean_acc_mean = collect([](const RunReport& r) { return r.final.clean_acc; }).mean;
    c.degraded_acc_mean = collect([](const RunReport& r) { return r.final.degraded_acc; }).mean;
    c.restored_acc_mean = collect([](const RunReport& r) { return r.final.restored_acc; }).mean;
    c.align_test_mean = collect([](const RunReport& r) { return r.final.align_test; }).mean;
    c.uniform_test_mean = collect([](const RunReport& r) { return r.final.uniform_test; }).mean;
  }
  return cells;
}

std::string format_summary_table(const std::vector<SummaryCell>& cells) {
  std::string out =
      "variant    kind      B    runs  test_acc (mean+-sd)  degraded  restored  align_test  uniform_test\n";
  for (const SummaryCell& c : cells) {
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-9s %-4zu %-5zu %.4f +- %.4f      %.4f    %.4f    %.4f      %.4f\n",
                  c.variant.c_str(), c.kind.c_str(), c.batch_size, c.runs, c.test_acc_mean,
                  c.test_acc_sd, c.degraded_acc_mean, c.restored_acc_mean, c.align_test_mean,
                  c.uniform_test_mean);
    out += line;
  }
  return out;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  throw ConfigError("unknown format '" + std::string(text) + "' (expected json or csv)");
}

namespace {

Json final_to_json(const FinalScores& f) {
  Json j;
  j["best_epoch"] = f.best_epoch;
  j["best_val_acc"] = f.best_val_acc;
  j["test_acc"] = f.test_acc;
  j["clean_acc"] = f.clean_acc;
  j["degraded_acc"] = f.degraded_acc;
  j["restored_acc"] = f.restored_acc;
  j["align_train"] = f.align_train;
  j["align_test"] = f.align_test;
  j["uniform_train"] = f.uniform_train;
  j["uniform_test"] = f.uniform_test;
  if (f.groups) {
    j["group_acc"] = Json{{"many", f.groups->many}, {"medium", f.groups->medium}, {"few", f.groups->few}};
  }
  return j;
}

}  // namespace

std::string report_to_json(const RunReport& report, bool include_wall_time) {
  Json j;
  Json cfg = Json::object();
  for (const auto& [k, v] : report.config.to_key_values()) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["seed"] = report.seed;
  Json epochs = Json::array();
  for (const EpochRow& e : report.epochs) {
    epochs.push_back(Json{{"epoch", e.epoch}, {"l1", e.l1}, {"l2", e.l2}, {"l3", e.l3},
                          {"total", e.total}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
  }
  j["epochs"] = std::move(epochs);
  j["final"] = final_to_json(report.final);
  j["test_predictions"] = report.test_predictions;
  if (include_wall_time) j["wall_time"] = report.wall_time;
  return j.dump(2) + '\n';
}

RunReport report_from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("report JSON: ") + e.what());
  }
  RunReport r;
  for (const auto& [k, v] : j.at("config").items()) apply_config_value(r.config, k, v.get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("epochs")) {
    EpochRow row;
    row.epoch = e.at("epoch").get<std::size_t>();
    row.l1 = e.at("l1").get<double>();
    row.l2 = e.at("l2").get<double>();
    row.l3 = e.at("l3").get<double>();
    row.total = e.at("total").get<double>();
    row.train_acc = e.at("train_acc").get<double>();
    row.val_acc = e.at("val_acc").get<double>();
    r.epochs.push_back(row);
  }
  const Json& f = j.at("final");
  r.final.best_epoch = f.at("best_epoch").get<std::size_t>();
  r.final.best_val_acc = f.at("best_val_acc").get<double>();
  r.final.test_acc = f.at("test_acc").get<double>();
  r.final.clean_acc = f.at("clean_acc").get<double>();
  r.final.degraded_acc = f.at("degraded_acc").get<double>();
  r.final.restored_acc = f.at("restored_acc").get<double>();
  r.final.align_train = f.at("align_train").get<double>();
  r.final.align_test = f.at("align_test").get<double>();
  r.final.uniform_train = f.at("uniform_train").get<double>();
  r.final.uniform_test = f.at("uniform_test").get<double>();
  if (f.contains("group_acc")) {
    const Json& g = f.at("group_acc");
    r.final.groups = GroupAccuracy{g.at("many").get<double>(), g.at("medium").get<double>(),
                                   g.at("few").get<double>()};
  }
  r.test_predictions = j.at("test_predictions").get<std::vector<int>>();
  if (j.contains("wall_time")) r.wall_time = j.at("wall_time").get<double>();
  return r;
}

std::string reports_to_csv(const std::vector<RunReport>& reports) {
  std::string out(kSummaryCsvHeader);
  out += '\n';
  for (const RunReport& r : reports) {
    const FinalScores& f = r.final;
    out += std::string(to_string(r.config.variant)) + ',' + std::string(to_string(r.config.op_kind)) +
           ',' + std::to_string(r.config.held_out) + ',' + std::to_string(r.seed);
    for (const double v : {f.test_acc, f.clean_acc, f.degraded_acc, f.restored_acc, f.align_test,
                           f.uniform_test}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string summary_to_json(const std::vector<RunReport>& reports) {
  Json j;
  Json runs = Json::array();
  for (const RunReport& r : reports) {
    Json row;
    row["variant"] = std::string(to_string(r.config.variant));
    row["kind"] = std::string(to_string(r.config.op_kind));
    row["held_out"] = r.config.held_out;
    row["seed"] = r.seed;
    row["batch_size"] = r.config.batch_size;
    row["final"] = final_to_json(r.final);
    runs.push_back(std::move(row));
  }
  Json cells = Json::array();
  for (const SummaryCell& c : summarize(reports)) {
    cells.push_back(Json{{"variant", c.variant},
                         {"kind", c.kind},
                         {"batch_size", c.batch_size},
                         {"runs", c.runs},
                         {"test_acc_mean", c.test_acc_mean},
                         {"test_acc_sd", c.test_acc_sd},
                         {"clean_acc_mean", c.clean_acc_mean},
                         {"degraded_acc_mean", c.degraded_acc_mean},
                         {"restored_acc_mean", c.restored_acc_mean},
                         {"align_test_mean", c.align_test_mean},
                         {"uniform_test_mean", c.uniform_test_mean}});
  }
  j["runs"] = std::move(runs);
  j["cells"] = std::move(cells);
  return j.dump(2) + '\n';
}

void export_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format) {
  write_file(path, format == ReportFormat::Json ? report_to_json(report) : reports_to_csv({report}));
}

void export_summary(const std::vector<RunReport>& reports, const std::filesystem::path& path,
                    ReportFormat format) {
  write_file(path, format == ReportFormat::Json ? summary_to_json(reports) : reports_to_csv(reports));
}

}  // namespace latentdr
