// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "latentdr/attention.hpp"
#include "latentdr/harness.hpp"
#include "latentdr/io.hpp"
#include "latentdr/latentdr.hpp"
#include "latentdr/metrics.hpp"
#include "latentdr/ops.hpp"
#include "oracles.hpp"

using namespace latentdr;
using namespace latentdr::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ModelConfig tiny_config(DegradationKind kind) {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = {5};
  cfg.latent_dim = 4;
  cfg.classes = 3;
  cfg.operators.kind = kind;
  return cfg;
}

Tensor permute_rows(const Tensor& z, const std::vector<std::size_t>& perm) {
  Tensor out(z.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::copy(z.row(perm[i]).begin(), z.row(perm[i]).end(), out.row(i).begin());
  }
  return out;
}

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).value().detached();
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  constexpr std::uint64_t kSeeds = 20;
  double op_worst = 0.0;
  double e2e_worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;

  const auto op = [&](const std::string& name, const ScalarFunction& f,
                      const std::function<std::vector<Tensor>(std::uint64_t)>& inputs,
                      ParameterRegistry* registry = nullptr) {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      const GradcheckReport r = gradcheck(f, inputs(s), registry);
      checks += r.checked;
      if (r.max_rel_error > op_worst || r.checked == 0) {
        op_worst = r.checked == 0 ? 1.0 : r.max_rel_error;
        worst_name = name;
      }
    }
  };
  const auto three = [](std::uint64_t s) {
    return std::vector{random_tensor({3, 4}, s), random_tensor({3, 4}, s + 7), random_tensor({3, 4}, s + 13)};
  };
  op("matmul", [](Tape&, std::span<const Var> in) { return sum(matmul(in[0], in[1])); },
     [](std::uint64_t s) { return std::vector{random_tensor({3, 4}, s), random_tensor({4, 2}, s + 1)}; });
  op("transpose", [](Tape&, std::span<const Var> in) { return probe_sum(transpose(in[0])); }, three);
  op("add", [](Tape&, std::span<const Var> in) { return probe_sum(add(in[0], in[1])); }, three);
  op("sub", [](Tape&, std::span<const Var> in) { return probe_sum(sub(in[0], in[1])); }, three);
  op("mul", [](Tape&, std::span<const Var> in) { return probe_sum(mul(in[0], in[1])); }, three);
  op("scale", [](Tape&, std::span<const Var> in) { return probe_sum(scale(in[0], -1.7)); }, three);
  op("add_row_vector", [](Tape&, std::span<const Var> in) { return probe_sum(add_row_vector(in[0], in[1])); },
     [](std::uint64_t s) { return std::vector{random_tensor({3, 4}, s), random_tensor({4}, s + 1)}; });
  op("gelu", [](Tape&, std::span<const Var> in) { return probe_sum(gelu(in[0])); }, three);
  op("softmax_rows", [](Tape&, std::span<const Var> in) { return probe_sum(softmax_rows(in[0])); }, three);
  op("layer_norm", [](Tape&, std::span<const Var> in) { return probe_sum(layer_norm(in[0], in[1], in[2])); },
     [](std::uint64_t s) {
       return std::vector{random_tensor({3, 5}, s), random_tensor({5}, s + 1), random_tensor({5}, s + 2)};
     });
  op("dropout",
     [](Tape&, std::span<const Var> in) {
       Rng rng(2024);
       return probe_sum(dropout(in[0], 0.5, true, rng));
     },
     three);
  op("cross_entropy_soft",
     [](Tape&, std::span<const Var> in) {
       Tensor t = random_tensor(in[0].value().shape(), 777);
       for (std::size_t r = 0; r < t.rows(); ++r) {
         double z = 0.0;
         for (double& v : t.row(r)) z += (v = std::abs(v));
         for (double& v : t.row(r)) v /= z;
       }
       return cross_entropy_soft(in[0], t);
     },
     three);
  op("sum", [](Tape&, std::span<const Var> in) { return sum(mul(in[0], in[0])); }, three);
  op("mean", [](Tape&, std::span<const Var> in) { return mean(mul(in[0], in[1])); }, three);
  op("slice_cols", [](Tape&, std::span<const Var> in) { return probe_sum(slice_cols(in[0], 1, 3)); }, three);
  op("concat_cols", [](Tape&, std::span<const Var> in) { return probe_sum(concat_cols({in[0], in[1]})); }, three);

  // Attention blocks, model pieces and the two operators, parameters included.
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    ParameterRegistry reg;
    Rng rng(s);
    const AttentionWeights attn = AttentionWeights::create(reg, "attn", 4, 2, 2, rng);
    const FeedForward ff = FeedForward::create(reg, "ff", 4, 3, rng);
    const LayerNormParams ln1 = LayerNormParams::create(reg, "ln1", 4);
    const LayerNormParams ln2 = LayerNormParams::create(reg, "ln2", 4);
    Rng extra(s + 1000);
    for (Parameter* p : {ff.b1, ff.b2, ln1.bias, ln2.bias}) {
      for (double& v : p->tensor.data()) v = 0.3 * extra.normal();
    }
    const Tensor z = random_tensor({3, 4}, s + 1);
    const Tensor zq = random_tensor({2, 4}, s + 2);
    const auto one = [&](const std::string& name, const ScalarFunction& f, std::vector<Tensor> in,
                         ParameterRegistry* r) {
      const GradcheckReport rep = gradcheck(f, std::move(in), r);
      checks += rep.checked;
      if (rep.max_rel_error > op_worst) {
        op_worst = rep.max_rel_error;
        worst_name = name;
      }
    };
    one("self_attention",
        [&](Tape&, std::span<const Var> in) {
          Rng r(s);
          return probe_sum(self_attention(in[0], attn, 0.5, true, r));
        },
        {z}, &reg);
    one("cross_attention",
        [&](Tape&, std::span<const Var> in) {
          Rng r(s);
          return probe_sum(cross_attention(in[0], in[1], attn, 0.5, true, r));
        },
        {zq, z}, &reg);
    one("pool_mix",
        [&](Tape&, std::span<const Var> in) {
          Rng r(s);
          return probe_sum(pool_mix(in[0], MixerKind{MixerKind::Variant::PoolSubset, 0.5}, r));
        },
        {z}, nullptr);
    one("feed_forward", [&](Tape&, std::span<const Var> in) { return probe_sum(feed_forward(in[0], ff)); }, {z},
        &reg);
    for (NormPlacement norm : {NormPlacement::PostLN, NormPlacement::PreLN}) {
      one("transformer_layer",
          [&](Tape&, std::span<const Var> in) {
            Rng r(s);
            const Mixer mix = [&](Var x) { return self_attention(x, attn, 0.5, true, r); };
            return probe_sum(transformer_layer(in[0], mix, ff, norm, ln1, ln2));
          },
          {z}, &reg);
    }
    for (DegradationKind kind : {DegradationKind::SelfAttention, DegradationKind::Pool, DegradationKind::Gaussian}) {
      ModelBundle bundle(tiny_config(kind), Rng(s));
      const Tensor y = one_hot({0, 2, 1}, 3);
      one("encode_classify_loss",
          [&](Tape&, std::span<const Var> in) {
            return cross_entropy_soft(bundle.classify(bundle.encode(in[0])), y);
          },
          {random_tensor({3, 3}, s + 3)}, &bundle.registry());
      one("degrade",
          [&](Tape&, std::span<const Var> in) {
            Rng r(s);
            return probe_sum(degrade(in[0], bundle.degrader(), true, r));
          },
          {z}, &bundle.registry());
      one("restore",
          [&](Tape&, std::span<const Var> in) {
            Rng r(s);
            return probe_sum(restore(in[0], in[1], bundle.restorer(), true, r));
          },
          {z, random_tensor({3, 4}, s + 4)}, &bundle.registry());
    }
  }

  // End-to-end three-term loss with dropout off, B=3, d=4, C=3.
  GradcheckOptions e2e;
  e2e.stencil = Stencil::FourPoint;
  e2e.denominator_floor = 1e-7;
  for (DegradationKind kind : {DegradationKind::SelfAttention, DegradationKind::Pool, DegradationKind::Gaussian}) {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
      ModelConfig cfg = tiny_config(kind);
      cfg.operators.dropout_rate = 0.0;
      cfg.operators.restore_dropout_rate = 0.0;
      ModelBundle bundle(cfg, Rng(s));
      const Tensor y = one_hot({0, 2, 1}, 3);
      const Tensor x = random_tensor({3, 3}, s + 50);
      const GradcheckReport r = gradcheck(
          [&](Tape& tape, std::span<const Var>) {
            Rng rng(s);
            return latentdr_loss(tape, x, y, bundle, rng).total;
          },
          {}, &bundle.registry(), e2e);
      checks += r.checked;
      e2e_worst = std::max(e2e_worst, r.max_rel_error);
    }
  }
  const double secs = seconds_since(t0);
  return {op_worst < 1e-5 && e2e_worst < 1e-4 && secs < 30.0,
          fmt("per-op max rel %.2e (%s), end-to-end max rel %.2e, %zu entries, 20 seeds, %.1f s",
              op_worst, worst_name.c_str(), e2e_worst, checks, secs)};
}

Outcome permutation_suite() {
  const auto t0 = Clock::now();
  Rng meta(123);
  double sa_worst = 0.0;
  double restore_worst = 0.0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const std::size_t b = 2 + meta.index(7);
    ModelConfig cfg = tiny_config(DegradationKind::SelfAttention);
    cfg.latent_dim = 8;
    ModelBundle bundle(cfg, Rng(trial));
    const Tensor z = random_tensor({b, 8}, trial + 10);
    const Tensor zd = random_tensor({b, 8}, trial + 20);
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    meta.shuffle(perm);
    Rng rng(0);
    const AttentionWeights& w = *bundle.degrader().attention;

    const Tensor sa = eval([&](Tape& t) { return self_attention(t.constant(z), w, 0.5, false, rng); });
    const Tensor sa_p =
        eval([&](Tape& t) { return self_attention(t.constant(permute_rows(z, perm)), w, 0.5, false, rng); });
    sa_worst = std::max(sa_worst, max_abs_diff(sa_p.values(), permute_rows(sa, perm).values()));

    const Tensor r = eval([&](Tape& t) {
      return restore(t.constant(zd), t.constant(z), bundle.restorer(), false, rng);
    });
    const Tensor r_p = eval([&](Tape& t) {
      return restore(t.constant(zd), t.constant(permute_rows(z, perm)), bundle.restorer(), false, rng);
    });
    restore_worst = std::max(restore_worst, max_abs_diff(r_p.values(), r.values()));
  }
  const double secs = seconds_since(t0);
  return {sa_worst <= 1e-12 && restore_worst <= 1e-12 && secs < 5.0,
          fmt("self-attention equivariance %.1e, restoration key/value invariance %.1e, 100 pairs, %.2f s",
              sa_worst, restore_worst, secs)};
}

Outcome loss_structure() {
  double additivity = 0.0;
  double linearity = 0.0;
  bool soft_label_ok = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = random_tensor({6, 3}, seed);
    const Tensor y = one_hot({0, 1, 2, 2, 1, 0}, 3);
    const auto classifier_grad = [&](int term) {
      ModelBundle bundle(tiny_config(DegradationKind::SelfAttention), Rng(seed));
      Tape tape;
      Rng rng(seed + 100);
      const LossGraph g = latentdr_loss(tape, x, y, bundle, rng);
      const auto& b = g.breakdown;
      additivity = std::max(additivity, std::abs(b.total - (b.l_original + b.l_degraded + b.l_restored)));
      const Var roots[] = {g.total, g.l_original, g.l_degraded, g.l_restored};
      tape.backward(roots[term]);
      std::vector<double> out;
      for (const Parameter* p : {bundle.classifier().affine.weight, bundle.classifier().affine.bias}) {
        out.insert(out.end(), p->tensor.grad().begin(), p->tensor.grad().end());
      }
      return out;
    };
    const auto total = classifier_grad(0);
    const auto g1 = classifier_grad(1);
    const auto g2 = classifier_grad(2);
    const auto g3 = classifier_grad(3);
    for (std::size_t i = 0; i < total.size(); ++i) {
      linearity = std::max(linearity, std::abs(total[i] - (g1[i] + g2[i] + g3[i])));
    }

    for (int c = 0; c < 3; ++c) {
      ModelBundle bundle(tiny_config(DegradationKind::SelfAttention), Rng(seed));
      Tape tape;
      Rng rng(seed);
      const Tensor yc = one_hot(std::vector<int>(5, c), 3);
      const LossGraph g = latentdr_loss(tape, random_tensor({5, 3}, seed + 9), yc, bundle, rng);
      soft_label_ok = soft_label_ok && g.soft_label.data() == yc.data();
    }
  }
  return {additivity <= 1e-12 && linearity <= 1e-10 && soft_label_ok,
          fmt("|total - sum of terms| %.1e, single-class soft label exact: %s, classifier grad linearity %.1e",
              additivity, soft_label_ok ? "yes" : "no", linearity)};
}

Outcome inference_path() {
  ExperimentConfig cfg;
  cfg.variant = AblationVariant::DPlusR;
  cfg.epochs = 40;
  cfg.seed = 7;
  const TrainedRun run = train_and_evaluate(cfg);
  const ModelBundle detached = run.bundle.inference_only();
  bool same = !detached.has_operators() && run.bundle.has_operators();
  std::size_t rows = 0;
  for (const SyntheticDataset* split : {&run.split.train, &run.split.val, &run.split.test}) {
    const Tensor x = split->features();
    same = same && detached.predict(x) == run.bundle.predict(x);
    rows += split->size();
  }
  return {same, fmt("40-epoch D+R run, %zu rows over train/val/test, predictions %s", rows,
                    same ? "bit-identical" : "differ")};
}

Outcome metric_oracles() {
  double worst = 0.0;
  for (std::size_t n = 2; n <= 64; ++n) {
    const Tensor f = random_tensor({n, 5}, n);
    std::vector<int> cls(n);
    for (std::size_t i = 0; i < n; ++i) cls[i] = static_cast<int>(i % 3);
    cls[0] = cls[1] = 0;  // at least one same-class pair
    worst = std::max(worst, std::abs(uniformity(f).value - brute_uniformity(f)));
    worst = std::max(worst, std::abs(alignment(f, cls).value - brute_alignment(f, cls)));
  }
  Tensor cloud({6, 3});
  for (std::size_t i = 0; i < 6; ++i) cloud.at(i, 0) = 1.0 + static_cast<double>(i);
  const std::vector<int> same(6, 0);
  const double a0 = alignment(cloud, same).value;
  const double u0 = uniformity(cloud).value;
  Tensor antipodal({2, 3});
  antipodal.at(0, 1) = 2.0;
  antipodal.at(1, 1) = -0.5;
  const double u8 = uniformity(antipodal).value;
  const bool exact = a0 == 0.0 && u0 == 0.0 && u8 == -8.0;
  return {worst <= 1e-12 && exact,
          fmt("brute force max |diff| %.1e for N in 2..64; identical cloud align %g uniform %g; antipodal uniform %g",
              worst, a0, u0, u8)};
}

struct VariantMeans {
  double test = 0.0, clean = 0.0, degraded = 0.0, restored = 0.0, align = 0.0, uniform = 0.0;
  std::size_t runs = 0;
};

std::map<std::string, VariantMeans> grid_means(const std::vector<RunReport>& reports, DegradationKind kind) {
  std::map<std::string, VariantMeans> out;
  for (const RunReport& r : reports) {
    if (r.config.variant != AblationVariant::ERM && r.config.op_kind != kind) continue;
    VariantMeans& m = out[std::string(to_string(r.config.variant))];
    m.test += r.final.test_acc;
    m.clean += r.final.clean_acc;
    m.degraded += r.final.degraded_acc;
    m.restored += r.final.restored_acc;
    m.align += r.final.align_test;
    m.uniform += r.final.uniform_test;
    ++m.runs;
  }
  for (auto& [_, m] : out) {
    const double n = static_cast<double>(m.runs);
    m.test /= n;
    m.clean /= n;
    m.degraded /= n;
    m.restored /= n;
    m.align /= n;
    m.uniform /= n;
  }
  return out;
}

Outcome longtail_smoke() {
  ExperimentConfig base;
  base.task = TaskKind::LongTail;
  base.classes = 10;
  base.imbalance_ratio = 100.0;
  std::vector<ExperimentConfig> configs;
  for (AblationVariant v : {AblationVariant::ERM, AblationVariant::DPlusR}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      ExperimentConfig c = base;
      c.variant = v;
      c.seed = s;
      configs.push_back(c);
    }
  }
  const auto reports = run_configs(configs, 1);
  double acc[2] = {0, 0};
  GroupAccuracy groups[2];
  bool have_groups = true;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::size_t v = i / 5;
    acc[v] += reports[i].final.test_acc / 5.0;
    if (!reports[i].final.groups) {
      have_groups = false;
      continue;
    }
    groups[v].many += reports[i].final.groups->many / 5.0;
    groups[v].medium += reports[i].final.groups->medium / 5.0;
    groups[v].few += reports[i].final.groups->few / 5.0;
  }
  return {acc[1] >= acc[0] && have_groups,
          fmt("D+R %.4f (many %.3f medium %.3f few %.3f) vs ERM %.4f (many %.3f medium %.3f few %.3f), 5 seeds",
              acc[1], groups[1].many, groups[1].medium, groups[1].few, acc[0], groups[0].many, groups[0].medium,
              groups[0].few)};
}

Outcome determinism_and_formats() {
  ExperimentConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 11;
  cfg.dump_latents = true;
  const auto dir = std::filesystem::temp_directory_path() / "latentdr_acceptance";
  std::filesystem::remove_all(dir);
  const RunReport a = run_experiment(cfg, dir / "a");
  const RunReport b = run_experiment(cfg, dir / "b");
  const bool report_same = report_to_json(a, false) == report_to_json(b, false) &&
                           read_file(dir / "a" / "checkpoint.bin") == read_file(dir / "b" / "checkpoint.bin");

  const SyntheticDataset ds = generate_multidomain(cfg.multidomain_params(), cfg.seed);
  write_dataset(dir / "dataset.txt", ds);
  const bool dataset_rt = serialize_dataset(read_dataset(dir / "dataset.txt")) == read_file(dir / "dataset.txt");

  const std::string ckpt = read_file(dir / "a" / "checkpoint.bin");
  ModelBundle bundle(cfg.model_config(), Rng(999));
  load_checkpoint(parse_checkpoint(ckpt), bundle.registry());
  const bool ckpt_rt = serialize_checkpoint(bundle.registry()) == ckpt;

  const std::string latents = read_file(dir / "a" / "latents.txt");
  const bool latent_rt = serialize_latent_dump(parse_latent_dump(latents)) == latents;

  const bool report_rt = report_to_json(report_from_json(report_to_json(a))) == report_to_json(a);
  std::filesystem::remove_all(dir);
  return {report_same && dataset_rt && ckpt_rt && latent_rt && report_rt,
          fmt("report JSON reproduced %s; round trips: dataset %s, checkpoint %s, latents %s, report %s",
              report_same ? "byte-identical" : "DIFFERENT", dataset_rt ? "ok" : "bad", ckpt_rt ? "ok" : "bad",
              latent_rt ? "ok" : "bad", report_rt ? "ok" : "bad")};
}

}  // namespace

int main() {
  report(1, "gradient suite", gradient_suite());
  report(2, "permutation properties", permutation_suite());
  report(3, "loss structure", loss_structure());
  report(4, "inference path equality", inference_path());
  report(5, "metric oracles", metric_oracles());

  const ExperimentConfig base;
  const auto t0 = Clock::now();
  const std::vector<RunReport> grid = run_ablation_grid(base);
  const double grid_secs = seconds_since(t0);
  const DegradationKind kind = base.op_kind;
  auto m = grid_means(grid, kind);
  const VariantMeans& dr = m["D_plus_R"];
  const VariantMeans& erm = m["ERM"];
  const VariantMeans& d_only = m["D_only"];
  const VariantMeans& r_only = m["R_only"];
  const double chance = 1.0 / static_cast<double>(base.classes);

  report(6, "domain generalization ablation",
         {dr.test >= erm.test && dr.test >= d_only.test && dr.test >= r_only.test && grid_secs < 600.0,
          fmt("held-out acc D+R %.4f, ERM %.4f, D_only %.4f, R_only %.4f over %zu runs per variant; grid of %zu "
              "runs in %.0f s",
              dr.test, erm.test, d_only.test, r_only.test, dr.runs, grid.size(), grid_secs)});
  report(7, "degradation confusion",
         {chance < dr.degraded && dr.degraded < dr.clean && dr.restored >= dr.degraded,
          fmt("chance %.4f, degraded %.4f, clean %.4f, restored %.4f", chance, dr.degraded, dr.clean,
              dr.restored)});
  report(8, "representation quality",
         {dr.align <= erm.align && dr.uniform <= erm.uniform,
          fmt("align D+R %.4f vs ERM %.4f; uniform D+R %.4f vs ERM %.4f", dr.align, erm.align, dr.uniform,
              erm.uniform)});

  // Context only: the Gaussian operator rows of the same grid.
  auto g = grid_means(grid, DegradationKind::Gaussian);
  std::printf("info gaussian rows: D+R %.4f D_only %.4f R_only %.4f; degraded %.4f restored %.4f\n",
              g["D_plus_R"].test, g["D_only"].test, g["R_only"].test, g["D_plus_R"].degraded,
              g["D_plus_R"].restored);

  report(9, "long-tail smoke", longtail_smoke());
  report(10, "determinism and formats", determinism_and_formats());

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
