#include <doctest.h>

#include <algorithm>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "latentdr/errors.hpp"
#include "latentdr/latentdr.hpp"
#include "latentdr/ops.hpp"
#include "oracles.hpp"

using namespace latentdr;
using namespace latentdr::testing;

namespace {

ModelConfig tiny_config(DegradationKind kind = DegradationKind::SelfAttention) {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = {5};
  cfg.latent_dim = 4;
  cfg.classes = 3;
  cfg.operators.kind = kind;
  return cfg;
}

void fill(Parameter* p, double v) { std::fill(p->tensor.data().begin(), p->tensor.data().end(), v); }

void zero_ff(const FeedForward& ff) {
  for (Parameter* p : {ff.w1, ff.b1, ff.w2, ff.b2}) fill(p, 0.0);
}

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).value().detached();
}

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

std::vector<double> ln_ref(std::vector<double> v, std::span<const double> gain, std::span<const double> bias) {
  const double n = static_cast<double>(v.size());
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu) / n;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (v[i] - mu) / std::sqrt(var + kLayerNormEps) * gain[i] + bias[i];
  }
  return v;
}

Tensor permute_rows(const Tensor& z, const std::vector<std::size_t>& perm) {
  Tensor out(z.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::copy(z.row(perm[i]).begin(), z.row(perm[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

TEST_CASE("soft label examples") {
  const SoftLabel a = build_soft_label(one_hot({0, 0, 1}, 2));
  CHECK(a.distribution[0] == 2.0 / 3.0);
  CHECK(a.distribution[1] == 1.0 / 3.0);
  const SoftLabel same = build_soft_label(one_hot({2, 2, 2, 2}, 3));
  CHECK(same.distribution.data() == Buffer{0, 0, 1});
  const SoftLabel balanced = build_soft_label(one_hot({0, 1, 2, 3}, 4));
  for (double v : balanced.distribution.values()) CHECK(v == 0.25);
  CHECK_THROWS_AS(build_soft_label(Tensor::matrix({{0.5, 0.5}})), ValidationError);
  CHECK_THROWS_AS(build_soft_label(Tensor::matrix({{1, 1}})), ValidationError);
  CHECK_THROWS_AS(build_soft_label(Tensor::matrix({{0, 0}})), ValidationError);
}

TEST_CASE("soft label equals exact class frequencies") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.index(12);
    std::vector<int> labels(b);
    std::vector<std::size_t> counts(5, 0);
    for (int& l : labels) ++counts[static_cast<std::size_t>(l = static_cast<int>(rng.index(5)))];
    const SoftLabel s = build_soft_label(one_hot(labels, 5));
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(s.distribution[c] == static_cast<double>(counts[c]) / static_cast<double>(b));
      total += s.distribution[c];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("gaussian degradation with zero noise is the identity") {
  OperatorConfig cfg;
  cfg.kind = DegradationKind::Gaussian;
  cfg.noise_scale = 0.0;
  ParameterRegistry reg;
  Rng init(1);
  const DegradationOperator op = DegradationOperator::create(reg, "d", cfg, 4, init);
  CHECK(reg.size() == 0);
  CHECK_FALSE(op.has_parameters());
  const Tensor z = random_tensor({1, 4}, 2);
  Rng rng(0);
  CHECK(eval([&](Tape& t) { return degrade(t.constant(z), op, true, rng); }).data() == z.data());
}

TEST_CASE("sample mixing needs at least two rows") {
  for (DegradationKind kind : {DegradationKind::SelfAttention, DegradationKind::Pool}) {
    ModelBundle bundle(tiny_config(kind), Rng(1));
    Rng rng(0);
    Tape tape;
    CHECK_THROWS_AS(degrade(tape.constant(Tensor({1, 4})), bundle.degrader(), true, rng), BatchSizeError);
  }
}

TEST_CASE("silenced self-attention mixer leaks nothing across rows") {
  ModelBundle bundle(tiny_config(), Rng(2));
  const DegradationOperator& op = bundle.degrader();
  fill(op.attention->w_out, 0.0);
  zero_ff(op.ff);
  const Tensor z = random_tensor({4, 4}, 3);
  Rng rng(0);
  const Tensor out = eval([&](Tape& t) { return degrade(t.constant(z), op, true, rng); });
  const Tensor ref = eval([&](Tape& t) { return apply_layer_norm(apply_layer_norm(t.constant(z), op.ln1), op.ln2); });
  CHECK(max_abs_diff(out.values(), ref.values()) < 1e-14);

  Tensor other = z.detached();
  for (std::size_t r = 1; r < 4; ++r) {
    for (double& v : other.row(r)) v += 10.0;
  }
  const Tensor out2 = eval([&](Tape& t) { return degrade(t.constant(other), op, true, rng); });
  CHECK(max_abs_diff(out2.row(0), out.row(0)) == 0.0);
}

TEST_CASE("pool degradation replays its recorded subsets") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelBundle bundle(tiny_config(DegradationKind::Pool), Rng(seed));
    const DegradationOperator& op = bundle.degrader();
    const Tensor z = random_tensor({4, 4}, seed + 1);
    DegradeTrace trace;
    Rng rng(seed);
    const Tensor out = eval([&](Tape& t) { return degrade(t.constant(z), op, false, rng, &trace); });
    REQUIRE(trace.pool.subsets.size() == 4);
    Tensor mixed({4, 4});
    for (std::size_t r = 0; r < 4; ++r) {
      REQUIRE(trace.pool.subsets[r].size() == 2);
      for (std::size_t c = 0; c < 4; ++c) {
        mixed.at(r, c) = (z.at(trace.pool.subsets[r][0], c) + z.at(trace.pool.subsets[r][1], c)) / 2.0;
      }
    }
    CHECK(max_abs_diff(trace.mixer_output.values(), mixed.values()) < 1e-15);
    // z_d' = z + mean(subset), then the residual MLP under PostLN.
    const Tensor replay = eval([&](Tape& t) {
      const Var zp = apply_layer_norm(add(t.constant(z), t.constant(mixed)), op.ln1);
      return apply_layer_norm(add(zp, feed_forward(zp, op.ff)), op.ln2);
    });
    CHECK(max_abs_diff(out.values(), replay.values()) < 1e-14);
  }
}

TEST_CASE("restoration is invariant to permutations of the original batch") {
  Rng meta(7);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ModelBundle bundle(tiny_config(), Rng(seed));
    const std::size_t b = 2 + meta.index(6);
    const Tensor zd = random_tensor({b, 4}, seed + 1);
    const Tensor z = random_tensor({b, 4}, seed + 2);
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    meta.shuffle(perm);
    Rng rng(0);
    const Tensor a = eval([&](Tape& t) { return restore(t.constant(zd), t.constant(z), bundle.restorer(), false, rng); });
    const Tensor p = eval([&](Tape& t) {
      return restore(t.constant(zd), t.constant(permute_rows(z, perm)), bundle.restorer(), false, rng);
    });
    CHECK(max_abs_diff(a.values(), p.values()) < 1e-12);
  }
  ModelBundle bundle(tiny_config(), Rng(0));
  Rng rng(0);
  Tape tape;
  CHECK_THROWS_AS(restore(tape.constant(Tensor({3, 4})), tape.constant(Tensor({2, 4})), bundle.restorer(), false, rng),
                  DimensionError);
}

TEST_CASE("restoration with zero query/key weights averages the values") {
  ModelBundle bundle(tiny_config(), Rng(4));
  const RestorationOperator& op = bundle.restorer();
  fill(op.attention.w_q, 0.0);
  fill(op.attention.w_k, 0.0);
  zero_ff(op.ff);
  const Tensor z = random_tensor({5, 4}, 1);
  Rng rng(0);
  const Tensor out = eval([&](Tape& t) { return restore(t.constant(z), t.constant(z), op, false, rng); });
  const Tensor proj = naive_matmul(naive_matmul(z, op.attention.w_v->tensor), op.attention.w_out->tensor);
  Tensor zr = z.detached();
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < 5; ++r) m += proj.at(r, c) / 5.0;
    for (std::size_t r = 0; r < 5; ++r) zr.at(r, c) += m;
  }
  const Tensor ref = eval([&](Tape& t) { return apply_layer_norm(apply_layer_norm(t.constant(zr), op.ln1), op.ln2); });
  CHECK(max_abs_diff(out.values(), ref.values()) < 1e-13);
}

TEST_CASE("restoration hand-evaluated case B=3 d=2") {
  ModelConfig cfg = tiny_config();
  cfg.latent_dim = 2;
  cfg.operators.heads = 1;
  cfg.operators.head_dim = 2;
  cfg.operators.ff_dim = 2;
  ModelBundle bundle(cfg, Rng(5));
  const RestorationOperator& op = bundle.restorer();
  op.attention.w_q->tensor.data() = {1, 0, 0, 1};
  op.attention.w_k->tensor.data() = {0.5, 0, 0, -1};
  op.attention.w_v->tensor.data() = {1, 2, 0, 1};
  op.attention.w_out->tensor.data() = {1, 0, 0.5, 1};
  op.ff.w1->tensor.data() = {0.3, -0.2, 0.1, 0.4};
  op.ff.b1->tensor.data() = {0.05, -0.1};
  op.ff.w2->tensor.data() = {1, 0, -0.5, 2};
  op.ff.b2->tensor.data() = {0.2, 0.0};
  op.ln1.gain->tensor.data() = {1.5, 0.5};
  op.ln1.bias->tensor.data() = {0.1, -0.1};
  op.ln2.gain->tensor.data() = {1.0, 2.0};
  op.ln2.bias->tensor.data() = {0.0, 0.3};
  const Tensor zd = Tensor::matrix({{1, 2}, {-1, 0.5}, {0, -2}});
  const Tensor z = Tensor::matrix({{0.5, 1}, {2, -1}, {-0.5, 0}});

  Rng rng(0);
  const Tensor out = eval([&](Tape& t) { return restore(t.constant(zd), t.constant(z), op, false, rng); });

  const auto& wq = op.attention.w_q->tensor;
  const auto& wk = op.attention.w_k->tensor;
  const auto& wv = op.attention.w_v->tensor;
  const auto& wo = op.attention.w_out->tensor;
  for (std::size_t i = 0; i < 3; ++i) {
    const double q0 = zd.at(i, 0) * wq.at(0, 0) + zd.at(i, 1) * wq.at(1, 0);
    const double q1 = zd.at(i, 0) * wq.at(0, 1) + zd.at(i, 1) * wq.at(1, 1);
    double w[3];
    double denom = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double k0 = z.at(j, 0) * wk.at(0, 0) + z.at(j, 1) * wk.at(1, 0);
      const double k1 = z.at(j, 0) * wk.at(0, 1) + z.at(j, 1) * wk.at(1, 1);
      w[j] = std::exp((q0 * k0 + q1 * k1) / std::sqrt(2.0));
      denom += w[j];
    }
    double a0 = 0.0, a1 = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double v0 = z.at(j, 0) * wv.at(0, 0) + z.at(j, 1) * wv.at(1, 0);
      const double v1 = z.at(j, 0) * wv.at(0, 1) + z.at(j, 1) * wv.at(1, 1);
      a0 += w[j] / denom * v0;
      a1 += w[j] / denom * v1;
    }
    const double m0 = a0 * wo.at(0, 0) + a1 * wo.at(1, 0);
    const double m1 = a0 * wo.at(0, 1) + a1 * wo.at(1, 1);
    const auto zp = ln_ref({zd.at(i, 0) + m0, zd.at(i, 1) + m1}, op.ln1.gain->tensor.values(),
                           op.ln1.bias->tensor.values());
    const auto& w1 = op.ff.w1->tensor;
    const auto& w2 = op.ff.w2->tensor;
    const double h0 = gelu_ref(zp[0] * w1.at(0, 0) + zp[1] * w1.at(1, 0) + op.ff.b1->tensor[0]);
    const double h1 = gelu_ref(zp[0] * w1.at(0, 1) + zp[1] * w1.at(1, 1) + op.ff.b1->tensor[1]);
    const double f0 = h0 * w2.at(0, 0) + h1 * w2.at(1, 0) + op.ff.b2->tensor[0];
    const double f1 = h0 * w2.at(0, 1) + h1 * w2.at(1, 1) + op.ff.b2->tensor[1];
    const auto expected = ln_ref({zp[0] + f0, zp[1] + f1}, op.ln2.gain->tensor.values(),
                                 op.ln2.bias->tensor.values());
    CHECK(out.at(i, 0) == doctest::Approx(expected[0]).epsilon(1e-12));
    CHECK(out.at(i, 1) == doctest::Approx(expected[1]).epsilon(1e-12));
  }
}

TEST_CASE("loss is the sum of its three terms") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelBundle bundle(tiny_config(), Rng(seed));
    Tape tape;
    Rng rng(seed);
    const LossGraph g = latentdr_loss(tape, random_tensor({6, 3}, seed + 1), one_hot({0, 1, 2, 0, 1, 1}, 3), bundle, rng);
    const LossBreakdown& b = g.breakdown;
    CHECK(b.degraded_used);
    CHECK(b.restored_used);
    CHECK(std::abs(b.total - (b.l_original + b.l_degraded + b.l_restored)) < 1e-12);
  }
}

TEST_CASE("variant term selection") {
  const Tensor x = random_tensor({4, 3}, 1);
  const Tensor y = one_hot({0, 1, 2, 1}, 3);
  for (AblationVariant v : {AblationVariant::ERM, AblationVariant::DOnly, AblationVariant::ROnly, AblationVariant::DPlusR}) {
    ModelBundle bundle(tiny_config(), Rng(2));
    Tape tape;
    Rng rng(3);
    LossOptions opts;
    opts.variant = v;
    const LossBreakdown b = latentdr_loss(tape, x, y, bundle, rng, opts).breakdown;
    double expected = b.l_original;
    if (uses_degraded_term(v)) expected += b.l_degraded;
    if (uses_restored_term(v)) expected += b.l_restored;
    CHECK(b.total == doctest::Approx(expected).epsilon(1e-15));
    CHECK(b.degraded_used == uses_degraded_term(v));
    CHECK(b.restored_used == uses_restored_term(v));
  }
  CHECK(parse_ablation_variant("D_plus_R") == AblationVariant::DPlusR);
  CHECK(to_string(AblationVariant::ROnly) == "R_only");
  CHECK_THROWS_AS(parse_ablation_variant("both"), ConfigError);
}

TEST_CASE("single-class batch makes the degraded target the true label") {
  ModelConfig cfg = tiny_config(DegradationKind::Gaussian);
  cfg.operators.noise_scale = 0.0;
  ModelBundle bundle(cfg, Rng(6));
  zero_ff(bundle.restorer().ff);
  fill(bundle.restorer().attention.w_out, 0.0);
  Tape tape;
  Rng rng(1);
  const Tensor y = one_hot({1, 1, 1}, 3);
  const LossGraph g = latentdr_loss(tape, random_tensor({3, 3}, 2), y, bundle, rng);
  CHECK(g.soft_label.data() == y.data());
  // Identity degradation: l2 is l1 evaluated against the same one-hot target.
  CHECK(g.breakdown.l_degraded == doctest::Approx(g.breakdown.l_original).epsilon(1e-15));
  CHECK(std::isfinite(g.breakdown.l_restored));
}

TEST_CASE("loss recomputes from dumped latents") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelBundle bundle(tiny_config(), Rng(seed));
    Tape tape;
    Rng rng(seed + 1);
    const Tensor y = one_hot({0, 2, 2, 1, 0}, 3);
    const LossGraph g = latentdr_loss(tape, random_tensor({5, 3}, seed), y, bundle, rng);
    const Tensor z = g.z.value().detached();
    const Tensor zd = g.z_degraded.value().detached();
    const Tensor zr = g.z_restored.value().detached();
    Tape check;
    const double l1 = cross_entropy_soft(bundle.classify(check.constant(z)), y).value().item();
    const double l2 = cross_entropy_soft(bundle.classify(check.constant(zd)), g.soft_label).value().item();
    const double l3 = cross_entropy_soft(bundle.classify(check.constant(zr)), y).value().item();
    CHECK(std::abs(l1 + l2 + l3 - g.breakdown.total) < 1e-10);
  }
}

TEST_CASE("shared classifier gradient is the sum of per-term gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = random_tensor({6, 3}, seed);
    const Tensor y = one_hot({0, 1, 2, 2, 1, 0}, 3);
    const auto classifier_grad = [&](int term) {
      ModelBundle bundle(tiny_config(), Rng(seed));
      Tape tape;
      Rng rng(seed + 100);
      const LossGraph g = latentdr_loss(tape, x, y, bundle, rng);
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
      CHECK(std::abs(total[i] - (g1[i] + g2[i] + g3[i])) < 1e-10);
    }
  }
}

TEST_CASE("ERM leaves the operators without gradient") {
  ModelBundle bundle(tiny_config(), Rng(8));
  SgdOptimizer opt(SgdConfig{0.1, 0.9, 0.0});
  const auto before = bundle.registry().snapshot();
  Rng rng(1);
  Tape tape;
  LossOptions opts;
  opts.variant = AblationVariant::ERM;
  const LossGraph g = latentdr_loss(tape, random_tensor({4, 3}, 2), one_hot({0, 1, 2, 0}, 3), bundle, rng, opts);
  tape.backward(g.total);
  for (const Parameter& p : bundle.registry()) {
    const bool op_param = p.name.rfind("degrader", 0) == 0 || p.name.rfind("restorer", 0) == 0;
    if (!op_param) continue;
    for (double v : p.tensor.grad()) CHECK(v == 0.0);
  }
  opt.step(bundle.registry());
  std::size_t i = 0;
  for (const Parameter& p : bundle.registry()) {
    if (p.name.rfind("degrader", 0) == 0 || p.name.rfind("restorer", 0) == 0) {
      CHECK(std::equal(p.tensor.data().begin(), p.tensor.data().end(), before[i].begin(), before[i].end()));
    }
    ++i;
  }
}

TEST_CASE("learning-rate adjustment applies to the three-term loss") {
  TrainStepOptions o;
  o.base_lr = 0.02;
  o.variant = AblationVariant::DPlusR;
  CHECK(effective_learning_rate(o) == 0.01);
  for (AblationVariant v : {AblationVariant::ERM, AblationVariant::DOnly, AblationVariant::ROnly}) {
    o.variant = v;
    CHECK(effective_learning_rate(o) == 0.02);
  }
}

TEST_CASE("training step rejects non-finite losses") {
  ModelBundle bundle(tiny_config(), Rng(9));
  SgdOptimizer opt(SgdConfig{});
  Rng rng(1);
  Tensor x = random_tensor({3, 3}, 1);
  x[0] = std::nan("");
  CHECK_THROWS_AS(training_step(x, one_hot({0, 1, 2}, 3), bundle, opt, TrainStepOptions{}, rng), NumericalError);
  const Tensor ok = random_tensor({3, 3}, 2);
  const auto before = bundle.registry().snapshot();
  const LossBreakdown b = training_step(ok, one_hot({0, 1, 2}, 3), bundle, opt, TrainStepOptions{}, rng);
  CHECK(std::isfinite(b.total));
  CHECK(bundle.registry().snapshot() != before);
}

TEST_CASE("seeded training steps are reproducible") {
  const auto run = [] {
    ModelBundle bundle(tiny_config(), Rng(10));
    SgdOptimizer opt(SgdConfig{0.05, 0.9, 5e-4});
    Rng rng(2);
    for (int s = 0; s < 5; ++s) {
      training_step(random_tensor({4, 3}, static_cast<std::uint64_t>(s)), one_hot({0, 1, 2, 1}, 3), bundle, opt,
                    TrainStepOptions{}, rng);
    }
    return bundle.registry().snapshot();
  };
  CHECK(run() == run());
}

TEST_CASE("gradcheck end-to-end loss with dropout off") {
  for (DegradationKind kind : {DegradationKind::SelfAttention, DegradationKind::Pool, DegradationKind::Gaussian}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      ModelConfig cfg = tiny_config(kind);
      cfg.operators.dropout_rate = 0.0;
      cfg.operators.restore_dropout_rate = 0.0;
      ModelBundle bundle(cfg, Rng(seed));
      const Tensor y = one_hot({0, 2, 1}, 3);
      const Tensor x = random_tensor({3, 3}, seed + 50);
      // Loss ~3 has an ulp near 4e-16, so differences at h=1e-4 carry ~4e-12
      // of noise; the 1e-7 floor keeps that below the tolerance on its own.
      GradcheckOptions options;
      options.stencil = Stencil::FourPoint;
      options.denominator_floor = 1e-7;
      // The loss takes x as data; every parameter of f, g, D and R is checked.
      const auto r = gradcheck(
          [&](Tape& tape, std::span<const Var>) {
            Rng rng(seed);
            return latentdr_loss(tape, x, y, bundle, rng).total;
          },
          {}, &bundle.registry(), options);
      INFO("kind " << static_cast<int>(kind) << " seed " << seed << " " << r.worst);
      CHECK(r.checked == bundle.registry().total_elements());
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}
