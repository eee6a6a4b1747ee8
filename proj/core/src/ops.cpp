#include "latentdr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "latentdr/errors.hpp"

namespace latentdr {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void add_into(std::span<double> dst, std::span<const double> src, double factor = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.value().rows();
  const std::size_t k = a.value().cols();
  const std::size_t n = b.value().cols();
  if (b.value().rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({m, n});
  as_matrix(out.values(), m, n).noalias() =
      as_matrix(a.value().values(), m, k) * as_matrix(b.value().values(), k, n);

  const std::array inputs{a, b};
  return a.tape().record(std::move(out), inputs, [a, b, m, k, n](Tape& tape, std::size_t self) {
    const auto dc = as_matrix(tape.grad(self), m, n);
    if (auto da = tape.accumulate_grad(a); !da.empty()) {
      as_matrix(da, m, k).noalias() += dc * as_matrix(b.value().values(), k, n).transpose();
    }
    if (auto db = tape.accumulate_grad(b); !db.empty()) {
      as_matrix(db, k, n).noalias() += as_matrix(a.value().values(), m, k).transpose() * dc;
    }
  });
}

Var transpose(Var a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  Tensor out({n, m});
  as_matrix(out.values(), n, m) = as_matrix(a.value().values(), m, n).transpose();
  const std::array inputs{a};
  return a.tape().record(std::move(out), inputs, [a, m, n](Tape& tape, std::size_t self) {
    if (auto da = tape.accumulate_grad(a); !da.empty()) {
      as_matrix(da, m, n) += as_matrix(tape.grad(self), n, m).transpose();
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value().detached();
  add_into(out.values(), b.value().values());
  const std::array inputs{a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    if (auto da = tape.accumulate_grad(a); !da.empty()) add_into(da, g);
    if (auto db = tape.accumulate_grad(b); !db.empty()) add_into(db, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value().detached();
  add_into(out.values(), b.value().values(), -1.0);
  const std::array inputs{a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    if (auto da = tape.accumulate_grad(a); !da.empty()) add_into(da, g);
    if (auto db = tape.accumulate_grad(b); !db.empty()) add_into(db, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value().detached();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::array inputs{a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    if (auto da = tape.accumulate_grad(a); !da.empty()) {
      const auto bv = b.value().values();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (auto db = tape.accumulate_grad(b); !db.empty()) {
      const auto av = a.value().values();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value().detached();
  for (double& v : out.values()) v *= factor;
  const std::array inputs{a};
  return a.tape().record(std::move(out), inputs, [a, factor](Tape& tape, std::size_t self) {
    if (auto da = tape.accumulate_grad(a); !da.empty()) add_into(da, tape.grad(self), factor);
  });
}

Var add_row_vector(Var a, Var bias) {
  require_matrix(a, "add_row_vector");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  if (bias.value().size() != n) {
    throw DimensionError("add_row_vector: bias " + shape_string(bias.shape()) +
                         " does not match " + shape_string(a.shape()));
  }
  Tensor out = a.value().detached();
  const auto bv = bias.value().values();
  for (std::size_t r = 0; r < m; ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < n; ++c) row[c] += bv[c];
  }
  const std::array inputs{a, bias};
  return a.tape().record(std::move(out), inputs, [a, bias, m, n](Tape& tape, std::size_t self) {
    const auto g = tape.grad(self);
    if (auto da = tape.accumulate_grad(a); !da.empty()) add_into(da, g);
    if (auto db = tape.accumulate_grad(bias); !db.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) db[c] += g[r * n + c];
      }
    }
  });
}

Var gelu(Var a) {
  Tensor out = a.value().detached();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const std::array inputs{a};
  return a.tape().record(std::move(out), inputs, [a](Tape& tape, std::size_t self) {
    auto da = tape.accumulate_grad(a);
    if (da.empty()) return;
    const auto g = tape.grad(self);
    const auto x = a.value().values();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      da[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

Var softmax_rows(Var a) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  Tensor out = a.value().detached();
  for (std::size_t r = 0; r < m; ++r) {
    auto row = out.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  const std::array inputs{a};
  return a.tape().record(std::move(out), inputs, [a, m, n](Tape& tape, std::size_t self) {
    auto da = tape.accumulate_grad(a);
    if (da.empty()) return;
    const auto g = tape.grad(self);
    const auto y = tape.value(self).values();
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) da[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

Var layer_norm(Var a, Var gain, Var bias) {
  require_matrix(a, "layer_norm");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  if (n < 2) throw ConfigError("layer_norm needs at least 2 features, got " + std::to_string(n));
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias do not match feature width " + std::to_string(n));
  }
  // Normalized activations and per-row inverse std are kept for the adjoint.
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  Tensor out({m, n});
  const auto x = a.value().values();
  const auto gv = gain.value().values();
  const auto bv = bias.value().values();
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += x[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = x[r * n + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (x[r * n + c] - mu) * inv_std[r];
      xhat[r * n + c] = h;
      out[r * n + c] = h * gv[c] + bv[c];
    }
  }
  const std::array inputs{a, gain, bias};
  return a.tape().record(
      std::move(out), inputs,
      [a, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tape, std::size_t self) {
        const auto g = tape.grad(self);
        if (auto dg = tape.accumulate_grad(gain); !dg.empty()) {
          for (std::size_t i = 0; i < m * n; ++i) dg[i % n] += g[i] * xhat[i];
        }
        if (auto db = tape.accumulate_grad(bias); !db.empty()) {
          for (std::size_t i = 0; i < m * n; ++i) db[i % n] += g[i];
        }
        auto da = tape.accumulate_grad(a);
        if (da.empty()) return;
        const auto gv = gain.value().values();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double sum_dh = 0.0;
          double sum_dh_h = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double dh = g[r * n + c] * gv[c];
            sum_dh += dh;
            sum_dh_h += dh * xhat[r * n + c];
          }
          for (std::size_t c = 0; c < n; ++c) {
            const double dh = g[r * n + c] * gv[c];
            da[r * n + c] +=
                inv_std[r] * (dh - inv_n * sum_dh - xhat[r * n + c] * inv_n * sum_dh_h);
          }
        }
      });
}

Var dropout(Var a, double rate, bool training, Rng& rng, std::vector<double>* mask_out) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    if (mask_out != nullptr) mask_out->assign(a.value().size(), 1.0);
    return a;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.value().size());
  Tensor out = a.value().detached();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
    out[i] *= mask[i];
  }
  if (mask_out != nullptr) {
    mask_out->resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) (*mask_out)[i] = mask[i] != 0.0 ? 1.0 : 0.0;
  }
  const std::array inputs{a};
  return a.tape().record(std::move(out), inputs,
                         [a, mask = std::move(mask)](Tape& tape, std::size_t self) {
                           auto da = tape.accumulate_grad(a);
                           if (da.empty()) return;
                           const auto g = tape.grad(self);
                           for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * mask[i];
                         });
}

Var cross_entropy_soft(Var logits, const Tensor& targets) {
  require_matrix(logits, "cross_entropy_soft");
  if (targets.shape() != logits.shape()) {
    throw DimensionError("cross_entropy_soft: targets " + shape_string(targets.shape()) +
                         " vs logits " + shape_string(logits.shape()));
  }
  const std::size_t b = logits.value().rows();
  const std::size_t c = logits.value().cols();
  for (std::size_t r = 0; r < b; ++r) {
    double total = 0.0;
    for (const double t : targets.row(r)) {
      if (!(t >= 0.0)) throw ValidationError("target row " + std::to_string(r) + " has a negative entry");
      total += t;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("target row " + std::to_string(r) + " sums to " +
                            std::to_string(total) + ", not 1");
    }
  }
  std::vector<double> probs(b * c);
  double loss = 0.0;
  const auto z = logits.value().values();
  for (std::size_t r = 0; r < b; ++r) {
    const double peak = *std::max_element(z.begin() + r * c, z.begin() + (r + 1) * c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) total += std::exp(z[r * c + k] - peak);
    const double log_total = std::log(total);
    for (std::size_t k = 0; k < c; ++k) {
      const double log_p = z[r * c + k] - peak - log_total;
      probs[r * c + k] = std::exp(log_p);
      const double t = targets[r * c + k];
      if (t != 0.0) loss -= t * log_p;
    }
  }
  loss /= static_cast<double>(b);
  const std::array inputs{logits};
  return logits.tape().record(
      Tensor::scalar(loss), inputs,
      [logits, targets = targets.detached(), probs = std::move(probs), b](Tape& tape,
                                                                          std::size_t self) {
        auto dz = tape.accumulate_grad(logits);
        if (dz.empty()) return;
        // Targets sum to one per row, so d/dz = (softmax - target) / B.
        const double g = tape.grad(self)[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += g * (probs[i] - targets[i]);
      });
}

Var sum(Var a) {
  double total = 0.0;
  for (const double v : a.value().values()) total += v;
  const std::array inputs{a};
  return a.tape().record(Tensor::scalar(total), inputs, [a](Tape& tape, std::size_t self) {
    auto da = tape.accumulate_grad(a);
    const double g = tape.grad(self)[0];
    for (double& v : da) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  const std::size_t m = a.value().rows();
  const std::size_t n = a.value().cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({m, w});
  const auto x = a.value().values();
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(x.begin() + r * n + begin, w, out.values().begin() + r * w);
  }
  const std::array inputs{a};
  return a.tape().record(std::move(out), inputs, [a, m, n, w, begin](Tape& tape, std::size_t self) {
    auto da = tape.accumulate_grad(a);
    if (da.empty()) return;
    const auto g = tape.grad(self);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < w; ++c) da[r * n + begin + c] += g[r * w + c];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  for (const Var& p : parts) require_matrix(p, "concat_cols");
  const std::size_t m = parts.front().value().rows();
  std::vector<std::size_t> offsets;
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    offsets.push_back(n);
    n += p.value().cols();
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto x = parts[i].value().values();
    const std::size_t w = parts[i].value().cols();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(x.begin() + r * w, w, out.values().begin() + r * n + offsets[i]);
    }
  }
  return parts.front().tape().record(
      std::move(out), parts, [parts, offsets, m, n](Tape& tape, std::size_t self) {
        const auto g = tape.grad(self);
        for (std::size_t i = 0; i < parts.size(); ++i) {
          auto dp = tape.accumulate_grad(parts[i]);
          if (dp.empty()) continue;
          const std::size_t w = parts[i].value().cols();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < w; ++c) dp[r * w + c] += g[r * n + offsets[i] + c];
          }
        }
      });
}

Var stop_gradient(Var a) { return a.tape().constant(a.value().detached()); }

Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  Tensor out({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw RangeError("label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
    out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& a) {
  std::vector<int> out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    // max_element returns the first maximum, i.e. the lowest index on ties.
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace latentdr
