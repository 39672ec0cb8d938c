#include "hcmgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "hcmgan/errors.hpp"

namespace hcmgan::ops {
namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw ContractError(std::string(op) + ": non-finite input");
}

// C[M×P] += A[M×K] · B[K×P]
void gemm_acc(std::size_t m, std::size_t k, std::size_t p, const double* a, const double* b,
              double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[M×K] += G[M×P] · B[K×P]ᵀ
void gemm_acc_bt(std::size_t m, std::size_t k, std::size_t p, const double* g, const double* b,
                 double* da) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * p;
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
      da[i * k + kk] += s;
    }
  }
}

// dB[K×P] += A[M×K]ᵀ · G[M×P]
void gemm_acc_at(std::size_t m, std::size_t k, std::size_t p, const double* a, const double* g,
                 double* db) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      if (av == 0.0) continue;
      double* drow = db + kk * p;
      for (std::size_t j = 0; j < p; ++j) drow[j] += av * grow[j];
    }
  }
}

template <typename Forward, typename Derivative>
Tensor elementwise(Tape& tape, const Tensor& x, const char* name, Forward f, Derivative df) {
  require_finite(x, name);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const bool rg = x.requires_grad();
  Tensor y(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, y, df]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto xv = x.values();
      auto yv = y.values();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
    });
  }
  return y;
}

double clamp_prob(double p) { return std::clamp(p, kLogClamp, 1.0 - kLogClamp); }

bool clamp_passes_grad(double p) { return p > kLogClamp && p < 1.0 - kLogClamp; }

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, out_h, out_w, kh, kw;
};

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * p, 0.0);
  gemm_acc(m, k, p, a.values().data(), b.values().data(), out.data());
  const bool rg = any_requires_grad({&a, &b});
  Tensor c({m, p}, std::move(out), rg);
  if (rg) {
    tape.record([a, b, c, m, k, p]() mutable {
      if (!c.has_grad()) return;
      const double* g = c.grad().data();
      if (a.requires_grad()) gemm_acc_bt(m, k, p, g, b.values().data(), a.mutable_grad().data());
      if (b.requires_grad()) gemm_acc_at(m, k, p, a.values().data(), g, b.mutable_grad().data());
    });
  }
  return c;
}

Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "affine");
  require_rank(w, 2, "affine");
  const std::size_t rows = x.dim(0), fin = x.dim(1), fout = w.dim(1);
  if (w.dim(0) != fin || b.size() != fout) {
    throw ShapeError("affine: shapes disagree x" + shape_str(x.shape()) + " w" +
                     shape_str(w.shape()) + " b" + shape_str(b.shape()));
  }
  std::vector<double> out(rows * fout);
  auto bv = b.values();
  for (std::size_t i = 0; i < rows; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * fout);
  gemm_acc(rows, fin, fout, x.values().data(), w.values().data(), out.data());
  const bool rg = any_requires_grad({&x, &w, &b});
  Tensor y({rows, fout}, std::move(out), rg);
  if (rg) {
    tape.record([x, w, b, y, rows, fin, fout]() mutable {
      if (!y.has_grad()) return;
      const double* g = y.grad().data();
      if (x.requires_grad()) gemm_acc_bt(rows, fin, fout, g, w.values().data(), x.mutable_grad().data());
      if (w.requires_grad()) gemm_acc_at(rows, fin, fout, x.values().data(), g, w.mutable_grad().data());
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < fout; ++j) gb[j] += g[i * fout + j];
      }
    });
  }
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool rg = any_requires_grad({&a, &b});
  Tensor c(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record([a, b, c]() mutable {
      if (!c.has_grad()) return;
      if (a.requires_grad()) a.accumulate_grad(c.grad());
      if (b.requires_grad()) b.accumulate_grad(c.grad());
    });
  }
  return c;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const bool rg = a.requires_grad();
  Tensor c(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record([a, c, factor]() mutable {
      if (!c.has_grad()) return;
      auto g = c.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return c;
}

Tensor add_constant(Tape& tape, const Tensor& x, std::span<const double> c) {
  if (c.size() != x.size()) throw ShapeError("add_constant: length mismatch");
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c[i];
  const bool rg = x.requires_grad();
  Tensor y(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, y]() mutable {
      if (y.has_grad()) x.accumulate_grad(y.grad());
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const bool rg = a.requires_grad();
  Tensor c({1}, {s}, rg);
  if (rg) {
    tape.record([a, c]() mutable {
      if (!c.has_grad()) return;
      const double g = c.grad()[0];
      for (double& ga : a.mutable_grad()) ga += g;
    });
  }
  return c;
}

Tensor mean(Tape& tape, const Tensor& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  return elementwise(
      tape, x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor relu(Tape& tape, const Tensor& x) { return leaky_relu(tape, x, 0.0); }

Tensor tanh(Tape& tape, const Tensor& x) {
  return elementwise(
      tape, x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return elementwise(
      tape, x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis) {
  require_finite(x, "softmax");
  const auto& shape = x.shape();
  if (axis >= shape.size()) throw ShapeError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[axis];
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  const bool rg = x.requires_grad();
  Tensor y(shape, std::move(out), rg);
  if (rg) {
    tape.record([x, y, outer, inner, n]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto yv = y.values();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * yv[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += yv[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(x, 2, "layer_norm");
  require_finite(x, "layer_norm");
  const std::size_t rows = x.dim(0), f = x.dim(1);
  if (gain.size() != f || bias.size() != f) throw ShapeError("layer_norm: gain/bias width mismatch");
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = xv.data() + i * f;
    double mu = 0.0;
    for (std::size_t j = 0; j < f; ++j) mu += row[j];
    mu /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(f);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < f; ++j) {
      const double h = (row[j] - mu) * inv_std[i];
      xhat[i * f + j] = h;
      out[i * f + j] = gv[j] * h + bv[j];
    }
  }
  const bool rg = any_requires_grad({&x, &gain, &bias});
  Tensor y(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, gain, bias, y, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                 f]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gv = gain.values();
      if (gain.requires_grad()) {
        auto gg = gain.mutable_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < f; ++j) gg[j] += g[i * f + j] * xhat[i * f + j];
      }
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < f; ++j) gb[j] += g[i * f + j];
      }
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        const double inv_f = 1.0 / static_cast<double>(f);
        for (std::size_t i = 0; i < rows; ++i) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < f; ++j) {
            const double d = g[i * f + j] * gv[j];
            mean_d += d;
            mean_dh += d * xhat[i * f + j];
          }
          mean_d *= inv_f;
          mean_dh *= inv_f;
          for (std::size_t j = 0; j < f; ++j) {
            const double d = g[i * f + j] * gv[j];
            gx[i * f + j] += inv_std[i] * (d - mean_d - xhat[i * f + j] * mean_dh);
          }
        }
      }
    });
  }
  return y;
}

Tensor bce_loss(Tape& tape, const Tensor& p, std::span<const double> targets) {
  if (targets.size() != p.size()) throw ShapeError("bce_loss: target count mismatch");
  require_finite(p, "bce_loss");
  auto pv = p.values();
  const double inv_n = 1.0 / static_cast<double>(pv.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double pc = clamp_prob(pv[i]);
    const double t = targets[i];
    loss -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
  }
  loss *= inv_n;
  const bool rg = p.requires_grad();
  Tensor out({1}, {loss}, rg);
  if (rg) {
    std::vector<double> t(targets.begin(), targets.end());
    tape.record([p, out, t = std::move(t), inv_n]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto pv = p.values();
      auto gp = p.mutable_grad();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (!clamp_passes_grad(pv[i])) continue;
        gp[i] += -g * inv_n * (t[i] / pv[i] - (1.0 - t[i]) / (1.0 - pv[i]));
      }
    });
  }
  return out;
}

Tensor bce_loss(Tape& tape, const Tensor& p, double target) {
  const std::vector<double> targets(p.size(), target);
  return bce_loss(tape, p, targets);
}

Tensor categorical_ce(Tape& tape, const Tensor& probs, std::span<const int> labels) {
  require_rank(probs, 2, "categorical_ce");
  const std::size_t rows = probs.dim(0), k = probs.dim(1);
  if (labels.size() != rows) throw ShapeError("categorical_ce: label count mismatch");
  auto pv = probs.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += pv[i * k + j];
    if (!(std::abs(s - 1.0) <= 1e-6)) {
      throw ContractError("categorical_ce: row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ContractError("categorical_ce: label out of range");
    }
    loss -= std::log(clamp_prob(pv[i * k + static_cast<std::size_t>(labels[i])]));
  }
  const double inv_n = 1.0 / static_cast<double>(rows);
  loss *= inv_n;
  const bool rg = probs.requires_grad();
  Tensor out({1}, {loss}, rg);
  if (rg) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape.record([probs, out, lab = std::move(lab), k, inv_n]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto pv = probs.values();
      auto gp = probs.mutable_grad();
      for (std::size_t i = 0; i < lab.size(); ++i) {
        const std::size_t idx = i * k + static_cast<std::size_t>(lab[i]);
        if (!clamp_passes_grad(pv[idx])) continue;
        gp[idx] += -g * inv_n / pv[idx];
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].size() / parts[0].dim(0);
  std::size_t rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.dim(0);
    rg = rg || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor y({rows, cols}, std::move(out), rg);
  if (rg) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record([inputs = std::move(inputs), y]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) p.accumulate_grad(g.subspan(offset, p.size()));
        offset += p.size();
      }
    });
  }
  return y;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const bool rg = x.requires_grad();
  Tensor y(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), rg);
  if (rg) {
    tape.record([x, y]() mutable {
      if (y.has_grad()) x.accumulate_grad(y.grad());
    });
  }
  return y;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "conv2d");
  require_rank(k, 4, "conv2d");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry c{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), 0, 0, k.dim(2), k.dim(3)};
  if (k.dim(1) != c.in_c) throw ShapeError("conv2d: channel mismatch");
  if (c.in_h + 2 * pad < c.kh || c.in_w + 2 * pad < c.kw) throw ShapeError("conv2d: kernel larger than padded input");
  c.out_h = (c.in_h + 2 * pad - c.kh) / stride + 1;
  c.out_w = (c.in_w + 2 * pad - c.kw) / stride + 1;

  auto xv = x.values();
  auto kv = k.values();
  std::vector<double> out(c.batch * c.out_c * c.out_h * c.out_w, 0.0);
  const auto P = static_cast<std::ptrdiff_t>(pad);
  auto for_each_tap = [c, stride, P](auto&& fn) {
    for (std::size_t b = 0; b < c.batch; ++b)
      for (std::size_t o = 0; o < c.out_c; ++o)
        for (std::size_t ci = 0; ci < c.in_c; ++ci)
          for (std::size_t u = 0; u < c.kh; ++u)
            for (std::size_t v = 0; v < c.kw; ++v) {
              const std::size_t kidx = ((o * c.in_c + ci) * c.kh + u) * c.kw + v;
              for (std::size_t i = 0; i < c.out_h; ++i) {
                const auto yy = static_cast<std::ptrdiff_t>(i * stride + u) - P;
                if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(c.in_h)) continue;
                for (std::size_t j = 0; j < c.out_w; ++j) {
                  const auto xx = static_cast<std::ptrdiff_t>(j * stride + v) - P;
                  if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(c.in_w)) continue;
                  const std::size_t xidx =
                      ((b * c.in_c + ci) * c.in_h + static_cast<std::size_t>(yy)) * c.in_w +
                      static_cast<std::size_t>(xx);
                  const std::size_t oidx = ((b * c.out_c + o) * c.out_h + i) * c.out_w + j;
                  fn(xidx, kidx, oidx);
                }
              }
            }
  };
  for_each_tap([&](std::size_t xi, std::size_t ki, std::size_t oi) { out[oi] += xv[xi] * kv[ki]; });

  const bool rg = any_requires_grad({&x, &k});
  Tensor y({c.batch, c.out_c, c.out_h, c.out_w}, std::move(out), rg);
  if (rg) {
    tape.record([x, k, y, for_each_tap]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto xv = x.values();
      auto kv = k.values();
      const bool wx = x.requires_grad(), wk = k.requires_grad();
      double* gx = wx ? x.mutable_grad().data() : nullptr;
      double* gk = wk ? k.mutable_grad().data() : nullptr;
      for_each_tap([&](std::size_t xi, std::size_t ki, std::size_t oi) {
        if (wx) gx[xi] += g[oi] * kv[ki];
        if (wk) gk[ki] += g[oi] * xv[xi];
      });
    });
  }
  return y;
}

Tensor conv_transpose2d(Tape& tape, const Tensor& x, const Tensor& k, std::size_t stride,
                        std::size_t pad, std::size_t output_pad) {
  require_rank(x, 4, "conv_transpose2d");
  require_rank(k, 4, "conv_transpose2d");
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
  if (k.dim(0) != x.dim(1)) throw ShapeError("conv_transpose2d: channel mismatch");
  // Geometry named from the viewpoint of the forward conv this is the adjoint of:
  // "in" is this op's output, "out" is this op's input.
  ConvGeometry c{x.dim(0), k.dim(1), 0, 0, x.dim(1), x.dim(2), x.dim(3), k.dim(2), k.dim(3)};
  const std::ptrdiff_t full_h = static_cast<std::ptrdiff_t>((c.out_h - 1) * stride + c.kh + output_pad) -
                                2 * static_cast<std::ptrdiff_t>(pad);
  const std::ptrdiff_t full_w = static_cast<std::ptrdiff_t>((c.out_w - 1) * stride + c.kw + output_pad) -
                                2 * static_cast<std::ptrdiff_t>(pad);
  if (full_h <= 0 || full_w <= 0 || output_pad >= stride) {
    throw ShapeError("conv_transpose2d: incompatible padding for input " + shape_str(x.shape()));
  }
  c.in_h = static_cast<std::size_t>(full_h);
  c.in_w = static_cast<std::size_t>(full_w);

  auto xv = x.values();
  auto kv = k.values();
  std::vector<double> out(c.batch * c.in_c * c.in_h * c.in_w, 0.0);
  const auto P = static_cast<std::ptrdiff_t>(pad);
  auto for_each_tap = [c, stride, P](auto&& fn) {
    for (std::size_t b = 0; b < c.batch; ++b)
      for (std::size_t o = 0; o < c.out_c; ++o)
        for (std::size_t ci = 0; ci < c.in_c; ++ci)
          for (std::size_t u = 0; u < c.kh; ++u)
            for (std::size_t v = 0; v < c.kw; ++v) {
              const std::size_t kidx = ((o * c.in_c + ci) * c.kh + u) * c.kw + v;
              for (std::size_t i = 0; i < c.out_h; ++i) {
                const auto yy = static_cast<std::ptrdiff_t>(i * stride + u) - P;
                if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(c.in_h)) continue;
                for (std::size_t j = 0; j < c.out_w; ++j) {
                  const auto xx = static_cast<std::ptrdiff_t>(j * stride + v) - P;
                  if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(c.in_w)) continue;
                  const std::size_t big =
                      ((b * c.in_c + ci) * c.in_h + static_cast<std::size_t>(yy)) * c.in_w +
                      static_cast<std::size_t>(xx);
                  const std::size_t small = ((b * c.out_c + o) * c.out_h + i) * c.out_w + j;
                  fn(small, kidx, big);
                }
              }
            }
  };
  for_each_tap([&](std::size_t si, std::size_t ki, std::size_t bi) { out[bi] += xv[si] * kv[ki]; });

  const bool rg = any_requires_grad({&x, &k});
  Tensor y({c.batch, c.in_c, c.in_h, c.in_w}, std::move(out), rg);
  if (rg) {
    tape.record([x, k, y, for_each_tap]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto xv = x.values();
      auto kv = k.values();
      const bool wx = x.requires_grad(), wk = k.requires_grad();
      double* gx = wx ? x.mutable_grad().data() : nullptr;
      double* gk = wk ? k.mutable_grad().data() : nullptr;
      for_each_tap([&](std::size_t si, std::size_t ki, std::size_t bi) {
        if (wx) gx[si] += g[bi] * kv[ki];
        if (wk) gk[ki] += g[bi] * xv[si];
      });
    });
  }
  return y;
}

Tensor add_channel_bias(Tape& tape, const Tensor& x, const Tensor& b) {
  require_rank(x, 4, "add_channel_bias");
  const std::size_t batch = x.dim(0), ch = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (b.size() != ch) throw ShapeError("add_channel_bias: bias width mismatch");
  auto xv = x.values();
  auto bv = b.values();
  std::vector<double> out(xv.size());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t idx = (n * ch + c) * plane + p;
        out[idx] = xv[idx] + bv[c];
      }
  const bool rg = any_requires_grad({&x, &b});
  Tensor y(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, b, y, batch, ch, plane]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      if (x.requires_grad()) x.accumulate_grad(g);
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t p = 0; p < plane; ++p) gb[c] += g[(n * ch + c) * plane + p];
      }
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t cols = x.dim(1);
  auto xv = x.values();
  std::vector<double> out(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[i] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  return Tensor({rows.size(), cols}, std::move(out));
}

}  // namespace hcmgan::ops
