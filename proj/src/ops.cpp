#include "rawpc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rawpc/error.hpp"

namespace rawpc::ops {

namespace {

void expect_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

Tensor make_output(Shape shape, Tape* tape) { return Tensor::zeros(std::move(shape), tape != nullptr); }

// Valid output range [lo, hi) for input index t*stride + offset in [0, length).
void valid_range(long offset, std::size_t stride, std::size_t length, std::size_t out_len, std::size_t& lo,
                 std::size_t& hi) {
  const long s = static_cast<long>(stride);
  long first = 0;
  if (offset < 0) first = (-offset + s - 1) / s;
  const long last_in = static_cast<long>(length) - 1 - offset;
  long end = last_in < 0 ? 0 : last_in / s + 1;
  end = std::min<long>(end, static_cast<long>(out_len));
  lo = static_cast<std::size_t>(std::max<long>(first, 0));
  hi = static_cast<std::size_t>(std::max<long>(end, static_cast<long>(lo)));
}

template <class F>
Tensor unary(const Tensor& x, F&& fwd_and_deriv) {
  Tape* tape = active_tape({&x});
  Tensor y = make_output(x.shape(), tape);
  std::vector<double> deriv(tape ? x.numel() : 0);
  auto xv = x.data();
  auto yv = y.data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double d = 0.0;
    yv[i] = fwd_and_deriv(xv[i], d);
    if (tape) deriv[i] = d;
  }
  if (tape) {
    tape->record([x, y, deriv = std::move(deriv)]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv[i];
    });
  }
  return y;
}

}  // namespace

std::size_t conv1d_out_len(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t dilation,
                           std::size_t padding) {
  if (stride < 1 || dilation < 1 || kernel < 1) throw ShapeError("conv1d: stride, dilation and kernel must be >= 1");
  const std::size_t span = (kernel - 1) * dilation + 1;
  const std::size_t padded = length + 2 * padding;
  if (span > padded) {
    throw ShapeError("conv1d: effective kernel span " + std::to_string(span) + " exceeds padded length " +
                     std::to_string(padded));
  }
  return (padded - span) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t dilation,
              std::size_t padding) {
  expect_rank(x, 3, "conv1d");
  expect_rank(w, 3, "conv1d");
  const std::size_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const std::size_t Cout = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Cin) {
    throw ShapeError("conv1d: input has " + std::to_string(Cin) + " channels, kernel expects " +
                     std::to_string(w.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Cout)) throw ShapeError("conv1d: bias shape mismatch");
  const std::size_t Lout = conv1d_out_len(L, K, stride, dilation, padding);

  Tape* tape = active_tape({&x, &w, &bias});
  Tensor y = make_output({B, Cout, Lout}, tape);
  auto xv = x.data();
  auto wv = w.data();
  auto yv = y.data();

  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      double* yrow = yv.data() + (b * Cout + co) * Lout;
      if (bias.defined()) std::fill(yrow, yrow + Lout, bias.data()[co]);
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xrow = xv.data() + (b * Cin + ci) * L;
        for (std::size_t k = 0; k < K; ++k) {
          const double wk = wv[(co * Cin + ci) * K + k];
          const long off = static_cast<long>(k * dilation) - static_cast<long>(padding);
          std::size_t lo, hi;
          valid_range(off, stride, L, Lout, lo, hi);
          if (stride == 1) {
            const double* src = xrow + (static_cast<long>(lo) + off);
            for (std::size_t t = lo; t < hi; ++t) yrow[t] += wk * src[t - lo];
          } else {
            for (std::size_t t = lo; t < hi; ++t) yrow[t] += wk * xrow[static_cast<long>(t * stride) + off];
          }
        }
      }
    }
  }

  if (tape) {
    tape->record([x, w, bias, y, stride, dilation, padding, B, Cin, L, Cout, K, Lout]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto xv = x.data();
      auto wv = w.data();
      std::span<double> gx = x.requires_grad() ? x.ensure_grad() : std::span<double>{};
      std::span<double> gw = w.requires_grad() ? w.ensure_grad() : std::span<double>{};
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t co = 0; co < Cout; ++co) {
            const double* g = gy.data() + (b * Cout + co) * Lout;
            double s = 0.0;
            for (std::size_t t = 0; t < Lout; ++t) s += g[t];
            gb[co] += s;
          }
      }
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* g = gy.data() + (b * Cout + co) * Lout;
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const double* xrow = xv.data() + (b * Cin + ci) * L;
            double* gxrow = gx.empty() ? nullptr : gx.data() + (b * Cin + ci) * L;
            for (std::size_t k = 0; k < K; ++k) {
              const std::size_t widx = (co * Cin + ci) * K + k;
              const long off = static_cast<long>(k * dilation) - static_cast<long>(padding);
              std::size_t lo, hi;
              valid_range(off, stride, L, Lout, lo, hi);
              if (gxrow) {
                const double wk = wv[widx];
                for (std::size_t t = lo; t < hi; ++t) gxrow[static_cast<long>(t * stride) + off] += wk * g[t];
              }
              if (!gw.empty()) {
                double s = 0.0;
                for (std::size_t t = lo; t < hi; ++t) s += g[t] * xrow[static_cast<long>(t * stride) + off];
                gw[widx] += s;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

namespace {

std::size_t pool_out_len(std::size_t L, std::size_t k, std::size_t stride, std::size_t padding, const char* op) {
  if (stride < 1 || k < 1) throw ShapeError(std::string(op) + ": kernel and stride must be >= 1");
  if (padding >= k) throw ShapeError(std::string(op) + ": padding must be smaller than the kernel");
  if (k > L + 2 * padding) {
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(k) + " exceeds length " + std::to_string(L));
  }
  return (L + 2 * padding - k) / stride + 1;
}

}  // namespace

Tensor maxpool1d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  expect_rank(x, 3, "maxpool1d");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t Lout = pool_out_len(L, kernel, stride, padding, "maxpool1d");
  Tape* tape = active_tape({&x});
  Tensor y = make_output({B, C, Lout}, tape);
  std::vector<std::size_t> arg(B * C * Lout);
  auto xv = x.data();
  auto yv = y.data();
  for (std::size_t r = 0; r < B * C; ++r) {
    const double* xrow = xv.data() + r * L;
    for (std::size_t t = 0; t < Lout; ++t) {
      const long start = static_cast<long>(t * stride) - static_cast<long>(padding);
      const long lo = std::max<long>(start, 0);
      const long hi = std::min<long>(start + static_cast<long>(kernel), static_cast<long>(L));
      long best = lo;
      for (long i = lo + 1; i < hi; ++i)
        if (xrow[i] > xrow[best]) best = i;
      yv[r * Lout + t] = xrow[best];
      arg[r * Lout + t] = r * L + static_cast<std::size_t>(best);
    }
  }
  if (tape) {
    tape->record([x, y, arg = std::move(arg)]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[arg[i]] += gy[i];
    });
  }
  return y;
}

Tensor avgpool1d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  expect_rank(x, 3, "avgpool1d");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t Lout = pool_out_len(L, kernel, stride, padding, "avgpool1d");
  Tape* tape = active_tape({&x});
  Tensor y = make_output({B, C, Lout}, tape);
  auto xv = x.data();
  auto yv = y.data();
  auto window = [=](std::size_t t, long& lo, long& hi) {
    const long start = static_cast<long>(t * stride) - static_cast<long>(padding);
    lo = std::max<long>(start, 0);
    hi = std::min<long>(start + static_cast<long>(kernel), static_cast<long>(L));
  };
  for (std::size_t r = 0; r < B * C; ++r) {
    const double* xrow = xv.data() + r * L;
    for (std::size_t t = 0; t < Lout; ++t) {
      long lo, hi;
      window(t, lo, hi);
      double s = 0.0;
      for (long i = lo; i < hi; ++i) s += xrow[i];
      yv[r * Lout + t] = s / static_cast<double>(hi - lo);
    }
  }
  if (tape) {
    tape->record([x, y, window, B, C, L, Lout]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t r = 0; r < B * C; ++r) {
        for (std::size_t t = 0; t < Lout; ++t) {
          long lo, hi;
          window(t, lo, hi);
          const double g = gy[r * Lout + t] / static_cast<double>(hi - lo);
          for (long i = lo; i < hi; ++i) gx[r * L + static_cast<std::size_t>(i)] += g;
        }
      }
    });
  }
  return y;
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training,
                   double momentum, double eps) {
  expect_rank(x, 3, "batchnorm1d");
  if (!(eps > 0.0)) throw ShapeError("batchnorm1d: eps must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t n = B * L;
  if (n == 0) throw ShapeError("batchnorm1d: zero-size batch");
  if (state.running_mean.size() != C || state.running_var.size() != C) {
    throw ShapeError("batchnorm1d: running statistics sized for " + std::to_string(state.running_mean.size()) +
                     " channels, input has " + std::to_string(C));
  }
  if (gamma.defined() && gamma.numel() != C) throw ShapeError("batchnorm1d: gamma shape mismatch");
  if (beta.defined() && beta.numel() != C) throw ShapeError("batchnorm1d: beta shape mismatch");

  Tape* tape = active_tape({&x, &gamma, &beta});
  Tensor y = make_output(x.shape(), tape);
  auto xv = x.data();
  auto yv = y.data();
  std::vector<double> inv_std(C);
  std::vector<double> xhat(tape ? x.numel() : 0);

  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* row = xv.data() + (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) s += row[t];
      }
      mean = s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* row = xv.data() + (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) ss += (row[t] - mean) * (row[t] - mean);
      }
      var = ss / static_cast<double>(n);
      const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mean;
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[c] = is;
    const double g = gamma.defined() ? gamma.data()[c] : 1.0;
    const double bt = beta.defined() ? beta.data()[c] : 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t base = (b * C + c) * L;
      for (std::size_t t = 0; t < L; ++t) {
        const double h = (xv[base + t] - mean) * is;
        if (tape) xhat[base + t] = h;
        yv[base + t] = g * h + bt;
      }
    }
  }

  if (tape) {
    tape->record([x, gamma, beta, y, training, inv_std = std::move(inv_std), xhat = std::move(xhat), B, C,
                  L]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      const double n = static_cast<double>(B * L);
      std::span<double> gx = x.requires_grad() ? x.ensure_grad() : std::span<double>{};
      for (std::size_t c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gh = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t base = (b * C + c) * L;
          for (std::size_t t = 0; t < L; ++t) {
            sum_g += gy[base + t];
            sum_gh += gy[base + t] * xhat[base + t];
          }
        }
        if (gamma.defined() && gamma.requires_grad()) gamma.ensure_grad()[c] += sum_gh;
        if (beta.defined() && beta.requires_grad()) beta.ensure_grad()[c] += sum_g;
        if (gx.empty()) continue;
        const double g = gamma.defined() ? gamma.data()[c] : 1.0;
        const double k = g * inv_std[c];
        const double mean_g = sum_g / n, mean_gh = sum_gh / n;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t base = (b * C + c) * L;
          for (std::size_t t = 0; t < L; ++t) {
            if (training) {
              gx[base + t] += k * (gy[base + t] - mean_g - xhat[base + t] * mean_gh);
            } else {
              gx[base + t] += k * gy[base + t];
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(x, [slope](double v, double& d) {
    if (v >= 0.0) {
      d = 1.0;
      return v;
    }
    d = slope;
    return slope * v;
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](double v, double& d) {
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    d = s * (1.0 - s);
    return s;
  });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v, double& d) {
    const double t = std::tanh(v);
    d = 1.0 - t * t;
    return t;
  });
}

Tensor scale(const Tensor& x, double c) {
  return unary(x, [c](double v, double& d) {
    d = c;
    return c * v;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_rank(x, 2, "linear");
  expect_rank(w, 2, "linear");
  const std::size_t B = x.dim(0), D = x.dim(1), Dout = w.dim(0);
  if (w.dim(1) != D) {
    throw ShapeError("linear: input dim " + std::to_string(D) + " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && b.numel() != Dout) throw ShapeError("linear: bias shape mismatch");
  Tape* tape = active_tape({&x, &w, &b});
  Tensor y = make_output({B, Dout}, tape);
  auto xv = x.data();
  auto wv = w.data();
  auto yv = y.data();
  for (std::size_t i = 0; i < B; ++i) {
    const double* xr = xv.data() + i * D;
    for (std::size_t o = 0; o < Dout; ++o) {
      const double* wr = wv.data() + o * D;
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += xr[d] * wr[d];
      yv[i * Dout + o] = s + (b.defined() ? b.data()[o] : 0.0);
    }
  }
  if (tape) {
    tape->record([x, w, b, y, B, D, Dout]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto xv = x.data();
      auto wv = w.data();
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < B; ++i)
          for (std::size_t o = 0; o < Dout; ++o) {
            const double g = gy[i * Dout + o];
            if (g == 0.0) continue;
            const double* wr = wv.data() + o * D;
            double* gr = gx.data() + i * D;
            for (std::size_t d = 0; d < D; ++d) gr[d] += g * wr[d];
          }
      }
      if (w.requires_grad()) {
        auto gw = w.ensure_grad();
        for (std::size_t i = 0; i < B; ++i)
          for (std::size_t o = 0; o < Dout; ++o) {
            const double g = gy[i * Dout + o];
            if (g == 0.0) continue;
            const double* xr = xv.data() + i * D;
            double* gr = gw.data() + o * D;
            for (std::size_t d = 0; d < D; ++d) gr[d] += g * xr[d];
          }
      }
      if (b.defined() && b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < B; ++i)
          for (std::size_t o = 0; o < Dout; ++o) gb[o] += gy[i * Dout + o];
      }
    });
  }
  return y;
}

namespace {

template <class Fwd, class GradA, class GradB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, GradA ga, GradB gb) {
  expect_same_shape(a, b, op);
  Tape* tape = active_tape({&a, &b});
  Tensor y = make_output(a.shape(), tape);
  auto av = a.data();
  auto bv = b.data();
  auto yv = y.data();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = fwd(av[i], bv[i]);
  if (tape) {
    tape->record([a, b, y, ga, gb]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto av = a.data();
      auto bv = b.data();
      if (a.requires_grad()) {
        auto g = a.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += ga(gy[i], av[i], bv[i]);
      }
      if (b.requires_grad()) {
        auto g = b.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gb(gy[i], av[i], bv[i]);
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor sum(const Tensor& x) {
  Tape* tape = active_tape({&x});
  Tensor y = make_output({1}, tape);
  double s = 0.0;
  for (double v : x.data()) s += v;
  y.data()[0] = s;
  if (tape) {
    tape->record([x, y]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      const double g = y.grad()[0];
      for (double& gx : x.ensure_grad()) gx += g;
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& m) {
  expect_rank(m, 2, "softmax_rows");
  const std::size_t R = m.dim(0), C = m.dim(1);
  if (C == 0) throw ShapeError("softmax: empty row");
  Tape* tape = active_tape({&m});
  Tensor y = make_output(m.shape(), tape);
  auto mv = m.data();
  auto yv = y.data();
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = mv.data() + r * C;
    double* out = yv.data() + r * C;
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      out[c] = std::exp(row[c] - mx);
      z += out[c];
    }
    for (std::size_t c = 0; c < C; ++c) out[c] /= z;
  }
  if (tape) {
    tape->record([m, y, R, C]() mutable {
      if (!y.has_grad() || !m.requires_grad()) return;
      auto gy = y.grad();
      auto yv = y.data();
      auto gm = m.ensure_grad();
      for (std::size_t r = 0; r < R; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += gy[r * C + c] * yv[r * C + c];
        for (std::size_t c = 0; c < C; ++c) gm[r * C + c] += yv[r * C + c] * (gy[r * C + c] - dot);
      }
    });
  }
  return y;
}

Tensor softmax(const Tensor& v) {
  expect_rank(v, 1, "softmax");
  Tape* tape = active_tape({&v});
  const std::size_t n = v.dim(0);
  Tensor y = make_output({n}, tape);
  auto vv = v.data();
  auto yv = y.data();
  if (n == 0) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(vv.begin(), vv.end());
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    yv[i] = std::exp(vv[i] - mx);
    z += yv[i];
  }
  for (std::size_t i = 0; i < n; ++i) yv[i] /= z;
  if (tape) {
    tape->record([v, y, n]() mutable {
      if (!y.has_grad() || !v.requires_grad()) return;
      auto gy = y.grad();
      auto yv = y.data();
      auto gv = v.ensure_grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += gy[i] * yv[i];
      for (std::size_t i = 0; i < n; ++i) gv[i] += yv[i] * (gy[i] - dot);
    });
  }
  return y;
}

Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& weights, std::size_t offset) {
  if (xs.empty()) throw ShapeError("weighted_sum: no inputs");
  if (offset + xs.size() > weights.numel()) throw ShapeError("weighted_sum: weight index out of range");
  for (const auto& x : xs) expect_same_shape(xs[0], x, "weighted_sum");
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  inputs.push_back(weights);
  Tape* tape = active_tape(std::span<const Tensor>(inputs));
  Tensor y = make_output(xs[0].shape(), tape);
  auto yv = y.data();
  auto wv = weights.data();
  for (std::size_t o = 0; o < xs.size(); ++o) {
    const double w = wv[offset + o];
    auto xv = xs[o].data();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += w * xv[i];
  }
  if (tape) {
    inputs.pop_back();
    tape->record([inputs = std::move(inputs), weights, y, offset]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto wv = weights.data();
      std::span<double> gw = weights.requires_grad() ? weights.ensure_grad() : std::span<double>{};
      for (std::size_t o = 0; o < inputs.size(); ++o) {
        auto xv = inputs[o].data();
        if (!gw.empty()) {
          double s = 0.0;
          for (std::size_t i = 0; i < gy.size(); ++i) s += gy[i] * xv[i];
          gw[offset + o] += s;
        }
        if (inputs[o].requires_grad()) {
          auto gx = inputs[o].ensure_grad();
          const double w = wv[offset + o];
          for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += w * gy[i];
        }
      }
    });
  }
  return y;
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const std::size_t B = xs[0].dim(0), L = xs[0].dim(2);
  std::size_t Ctot = 0;
  for (const auto& x : xs) {
    expect_rank(x, 3, "concat_channels");
    if (x.dim(0) != B || x.dim(2) != L) throw ShapeError("concat_channels: batch/length mismatch");
    Ctot += x.dim(1);
  }
  Tape* tape = active_tape(xs);
  Tensor y = make_output({B, Ctot, L}, tape);
  auto yv = y.data();
  std::size_t c0 = 0;
  for (const auto& x : xs) {
    const std::size_t C = x.dim(1);
    auto xv = x.data();
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(xv.data() + b * C * L, C * L, yv.data() + (b * Ctot + c0) * L);
    c0 += C;
  }
  if (tape) {
    tape->record([inputs = std::vector<Tensor>(xs.begin(), xs.end()), y, B, Ctot, L]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      std::size_t c0 = 0;
      for (auto& x : inputs) {
        const std::size_t C = x.dim(1);
        if (x.requires_grad()) {
          auto gx = x.ensure_grad();
          for (std::size_t b = 0; b < B; ++b) {
            const double* src = gy.data() + (b * Ctot + c0) * L;
            double* dst = gx.data() + b * C * L;
            for (std::size_t i = 0; i < C * L; ++i) dst[i] += src[i];
          }
        }
        c0 += C;
      }
    });
  }
  return y;
}

Tensor select_channels(const Tensor& x, std::span<const std::size_t> idx) {
  expect_rank(x, 3, "select_channels");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), K = idx.size();
  for (auto c : idx)
    if (c >= C) throw ShapeError("select_channels: channel index out of range");
  Tape* tape = active_tape({&x});
  Tensor y = make_output({B, K, L}, tape);
  auto xv = x.data();
  auto yv = y.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k)
      std::copy_n(xv.data() + (b * C + idx[k]) * L, L, yv.data() + (b * K + k) * L);
  if (tape) {
    tape->record([x, y, idx = std::vector<std::size_t>(idx.begin(), idx.end()), B, C, L, K]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
          const double* src = gy.data() + (b * K + k) * L;
          double* dst = gx.data() + (b * C + idx[k]) * L;
          for (std::size_t t = 0; t < L; ++t) dst[t] += src[t];
        }
    });
  }
  return y;
}

Tensor merge_channels(const Tensor& x, const Tensor& y, std::span<const std::size_t> idx) {
  expect_rank(x, 3, "merge_channels");
  expect_rank(y, 3, "merge_channels");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), K = idx.size();
  if (y.dim(0) != B || y.dim(1) != K || y.dim(2) != L) throw ShapeError("merge_channels: replacement shape mismatch");
  std::vector<char> replaced(C, 0);
  for (auto c : idx) {
    if (c >= C) throw ShapeError("merge_channels: channel index out of range");
    replaced[c] = 1;
  }
  Tape* tape = active_tape({&x, &y});
  Tensor out = make_output(x.shape(), tape);
  auto xv = x.data();
  auto yv = y.data();
  auto ov = out.data();
  std::copy(xv.begin(), xv.end(), ov.begin());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) std::copy_n(yv.data() + (b * K + k) * L, L, ov.data() + (b * C + idx[k]) * L);
  if (tape) {
    tape->record([x, y, out, replaced = std::move(replaced), idx = std::vector<std::size_t>(idx.begin(), idx.end()),
                  B, C, L, K]() mutable {
      if (!out.has_grad()) return;
      auto go = out.grad();
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            if (replaced[c]) continue;
            const std::size_t base = (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t) gx[base + t] += go[base + t];
          }
      }
      if (y.requires_grad()) {
        auto gy = y.ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t k = 0; k < K; ++k) {
            const double* src = go.data() + (b * C + idx[k]) * L;
            double* dst = gy.data() + (b * K + k) * L;
            for (std::size_t t = 0; t < L; ++t) dst[t] += src[t];
          }
      }
    });
  }
  return out;
}

Tensor zero_leading_slices(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() < 1 || begin + count > x.dim(0)) throw ShapeError("zero_leading_slices: range out of bounds");
  const std::size_t stride = x.dim(0) ? x.numel() / x.dim(0) : 0;
  Tape* tape = active_tape({&x});
  Tensor y = make_output(x.shape(), tape);
  auto xv = x.data();
  auto yv = y.data();
  std::copy(xv.begin(), xv.end(), yv.begin());
  std::fill(yv.begin() + begin * stride, yv.begin() + (begin + count) * stride, 0.0);
  if (tape) {
    tape->record([x, y, begin, count, stride]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const std::size_t slice = i / stride;
        if (slice >= begin && slice < begin + count) continue;
        gx[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor crop_time(const Tensor& x, std::size_t length) {
  expect_rank(x, 3, "crop_time");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (length > L) throw ShapeError("crop_time: target longer than input");
  if (length == L) return x;
  Tape* tape = active_tape({&x});
  Tensor y = make_output({B, C, length}, tape);
  auto xv = x.data();
  auto yv = y.data();
  for (std::size_t r = 0; r < B * C; ++r) std::copy_n(xv.data() + r * L, length, yv.data() + r * length);
  if (tape) {
    tape->record([x, y, B, C, L, length]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t r = 0; r < B * C; ++r)
        for (std::size_t t = 0; t < length; ++t) gx[r * L + t] += gy[r * length + t];
    });
  }
  return y;
}

Tensor time_step(const Tensor& x, std::size_t t) {
  expect_rank(x, 3, "time_step");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (t >= L) throw ShapeError("time_step: index out of range");
  Tape* tape = active_tape({&x});
  Tensor y = make_output({B, C}, tape);
  auto xv = x.data();
  auto yv = y.data();
  for (std::size_t r = 0; r < B * C; ++r) yv[r] = xv[r * L + t];
  if (tape) {
    tape->record([x, y, B, C, L, t]() mutable {
      if (!y.has_grad() || !x.requires_grad()) return;
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t r = 0; r < B * C; ++r) gx[r * L + t] += gy[r];
    });
  }
  return y;
}

Tensor cosine_rows(const Tensor& e, const Tensor& w, double eps) {
  expect_rank(e, 2, "cosine_rows");
  expect_rank(w, 2, "cosine_rows");
  const std::size_t B = e.dim(0), D = e.dim(1), K = w.dim(0);
  if (w.dim(1) != D) throw ShapeError("cosine_rows: embedding/weight dim mismatch");
  Tape* tape = active_tape({&e, &w});
  Tensor y = make_output({B, K}, tape);
  auto ev = e.data();
  auto wv = w.data();
  auto yv = y.data();
  auto norm = [D](const double* r) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += r[d] * r[d];
    return std::sqrt(s);
  };
  std::vector<double> ne(B), nw(K);
  std::vector<char> e_clamped(B), w_clamped(K);
  for (std::size_t b = 0; b < B; ++b) {
    const double n = norm(ev.data() + b * D);
    e_clamped[b] = n < eps;
    ne[b] = std::max(n, eps);
  }
  for (std::size_t k = 0; k < K; ++k) {
    const double n = norm(wv.data() + k * D);
    w_clamped[k] = n < eps;
    nw[k] = std::max(n, eps);
  }
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += ev[b * D + d] * wv[k * D + d];
      yv[b * K + k] = dot / (ne[b] * nw[k]);
    }
  if (tape) {
    tape->record([e, w, y, ne = std::move(ne), nw = std::move(nw), e_clamped = std::move(e_clamped),
                  w_clamped = std::move(w_clamped), B, D, K]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto yv = y.data();
      auto ev = e.data();
      auto wv = w.data();
      std::span<double> ge = e.requires_grad() ? e.ensure_grad() : std::span<double>{};
      std::span<double> gw = w.requires_grad() ? w.ensure_grad() : std::span<double>{};
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
          const double g = gy[b * K + k];
          const double c = yv[b * K + k];
          const double inv = 1.0 / (ne[b] * nw[k]);
          for (std::size_t d = 0; d < D; ++d) {
            const double ed = ev[b * D + d], wd = wv[k * D + d];
            if (!ge.empty()) {
              double de = wd * inv;
              if (!e_clamped[b]) de -= c * ed / (ne[b] * ne[b]);
              ge[b * D + d] += g * de;
            }
            if (!gw.empty()) {
              double dw = ed * inv;
              if (!w_clamped[k]) dw -= c * wd / (nw[k] * nw[k]);
              gw[k * D + d] += g * dw;
            }
          }
        }
    });
  }
  return y;
}

Tensor mse_loss(const Tensor& pred, std::span<const double> target) {
  if (pred.numel() != target.size()) throw ShapeError("mse_loss: target size mismatch");
  if (target.empty()) throw ShapeError("mse_loss: empty input");
  Tape* tape = active_tape({&pred});
  Tensor y = make_output({1}, tape);
  auto pv = pred.data();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += (pv[i] - target[i]) * (pv[i] - target[i]);
  const double n = static_cast<double>(pv.size());
  y.data()[0] = s / n;
  if (tape) {
    tape->record([pred, y, target = std::vector<double>(target.begin(), target.end()), n]() mutable {
      if (!y.has_grad() || !pred.requires_grad()) return;
      const double g = y.grad()[0];
      auto pv = pred.data();
      auto gp = pred.ensure_grad();
      for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g * 2.0 * (pv[i] - target[i]) / n;
    });
  }
  return y;
}

}  // namespace rawpc::ops
