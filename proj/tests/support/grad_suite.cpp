#include "grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rawpc/frontend.hpp"
#include "rawpc/model.hpp"
#include "rawpc/nn.hpp"
#include "rawpc/ops.hpp"

namespace rawpc::testing {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// Values bounded away from zero so a finite-difference step never crosses a kink.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) {
    const double mag = 0.05 + rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Distinct values at least 0.01 apart, in random order, so pooling windows have no near-ties.
Tensor well_separated(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  auto d = t.data();
  std::vector<double> vals(d.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = -1.0 + 0.01 * static_cast<double>(i);
  for (std::size_t i = vals.size(); i > 1; --i) std::swap(vals[i - 1], vals[rng.uniform_int(i)]);
  std::copy(vals.begin(), vals.end(), d.begin());
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_int(hi - lo + 1); }

double projected(const Tensor& out, const Tensor& proj) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) s += out[i] * proj[i];
  return s;
}

struct Runner {
  Rng& rng;
  std::vector<GradCase> cases;

  void run(const std::string& name, std::size_t shapes,
           const std::function<std::pair<std::string, double>(Rng&)>& one) {
    GradCase c{name, shapes, 0.0, ""};
    for (std::size_t i = 0; i < shapes; ++i) {
      auto [desc, err] = one(rng);
      if (c.worst_shape.empty() || !(err <= c.max_rel_error)) {
        c.max_rel_error = std::isnan(err) ? INFINITY : err;
        c.worst_shape = desc;
      }
    }
    cases.push_back(std::move(c));
  }
};

std::string dims(std::initializer_list<std::size_t> v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : "x") + std::to_string(x);
  return s;
}

}  // namespace

double grad_check(const GradFn& f, std::vector<Tensor> inputs, Rng& rng, double eps) {
  Tensor proj;
  {
    NoGradGuard ng;
    proj = random_tensor(f(inputs).shape(), rng);
  }
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = ops::sum(ops::mul(f(inputs), proj));
    }
    tape.backward(loss);
  }
  double worst = 0.0;
  NoGradGuard ng;
  for (auto& t : inputs) {
    const bool has = t.has_grad();
    std::vector<double> analytic(t.numel(), 0.0);
    if (has) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double orig = d[i];
      d[i] = orig + eps;
      const double up = projected(f(inputs), proj);
      d[i] = orig - eps;
      const double down = projected(f(inputs), proj);
      d[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kRelFloor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (!(rel <= worst)) worst = std::isnan(rel) ? INFINITY : rel;
    }
  }
  return worst;
}

std::vector<GradCase> run_gradient_suite(std::uint64_t seed, std::size_t shapes) {
  Rng rng(seed);
  Runner r{rng, {}};

  r.run("conv1d", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 2), ci = pick(g, 1, 3), co = pick(g, 1, 3), k = pick(g, 1, 5);
    const std::size_t d = pick(g, 1, 3), s = pick(g, 1, 2), p = pick(g, 0, 3);
    const std::size_t span = (k - 1) * d + 1;
    const std::size_t L = (span > 2 * p ? span - 2 * p : 1) + pick(g, 0, 5);
    const bool bias = g.uniform() < 0.5;
    std::vector<Tensor> in{random_tensor({B, ci, L}, g), random_tensor({co, ci, k}, g)};
    if (bias) in.push_back(random_tensor({co}, g));
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) { return ops::conv1d(v[0], v[1], bias ? v[2] : Tensor(), s, d, p); },
        in, g);
    return std::pair{dims({B, ci, L, co, k}) + " s" + std::to_string(s) + " d" + std::to_string(d) + " p" +
                         std::to_string(p),
                     e};
  });

  r.run("maxpool1d", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 2), C = pick(g, 1, 3), k = pick(g, 1, 4), s = pick(g, 1, 3);
    const std::size_t p = pick(g, 0, k / 2), L = k + pick(g, 0, 8);
    const double e = grad_check([=](const std::vector<Tensor>& v) { return ops::maxpool1d(v[0], k, s, p); },
                                {well_separated({B, C, L}, g)}, g);
    return std::pair{dims({B, C, L}) + " k" + std::to_string(k) + " s" + std::to_string(s), e};
  });

  r.run("avgpool1d", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 2), C = pick(g, 1, 3), k = pick(g, 1, 4), s = pick(g, 1, 3);
    const std::size_t p = pick(g, 0, k / 2), L = k + pick(g, 0, 8);
    const double e = grad_check([=](const std::vector<Tensor>& v) { return ops::avgpool1d(v[0], k, s, p); },
                                {random_tensor({B, C, L}, g)}, g);
    return std::pair{dims({B, C, L}) + " k" + std::to_string(k) + " s" + std::to_string(s), e};
  });

  r.run("batchnorm1d", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 3), C = pick(g, 1, 3), L = pick(g, 2, 6);
    const bool training = g.uniform() < 0.7;
    const bool affine = g.uniform() < 0.7;
    auto state = std::make_shared<ops::BatchNormState>(C);
    for (std::size_t c = 0; c < C; ++c) {
      state->running_mean[c] = g.normal();
      state->running_var[c] = 0.5 + g.uniform();
    }
    std::vector<Tensor> in{random_tensor({B, C, L}, g)};
    if (affine) {
      in.push_back(random_tensor({C}, g));
      in.push_back(random_tensor({C}, g));
    }
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) {
          return ops::batchnorm1d(v[0], affine ? v[1] : Tensor(), affine ? v[2] : Tensor(), *state, training);
        },
        in, g);
    return std::pair{dims({B, C, L}) + (training ? " train" : " eval") + (affine ? " affine" : ""), e};
  });

  r.run("leaky_relu", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 3), C = pick(g, 1, 3), L = pick(g, 1, 8);
    const double slope = g.uniform(0.0, 0.5);
    const double e = grad_check([=](const std::vector<Tensor>& v) { return ops::leaky_relu(v[0], slope); },
                                {away_from_zero({B, C, L}, g)}, g);
    return std::pair{dims({B, C, L}), e};
  });

  r.run("linear", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 4), D = pick(g, 1, 6), O = pick(g, 1, 5);
    const bool bias = g.uniform() < 0.5;
    std::vector<Tensor> in{random_tensor({B, D}, g), random_tensor({O, D}, g)};
    if (bias) in.push_back(random_tensor({O}, g));
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) { return ops::linear(v[0], v[1], bias ? v[2] : Tensor()); }, in, g);
    return std::pair{dims({B, D, O}), e};
  });

  r.run("gru_step", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 3), D = pick(g, 1, 4), H = pick(g, 1, 4);
    GruLayer layer(D, H, g);
    std::vector<Tensor> in{random_tensor({B, D}, g), random_tensor({B, H}, g, 0.5),
                           layer.w_ir, layer.w_iz, layer.w_in, layer.w_hr, layer.w_hz, layer.w_hn,
                           layer.b_ir, layer.b_iz, layer.b_in, layer.b_hr, layer.b_hz, layer.b_hn};
    const double e = grad_check(
        [](const std::vector<Tensor>& v) {
          GruLayer l;
          l.w_ir = v[2]; l.w_iz = v[3]; l.w_in = v[4];
          l.w_hr = v[5]; l.w_hz = v[6]; l.w_hn = v[7];
          l.b_ir = v[8]; l.b_iz = v[9]; l.b_in = v[10];
          l.b_hr = v[11]; l.b_hz = v[12]; l.b_hn = v[13];
          return gru_cell(l, v[0], v[1]);
        },
        in, g);
    return std::pair{dims({B, D, H}), e};
  });

  r.run("softmax", shapes, [](Rng& g) {
    const bool rows = g.uniform() < 0.5;
    const std::size_t R = pick(g, 1, 4), C = pick(g, 1, 8);
    const double e = rows ? grad_check([](const std::vector<Tensor>& v) { return ops::softmax_rows(v[0]); },
                                       {random_tensor({R, C}, g)}, g)
                          : grad_check([](const std::vector<Tensor>& v) { return ops::softmax(v[0]); },
                                       {random_tensor({C}, g)}, g);
    return std::pair{rows ? dims({R, C}) : dims({C}), e};
  });

  r.run("sinc_kernels", shapes, [](Rng& g) {
    const std::size_t C = pick(g, 1, 4), K = pick(g, 5, 33);
    const double sr = g.uniform() < 0.5 ? 4000.0 : 16000.0;
    Tensor f1 = Tensor::zeros({C}), f2 = Tensor::zeros({C});
    for (std::size_t c = 0; c < C; ++c) {
      f1[c] = g.uniform(0.0, 0.4 * sr);
      f2[c] = f1[c] + g.uniform(10.0, 0.5 * sr - f1[c]);
    }
    const auto window = hamming_window(K);
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) { return sinc_kernels(v[0], v[1], window, sr); }, {f1, f2}, g);
    return std::pair{dims({C, K}), e};
  });

  r.run("p2sgrad_loss", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 5), D = pick(g, 1, 6);
    std::vector<int> labels(B);
    for (auto& l : labels) l = static_cast<int>(g.uniform_int(2));
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) { return p2sgrad_loss(ops::cosine_rows(v[0], v[1]), labels); },
        {random_tensor({B, D}, g), random_tensor({2, D}, g)}, g);
    return std::pair{dims({B, D}), e};
  });

  r.run("sigmoid_tanh", shapes, [](Rng& g) {
    const std::size_t n = pick(g, 1, 10);
    const bool sig = g.uniform() < 0.5;
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) { return sig ? ops::sigmoid(v[0]) : ops::tanh(v[0]); },
        {random_tensor({n}, g, 2.0)}, g);
    return std::pair{dims({n}) + (sig ? " sigmoid" : " tanh"), e};
  });

  r.run("weighted_sum", shapes, [](Rng& g) {
    const std::size_t n = pick(g, 1, 4), off = pick(g, 0, 3), L = pick(g, 1, 6);
    std::vector<Tensor> in;
    for (std::size_t i = 0; i < n; ++i) in.push_back(random_tensor({1, 2, L}, g));
    in.push_back(random_tensor({n + off}, g));
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) {
          std::vector<Tensor> xs(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
          return ops::weighted_sum(xs, v[n], off);
        },
        in, g);
    return std::pair{dims({n, L}), e};
  });

  r.run("channel_routing", shapes, [](Rng& g) {
    const std::size_t B = pick(g, 1, 2), C = pick(g, 2, 6), L = pick(g, 2, 6);
    std::vector<std::size_t> idx(C);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = C; i > 1; --i) std::swap(idx[i - 1], idx[g.uniform_int(i)]);
    idx.resize(pick(g, 1, C));
    std::sort(idx.begin(), idx.end());
    const std::size_t crop = pick(g, 1, L);
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) {
          Tensor sel = ops::select_channels(v[0], idx);
          Tensor merged = ops::merge_channels(v[0], ops::tanh(sel), idx);
          std::vector<Tensor> parts{merged, v[1]};
          return ops::crop_time(ops::concat_channels(parts), crop);
        },
        {random_tensor({B, C, L}, g), random_tensor({B, 2, L}, g)}, g);
    return std::pair{dims({B, C, L}), e};
  });

  r.run("clamp_bands", shapes, [](Rng& g) {
    const std::size_t C = pick(g, 1, 5);
    const double nyq = 2000.0, min_band = 50.0;
    Tensor low = Tensor::zeros({C}), band = Tensor::zeros({C});
    for (std::size_t c = 0; c < C; ++c) {
      low[c] = (g.uniform() < 0.5 ? -1.0 : 1.0) * g.uniform(10.0, 1500.0);
      band[c] = (g.uniform() < 0.5 ? -1.0 : 1.0) * g.uniform(60.0, 400.0);
    }
    const double e = grad_check(
        [=](const std::vector<Tensor>& v) {
          auto [f1, f2] = clamp_bands(v[0], v[1], nyq, min_band);
          return ops::add(ops::mul(f1, f1), ops::mul(f2, f1));
        },
        {low, band}, g);
    return std::pair{dims({C}), e};
  });

  return r.cases;
}

}  // namespace rawpc::testing
