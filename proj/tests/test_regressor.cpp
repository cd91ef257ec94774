#include "gateadapt/nn.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "gateadapt/rng.hpp"

using namespace gateadapt;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_size = 8;
  c.conv_channels = {2, 3, 2, 2};
  c.pool_blocks = 2;
  c.hidden = 5;
  return c;
}

Tensor random_batch(const ModelConfig& cfg, std::int64_t n, Rng& rng) {
  Tensor t({n, 1, cfg.input_size, cfg.input_size});
  for (double& v : t.data) v = rng.uniform(0.0, 1.0);
  return t;
}

// scalar probe objective: fixed random linear functional of the outputs
double objective(const Tensor& out, const Tensor& coeff) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * coeff.data[i];
  return s;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

TEST_CASE("init_model is deterministic per seed") {
  const ModelConfig cfg = tiny_config();
  const ModelParams a = init_model(cfg, 7);
  const ModelParams b = init_model(cfg, 7);
  const ModelParams c = init_model(cfg, 8);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
}

TEST_CASE("init_model bounds, zero biases, unit batch-norm scale") {
  const ModelConfig cfg = ModelConfig::desk();
  const ModelParams p = init_model(cfg, 3);
  for (const ParamBlock& b : p.layout.blocks) {
    const double* v = p.values.data() + b.offset;
    if (b.is_weight) {
      std::int64_t fan_in = 1;
      for (std::size_t d = 1; d < b.shape.size(); ++d) fan_in *= b.shape[d];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      double max_abs = 0.0;
      for (std::int64_t i = 0; i < b.size; ++i)
        max_abs = std::max(max_abs, std::abs(v[i]));
      CHECK(max_abs <= bound);
      CHECK(max_abs > 0.5 * bound);  // actually spread over the range
    } else if (b.name.find(".gamma") != std::string::npos) {
      for (std::int64_t i = 0; i < b.size; ++i) CHECK(v[i] == 1.0);
    } else {
      for (std::int64_t i = 0; i < b.size; ++i) CHECK(v[i] == 0.0);
    }
  }
  for (double m : p.running_mean) CHECK(m == 0.0);
  for (double s : p.running_var) CHECK(s == 1.0);
}

TEST_CASE("parameter counts: desk and paper-scale configurations") {
  CHECK(init_model(ModelConfig::desk(), 1).count() == 138321);
  const std::int64_t full = make_layout(ModelConfig::full()).total;
  CHECK(full == 6657321);
  CHECK(full >= 4800000);
  CHECK(full <= 7200000);
}

TEST_CASE("config validation rejects bad configs") {
  ModelConfig c = tiny_config();
  c.conv_channels[2] = 0;
  CHECK_THROWS_AS(init_model(c, 1), ConfigInvalid);
  c = tiny_config();
  c.input_size = 10;  // not divisible by 2^pool_blocks
  CHECK_THROWS_AS(make_layout(c), ConfigInvalid);
  c = tiny_config();
  c.kernel = 4;
  CHECK_THROWS_AS(make_layout(c), ConfigInvalid);
}

TEST_CASE("forward output shape and zero final layer") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_model(cfg, 2);
  Rng rng(5);
  for (std::int64_t n : {std::int64_t{1}, std::int64_t{4}}) {
    const Tensor batch = random_batch(cfg, n, rng);
    ForwardResult r = forward(p, batch, Mode::kTrain);
    CHECK(r.out.shape == std::vector<std::int64_t>{n, 9});
    CHECK(r.hidden_features.shape == std::vector<std::int64_t>{n, cfg.hidden});
  }

  // zero out the final linear layer: any input maps to the zero vector
  const ParamBlock& w = p.layout.find("fc1.weight");
  const ParamBlock& b = p.layout.find("fc1.bias");
  std::fill_n(p.values.begin() + w.offset, w.size, 0.0);
  std::fill_n(p.values.begin() + b.offset, b.size, 0.0);
  ForwardResult r = forward(p, random_batch(cfg, 2, rng), Mode::kEval);
  for (double v : r.out.data) CHECK(v == 0.0);
}

TEST_CASE("forward rejects mismatched input shapes") {
  ModelParams p = init_model(tiny_config(), 2);
  Tensor bad({2, 1, 16, 16});
  CHECK_THROWS_AS(forward(p, bad, Mode::kEval), ShapeMismatch);
  Tensor bad2({2, 3, 8, 8});
  CHECK_THROWS_AS(forward(p, bad2, Mode::kEval), ShapeMismatch);
}

TEST_CASE("eval-mode forward is repeatable and batch-size invariant") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_model(cfg, 11);
  Rng rng(6);
  // push the model away from fresh init so running stats are non-trivial
  const Tensor warm = random_batch(cfg, 8, rng);
  forward(p, warm, Mode::kTrain);

  const Tensor batch = random_batch(cfg, 5, rng);
  const ForwardResult a = forward(p, batch, Mode::kEval);
  const ForwardResult b = forward(p, batch, Mode::kEval);
  CHECK(a.out.data == b.out.data);

  for (std::int64_t i = 0; i < 5; ++i) {
    Tensor single({1, 1, cfg.input_size, cfg.input_size});
    std::copy_n(batch.ptr() + i * cfg.input_size * cfg.input_size,
                cfg.input_size * cfg.input_size, single.ptr());
    const ForwardResult s = forward_eval(p, single);
    for (int j = 0; j < 9; ++j)
      CHECK(s.out.data[static_cast<std::size_t>(j)] ==
            doctest::Approx(a.out.data[static_cast<std::size_t>(i * 9 + j)])
                .epsilon(1e-12));
  }
}

TEST_CASE("train-mode forward updates running statistics") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_model(cfg, 11);
  const std::vector<double> rm0 = p.running_mean, rv0 = p.running_var;
  Rng rng(7);
  forward(p, random_batch(cfg, 4, rng), Mode::kTrain);
  CHECK(p.running_mean != rm0);
  CHECK(p.running_var != rv0);

  // eval mode leaves them untouched
  const std::vector<double> rm1 = p.running_mean;
  forward(p, random_batch(cfg, 4, rng), Mode::kEval);
  CHECK(p.running_mean == rm1);
}

TEST_CASE("batch-norm train-mode output is standardized per channel") {
  Rng rng(8);
  const std::int64_t n = 8, c = 3, h = 5, w = 5;
  Tensor x({n, c, h, w});
  for (double& v : x.data) v = rng.uniform(-2.0, 3.0);
  Tensor y(x.shape), xhat;
  std::vector<double> inv_std;
  std::vector<double> gamma(c, 1.7), beta(c, 0.3), rm(c, 0.0), rv(c, 1.0);
  nn_detail::batchnorm_forward(gamma.data(), beta.data(), 1e-5, Mode::kTrain, 0.1,
                               rm.data(), rv.data(), x, y, xhat, inv_std);
  const std::int64_t m = n * h * w;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mean = 0.0, var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double* p = xhat.ptr() + (i * c + ch) * h * w;
      for (std::int64_t j = 0; j < h * w; ++j) mean += p[j];
    }
    mean /= static_cast<double>(m);
    for (std::int64_t i = 0; i < n; ++i) {
      const double* p = xhat.ptr() + (i * c + ch) * h * w;
      for (std::int64_t j = 0; j < h * w; ++j) var += (p[j] - mean) * (p[j] - mean);
    }
    var /= static_cast<double>(m);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("linear layer gradient is the input/out_grad outer product") {
  // single sample: dW[o][i] = dy[o] * x[i]
  const std::int64_t in = 4, out = 3;
  Rng rng(9);
  Tensor x({1, in}), dy({1, out}), dx({1, in});
  for (double& v : x.data) v = rng.uniform(-1, 1);
  for (double& v : dy.data) v = rng.uniform(-1, 1);
  std::vector<double> w(static_cast<std::size_t>(in * out)), dw(w.size(), 0.0),
      db(static_cast<std::size_t>(out), 0.0);
  for (double& v : w) v = rng.uniform(-1, 1);
  nn_detail::linear_backward(w.data(), x, dy, dw.data(), db.data(), dx);
  for (std::int64_t o = 0; o < out; ++o)
    for (std::int64_t i = 0; i < in; ++i)
      CHECK(dw[static_cast<std::size_t>(o * in + i)] ==
            doctest::Approx(dy.data[static_cast<std::size_t>(o)] *
                            x.data[static_cast<std::size_t>(i)]));
  for (std::int64_t o = 0; o < out; ++o)
    CHECK(db[static_cast<std::size_t>(o)] ==
          doctest::Approx(dy.data[static_cast<std::size_t>(o)]));
}

TEST_CASE("max-pool picks the maximum and routes gradient to it") {
  Tensor x({1, 1, 2, 2});
  x.data = {0.1, 0.9, 0.4, 0.2};
  Tensor y({1, 1, 1, 1});
  std::vector<std::int32_t> arg;
  nn_detail::maxpool2_forward(x, y, arg);
  CHECK(y.data[0] == 0.9);
  CHECK(arg[0] == 1);
  Tensor dy({1, 1, 1, 1});
  dy.data = {2.5};
  Tensor dx({1, 1, 2, 2});
  nn_detail::maxpool2_backward(dy, arg, dx);
  CHECK(dx.data == std::vector<double>{0.0, 2.5, 0.0, 0.0});
}

TEST_CASE("full-model gradient matches central finite differences") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_model(cfg, 21);
  Rng rng(22);
  const Tensor batch = random_batch(cfg, 3, rng);
  Tensor coeff({3, 9});
  for (double& v : coeff.data) v = rng.uniform(-1.0, 1.0);

  ForwardResult r = forward(p, batch, Mode::kTrain);
  const std::vector<double> analytic = backward(r.tape, coeff);

  const double eps = 1e-3;
  Rng probe_rng(23);
  int worst_count = 0;
  for (const ParamBlock& block : p.layout.blocks) {
    for (int probe = 0; probe < 25; ++probe) {
      const std::int64_t idx =
          block.offset + static_cast<std::int64_t>(probe_rng.uniform_int(
                             static_cast<std::uint64_t>(block.size)));
      const double saved = p.values[static_cast<std::size_t>(idx)];
      p.values[static_cast<std::size_t>(idx)] = saved + eps;
      const double up = objective(forward(p, batch, Mode::kTrain).out, coeff);
      p.values[static_cast<std::size_t>(idx)] = saved - eps;
      const double dn = objective(forward(p, batch, Mode::kTrain).out, coeff);
      p.values[static_cast<std::size_t>(idx)] = saved;
      const double fd = (up - dn) / (2 * eps);
      const double an = analytic[static_cast<std::size_t>(idx)];
      if (rel_err(an, fd) >= 1e-4) ++worst_count;
      CHECK_MESSAGE(rel_err(an, fd) < 1e-4,
                    block.name << " idx " << idx << " analytic " << an << " fd " << fd);
    }
  }
  CHECK(worst_count == 0);
}

TEST_CASE("gradient injected at the penultimate features is exact") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_model(cfg, 31);
  Rng rng(32);
  const Tensor batch = random_batch(cfg, 2, rng);
  Tensor coeff({2, 9}), feat_coeff({2, cfg.hidden});
  for (double& v : coeff.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : feat_coeff.data) v = rng.uniform(-1.0, 1.0);

  auto total = [&](ModelParams& q) {
    ForwardResult r = forward(q, batch, Mode::kTrain);
    return objective(r.out, coeff) + objective(r.hidden_features, feat_coeff);
  };

  ForwardResult r = forward(p, batch, Mode::kTrain);
  const std::vector<double> analytic = backward(r.tape, coeff, &feat_coeff);

  const double eps = 1e-3;
  Rng probe_rng(33);
  for (int probe = 0; probe < 60; ++probe) {
    const std::int64_t idx = static_cast<std::int64_t>(
        probe_rng.uniform_int(static_cast<std::uint64_t>(p.layout.total)));
    const double saved = p.values[static_cast<std::size_t>(idx)];
    p.values[static_cast<std::size_t>(idx)] = saved + eps;
    const double up = total(p);
    p.values[static_cast<std::size_t>(idx)] = saved - eps;
    const double dn = total(p);
    p.values[static_cast<std::size_t>(idx)] = saved;
    const double fd = (up - dn) / (2 * eps);
    CHECK_MESSAGE(rel_err(analytic[static_cast<std::size_t>(idx)], fd) < 1e-4,
                  "param " << idx);
  }
}

TEST_CASE("zero out_grad yields zero gradients; tape is single-use") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_model(cfg, 41);
  Rng rng(42);
  ForwardResult r = forward(p, random_batch(cfg, 2, rng), Mode::kTrain);
  Tensor zero({2, 9});
  const std::vector<double> g = backward(r.tape, zero);
  for (double v : g) CHECK(v == 0.0);
  CHECK_THROWS_AS(backward(r.tape, zero), TapeConsumed);
}

TEST_CASE("forward/backward are deterministic") {
  const ModelConfig cfg = tiny_config();
  Rng rng(51);
  const Tensor batch = random_batch(cfg, 3, rng);
  Tensor coeff({3, 9});
  for (double& v : coeff.data) v = rng.uniform(-1.0, 1.0);

  ModelParams p1 = init_model(cfg, 52);
  ModelParams p2 = init_model(cfg, 52);
  ForwardResult r1 = forward(p1, batch, Mode::kTrain);
  ForwardResult r2 = forward(p2, batch, Mode::kTrain);
  CHECK(r1.out.data == r2.out.data);
  CHECK(p1.running_mean == p2.running_mean);
  CHECK(backward(r1.tape, coeff) == backward(r2.tape, coeff));
}

TEST_CASE("adamw_step: fixed-point and first-step behavior") {
  AdamWConfig h;
  h.lr = 0.01;

  // zero grads, zero weight decay: params unchanged
  std::vector<double> params = {1.0, -2.0, 0.5};
  std::vector<double> zeros(3, 0.0);
  AdamWState st;
  adamw_step(params, zeros, st, h);
  CHECK(params == std::vector<double>{1.0, -2.0, 0.5});

  // first step with grad g moves by ~ -lr * sign(g)
  std::vector<double> p2 = {0.0, 0.0};
  std::vector<double> g2 = {0.3, -0.7};
  AdamWState st2;
  adamw_step(p2, g2, st2, h);
  CHECK(p2[0] == doctest::Approx(-h.lr).epsilon(1e-4));
  CHECK(p2[1] == doctest::Approx(h.lr).epsilon(1e-4));

  // weight decay with zero grads shrinks by exactly (1 - lr*wd)
  AdamWConfig hd = h;
  hd.weight_decay = 0.1;
  std::vector<double> p3 = {2.0, -4.0};
  AdamWState st3;
  adamw_step(p3, std::vector<double>(2, 0.0), st3, hd);
  CHECK(p3[0] == doctest::Approx(2.0 * (1.0 - hd.lr * hd.weight_decay)).epsilon(1e-12));
  CHECK(p3[1] == doctest::Approx(-4.0 * (1.0 - hd.lr * hd.weight_decay)).epsilon(1e-12));
}

TEST_CASE("checkpoint roundtrip preserves params, stats, optimizer state") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_model(cfg, 61);
  Rng rng(62);
  forward(p, random_batch(cfg, 4, rng), Mode::kTrain);  // perturb running stats
  AdamWState st;
  st.step = 17;
  st.m.assign(p.values.size(), 0.25);
  st.v.assign(p.values.size(), 0.125);

  const std::string path =
      (std::filesystem::temp_directory_path() / "gateadapt_ckpt_test.bin").string();
  save_checkpoint(path, p, &st);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.params.values == p.values);
  CHECK(ck.params.running_mean == p.running_mean);
  CHECK(ck.params.running_var == p.running_var);
  CHECK(ck.params.cfg.input_size == cfg.input_size);
  CHECK(ck.params.cfg.hidden == cfg.hidden);
  REQUIRE(ck.opt_state.has_value());
  CHECK(ck.opt_state->step == 17);
  CHECK(ck.opt_state->m == st.m);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects garbage") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "gateadapt_ckpt_bad.bin").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    std::fputs("NOPE", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/file.bin"), IoError);
  std::filesystem::remove(path);
}
