// quick throughput probe for the desk-scale model (not installed)
#include <chrono>
#include <cstdio>

#include "gateadapt/nn.hpp"
#include "gateadapt/rng.hpp"

using namespace gateadapt;

int main() {
  const ModelConfig cfg = ModelConfig::desk();
  ModelParams p = init_model(cfg, 1);
  Rng rng(2);
  const std::int64_t n = 32;
  Tensor batch({n, 1, cfg.input_size, cfg.input_size});
  for (double& v : batch.data) v = rng.uniform(0.0, 1.0);
  Tensor coeff({n, 9});
  for (double& v : coeff.data) v = rng.uniform(-1.0, 1.0);

  // warmup
  {
    ForwardResult r = forward(p, batch, Mode::kTrain);
    backward(r.tape, coeff);
  }
  const int iters = 20;
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) {
    ForwardResult r = forward(p, batch, Mode::kTrain);
    backward(r.tape, coeff);
  }
  auto t1 = std::chrono::steady_clock::now();
  const double s = std::chrono::duration<double>(t1 - t0).count();
  std::printf("train step (fwd+bwd), batch %lld: %.1f ms -> %.0f img/s\n",
              static_cast<long long>(n), 1e3 * s / iters,
              iters * static_cast<double>(n) / s);

  auto t2 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) forward(p, batch, Mode::kEval);
  auto t3 = std::chrono::steady_clock::now();
  const double se = std::chrono::duration<double>(t3 - t2).count();
  std::printf("eval forward, batch %lld: %.1f ms -> %.0f img/s\n",
              static_cast<long long>(n), 1e3 * se / iters,
              iters * static_cast<double>(n) / se);
  return 0;
}
