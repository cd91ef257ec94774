#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gateadapt/errors.hpp"
#include "gateadapt/tensor.hpp"

namespace gateadapt {

// Four conv blocks (conv -> batch-norm -> ReLU, 2x2 max-pool on the first
// `pool_blocks` blocks) followed by flatten -> linear -> ReLU -> linear(9).
struct ModelConfig {
  int input_size = 64;  // square grayscale input, pixels
  std::array<int, 4> conv_channels = {8, 8, 16, 32};
  int kernel = 3;   // odd, stride-1 "same" convolutions
  int stride = 1;
  int pool_blocks = 3;
  int hidden = 64;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  static ModelConfig desk() { return ModelConfig{}; }
  static ModelConfig full() {
    ModelConfig c;
    c.input_size = 160;
    c.conv_channels = {32, 32, 64, 128};
    c.hidden = 128;
    return c;
  }

  static constexpr int kOutDim = 9;
  void validate() const;             // throws ConfigInvalid
  int spatial_after_block(int i) const;  // side length after block i (0-based)
  std::int64_t flatten_dim() const;
};

struct ParamBlock {
  std::string name;                   // e.g. "conv0.weight", "fc1.bias"
  std::int64_t offset = 0;            // into ModelParams::values
  std::int64_t size = 0;
  std::vector<std::int64_t> shape;
  bool is_weight = false;             // conv/linear weight matrices (for tying losses)
};

struct ModelLayout {
  std::vector<ParamBlock> blocks;
  std::int64_t total = 0;
  std::int64_t bn_channels_total = 0;  // length of running-stat vectors

  const ParamBlock& find(const std::string& name) const;
};

ModelLayout make_layout(const ModelConfig& cfg);

struct ModelParams {
  ModelConfig cfg;
  ModelLayout layout;
  std::vector<double> values;        // learnable parameters, flat
  std::vector<double> running_mean;  // BN running stats, concatenated per block
  std::vector<double> running_var;

  std::int64_t count() const { return static_cast<std::int64_t>(values.size()); }
};

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);

enum class Mode { kTrain, kEval };

// Per-block activations saved by forward for the reverse pass.
struct BlockTape {
  Tensor conv_in;                    // [N, C_in, H, W]
  Tensor bn_xhat;                    // normalized pre-affine activations
  std::vector<double> bn_inv_std;    // per channel, 1/sqrt(var + eps)
  std::vector<std::uint8_t> relu_mask;
  std::vector<std::int32_t> pool_arg;  // per pooled output, flat index into its input plane
  bool pooled = false;
  int h_in = 0, h_out = 0;
};

struct Tape {
  ModelConfig cfg;
  Mode mode = Mode::kTrain;
  std::int64_t n = 0;
  std::vector<BlockTape> blocks;
  Tensor fc1_in;                     // flattened conv output [N, flat]
  std::vector<std::uint8_t> fc1_relu_mask;
  Tensor fc1_out;                    // post-ReLU hidden features [N, hidden]
  std::shared_ptr<const std::vector<double>> values;  // parameter snapshot
  bool consumed = false;
};

struct ForwardResult {
  Tensor out;              // [N, 9]
  Tensor hidden_features;  // [N, hidden], post-ReLU penultimate activations
  Tape tape;
};

// Train mode normalizes with batch statistics and updates params' running
// stats in place; eval mode uses running stats and leaves params untouched.
ForwardResult forward(ModelParams& params, const Tensor& batch, Mode mode);
ForwardResult forward_eval(const ModelParams& params, const Tensor& batch);

// Reverse pass over the recorded computation. `hidden_grad`, if given, is an
// extra upstream gradient injected at the penultimate feature output (used by
// feature-alignment losses). The tape is single-use.
std::vector<double> backward(Tape& tape, const Tensor& out_grad,
                             const Tensor* hidden_grad = nullptr);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::int64_t step = 0;
  std::vector<double> m, v;
};

void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                AdamWState& state, const AdamWConfig& hyper);

// Checkpoint IO: magic "GAPW", version, config echo, parameters and BN
// running stats as little-endian float64, optional optimizer state.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamWState* opt_state = nullptr);
struct Checkpoint {
  ModelParams params;
  std::optional<AdamWState> opt_state;
};
Checkpoint load_checkpoint(const std::string& path);

// Layer primitives, exposed for per-layer-type verification.
namespace nn_detail {

// y = W x + b with W [out, in] row-major, x batched [N, in].
void linear_forward(const double* w, const double* b, const Tensor& x, Tensor& y);
void linear_backward(const double* w, const Tensor& x, const Tensor& dy,
                     double* dw, double* db, Tensor& dx);

// Stride-1 "same" convolution, kernel k odd; x [N,C_in,H,W] -> y [N,C_out,H,W].
void conv2d_forward(const double* w, const double* b, int c_in, int c_out, int k,
                    const Tensor& x, Tensor& y);
void conv2d_backward(const double* w, int c_in, int c_out, int k, const Tensor& x,
                     const Tensor& dy, double* dw, double* db, Tensor& dx);

// Train mode normalizes with batch statistics (and updates running stats when
// the pointers are non-null); eval mode reads running stats through
// `running_mean`/`running_var` without touching them.
void batchnorm_forward(const double* gamma, const double* beta, double eps,
                       Mode mode, double momentum, double* running_mean,
                       double* running_var, const Tensor& x, Tensor& y,
                       Tensor& xhat, std::vector<double>& inv_std);
void batchnorm_backward(const double* gamma, Mode mode, const Tensor& xhat,
                        const std::vector<double>& inv_std, const Tensor& dy,
                        double* dgamma, double* dbeta, Tensor& dx);

void relu_forward(Tensor& x, std::vector<std::uint8_t>& mask);  // in place
void relu_backward(const std::vector<std::uint8_t>& mask, Tensor& dy);  // in place

void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::int32_t>& argmax);
void maxpool2_backward(const Tensor& dy, const std::vector<std::int32_t>& argmax,
                       Tensor& dx);

}  // namespace nn_detail

}  // namespace gateadapt
