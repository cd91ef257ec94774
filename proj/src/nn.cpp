#include "gateadapt/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "gateadapt/rng.hpp"

namespace gateadapt {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
}  // namespace

void ModelConfig::validate() const {
  for (int c : conv_channels)
    if (c <= 0) throw ConfigInvalid("conv channel counts must be positive");
  if (kernel <= 0 || kernel % 2 == 0)
    throw ConfigInvalid("kernel must be a positive odd size");
  if (stride != 1) throw ConfigInvalid("only stride-1 convolutions are supported");
  if (pool_blocks < 0 || pool_blocks > 4)
    throw ConfigInvalid("pool_blocks must be in [0, 4]");
  if (hidden <= 0) throw ConfigInvalid("hidden width must be positive");
  if (input_size <= 0) throw ConfigInvalid("input size must be positive");
  if (input_size % (1 << pool_blocks) != 0)
    throw ConfigInvalid("input size must be divisible by 2^pool_blocks");
  if (bn_eps <= 0) throw ConfigInvalid("bn_eps must be positive");
  if (bn_momentum <= 0 || bn_momentum > 1)
    throw ConfigInvalid("bn_momentum must be in (0, 1]");
}

int ModelConfig::spatial_after_block(int i) const {
  int s = input_size;
  for (int b = 0; b <= i; ++b)
    if (b < pool_blocks) s /= 2;
  return s;
}

std::int64_t ModelConfig::flatten_dim() const {
  const std::int64_t s = spatial_after_block(3);
  return s * s * conv_channels[3];
}

const ParamBlock& ModelLayout::find(const std::string& name) const {
  for (const ParamBlock& b : blocks)
    if (b.name == name) return b;
  throw ConfigInvalid("unknown parameter block: " + name);
}

ModelLayout make_layout(const ModelConfig& cfg) {
  cfg.validate();
  ModelLayout layout;
  std::int64_t off = 0;
  auto add = [&](const std::string& name, std::vector<std::int64_t> shape, bool weight) {
    ParamBlock b;
    b.name = name;
    b.shape = std::move(shape);
    b.size = Tensor::numel_of(b.shape);
    b.offset = off;
    b.is_weight = weight;
    off += b.size;
    layout.blocks.push_back(std::move(b));
  };
  int c_in = 1;
  for (int i = 0; i < 4; ++i) {
    const int c_out = cfg.conv_channels[static_cast<std::size_t>(i)];
    const std::string idx = std::to_string(i);
    add("conv" + idx + ".weight", {c_out, c_in, cfg.kernel, cfg.kernel}, true);
    add("conv" + idx + ".bias", {c_out}, false);
    add("bn" + idx + ".gamma", {c_out}, false);
    add("bn" + idx + ".beta", {c_out}, false);
    layout.bn_channels_total += c_out;
    c_in = c_out;
  }
  add("fc0.weight", {cfg.hidden, cfg.flatten_dim()}, true);
  add("fc0.bias", {cfg.hidden}, false);
  add("fc1.weight", {ModelConfig::kOutDim, cfg.hidden}, true);
  add("fc1.bias", {ModelConfig::kOutDim}, false);
  layout.total = off;
  return layout;
}

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p;
  p.cfg = cfg;
  p.layout = make_layout(cfg);
  p.values.assign(static_cast<std::size_t>(p.layout.total), 0.0);
  p.running_mean.assign(static_cast<std::size_t>(p.layout.bn_channels_total), 0.0);
  p.running_var.assign(static_cast<std::size_t>(p.layout.bn_channels_total), 1.0);

  Rng rng(seed);
  for (const ParamBlock& b : p.layout.blocks) {
    double* dst = p.values.data() + b.offset;
    if (b.is_weight) {
      // Kaiming-uniform over fan-in: rows index output units, the rest is fan-in.
      std::int64_t fan_in = 1;
      for (std::size_t d = 1; d < b.shape.size(); ++d) fan_in *= b.shape[d];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::int64_t i = 0; i < b.size; ++i) dst[i] = rng.uniform(-bound, bound);
    } else if (b.name.find(".gamma") != std::string::npos) {
      for (std::int64_t i = 0; i < b.size; ++i) dst[i] = 1.0;
    }  // biases and betas stay zero
  }
  return p;
}

namespace nn_detail {

void linear_forward(const double* w, const double* b, const Tensor& x, Tensor& y) {
  const std::int64_t n = x.dim(0), in = x.dim(1), out = y.dim(1);
  CMapMat xm(x.ptr(), n, in);
  CMapMat wm(w, out, in);
  MapMat ym(y.ptr(), n, out);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += CMapVec(b, out).transpose();
}

void linear_backward(const double* w, const Tensor& x, const Tensor& dy,
                     double* dw, double* db, Tensor& dx) {
  const std::int64_t n = x.dim(0), in = x.dim(1), out = dy.dim(1);
  CMapMat xm(x.ptr(), n, in);
  CMapMat dym(dy.ptr(), n, out);
  CMapMat wm(w, out, in);
  MapMat(dw, out, in).noalias() += dym.transpose() * xm;
  // serial reduction: keeps results independent of buffer alignment
  for (std::int64_t j = 0; j < out; ++j) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += dym(i, j);
    db[j] += s;
  }
  MapMat(dx.ptr(), n, in).noalias() = dym * wm;
}

namespace {
// Column matrix [c_in*k*k, h*w] for one image plane stack, "same" padding.
void im2col(const double* x, int c_in, int h, int w, int k, double* col) {
  const int pad = k / 2;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::int64_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    const double* plane = x + static_cast<std::int64_t>(c) * hw;
    for (int di = -pad; di <= pad; ++di) {
      for (int dj = -pad; dj <= pad; ++dj, ++row) {
        double* out = col + row * hw;
        for (int oh = 0; oh < h; ++oh) {
          const int ih = oh + di;
          double* orow = out + static_cast<std::int64_t>(oh) * w;
          if (ih < 0 || ih >= h) {
            std::memset(orow, 0, sizeof(double) * static_cast<std::size_t>(w));
            continue;
          }
          const double* irow = plane + static_cast<std::int64_t>(ih) * w;
          for (int ow = 0; ow < w; ++ow) {
            const int iw = ow + dj;
            orow[ow] = (iw >= 0 && iw < w) ? irow[iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int c_in, int h, int w, int k, double* dx) {
  const int pad = k / 2;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::int64_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    double* plane = dx + static_cast<std::int64_t>(c) * hw;
    for (int di = -pad; di <= pad; ++di) {
      for (int dj = -pad; dj <= pad; ++dj, ++row) {
        const double* src = col + row * hw;
        for (int oh = 0; oh < h; ++oh) {
          const int ih = oh + di;
          if (ih < 0 || ih >= h) continue;
          double* irow = plane + static_cast<std::int64_t>(ih) * w;
          const double* srow = src + static_cast<std::int64_t>(oh) * w;
          for (int ow = 0; ow < w; ++ow) {
            const int iw = ow + dj;
            if (iw >= 0 && iw < w) irow[iw] += srow[ow];
          }
        }
      }
    }
  }
}
}  // namespace

void conv2d_forward(const double* w, const double* b, int c_in, int c_out, int k,
                    const Tensor& x, Tensor& y) {
  const std::int64_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const std::int64_t hw = h * wd;
  const std::int64_t rows = static_cast<std::int64_t>(c_in) * k * k;
  std::vector<double> col(static_cast<std::size_t>(rows * hw));
  CMapMat wm(w, c_out, rows);
  for (std::int64_t i = 0; i < n; ++i) {
    im2col(x.ptr() + i * c_in * hw, c_in, static_cast<int>(h), static_cast<int>(wd),
           k, col.data());
    CMapMat cm(col.data(), rows, hw);
    MapMat ym(y.ptr() + i * c_out * hw, c_out, hw);
    ym.noalias() = wm * cm;
    ym.colwise() += CMapVec(b, c_out);
  }
}

void conv2d_backward(const double* w, int c_in, int c_out, int k, const Tensor& x,
                     const Tensor& dy, double* dw, double* db, Tensor& dx) {
  const std::int64_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const std::int64_t hw = h * wd;
  const std::int64_t rows = static_cast<std::int64_t>(c_in) * k * k;
  std::vector<double> col(static_cast<std::size_t>(rows * hw));
  std::vector<double> dcol(static_cast<std::size_t>(rows * hw));
  CMapMat wm(w, c_out, rows);
  MapMat dwm(dw, c_out, rows);
  std::fill(dx.data.begin(), dx.data.end(), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    im2col(x.ptr() + i * c_in * hw, c_in, static_cast<int>(h), static_cast<int>(wd),
           k, col.data());
    CMapMat cm(col.data(), rows, hw);
    CMapMat dym(dy.ptr() + i * c_out * hw, c_out, hw);
    dwm.noalias() += dym * cm.transpose();
    // serial reduction: keeps results independent of buffer alignment
    for (std::int64_t c = 0; c < c_out; ++c) {
      double s = 0.0;
      const double* row = dy.ptr() + i * c_out * hw + c * hw;
      for (std::int64_t q = 0; q < hw; ++q) s += row[q];
      db[c] += s;
    }
    MapMat dcm(dcol.data(), rows, hw);
    dcm.noalias() = wm.transpose() * dym;
    col2im_add(dcol.data(), c_in, static_cast<int>(h), static_cast<int>(wd), k,
               dx.ptr() + i * c_in * hw);
  }
}

void batchnorm_forward(const double* gamma, const double* beta, double eps,
                       Mode mode, double momentum, double* running_mean,
                       double* running_var, const Tensor& x, Tensor& y,
                       Tensor& xhat, std::vector<double>& inv_std) {
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::int64_t m = n * hw;
  xhat = Tensor(x.shape);
  inv_std.assign(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mean, istd;
    if (mode == Mode::kTrain) {
      double sum = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double* p = x.ptr() + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) sum += p[j];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double* p = x.ptr() + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const double d = p[j] - mean;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      istd = 1.0 / std::sqrt(var + eps);
      if (running_mean != nullptr) {
        const double var_unbiased =
            m > 1 ? sq / static_cast<double>(m - 1) : var;
        running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
        running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var_unbiased;
      }
    } else {
      mean = running_mean[ch];
      istd = 1.0 / std::sqrt(running_var[ch] + eps);
    }
    inv_std[static_cast<std::size_t>(ch)] = istd;
    const double g = gamma[ch], bt = beta[ch];
    for (std::int64_t i = 0; i < n; ++i) {
      const double* p = x.ptr() + (i * c + ch) * hw;
      double* xh = xhat.ptr() + (i * c + ch) * hw;
      double* out = y.ptr() + (i * c + ch) * hw;
      for (std::int64_t j = 0; j < hw; ++j) {
        xh[j] = (p[j] - mean) * istd;
        out[j] = g * xh[j] + bt;
      }
    }
  }
}

void batchnorm_backward(const double* gamma, Mode mode, const Tensor& xhat,
                        const std::vector<double>& inv_std, const Tensor& dy,
                        double* dgamma, double* dbeta, Tensor& dx) {
  const std::int64_t n = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
  const std::int64_t m = n * hw;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double s1 = 0.0, s2 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double* dp = dy.ptr() + (i * c + ch) * hw;
      const double* xh = xhat.ptr() + (i * c + ch) * hw;
      for (std::int64_t j = 0; j < hw; ++j) {
        s1 += dp[j];
        s2 += dp[j] * xh[j];
      }
    }
    dgamma[ch] += s2;
    dbeta[ch] += s1;
    const double g = gamma[ch], istd = inv_std[static_cast<std::size_t>(ch)];
    const double mean_dy = s1 / static_cast<double>(m);
    const double mean_dyxh = s2 / static_cast<double>(m);
    for (std::int64_t i = 0; i < n; ++i) {
      const double* dp = dy.ptr() + (i * c + ch) * hw;
      const double* xh = xhat.ptr() + (i * c + ch) * hw;
      double* out = dx.ptr() + (i * c + ch) * hw;
      if (mode == Mode::kTrain) {
        for (std::int64_t j = 0; j < hw; ++j)
          out[j] = g * istd * (dp[j] - mean_dy - xh[j] * mean_dyxh);
      } else {
        for (std::int64_t j = 0; j < hw; ++j) out[j] = g * istd * dp[j];
      }
    }
  }
}

void relu_forward(Tensor& x, std::vector<std::uint8_t>& mask) {
  mask.assign(x.data.size(), 0);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (x.data[i] > 0.0) {
      mask[i] = 1;
    } else {
      x.data[i] = 0.0;
    }
  }
}

void relu_backward(const std::vector<std::uint8_t>& mask, Tensor& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (mask[i] == 0) dy.data[i] = 0.0;
}

void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::int32_t>& argmax) {
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = h / 2, ow = w / 2;
  argmax.assign(static_cast<std::size_t>(n * c * oh * ow), 0);
  std::int64_t oi = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double* plane = x.ptr() + (i * c + ch) * h * w;
      for (std::int64_t r = 0; r < oh; ++r) {
        for (std::int64_t cc = 0; cc < ow; ++cc, ++oi) {
          double best = -1e308;
          std::int32_t arg = 0;
          for (int dr = 0; dr < 2; ++dr) {
            for (int dc = 0; dc < 2; ++dc) {
              const std::int64_t idx = (2 * r + dr) * w + 2 * cc + dc;
              if (plane[idx] > best) {
                best = plane[idx];
                arg = static_cast<std::int32_t>(idx);
              }
            }
          }
          y.data[static_cast<std::size_t>(oi)] = best;
          argmax[static_cast<std::size_t>(oi)] = arg;
        }
      }
    }
  }
}

void maxpool2_backward(const Tensor& dy, const std::vector<std::int32_t>& argmax,
                       Tensor& dx) {
  const std::int64_t n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
  const std::int64_t hw_in = dx.dim(2) * dx.dim(3);
  std::fill(dx.data.begin(), dx.data.end(), 0.0);
  std::int64_t oi = 0;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double* plane = dx.ptr() + (i * c + ch) * hw_in;
      for (std::int64_t j = 0; j < oh * ow; ++j, ++oi)
        plane[argmax[static_cast<std::size_t>(oi)]] += dy.data[static_cast<std::size_t>(oi)];
    }
}

}  // namespace nn_detail

namespace {

ForwardResult forward_impl(const ModelConfig& cfg, const ModelLayout& layout,
                           const std::vector<double>& values,
                           const double* running_mean, const double* running_var,
                           double* running_mean_mut, double* running_var_mut,
                           const Tensor& batch, Mode mode) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != cfg.input_size ||
      batch.dim(3) != cfg.input_size)
    throw ShapeMismatch("forward expects input of shape [N, 1, S, S] matching config");
  const std::int64_t n = batch.dim(0);
  if (n <= 0) throw ShapeMismatch("empty batch");

  ForwardResult res;
  Tape& tape = res.tape;
  tape.cfg = cfg;
  tape.mode = mode;
  tape.n = n;
  tape.blocks.resize(4);

  auto block_ptr = [&](const char* name) {
    return values.data() + layout.find(name).offset;
  };

  Tensor x = batch;
  int c_in = 1;
  std::int64_t bn_off = 0;
  int side = cfg.input_size;
  for (int i = 0; i < 4; ++i) {
    const int c_out = cfg.conv_channels[static_cast<std::size_t>(i)];
    const std::string idx = std::to_string(i);
    BlockTape& bt = tape.blocks[static_cast<std::size_t>(i)];
    bt.h_in = side;
    bt.conv_in = std::move(x);

    Tensor conv_out({n, c_out, side, side});
    nn_detail::conv2d_forward(block_ptr(("conv" + idx + ".weight").c_str()),
                              block_ptr(("conv" + idx + ".bias").c_str()), c_in,
                              c_out, cfg.kernel, bt.conv_in, conv_out);

    Tensor bn_out({n, c_out, side, side});
    double* rm_mut = running_mean_mut ? running_mean_mut + bn_off : nullptr;
    double* rv_mut = running_var_mut ? running_var_mut + bn_off : nullptr;
    if (mode == Mode::kTrain) {
      nn_detail::batchnorm_forward(block_ptr(("bn" + idx + ".gamma").c_str()),
                                   block_ptr(("bn" + idx + ".beta").c_str()),
                                   cfg.bn_eps, mode, cfg.bn_momentum, rm_mut, rv_mut,
                                   conv_out, bn_out, bt.bn_xhat, bt.bn_inv_std);
    } else {
      // const_cast is safe: eval mode only reads the running stats
      nn_detail::batchnorm_forward(block_ptr(("bn" + idx + ".gamma").c_str()),
                                   block_ptr(("bn" + idx + ".beta").c_str()),
                                   cfg.bn_eps, mode, cfg.bn_momentum,
                                   const_cast<double*>(running_mean) + bn_off,
                                   const_cast<double*>(running_var) + bn_off,
                                   conv_out, bn_out, bt.bn_xhat, bt.bn_inv_std);
    }
    nn_detail::relu_forward(bn_out, bt.relu_mask);

    if (i < cfg.pool_blocks) {
      bt.pooled = true;
      Tensor pooled({n, c_out, side / 2, side / 2});
      nn_detail::maxpool2_forward(bn_out, pooled, bt.pool_arg);
      x = std::move(pooled);
      side /= 2;
    } else {
      x = std::move(bn_out);
    }
    bt.h_out = side;
    bn_off += c_out;
    c_in = c_out;
  }

  // flatten: per-sample memory is already contiguous [C, H, W]
  const std::int64_t flat = cfg.flatten_dim();
  x.shape = {n, flat};
  tape.fc1_in = std::move(x);

  Tensor hidden({n, cfg.hidden});
  nn_detail::linear_forward(block_ptr("fc0.weight"), block_ptr("fc0.bias"),
                            tape.fc1_in, hidden);
  nn_detail::relu_forward(hidden, tape.fc1_relu_mask);
  tape.fc1_out = hidden;

  res.out = Tensor({n, ModelConfig::kOutDim});
  nn_detail::linear_forward(block_ptr("fc1.weight"), block_ptr("fc1.bias"), hidden,
                            res.out);
  res.hidden_features = std::move(hidden);
  tape.values = std::make_shared<const std::vector<double>>(values);
  return res;
}

}  // namespace

ForwardResult forward(ModelParams& params, const Tensor& batch, Mode mode) {
  if (mode == Mode::kTrain)
    return forward_impl(params.cfg, params.layout, params.values, nullptr, nullptr,
                        params.running_mean.data(), params.running_var.data(), batch,
                        mode);
  return forward_impl(params.cfg, params.layout, params.values,
                      params.running_mean.data(), params.running_var.data(), nullptr,
                      nullptr, batch, mode);
}

ForwardResult forward_eval(const ModelParams& params, const Tensor& batch) {
  return forward_impl(params.cfg, params.layout, params.values,
                      params.running_mean.data(), params.running_var.data(), nullptr,
                      nullptr, batch, Mode::kEval);
}

std::vector<double> backward(Tape& tape, const Tensor& out_grad,
                             const Tensor* hidden_grad) {
  if (tape.consumed) throw TapeConsumed("backward already ran on this tape");
  tape.consumed = true;
  const ModelConfig& cfg = tape.cfg;
  if (out_grad.rank() != 2 || out_grad.dim(0) != tape.n ||
      out_grad.dim(1) != ModelConfig::kOutDim)
    throw ShapeMismatch("out_grad must be [N, 9] matching the forward batch");
  if (hidden_grad != nullptr &&
      (hidden_grad->rank() != 2 || hidden_grad->dim(0) != tape.n ||
       hidden_grad->dim(1) != cfg.hidden))
    throw ShapeMismatch("hidden_grad must be [N, hidden]");

  const ModelLayout layout = make_layout(cfg);
  const std::vector<double>& values = *tape.values;
  std::vector<double> grads(static_cast<std::size_t>(layout.total), 0.0);
  auto vptr = [&](const char* name) { return values.data() + layout.find(name).offset; };
  auto gptr = [&](const char* name) { return grads.data() + layout.find(name).offset; };

  // output linear layer
  Tensor dhidden({tape.n, cfg.hidden});
  nn_detail::linear_backward(vptr("fc1.weight"), tape.fc1_out, out_grad,
                             gptr("fc1.weight"), gptr("fc1.bias"), dhidden);
  if (hidden_grad != nullptr)
    for (std::size_t i = 0; i < dhidden.data.size(); ++i)
      dhidden.data[i] += hidden_grad->data[i];
  nn_detail::relu_backward(tape.fc1_relu_mask, dhidden);

  Tensor dflat({tape.n, cfg.flatten_dim()});
  nn_detail::linear_backward(vptr("fc0.weight"), tape.fc1_in, dhidden,
                             gptr("fc0.weight"), gptr("fc0.bias"), dflat);

  // back through the conv blocks
  Tensor dcur = std::move(dflat);
  dcur.shape = {tape.n, cfg.conv_channels[3], cfg.spatial_after_block(3),
                cfg.spatial_after_block(3)};
  for (int i = 3; i >= 0; --i) {
    BlockTape& bt = tape.blocks[static_cast<std::size_t>(i)];
    const int c_out = cfg.conv_channels[static_cast<std::size_t>(i)];
    const int c_in = i == 0 ? 1 : cfg.conv_channels[static_cast<std::size_t>(i - 1)];
    const std::string idx = std::to_string(i);

    Tensor drelu({tape.n, c_out, bt.h_in, bt.h_in});
    if (bt.pooled) {
      nn_detail::maxpool2_backward(dcur, bt.pool_arg, drelu);
    } else {
      drelu = std::move(dcur);
    }
    nn_detail::relu_backward(bt.relu_mask, drelu);

    Tensor dbn({tape.n, c_out, bt.h_in, bt.h_in});
    nn_detail::batchnorm_backward(vptr(("bn" + idx + ".gamma").c_str()), tape.mode,
                                  bt.bn_xhat, bt.bn_inv_std, drelu,
                                  gptr(("bn" + idx + ".gamma").c_str()),
                                  gptr(("bn" + idx + ".beta").c_str()), dbn);

    Tensor dx({tape.n, c_in, bt.h_in, bt.h_in});
    nn_detail::conv2d_backward(vptr(("conv" + idx + ".weight").c_str()), c_in, c_out,
                               cfg.kernel, bt.conv_in, dbn,
                               gptr(("conv" + idx + ".weight").c_str()),
                               gptr(("conv" + idx + ".bias").c_str()), dx);
    dcur = std::move(dx);
  }
  return grads;
}

void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                AdamWState& state, const AdamWConfig& hyper) {
  if (params.size() != grads.size())
    throw ShapeMismatch("adamw_step: params/grads size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size())
    throw ShapeMismatch("adamw_step: optimizer state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  const double decay = hyper.lr * hyper.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= decay * params[i];  // decoupled weight decay
    const double g = grads[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

namespace {
constexpr char kCkptMagic[4] = {'G', 'A', 'P', 'W'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint truncated");
  return v;
}
void put_f64s(std::ofstream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void get_f64s(std::ifstream& is, std::vector<double>& v, std::size_t count) {
  v.resize(count);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw IoError("checkpoint truncated");
}
}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamWState* opt_state) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCkptMagic, 4);
  put<std::uint32_t>(os, kCkptVersion);
  const ModelConfig& c = params.cfg;
  put<std::int32_t>(os, c.input_size);
  for (int ch : c.conv_channels) put<std::int32_t>(os, ch);
  put<std::int32_t>(os, c.kernel);
  put<std::int32_t>(os, c.stride);
  put<std::int32_t>(os, c.pool_blocks);
  put<std::int32_t>(os, c.hidden);
  put<double>(os, c.bn_eps);
  put<double>(os, c.bn_momentum);
  put<std::uint64_t>(os, params.values.size());
  put_f64s(os, params.values);
  put<std::uint64_t>(os, params.running_mean.size());
  put_f64s(os, params.running_mean);
  put_f64s(os, params.running_var);
  put<std::uint8_t>(os, opt_state != nullptr ? 1 : 0);
  if (opt_state != nullptr) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(opt_state->step));
    put<std::uint64_t>(os, opt_state->m.size());
    put_f64s(os, opt_state->m);
    put_f64s(os, opt_state->v);
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  if (get<std::uint32_t>(is) != kCkptVersion)
    throw IoError("unsupported checkpoint version");
  ModelConfig c;
  c.input_size = get<std::int32_t>(is);
  for (int i = 0; i < 4; ++i) c.conv_channels[static_cast<std::size_t>(i)] = get<std::int32_t>(is);
  c.kernel = get<std::int32_t>(is);
  c.stride = get<std::int32_t>(is);
  c.pool_blocks = get<std::int32_t>(is);
  c.hidden = get<std::int32_t>(is);
  c.bn_eps = get<double>(is);
  c.bn_momentum = get<double>(is);

  Checkpoint ck;
  ck.params.cfg = c;
  ck.params.layout = make_layout(c);
  const auto n_values = static_cast<std::size_t>(get<std::uint64_t>(is));
  if (n_values != static_cast<std::size_t>(ck.params.layout.total))
    throw IoError("checkpoint parameter count does not match its config");
  get_f64s(is, ck.params.values, n_values);
  const auto n_bn = static_cast<std::size_t>(get<std::uint64_t>(is));
  if (n_bn != static_cast<std::size_t>(ck.params.layout.bn_channels_total))
    throw IoError("checkpoint BN stat count does not match its config");
  get_f64s(is, ck.params.running_mean, n_bn);
  get_f64s(is, ck.params.running_var, n_bn);
  if (get<std::uint8_t>(is) != 0) {
    AdamWState st;
    st.step = static_cast<std::int64_t>(get<std::uint64_t>(is));
    const auto n_m = static_cast<std::size_t>(get<std::uint64_t>(is));
    if (n_m != n_values) throw IoError("checkpoint optimizer state size mismatch");
    get_f64s(is, st.m, n_m);
    get_f64s(is, st.v, n_m);
    ck.opt_state = std::move(st);
  }
  return ck;
}

}  // namespace gateadapt
