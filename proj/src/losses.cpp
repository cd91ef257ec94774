#include "gateadapt/losses.hpp"

#include <algorithm>
#include <cmath>

namespace gateadapt {

PoseLossResult pose_loss(const Tensor& pred, const std::vector<Pose>& gt,
                         const PoseLossWeights& weights) {
  if (pred.rank() != 2 || pred.dim(1) != 9)
    throw ShapeMismatch("pose_loss expects predictions of shape [N, 9]");
  const std::int64_t n = pred.dim(0);
  if (n != static_cast<std::int64_t>(gt.size()))
    throw ShapeMismatch("pose_loss: prediction/label count mismatch");
  if (n == 0) throw DataEmpty("pose_loss on empty batch");

  PoseLossResult res;
  res.grad = Tensor({n, 9});
  const double denom = static_cast<double>(9 * n);
  for (std::int64_t i = 0; i < n; ++i) {
    const PoseVector9 target = pose_to_vector9(gt[static_cast<std::size_t>(i)]);
    for (int k = 0; k < 9; ++k) {
      const double w = k < 3 ? weights.position : weights.orientation;
      const double d = pred.data[static_cast<std::size_t>(i * 9 + k)] - target.v(k);
      res.value += w * d * d / denom;
      res.grad.data[static_cast<std::size_t>(i * 9 + k)] = 2.0 * w * d / denom;
    }
  }
  return res;
}

ScPairResult state_consistency_pair(const PoseVector9& pred1,
                                    const PoseVector9& pred2, const Pose& o1,
                                    const Pose& o2, WarpOrder order) {
  ScPairResult res;
  Rot6D r6;
  r6.v = pred1.r6();
  Rotation rot1;
  Eigen::Matrix<double, 9, 6> jac;
  try {
    rot1 = rot_from_6d(r6);
    jac = rot_from_6d_jacobian(r6);
  } catch (const DegenerateInput&) {
    res.degenerate = true;
    return res;
  }

  // The warp composes a constant relative-motion pose Q with the decoded
  // prediction on one side; differentiate through that composition directly.
  const Pose p1(rot1, pred1.t());
  const Pose warped = warp_gate_pose(p1, o1, o2, order);
  // For both operand orders the warped pose is affine in (rot1, t1):
  //   frame-change: W = Q * P1  with Q = o2^{-1} o1      -> R_w = Q.R R1, t_w = Q.R t1 + Q.t
  //   world-delta:  W = P1 * M  with M = o2 * o1^{-1}    -> R_w = R1 M.R,  t_w = R1 M.t + t1
  const bool frame_change = order == WarpOrder::kFrameChange;
  const Pose q = frame_change ? compose(inverse(o2), o1) : compose(o2, inverse(o1));

  const Vec9 w9 = pose_to_vector9(warped).v;
  const Vec9 p2 = pred2.v;
  Vec9 diff = w9 - p2;
  res.value = diff.squaredNorm() / 9.0;
  res.grad2 = -2.0 / 9.0 * diff;

  const Vec3 dt = 2.0 / 9.0 * diff.head<3>();
  // dL/dR_w as a 3x3 (only the first two columns of R_w enter the encoding)
  Mat3 dRw = Mat3::Zero();
  dRw.col(0) = 2.0 / 9.0 * diff.segment<3>(3);
  dRw.col(1) = 2.0 / 9.0 * diff.segment<3>(6);

  Vec3 dt1;
  Mat3 dR1;
  if (frame_change) {
    dt1 = q.rot.m.transpose() * dt;
    dR1 = q.rot.m.transpose() * dRw;
  } else {
    // R_w = R1 * q.R, t_w = R1 * q.t + t1
    dt1 = dt;
    dR1 = dRw * q.rot.m.transpose() + dt * q.t.transpose();
  }
  res.grad1.head<3>() = dt1;
  // chain through Gram-Schmidt: flatten dR1 row-major to match the jacobian
  Vec9 dR1_flat;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) dR1_flat(3 * r + c) = dR1(r, c);
  res.grad1.tail<6>() = jac.transpose() * dR1_flat;
  return res;
}

ScBatchResult state_consistency_loss(const Tensor& pred1, const Tensor& pred2,
                                     const std::vector<Pose>& o1,
                                     const std::vector<Pose>& o2, WarpOrder order) {
  if (pred1.rank() != 2 || pred1.dim(1) != 9 || pred2.rank() != 2 ||
      pred2.dim(1) != 9 || pred1.dim(0) != pred2.dim(0))
    throw ShapeMismatch("state_consistency_loss expects two [B, 9] tensors");
  const std::int64_t b = pred1.dim(0);
  if (b != static_cast<std::int64_t>(o1.size()) ||
      b != static_cast<std::int64_t>(o2.size()))
    throw ShapeMismatch("state_consistency_loss: odometry count mismatch");
  if (b == 0) throw DataEmpty("state_consistency_loss on empty batch");

  ScBatchResult res;
  res.grad1 = Tensor({b, 9});
  res.grad2 = Tensor({b, 9});
  std::vector<ScPairResult> pairs(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    PoseVector9 v1, v2;
    for (int k = 0; k < 9; ++k) {
      v1.v(k) = pred1.data[static_cast<std::size_t>(i * 9 + k)];
      v2.v(k) = pred2.data[static_cast<std::size_t>(i * 9 + k)];
    }
    pairs[static_cast<std::size_t>(i)] = state_consistency_pair(
        v1, v2, o1[static_cast<std::size_t>(i)], o2[static_cast<std::size_t>(i)],
        order);
    if (pairs[static_cast<std::size_t>(i)].degenerate)
      ++res.degenerate_pairs;
    else
      ++res.used_pairs;
  }
  if (res.used_pairs == 0) return res;  // value 0, zero grads; caller decides
  const double scale = 1.0 / static_cast<double>(res.used_pairs);
  for (std::int64_t i = 0; i < b; ++i) {
    const ScPairResult& pr = pairs[static_cast<std::size_t>(i)];
    if (pr.degenerate) continue;
    res.value += pr.value * scale;
    for (int k = 0; k < 9; ++k) {
      res.grad1.data[static_cast<std::size_t>(i * 9 + k)] = pr.grad1(k) * scale;
      res.grad2.data[static_cast<std::size_t>(i * 9 + k)] = pr.grad2(k) * scale;
    }
  }
  return res;
}

namespace {
double sq_dist(const double* a, const double* b, std::int64_t d) {
  double s = 0.0;
  for (std::int64_t k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}
}  // namespace

MmdResult mmd_loss(const Tensor& src_feats, const Tensor& tgt_feats,
                   const std::vector<double>& bandwidths, bool biased) {
  if (src_feats.rank() != 2 || tgt_feats.rank() != 2 ||
      src_feats.dim(1) != tgt_feats.dim(1))
    throw ShapeMismatch("mmd_loss expects [N, D] and [M, D] feature matrices");
  const std::int64_t n = src_feats.dim(0), m = tgt_feats.dim(0),
                     d = src_feats.dim(1);
  if (n < 2 || m < 2) throw DataEmpty("mmd_loss needs at least 2 samples per side");
  if (bandwidths.empty()) throw ConfigInvalid("mmd_loss needs at least one bandwidth");

  MmdResult res;
  res.grad_src = Tensor(src_feats.shape);
  res.grad_tgt = Tensor(tgt_feats.shape);

  // kernel and its derivative coefficient: k = sum_b exp(-r2 / (2 s_b^2)),
  // dk/dr2 = sum_b -k_b / (2 s_b^2)
  auto kernel = [&](double r2, double& dk_dr2) {
    double k = 0.0;
    dk_dr2 = 0.0;
    for (double s : bandwidths) {
      const double denom = 2.0 * s * s;
      const double e = std::exp(-r2 / denom);
      k += e;
      dk_dr2 += -e / denom;
    }
    return k;
  };

  // accumulate term weight w for pair (x_i in A, x_j in B): value += w k;
  // grad_a_i += w dk/dr2 * 2 (a_i - b_j), grad_b_j += w dk/dr2 * 2 (b_j - a_i)
  auto accumulate = [&](const Tensor& a, const Tensor& b, Tensor& ga, Tensor& gb,
                        std::int64_t i, std::int64_t j, double w) {
    const double* ai = a.ptr() + i * d;
    const double* bj = b.ptr() + j * d;
    double dk;
    res.value += w * kernel(sq_dist(ai, bj, d), dk);
    double* gai = ga.ptr() + i * d;
    double* gbj = gb.ptr() + j * d;
    for (std::int64_t k = 0; k < d; ++k) {
      const double g = w * dk * 2.0 * (ai[k] - bj[k]);
      gai[k] += g;
      gbj[k] -= g;
    }
  };

  const double wss = biased ? 1.0 / static_cast<double>(n * n)
                            : 1.0 / static_cast<double>(n * (n - 1));
  const double wtt = biased ? 1.0 / static_cast<double>(m * m)
                            : 1.0 / static_cast<double>(m * (m - 1));
  const double wst = -2.0 / static_cast<double>(n * m);

  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      if (!biased && i == j) continue;
      accumulate(src_feats, src_feats, res.grad_src, res.grad_src, i, j, wss);
    }
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < m; ++j) {
      if (!biased && i == j) continue;
      accumulate(tgt_feats, tgt_feats, res.grad_tgt, res.grad_tgt, i, j, wtt);
    }
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j)
      accumulate(src_feats, tgt_feats, res.grad_src, res.grad_tgt, i, j, wst);
  return res;
}

std::vector<double> mmd_default_bandwidths(const Tensor& src_feats,
                                           const Tensor& tgt_feats) {
  const std::int64_t n = src_feats.dim(0), m = tgt_feats.dim(0),
                     d = src_feats.dim(1);
  std::vector<const double*> pooled;
  pooled.reserve(static_cast<std::size_t>(n + m));
  for (std::int64_t i = 0; i < n; ++i) pooled.push_back(src_feats.ptr() + i * d);
  for (std::int64_t i = 0; i < m; ++i) pooled.push_back(tgt_feats.ptr() + i * d);
  std::vector<double> d2;
  d2.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j)
      d2.push_back(sq_dist(pooled[i], pooled[j], d));
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2),
                   d2.end());
  const double med2 = d2[d2.size() / 2];
  const double base = med2 > 1e-12 ? std::sqrt(med2) : 1.0;
  return {0.5 * base, base, 2.0 * base};
}

int weight_layer_count(const ModelLayout& layout) {
  int n = 0;
  for (const ParamBlock& b : layout.blocks)
    if (b.is_weight) ++n;
  return n;
}

WeightDependenceResult weight_dependence_loss(const ModelParams& params_a,
                                              const ModelParams& params_b,
                                              const std::vector<double>& scales,
                                              const std::vector<double>& shifts) {
  if (params_a.values.size() != params_b.values.size())
    throw ShapeMismatch("weight_dependence_loss: parameter vectors differ in size");
  const int n_layers = weight_layer_count(params_a.layout);
  if (static_cast<int>(scales.size()) != n_layers ||
      static_cast<int>(shifts.size()) != n_layers)
    throw ShapeMismatch("weight_dependence_loss: one scale/shift per weight layer");

  WeightDependenceResult res;
  res.grad_b.assign(params_b.values.size(), 0.0);
  res.grad_scale.assign(scales.size(), 0.0);
  res.grad_shift.assign(shifts.size(), 0.0);

  int l = 0;
  for (const ParamBlock& blk : params_a.layout.blocks) {
    if (!blk.is_weight) continue;
    const double a = scales[static_cast<std::size_t>(l)];
    const double b = shifts[static_cast<std::size_t>(l)];
    const double* wa = params_a.values.data() + blk.offset;
    const double* wb = params_b.values.data() + blk.offset;
    double* gb = res.grad_b.data() + blk.offset;
    double ds = 0.0, dh = 0.0;
    for (std::int64_t i = 0; i < blk.size; ++i) {
      const double r = wb[i] - a * wa[i] - b;
      res.value += r * r;
      gb[i] = 2.0 * r;
      ds += -2.0 * r * wa[i];
      dh += -2.0 * r;
    }
    res.grad_scale[static_cast<std::size_t>(l)] = ds;
    res.grad_shift[static_cast<std::size_t>(l)] = dh;
    ++l;
  }
  return res;
}

}  // namespace gateadapt
