#pragma once

#include <vector>

#include "gateadapt/nn.hpp"
#include "gateadapt/pose.hpp"
#include "gateadapt/tensor.hpp"

namespace gateadapt {

// Optional relative weighting between position (meters) and 6D orientation
// components. Both default to 1: components are mixed unweighted.
struct PoseLossWeights {
  double position = 1.0;
  double orientation = 1.0;
};

struct PoseLossResult {
  double value = 0.0;
  Tensor grad;  // [N, 9], d value / d pred
};

// Mean over batch and over the 9 components of the squared error between the
// raw prediction and [gt.t, rot_to_6d(gt.rot)].
PoseLossResult pose_loss(const Tensor& pred, const std::vector<Pose>& gt,
                         const PoseLossWeights& weights = {});

struct ScPairResult {
  double value = 0.0;
  Vec9 grad1 = Vec9::Zero();
  Vec9 grad2 = Vec9::Zero();
  bool degenerate = false;  // pred1's 6D block failed to decode; pair unusable
};

// Decode pred1 to a pose, warp it from frame 1 to frame 2 with the measured
// odometry, re-encode as [t, 6D], and take the MSE against pred2's raw nine
// components. Differentiable through the Gram-Schmidt decode.
ScPairResult state_consistency_pair(const PoseVector9& pred1,
                                    const PoseVector9& pred2, const Pose& o1,
                                    const Pose& o2,
                                    WarpOrder order = kDefaultWarpOrder);

struct ScBatchResult {
  double value = 0.0;      // mean over usable pairs
  Tensor grad1, grad2;     // [B, 9] each; zero rows for skipped pairs
  int used_pairs = 0;
  int degenerate_pairs = 0;
};

ScBatchResult state_consistency_loss(const Tensor& pred1, const Tensor& pred2,
                                     const std::vector<Pose>& o1,
                                     const std::vector<Pose>& o2,
                                     WarpOrder order = kDefaultWarpOrder);

struct MmdResult {
  double value = 0.0;
  Tensor grad_src, grad_tgt;  // same shapes as the inputs
};

// Multi-kernel Gaussian MMD^2 with kernels exp(-||x-y||^2 / (2 sigma^2)),
// summed over the given bandwidths. Unbiased estimator by default; the biased
// variant includes the diagonal terms (and is exactly 0 for src == tgt).
MmdResult mmd_loss(const Tensor& src_feats, const Tensor& tgt_feats,
                   const std::vector<double>& bandwidths, bool biased = false);

// Median heuristic over the pooled sample, scaled by {0.5, 1, 2}.
std::vector<double> mmd_default_bandwidths(const Tensor& src_feats,
                                           const Tensor& tgt_feats);

struct WeightDependenceResult {
  double value = 0.0;
  std::vector<double> grad_b;      // aligned with params_b.values
  std::vector<double> grad_scale;  // per weight layer, d/d a_l
  std::vector<double> grad_shift;  // per weight layer, d/d b_l
};

// Sum over conv/linear weight matrices of ||W_b - a_l W_a - b_l||^2 with
// per-layer scalar scale/shift. `scales`/`shifts` are ordered like the weight
// blocks in the layout.
WeightDependenceResult weight_dependence_loss(const ModelParams& params_a,
                                              const ModelParams& params_b,
                                              const std::vector<double>& scales,
                                              const std::vector<double>& shifts);

// Number of weight matrices the dependence loss ties (layout order).
int weight_layer_count(const ModelLayout& layout);

}  // namespace gateadapt
