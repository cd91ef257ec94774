#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gateadapt/dataset.hpp"
#include "gateadapt/nn.hpp"
#include "gateadapt/pose.hpp"
#include "gateadapt/tensor.hpp"

namespace gateadapt {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoint callbacks; 0 = never
  // pretraining only: apply the half-strength appearance shift to sim images
  // (the pencil-filter baseline trains on preprocessed frames instead)
  bool augment = true;

  // paper schedule: pose pretraining at lr 1e-3, SC fine-tuning at 1e-6,
  // 100 epochs each
  static TrainConfig pretrain_defaults();
  static TrainConfig finetune_defaults();
  // desk-scale presets: same learning-rate split, epochs scaled down to
  // 20 (pretrain) / 30 (fine-tune) for 64x64 CPU runs
  static TrainConfig desk_pretrain();
  static TrainConfig desk_finetune();

  void validate() const;
};

struct PairSamplerConfig {
  enum class Strategy { kRandomInSequence, kMaxGapBounded };
  Strategy strategy = Strategy::kMaxGapBounded;
  double max_gap_s = 2.0;  // only used by kMaxGapBounded
  int pairs_per_epoch = 1000;

  void validate() const;
};

// A sample address within a split, and an intra-sequence pair of them.
struct SampleRef {
  int seq = 0;
  int idx = 0;
};
struct SamplePair {
  int seq = 0;
  int first = 0;
  int second = 0;
};

// Draw pairs_per_epoch pairs, each from a single sequence (static-scene
// assumption), sequences weighted by length. kMaxGapBounded additionally
// enforces |t_first - t_second| <= max_gap_s. Throws DataEmpty if no sequence
// has two samples (or none are within the gap).
std::vector<SamplePair> sample_pairs(const std::vector<Sequence>& split,
                                     const PairSamplerConfig& cfg, Rng& rng);

// Stack frames into a [N, 1, H, W] tensor, optionally augmenting each frame
// (rng required when augment is set).
Tensor make_batch(const std::vector<Sequence>& split,
                  const std::vector<SampleRef>& refs,
                  const DomainConfig* augment = nullptr, Rng* rng = nullptr);
// Ground-truth poses for the same refs; throws DataEmpty if a ref lacks gt.
std::vector<Pose> gt_of(const std::vector<Sequence>& split,
                        const std::vector<SampleRef>& refs);
// Odometry poses for the same refs.
std::vector<Pose> odom_of(const std::vector<Sequence>& split,
                          const std::vector<SampleRef>& refs);

struct EpochStats {
  int epoch = 0;           // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;   // NaN when the phase has no validation objective
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams best;               // parameters at the argmin-val epoch
  int best_epoch = 0;             // 1-based epoch whose params are in `best`
  std::vector<EpochStats> curves;
};

// epoch (1-based) and a snapshot of the parameters at the end of that epoch
using CheckpointHook = std::function<void(int, const ModelParams&)>;

// Supervised pose regression on labeled sim sequences. Training frames get
// half-strength real-domain augmentations on the fly; validation is clean.
// Model selection: lowest validation pose loss (earliest on ties).
TrainResult pretrain(const TrainConfig& cfg, const ModelParams& init,
                     const std::vector<Sequence>& sim_train,
                     const std::vector<Sequence>& sim_val,
                     const CheckpointHook& hook = {});

// Self-supervised fine-tuning on real sequences: state-consistency loss over
// odometry-related intra-sequence pairs, no labels read. The validation pair
// set is drawn once per run so per-epoch selection values are comparable.
TrainResult finetune_sc(const TrainConfig& cfg, const ModelParams& start,
                        const std::vector<Sequence>& real_train,
                        const std::vector<Sequence>& real_val,
                        const PairSamplerConfig& sampler,
                        const CheckpointHook& hook = {});

// Constant baseline: mean position, chordal-mean orientation (average the 6D
// encodings, then re-orthonormalize).
PoseVector9 mean_predictor(const std::vector<Pose>& labels);

struct DaConfig {
  double lambda_mmd = 0.3;
  double lambda_w = 0.01;
  std::vector<double> bandwidths;  // empty: median heuristic per batch

  void validate() const;
};

struct DaResult {
  ModelParams stream_a;  // sim expert (pose loss only)
  ModelParams stream_b;  // adapted stream, the baseline's output
  std::vector<EpochStats> curves;  // train_loss = total stream-B objective
};

// Two-stream domain-adaptation baseline. Stream A trains on sim with the pose
// loss; stream B (same init) trains on the same sim batch schedule with the
// pose loss plus lambda_mmd * MMD between B's features on real frames and A's
// features on the matching sim frames, plus lambda_w * the weight-dependence
// penalty (per-layer scale/shift learned alongside). With both lambdas zero,
// stream B's trajectory is identical to stream A's. Passing `pretrained_a`
// skips stream A's training and aligns B to the given parameters instead.
DaResult train_da_baseline(const TrainConfig& cfg, const DaConfig& da,
                           const ModelParams& init,
                           const std::vector<Sequence>& sim_train,
                           const std::vector<Sequence>& real_train,
                           const ModelParams* pretrained_a = nullptr);

// Zero-shot baseline: evaluate the pretrained parameters as-is. Identity
// wrapper so every method flows through one evaluation path.
ModelParams run_zero_shot(const ModelParams& pretrained);

// "epoch,train_loss,val_loss,wall_seconds" with one row per epoch; NaN
// values are written as empty fields.
void write_curves_csv(const std::string& path,
                      const std::vector<EpochStats>& curves);

}  // namespace gateadapt
