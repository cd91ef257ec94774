#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gateadapt/dataset.hpp"
#include "gateadapt/nn.hpp"
#include "gateadapt/pose.hpp"
#include "gateadapt/train.hpp"

namespace gateadapt {

// ---------------------------------------------------------------------------
// Bias calibration.
//
// The SC loss pins poses only up to a global rigid anchor, so a fine-tuned
// model can be self-consistent yet uniformly offset. Calibration removes the
// constant part: the offset is the mean signed position error on a reference
// set, added to every predicted position. Orientations are untouched.
// ---------------------------------------------------------------------------

// mean(gt.t - pred.t), component-wise (meters)
Vec3 calibrate_bias(const std::vector<Pose>& preds, const std::vector<Pose>& gts);

// adds `offset` to every predicted position; orientations pass through
std::vector<Pose> apply_calibration(std::vector<Pose> preds, const Vec3& offset);

// ---------------------------------------------------------------------------
// Metric primitives.
// ---------------------------------------------------------------------------

struct MaeRecord {
  double x_cm = 0.0;
  double y_cm = 0.0;
  double z_cm = 0.0;
  double yaw_deg = 0.0;  // angular difference wrapped to (-pi, pi]
};

MaeRecord mae(const std::vector<Pose>& preds, const std::vector<Pose>& gts);

// Sample Pearson correlation. Empty optional when either series has zero
// variance within numerical tolerance (e.g. a constant predictor), mirroring
// the "-" table entries.
std::optional<double> pearson(const std::vector<double>& a,
                              const std::vector<double>& b);

// Jammalamadaka-SaRao circular correlation on angles (radians):
//   rho = sum sin(a_i - a_mean) sin(b_i - b_mean)
//         / sqrt(sum sin^2(a_i - a_mean) * sum sin^2(b_i - b_mean))
// with circular means. Empty optional on zero angular spread.
std::optional<double> circular_pearson(const std::vector<double>& a,
                                       const std::vector<double>& b);

// Euler angle extraction for metric series. Roll and pitch are deliberately
// not reported (they are barely observable in this task and would read as
// noise); asking for them raises UnsupportedMetric.
enum class AngleMetric { kYaw, kRoll, kPitch };
std::vector<double> angle_series(const std::vector<Pose>& poses, AngleMetric metric);

// ---------------------------------------------------------------------------
// Predictors: one evaluation path for every method.
// ---------------------------------------------------------------------------

enum class PredictorKind { kNetwork, kConstant, kPencilNetwork };

struct Predictor {
  PredictorKind kind = PredictorKind::kNetwork;
  ModelParams params;      // kNetwork / kPencilNetwork
  PoseVector9 constant{};  // kConstant

  static Predictor network(ModelParams p);
  static Predictor pencil_network(ModelParams p);  // pencil filter before inference
  static Predictor constant_pose(const PoseVector9& encoding);
};

// Eval-mode inference over every frame of the split, sequence-major order.
std::vector<Pose> predict_split(const Predictor& pred,
                                const std::vector<Sequence>& split,
                                int batch_size = 32);

// Applies the pencil filter to every stored frame of a split (used to train
// the pencil-filter baseline on preprocessed images).
std::vector<Sequence> pencil_split(std::vector<Sequence> split);

// ---------------------------------------------------------------------------
// Full evaluation.
// ---------------------------------------------------------------------------

struct CalibrationPolicy {
  enum class Mode {
    kFullTestSet,   // offset estimated on the whole test set (default)
    kHeldOutBatch,  // offset from the first `held_out_count` frames; metrics
                    // on the remainder (deployment-honest variant)
  };
  Mode mode = Mode::kFullTestSet;
  int held_out_count = 32;
  void validate() const;
};

struct EvalMetrics {
  double mse_xyz_cm2 = 0.0;  // mean squared 3D position error
  double mae_x_cm = 0.0;
  double mae_y_cm = 0.0;
  double mae_z_cm = 0.0;
  double mae_yaw_deg = 0.0;
  std::optional<double> rho_x, rho_y, rho_z;  // Pearson per axis
  std::optional<double> rho_yaw;              // circular Pearson
  int n_test = 0;                             // frames the metrics cover
};

// Inference + calibration + metric suite on a labeled test split. The same
// calibration policy is applied to every predictor kind.
EvalMetrics evaluate(const Predictor& pred, const std::vector<Sequence>& test,
                     const CalibrationPolicy& policy = {});

// ---------------------------------------------------------------------------
// Results tables.
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string method;
  EvalMetrics metrics;
  std::uint64_t seed = 0;
};

// CSV: method,mse_xyz_cm2,mae_x_cm,mae_y_cm,mae_z_cm,mae_yaw_deg,
//      rho_x,rho_y,rho_z,rho_yaw,n_test,seed  (undefined rho -> empty field)
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);

// ---------------------------------------------------------------------------
// Data ablation: fine-tune on the first N train sequences, evaluate, repeat.
// Every count runs with the same fine-tune seed, so the full-set row
// reproduces the main experiment exactly.
// ---------------------------------------------------------------------------

struct AblationConfig {
  std::vector<int> seq_counts;
  TrainConfig finetune;
  PairSamplerConfig sampler;
  CalibrationPolicy calibration;
  void validate(int available_sequences) const;
};

struct AblationRow {
  int seq_count = 0;
  EvalMetrics metrics;
  std::uint64_t seed = 0;
};

std::vector<AblationRow> ablation(const AblationConfig& cfg,
                                  const ModelParams& pretrained,
                                  const std::vector<Sequence>& real_train,
                                  const std::vector<Sequence>& real_val,
                                  const std::vector<Sequence>& real_test);

// CSV: seq_count,mse_xyz_cm2,...,n_test,seed (columns as results CSV)
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace gateadapt
