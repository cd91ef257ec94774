#include "gateadapt/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <utility>

#include "gateadapt/errors.hpp"
#include "gateadapt/sim.hpp"

namespace gateadapt {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a == 0) throw DataEmpty(std::string(what) + ": empty series");
  if (a != b)
    throw ShapeMismatch(std::string(what) + ": series lengths " +
                        std::to_string(a) + " vs " + std::to_string(b));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_optional(const std::optional<double>& v) {
  return v.has_value() ? fmt_double(*v) : std::string();
}

std::string metrics_fields(const EvalMetrics& m, std::uint64_t seed) {
  std::string row;
  row += fmt_double(m.mse_xyz_cm2) + ",";
  row += fmt_double(m.mae_x_cm) + ",";
  row += fmt_double(m.mae_y_cm) + ",";
  row += fmt_double(m.mae_z_cm) + ",";
  row += fmt_double(m.mae_yaw_deg) + ",";
  row += fmt_optional(m.rho_x) + ",";
  row += fmt_optional(m.rho_y) + ",";
  row += fmt_optional(m.rho_z) + ",";
  row += fmt_optional(m.rho_yaw) + ",";
  row += std::to_string(m.n_test) + ",";
  row += std::to_string(seed);
  return row;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (const std::string& line : lines) f << line << "\n";
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace

// --------------------------------------------------------------------------
// calibration
// --------------------------------------------------------------------------

Vec3 calibrate_bias(const std::vector<Pose>& preds, const std::vector<Pose>& gts) {
  require_aligned(preds.size(), gts.size(), "calibrate_bias");
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 0; i < preds.size(); ++i) sum += gts[i].t - preds[i].t;
  return sum / static_cast<double>(preds.size());
}

std::vector<Pose> apply_calibration(std::vector<Pose> preds, const Vec3& offset) {
  for (Pose& p : preds) p.t += offset;
  return preds;
}

// --------------------------------------------------------------------------
// metric primitives
// --------------------------------------------------------------------------

MaeRecord mae(const std::vector<Pose>& preds, const std::vector<Pose>& gts) {
  require_aligned(preds.size(), gts.size(), "mae");
  MaeRecord r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Vec3 e = preds[i].t - gts[i].t;
    r.x_cm += std::abs(e.x());
    r.y_cm += std::abs(e.y());
    r.z_cm += std::abs(e.z());
    const double dyaw =
        wrap_angle(yaw_of(preds[i]).radians - yaw_of(gts[i]).radians);
    r.yaw_deg += std::abs(dyaw);
  }
  const double n = static_cast<double>(preds.size());
  r.x_cm *= 100.0 / n;
  r.y_cm *= 100.0 / n;
  r.z_cm *= 100.0 / n;
  r.yaw_deg *= kRadToDeg / n;
  return r;
}

std::optional<double> pearson(const std::vector<double>& a,
                              const std::vector<double>& b) {
  require_aligned(a.size(), b.size(), "pearson");
  if (a.size() < 2) throw DataEmpty("pearson: need at least 2 points");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  double maga = 0.0, magb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
    maga = std::max(maga, std::abs(a[i]));
    magb = std::max(magb, std::abs(b[i]));
  }
  // constant series leave sub-ulp residue around the mean; treat a per-point
  // RMS deviation below 1e-12 of the data magnitude as zero variance
  const double floor_a = n * std::pow(1e-12 * std::max(1.0, maga), 2);
  const double floor_b = n * std::pow(1e-12 * std::max(1.0, magb), 2);
  if (va <= floor_a || vb <= floor_b) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

namespace {
double circular_mean(const std::vector<double>& angles) {
  double s = 0.0, c = 0.0;
  for (double a : angles) {
    s += std::sin(a);
    c += std::cos(a);
  }
  return std::atan2(s, c);
}
}  // namespace

std::optional<double> circular_pearson(const std::vector<double>& a,
                                       const std::vector<double>& b) {
  require_aligned(a.size(), b.size(), "circular_pearson");
  if (a.size() < 2) throw DataEmpty("circular_pearson: need at least 2 points");
  const double ma = circular_mean(a);
  const double mb = circular_mean(b);
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double sa = std::sin(a[i] - ma);
    const double sb = std::sin(b[i] - mb);
    num += sa * sb;
    va += sa * sa;
    vb += sb * sb;
  }
  // constant angles leave sub-ulp sine residue around the circular mean
  const double n = static_cast<double>(a.size());
  if (va <= n * 1e-24 || vb <= n * 1e-24) return std::nullopt;
  return num / std::sqrt(va * vb);
}

std::vector<double> angle_series(const std::vector<Pose>& poses, AngleMetric metric) {
  if (metric != AngleMetric::kYaw)
    throw UnsupportedMetric(
        "roll and pitch metrics are not reported; only yaw is supported");
  std::vector<double> out;
  out.reserve(poses.size());
  for (const Pose& p : poses) out.push_back(yaw_of(p).radians);
  return out;
}

// --------------------------------------------------------------------------
// predictors
// --------------------------------------------------------------------------

Predictor Predictor::network(ModelParams p) {
  Predictor pr;
  pr.kind = PredictorKind::kNetwork;
  pr.params = std::move(p);
  return pr;
}

Predictor Predictor::pencil_network(ModelParams p) {
  Predictor pr;
  pr.kind = PredictorKind::kPencilNetwork;
  pr.params = std::move(p);
  return pr;
}

Predictor Predictor::constant_pose(const PoseVector9& encoding) {
  Predictor pr;
  pr.kind = PredictorKind::kConstant;
  pr.constant = encoding;
  return pr;
}

namespace {

struct FlatFrames {
  std::vector<std::pair<int, int>> refs;  // (sequence, frame)
  int width = 0, height = 0;
};

FlatFrames flatten(const std::vector<Sequence>& split) {
  FlatFrames f;
  for (std::size_t s = 0; s < split.size(); ++s) {
    const Sequence& seq = split[s];
    if (f.refs.empty()) {
      f.width = seq.width;
      f.height = seq.height;
    } else if (seq.width != f.width || seq.height != f.height) {
      throw ShapeMismatch("predict_split: mixed frame sizes in split");
    }
    for (std::size_t i = 0; i < seq.samples.size(); ++i)
      f.refs.emplace_back(static_cast<int>(s), static_cast<int>(i));
  }
  if (f.refs.empty()) throw DataEmpty("predict_split: no frames");
  return f;
}

}  // namespace

std::vector<Pose> predict_split(const Predictor& pred,
                                const std::vector<Sequence>& split,
                                int batch_size) {
  if (batch_size < 1) throw ConfigInvalid("predict_split: batch_size must be >= 1");
  const FlatFrames flat = flatten(split);
  const int n = static_cast<int>(flat.refs.size());
  std::vector<Pose> out;
  out.reserve(flat.refs.size());

  if (pred.kind == PredictorKind::kConstant) {
    const Pose p = vector9_to_pose(pred.constant);
    out.assign(flat.refs.size(), p);
    return out;
  }

  const int hw = flat.width * flat.height;
  for (int begin = 0; begin < n; begin += batch_size) {
    const int count = std::min(batch_size, n - begin);
    Tensor x({count, 1, flat.height, flat.width});
    for (int k = 0; k < count; ++k) {
      const auto [s, i] = flat.refs[static_cast<std::size_t>(begin + k)];
      Image img = split[static_cast<std::size_t>(s)].image(static_cast<std::size_t>(i));
      if (pred.kind == PredictorKind::kPencilNetwork) img = pencil_filter(img);
      std::copy(img.pixels.begin(), img.pixels.end(),
                x.data.begin() + static_cast<std::ptrdiff_t>(k) * hw);
    }
    const ForwardResult fr = forward_eval(pred.params, x);
    for (int k = 0; k < count; ++k) {
      PoseVector9 v;
      for (int j = 0; j < 9; ++j)
        v.v[j] = fr.out.data[static_cast<std::size_t>(k * 9 + j)];
      out.push_back(vector9_to_pose(v));
    }
  }
  return out;
}

std::vector<Sequence> pencil_split(std::vector<Sequence> split) {
  for (Sequence& seq : split) {
    for (Sample& s : seq.samples) {
      Image img = Image(seq.width, seq.height);
      for (std::size_t i = 0; i < s.pixels.size(); ++i)
        img.pixels[i] = s.pixels[i] / 255.0;
      const Image filtered = pencil_filter(img);
      for (std::size_t i = 0; i < s.pixels.size(); ++i)
        s.pixels[i] = quantize_pixel(filtered.pixels[i]);
    }
  }
  return split;
}

// --------------------------------------------------------------------------
// evaluate
// --------------------------------------------------------------------------

void CalibrationPolicy::validate() const {
  if (mode == Mode::kHeldOutBatch && held_out_count < 1)
    throw ConfigInvalid("CalibrationPolicy: held_out_count must be >= 1");
}

EvalMetrics evaluate(const Predictor& pred, const std::vector<Sequence>& test,
                     const CalibrationPolicy& policy) {
  policy.validate();
  std::vector<Pose> gts;
  for (const Sequence& seq : test)
    for (const Sample& s : seq.samples) {
      if (!s.gt_gate.has_value())
        throw DataEmpty("evaluate: test split has frames without ground truth");
      gts.push_back(*s.gt_gate);
    }
  if (gts.empty()) throw DataEmpty("evaluate: empty test split");

  std::vector<Pose> preds = predict_split(pred, test);

  std::size_t cal_count = gts.size();
  std::size_t eval_begin = 0;
  if (policy.mode == CalibrationPolicy::Mode::kHeldOutBatch) {
    cal_count = std::min<std::size_t>(
        static_cast<std::size_t>(policy.held_out_count), gts.size());
    eval_begin = cal_count;
    if (eval_begin >= gts.size())
      throw DataEmpty("evaluate: calibration batch consumed the whole test set");
  }

  const Vec3 offset =
      calibrate_bias({preds.begin(), preds.begin() + static_cast<std::ptrdiff_t>(cal_count)},
                     {gts.begin(), gts.begin() + static_cast<std::ptrdiff_t>(cal_count)});
  const std::vector<Pose> cal_preds = apply_calibration(
      {preds.begin() + static_cast<std::ptrdiff_t>(eval_begin), preds.end()}, offset);
  const std::vector<Pose> eval_gts(gts.begin() + static_cast<std::ptrdiff_t>(eval_begin),
                                   gts.end());

  EvalMetrics m;
  m.n_test = static_cast<int>(eval_gts.size());

  double mse = 0.0;
  std::vector<double> px, py, pz, gx, gy, gz;
  px.reserve(eval_gts.size());
  for (std::size_t i = 0; i < eval_gts.size(); ++i) {
    const Vec3 e = cal_preds[i].t - eval_gts[i].t;
    mse += e.squaredNorm();
    px.push_back(cal_preds[i].t.x());
    py.push_back(cal_preds[i].t.y());
    pz.push_back(cal_preds[i].t.z());
    gx.push_back(eval_gts[i].t.x());
    gy.push_back(eval_gts[i].t.y());
    gz.push_back(eval_gts[i].t.z());
  }
  m.mse_xyz_cm2 = mse / static_cast<double>(eval_gts.size()) * 1e4;

  const MaeRecord r = mae(cal_preds, eval_gts);
  m.mae_x_cm = r.x_cm;
  m.mae_y_cm = r.y_cm;
  m.mae_z_cm = r.z_cm;
  m.mae_yaw_deg = r.yaw_deg;

  if (eval_gts.size() >= 2) {  // a single frame leaves correlations undefined
    m.rho_x = pearson(px, gx);
    m.rho_y = pearson(py, gy);
    m.rho_z = pearson(pz, gz);
    m.rho_yaw = circular_pearson(angle_series(cal_preds, AngleMetric::kYaw),
                                 angle_series(eval_gts, AngleMetric::kYaw));
  }
  return m;
}

// --------------------------------------------------------------------------
// results tables
// --------------------------------------------------------------------------

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::vector<std::string> lines;
  lines.push_back(
      "method,mse_xyz_cm2,mae_x_cm,mae_y_cm,mae_z_cm,mae_yaw_deg,"
      "rho_x,rho_y,rho_z,rho_yaw,n_test,seed");
  for (const ResultRow& r : rows)
    lines.push_back(r.method + "," + metrics_fields(r.metrics, r.seed));
  write_lines(path, lines);
}

void AblationConfig::validate(int available_sequences) const {
  finetune.validate();
  sampler.validate();
  calibration.validate();
  for (int c : seq_counts)
    if (c < 1 || c > available_sequences)
      throw ConfigInvalid("ablation: sequence count " + std::to_string(c) +
                          " outside [1, " + std::to_string(available_sequences) +
                          "]");
}

std::vector<AblationRow> ablation(const AblationConfig& cfg,
                                  const ModelParams& pretrained,
                                  const std::vector<Sequence>& real_train,
                                  const std::vector<Sequence>& real_val,
                                  const std::vector<Sequence>& real_test) {
  cfg.validate(static_cast<int>(real_train.size()));
  std::vector<AblationRow> rows;
  for (int count : cfg.seq_counts) {
    const std::vector<Sequence> subset(real_train.begin(),
                                       real_train.begin() + count);
    const TrainResult r =
        finetune_sc(cfg.finetune, pretrained, subset, real_val, cfg.sampler);
    AblationRow row;
    row.seq_count = count;
    row.metrics = evaluate(Predictor::network(r.best), real_test, cfg.calibration);
    row.seed = cfg.finetune.seed;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::vector<std::string> lines;
  lines.push_back(
      "seq_count,mse_xyz_cm2,mae_x_cm,mae_y_cm,mae_z_cm,mae_yaw_deg,"
      "rho_x,rho_y,rho_z,rho_yaw,n_test,seed");
  for (const AblationRow& r : rows)
    lines.push_back(std::to_string(r.seq_count) + "," +
                    metrics_fields(r.metrics, r.seed));
  write_lines(path, lines);
}

}  // namespace gateadapt
