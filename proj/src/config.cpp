#include "gateadapt/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gateadapt/errors.hpp"

namespace gateadapt {

using nlohmann::json;

namespace {

// -------------------------------------------------------------------------
// Error reporting: every diagnostic names the dotted key path and, where the
// key occurs in the document, its line number.
// -------------------------------------------------------------------------

struct Doc {
  const std::string& text;

  // line of the first occurrence of "key" (as a quoted JSON key), 1-based
  std::string locate(const std::string& key) const {
    const std::string needle = "\"" + key + "\"";
    const std::size_t pos = text.find(needle);
    if (pos == std::string::npos) return "";
    const auto line =
        1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
    return " (line " + std::to_string(line) + ")";
  }

  [[noreturn]] void fail(const std::string& path, const std::string& key,
                         const std::string& what) const {
    throw ConfigInvalid("config: \"" + (path.empty() ? key : path + "." + key) +
                        "\"" + locate(key) + ": " + what);
  }
};

class Section {
 public:
  Section(const Doc& doc, const json& obj, std::string path,
          std::initializer_list<const char*> allowed)
      : doc_(doc), obj_(obj), path_(std::move(path)) {
    if (!obj.is_object())
      throw ConfigInvalid("config: \"" + path_ + "\"" + doc.locate(leaf()) +
                          ": expected an object");
    for (const auto& [key, value] : obj.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) doc_.fail(path_, key, "unknown key");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const json& raw(const char* key) const { return obj_.at(key); }
  const Doc& doc() const { return doc_; }
  const std::string& path() const { return path_; }

  void get(const char* key, double& out) const {
    if (!has(key)) return;
    if (!obj_.at(key).is_number()) doc_.fail(path_, key, "expected a number");
    out = obj_.at(key).get<double>();
  }
  void get(const char* key, int& out) const {
    if (!has(key)) return;
    if (!obj_.at(key).is_number_integer())
      doc_.fail(path_, key, "expected an integer");
    out = obj_.at(key).get<int>();
  }
  void get(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!obj_.at(key).is_boolean()) doc_.fail(path_, key, "expected a boolean");
    out = obj_.at(key).get<bool>();
  }
  void get(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    if (!obj_.at(key).is_number_unsigned() && !obj_.at(key).is_number_integer())
      doc_.fail(path_, key, "expected a non-negative integer");
    if (obj_.at(key).is_number_integer() && obj_.at(key).get<std::int64_t>() < 0)
      doc_.fail(path_, key, "expected a non-negative integer");
    out = obj_.at(key).get<std::uint64_t>();
  }
  void get(const char* key, std::string& out) const {
    if (!has(key)) return;
    if (!obj_.at(key).is_string()) doc_.fail(path_, key, "expected a string");
    out = obj_.at(key).get<std::string>();
  }
  void get(const char* key, std::vector<double>& out) const {
    if (!has(key)) return;
    const json& arr = obj_.at(key);
    if (!arr.is_array()) doc_.fail(path_, key, "expected an array of numbers");
    out.clear();
    for (const json& v : arr) {
      if (!v.is_number()) doc_.fail(path_, key, "expected an array of numbers");
      out.push_back(v.get<double>());
    }
  }
  void get(const char* key, std::vector<int>& out) const {
    if (!has(key)) return;
    const json& arr = obj_.at(key);
    if (!arr.is_array()) doc_.fail(path_, key, "expected an array of integers");
    out.clear();
    for (const json& v : arr) {
      if (!v.is_number_integer())
        doc_.fail(path_, key, "expected an array of integers");
      out.push_back(v.get<int>());
    }
  }

  Section child(const char* key, std::initializer_list<const char*> allowed) const {
    return Section(doc_, obj_.at(key), path_.empty() ? key : path_ + "." + key,
                   allowed);
  }

 private:
  std::string leaf() const {
    const std::size_t dot = path_.rfind('.');
    return dot == std::string::npos ? path_ : path_.substr(dot + 1);
  }

  const Doc& doc_;
  const json& obj_;
  std::string path_;
};

// -------------------------------------------------------------------------
// Section parsers.
// -------------------------------------------------------------------------

constexpr std::initializer_list<const char*> kDomainKeys = {
    "tag",           "vignette_strength",   "blur_sigma_lo",
    "blur_sigma_hi", "mult_noise_std",      "exposure_lo",
    "exposure_hi",   "background_base",     "background_gradient",
    "background_texture", "gate_intensity"};

void parse_domain(const Section& s, DomainConfig& d) {
  s.get("tag", d.tag);
  s.get("vignette_strength", d.vignette_strength);
  s.get("blur_sigma_lo", d.blur_sigma_lo);
  s.get("blur_sigma_hi", d.blur_sigma_hi);
  s.get("mult_noise_std", d.mult_noise_std);
  s.get("exposure_lo", d.exposure_lo);
  s.get("exposure_hi", d.exposure_hi);
  s.get("background_base", d.background_base);
  s.get("background_gradient", d.background_gradient);
  s.get("background_texture", d.background_texture);
  s.get("gate_intensity", d.gate_intensity);
}

void parse_camera(const Section& s, CameraIntrinsics& cam) {
  if (s.has("preset")) {
    std::string preset;
    s.get("preset", preset);
    if (preset == "desk")
      cam = CameraIntrinsics::desk();
    else if (preset == "full")
      cam = CameraIntrinsics{};
    else
      s.doc().fail(s.path(), "preset", "expected \"desk\" or \"full\"");
  }
  s.get("width", cam.width);
  s.get("height", cam.height);
  s.get("focal_px", cam.focal_px);
  s.get("cx", cam.cx);
  s.get("cy", cam.cy);
}

void parse_dataset(const Section& s, DatasetConfig& d) {
  if (s.has("gate")) {
    const Section g = s.child(
        "gate", {"width", "height", "bottom_height", "beam_thickness"});
    g.get("width", d.gate.width);
    g.get("height", d.gate.height);
    g.get("bottom_height", d.gate.bottom_height);
    g.get("beam_thickness", d.gate.beam_thickness);
  }
  if (s.has("camera"))
    parse_camera(s.child("camera", {"preset", "width", "height", "focal_px",
                                    "cx", "cy"}),
                 d.cam);
  if (s.has("odometry")) {
    const Section o = s.child(
        "odometry", {"drift_rate", "yaw_drift_rate", "noise_std", "yaw_noise_std"});
    o.get("drift_rate", d.odometry.drift_rate);
    o.get("yaw_drift_rate", d.odometry.yaw_drift_rate);
    o.get("noise_std", d.odometry.noise_std);
    o.get("yaw_noise_std", d.odometry.yaw_noise_std);
  }
  if (s.has("sim_domain")) parse_domain(s.child("sim_domain", kDomainKeys), d.sim);
  if (s.has("real_domain"))
    parse_domain(s.child("real_domain", kDomainKeys), d.real);
  if (s.has("trajectory")) {
    const Section t = s.child(
        "trajectory",
        {"n_frames", "fps", "dist_min", "dist_max", "lateral", "height_min",
         "height_max", "wander", "yaw_jitter", "pitch_roll_jitter", "smoothing",
         "fov_margin", "waypoint_period_s"});
    t.get("n_frames", d.trajectory.n_frames);
    t.get("fps", d.trajectory.fps);
    t.get("dist_min", d.trajectory.dist_min);
    t.get("dist_max", d.trajectory.dist_max);
    t.get("lateral", d.trajectory.lateral);
    t.get("height_min", d.trajectory.height_min);
    t.get("height_max", d.trajectory.height_max);
    t.get("wander", d.trajectory.wander);
    t.get("yaw_jitter", d.trajectory.yaw_jitter);
    t.get("pitch_roll_jitter", d.trajectory.pitch_roll_jitter);
    t.get("smoothing", d.trajectory.smoothing);
    t.get("fov_margin", d.trajectory.fov_margin);
    t.get("waypoint_period_s", d.trajectory.waypoint_period_s);
  }
  if (s.has("splits")) {
    const Section sp = s.child(
        "splits", {"sim_train", "sim_val", "real_train", "real_val", "real_test"});
    sp.get("sim_train", d.splits.sim_train);
    sp.get("sim_val", d.splits.sim_val);
    sp.get("real_train", d.splits.real_train);
    sp.get("real_val", d.splits.real_val);
    sp.get("real_test", d.splits.real_test);
  }
  s.get("gate_yaw", d.gate_yaw);
  s.get("master_seed", d.master_seed);
}

void parse_model(const Section& s, ModelConfig& m) {
  if (s.has("preset")) {
    std::string preset;
    s.get("preset", preset);
    if (preset == "desk")
      m = ModelConfig::desk();
    else if (preset == "full")
      m = ModelConfig::full();
    else
      s.doc().fail(s.path(), "preset", "expected \"desk\" or \"full\"");
  }
  s.get("input_size", m.input_size);
  if (s.has("conv_channels")) {
    std::vector<int> ch;
    s.get("conv_channels", ch);
    if (ch.size() != m.conv_channels.size())
      s.doc().fail(s.path(), "conv_channels", "expected exactly 4 integers");
    std::copy(ch.begin(), ch.end(), m.conv_channels.begin());
  }
  s.get("kernel", m.kernel);
  s.get("stride", m.stride);
  s.get("pool_blocks", m.pool_blocks);
  s.get("hidden", m.hidden);
  s.get("bn_eps", m.bn_eps);
  s.get("bn_momentum", m.bn_momentum);
}

void parse_train(const Section& s, TrainConfig& t) {
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("lr", t.lr);
  s.get("weight_decay", t.weight_decay);
  s.get("seed", t.seed);
  s.get("checkpoint_every", t.checkpoint_every);
  s.get("augment", t.augment);
}

constexpr std::initializer_list<const char*> kTrainKeys = {
    "epochs", "batch_size", "lr",      "weight_decay",
    "seed",   "checkpoint_every", "augment"};

void parse_sampler(const Section& s, PairSamplerConfig& p) {
  if (s.has("strategy")) {
    std::string strategy;
    s.get("strategy", strategy);
    if (strategy == "max_gap_bounded")
      p.strategy = PairSamplerConfig::Strategy::kMaxGapBounded;
    else if (strategy == "random_in_sequence")
      p.strategy = PairSamplerConfig::Strategy::kRandomInSequence;
    else
      s.doc().fail(s.path(), "strategy",
                   "expected \"max_gap_bounded\" or \"random_in_sequence\"");
  }
  s.get("max_gap_s", p.max_gap_s);
  s.get("pairs_per_epoch", p.pairs_per_epoch);
}

void parse_evaluation(const Section& s, CalibrationPolicy& c) {
  if (s.has("calibration")) {
    std::string mode;
    s.get("calibration", mode);
    if (mode == "full_test_set")
      c.mode = CalibrationPolicy::Mode::kFullTestSet;
    else if (mode == "held_out_batch")
      c.mode = CalibrationPolicy::Mode::kHeldOutBatch;
    else
      s.doc().fail(s.path(), "calibration",
                   "expected \"full_test_set\" or \"held_out_batch\"");
  }
  s.get("held_out_count", c.held_out_count);
}

void parse_overlay(const Section& s, std::vector<OverlayFrameRef>& frames) {
  if (!s.has("frames")) return;
  const json& arr = s.raw("frames");
  if (!arr.is_array()) s.doc().fail(s.path(), "frames", "expected an array");
  frames.clear();
  for (const json& item : arr) {
    const Section f(s.doc(), item, s.path() + ".frames[]",
                    {"split", "seq", "frame"});
    OverlayFrameRef ref;
    f.get("split", ref.split);
    f.get("seq", ref.seq);
    f.get("frame", ref.frame);
    frames.push_back(std::move(ref));
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    // nlohmann diagnostics already carry line and column
    throw ConfigInvalid(std::string("config: ") + e.what());
  }
  const Doc doc{json_text};
  if (!root.is_object())
    throw ConfigInvalid("config: top level must be a JSON object");

  ExperimentConfig cfg;
  const Section top(doc, root, "",
                    {"dataset", "model", "pretrain", "finetune", "sampler", "da",
                     "evaluation", "ablation", "overlay", "io"});
  if (top.has("dataset"))
    parse_dataset(
        top.child("dataset",
                  {"gate", "camera", "odometry", "sim_domain", "real_domain",
                   "trajectory", "splits", "gate_yaw", "master_seed"}),
        cfg.dataset);
  if (top.has("model"))
    parse_model(top.child("model", {"preset", "input_size", "conv_channels",
                                    "kernel", "stride", "pool_blocks", "hidden",
                                    "bn_eps", "bn_momentum"}),
                cfg.model);
  if (top.has("pretrain")) parse_train(top.child("pretrain", kTrainKeys), cfg.pretrain);
  if (top.has("finetune")) parse_train(top.child("finetune", kTrainKeys), cfg.finetune);
  if (top.has("sampler"))
    parse_sampler(top.child("sampler", {"strategy", "max_gap_s", "pairs_per_epoch"}),
                  cfg.sampler);
  if (top.has("da")) {
    const Section d = top.child("da", {"lambda_mmd", "lambda_w", "bandwidths"});
    d.get("lambda_mmd", cfg.da.lambda_mmd);
    d.get("lambda_w", cfg.da.lambda_w);
    d.get("bandwidths", cfg.da.bandwidths);
  }
  if (top.has("evaluation"))
    parse_evaluation(top.child("evaluation", {"calibration", "held_out_count"}),
                     cfg.calibration);
  if (top.has("ablation")) {
    const Section a = top.child("ablation", {"seq_counts"});
    a.get("seq_counts", cfg.ablation_counts);
  }
  if (top.has("overlay")) parse_overlay(top.child("overlay", {"frames"}), cfg.overlay_frames);
  if (top.has("io")) {
    const Section io = top.child("io", {"dataset_dir", "checkpoint", "stream_a"});
    io.get("dataset_dir", cfg.io.dataset_dir);
    io.get("checkpoint", cfg.io.checkpoint);
    io.get("stream_a", cfg.io.stream_a);
  }

  // a parsed config is a valid config
  cfg.dataset.validate();
  cfg.model.validate();
  cfg.pretrain.validate();
  cfg.finetune.validate();
  cfg.sampler.validate();
  cfg.da.validate();
  cfg.calibration.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

namespace {

json domain_to_json(const DomainConfig& d) {
  return json{{"tag", d.tag},
              {"vignette_strength", d.vignette_strength},
              {"blur_sigma_lo", d.blur_sigma_lo},
              {"blur_sigma_hi", d.blur_sigma_hi},
              {"mult_noise_std", d.mult_noise_std},
              {"exposure_lo", d.exposure_lo},
              {"exposure_hi", d.exposure_hi},
              {"background_base", d.background_base},
              {"background_gradient", d.background_gradient},
              {"background_texture", d.background_texture},
              {"gate_intensity", d.gate_intensity}};
}

json train_to_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"lr", t.lr},
              {"weight_decay", t.weight_decay},
              {"seed", t.seed},
              {"checkpoint_every", t.checkpoint_every},
              {"augment", t.augment}};
}

}  // namespace

std::string experiment_config_json(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  json j;
  j["dataset"] = {
      {"gate",
       {{"width", d.gate.width},
        {"height", d.gate.height},
        {"bottom_height", d.gate.bottom_height},
        {"beam_thickness", d.gate.beam_thickness}}},
      {"camera",
       {{"width", d.cam.width},
        {"height", d.cam.height},
        {"focal_px", d.cam.focal_px},
        {"cx", d.cam.cx},
        {"cy", d.cam.cy}}},
      {"odometry",
       {{"drift_rate", d.odometry.drift_rate},
        {"yaw_drift_rate", d.odometry.yaw_drift_rate},
        {"noise_std", d.odometry.noise_std},
        {"yaw_noise_std", d.odometry.yaw_noise_std}}},
      {"sim_domain", domain_to_json(d.sim)},
      {"real_domain", domain_to_json(d.real)},
      {"trajectory",
       {{"n_frames", d.trajectory.n_frames},
        {"fps", d.trajectory.fps},
        {"dist_min", d.trajectory.dist_min},
        {"dist_max", d.trajectory.dist_max},
        {"lateral", d.trajectory.lateral},
        {"height_min", d.trajectory.height_min},
        {"height_max", d.trajectory.height_max},
        {"wander", d.trajectory.wander},
        {"yaw_jitter", d.trajectory.yaw_jitter},
        {"pitch_roll_jitter", d.trajectory.pitch_roll_jitter},
        {"smoothing", d.trajectory.smoothing},
        {"fov_margin", d.trajectory.fov_margin},
        {"waypoint_period_s", d.trajectory.waypoint_period_s}}},
      {"splits",
       {{"sim_train", d.splits.sim_train},
        {"sim_val", d.splits.sim_val},
        {"real_train", d.splits.real_train},
        {"real_val", d.splits.real_val},
        {"real_test", d.splits.real_test}}},
      {"gate_yaw", d.gate_yaw},
      {"master_seed", d.master_seed}};
  j["model"] = {{"input_size", cfg.model.input_size},
                {"conv_channels", cfg.model.conv_channels},
                {"kernel", cfg.model.kernel},
                {"stride", cfg.model.stride},
                {"pool_blocks", cfg.model.pool_blocks},
                {"hidden", cfg.model.hidden},
                {"bn_eps", cfg.model.bn_eps},
                {"bn_momentum", cfg.model.bn_momentum}};
  j["pretrain"] = train_to_json(cfg.pretrain);
  j["finetune"] = train_to_json(cfg.finetune);
  j["sampler"] = {
      {"strategy", cfg.sampler.strategy == PairSamplerConfig::Strategy::kMaxGapBounded
                       ? "max_gap_bounded"
                       : "random_in_sequence"},
      {"max_gap_s", cfg.sampler.max_gap_s},
      {"pairs_per_epoch", cfg.sampler.pairs_per_epoch}};
  j["da"] = {{"lambda_mmd", cfg.da.lambda_mmd},
             {"lambda_w", cfg.da.lambda_w},
             {"bandwidths", cfg.da.bandwidths}};
  j["evaluation"] = {
      {"calibration", cfg.calibration.mode == CalibrationPolicy::Mode::kFullTestSet
                          ? "full_test_set"
                          : "held_out_batch"},
      {"held_out_count", cfg.calibration.held_out_count}};
  j["ablation"] = {{"seq_counts", cfg.ablation_counts}};
  json frames = json::array();
  for (const OverlayFrameRef& f : cfg.overlay_frames)
    frames.push_back({{"split", f.split}, {"seq", f.seq}, {"frame", f.frame}});
  j["overlay"] = {{"frames", frames}};
  j["io"] = {{"dataset_dir", cfg.io.dataset_dir},
             {"checkpoint", cfg.io.checkpoint},
             {"stream_a", cfg.io.stream_a}};
  return j.dump(2) + "\n";
}

}  // namespace gateadapt
