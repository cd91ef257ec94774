#include "gateadapt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gateadapt/errors.hpp"
#include "gateadapt/rng.hpp"

namespace gateadapt {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'G', 'A', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

enum class SplitKind { kSimTrain, kSimVal, kRealTrain, kRealVal, kRealTest };

bool is_real(SplitKind k) {
  return k == SplitKind::kRealTrain || k == SplitKind::kRealVal ||
         k == SplitKind::kRealTest;
}
bool has_gt(SplitKind k) { return !is_real(k) || k == SplitKind::kRealTest; }

Sequence make_sequence(const DatasetConfig& cfg, const Pose& gate_world,
                       SplitKind kind, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<Pose> poses =
      sample_trajectory(cfg.trajectory, gate_world, cfg.cam, rng);
  const double dt = 1.0 / cfg.trajectory.fps;
  std::vector<Pose> measured;
  if (is_real(kind)) measured = simulate_odometry(poses, cfg.odometry, dt, rng);

  const DomainConfig& domain = is_real(kind) ? cfg.real : cfg.sim;
  Sequence seq;
  seq.seed = seed;
  seq.width = cfg.cam.width;
  seq.height = cfg.cam.height;
  seq.samples.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Pose rel = gate_relative_pose(gate_world, poses[i]);
    Image img = render_gate(rel, cfg.cam, cfg.gate, domain, rng);
    if (is_real(kind)) img = apply_augmentations(img, cfg.real, rng);

    Sample s;
    s.pixels.resize(img.pixels.size());
    for (std::size_t p = 0; p < img.pixels.size(); ++p)
      s.pixels[p] = quantize_pixel(img.pixels[p]);
    s.odom = is_real(kind) ? measured[i] : poses[i];
    if (has_gt(kind)) s.gt_gate = rel;
    s.time = static_cast<double>(i) * dt;
    seq.samples.push_back(std::move(s));
  }
  return seq;
}

void append_u16(std::string& out, std::uint16_t x) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
void append_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
void append_f64(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}
void append_pose(std::string& out, const Pose& p) {
  for (double v : pose_to_array(p)) append_f64(out, v);
}

class Reader {
 public:
  Reader(std::string bytes, std::string name)
      : bytes_(std::move(bytes)), name_(std::move(name)) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(raw(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)); }
  double f64() {
    const std::uint64_t bits = raw(8);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }
  Pose pose() {
    std::array<double, 12> a;
    for (double& v : a) v = f64();
    return pose_from_array(a);
  }
  void bytes_into(std::uint8_t* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t raw(std::size_t n) {
    need(n);
    std::uint64_t x = 0;
    for (std::size_t i = 0; i < n; ++i)
      x |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += n;
    return x;
  }
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw IoError("truncated dataset file: " + name_);
  }

  std::string bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::string encode_sequence(const Sequence& seq) {
  const bool gt = !seq.samples.empty() && seq.samples.front().gt_gate.has_value();
  std::string out;
  out.append(kMagic, 4);
  append_u32(out, kVersion);
  append_u32(out, static_cast<std::uint32_t>(seq.samples.size()));
  append_u16(out, static_cast<std::uint16_t>(seq.width));
  append_u16(out, static_cast<std::uint16_t>(seq.height));
  out.push_back(gt ? 1 : 0);
  for (const Sample& s : seq.samples) {
    out.append(reinterpret_cast<const char*>(s.pixels.data()), s.pixels.size());
    append_pose(out, s.odom);
    if (gt) append_pose(out, *s.gt_gate);
    append_f64(out, s.time);
  }
  return out;
}

Sequence decode_sequence(std::string bytes, const std::string& name,
                         std::uint64_t seed) {
  Reader r(std::move(bytes), name);
  char magic[4];
  r.bytes_into(reinterpret_cast<std::uint8_t*>(magic), 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a dataset sequence file: " + name);
  if (r.u32() != kVersion)
    throw IoError("unsupported sequence file version: " + name);
  const std::uint32_t n = r.u32();
  Sequence seq;
  seq.seed = seed;
  seq.width = r.u16();
  seq.height = r.u16();
  if (seq.width <= 0 || seq.height <= 0)
    throw IoError("bad frame geometry in " + name);
  const std::uint8_t flags = r.u8();
  const bool gt = (flags & 1) != 0;
  const std::size_t npix =
      static_cast<std::size_t>(seq.width) * static_cast<std::size_t>(seq.height);
  seq.samples.resize(n);
  for (Sample& s : seq.samples) {
    s.pixels.resize(npix);
    r.bytes_into(s.pixels.data(), npix);
    s.odom = r.pose();
    if (gt) s.gt_gate = r.pose();
    s.time = r.f64();
  }
  if (!r.exhausted()) throw IoError("trailing bytes in " + name);
  return seq;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

json domain_json(const DomainConfig& d) {
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

json config_json(const DatasetConfig& cfg) {
  return json{
      {"gate",
       {{"width", cfg.gate.width},
        {"height", cfg.gate.height},
        {"bottom_height", cfg.gate.bottom_height},
        {"beam_thickness", cfg.gate.beam_thickness}}},
      {"camera",
       {{"width", cfg.cam.width},
        {"height", cfg.cam.height},
        {"focal_px", cfg.cam.focal_px},
        {"cx", cfg.cam.cx},
        {"cy", cfg.cam.cy}}},
      {"odometry",
       {{"drift_rate", cfg.odometry.drift_rate},
        {"yaw_drift_rate", cfg.odometry.yaw_drift_rate},
        {"noise_std", cfg.odometry.noise_std},
        {"yaw_noise_std", cfg.odometry.yaw_noise_std}}},
      {"sim_domain", domain_json(cfg.sim)},
      {"real_domain", domain_json(cfg.real)},
      {"trajectory",
       {{"n_frames", cfg.trajectory.n_frames},
        {"fps", cfg.trajectory.fps},
        {"dist_min", cfg.trajectory.dist_min},
        {"dist_max", cfg.trajectory.dist_max},
        {"lateral", cfg.trajectory.lateral},
        {"height_min", cfg.trajectory.height_min},
        {"height_max", cfg.trajectory.height_max},
        {"wander", cfg.trajectory.wander},
        {"yaw_jitter", cfg.trajectory.yaw_jitter},
        {"pitch_roll_jitter", cfg.trajectory.pitch_roll_jitter},
        {"smoothing", cfg.trajectory.smoothing},
        {"fov_margin", cfg.trajectory.fov_margin},
        {"waypoint_period_s", cfg.trajectory.waypoint_period_s}}},
      {"splits",
       {{"sim_train", cfg.splits.sim_train},
        {"sim_val", cfg.splits.sim_val},
        {"real_train", cfg.splits.real_train},
        {"real_val", cfg.splits.real_val},
        {"real_test", cfg.splits.real_test}}},
      {"gate_yaw", cfg.gate_yaw},
      {"master_seed", cfg.master_seed}};
}

constexpr const char* kSplitNames[5] = {"sim_train", "sim_val", "real_train",
                                        "real_val", "real_test"};

}  // namespace

std::uint8_t quantize_pixel(double intensity) {
  const double clamped = std::clamp(intensity, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

Image Sequence::image(std::size_t i) const {
  const Sample& s = samples.at(i);
  Image img(width, height);
  for (std::size_t p = 0; p < s.pixels.size(); ++p)
    img.pixels[p] = static_cast<double>(s.pixels[p]) / 255.0;
  return img;
}

void SplitCounts::validate() const {
  if (sim_train < 0 || sim_val < 0 || real_train < 0 || real_val < 0 ||
      real_test < 0)
    throw ConfigInvalid("split counts must be non-negative");
  if (sim_train + sim_val + real_train + real_val + real_test < 1)
    throw ConfigInvalid("dataset needs at least one sequence");
}

void DatasetConfig::validate() const {
  gate.validate();
  cam.validate();
  odometry.validate();
  sim.validate();
  real.validate();
  trajectory.validate();
  splits.validate();
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  const Pose gate_world = gate_world_pose(cfg.gate, cfg.gate_yaw);

  Dataset ds;
  ds.master_seed = cfg.master_seed;
  struct SplitSpec {
    SplitKind kind;
    int count;
    std::vector<Sequence>* out;
  };
  const SplitSpec specs[5] = {
      {SplitKind::kSimTrain, cfg.splits.sim_train, &ds.sim_train},
      {SplitKind::kSimVal, cfg.splits.sim_val, &ds.sim_val},
      {SplitKind::kRealTrain, cfg.splits.real_train, &ds.real_train},
      {SplitKind::kRealVal, cfg.splits.real_val, &ds.real_val},
      {SplitKind::kRealTest, cfg.splits.real_test, &ds.real_test},
  };
  std::uint64_t global_idx = 0;
  for (const SplitSpec& spec : specs) {
    spec.out->reserve(static_cast<std::size_t>(spec.count));
    for (int k = 0; k < spec.count; ++k, ++global_idx) {
      const std::uint64_t seed = splitmix64_at(cfg.master_seed, global_idx);
      spec.out->push_back(make_sequence(cfg, gate_world, spec.kind, seed));
    }
  }
  return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds,
                  const DatasetConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create dataset directory: " + dir);

  const std::vector<Sequence>* splits[5] = {&ds.sim_train, &ds.sim_val,
                                            &ds.real_train, &ds.real_val,
                                            &ds.real_test};
  json manifest;
  manifest["format"] = "gate-adapt-dataset";
  manifest["version"] = kVersion;
  manifest["master_seed"] = ds.master_seed;
  manifest["config"] = config_json(cfg);

  std::size_t global_idx = 0;
  json split_lists = json::object();
  for (int s = 0; s < 5; ++s) {
    json entries = json::array();
    for (const Sequence& seq : *splits[s]) {
      const std::string name = "seq_" + std::to_string(global_idx) + ".bin";
      write_file(root / name, encode_sequence(seq));
      entries.push_back(json{{"file", name}, {"seed", seq.seed}});
      ++global_idx;
    }
    split_lists[kSplitNames[s]] = std::move(entries);
  }
  manifest["splits"] = std::move(split_lists);
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  json manifest;
  try {
    manifest = json::parse(read_file(root / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError(std::string("bad dataset manifest: ") + e.what());
  }
  if (!manifest.is_object() ||
      manifest.value("format", "") != "gate-adapt-dataset")
    throw IoError("not a dataset manifest: " + (root / "manifest.json").string());
  if (manifest.value("version", 0) != static_cast<int>(kVersion))
    throw IoError("unsupported dataset manifest version");

  Dataset ds;
  ds.master_seed = manifest.value("master_seed", std::uint64_t{0});
  std::vector<Sequence>* splits[5] = {&ds.sim_train, &ds.sim_val,
                                      &ds.real_train, &ds.real_val,
                                      &ds.real_test};
  const json& lists = manifest.at("splits");
  for (int s = 0; s < 5; ++s) {
    if (!lists.contains(kSplitNames[s]))
      throw IoError(std::string("manifest missing split: ") + kSplitNames[s]);
    for (const json& entry : lists.at(kSplitNames[s])) {
      const std::string name = entry.at("file").get<std::string>();
      const std::uint64_t seed = entry.at("seed").get<std::uint64_t>();
      splits[s]->push_back(
          decode_sequence(read_file(root / name), name, seed));
    }
  }
  return ds;
}

}  // namespace gateadapt
