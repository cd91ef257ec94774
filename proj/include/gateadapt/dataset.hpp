#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gateadapt/pose.hpp"
#include "gateadapt/sim.hpp"

namespace gateadapt {

// One camera frame with its odometry reading. Pixels are stored quantized to
// 8 bits (the storage format) so that a dataset generated in memory and one
// round-tripped through disk feed training identically.
struct Sample {
  std::vector<std::uint8_t> pixels;  // row-major, intensity = value / 255
  Pose odom;                          // drone -> world as reported by odometry
  std::optional<Pose> gt_gate;        // gate relative to drone (labels only)
  double time = 0.0;                  // seconds from sequence start
};

struct Sequence {
  std::vector<Sample> samples;  // strictly increasing timestamps
  std::uint64_t seed = 0;
  int width = 0, height = 0;

  Image image(std::size_t i) const;  // dequantized frame
};

// Five-way split. Ground-truth gate poses are present on every sim sample and
// on real TEST samples only; real train/val carry odometry alone.
struct Dataset {
  std::vector<Sequence> sim_train, sim_val, real_train, real_val, real_test;
  std::uint64_t master_seed = 0;
};

struct SplitCounts {
  int sim_train = 16, sim_val = 4;
  int real_train = 60, real_val = 6, real_test = 8;

  void validate() const;  // all >= 0, at least one sequence total
};

struct DatasetConfig {
  GateGeometry gate;
  CameraIntrinsics cam = CameraIntrinsics::desk();
  OdometryModel odometry{0.02, 0.004, 0.01, 0.002};
  DomainConfig sim = DomainConfig::sim_domain();
  DomainConfig real = DomainConfig::real_domain();
  TrajectoryConfig trajectory;
  SplitCounts splits;
  double gate_yaw = 0.0;  // world yaw of the gate
  std::uint64_t master_seed = 0;

  void validate() const;
};

// Generate all five splits. Sequence seeds derive from the master seed by
// counter (fixed split order: sim train, sim val, real train, real val, real
// test), so generation is a pure function of (config, master_seed). Sim
// sequences store clean renders with exact odometry; real sequences store
// domain-shifted, augmented renders with drifting, noisy odometry.
Dataset generate_dataset(const DatasetConfig& cfg);

// Directory layout: manifest.json plus one seq_<idx>.bin per sequence.
void save_dataset(const std::string& dir, const Dataset& ds,
                  const DatasetConfig& cfg);
Dataset load_dataset(const std::string& dir);

// Storage quantization used by the generator (round to nearest of 255 levels).
std::uint8_t quantize_pixel(double intensity);

}  // namespace gateadapt
