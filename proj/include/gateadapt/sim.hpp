#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gateadapt/pose.hpp"
#include "gateadapt/rng.hpp"

namespace gateadapt {

// Conventions: camera/body frame is x forward, y left, z up; the world frame
// is z up. The gate frame has its opening in the local y-z plane, centered at
// the origin, facing along -x (a drone on the -x side looking along +x sees
// the opening face-on).

struct GateGeometry {
  double width = 1.00;          // center-line rectangle, meters
  double height = 0.80;
  double bottom_height = 0.75;  // lower edge above the floor
  double beam_thickness = 0.05;

  void validate() const;  // throws ConfigInvalid unless all positive
};

struct CameraIntrinsics {
  int width = 160, height = 160;  // pixels
  double focal_px = 110.0;
  double cx = 79.5, cy = 79.5;    // principal point, pixel-center coordinates

  static CameraIntrinsics desk() {
    CameraIntrinsics c;
    c.width = c.height = 64;
    c.focal_px = 44.0;
    c.cx = c.cy = 31.5;
    return c;
  }
  double hfov() const;  // horizontal field of view, radians
  double vfov() const;
  void validate() const;
};

struct Image {
  int w = 0, h = 0;
  std::vector<double> pixels;  // row-major, intensities in [0, 1]

  Image() = default;
  Image(int width, int height, double fill = 0.0)
      : w(width), h(height),
        pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
               fill) {}
  double& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * w + u]; }
  double at(int u, int v) const {
    return pixels[static_cast<std::size_t>(v) * w + u];
  }
};

struct OdometryModel {
  double drift_rate = 0.0;      // meters per sqrt(second), random walk per axis
  double yaw_drift_rate = 0.0;  // radians per sqrt(second)
  double noise_std = 0.0;       // meters, per reading
  double yaw_noise_std = 0.0;   // radians, per reading

  void validate() const;
};

struct DomainConfig {
  std::string tag = "sim";         // "sim" or "real"
  double vignette_strength = 0.0;  // 0 disables
  double blur_sigma_lo = 0.0, blur_sigma_hi = 0.0;
  double mult_noise_std = 0.0;
  double exposure_lo = 1.0, exposure_hi = 1.0;
  double background_base = 0.80;      // mean background intensity
  double background_gradient = 0.05;  // linear shading amplitude
  double background_texture = 0.0;    // smooth random texture amplitude
  double gate_intensity = 0.05;       // beam darkness

  static DomainConfig sim_domain();
  static DomainConfig real_domain();
  // Train-time augmentation recipe for sim images: the real-domain appearance
  // shift at half strength.
  static DomainConfig half_strength(const DomainConfig& d);
  void validate() const;
};

struct TrajectoryConfig {
  int n_frames = 750;
  double fps = 25.0;
  double dist_min = 1.5, dist_max = 4.0;  // gate-plane standoff range (meters)
  double lateral = 1.2;                   // sideways wander half-extent
  double height_min = 0.6, height_max = 1.8;
  double wander = 1.0;          // waypoint wander amplitude, meters (0 = hover)
  double yaw_jitter = 0.15;     // radians around the gate-facing heading
  double pitch_roll_jitter = 0.06;
  double smoothing = 0.08;      // per-frame low-pass coefficient in (0, 1]
  double fov_margin = 0.87;     // keep gate center within this fraction of FOV
  double waypoint_period_s = 1.2;

  void validate() const;
};

// Relative pose of the gate as seen from the drone: inverse(drone) * gate.
Pose gate_relative_pose(const Pose& gate_world, const Pose& drone_world);

// World pose of a gate standing on the floor at the origin, rotated by yaw.
Pose gate_world_pose(const GateGeometry& gate, double yaw = 0.0);

// Rasterize the four beams over a procedural background. The gate center must
// have positive depth; otherwise the background alone is returned.
Image render_gate(const Pose& rel, const CameraIntrinsics& cam,
                  const GateGeometry& gate, const DomainConfig& domain, Rng& rng);

// The beam rasterizer alone: draws the gate at `rel` onto an existing image
// with the given beam intensity (0 = black). No-op when the gate center is
// behind the near plane. Used for prediction overlays.
void draw_gate_wireframe(Image& img, const Pose& rel, const CameraIntrinsics& cam,
                         const GateGeometry& gate, double intensity);

// Smooth random drone path keeping the gate center inside the camera FOV.
std::vector<Pose> sample_trajectory(const TrajectoryConfig& cfg,
                                    const Pose& gate_world,
                                    const CameraIntrinsics& cam, Rng& rng);

// measured[i] = drift_i * true[i] * noise_i; drift is a random walk in
// (x, y, z, yaw) with per-step std rate*sqrt(dt), identity at i = 0.
std::vector<Pose> simulate_odometry(const std::vector<Pose>& true_poses,
                                    const OdometryModel& model, double dt,
                                    Rng& rng);

// Gaussian blur, cos^4 vignette, multiplicative noise, exposure gain — in that
// order — then clamp to [0, 1].
Image apply_augmentations(const Image& img, const DomainConfig& domain, Rng& rng);

// Sobel edge emphasis, inverted: edges dark on a light background.
Image pencil_filter(const Image& img);

// FOV predicate used by the trajectory sampler (exposed for verification):
// gate center in front of the camera and within fov_margin of both half-FOVs.
bool gate_in_fov(const Pose& drone_world, const Pose& gate_world,
                 const CameraIntrinsics& cam, double fov_margin);

}  // namespace gateadapt
