#include "gateadapt/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gateadapt/errors.hpp"

namespace gateadapt {

namespace {
constexpr double kNearPlane = 0.05;
constexpr double kPi = std::numbers::pi;
}

void GateGeometry::validate() const {
  if (width <= 0 || height <= 0 || bottom_height <= 0 || beam_thickness <= 0)
    throw ConfigInvalid("gate geometry fields must all be positive");
}

double CameraIntrinsics::hfov() const {
  return 2.0 * std::atan2(0.5 * width, focal_px);
}
double CameraIntrinsics::vfov() const {
  return 2.0 * std::atan2(0.5 * height, focal_px);
}

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0) throw ConfigInvalid("camera resolution must be positive");
  if (focal_px <= 0) throw ConfigInvalid("focal length must be positive");
}

void OdometryModel::validate() const {
  if (drift_rate < 0 || yaw_drift_rate < 0 || noise_std < 0 || yaw_noise_std < 0)
    throw ConfigInvalid("odometry model rates must be non-negative");
}

DomainConfig DomainConfig::sim_domain() {
  DomainConfig d;
  d.tag = "sim";
  d.background_base = 0.82;
  d.background_gradient = 0.05;
  d.background_texture = 0.0;
  d.gate_intensity = 0.05;
  return d;
}

DomainConfig DomainConfig::real_domain() {
  DomainConfig d;
  d.tag = "real";
  d.vignette_strength = 0.5;
  d.blur_sigma_lo = 0.5;
  d.blur_sigma_hi = 1.5;
  d.mult_noise_std = 0.08;
  d.exposure_lo = 0.6;
  d.exposure_hi = 1.3;
  d.background_base = 0.72;
  d.background_gradient = 0.12;
  d.background_texture = 0.15;
  d.gate_intensity = 0.08;
  return d;
}

DomainConfig DomainConfig::half_strength(const DomainConfig& d) {
  DomainConfig h = d;
  h.tag = d.tag + "-aug";
  h.vignette_strength = 0.5 * d.vignette_strength;
  h.blur_sigma_lo = 0.5 * d.blur_sigma_lo;
  h.blur_sigma_hi = 0.5 * d.blur_sigma_hi;
  h.mult_noise_std = 0.5 * d.mult_noise_std;
  h.exposure_lo = 0.5 * (1.0 + d.exposure_lo);
  h.exposure_hi = 0.5 * (1.0 + d.exposure_hi);
  return h;
}

void DomainConfig::validate() const {
  if (vignette_strength < 0 || vignette_strength > 1)
    throw ConfigInvalid("vignette strength must be in [0, 1]");
  if (blur_sigma_lo < 0 || blur_sigma_hi < blur_sigma_lo)
    throw ConfigInvalid("blur sigma range must be non-negative and ordered");
  if (mult_noise_std < 0) throw ConfigInvalid("multiplicative noise std must be >= 0");
  if (exposure_lo <= 0 || exposure_hi < exposure_lo)
    throw ConfigInvalid("exposure range must be positive and ordered");
  if (background_base < 0 || background_base > 1)
    throw ConfigInvalid("background base must be in [0, 1]");
  if (gate_intensity < 0 || gate_intensity > 1)
    throw ConfigInvalid("gate intensity must be in [0, 1]");
}

void TrajectoryConfig::validate() const {
  if (n_frames < 1) throw ConfigInvalid("trajectory needs at least one frame");
  if (fps <= 0) throw ConfigInvalid("fps must be positive");
  if (dist_min <= 0 || dist_max < dist_min)
    throw ConfigInvalid("distance range must be positive and ordered");
  if (height_min <= 0 || height_max < height_min)
    throw ConfigInvalid("height range must be positive and ordered");
  if (lateral < 0 || wander < 0 || yaw_jitter < 0 || pitch_roll_jitter < 0)
    throw ConfigInvalid("trajectory amplitudes must be non-negative");
  if (smoothing <= 0 || smoothing > 1)
    throw ConfigInvalid("smoothing must be in (0, 1]");
  if (fov_margin <= 0 || fov_margin > 1)
    throw ConfigInvalid("fov margin must be in (0, 1]");
  if (waypoint_period_s <= 0) throw ConfigInvalid("waypoint period must be positive");
}

Pose gate_relative_pose(const Pose& gate_world, const Pose& drone_world) {
  return compose(inverse(drone_world), gate_world);
}

Pose gate_world_pose(const GateGeometry& gate, double yaw) {
  gate.validate();
  return Pose(rot_z(yaw), Vec3(0.0, 0.0, gate.bottom_height + 0.5 * gate.height));
}

namespace {

struct Px {
  double u, v, depth;
};

Px project(const CameraIntrinsics& cam, const Vec3& p) {
  return {cam.cx - cam.focal_px * (p.y() / p.x()),
          cam.cy - cam.focal_px * (p.z() / p.x()), p.x()};
}

void draw_beam(Image& img, const CameraIntrinsics& cam, const Vec3& a,
               const Vec3& b, double thickness, double intensity) {
  Vec3 p0 = a, p1 = b;
  if (p0.x() <= kNearPlane && p1.x() <= kNearPlane) return;
  if (p0.x() <= kNearPlane || p1.x() <= kNearPlane) {
    const double t = (kNearPlane - p0.x()) / (p1.x() - p0.x());
    const Vec3 cut = p0 + t * (p1 - p0);
    if (p0.x() <= kNearPlane)
      p0 = cut;
    else
      p1 = cut;
  }
  const Px q0 = project(cam, p0), q1 = project(cam, p1);
  const double hw0 = 0.5 * cam.focal_px * thickness / q0.depth;
  const double hw1 = 0.5 * cam.focal_px * thickness / q1.depth;
  const double pad = std::max(hw0, hw1) + 1.0;
  const int u_lo = std::max(0, static_cast<int>(std::floor(std::min(q0.u, q1.u) - pad)));
  const int u_hi = std::min(img.w - 1, static_cast<int>(std::ceil(std::max(q0.u, q1.u) + pad)));
  const int v_lo = std::max(0, static_cast<int>(std::floor(std::min(q0.v, q1.v) - pad)));
  const int v_hi = std::min(img.h - 1, static_cast<int>(std::ceil(std::max(q0.v, q1.v) + pad)));
  const double du = q1.u - q0.u, dv = q1.v - q0.v;
  const double len2 = du * du + dv * dv;
  for (int v = v_lo; v <= v_hi; ++v) {
    for (int u = u_lo; u <= u_hi; ++u) {
      const double pu = u - q0.u, pv = v - q0.v;
      const double s = len2 > 1e-12
                           ? std::clamp((pu * du + pv * dv) / len2, 0.0, 1.0)
                           : 0.0;
      const double dx = pu - s * du, dy = pv - s * dv;
      const double dist = std::sqrt(dx * dx + dy * dy);
      const double hw = hw0 + s * (hw1 - hw0);
      const double cov = std::clamp(hw + 0.5 - dist, 0.0, 1.0);
      if (cov > 0.0) {
        double& px = img.at(u, v);
        px += cov * (intensity - px);
      }
    }
  }
}

}  // namespace

Image render_gate(const Pose& rel, const CameraIntrinsics& cam,
                  const GateGeometry& gate, const DomainConfig& domain, Rng& rng) {
  cam.validate();
  gate.validate();
  domain.validate();

  Image img(cam.width, cam.height);
  // procedural background; rng draws happen in a fixed order regardless of
  // amplitudes so the stream stays aligned across configurations
  const double gdir = rng.uniform(0.0, 2.0 * kPi);
  struct Blob {
    double fu, fv, phase, amp;
  };
  Blob blobs[3];
  for (Blob& b : blobs) {
    b.fu = rng.uniform(0.5, 3.0);
    b.fv = rng.uniform(0.5, 3.0);
    b.phase = rng.uniform(0.0, 2.0 * kPi);
    b.amp = domain.background_texture * rng.uniform(0.3, 1.0) / 3.0;
  }
  const double gu = std::cos(gdir), gv = std::sin(gdir);
  for (int v = 0; v < img.h; ++v) {
    const double nv = (v + 0.5) / img.h - 0.5;
    for (int u = 0; u < img.w; ++u) {
      const double nu = (u + 0.5) / img.w - 0.5;
      double val = domain.background_base +
                   domain.background_gradient * (gu * nu + gv * nv);
      for (const Blob& b : blobs)
        val += b.amp *
               std::cos(2.0 * kPi * (b.fu * nu + b.fv * nv) + b.phase);
      img.at(u, v) = std::clamp(val, 0.0, 1.0);
    }
  }

  draw_gate_wireframe(img, rel, cam, gate, domain.gate_intensity);
  return img;
}

void draw_gate_wireframe(Image& img, const Pose& rel, const CameraIntrinsics& cam,
                         const GateGeometry& gate, double intensity) {
  if (rel.t.x() <= kNearPlane) return;  // gate center behind the camera

  // beam center-lines in the gate frame (x = 0 plane)
  const double wo = 0.5 * gate.width + 0.5 * gate.beam_thickness;
  const double ho = 0.5 * gate.height + 0.5 * gate.beam_thickness;
  const double hw = 0.5 * gate.width, hh = 0.5 * gate.height;
  const Vec3 ends[4][2] = {
      {Vec3(0, -wo, hh), Vec3(0, wo, hh)},     // top
      {Vec3(0, -wo, -hh), Vec3(0, wo, -hh)},   // bottom
      {Vec3(0, hw, -ho), Vec3(0, hw, ho)},     // left
      {Vec3(0, -hw, -ho), Vec3(0, -hw, ho)},   // right
  };
  for (const auto& seg : ends) {
    const Vec3 a = rel.rot.m * seg[0] + rel.t;
    const Vec3 b = rel.rot.m * seg[1] + rel.t;
    draw_beam(img, cam, a, b, gate.beam_thickness, intensity);
  }
}

bool gate_in_fov(const Pose& drone_world, const Pose& gate_world,
                 const CameraIntrinsics& cam, double fov_margin) {
  const Vec3 c = drone_world.rot.m.transpose() * (gate_world.t - drone_world.t);
  if (c.x() <= 2.0 * kNearPlane) return false;
  const double ay = std::abs(std::atan2(c.y(), c.x()));
  const double az = std::abs(std::atan2(c.z(), c.x()));
  return ay < fov_margin * 0.5 * cam.hfov() && az < fov_margin * 0.5 * cam.vfov();
}

std::vector<Pose> sample_trajectory(const TrajectoryConfig& cfg,
                                    const Pose& gate_world,
                                    const CameraIntrinsics& cam, Rng& rng) {
  cfg.validate();
  cam.validate();
  const Vec3 g = gate_world.t;
  const Mat3 rg = gate_world.rot.m;
  const double zc = g.z();

  auto local_clamped = [&](const Vec3& local) {
    Vec3 l = local;
    l.x() = std::clamp(l.x(), -cfg.dist_max, -cfg.dist_min);
    l.y() = std::clamp(l.y(), -cfg.lateral, cfg.lateral);
    l.z() = std::clamp(l.z(), cfg.height_min - zc, cfg.height_max - zc);
    return l;
  };

  const Vec3 anchor = local_clamped(
      Vec3(-rng.uniform(cfg.dist_min, cfg.dist_max),
           rng.uniform(-cfg.lateral, cfg.lateral),
           rng.uniform(cfg.height_min, cfg.height_max) - zc));

  const int period = std::max(1, static_cast<int>(std::lround(cfg.waypoint_period_s * cfg.fps)));
  const int n_way = cfg.n_frames / period + 2;
  std::vector<Vec3> waypoints(static_cast<std::size_t>(n_way));
  for (Vec3& w : waypoints)
    w = local_clamped(anchor + cfg.wander * Vec3(rng.uniform(-1.0, 1.0),
                                                 rng.uniform(-1.0, 1.0),
                                                 0.5 * rng.uniform(-1.0, 1.0)));

  std::vector<Pose> path;
  path.reserve(static_cast<std::size_t>(cfg.n_frames));
  Vec3 local = waypoints[0];
  double jy = 0.0, jp = 0.0, jr = 0.0;
  const double lambda = 0.1;
  int rejects = 0;
  for (int i = 0; i < cfg.n_frames; ++i) {
    const int seg = i / period;
    const double frac = static_cast<double>(i % period) / period;
    const Vec3 target = waypoints[static_cast<std::size_t>(seg)] +
                        frac * (waypoints[static_cast<std::size_t>(seg) + 1] -
                                waypoints[static_cast<std::size_t>(seg)]);
    local += cfg.smoothing * (target - local);
    const Vec3 p = g + rg * local;

    const Vec3 dir = (g - p).normalized();
    const double base_yaw = std::atan2(dir.y(), dir.x());
    const double base_pitch = -std::asin(std::clamp(dir.z(), -1.0, 1.0));

    jy = (1.0 - lambda) * jy + lambda * cfg.yaw_jitter * rng.uniform(-1.0, 1.0);
    jp = (1.0 - lambda) * jp + lambda * cfg.pitch_roll_jitter * rng.uniform(-1.0, 1.0);
    jr = (1.0 - lambda) * jr + lambda * cfg.pitch_roll_jitter * rng.uniform(-1.0, 1.0);

    Pose pose(rot_zyx(base_yaw + jy, base_pitch + jp, jr), p);
    int tries = 0;
    while (!gate_in_fov(pose, gate_world, cam, cfg.fov_margin)) {
      if (++tries + rejects >= 1000)
        throw TrajectoryInfeasible("trajectory sampler exceeded 1000 FOV rejections");
      jy = cfg.yaw_jitter * rng.uniform(-1.0, 1.0);
      jp = cfg.pitch_roll_jitter * rng.uniform(-1.0, 1.0);
      jr = cfg.pitch_roll_jitter * rng.uniform(-1.0, 1.0);
      pose = Pose(rot_zyx(base_yaw + jy, base_pitch + jp, jr), p);
    }
    rejects = tries > 0 ? rejects + tries : 0;
    path.push_back(pose);
  }
  return path;
}

std::vector<Pose> simulate_odometry(const std::vector<Pose>& true_poses,
                                    const OdometryModel& model, double dt,
                                    Rng& rng) {
  model.validate();
  if (true_poses.empty()) throw DataEmpty("simulate_odometry on empty pose list");
  if (dt <= 0) throw ConfigInvalid("odometry time step must be positive");

  const double sqdt = std::sqrt(dt);
  std::vector<Pose> measured;
  measured.reserve(true_poses.size());
  Vec3 drift_t = Vec3::Zero();
  double drift_yaw = 0.0;
  for (std::size_t i = 0; i < true_poses.size(); ++i) {
    if (i > 0) {
      drift_t.x() += model.drift_rate * sqdt * rng.normal();
      drift_t.y() += model.drift_rate * sqdt * rng.normal();
      drift_t.z() += model.drift_rate * sqdt * rng.normal();
      drift_yaw += model.yaw_drift_rate * sqdt * rng.normal();
    }
    const Vec3 noise_t(model.noise_std * rng.normal(), model.noise_std * rng.normal(),
                       model.noise_std * rng.normal());
    const double noise_yaw = model.yaw_noise_std * rng.normal();
    const Pose drift(rot_z(drift_yaw), drift_t);
    const Pose noise(rot_z(noise_yaw), noise_t);
    measured.push_back(compose(drift, compose(true_poses[i], noise)));
  }
  return measured;
}

namespace {

void gaussian_blur(Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] =
        std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  Image tmp(img.w, img.h);
  for (int v = 0; v < img.h; ++v)
    for (int u = 0; u < img.w; ++u) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               img.at(std::clamp(u + i, 0, img.w - 1), v);
      tmp.at(u, v) = acc;
    }
  for (int v = 0; v < img.h; ++v)
    for (int u = 0; u < img.w; ++u) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp.at(u, std::clamp(v + i, 0, img.h - 1));
      img.at(u, v) = acc;
    }
}

}  // namespace

Image apply_augmentations(const Image& img, const DomainConfig& domain, Rng& rng) {
  domain.validate();
  Image out = img;
  // fixed draw order keeps the stream aligned whatever the strengths are
  const double sigma = rng.uniform(domain.blur_sigma_lo, domain.blur_sigma_hi);
  const double gain = rng.uniform(domain.exposure_lo, domain.exposure_hi);

  if (sigma > 1e-12) gaussian_blur(out, sigma);

  if (domain.vignette_strength > 0.0) {
    const double cx = 0.5 * (out.w - 1), cy = 0.5 * (out.h - 1);
    const double rmax = std::sqrt(cx * cx + cy * cy);
    for (int v = 0; v < out.h; ++v)
      for (int u = 0; u < out.w; ++u) {
        const double r = std::sqrt((u - cx) * (u - cx) + (v - cy) * (v - cy)) / rmax;
        const double c = std::cos(r * (kPi / 3.0));
        const double factor =
            (1.0 - domain.vignette_strength) + domain.vignette_strength * c * c * c * c;
        out.at(u, v) *= factor;
      }
  }

  if (domain.mult_noise_std > 0.0)
    for (double& p : out.pixels) p *= 1.0 + domain.mult_noise_std * rng.normal();

  if (gain != 1.0)
    for (double& p : out.pixels) p *= gain;

  for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
  return out;
}

Image pencil_filter(const Image& img) {
  Image out(img.w, img.h);
  auto pix = [&](int u, int v) {
    return img.at(std::clamp(u, 0, img.w - 1), std::clamp(v, 0, img.h - 1));
  };
  for (int v = 0; v < img.h; ++v)
    for (int u = 0; u < img.w; ++u) {
      // difference form: exact zero response on flat regions
      const double gx = (pix(u + 1, v - 1) - pix(u - 1, v - 1)) +
                        2.0 * (pix(u + 1, v) - pix(u - 1, v)) +
                        (pix(u + 1, v + 1) - pix(u - 1, v + 1));
      const double gy = (pix(u - 1, v + 1) - pix(u - 1, v - 1)) +
                        2.0 * (pix(u, v + 1) - pix(u, v - 1)) +
                        (pix(u + 1, v + 1) - pix(u + 1, v - 1));
      out.at(u, v) = std::clamp(1.0 - std::sqrt(gx * gx + gy * gy), 0.0, 1.0);
    }
  return out;
}

}  // namespace gateadapt
