#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>

#include "gateadapt/errors.hpp"

namespace gateadapt {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// Euler convention used everywhere in this library: intrinsic Z-Y-X
/// (yaw, then pitch, then roll). Angles wrap to (-pi, pi], ties at pi
/// map to +pi.
double wrap_angle(double radians);

/// Proper orthonormal 3x3 rotation matrix.
struct Rotation {
  Mat3 m = Mat3::Identity();

  Rotation() = default;
  explicit Rotation(const Mat3& matrix) : m(matrix) {}

  /// max |M^T M - I| and |det - 1| both below tol.
  bool is_valid(double tol = 1e-9) const;

  static Rotation identity() { return Rotation(); }
};

Rotation rot_z(double yaw);
Rotation rot_y(double pitch);
Rotation rot_x(double roll);
/// Intrinsic Z-Y-X: Rz(yaw) * Ry(pitch) * Rx(roll).
Rotation rot_zyx(double yaw, double pitch, double roll);

/// Rigid transform. A pose named X->Y maps coordinates in frame X to
/// frame Y: p_Y = R p_X + t. Odometry poses are drone-to-world.
struct Pose {
  Rotation rot;
  Vec3 t = Vec3::Zero();
  // Compositions since the rotation was last orthonormalized.
  std::uint8_t chain = 0;

  Pose() = default;
  Pose(const Rotation& r, const Vec3& translation) : rot(r), t(translation) {}

  static Pose identity() { return Pose(); }
};

/// 6D rotation encoding: first two columns of the matrix, column-stacked
/// [R(:,0); R(:,1)]. Continuous, so friendlier to regression than Euler
/// angles or quaternions.
struct Rot6D {
  Vec6 v = (Vec6() << 1, 0, 0, 0, 1, 0).finished();
};

/// Network output layout: [t (m), r6], fixed concatenation order.
struct PoseVector9 {
  Vec9 v = (Vec9() << 0, 0, 0, 1, 0, 0, 0, 1, 0).finished();

  Vec3 t() const { return v.head<3>(); }
  Vec6 r6() const { return v.tail<6>(); }
};

/// Homogeneous-matrix product a*b. Renormalizes the rotation once the
/// accumulated composition chain exceeds 16 to bound numeric drift.
Pose compose(const Pose& a, const Pose& b);

/// rot' = rot^T, t' = -rot^T t.
Pose inverse(const Pose& p);

/// The two operand orders for warping a relative pose prediction from
/// frame 1 into frame 2 given drone-to-world odometry o1, o2.
enum class WarpOrder {
  /// p1 * o2 * o1^{-1}: the world-frame odometry delta post-multiplied.
  kWorldDelta,
  /// o2^{-1} * o1 * p1: change of observer frame pre-multiplied. This is
  /// the order that satisfies exact ground-truth consistency under the
  /// drone-to-world odometry convention (see pose_algebra tests), so it
  /// is the library default.
  kFrameChange,
};

inline constexpr WarpOrder kDefaultWarpOrder = WarpOrder::kFrameChange;

/// compose(compose(p1_hat, o2), inverse(o1)) - the kWorldDelta order.
Pose warp_prediction(const Pose& p1_hat, const Pose& o1, const Pose& o2);

/// compose(compose(inverse(o2), o1), p1_hat) - the kFrameChange order.
Pose warp_prediction_alt(const Pose& p1_hat, const Pose& o1, const Pose& o2);

/// Dispatch on the configured operand order.
Pose warp_gate_pose(const Pose& p1_hat, const Pose& o1, const Pose& o2,
                    WarpOrder order = kDefaultWarpOrder);

Rot6D rot_to_6d(const Rotation& r);

/// Gram-Schmidt decode. Throws DegenerateInput if the first column norm
/// or the orthogonalized-residual norm is <= 1e-8.
Rotation rot_from_6d(const Rot6D& v);

/// d(R row-major 9) / d(v6) of rot_from_6d, evaluated at v.
/// Throws DegenerateInput on the same inputs as rot_from_6d.
Eigen::Matrix<double, 9, 6> rot_from_6d_jacobian(const Rot6D& v);

struct YawAngle {
  double radians = 0.0;
  /// |R(2,0)| > 1 - 1e-9: pitch at +-90deg, yaw/roll not separable.
  bool gimbal_lock = false;
};

/// psi of the intrinsic Z-Y-X decomposition: atan2(R(1,0), R(0,0)),
/// wrapped to (-pi, pi].
YawAngle yaw_of(const Pose& p);

PoseVector9 pose_to_vector9(const Pose& p);

/// Applies rot_from_6d to the r6 block; propagates DegenerateInput.
Pose vector9_to_pose(const PoseVector9& v);

/// Wire format: 12 little-endian float64, row-major rotation then
/// translation (meters).
std::array<double, 12> pose_to_array(const Pose& p);
Pose pose_from_array(const std::array<double, 12>& a);

}  // namespace gateadapt
