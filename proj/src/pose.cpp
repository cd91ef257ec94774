#include "gateadapt/pose.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>

namespace gateadapt {

namespace {
constexpr double kDegenerateTol = 1e-8;
constexpr int kRenormChain = 16;
}  // namespace

double wrap_angle(double radians) {
  double a = std::remainder(radians, 2.0 * M_PI);  // (-pi, pi] up to the -pi tie
  if (a <= -M_PI) a = M_PI;
  return a;
}

bool Rotation::is_valid(double tol) const {
  const Mat3 gram = m.transpose() * m - Mat3::Identity();
  if (gram.cwiseAbs().maxCoeff() >= tol) return false;
  return std::abs(m.determinant() - 1.0) < tol;
}

Rotation rot_z(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return Rotation(m);
}

Rotation rot_y(double pitch) {
  const double c = std::cos(pitch), s = std::sin(pitch);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return Rotation(m);
}

Rotation rot_x(double roll) {
  const double c = std::cos(roll), s = std::sin(roll);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return Rotation(m);
}

Rotation rot_zyx(double yaw, double pitch, double roll) {
  return Rotation(rot_z(yaw).m * rot_y(pitch).m * rot_x(roll).m);
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rot.m = a.rot.m * b.rot.m;
  out.t = a.rot.m * b.t + a.t;
  const int chain = int(a.chain) + int(b.chain) + 1;
  if (chain > kRenormChain) {
    out.rot = rot_from_6d(rot_to_6d(out.rot));
    out.chain = 0;
  } else {
    out.chain = static_cast<std::uint8_t>(chain);
  }
  return out;
}

Pose inverse(const Pose& p) {
  Pose out;
  out.rot.m = p.rot.m.transpose();
  out.t = -(out.rot.m * p.t);
  out.chain = p.chain;
  return out;
}

Pose warp_prediction(const Pose& p1_hat, const Pose& o1, const Pose& o2) {
  return compose(compose(p1_hat, o2), inverse(o1));
}

Pose warp_prediction_alt(const Pose& p1_hat, const Pose& o1, const Pose& o2) {
  return compose(compose(inverse(o2), o1), p1_hat);
}

Pose warp_gate_pose(const Pose& p1_hat, const Pose& o1, const Pose& o2,
                    WarpOrder order) {
  return order == WarpOrder::kWorldDelta ? warp_prediction(p1_hat, o1, o2)
                                         : warp_prediction_alt(p1_hat, o1, o2);
}

Rot6D rot_to_6d(const Rotation& r) {
  Rot6D out;
  out.v.head<3>() = r.m.col(0);
  out.v.tail<3>() = r.m.col(1);
  return out;
}

Rotation rot_from_6d(const Rot6D& v) {
  const Vec3 u = v.v.head<3>();
  const Vec3 a = v.v.tail<3>();
  const double nu = u.norm();
  if (!(nu > kDegenerateTol)) {
    throw DegenerateInput("rot_from_6d: first column norm <= 1e-8");
  }
  const Vec3 c1 = u / nu;
  const Vec3 w = a - c1.dot(a) * c1;
  const double nw = w.norm();
  if (!(nw > kDegenerateTol)) {
    throw DegenerateInput("rot_from_6d: columns are near-parallel");
  }
  const Vec3 c2 = w / nw;
  const Vec3 c3 = c1.cross(c2);
  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c3;
  return Rotation(m);
}

Eigen::Matrix<double, 9, 6> rot_from_6d_jacobian(const Rot6D& v) {
  const Vec3 u = v.v.head<3>();
  const Vec3 a = v.v.tail<3>();
  const double nu = u.norm();
  if (!(nu > kDegenerateTol)) {
    throw DegenerateInput("rot_from_6d_jacobian: first column norm <= 1e-8");
  }
  const Vec3 c1 = u / nu;
  const Vec3 w = a - c1.dot(a) * c1;
  const double nw = w.norm();
  if (!(nw > kDegenerateTol)) {
    throw DegenerateInput("rot_from_6d_jacobian: columns are near-parallel");
  }
  const Vec3 c2 = w / nw;
  const Vec3 c3 = c1.cross(c2);

  // dc1/du, dc1/da = 0
  const Mat3 dc1_du = (Mat3::Identity() - c1 * c1.transpose()) / nu;
  // w = a - (c1.a) c1
  const Mat3 dw_da = Mat3::Identity() - c1 * c1.transpose();
  const Mat3 dw_dc1 = -(c1 * a.transpose() + c1.dot(a) * Mat3::Identity());
  const Mat3 dw_du = dw_dc1 * dc1_du;
  const Mat3 dc2_dw = (Mat3::Identity() - c2 * c2.transpose()) / nw;
  const Mat3 dc2_du = dc2_dw * dw_du;
  const Mat3 dc2_da = dc2_dw * dw_da;
  // c3 = c1 x c2
  auto skew = [](const Vec3& x) {
    Mat3 s;
    s << 0, -x.z(), x.y(), x.z(), 0, -x.x(), -x.y(), x.x(), 0;
    return s;
  };
  const Mat3 dc3_du = -skew(c2) * dc1_du + skew(c1) * dc2_du;
  const Mat3 dc3_da = skew(c1) * dc2_da;

  // Row-major R: element (r, c) at index 3r + c. Columns of R are c1,c2,c3.
  Eigen::Matrix<double, 9, 6> jac;
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) {
      jac(3 * r + 0, k) = dc1_du(r, k);
      jac(3 * r + 0, 3 + k) = 0.0;
      jac(3 * r + 1, k) = dc2_du(r, k);
      jac(3 * r + 1, 3 + k) = dc2_da(r, k);
      jac(3 * r + 2, k) = dc3_du(r, k);
      jac(3 * r + 2, 3 + k) = dc3_da(r, k);
    }
  }
  return jac;
}

YawAngle yaw_of(const Pose& p) {
  YawAngle out;
  out.gimbal_lock = std::abs(p.rot.m(2, 0)) > 1.0 - 1e-9;
  out.radians = wrap_angle(std::atan2(p.rot.m(1, 0), p.rot.m(0, 0)));
  return out;
}

PoseVector9 pose_to_vector9(const Pose& p) {
  PoseVector9 out;
  out.v.head<3>() = p.t;
  out.v.tail<6>() = rot_to_6d(p.rot).v;
  return out;
}

Pose vector9_to_pose(const PoseVector9& v) {
  Rot6D r6;
  r6.v = v.r6();
  return Pose(rot_from_6d(r6), v.t());
}

std::array<double, 12> pose_to_array(const Pose& p) {
  std::array<double, 12> a{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[3 * r + c] = p.rot.m(r, c);
  for (int i = 0; i < 3; ++i) a[9 + i] = p.t(i);
  return a;
}

Pose pose_from_array(const std::array<double, 12>& a) {
  Pose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rot.m(r, c) = a[3 * r + c];
  for (int i = 0; i < 3; ++i) p.t(i) = a[9 + i];
  return p;
}

}  // namespace gateadapt
