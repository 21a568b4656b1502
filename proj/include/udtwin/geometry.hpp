#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace udtwin {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Six-DoF device state. The orientation maps device-frame vectors into the
// world frame; the camera looks along the device +z axis.
struct Pose {
    Vec3 position{Vec3::Zero()};
    Quat orientation{Quat::Identity()};

    Pose() = default;
    // Renormalizes the quaternion; throws ValidationError for non-finite
    // positions or a degenerate quaternion.
    Pose(const Vec3& pos, const Quat& q);
};

// Intrinsic X-then-Y-then-Z rotation, angles in degrees.
Quat quat_from_euler_xyz_deg(double rx_deg, double ry_deg, double rz_deg);

// Shortest-path spherical interpolation with unclamped parameter u
// (u=0 -> a, u=1 -> b, u>1 extrapolates along the same great arc).
Quat slerp_extrapolate(const Quat& a, const Quat& b, double u);

// Orientation whose +z axis points from `from` toward `to`.
Quat look_at(const Vec3& from, const Vec3& to);

bool finite(const Vec3& v);

}  // namespace udtwin
