#include "udtwin/geometry.hpp"

#include <cmath>

#include "udtwin/errors.hpp"

namespace udtwin {

bool finite(const Vec3& v) {
    return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

Pose::Pose(const Vec3& pos, const Quat& q) : position(pos), orientation(q) {
    if (!finite(pos)) throw ValidationError("pose position must be finite");
    const double n = orientation.norm();
    if (!std::isfinite(n) || n < 1e-12)
        throw ValidationError("pose orientation quaternion is degenerate");
    orientation.normalize();
}

Quat quat_from_euler_xyz_deg(double rx_deg, double ry_deg, double rz_deg) {
    constexpr double deg = M_PI / 180.0;
    return Quat(Eigen::AngleAxisd(rx_deg * deg, Vec3::UnitX()) *
                Eigen::AngleAxisd(ry_deg * deg, Vec3::UnitY()) *
                Eigen::AngleAxisd(rz_deg * deg, Vec3::UnitZ()));
}

Quat slerp_extrapolate(const Quat& a, const Quat& b, double u) {
    // Relative rotation a -> b along the shorter arc.
    Quat d = a.conjugate() * b;
    if (d.w() < 0.0) d.coeffs() = -d.coeffs();
    const double sin_half = d.vec().norm();
    const double angle = 2.0 * std::atan2(sin_half, d.w());
    if (sin_half < 1e-15) return a;
    const Vec3 axis = d.vec() / sin_half;
    return (a * Quat(Eigen::AngleAxisd(u * angle, axis))).normalized();
}

Quat look_at(const Vec3& from, const Vec3& to) {
    const Vec3 dir = to - from;
    const double len = dir.norm();
    if (len < 1e-12) return Quat::Identity();
    return Quat::FromTwoVectors(Vec3::UnitZ(), dir / len);
}

}  // namespace udtwin
