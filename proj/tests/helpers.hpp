#pragma once

#include "udtwin/geometry.hpp"

namespace testutil {

// Exact (bitwise) equality; determinism tests must not tolerate drift.
inline bool vec_eq(const udtwin::Vec3& a, const udtwin::Vec3& b) {
    return a.x() == b.x() && a.y() == b.y() && a.z() == b.z();
}

inline bool quat_eq(const udtwin::Quat& a, const udtwin::Quat& b) {
    return a.w() == b.w() && a.x() == b.x() && a.y() == b.y() && a.z() == b.z();
}

inline bool pose_eq(const udtwin::Pose& a, const udtwin::Pose& b) {
    return vec_eq(a.position, b.position) && quat_eq(a.orientation, b.orientation);
}

}  // namespace testutil
