#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "udtwin/geometry.hpp"

namespace udtwin {

struct TimedPose {
    double t = 0.0;  // seconds
    Pose pose;
};

// Recorded 6DoF trajectory of one user. Timestamps are strictly increasing
// and normalized to start at zero.
struct PoseTrace {
    std::string user_id;
    std::vector<TimedPose> samples;
    double native_rate_hz = 0.0;

    // Validates the invariants (>= 2 samples, strictly increasing timestamps).
    static PoseTrace create(std::string user_id, std::vector<TimedPose> samples,
                            double native_rate_hz);

    double end_time() const { return samples.back().t; }

    // Latest sample at or before t (clamped to the first sample).
    const Pose& pose_at(double t) const;
};

// What the edge server has actually received when collecting poses at a
// fixed frequency.
struct ObservedPoseStream {
    std::string user_id;
    double collection_frequency_hz = 0.0;
    std::vector<TimedPose> observations;
};

enum class RotationConvention { quaternion_wxyz, euler_xyz_deg };

// Column layout of a raw trace file. The public 6DoF corpora do not share a
// single layout, so the adapter takes the order and rotation convention as
// configuration.
struct TraceFormatSpec {
    RotationConvention rotation = RotationConvention::quaternion_wxyz;
    int t_col = 0;
    int x_col = 1;
    int y_col = 2;
    int z_col = 3;
    std::array<int, 4> rot_cols{4, 5, 6, 7};  // qw qx qy qz, or rx ry rz (4th unused)

    // Header `t,x,y,z,qw,qx,qy,qz`.
    static TraceFormatSpec normalized();
    // Header `t,x,y,z,rx,ry,rz`, intrinsic XYZ Euler degrees.
    static TraceFormatSpec euler_xyz();

    int min_columns() const;
};

enum class Predictor { hold_last, linear };

// Parses a raw trace. Rows with wrong arity or non-numeric fields raise
// ParseError with the offending line; a leading header row is skipped.
// Timestamps are shifted so the first sample sits at t = 0.
PoseTrace parse_trace(std::string_view raw_text, const TraceFormatSpec& format,
                      std::string user_id = "trace");

struct SynthParams {
    std::uint64_t seed = 0;
    double duration_s = 10.0;
    double rate_hz = 30.0;
    double step_sigma_m = 0.05;
    double turn_sigma_deg = 2.0;
    // Burstiness of the walk: log-AR(1) modulation of the per-step motion
    // scale. Zero keeps the step magnitudes homogeneous.
    double volatility = 0.0;
    Pose start;
};

// Seeded random-walk trace; identical (seed, params) reproduce the trace
// byte-for-byte after serialization.
PoseTrace synth_trace(const SynthParams& params, std::string user_id = "synth");

// Causal uplink sampling: the observation at t_k = k/f carries the latest
// trace sample with timestamp <= t_k.
ObservedPoseStream resample(const PoseTrace& trace, double f_hz);
ObservedPoseStream resample(const ObservedPoseStream& stream, double f_hz);

Pose predict_pose(const ObservedPoseStream& stream, double target_t, Predictor predictor);

// Normalized trace CSV (`t,x,y,z,qw,qx,qy,qz`).
std::string trace_to_csv(const PoseTrace& trace);
PoseTrace trace_from_csv(std::string_view text, std::string user_id = "trace");

}  // namespace udtwin
