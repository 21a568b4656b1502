#include "udtwin/pose_trace.hpp"

#include <algorithm>
#include <cmath>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/rng.hpp"

namespace udtwin {

PoseTrace PoseTrace::create(std::string user_id, std::vector<TimedPose> samples,
                            double native_rate_hz) {
    if (samples.size() < 2)
        throw ValidationError("pose trace needs at least 2 samples, got " +
                              std::to_string(samples.size()));
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (!(samples[i].t > samples[i - 1].t))
            throw ValidationError("trace timestamps must be strictly increasing at sample " +
                                  std::to_string(i));
    }
    if (!(native_rate_hz > 0.0)) throw ValidationError("native rate must be positive");
    PoseTrace out;
    out.user_id = std::move(user_id);
    out.samples = std::move(samples);
    out.native_rate_hz = native_rate_hz;
    return out;
}

namespace {

// Index of the latest entry with timestamp <= t, clamped to 0.
std::size_t latest_at_or_before(const std::vector<TimedPose>& v, double t) {
    auto it = std::upper_bound(v.begin(), v.end(), t,
                               [](double lhs, const TimedPose& s) { return lhs < s.t; });
    if (it == v.begin()) return 0;
    return static_cast<std::size_t>(it - v.begin()) - 1;
}

}  // namespace

const Pose& PoseTrace::pose_at(double t) const {
    return samples[latest_at_or_before(samples, t)].pose;
}

TraceFormatSpec TraceFormatSpec::normalized() { return TraceFormatSpec{}; }

TraceFormatSpec TraceFormatSpec::euler_xyz() {
    TraceFormatSpec spec;
    spec.rotation = RotationConvention::euler_xyz_deg;
    spec.rot_cols = {4, 5, 6, -1};
    return spec;
}

int TraceFormatSpec::min_columns() const {
    int mx = std::max({t_col, x_col, y_col, z_col});
    const int rot_n = rotation == RotationConvention::quaternion_wxyz ? 4 : 3;
    for (int i = 0; i < rot_n; ++i) mx = std::max(mx, rot_cols[i]);
    return mx + 1;
}

PoseTrace parse_trace(std::string_view raw_text, const TraceFormatSpec& format,
                      std::string user_id) {
    if (csv::trim(raw_text).empty()) throw ParseError("empty trace input");
    const int want = format.min_columns();
    std::vector<TimedPose> samples;
    std::size_t line_no = 0;
    std::size_t start = 0;
    bool saw_data = false;
    while (start <= raw_text.size()) {
        std::size_t pos = raw_text.find('\n', start);
        if (pos == std::string_view::npos) pos = raw_text.size();
        std::string_view line = csv::trim(raw_text.substr(start, pos - start));
        start = pos + 1;
        ++line_no;
        if (pos >= raw_text.size() && line.empty()) break;
        if (line.empty()) continue;
        const auto fields = csv::split_fields(line);
        // A non-numeric first row is treated as the header.
        if (!saw_data && line_no == 1) {
            double probe;
            try {
                probe = csv::parse_double(fields[0], line_no);
                (void)probe;
            } catch (const ParseError&) {
                continue;
            }
        }
        if (static_cast<int>(fields.size()) < want)
            throw ParseError("expected at least " + std::to_string(want) + " columns, got " +
                                 std::to_string(fields.size()),
                             line_no);
        auto col = [&](int c) { return csv::parse_double(fields[static_cast<std::size_t>(c)], line_no); };
        TimedPose s;
        s.t = col(format.t_col);
        const Vec3 p(col(format.x_col), col(format.y_col), col(format.z_col));
        Quat q;
        if (format.rotation == RotationConvention::quaternion_wxyz) {
            q = Quat(col(format.rot_cols[0]), col(format.rot_cols[1]), col(format.rot_cols[2]),
                     col(format.rot_cols[3]));
        } else {
            q = quat_from_euler_xyz_deg(col(format.rot_cols[0]), col(format.rot_cols[1]),
                                        col(format.rot_cols[2]));
        }
        s.pose = Pose(p, q);
        samples.push_back(std::move(s));
        saw_data = true;
    }
    if (samples.size() < 2)
        throw ValidationError("pose trace needs at least 2 samples, got " +
                              std::to_string(samples.size()));
    const double t0 = samples.front().t;
    for (auto& s : samples) s.t -= t0;
    const double span = samples.back().t;
    if (!(span > 0.0)) throw ValidationError("trace timestamps must be strictly increasing");
    const double rate = static_cast<double>(samples.size() - 1) / span;
    return PoseTrace::create(std::move(user_id), std::move(samples), rate);
}

PoseTrace synth_trace(const SynthParams& params, std::string user_id) {
    if (!(params.duration_s > 0.0)) throw ParameterError("synth duration must be positive");
    if (!(params.rate_hz > 0.0)) throw ParameterError("synth rate must be positive");
    if (params.step_sigma_m < 0.0 || params.turn_sigma_deg < 0.0 || params.volatility < 0.0)
        throw ParameterError("synth sigmas must be non-negative");

    Rng rng(params.seed);
    const auto n = static_cast<std::size_t>(std::floor(params.duration_s * params.rate_hz)) + 1;
    const double turn_sigma_rad = params.turn_sigma_deg * M_PI / 180.0;
    constexpr double kSpeedPersistence = 0.9;

    std::vector<TimedPose> samples;
    samples.reserve(std::max<std::size_t>(n, 2));
    Vec3 p = params.start.position;
    Quat q = params.start.orientation;
    double log_speed = 0.0;
    for (std::size_t k = 0; k < std::max<std::size_t>(n, 2); ++k) {
        // k / rate, not k * dt: keeps timestamps bit-identical to the
        // t_k = k / f grid used by resample() and the delivery loop.
        samples.push_back({static_cast<double>(k) / params.rate_hz, Pose(p, q)});
        log_speed = kSpeedPersistence * log_speed + params.volatility * rng.normal();
        const double scale = std::exp(log_speed);
        const Vec3 step(rng.normal(0.0, params.step_sigma_m), rng.normal(0.0, params.step_sigma_m),
                        rng.normal(0.0, params.step_sigma_m));
        const Vec3 turn(rng.normal(0.0, turn_sigma_rad), rng.normal(0.0, turn_sigma_rad),
                        rng.normal(0.0, turn_sigma_rad));
        p += scale * step;
        const Vec3 w = scale * turn;
        const double angle = w.norm();
        if (angle > 1e-15) q = (q * Quat(Eigen::AngleAxisd(angle, w / angle))).normalized();
    }
    return PoseTrace::create(std::move(user_id), std::move(samples), params.rate_hz);
}

namespace {

ObservedPoseStream resample_timed(const std::string& user_id,
                                  const std::vector<TimedPose>& samples, double f_hz) {
    if (!(f_hz > 0.0)) throw ParameterError("collection frequency must be positive");
    ObservedPoseStream out;
    out.user_id = user_id;
    out.collection_frequency_hz = f_hz;
    const double end = samples.back().t;
    const double eps = 1e-9 * std::max(1.0, end);
    for (std::size_t k = 0;; ++k) {
        const double tk = static_cast<double>(k) / f_hz;
        if (tk > end + eps) break;
        out.observations.push_back({tk, samples[latest_at_or_before(samples, tk)].pose});
    }
    return out;
}

}  // namespace

ObservedPoseStream resample(const PoseTrace& trace, double f_hz) {
    return resample_timed(trace.user_id, trace.samples, f_hz);
}

ObservedPoseStream resample(const ObservedPoseStream& stream, double f_hz) {
    if (stream.observations.empty()) throw StateError("cannot resample an empty stream");
    return resample_timed(stream.user_id, stream.observations, f_hz);
}

Pose predict_pose(const ObservedPoseStream& stream, double target_t, Predictor predictor) {
    const auto& obs = stream.observations;
    if (obs.empty()) throw StateError("cannot predict from an empty observation stream");
    const std::size_t i = latest_at_or_before(obs, target_t);
    if (predictor == Predictor::hold_last || i == 0) return obs[i].pose;

    const TimedPose& a = obs[i - 1];
    const TimedPose& b = obs[i];
    if (target_t == b.t) return b.pose;
    // Extrapolation parameter along the last observed pair, clamped to [0, 2]
    // so low collection frequencies cannot overshoot without bound.
    double u = (target_t - a.t) / (b.t - a.t);
    u = std::clamp(u, 0.0, 2.0);
    Pose out;
    out.position = a.pose.position + u * (b.pose.position - a.pose.position);
    out.orientation = slerp_extrapolate(a.pose.orientation, b.pose.orientation, u);
    return out;
}

std::string trace_to_csv(const PoseTrace& trace) {
    csv::Writer w("t,x,y,z,qw,qx,qy,qz");
    for (const auto& s : trace.samples) {
        const Quat& q = s.pose.orientation;
        w.row({csv::format_double(s.t), csv::format_double(s.pose.position.x()),
               csv::format_double(s.pose.position.y()), csv::format_double(s.pose.position.z()),
               csv::format_double(q.w()), csv::format_double(q.x()), csv::format_double(q.y()),
               csv::format_double(q.z())});
    }
    return w.take();
}

PoseTrace trace_from_csv(std::string_view text, std::string user_id) {
    return parse_trace(text, TraceFormatSpec::normalized(), std::move(user_id));
}

}  // namespace udtwin
