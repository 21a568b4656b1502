#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/pose_trace.hpp"

using namespace udtwin;
using testutil::pose_eq;
using testutil::quat_eq;
using testutil::vec_eq;

TEST_SUITE_BEGIN("pose_trace");

TEST_CASE("parse rejects a one-row file") {
    CHECK_THROWS_AS(parse_trace("0,0,0,0,1,0,0,0\n", TraceFormatSpec::normalized()),
                    ValidationError);
}

TEST_CASE("parse maps the normalized format one to one") {
    const auto trace = parse_trace("0,0,0,0,1,0,0,0\n0.1,1,0,0,1,0,0,0\n",
                                   TraceFormatSpec::normalized(), "u");
    REQUIRE(trace.samples.size() == 2);
    CHECK(trace.samples[0].t == 0.0);
    CHECK(trace.samples[1].t == 0.1);
    CHECK(vec_eq(trace.samples[0].pose.position, Vec3(0, 0, 0)));
    CHECK(vec_eq(trace.samples[1].pose.position, Vec3(1, 0, 0)));
    CHECK(trace.user_id == "u");
}

TEST_CASE("parse skips a header row and normalizes the epoch") {
    const auto trace = parse_trace("t,x,y,z,qw,qx,qy,qz\n5.0,0,0,0,1,0,0,0\n5.5,1,2,3,1,0,0,0\n",
                                   TraceFormatSpec::normalized());
    REQUIRE(trace.samples.size() == 2);
    CHECK(trace.samples[0].t == 0.0);
    CHECK(trace.samples[1].t == 0.5);
}

TEST_CASE("euler ingestion matches the rotation-matrix oracle") {
    // (0, 90, 0) degrees -> pure y rotation, q = (sqrt(2)/2, 0, sqrt(2)/2, 0).
    const auto trace = parse_trace("0,0,0,0,0,90,0\n1,0,0,0,0,90,0\n", TraceFormatSpec::euler_xyz());
    const Quat& q = trace.samples[0].pose.orientation;
    const double s2 = std::sqrt(2.0) / 2.0;
    CHECK(std::abs(q.w() - s2) < 1e-9);
    CHECK(std::abs(q.x()) < 1e-9);
    CHECK(std::abs(q.y() - s2) < 1e-9);
    CHECK(std::abs(q.z()) < 1e-9);

    // Arbitrary angles: the quaternion's action must equal the hand-composed
    // intrinsic XYZ matrix on a bouquet of vectors.
    const double rx = 31.0, ry = -58.0, rz = 117.0;
    const Quat qe = quat_from_euler_xyz_deg(rx, ry, rz);
    const auto m = oracle::euler_xyz_deg_matrix(rx, ry, rz);
    for (const Vec3 v : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0.3, -0.7, 2.0)}) {
        const Vec3 got = qe * v;
        const auto want = oracle::mat_apply(m, {v.x(), v.y(), v.z()});
        CHECK(std::abs(got.x() - want[0]) < 1e-12);
        CHECK(std::abs(got.y() - want[1]) < 1e-12);
        CHECK(std::abs(got.z() - want[2]) < 1e-12);
    }
}

TEST_CASE("parse errors carry line numbers") {
    CHECK_THROWS_AS(parse_trace("0,0,0,0,1,0,0\n", TraceFormatSpec::normalized()), ParseError);
    CHECK_THROWS_AS(parse_trace("0,0,0,0,1,0,0,0\n0.1,zap,0,0,1,0,0,0\n",
                                TraceFormatSpec::normalized()),
                    ParseError);
    CHECK_THROWS_AS(parse_trace("0,0,0,0,1,0,0,0\n0,1,0,0,1,0,0,0\n",
                                TraceFormatSpec::normalized()),
                    ValidationError);  // non-increasing timestamps
    CHECK_THROWS_AS(parse_trace("", TraceFormatSpec::normalized()), ParseError);
}

TEST_CASE("synth with zero sigmas is a constant pose") {
    SynthParams p;
    p.seed = 7;
    p.duration_s = 1.0;
    p.rate_hz = 10.0;
    p.step_sigma_m = 0.0;
    p.turn_sigma_deg = 0.0;
    const auto trace = synth_trace(p);
    REQUIRE(trace.samples.size() == 11);
    for (const auto& s : trace.samples) {
        CHECK(pose_eq(s.pose, trace.samples[0].pose));
    }
}

TEST_CASE("synth determinism: equal seeds give byte-identical traces") {
    SynthParams p;
    p.seed = 42;
    p.duration_s = 2.0;
    p.rate_hz = 30.0;
    p.step_sigma_m = 0.1;
    p.turn_sigma_deg = 3.0;
    p.volatility = 0.2;
    CHECK(trace_to_csv(synth_trace(p)) == trace_to_csv(synth_trace(p)));

    SynthParams p2 = p;
    p2.seed = 43;
    CHECK(trace_to_csv(synth_trace(p)) != trace_to_csv(synth_trace(p2)));
}

TEST_CASE("synth parameter errors") {
    SynthParams p;
    p.duration_s = 0.0;
    CHECK_THROWS_AS(synth_trace(p), ParameterError);
    p.duration_s = 1.0;
    p.rate_hz = 0.0;
    CHECK_THROWS_AS(synth_trace(p), ParameterError);
    p.rate_hz = 10.0;
    p.step_sigma_m = -1.0;
    CHECK_THROWS_AS(synth_trace(p), ParameterError);
}

TEST_CASE("trace CSV round-trips exactly") {
    SynthParams p;
    p.seed = 99;
    p.duration_s = 1.0;
    p.rate_hz = 17.0;
    p.step_sigma_m = 0.05;
    p.turn_sigma_deg = 2.0;
    const auto trace = synth_trace(p, "rt");
    const auto text = trace_to_csv(trace);
    CHECK(trace_to_csv(trace_from_csv(text, "rt")) == text);
}

namespace {

PoseTrace walk_trace(double rate_hz, double duration_s) {
    SynthParams p;
    p.seed = 5;
    p.rate_hz = rate_hz;
    p.duration_s = duration_s;
    p.step_sigma_m = 0.05;
    p.turn_sigma_deg = 2.0;
    return synth_trace(p);
}

}  // namespace

TEST_CASE("resample at the native rate with aligned timestamps is the identity") {
    const auto trace = walk_trace(30.0, 1.0);
    const auto stream = resample(trace, 30.0);
    REQUIRE(stream.observations.size() == trace.samples.size());
    for (std::size_t i = 0; i < stream.observations.size(); ++i) {
        CHECK(stream.observations[i].t == trace.samples[i].t);
        CHECK(pose_eq(stream.observations[i].pose, trace.samples[i].pose));
    }
}

TEST_CASE("resample at half the native rate decimates") {
    const auto trace = walk_trace(30.0, 1.0);
    const auto stream = resample(trace, 15.0);
    REQUIRE(stream.observations.size() == 16);
    for (std::size_t k = 0; k < stream.observations.size(); ++k)
        CHECK(pose_eq(stream.observations[k].pose, trace.samples[2 * k].pose));
}

TEST_CASE("resample follows the latest-sample-at-or-before rule") {
    // 30 Hz trace, f = 7 Hz: t = 1/7 s falls between samples 4 (4/30) and 5.
    const auto trace = walk_trace(30.0, 1.0);
    const auto stream = resample(trace, 7.0);
    REQUIRE(stream.observations.size() == 8);  // floor(1 * 7) + 1
    CHECK(stream.observations[1].t == 1.0 / 7.0);
    CHECK(pose_eq(stream.observations[1].pose, trace.samples[4].pose));
    CHECK_THROWS_AS(resample(trace, 0.0), ParameterError);
}

TEST_CASE("resample idempotence and subset property") {
    const auto trace = walk_trace(30.0, 2.0);
    const auto once = resample(trace, 5.0);
    const auto twice = resample(once, 5.0);
    REQUIRE(once.observations.size() == twice.observations.size());
    for (std::size_t i = 0; i < once.observations.size(); ++i) {
        CHECK(once.observations[i].t == twice.observations[i].t);
        CHECK(pose_eq(once.observations[i].pose, twice.observations[i].pose));
    }

    // f' = 3 f: the f observations form a subset of the f' observations.
    const auto coarse = resample(trace, 5.0);
    const auto fine = resample(trace, 15.0);
    for (std::size_t k = 0; k < coarse.observations.size(); ++k) {
        const auto& c = coarse.observations[k];
        const auto& f = fine.observations[3 * k];
        CHECK(c.t == f.t);
        CHECK(pose_eq(c.pose, f.pose));
    }
}

TEST_CASE("hold_last prediction returns an observed pose verbatim") {
    const auto trace = walk_trace(30.0, 1.0);
    const auto stream = resample(trace, 10.0);
    for (const double t : {0.0, 0.05, 0.1, 0.31, 0.99, 2.0}) {
        const Pose p = predict_pose(stream, t, Predictor::hold_last);
        bool found = false;
        for (const auto& obs : stream.observations)
            if (pose_eq(obs.pose, p)) found = true;
        CHECK(found);
    }
    // Exact hit returns that observation's pose.
    const Pose hit = predict_pose(stream, stream.observations[3].t, Predictor::hold_last);
    CHECK(vec_eq(hit.position, stream.observations[3].pose.position));
}

TEST_CASE("linear prediction extrapolates position") {
    ObservedPoseStream stream;
    stream.collection_frequency_hz = 1.0;
    stream.observations.push_back({0.0, Pose(Vec3(0, 0, 0), Quat::Identity())});
    stream.observations.push_back({1.0, Pose(Vec3(1, 0, 0), Quat::Identity())});
    const Pose p = predict_pose(stream, 1.5, Predictor::linear);
    CHECK(std::abs(p.position.x() - 1.5) < 1e-12);

    // Clamp: u = (4 - 0) / 1 exceeds 2, so the position stops at x = 2.
    const Pose clamped = predict_pose(stream, 4.0, Predictor::linear);
    CHECK(std::abs(clamped.position.x() - 2.0) < 1e-12);
}

TEST_CASE("linear prediction extrapolates rotation along the same arc") {
    // 0 -> 30 degrees about z over 1 s; at t = 2 s the clamp bound u = 2 is
    // reached exactly and the pose is 60 degrees about z.
    ObservedPoseStream stream;
    stream.collection_frequency_hz = 1.0;
    const Quat q0 = Quat::Identity();
    const Quat q1(Eigen::AngleAxisd(30.0 * M_PI / 180.0, Vec3::UnitZ()));
    stream.observations.push_back({0.0, Pose(Vec3::Zero(), q0)});
    stream.observations.push_back({1.0, Pose(Vec3::Zero(), q1)});
    const Pose p = predict_pose(stream, 2.0, Predictor::linear);
    const Quat want(Eigen::AngleAxisd(60.0 * M_PI / 180.0, Vec3::UnitZ()));
    const auto m = oracle::quat_to_matrix(want.w(), want.x(), want.y(), want.z());
    for (const Vec3 v : {Vec3(1, 0, 0), Vec3(0, 1, 0)}) {
        const Vec3 got = p.orientation * v;
        const auto ref = oracle::mat_apply(m, {v.x(), v.y(), v.z()});
        CHECK(std::abs(got.x() - ref[0]) < 1e-6);
        CHECK(std::abs(got.y() - ref[1]) < 1e-6);
        CHECK(std::abs(got.z() - ref[2]) < 1e-6);
    }
}

TEST_CASE("prediction falls back and errors sensibly") {
    ObservedPoseStream empty;
    CHECK_THROWS_AS(predict_pose(empty, 0.0, Predictor::hold_last), StateError);

    ObservedPoseStream one;
    one.observations.push_back({0.5, Pose(Vec3(2, 0, 0), Quat::Identity())});
    // Only one prior observation: linear falls back to hold_last.
    CHECK(vec_eq(predict_pose(one, 3.0, Predictor::linear).position, Vec3(2, 0, 0)));
    // Nothing precedes target: clamp to the first observation.
    CHECK(vec_eq(predict_pose(one, 0.0, Predictor::hold_last).position, Vec3(2, 0, 0)));
}

TEST_CASE("pose invariants") {
    CHECK_THROWS_AS(Pose(Vec3(0, 0, std::nan("")), Quat::Identity()), ValidationError);
    CHECK_THROWS_AS(Pose(Vec3::Zero(), Quat(0, 0, 0, 0)), ValidationError);
    const Pose p(Vec3::Zero(), Quat(2, 0, 0, 0));  // renormalized
    CHECK(std::abs(p.orientation.norm() - 1.0) < 1e-6);
}

TEST_SUITE_END();
