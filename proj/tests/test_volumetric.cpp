#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/rng.hpp"
#include "udtwin/volumetric.hpp"

using namespace udtwin;
using testutil::vec_eq;

TEST_SUITE_BEGIN("volumetric");

namespace {

const Frustum kCam = Frustum::create(90.0, 90.0, 0.1, 10.0);

// Two points split by the x = 0 plane; bounds [-1,1]^2 x [0,2], dims (2,1,1).
TiledFrame two_point_frame() {
    auto frame = PointCloudFrame::create(0, {Vec3(-0.5, 0, 1), Vec3(0.5, 0, 1)});
    const auto grid = TileGrid::create(Aabb{Vec3(-1, -1, 0), Vec3(1, 1, 2)}, 2, 1, 1);
    return tile_frame(std::move(frame), grid);
}

// Camera placed beside the x<0 tile looking along -x; covers tile 0 only.
Pose side_pose() {
    const Quat q(Eigen::AngleAxisd(-M_PI / 2.0, Vec3::UnitY()));  // +z -> -x
    return Pose(Vec3(-0.5, 0, 1), q);
}

}  // namespace

TEST_CASE("tiling with a single cell puts everything in tile 0") {
    auto frame = PointCloudFrame::create(0, {Vec3(0.1, 0.2, 0.3), Vec3(0.9, 0.9, 0.9)});
    const auto tf = tile_frame(std::move(frame), TileGrid::create(Aabb{}, 1, 1, 1));
    CHECK(tf.assignment == std::vector<std::uint32_t>{0, 0});
}

TEST_CASE("unit-cube corners land in eight distinct tiles") {
    // Half-open cells: coordinate 0 -> cell 0, coordinate 1 (the max
    // boundary) -> cell 1 on each axis.
    std::vector<Vec3> corners;
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) corners.emplace_back(x, y, z);
    const auto tf = tile_frame(PointCloudFrame::create(0, corners),
                               TileGrid::create(Aabb{}, 2, 2, 2));
    std::set<std::uint32_t> distinct(tf.assignment.begin(), tf.assignment.end());
    CHECK(distinct.size() == 8);
    // Enumerated by hand: id = ix + 2 iy + 4 iz.
    CHECK(tf.assignment == std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("point exactly at bounds.max goes to the last tile") {
    const auto tf = tile_frame(PointCloudFrame::create(0, {Vec3(1, 1, 1)}),
                               TileGrid::create(Aabb{}, 3, 2, 2));
    CHECK(tf.assignment[0] == 3 * 2 * 2 - 1);
}

TEST_CASE("tiling rejects out-of-bounds points by index") {
    CHECK_THROWS_WITH_AS(
        tile_frame(PointCloudFrame::create(0, {Vec3(0.5, 0.5, 0.5), Vec3(2, 0, 0)}),
                   TileGrid::create(Aabb{}, 2, 2, 2)),
        "point 1 lies outside the tile grid", GeometryError);
}

TEST_CASE("tiling is a partition") {
    const auto frame = synth_frame({12345, 500, Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, 0});
    const auto grid = TileGrid::create(Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, 3, 4, 2);
    const auto tf = tile_frame(frame, grid);
    REQUIRE(tf.assignment.size() == 500);
    std::vector<std::size_t> counts(static_cast<std::size_t>(grid.tile_count()), 0);
    for (const auto id : tf.assignment) {
        REQUIRE(id < static_cast<std::uint32_t>(grid.tile_count()));
        ++counts[id];
    }
    std::size_t total = 0;
    for (const auto c : counts) total += c;
    CHECK(total == 500);
}

TEST_CASE("tile boxes agree bitwise with the shared corner lattice") {
    // select_tiles classifies the (n+1)^3 corner lattice instead of each
    // tile's own box; both must compute identical corner coordinates.
    const auto grid = TileGrid::create(Aabb{Vec3(-1.7, 0.3, -4.0), Vec3(2.9, 1.1, 5.0)}, 5, 3, 7);
    const Vec3 ext = grid.bounds.max - grid.bounds.min;
    for (std::uint32_t id = 0; id < static_cast<std::uint32_t>(grid.tile_count()); ++id) {
        const Aabb box = grid.tile_box(id);
        const int ix = static_cast<int>(id) % grid.nx;
        const int iy = (static_cast<int>(id) / grid.nx) % grid.ny;
        const int iz = static_cast<int>(id) / (grid.nx * grid.ny);
        const Vec3 lo = grid.bounds.min + Vec3(ext.x() * ix / grid.nx, ext.y() * iy / grid.ny,
                                               ext.z() * iz / grid.nz);
        const Vec3 hi = grid.bounds.min +
                        Vec3(ext.x() * (ix + 1) / grid.nx, ext.y() * (iy + 1) / grid.ny,
                             ext.z() * (iz + 1) / grid.nz);
        CHECK(vec_eq(box.min, lo));
        CHECK(vec_eq(box.max, hi));
    }
}

TEST_CASE("frustum basics on the optical axis") {
    const auto frame = PointCloudFrame::create(0, {Vec3(0, 0, -1), Vec3(0, 0, 1)});
    const auto vis = visible_points(frame, Pose(), kCam);
    CHECK(vis == std::vector<std::uint32_t>{1});  // behind-camera point excluded
}

TEST_CASE("frustum lateral bound |x| <= z tan(45)") {
    const auto frame =
        PointCloudFrame::create(0, {Vec3(-0.5, 0, 1), Vec3(0.5, 0, 1), Vec3(1.5, 0, 1)});
    const auto vis = visible_points(frame, Pose(), kCam);
    CHECK(vis == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("visibility matches the brute-force oracle on 1000 random cases") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec3 point(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const Vec3 cam_pos(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Quat q = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        const Frustum cam = Frustum::create(rng.uniform(30, 120), rng.uniform(30, 120), 0.1, 5.0);
        const auto frame = PointCloudFrame::create(0, {point});
        const bool got = !visible_points(frame, Pose(cam_pos, q), cam).empty();
        const bool want = oracle::point_in_frustum(
            {point.x(), point.y(), point.z()}, {cam_pos.x(), cam_pos.y(), cam_pos.z()}, q.w(),
            q.x(), q.y(), q.z(), cam.hfov_deg, cam.vfov_deg, cam.near_m, cam.far_m);
        REQUIRE(got == want);
    }
}

TEST_CASE("select_tiles keeps everything when the frustum encloses the grid") {
    const auto tf = two_point_frame();
    // Camera behind the grid looking straight at it from afar.
    const Pose pose(Vec3(0, 0, -5), Quat::Identity());
    const auto selected = select_tiles(tf, pose, Frustum::create(120, 120, 0.1, 50));
    CHECK(selected == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("select_tiles is empty when far plane cuts off the grid") {
    const auto tf = two_point_frame();
    const Pose pose(Vec3(0, 0, -5), Quat::Identity());
    CHECK(select_tiles(tf, pose, Frustum::create(120, 120, 0.1, 2.0)).empty());
}

TEST_CASE("select_tiles covering the x<0 half picks exactly tile 0") {
    const auto tf = two_point_frame();
    const auto selected = select_tiles(tf, side_pose(), kCam);
    CHECK(selected == std::vector<std::uint32_t>{0});
}

TEST_CASE("conservative selection never drops a visible point's tile") {
    Rng rng(77);
    const auto bounds = Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    const auto frame = synth_frame({31, 400, bounds, 0});
    const auto tf = tile_frame(frame, TileGrid::create(bounds, 3, 3, 3));
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 pos(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const Quat q = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        const Pose pose(pos, q);
        const auto selected = select_tiles(tf, pose, kCam);
        std::set<std::uint32_t> sel(selected.begin(), selected.end());
        for (const auto idx : visible_points(frame, pose, kCam))
            REQUIRE(sel.count(tf.assignment[idx]) == 1);
        // Hence the self-prediction hit rate is exact.
        if (!visible_points(frame, pose, kCam).empty())
            CHECK(vchr(selected, tf, pose, kCam) == 1.0);
    }
}

TEST_CASE("vchr trivial cases") {
    const auto tf = two_point_frame();
    CHECK(vchr({0, 1}, tf, Pose(), kCam) == 1.0);
    CHECK(vchr({}, tf, Pose(), kCam) == 0.0);
    // Empty viewport: nothing can be missed.
    const Pose away(Vec3(0, 0, 100), Quat::Identity());
    CHECK(vchr({}, tf, away, kCam) == 1.0);
}

TEST_CASE("vchr half delivery on the two-point frame") {
    // Identity pose sees both points; delivering only tile 0 hits p1 alone.
    const auto tf = two_point_frame();
    REQUIRE(visible_points(tf.frame, Pose(), kCam).size() == 2);
    CHECK(vchr({0}, tf, Pose(), kCam) == 0.5);
}

TEST_CASE("vchr is monotone under superset delivery") {
    Rng rng(9);
    const auto bounds = Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    const auto tf = tile_frame(synth_frame({55, 300, bounds, 0}),
                               TileGrid::create(bounds, 2, 2, 2));
    const Pose pose(Vec3(0, 0, -2), Quat::Identity());
    std::vector<std::uint32_t> delivered;
    double last = vchr(delivered, tf, pose, kCam);
    for (std::uint32_t t = 0; t < 8; ++t) {
        delivered.push_back(t);
        const double now = vchr(delivered, tf, pose, kCam);
        CHECK(now >= last);
        last = now;
    }
}

TEST_CASE("synth_frame basics") {
    const Aabb bounds{Vec3(-2, 0, 1), Vec3(-1, 3, 4)};
    const auto one = synth_frame({1, 1, bounds, 3});
    REQUIRE(one.points.size() == 1);
    CHECK(one.frame_index == 3);

    const auto a = synth_frame({8, 100, bounds, 0});
    const auto b = synth_frame({8, 100, bounds, 0});
    for (std::size_t i = 0; i < 100; ++i) CHECK(vec_eq(a.points[i], b.points[i]));

    const auto big = synth_frame({13, 10000, bounds, 0});
    for (const auto& p : big.points) {
        CHECK(p.x() >= bounds.min.x());
        CHECK(p.x() <= bounds.max.x());
        CHECK(p.y() >= bounds.min.y());
        CHECK(p.y() <= bounds.max.y());
        CHECK(p.z() >= bounds.min.z());
        CHECK(p.z() <= bounds.max.z());
    }
    CHECK_THROWS_AS(synth_frame({1, 0, bounds, 0}), ParameterError);
}

TEST_CASE("PLY and CSV ingestion") {
    const char* ply =
        "ply\n"
        "format ascii 1.0\n"
        "comment desk scale\n"
        "element vertex 2\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "element face 1\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
        "0.5 0 1 255\n"
        "-0.5 0 1 12\n"
        "3 0 1 0\n";
    const auto frame = frame_from_ply(ply, 7);
    REQUIRE(frame.points.size() == 2);
    CHECK(vec_eq(frame.points[0], Vec3(0.5, 0, 1)));
    CHECK(vec_eq(frame.points[1], Vec3(-0.5, 0, 1)));
    CHECK(frame.frame_index == 7);

    CHECK_THROWS_AS(frame_from_ply("ply\nformat binary_little_endian 1.0\nend_header\n", 0),
                    ParseError);

    const auto csv_frame = frame_from_csv("x,y,z\n1,2,3\n4,5,6\n");
    REQUIRE(csv_frame.points.size() == 2);
    CHECK(vec_eq(csv_frame.points[1], Vec3(4, 5, 6)));
}

TEST_CASE("type invariants") {
    CHECK_THROWS_AS(PointCloudFrame::create(0, {}), ValidationError);
    CHECK_THROWS_AS(PointCloudFrame::create(0, {Vec3(0, 0, std::nan(""))}), ValidationError);
    CHECK_THROWS_AS(TileGrid::create(Aabb{Vec3::Ones(), Vec3::Zero()}, 1, 1, 1), ValidationError);
    CHECK_THROWS_AS(TileGrid::create(Aabb{}, 0, 1, 1), ValidationError);
    CHECK_THROWS_AS(Frustum::create(0, 90, 0.1, 10), ValidationError);
    CHECK_THROWS_AS(Frustum::create(90, 90, 0, 10), ValidationError);
    CHECK_THROWS_AS(Frustum::create(90, 90, 5, 5), ValidationError);
}

TEST_SUITE_END();
