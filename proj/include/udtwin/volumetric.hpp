#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "udtwin/geometry.hpp"

namespace udtwin {

// One frame of a volumetric video.
struct PointCloudFrame {
    int frame_index = 0;
    std::vector<Vec3> points;

    static PointCloudFrame create(int frame_index, std::vector<Vec3> points);
};

struct Aabb {
    Vec3 min{Vec3::Zero()};
    Vec3 max{Vec3::Ones()};
};

// Axis-aligned spatial segmentation of a frame's bounding box.
struct TileGrid {
    Aabb bounds;
    int nx = 1;
    int ny = 1;
    int nz = 1;

    static TileGrid create(const Aabb& bounds, int nx, int ny, int nz);

    int tile_count() const { return nx * ny * nz; }
    Aabb tile_box(std::uint32_t tile_id) const;
};

struct TiledFrame {
    PointCloudFrame frame;
    TileGrid grid;
    std::vector<std::uint32_t> assignment;  // point index -> tile id
};

// Symmetric viewing volume along the camera +z axis.
struct Frustum {
    double hfov_deg = 90.0;
    double vfov_deg = 90.0;
    double near_m = 0.1;
    double far_m = 10.0;

    static Frustum create(double hfov_deg, double vfov_deg, double near_m, double far_m);
};

// Assigns every point to the half-open cell containing it; points exactly on
// a max boundary belong to the last cell along that axis, so the assignment
// is a partition. Points outside the bounds raise GeometryError.
TiledFrame tile_frame(PointCloudFrame frame, const TileGrid& grid);

// Indices (ascending) of the points inside the frustum placed at `pose`:
// near <= z <= far, |x| <= z tan(hfov/2), |y| <= z tan(vfov/2) in the
// camera frame.
std::vector<std::uint32_t> visible_points(const PointCloudFrame& frame, const Pose& pose,
                                          const Frustum& cam);

// Conservative tile selection: a tile survives unless all eight corners of
// its box fall outside a single frustum plane. Never drops a tile that
// contains a point visible under `predicted`.
std::vector<std::uint32_t> select_tiles(const TiledFrame& tf, const Pose& predicted,
                                        const Frustum& cam);

// Virtual content hit rate: |rendered ∩ delivered| / |rendered| with the
// rendered set taken at the true pose; 1 by convention for an empty viewport.
double vchr(const std::vector<std::uint32_t>& delivered_tiles, const TiledFrame& tf,
            const Pose& true_pose, const Frustum& cam);

// Same ratio with a precomputed rendered set (delivery loop fast path).
double vchr_rendered(const std::vector<std::uint32_t>& delivered_tiles, const TiledFrame& tf,
                     const std::vector<std::uint32_t>& rendered);

struct FrameSynthParams {
    std::uint64_t seed = 0;
    std::size_t n_points = 1;
    Aabb bounds;
    int frame_index = 0;
};

// Seeded uniform points inside bounds.
PointCloudFrame synth_frame(const FrameSynthParams& params);

// ASCII PLY subset: `element vertex N` with float x/y/z properties; other
// properties and elements are ignored.
PointCloudFrame frame_from_ply(std::string_view text, int frame_index = 0);
// Plain `x,y,z` CSV (optional header).
PointCloudFrame frame_from_csv(std::string_view text, int frame_index = 0);

}  // namespace udtwin
