#include "udtwin/volumetric.hpp"

#include <algorithm>
#include <cmath>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/rng.hpp"

namespace udtwin {

PointCloudFrame PointCloudFrame::create(int frame_index, std::vector<Vec3> points) {
    if (points.empty()) throw ValidationError("point cloud frame needs at least 1 point");
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!finite(points[i]))
            throw ValidationError("non-finite point at index " + std::to_string(i));
    return PointCloudFrame{frame_index, std::move(points)};
}

TileGrid TileGrid::create(const Aabb& bounds, int nx, int ny, int nz) {
    for (int a = 0; a < 3; ++a)
        if (!(bounds.min[a] < bounds.max[a]))
            throw ValidationError("tile grid bounds must satisfy min < max on every axis");
    if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("tile grid dims must be positive");
    return TileGrid{bounds, nx, ny, nz};
}

Aabb TileGrid::tile_box(std::uint32_t tile_id) const {
    const int ix = static_cast<int>(tile_id) % nx;
    const int iy = (static_cast<int>(tile_id) / nx) % ny;
    const int iz = static_cast<int>(tile_id) / (nx * ny);
    const Vec3 ext = bounds.max - bounds.min;
    Aabb box;
    box.min = bounds.min + Vec3(ext.x() * ix / nx, ext.y() * iy / ny, ext.z() * iz / nz);
    box.max = bounds.min +
              Vec3(ext.x() * (ix + 1) / nx, ext.y() * (iy + 1) / ny, ext.z() * (iz + 1) / nz);
    return box;
}

Frustum Frustum::create(double hfov_deg, double vfov_deg, double near_m, double far_m) {
    if (!(hfov_deg > 0.0 && hfov_deg < 180.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0))
        throw ValidationError("frustum FoV angles must lie in (0, 180) degrees");
    if (!(near_m > 0.0 && near_m < far_m))
        throw ValidationError("frustum planes must satisfy 0 < near < far");
    return Frustum{hfov_deg, vfov_deg, near_m, far_m};
}

namespace {

int cell_index(double v, double lo, double hi, int n) {
    const int i = static_cast<int>(std::floor((v - lo) * n / (hi - lo)));
    return std::min(std::max(i, 0), n - 1);
}

}  // namespace

TiledFrame tile_frame(PointCloudFrame frame, const TileGrid& grid) {
    std::vector<std::uint32_t> assignment(frame.points.size());
    for (std::size_t i = 0; i < frame.points.size(); ++i) {
        const Vec3& p = frame.points[i];
        for (int a = 0; a < 3; ++a)
            if (p[a] < grid.bounds.min[a] || p[a] > grid.bounds.max[a])
                throw GeometryError("point " + std::to_string(i) + " lies outside the tile grid");
        const int ix = cell_index(p.x(), grid.bounds.min.x(), grid.bounds.max.x(), grid.nx);
        const int iy = cell_index(p.y(), grid.bounds.min.y(), grid.bounds.max.y(), grid.ny);
        const int iz = cell_index(p.z(), grid.bounds.min.z(), grid.bounds.max.z(), grid.nz);
        assignment[i] = static_cast<std::uint32_t>(ix + grid.nx * (iy + grid.ny * iz));
    }
    return TiledFrame{std::move(frame), grid, std::move(assignment)};
}

std::vector<std::uint32_t> visible_points(const PointCloudFrame& frame, const Pose& pose,
                                          const Frustum& cam) {
    const Eigen::Matrix3d world_to_cam = pose.orientation.conjugate().toRotationMatrix();
    const double tan_h = std::tan(cam.hfov_deg * M_PI / 360.0);
    const double tan_v = std::tan(cam.vfov_deg * M_PI / 360.0);
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < frame.points.size(); ++i) {
        const Vec3 pc = world_to_cam * (frame.points[i] - pose.position);
        if (pc.z() < cam.near_m || pc.z() > cam.far_m) continue;
        if (std::abs(pc.x()) > pc.z() * tan_h) continue;
        if (std::abs(pc.y()) > pc.z() * tan_v) continue;
        out.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
}

std::vector<std::uint32_t> select_tiles(const TiledFrame& tf, const Pose& predicted,
                                        const Frustum& cam) {
    const Eigen::Matrix3d world_to_cam = predicted.orientation.conjugate().toRotationMatrix();
    const double tan_h = std::tan(cam.hfov_deg * M_PI / 360.0);
    const double tan_v = std::tan(cam.vfov_deg * M_PI / 360.0);
    const TileGrid& grid = tf.grid;
    const Vec3 ext = grid.bounds.max - grid.bounds.min;

    // The grid is uniform, so adjacent tiles share corners. Classify every
    // lattice corner against the six frustum planes once (bit set = outside),
    // then a tile is rejected iff its eight corners all violate one plane.
    // Corner coordinates use the same expression as tile_box so the decision
    // is identical to testing each tile's own box.
    const int cx = grid.nx + 1, cy = grid.ny + 1, cz = grid.nz + 1;
    std::vector<std::uint8_t> outside(static_cast<std::size_t>(cx) * cy * cz);
    for (int iz = 0; iz < cz; ++iz)
        for (int iy = 0; iy < cy; ++iy)
            for (int ix = 0; ix < cx; ++ix) {
                const Vec3 corner = grid.bounds.min + Vec3(ext.x() * ix / grid.nx,
                                                           ext.y() * iy / grid.ny,
                                                           ext.z() * iz / grid.nz);
                const Vec3 p = world_to_cam * (corner - predicted.position);
                std::uint8_t bits = 0;
                if (p.z() < cam.near_m) bits |= 1u << 0;
                if (p.z() > cam.far_m) bits |= 1u << 1;
                if (p.x() > p.z() * tan_h) bits |= 1u << 2;
                if (-p.x() > p.z() * tan_h) bits |= 1u << 3;
                if (p.y() > p.z() * tan_v) bits |= 1u << 4;
                if (-p.y() > p.z() * tan_v) bits |= 1u << 5;
                outside[static_cast<std::size_t>(ix + cx * (iy + cy * iz))] = bits;
            }

    std::vector<std::uint32_t> selected;
    auto at = [&](int ix, int iy, int iz) {
        return outside[static_cast<std::size_t>(ix + cx * (iy + cy * iz))];
    };
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                const std::uint8_t all_outside =
                    at(ix, iy, iz) & at(ix + 1, iy, iz) & at(ix, iy + 1, iz) &
                    at(ix + 1, iy + 1, iz) & at(ix, iy, iz + 1) & at(ix + 1, iy, iz + 1) &
                    at(ix, iy + 1, iz + 1) & at(ix + 1, iy + 1, iz + 1);
                if (all_outside) continue;
                selected.push_back(
                    static_cast<std::uint32_t>(ix + grid.nx * (iy + grid.ny * iz)));
            }
    return selected;
}

double vchr_rendered(const std::vector<std::uint32_t>& delivered_tiles, const TiledFrame& tf,
                     const std::vector<std::uint32_t>& rendered) {
    if (rendered.empty()) return 1.0;
    std::vector<char> delivered_mask(static_cast<std::size_t>(tf.grid.tile_count()), 0);
    for (const auto tile : delivered_tiles) delivered_mask.at(tile) = 1;
    std::size_t hit = 0;
    for (const auto idx : rendered)
        if (delivered_mask[tf.assignment[idx]]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(rendered.size());
}

double vchr(const std::vector<std::uint32_t>& delivered_tiles, const TiledFrame& tf,
            const Pose& true_pose, const Frustum& cam) {
    return vchr_rendered(delivered_tiles, tf, visible_points(tf.frame, true_pose, cam));
}

PointCloudFrame synth_frame(const FrameSynthParams& params) {
    if (params.n_points == 0) throw ParameterError("synth frame needs n_points >= 1");
    for (int a = 0; a < 3; ++a)
        if (!(params.bounds.min[a] < params.bounds.max[a]))
            throw ParameterError("synth frame bounds must satisfy min < max on every axis");
    Rng rng(params.seed);
    std::vector<Vec3> points;
    points.reserve(params.n_points);
    for (std::size_t i = 0; i < params.n_points; ++i) {
        points.emplace_back(rng.uniform(params.bounds.min.x(), params.bounds.max.x()),
                            rng.uniform(params.bounds.min.y(), params.bounds.max.y()),
                            rng.uniform(params.bounds.min.z(), params.bounds.max.z()));
    }
    return PointCloudFrame::create(params.frame_index, std::move(points));
}

PointCloudFrame frame_from_ply(std::string_view text, int frame_index) {
    const auto lines = csv::split_lines(text);
    if (lines.empty() || csv::trim(lines[0]) != "ply") throw ParseError("missing 'ply' magic", 1);

    struct Element {
        std::string name;
        std::size_t count = 0;
        std::vector<std::string> properties;
    };
    std::vector<Element> elements;
    std::size_t body_start = 0;
    bool ascii = false;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto fields = csv::split_fields(csv::trim(lines[li]), ' ');
        std::vector<std::string_view> tok;
        for (auto f : fields)
            if (!f.empty()) tok.push_back(f);
        if (tok.empty()) continue;
        if (tok[0] == "format") {
            if (tok.size() < 2 || tok[1] != "ascii")
                throw ParseError("only ascii PLY is supported", li + 1);
            ascii = true;
        } else if (tok[0] == "element") {
            if (tok.size() != 3) throw ParseError("malformed element declaration", li + 1);
            elements.push_back({std::string(tok[1]), csv::parse_size(tok[2], li + 1), {}});
        } else if (tok[0] == "property") {
            if (elements.empty()) throw ParseError("property before any element", li + 1);
            elements.back().properties.emplace_back(tok.back());
        } else if (tok[0] == "end_header") {
            body_start = li + 1;
            break;
        }
        // comment / obj_info lines fall through
    }
    if (!ascii || body_start == 0) throw ParseError("incomplete PLY header");

    std::vector<Vec3> points;
    std::size_t cursor = body_start;
    for (const auto& el : elements) {
        if (el.name != "vertex") {
            cursor += el.count;
            continue;
        }
        int xc = -1, yc = -1, zc = -1;
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
            if (el.properties[p] == "x") xc = static_cast<int>(p);
            if (el.properties[p] == "y") yc = static_cast<int>(p);
            if (el.properties[p] == "z") zc = static_cast<int>(p);
        }
        if (xc < 0 || yc < 0 || zc < 0)
            throw ParseError("vertex element lacks x/y/z properties");
        points.reserve(el.count);
        for (std::size_t r = 0; r < el.count; ++r) {
            if (cursor + r >= lines.size()) throw ParseError("truncated vertex data");
            const auto raw = csv::split_fields(csv::trim(lines[cursor + r]), ' ');
            std::vector<std::string_view> tok;
            for (auto f : raw)
                if (!f.empty()) tok.push_back(f);
            if (static_cast<int>(tok.size()) < static_cast<int>(el.properties.size()))
                throw ParseError("short vertex row", cursor + r + 1);
            points.emplace_back(csv::parse_double(tok[xc], cursor + r + 1),
                                csv::parse_double(tok[yc], cursor + r + 1),
                                csv::parse_double(tok[zc], cursor + r + 1));
        }
        cursor += el.count;
    }
    return PointCloudFrame::create(frame_index, std::move(points));
}

PointCloudFrame frame_from_csv(std::string_view text, int frame_index) {
    std::vector<Vec3> points;
    const auto lines = csv::split_lines(text);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const auto fields = csv::split_fields(lines[li]);
        if (li == 0) {
            bool numeric = true;
            try {
                csv::parse_double(fields[0], 1);
            } catch (const ParseError&) {
                numeric = false;
            }
            if (!numeric) continue;  // header row
        }
        if (fields.size() != 3) throw ParseError("expected 3 columns", li + 1);
        points.emplace_back(csv::parse_double(fields[0], li + 1), csv::parse_double(fields[1], li + 1),
                            csv::parse_double(fields[2], li + 1));
    }
    return PointCloudFrame::create(frame_index, std::move(points));
}

}  // namespace udtwin
