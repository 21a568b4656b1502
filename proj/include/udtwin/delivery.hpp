#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "udtwin/pose_trace.hpp"
#include "udtwin/volumetric.hpp"

namespace udtwin {

struct DeliveryConfig {
    double frame_rate_hz = 30.0;
    Predictor predictor = Predictor::hold_last;
    double uplink_delay_s = 0.0;
    Frustum camera;
    TileGrid grid;
};

struct RunResult {
    std::string user_id;
    double collection_frequency_hz = 0.0;
    std::vector<double> per_frame_vchr;
    double mean_vchr = 0.0;
    std::uint64_t tiles_delivered_total = 0;
};

struct SampleRow {
    std::string user_id;
    double frequency_hz = 0.0;
    double mean_vchr = 0.0;
};

// One row per (user, frequency); pairs are unique.
struct SampleTable {
    std::vector<SampleRow> rows;

    static SampleTable create(std::vector<SampleRow> rows);
};

// Point indices visible at the true pose, one entry per video frame; shared
// across frequencies when sweeping (it does not depend on f).
using RenderedSets = std::vector<std::vector<std::uint32_t>>;

RenderedSets compute_rendered_sets(const PoseTrace& trace, std::span<const TiledFrame> video,
                                   const DeliveryConfig& cfg);

// Edge-delivery loop: at each frame time the server predicts the pose from
// the observations that have arrived (timestamp + uplink delay <= frame
// time), selects tiles conservatively, and is scored against the true pose.
RunResult run_delivery(const PoseTrace& trace, std::span<const TiledFrame> video,
                       const DeliveryConfig& cfg, double f_hz,
                       const RenderedSets* rendered = nullptr);
RunResult run_delivery(const PoseTrace& trace, const std::vector<PointCloudFrame>& video,
                       const DeliveryConfig& cfg, double f_hz);

std::vector<TiledFrame> tile_video(const std::vector<PointCloudFrame>& video, const TileGrid& grid);

// Full (user x frequency) sweep. Cells are independent; `threads` > 1 fans
// out without changing the output (row order is fixed by input indices,
// users outer, frequencies inner).
SampleTable sweep(const std::vector<PoseTrace>& traces, std::span<const TiledFrame> video,
                  const DeliveryConfig& cfg, const std::vector<double>& frequencies,
                  unsigned threads = 1);
SampleTable sweep(const std::vector<PoseTrace>& traces, const std::vector<PointCloudFrame>& video,
                  const DeliveryConfig& cfg, const std::vector<double>& frequencies,
                  unsigned threads = 1);

std::string sample_table_to_csv(const SampleTable& table);
SampleTable sample_table_from_csv(std::string_view text);

}  // namespace udtwin
