#include "udtwin/delivery.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"

namespace udtwin {

SampleTable SampleTable::create(std::vector<SampleRow> rows) {
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            if (rows[i].user_id == rows[j].user_id && rows[i].frequency_hz == rows[j].frequency_hz)
                throw ValidationError("duplicate (user, frequency) sample row for user " +
                                      rows[i].user_id);
    return SampleTable{std::move(rows)};
}

std::vector<TiledFrame> tile_video(const std::vector<PointCloudFrame>& video,
                                   const TileGrid& grid) {
    std::vector<TiledFrame> out;
    out.reserve(video.size());
    for (const auto& frame : video) out.push_back(tile_frame(frame, grid));
    return out;
}

RenderedSets compute_rendered_sets(const PoseTrace& trace, std::span<const TiledFrame> video,
                                   const DeliveryConfig& cfg) {
    RenderedSets sets(video.size());
    for (std::size_t j = 0; j < video.size(); ++j) {
        const double tj = static_cast<double>(j) / cfg.frame_rate_hz;
        sets[j] = visible_points(video[j].frame, trace.pose_at(tj), cfg.camera);
    }
    return sets;
}

RunResult run_delivery(const PoseTrace& trace, std::span<const TiledFrame> video,
                       const DeliveryConfig& cfg, double f_hz, const RenderedSets* rendered) {
    if (video.empty()) throw ParameterError("delivery needs a non-empty video");
    if (!(cfg.frame_rate_hz > 0.0)) throw ValidationError("frame rate must be positive");
    if (cfg.uplink_delay_s < 0.0) throw ValidationError("uplink delay must be non-negative");

    const ObservedPoseStream full_stream = resample(trace, f_hz);

    RunResult result;
    result.user_id = trace.user_id;
    result.collection_frequency_hz = f_hz;
    result.per_frame_vchr.reserve(video.size());

    // Observations become known to the server once timestamp + delay <= t.
    ObservedPoseStream knowledge;
    knowledge.user_id = full_stream.user_id;
    knowledge.collection_frequency_hz = f_hz;
    std::size_t arrived = 0;

    for (std::size_t j = 0; j < video.size(); ++j) {
        const double tj = static_cast<double>(j) / cfg.frame_rate_hz;
        while (arrived < full_stream.observations.size() &&
               full_stream.observations[arrived].t + cfg.uplink_delay_s <= tj) {
            knowledge.observations.push_back(full_stream.observations[arrived]);
            ++arrived;
        }
        // Before anything has arrived the server falls back to the initial
        // trace pose; never an error.
        const Pose predicted = knowledge.observations.empty()
                                   ? trace.samples.front().pose
                                   : predict_pose(knowledge, tj, cfg.predictor);
        const auto delivered = select_tiles(video[j], predicted, cfg.camera);
        result.tiles_delivered_total += delivered.size();
        const double score =
            rendered ? vchr_rendered(delivered, video[j], (*rendered)[j])
                     : vchr(delivered, video[j], trace.pose_at(tj), cfg.camera);
        result.per_frame_vchr.push_back(score);
    }

    double sum = 0.0;
    for (const double v : result.per_frame_vchr) sum += v;
    result.mean_vchr = sum / static_cast<double>(result.per_frame_vchr.size());
    return result;
}

RunResult run_delivery(const PoseTrace& trace, const std::vector<PointCloudFrame>& video,
                       const DeliveryConfig& cfg, double f_hz) {
    const auto tiled = tile_video(video, cfg.grid);
    return run_delivery(trace, tiled, cfg, f_hz);
}

SampleTable sweep(const std::vector<PoseTrace>& traces, std::span<const TiledFrame> video,
                  const DeliveryConfig& cfg, const std::vector<double>& frequencies,
                  unsigned threads) {
    if (frequencies.empty()) throw ParameterError("sweep needs at least one frequency");
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
        if (!(frequencies[i] > 0.0)) throw ParameterError("sweep frequencies must be positive");
        for (std::size_t j = i + 1; j < frequencies.size(); ++j)
            if (frequencies[i] == frequencies[j])
                throw ParameterError("duplicate sweep frequency " +
                                     csv::format_double(frequencies[i]));
    }

    std::vector<SampleRow> rows(traces.size() * frequencies.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, std::max<std::size_t>(traces.size(), 1));

    // The rendered set per frame is frequency-independent, so each worker
    // computes it once per user and reuses it across the frequency axis.
    auto run_user = [&](std::size_t u) {
        const RenderedSets rendered = compute_rendered_sets(traces[u], video, cfg);
        for (std::size_t fi = 0; fi < frequencies.size(); ++fi) {
            const RunResult r = run_delivery(traces[u], video, cfg, frequencies[fi], &rendered);
            rows[u * frequencies.size() + fi] =
                SampleRow{r.user_id, r.collection_frequency_hz, r.mean_vchr};
        }
    };

    if (threads <= 1) {
        for (std::size_t u = 0; u < traces.size(); ++u) run_user(u);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto worker = [&] {
            while (true) {
                const std::size_t u = next.fetch_add(1);
                if (u >= traces.size()) return;
                try {
                    run_user(u);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    return SampleTable::create(std::move(rows));
}

SampleTable sweep(const std::vector<PoseTrace>& traces, const std::vector<PointCloudFrame>& video,
                  const DeliveryConfig& cfg, const std::vector<double>& frequencies,
                  unsigned threads) {
    const auto tiled = tile_video(video, cfg.grid);
    return sweep(traces, tiled, cfg, frequencies, threads);
}

std::string sample_table_to_csv(const SampleTable& table) {
    csv::Writer w("user_id,frequency_hz,mean_vchr");
    for (const auto& row : table.rows)
        w.row({row.user_id, csv::format_double(row.frequency_hz), csv::format_double(row.mean_vchr)});
    return w.take();
}

SampleTable sample_table_from_csv(std::string_view text) {
    const auto lines = csv::split_lines(text);
    if (lines.empty() || lines[0] != "user_id,frequency_hz,mean_vchr")
        throw ParseError("bad sample table header");
    std::vector<SampleRow> rows;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_fields(lines[li]);
        if (f.size() != 3) throw ParseError("expected 3 columns", li + 1);
        rows.push_back({std::string(f[0]), csv::parse_double(f[1], li + 1),
                        csv::parse_double(f[2], li + 1)});
    }
    return SampleTable::create(std::move(rows));
}

}  // namespace udtwin
