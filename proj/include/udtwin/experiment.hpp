#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udtwin/delivery.hpp"
#include "udtwin/manage.hpp"
#include "udtwin/qoe.hpp"
#include "udtwin/udt_store.hpp"

namespace udtwin {

struct CohortConfig {
    enum class Kind { synthetic, trace_dir };
    Kind kind = Kind::synthetic;

    // synthetic cohorts
    std::size_t n_users = 40;
    double duration_s = 10.0;
    double rate_hz = 30.0;
    double step_sigma_m = 0.02;
    double turn_sigma_deg = 3.0;
    double volatility = 0.1;
    // Spread of per-user motion-parameter multipliers; 0 makes the cohort
    // homogeneous.
    double heterogeneity = 0.5;
    // Users start on a ring of this radius around the video bounds center,
    // looking inward.
    double ring_radius_m = 1.2;

    // trace_dir cohorts
    std::string dir;
    RotationConvention trace_rotation = RotationConvention::quaternion_wxyz;
};

struct VideoConfig {
    enum class Kind { synthetic, ply_dir };
    Kind kind = Kind::synthetic;

    std::size_t n_frames = 300;
    std::size_t n_points = 10000;
    Aabb bounds{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)};
    std::optional<std::uint64_t> seed;  // default: derived from the master seed

    std::string dir;
};

struct SelectionSweepConfig {
    std::vector<std::size_t> ks;         // empty -> {0, 1, ..., n_users}
    std::size_t random_seed_count = 20;  // random-strategy repetitions per k
};

struct AllocationConfig {
    std::vector<double> grid;
    double budget = 0.0;
};

struct ExperimentConfig {
    CohortConfig cohort;
    VideoConfig video;
    // Narrow default FoV: MAR headset viewports are small, and a tight
    // frustum keeps tile selection sensitive to pose-prediction error.
    DeliveryConfig delivery{30.0, Predictor::hold_last, 0.0,
                            Frustum{30.0, 30.0, 0.1, 10.0},
                            TileGrid{Aabb{}, 8, 8, 8}};
    std::vector<double> frequencies;  // ascending, unique
    int fit_degree = 3;
    SelectionSweepConfig selection;
    std::optional<AllocationConfig> allocation;
    std::string output_dir = "out";
    std::uint64_t master_seed = 1;
    unsigned threads = 0;  // 0 -> hardware concurrency

    // Flat `section.key = value` text.
    static ExperimentConfig from_text(std::string_view text);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    // Every invalid field raises ValidationError naming the field.
    void validate() const;
};

// Ten log-spaced frequencies on [1, 30] Hz.
std::vector<double> default_frequency_grid();

struct ManifestEntry {
    std::string file;
    std::uint64_t bytes = 0;
    std::string digest;  // fnv1a64, hex
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunReport {
    std::vector<ManifestEntry> manifest;
    std::vector<StageTiming> timings;
    std::vector<std::string> warnings;
};

struct Table {
    std::string filename;
    std::string content;
};

std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

// Writes every table (LF endings) plus manifest.csv and returns the report.
// On I/O failure nothing claims success: the manifest is written last.
RunReport emit_report(const std::vector<Table>& tables, const std::filesystem::path& output_dir);

// Intermediate products of the pipeline, exposed so the CLI subcommands and
// tests can run stages independently.
std::vector<PoseTrace> build_cohort(const ExperimentConfig& cfg);
std::vector<PointCloudFrame> build_video(const ExperimentConfig& cfg);

// Grid over the configured bounds (synthetic video) or the tight bounding
// box of the loaded frames (PLY ingestion).
TileGrid video_grid(const ExperimentConfig& cfg, const std::vector<PointCloudFrame>& video);

struct ModelingResult {
    std::vector<QoEModel> per_user;  // ascending user id, fitted users only
    std::optional<QoEModel> agnostic;
    std::vector<std::string> warnings;
};

ModelingResult fit_models(const SampleTable& samples);

// Fig-4b-style sweep: average modeling error vs number of established UDTs.
std::vector<SelectionScoreRow> selection_curve(const SampleTable& samples,
                                               const ModelingResult& models,
                                               const SelectionSweepConfig& cfg,
                                               std::uint64_t master_seed);

std::vector<Table> fig4a_table(const SampleTable& samples, const ModelingResult& models);

// Full pipeline: synthesize/ingest -> sweep -> fit -> select -> allocate ->
// emit. Byte-deterministic given (config, master_seed).
RunReport run_experiment(const ExperimentConfig& cfg);

// Exclusive advisory lock on an output directory (one CLI instance per dir).
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace udtwin
