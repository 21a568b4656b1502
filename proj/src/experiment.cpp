#include "udtwin/experiment.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/rng.hpp"
#include "udtwin/udtof.hpp"

namespace udtwin {

namespace {

// Disjoint seed streams derived from the master seed. Per-user trace seeds
// are master_seed + user index; the offsets keep the other streams clear of
// any realistic cohort size.
constexpr std::uint64_t kVideoSeedOffset = 1'000'000;
constexpr std::uint64_t kSelectionSeedOffset = 2'000'000;
constexpr std::uint64_t kHeterogeneitySeedOffset = 3'000'000;

std::string user_name(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%03zu", index);
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir,
                                                const std::string& extension) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == extension)
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::vector<double> default_frequency_grid() {
    std::vector<double> grid;
    for (int i = 0; i < 10; ++i) grid.push_back(std::exp(static_cast<double>(i) / 9.0 * std::log(30.0)));
    grid.front() = 1.0;
    grid.back() = 30.0;
    return grid;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

class KeyValues {
public:
    explicit KeyValues(std::string_view text) {
        const auto lines = csv::split_lines(text);
        for (std::size_t li = 0; li < lines.size(); ++li) {
            std::string_view line = lines[li];
            if (const auto hash = line.find('#'); hash != std::string_view::npos)
                line = line.substr(0, hash);
            line = csv::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ValidationError("config line " + std::to_string(li + 1) +
                                      " is not 'key = value'");
            const std::string key(csv::trim(line.substr(0, eq)));
            const std::string value(csv::trim(line.substr(eq + 1)));
            if (key.empty()) throw ValidationError("config line " + std::to_string(li + 1) +
                                                   " has an empty key");
            if (!values_.emplace(key, value).second)
                throw ValidationError("duplicate config key '" + key + "'");
        }
    }

    const std::string* get(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return nullptr;
        consumed_.insert(key);
        return &it->second;
    }

    void require_all_consumed() const {
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key)) throw ValidationError("unknown config key '" + key + "'");
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

double to_double(const std::string& key, const std::string& value) {
    try {
        return csv::parse_double(value, 0);
    } catch (const ParseError&) {
        throw ValidationError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    try {
        return csv::parse_u64(value, 0);
    } catch (const ParseError&) {
        throw ValidationError("config key '" + key + "' expects an unsigned integer, got '" +
                              value + "'");
    }
}

std::vector<double> to_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const auto field : csv::split_fields(value)) out.push_back(to_double(key, std::string(field)));
    return out;
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    for (const auto field : csv::split_fields(value))
        out.push_back(static_cast<std::size_t>(to_u64(key, std::string(csv::trim(field)))));
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_text(std::string_view text) {
    KeyValues kv(text);
    ExperimentConfig cfg;
    cfg.frequencies = default_frequency_grid();

    auto num = [&](const char* key, double& field) {
        if (const auto* v = kv.get(key)) field = to_double(key, *v);
    };
    auto size_field = [&](const char* key, std::size_t& field) {
        if (const auto* v = kv.get(key)) field = static_cast<std::size_t>(to_u64(key, *v));
    };
    auto text_field = [&](const char* key, std::string& field) {
        if (const auto* v = kv.get(key)) field = *v;
    };

    if (const auto* v = kv.get("cohort.kind")) {
        if (*v == "synthetic") cfg.cohort.kind = CohortConfig::Kind::synthetic;
        else if (*v == "trace_dir") cfg.cohort.kind = CohortConfig::Kind::trace_dir;
        else throw ValidationError("config key 'cohort.kind' expects synthetic or trace_dir");
    }
    size_field("cohort.n_users", cfg.cohort.n_users);
    num("cohort.duration_s", cfg.cohort.duration_s);
    num("cohort.rate_hz", cfg.cohort.rate_hz);
    num("cohort.step_sigma_m", cfg.cohort.step_sigma_m);
    num("cohort.turn_sigma_deg", cfg.cohort.turn_sigma_deg);
    num("cohort.volatility", cfg.cohort.volatility);
    num("cohort.heterogeneity", cfg.cohort.heterogeneity);
    num("cohort.ring_radius_m", cfg.cohort.ring_radius_m);
    text_field("cohort.dir", cfg.cohort.dir);
    if (const auto* v = kv.get("cohort.trace_rotation")) {
        if (*v == "quaternion") cfg.cohort.trace_rotation = RotationConvention::quaternion_wxyz;
        else if (*v == "euler_xyz_deg") cfg.cohort.trace_rotation = RotationConvention::euler_xyz_deg;
        else throw ValidationError(
            "config key 'cohort.trace_rotation' expects quaternion or euler_xyz_deg");
    }

    if (const auto* v = kv.get("video.kind")) {
        if (*v == "synthetic") cfg.video.kind = VideoConfig::Kind::synthetic;
        else if (*v == "ply_dir") cfg.video.kind = VideoConfig::Kind::ply_dir;
        else throw ValidationError("config key 'video.kind' expects synthetic or ply_dir");
    }
    size_field("video.n_frames", cfg.video.n_frames);
    size_field("video.n_points", cfg.video.n_points);
    if (const auto* v = kv.get("video.bounds")) {
        const auto nums = to_double_list("video.bounds", *v);
        if (nums.size() != 6)
            throw ValidationError("config key 'video.bounds' expects 6 numbers (min xyz, max xyz)");
        cfg.video.bounds = Aabb{Vec3(nums[0], nums[1], nums[2]), Vec3(nums[3], nums[4], nums[5])};
    }
    if (const auto* v = kv.get("video.seed")) cfg.video.seed = to_u64("video.seed", *v);
    text_field("video.dir", cfg.video.dir);

    num("delivery.frame_rate_hz", cfg.delivery.frame_rate_hz);
    if (const auto* v = kv.get("delivery.predictor")) {
        if (*v == "hold_last") cfg.delivery.predictor = Predictor::hold_last;
        else if (*v == "linear") cfg.delivery.predictor = Predictor::linear;
        else throw ValidationError("config key 'delivery.predictor' expects hold_last or linear");
    }
    num("delivery.uplink_delay_s", cfg.delivery.uplink_delay_s);
    num("delivery.camera.hfov_deg", cfg.delivery.camera.hfov_deg);
    num("delivery.camera.vfov_deg", cfg.delivery.camera.vfov_deg);
    num("delivery.camera.near_m", cfg.delivery.camera.near_m);
    num("delivery.camera.far_m", cfg.delivery.camera.far_m);
    int nx = cfg.delivery.grid.nx, ny = cfg.delivery.grid.ny, nz = cfg.delivery.grid.nz;
    if (const auto* v = kv.get("delivery.grid.nx")) nx = static_cast<int>(to_u64("delivery.grid.nx", *v));
    if (const auto* v = kv.get("delivery.grid.ny")) ny = static_cast<int>(to_u64("delivery.grid.ny", *v));
    if (const auto* v = kv.get("delivery.grid.nz")) nz = static_cast<int>(to_u64("delivery.grid.nz", *v));
    cfg.delivery.grid.nx = nx;
    cfg.delivery.grid.ny = ny;
    cfg.delivery.grid.nz = nz;
    cfg.delivery.grid.bounds = cfg.video.bounds;

    if (const auto* v = kv.get("frequencies")) cfg.frequencies = to_double_list("frequencies", *v);
    if (const auto* v = kv.get("fit.degree")) cfg.fit_degree = static_cast<int>(to_u64("fit.degree", *v));
    if (const auto* v = kv.get("selection.ks")) cfg.selection.ks = to_size_list("selection.ks", *v);
    size_field("selection.random_seed_count", cfg.selection.random_seed_count);

    const auto* alloc_grid = kv.get("allocation.grid");
    const auto* alloc_budget = kv.get("allocation.budget");
    if (alloc_grid || alloc_budget) {
        if (!alloc_grid || !alloc_budget)
            throw ValidationError("allocation needs both 'allocation.grid' and 'allocation.budget'");
        AllocationConfig alloc;
        alloc.grid = to_double_list("allocation.grid", *alloc_grid);
        alloc.budget = to_double("allocation.budget", *alloc_budget);
        cfg.allocation = std::move(alloc);
    }

    text_field("output_dir", cfg.output_dir);
    if (const auto* v = kv.get("master_seed")) cfg.master_seed = to_u64("master_seed", *v);
    if (const auto* v = kv.get("threads")) cfg.threads = static_cast<unsigned>(to_u64("threads", *v));

    kv.require_all_consumed();
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    return from_text(read_file(path));
}

void ExperimentConfig::validate() const {
    if (cohort.kind == CohortConfig::Kind::synthetic) {
        if (cohort.n_users < 1) throw ValidationError("cohort.n_users must be >= 1");
        if (!(cohort.duration_s > 0)) throw ValidationError("cohort.duration_s must be positive");
        if (!(cohort.rate_hz > 0)) throw ValidationError("cohort.rate_hz must be positive");
        if (cohort.step_sigma_m < 0 || cohort.turn_sigma_deg < 0 || cohort.volatility < 0 ||
            cohort.heterogeneity < 0)
            throw ValidationError("cohort motion parameters must be non-negative");
        if (!(cohort.ring_radius_m > 0)) throw ValidationError("cohort.ring_radius_m must be positive");
    } else if (cohort.dir.empty()) {
        throw ValidationError("cohort.dir is required for trace_dir cohorts");
    }

    if (video.kind == VideoConfig::Kind::synthetic) {
        if (video.n_frames < 1) throw ValidationError("video.n_frames must be >= 1");
        if (video.n_points < 1) throw ValidationError("video.n_points must be >= 1");
        for (int a = 0; a < 3; ++a)
            if (!(video.bounds.min[a] < video.bounds.max[a]))
                throw ValidationError("video.bounds must satisfy min < max on every axis");
    } else if (video.dir.empty()) {
        throw ValidationError("video.dir is required for ply_dir videos");
    }

    if (!(delivery.frame_rate_hz > 0)) throw ValidationError("delivery.frame_rate_hz must be positive");
    if (delivery.uplink_delay_s < 0) throw ValidationError("delivery.uplink_delay_s must be non-negative");
    Frustum::create(delivery.camera.hfov_deg, delivery.camera.vfov_deg, delivery.camera.near_m,
                    delivery.camera.far_m);
    if (delivery.grid.nx < 1 || delivery.grid.ny < 1 || delivery.grid.nz < 1)
        throw ValidationError("delivery.grid dims must be >= 1");

    if (frequencies.empty()) throw ValidationError("frequencies must not be empty");
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
        if (!(frequencies[i] > 0)) throw ValidationError("frequencies must be positive");
        if (i > 0 && !(frequencies[i] > frequencies[i - 1]))
            throw ValidationError("frequencies must be strictly ascending and unique");
    }

    if (fit_degree != 3) throw ValidationError("fit.degree is fixed at 3");

    if (allocation) {
        if (allocation->grid.empty()) throw ValidationError("allocation.grid must not be empty");
        for (std::size_t i = 0; i < allocation->grid.size(); ++i) {
            if (!(allocation->grid[i] > 0))
                throw ValidationError("allocation.grid entries must be positive");
            if (i > 0 && !(allocation->grid[i] > allocation->grid[i - 1]))
                throw ValidationError("allocation.grid must be strictly ascending");
        }
        if (!(allocation->budget > 0)) throw ValidationError("allocation.budget must be positive");
    }

    if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

std::vector<PoseTrace> build_cohort(const ExperimentConfig& cfg) {
    std::vector<PoseTrace> traces;
    if (cfg.cohort.kind == CohortConfig::Kind::trace_dir) {
        TraceFormatSpec format = cfg.cohort.trace_rotation == RotationConvention::quaternion_wxyz
                                     ? TraceFormatSpec::normalized()
                                     : TraceFormatSpec::euler_xyz();
        for (const auto& path : sorted_files(cfg.cohort.dir, ".csv"))
            traces.push_back(parse_trace(read_file(path), format, path.stem().string()));
        if (traces.empty()) throw ValidationError("no .csv traces found in " + cfg.cohort.dir);
        return traces;
    }

    const Vec3 center = 0.5 * (cfg.video.bounds.min + cfg.video.bounds.max);
    traces.reserve(cfg.cohort.n_users);
    for (std::size_t u = 0; u < cfg.cohort.n_users; ++u) {
        // Per-user heterogeneity: log-uniform multipliers on the motion
        // parameters plus a seeded start pose on the viewing ring.
        Rng rng(cfg.master_seed + kHeterogeneitySeedOffset + u);
        const double h = std::log1p(cfg.cohort.heterogeneity);
        const double step_scale = std::exp(rng.uniform(-h, h));
        const double turn_scale = std::exp(rng.uniform(-h, h));
        const double vol_scale = std::exp(rng.uniform(-h, h));
        const double angle = rng.uniform(0.0, 2.0 * M_PI);
        const double height = rng.uniform(-0.1, 0.1) * cfg.cohort.ring_radius_m;

        SynthParams params;
        params.seed = cfg.master_seed + u;
        params.duration_s = cfg.cohort.duration_s;
        params.rate_hz = cfg.cohort.rate_hz;
        params.step_sigma_m = cfg.cohort.step_sigma_m * step_scale;
        params.turn_sigma_deg = cfg.cohort.turn_sigma_deg * turn_scale;
        params.volatility = cfg.cohort.volatility * vol_scale;
        const Vec3 start = center + Vec3(cfg.cohort.ring_radius_m * std::cos(angle),
                                         cfg.cohort.ring_radius_m * std::sin(angle), height);
        params.start = Pose(start, look_at(start, center));
        traces.push_back(synth_trace(params, user_name(u)));
    }
    return traces;
}

std::vector<PointCloudFrame> build_video(const ExperimentConfig& cfg) {
    std::vector<PointCloudFrame> video;
    if (cfg.video.kind == VideoConfig::Kind::ply_dir) {
        const auto files = sorted_files(cfg.video.dir, ".ply");
        if (files.empty()) throw ValidationError("no .ply frames found in " + cfg.video.dir);
        int index = 0;
        for (const auto& path : files) video.push_back(frame_from_ply(read_file(path), index++));
        return video;
    }
    const std::uint64_t base_seed = cfg.video.seed.value_or(cfg.master_seed + kVideoSeedOffset);
    video.reserve(cfg.video.n_frames);
    for (std::size_t j = 0; j < cfg.video.n_frames; ++j) {
        FrameSynthParams params;
        params.seed = base_seed + j;
        params.n_points = cfg.video.n_points;
        params.bounds = cfg.video.bounds;
        params.frame_index = static_cast<int>(j);
        video.push_back(synth_frame(params));
    }
    return video;
}

TileGrid video_grid(const ExperimentConfig& cfg, const std::vector<PointCloudFrame>& video) {
    Aabb bounds = cfg.video.bounds;
    if (cfg.video.kind == VideoConfig::Kind::ply_dir) {
        if (video.empty()) throw ParameterError("cannot derive grid bounds from an empty video");
        bounds.min = bounds.max = video.front().points.front();
        for (const auto& frame : video)
            for (const auto& p : frame.points) {
                bounds.min = bounds.min.cwiseMin(p);
                bounds.max = bounds.max.cwiseMax(p);
            }
        // Degenerate axes (flat clouds) still need min < max.
        for (int a = 0; a < 3; ++a)
            if (!(bounds.min[a] < bounds.max[a])) bounds.max[a] = bounds.min[a] + 1e-6;
    }
    return TileGrid::create(bounds, cfg.delivery.grid.nx, cfg.delivery.grid.ny,
                            cfg.delivery.grid.nz);
}

namespace {

Dataset dataset_from_table(const SampleTable& samples) {
    Dataset ds;
    ds.provenance = Provenance::raw;
    for (const auto& row : samples.rows) ds.rows.push_back({row.user_id, row.frequency_hz, row.mean_vchr});
    return ds;
}

struct FittedModels {
    std::map<std::string, QoEModel> per_user;
    std::optional<QoEModel> agnostic;
    std::vector<std::string> warnings;
    std::map<std::string, Dataset> slices;
};

FittedModels fit_from_dataset(const Dataset& cleaned) {
    FittedModels out;
    out.slices = slice_by_user(cleaned);
    for (const auto& [user, slice] : out.slices) {
        try {
            out.per_user.emplace(user, fit_qoe(slice, user));
        } catch (const RankError& e) {
            out.warnings.push_back("fit skipped for user " + user + ": " + e.what());
        }
    }
    try {
        out.agnostic = fit_agnostic(cleaned);
    } catch (const RankError& e) {
        out.warnings.push_back(std::string("agnostic fit skipped: ") + e.what());
    }
    return out;
}

}  // namespace

ModelingResult fit_models(const SampleTable& samples) {
    const Dataset cleaned = clean(dataset_from_table(samples), CleanRules{});
    FittedModels fitted = fit_from_dataset(cleaned);
    ModelingResult result;
    for (auto& [user, model] : fitted.per_user) result.per_user.push_back(model);
    result.agnostic = std::move(fitted.agnostic);
    result.warnings = std::move(fitted.warnings);
    return result;
}

std::vector<SelectionScoreRow> selection_curve(const SampleTable& samples,
                                               const ModelingResult& models,
                                               const SelectionSweepConfig& cfg,
                                               std::uint64_t master_seed) {
    if (!models.agnostic) throw StateError("selection curve needs the agnostic model");
    const Dataset cleaned = clean(dataset_from_table(samples), CleanRules{});
    const auto slices = slice_by_user(cleaned);

    std::map<std::string, QoEModel> per_user;
    for (const auto& model : models.per_user) {
        if (!model.user_id) throw StateError("per-user model without a user id");
        per_user.emplace(*model.user_id, model);
    }
    for (const auto& [user, slice] : slices)
        if (!per_user.count(user))
            throw StateError("selection curve needs a per-user model for every user; missing " +
                             user);

    std::map<std::string, double> errors;
    for (const auto& [user, slice] : slices)
        errors.emplace(user, modeling_error(*models.agnostic, slice).rmse);

    std::vector<std::size_t> ks = cfg.ks;
    if (ks.empty())
        for (std::size_t k = 0; k <= slices.size(); ++k) ks.push_back(k);

    std::vector<SelectionScoreRow> rows;
    for (const std::size_t k : ks) {
        const auto min_err =
            select_users(errors, k, SelectionStrategy::min_modeling_error);
        rows.push_back({k, SelectionStrategy::min_modeling_error, std::nullopt,
                        average_error(assign_models(min_err, per_user, *models.agnostic), slices)});
        for (std::size_t s = 0; s < cfg.random_seed_count; ++s) {
            const std::uint64_t seed = master_seed + kSelectionSeedOffset + s;
            const auto random_sel = select_users(errors, k, SelectionStrategy::random, seed);
            rows.push_back({k, SelectionStrategy::random, seed,
                            average_error(assign_models(random_sel, per_user, *models.agnostic),
                                          slices)});
        }
    }
    return rows;
}

std::vector<Table> fig4a_table(const SampleTable& samples, const ModelingResult& models) {
    if (!models.agnostic) throw StateError("fig4a table needs the agnostic model");
    std::map<std::string, const QoEModel*> per_user;
    for (const auto& model : models.per_user) per_user.emplace(model.user_id.value(), &model);

    csv::Writer w("user_id,frequency_hz,observed_vchr,per_user_model_vchr,agnostic_model_vchr");
    for (const auto& row : samples.rows) {
        const auto it = per_user.find(row.user_id);
        w.row({row.user_id, csv::format_double(row.frequency_hz), csv::format_double(row.mean_vchr),
               it == per_user.end() ? ""
                                    : csv::format_double(predict_qoe(*it->second, row.frequency_hz)),
               csv::format_double(predict_qoe(*models.agnostic, row.frequency_hz))});
    }
    return {Table{"fig4a_curves.csv", w.take()}};
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (const char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

RunReport emit_report(const std::vector<Table>& tables, const std::filesystem::path& output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + output_dir.string());

    RunReport report;
    for (const auto& table : tables) {
        const auto path = output_dir / table.filename;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(table.content.data(), static_cast<std::streamsize>(table.content.size()));
        out.close();
        if (!out) throw IoError("failed writing " + path.string());
        report.manifest.push_back(
            {table.filename, table.content.size(), fnv1a64_hex(table.content)});
    }
    std::sort(report.manifest.begin(), report.manifest.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.file < b.file; });

    // Manifest last: its presence certifies every listed file landed intact.
    csv::Writer w("file,bytes,fnv1a64");
    for (const auto& entry : report.manifest)
        w.row({entry.file, std::to_string(entry.bytes), entry.digest});
    const auto manifest_path = output_dir / "manifest.csv";
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + manifest_path.string());
    const std::string content = w.take();
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw IoError("failed writing " + manifest_path.string());
    return report;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

namespace {

class StageClock {
public:
    explicit StageClock(RunReport& report) : report_(report) {}

    template <typename F>
    auto run(const std::string& stage, F&& fn) {
        const auto start = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                fn();
                record(stage, start);
            } else {
                auto result = fn();
                record(stage, start);
                return result;
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error("stage " + stage + ": " + e.what());
        }
    }

private:
    void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
        const auto end = std::chrono::steady_clock::now();
        report_.timings.push_back(
            {stage, std::chrono::duration<double>(end - start).count()});
    }

    RunReport& report_;
};

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunReport report;
    StageClock clock(report);

    const auto traces = clock.run("traces", [&] { return build_cohort(cfg); });
    const auto video = clock.run("video", [&] { return build_video(cfg); });

    DeliveryConfig delivery = cfg.delivery;
    delivery.grid = video_grid(cfg, video);

    const SampleTable samples = clock.run("sweep", [&] {
        return sweep(traces, video, delivery, cfg.frequencies, cfg.threads);
    });

    // The data path runs through the two-tier store: every sample lands in
    // the global tier and dual-writes into the user's UDT.
    TwoTierStore store{UdtSchema::default_mar()};
    clock.run("ingest", [&] {
        for (const auto& trace : traces) store.establish_udt(trace.user_id, UdtSchema::default_mar());
        std::size_t seq = 0;
        for (const auto& row : samples.rows) {
            UdtRecord record;
            record.user_id = row.user_id;
            record.timestamp = static_cast<double>(seq);
            record.values.emplace("device_category", std::string("mar_headset"));
            record.values.emplace("user_id", row.user_id);
            record.values.emplace("collection_frequency", row.frequency_hz);
            record.values.emplace("mean_vchr", row.mean_vchr);
            record.values.emplace("timestamp", static_cast<double>(seq));
            store.ingest(record);
            ++seq;
        }
    });

    const Dataset cleaned = clock.run("prepare", [&] {
        return clean(prepare(store, "collection_frequency", "mean_vchr"), CleanRules{});
    });

    FittedModels fitted = clock.run("fit", [&] { return fit_from_dataset(cleaned); });
    for (const auto& warning : fitted.warnings) report.warnings.push_back(warning);

    std::vector<Table> tables;
    tables.push_back({"samples.csv", sample_table_to_csv(samples)});

    std::vector<QoEModel> all_models;
    if (fitted.agnostic) all_models.push_back(*fitted.agnostic);
    for (const auto& [user, model] : fitted.per_user) all_models.push_back(model);
    if (!all_models.empty()) tables.push_back({"models.csv", models_to_csv(all_models)});

    ModelingResult modeling;
    modeling.agnostic = fitted.agnostic;
    for (const auto& [user, model] : fitted.per_user) modeling.per_user.push_back(model);

    if (fitted.agnostic) {
        clock.run("fig4a", [&] {
            for (auto& table : fig4a_table(samples, modeling)) tables.push_back(std::move(table));
        });
    } else {
        report.warnings.push_back("fig4a skipped: no agnostic model");
    }

    const bool models_complete =
        fitted.agnostic && fitted.per_user.size() == fitted.slices.size();
    if (models_complete) {
        clock.run("select", [&] {
            const auto rows =
                selection_curve(samples, modeling, cfg.selection, cfg.master_seed);
            tables.push_back({"fig4b_curve.csv", selection_scores_to_csv(rows)});
        });
    } else {
        report.warnings.push_back("selection curve skipped: incomplete models");
    }

    if (cfg.allocation) {
        if (models_complete) {
            clock.run("allocate", [&] {
                std::map<std::string, double> errors;
                for (const auto& [user, slice] : fitted.slices)
                    errors.emplace(user, modeling_error(*fitted.agnostic, slice).rmse);
                const auto all = select_users(errors, errors.size(),
                                              SelectionStrategy::min_modeling_error);
                const auto assignment = assign_models(all, fitted.per_user, *fitted.agnostic);
                const auto allocation =
                    allocate_frequencies(assignment, cfg.allocation->grid, cfg.allocation->budget);
                tables.push_back({"allocation.csv", allocation_to_csv(allocation)});
            });
        } else {
            report.warnings.push_back("allocation skipped: incomplete models");
        }
    }

    const RunReport emitted = clock.run("emit", [&] { return emit_report(tables, cfg.output_dir); });
    report.manifest = emitted.manifest;
    return report;
}

// ---------------------------------------------------------------------------
// Directory lock
// ---------------------------------------------------------------------------

DirLock::DirLock(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());
    const auto lock_path = dir / ".lock";
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + lock_path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw StateError("output directory " + dir.string() +
                         " is in use by another process");
    }
}

DirLock::~DirLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

}  // namespace udtwin
