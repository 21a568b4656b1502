#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "udtwin/csv.hpp"
#include "udtwin/errors.hpp"
#include "udtwin/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace udtwin;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* config = cmd->add_option("--config", opts.config_path, "experiment config file");
    if (config_required) config->required();
    cmd->add_option("--seed", opts.seed, "master seed override");
    cmd->add_option("--out", opts.out, "output directory override");
    cmd->add_option("--threads", opts.threads, "worker thread count override");
}

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_file(opts.config_path);
    } catch (const IoError& e) {
        // An unreadable config is a validation problem, not a runtime one.
        throw ValidationError(e.what());
    }
    if (opts.seed) cfg.master_seed = *opts.seed;
    if (!opts.out.empty()) cfg.output_dir = opts.out;
    if (opts.threads) cfg.threads = *opts.threads;
    cfg.validate();
    return cfg;
}

std::string read_file_or_throw(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

void print_report(const RunReport& report) {
    for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
    for (const auto& timing : report.timings)
        std::fprintf(stderr, "stage %-8s %8.3f s\n", timing.stage.c_str(), timing.seconds);
    for (const auto& entry : report.manifest)
        std::cout << entry.file << " " << entry.bytes << " bytes fnv1a64=" << entry.digest << "\n";
}

int cmd_synth_traces(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    DirLock lock(cfg.output_dir);
    const auto traces = build_cohort(cfg);
    const fs::path dir = fs::path(cfg.output_dir) / "traces";
    fs::create_directories(dir);
    for (const auto& trace : traces)
        write_file(dir / (trace.user_id + ".csv"), trace_to_csv(trace));
    std::cout << traces.size() << " traces written to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_simulate(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    DirLock lock(cfg.output_dir);
    const auto traces = build_cohort(cfg);
    const auto video = build_video(cfg);
    DeliveryConfig delivery = cfg.delivery;
    delivery.grid = video_grid(cfg, video);
    const SampleTable samples = sweep(traces, video, delivery, cfg.frequencies, cfg.threads);
    const RunReport report = emit_report({{"samples.csv", sample_table_to_csv(samples)}},
                                         cfg.output_dir);
    print_report(report);
    return kExitOk;
}

int cmd_fit(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    DirLock lock(cfg.output_dir);
    const SampleTable samples =
        sample_table_from_csv(read_file_or_throw(fs::path(cfg.output_dir) / "samples.csv"));
    const ModelingResult models = fit_models(samples);
    for (const auto& warning : models.warnings) std::cerr << "warning: " << warning << "\n";

    std::vector<Table> tables;
    std::vector<QoEModel> all;
    if (models.agnostic) all.push_back(*models.agnostic);
    for (const auto& model : models.per_user) all.push_back(model);
    if (all.empty()) {
        std::cerr << "warning: no model could be fitted (need >= 4 distinct frequencies)\n";
        return kExitOk;
    }
    tables.push_back({"models.csv", models_to_csv(all)});
    if (models.agnostic)
        for (auto& table : fig4a_table(samples, models)) tables.push_back(std::move(table));
    print_report(emit_report(tables, cfg.output_dir));
    return kExitOk;
}

ModelingResult read_models(const fs::path& out_dir) {
    const auto models = models_from_csv(read_file_or_throw(out_dir / "models.csv"));
    ModelingResult result;
    for (const auto& model : models) {
        if (model.agnostic())
            result.agnostic = model;
        else
            result.per_user.push_back(model);
    }
    return result;
}

int cmd_select(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    DirLock lock(cfg.output_dir);
    const fs::path out_dir(cfg.output_dir);
    const SampleTable samples =
        sample_table_from_csv(read_file_or_throw(out_dir / "samples.csv"));
    const ModelingResult models = read_models(out_dir);
    const auto rows = selection_curve(samples, models, cfg.selection, cfg.master_seed);
    print_report(emit_report({{"fig4b_curve.csv", selection_scores_to_csv(rows)}}, out_dir));
    return kExitOk;
}

int cmd_allocate(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    if (!cfg.allocation)
        throw ValidationError("allocate needs 'allocation.grid' and 'allocation.budget'");
    DirLock lock(cfg.output_dir);
    const ModelingResult models = read_models(cfg.output_dir);
    if (models.per_user.empty()) throw ValidationError("models.csv holds no per-user models");
    ModelAssignment assignment;
    for (const auto& model : models.per_user) assignment.by_user.emplace(*model.user_id, model);
    const Allocation allocation =
        allocate_frequencies(assignment, cfg.allocation->grid, cfg.allocation->budget);
    print_report(emit_report({{"allocation.csv", allocation_to_csv(allocation)}}, cfg.output_dir));
    return kExitOk;
}

int cmd_run(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    DirLock lock(cfg.output_dir);
    print_report(run_experiment(cfg));
    return kExitOk;
}

int cmd_report(const CommonOpts& opts) {
    fs::path out_dir;
    if (!opts.out.empty()) {
        out_dir = opts.out;
    } else if (!opts.config_path.empty()) {
        out_dir = ExperimentConfig::from_file(opts.config_path).output_dir;
    } else {
        throw ValidationError("report needs --out or --config");
    }
    const auto manifest = read_file_or_throw(out_dir / "manifest.csv");
    const auto lines = csv::split_lines(manifest);
    if (lines.empty() || lines[0] != "file,bytes,fnv1a64") throw ParseError("bad manifest header");
    bool all_ok = true;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_fields(lines[li]);
        if (f.size() != 3) throw ParseError("expected 3 columns", li + 1);
        const std::string file(f[0]);
        std::string status = "ok";
        try {
            const std::string content = read_file_or_throw(out_dir / file);
            if (content.size() != csv::parse_size(f[1], li + 1) ||
                fnv1a64_hex(content) != f[2]) {
                status = "MISMATCH";
                all_ok = false;
            }
        } catch (const IoError&) {
            status = "MISSING";
            all_ok = false;
        }
        std::cout << file << " " << status << "\n";
    }
    return all_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"user-centric MAR delivery experiments driven by per-user digital twins"};
    app.require_subcommand(1);

    CommonOpts opts;
    struct Entry {
        CLI::App* cmd;
        int (*fn)(const CommonOpts&);
    };
    std::vector<Entry> entries;
    auto sub = [&](const char* name, const char* desc, int (*fn)(const CommonOpts&),
                   bool config_required = true) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        add_common(cmd, opts, config_required);
        entries.push_back({cmd, fn});
    };

    sub("synth-traces", "synthesize the cohort pose traces", cmd_synth_traces);
    sub("simulate", "run the delivery sweep and emit samples.csv", cmd_simulate);
    sub("fit", "fit QoE models from samples.csv", cmd_fit);
    sub("select", "score UDT-establishment strategies (fig4b_curve.csv)", cmd_select);
    sub("allocate", "allocate collection frequencies under the uplink budget", cmd_allocate);
    sub("run", "full pipeline: traces -> sweep -> fit -> select -> allocate", cmd_run);
    sub("report", "verify an output directory against its manifest", cmd_report, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitValidation;
    }

    try {
        for (const auto& entry : entries)
            if (entry.cmd->parsed()) return entry.fn(opts);
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
