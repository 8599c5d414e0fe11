#include "fieldscribe/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fieldscribe/error.hpp"
#include "fieldscribe/pipeline.hpp"

namespace fieldscribe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    bool mock = false;
    std::string out = "out";
    std::string formats;
    bool allow_tiles = false;
    bool no_anonymize = false;
};

pipeline::PipelineConfig effective_config(const Globals& g, std::ostream& err) {
    pipeline::PipelineConfig c = g.config_file.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(g.config_file);
    if (g.seed) c.seed = *g.seed;
    if (!g.formats.empty()) c.report.formats = report::parse_formats(g.formats);
    if (g.allow_tiles) c.report.allow_tiles = true;
    if (g.no_anonymize) {
        c.anonymize = false;
        err << "warning: anonymization is off; faces and license plates will appear unredacted in report images\n";
    }
    return c;
}

pipeline::ClientFactory factory(const pipeline::PipelineConfig& config, bool mock) {
    return [config, mock](const session::SessionManifest& m) { return pipeline::make_client(config, m, mock); };
}

std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"fieldscribe: clustered scene reports from robot recording sessions"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_file, "pipeline config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "seed for representative selection");
    app.add_flag("--mock", g.mock, "answer inference requests from the session's mock_gateway.json");
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--format", g.formats, "report formats, e.g. md,html,tex");
    app.add_flag("--allow-tiles", g.allow_tiles, "let the HTML viewer load map tiles from the configured tile_url");
    app.add_flag("--no-anonymize", g.no_anonymize, "skip face and plate redaction");

    std::string session_dir;
    const auto add_stage = [&](const char* name, const char* help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("session_dir", session_dir, "session directory")->required()->check(CLI::ExistingDirectory);
        sub->fallthrough();
        return sub;
    };
    CLI::App* ingest = add_stage("ingest", "validate a session and list violations");
    CLI::App* describe = add_stage("describe", "caption every clip");
    CLI::App* embed = add_stage("embed", "embed descriptions");
    CLI::App* cluster = add_stage("cluster", "cluster descriptions and pick representatives");
    CLI::App* report = add_stage("report", "render reports from the stage outputs");
    CLI::App* run_all = add_stage("run", "run the whole pipeline");

    std::vector<std::string> tune_sessions;
    std::string grid_file;
    CLI::App* tune = app.add_subcommand("tune", "grid search clustering parameters on the tuning split");
    tune->add_option("sessions", tune_sessions, "session directories")->required()->check(CLI::ExistingDirectory);
    tune->add_option("--grid", grid_file, "grid spec (JSON)")->check(CLI::ExistingFile);
    tune->fallthrough();

    std::string clusters_file;
    std::string truth_file;
    CLI::App* evaluate = app.add_subcommand("evaluate", "score clusters against ground truth");
    evaluate->add_option("clusters", clusters_file, "clusters.json")->required();
    evaluate->add_option("ground_truth", truth_file, "ground_truth.json")->required();
    evaluate->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (ingest->parsed()) {
            const pipeline::PipelineConfig c = effective_config(g, err);
            const auto violations =
                session::validate_session(session_dir, {c.clip_length_us, c.sampling_rate_hz, true});
            if (!violations.empty()) {
                for (const auto& v : violations) out << "violation: " << v << "\n";
                return kExitDataError;
            }
            const session::SessionManifest m = session::load_session(session_dir, {c.clip_length_us, c.sampling_rate_hz, true});
            out << "ok: " << m.session_id << " (" << m.domain.name() << "), " << m.clips.size() << " clips, "
                << m.track.size() << " poses\n";
            return kExitOk;
        }

        if (tune->parsed()) {
            pipeline::PipelineConfig c = effective_config(g, err);
            tuning::GridSpec grid = c.effective_grid();
            if (!grid_file.empty()) {
                std::ifstream in(grid_file);
                json doc;
                try {
                    doc = json::parse(in);
                } catch (const json::parse_error& e) {
                    throw Error(Errc::SchemaViolation, fs::path(grid_file).filename().string() + ": " + e.what());
                }
                grid = tuning::GridSpec::from_json(doc, c.embed_space());
            }
            pipeline::StageLog log;
            std::vector<pipeline::LabeledSession> sessions;
            for (const std::string& dir : tune_sessions) {
                sessions.push_back(pipeline::prepare_labeled(dir, c, grid, factory(c, g.mock), log));
            }
            const pipeline::TuneOutcome outcome =
                pipeline::stage(log, "tune", [&] { return pipeline::tune(sessions, grid, c.split, c.parallelism); });
            fs::create_directories(g.out);
            tuning::write_grid_tsv(outcome.grid.trials, fs::path(g.out) / "grid_results.tsv");
            const tuning::TrialResult& b = outcome.grid.best;
            json best = {{"space", b.params.space},
                         {"metric", clustering::to_string(b.params.metric)},
                         {"linkage", clustering::to_string(b.params.linkage)},
                         {"threshold", b.params.threshold},
                         {"ari", b.ari},
                         {"nmi", b.nmi},
                         {"fmi", b.fmi},
                         {"k", b.k},
                         {"tuning_descriptions", outcome.split.tuning.size()},
                         {"evaluation_descriptions", outcome.split.evaluation.size()}};
            pipeline::save_json(best, fs::path(g.out) / "best_params.json");
            log.write(fs::path(g.out) / pipeline::kLogFile);
            out << "best: " << b.params.space << " " << clustering::to_string(b.params.metric) << " "
                << clustering::to_string(b.params.linkage) << " threshold " << fixed6(b.params.threshold) << " ari "
                << fixed6(b.ari) << " nmi " << fixed6(b.nmi) << " fmi " << fixed6(b.fmi) << " k " << b.k << "\n";
            out << "trials: " << outcome.grid.trials.size() << "\n";
            return kExitOk;
        }

        if (evaluate->parsed()) {
            const pipeline::ClusterRecord record = pipeline::load_clusters(clusters_file);
            if (!fs::exists(truth_file)) throw Error(Errc::MissingGroundTruth, truth_file);
            const metrics::GroundTruthLabeling gt = metrics::load_ground_truth(truth_file);
            const metrics::Scores s = metrics::score(gt.labels, record.partition);
            const json doc = pipeline::metrics_json(s, gt.labels, record.partition, gt.domain, record);
            fs::create_directories(g.out);
            pipeline::save_json(doc, fs::path(g.out) / "metrics.json");
            out << "ari " << fixed6(s.ari) << " nmi " << fixed6(s.nmi) << " fmi " << fixed6(s.fmi) << "\n";
            return kExitOk;
        }

        const pipeline::PipelineConfig c = effective_config(g, err);
        const bool fresh = run_all->parsed();
        pipeline::Workspace ws(session_dir, g.out, c, factory(c, g.mock), !fresh);
        const auto finish = [&](int code) {
            ws.write_log();
            return code;
        };
        try {
            if (describe->parsed()) {
                out << ws.descriptions().size() << " descriptions\n";
            } else if (embed->parsed()) {
                out << ws.embeddings().size() << " embeddings\n";
            } else if (cluster->parsed()) {
                out << ws.clusters().partition.k << " clusters\n";
            } else if (report->parsed() || run_all->parsed()) {
                for (const fs::path& p : ws.report()) out << "wrote " << p.generic_string() << "\n";
            }
        } catch (...) {
            finish(kExitDataError);
            throw;
        }
        return finish(kExitOk);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDataError;
    }
}

}  // namespace fieldscribe::cli
