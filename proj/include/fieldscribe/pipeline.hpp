#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "fieldscribe/clustering.hpp"
#include "fieldscribe/error.hpp"
#include "fieldscribe/gateway.hpp"
#include "fieldscribe/metrics.hpp"
#include "fieldscribe/prompts.hpp"
#include "fieldscribe/report.hpp"
#include "fieldscribe/session.hpp"
#include "fieldscribe/tuning.hpp"

namespace fieldscribe::pipeline {

struct ReportSettings {
    std::vector<report::Format> formats = {report::Format::Markdown, report::Format::Html, report::Format::Latex};
    bool embed_assets = true;
    bool allow_tiles = false;
    std::string tile_url;  // used only with allow_tiles
};

struct PipelineConfig {
    gateway::GatewayConfig gateway;
    double sampling_rate_hz = session::kDefaultSamplingRateHz;
    session::TimestampUs clip_length_us = session::kDefaultClipLengthUs;
    std::optional<clustering::ClusterParams> cluster = clustering::ClusterParams{};  // nullopt: tune first
    tuning::SplitSpec split;
    std::optional<tuning::GridSpec> grid;  // nullopt: defaults over the text space
    std::uint64_t seed = 42;
    ReportSettings report;
    bool anonymize = true;
    prompts::ExtractionMode prompt_mode = prompts::ExtractionMode::Heuristic;
    unsigned parallelism = 4;

    const std::string& embed_space() const { return gateway.text_embed_model; }
    tuning::GridSpec effective_grid() const;

    // Every key is optional; unknown keys and wrong types are SchemaViolation.
    static PipelineConfig from_json(const nlohmann::json& doc);
    static PipelineConfig load(const std::filesystem::path& file);
    nlohmann::json to_json() const;
};

inline constexpr const char* kGroundTruthFile = "ground_truth.json";
inline constexpr const char* kDescriptionsFile = "descriptions.jsonl";
inline constexpr const char* kEmbeddingsFile = "embeddings.json";
inline constexpr const char* kClustersFile = "clusters.json";
inline constexpr const char* kLogFile = "pipeline.log";

// In-process mock (answering from the session's mock_gateway.json) or HTTP.
std::shared_ptr<gateway::GatewayClient> make_client(const PipelineConfig& config, const session::SessionManifest& session,
                                                    bool mock);

// Per-stage timings, one line per stage.
class StageLog {
public:
    void record(const std::string& stage, std::chrono::steady_clock::duration elapsed, const std::string& detail);
    std::string text() const;
    void write(const std::filesystem::path& file) const;

private:
    std::vector<std::string> lines_;
};

// Runs `body`, rethrowing failures with the stage name in front.
template <typename Fn>
auto stage(StageLog& log, const std::string& name, Fn&& body);

std::vector<session::SceneDescription> describe(const session::SessionManifest& session, gateway::GatewayClient& client,
                                                unsigned parallelism);

std::vector<clustering::EmbeddingVector> embed(const std::vector<session::SceneDescription>& descriptions,
                                               gateway::GatewayClient& client, const std::string& space);

// Seeded representative per cluster, then its best-matching sampled frame.
std::vector<clustering::ClusterSummary> choose_representatives(const session::SessionManifest& session,
                                                               const std::vector<session::SceneDescription>& descriptions,
                                                               const clustering::Partition& partition,
                                                               gateway::GatewayClient& client, std::uint64_t seed);

// Noun prompts from each cluster's representative description. A description
// with no nouns left gets an empty prompt list.
std::map<int, std::vector<std::string>> extract_prompts(const std::vector<session::SceneDescription>& descriptions,
                                                        const std::vector<clustering::ClusterSummary>& summaries,
                                                        const PipelineConfig& config, gateway::GatewayClient& client);

// Detection, segmentation and (unless disabled) anonymization on each representative frame.
std::map<int, report::ClusterEvidence> gather_evidence(const session::SessionManifest& session,
                                                       const std::vector<clustering::ClusterSummary>& summaries,
                                                       const std::map<int, std::vector<std::string>>& prompts,
                                                       gateway::GatewayClient& client, const PipelineConfig& config);

struct ClusterRecord {
    std::string session_id;
    std::string space;
    clustering::ClusterParams params;
    std::uint64_t seed = 0;
    clustering::Partition partition;
    std::vector<clustering::ClusterSummary> summaries;
    std::map<int, std::vector<std::string>> prompts;
};

nlohmann::json clusters_json(const ClusterRecord& record);
// Accepts a full clusters.json or a bare {"labels": [...]}.
ClusterRecord load_clusters(const std::filesystem::path& file);
void save_json(const nlohmann::json& doc, const std::filesystem::path& file);

nlohmann::json embeddings_json(const std::vector<clustering::EmbeddingVector>& vectors);
std::vector<clustering::EmbeddingVector> load_embeddings(const std::filesystem::path& file);

// params is null for a bare {"labels": [...]} record, which carries none.
nlohmann::json metrics_json(const metrics::Scores& scores, const clustering::Partition& truth,
                            const clustering::Partition& pred, const std::string& domain, const ClusterRecord& record);

// Restricts a partition to `indices`, relabeled canonically.
clustering::Partition restrict(const clustering::Partition& p, const std::vector<std::size_t>& indices);

// One session's inputs to tuning.
struct LabeledSession {
    session::SessionManifest manifest;
    std::vector<session::SceneDescription> descriptions;
    std::map<std::string, std::vector<clustering::EmbeddingVector>> embeddings;  // by space
    metrics::GroundTruthLabeling truth;
};

// Splits per domain and scores the grid on the tuning part. One unit per
// domain; session labels are kept apart so equal ids never merge across sessions.
struct TuneOutcome {
    tuning::SplitResult split;
    tuning::GridResult grid;
};
TuneOutcome tune(const std::vector<LabeledSession>& sessions, const tuning::GridSpec& grid, const tuning::SplitSpec& split,
                 unsigned parallelism);

using ClientFactory =
    std::function<std::shared_ptr<gateway::GatewayClient>(const session::SessionManifest&)>;

// Loads a session together with descriptions, embeddings in every grid space and ground truth.
LabeledSession prepare_labeled(const std::filesystem::path& session_dir, const PipelineConfig& config,
                               const tuning::GridSpec& grid, const ClientFactory& clients, StageLog& log);

// Stage artifacts under `out`. With `reuse`, existing upstream files are read
// back instead of recomputed.
class Workspace {
public:
    Workspace(std::filesystem::path session_dir, std::filesystem::path out, PipelineConfig config,
              ClientFactory clients, bool reuse);

    const session::SessionManifest& manifest();
    const std::vector<session::SceneDescription>& descriptions();
    const std::vector<clustering::EmbeddingVector>& embeddings();
    const ClusterRecord& clusters();
    std::vector<std::filesystem::path> report();

    const PipelineConfig& config() const { return config_; }
    StageLog& log() { return log_; }
    void write_log();

private:
    gateway::GatewayClient& client();
    clustering::ClusterParams resolve_params();

    std::filesystem::path session_dir_;
    std::filesystem::path out_;
    PipelineConfig config_;
    ClientFactory clients_;
    bool reuse_;
    StageLog log_;

    std::optional<session::SessionManifest> manifest_;
    std::shared_ptr<gateway::GatewayClient> client_;
    std::optional<std::vector<session::SceneDescription>> descriptions_;
    std::optional<std::vector<clustering::EmbeddingVector>> embeddings_;
    std::optional<ClusterRecord> clusters_;
    std::optional<tuning::GridResult> tuned_;
    std::optional<tuning::SplitResult> split_;
};

// ---------------------------------------------------------------------------

template <typename Fn>
auto stage(StageLog& log, const std::string& name, Fn&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            log.record(name, std::chrono::steady_clock::now() - start, "ok");
        } else {
            auto result = body();
            log.record(name, std::chrono::steady_clock::now() - start, "ok");
            return result;
        }
    } catch (const Error& e) {
        log.record(name, std::chrono::steady_clock::now() - start, std::string("failed: ") + e.what());
        throw Error(e.code(), "stage " + name + ": " + e.detail());
    }
}

}  // namespace fieldscribe::pipeline
