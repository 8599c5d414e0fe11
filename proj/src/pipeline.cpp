#include "fieldscribe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace fieldscribe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& where, const std::string& what) {
    throw Error(Errc::SchemaViolation, "config " + where + ": " + what);
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) schema(where, "must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
            schema(where, "unknown key '" + key + "'");
        }
    }
}

std::string get_string(const json& obj, const char* key, const std::string& where, std::string fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) schema(where + "." + key, "must be a string");
    return obj[key].get<std::string>();
}

bool get_bool(const json& obj, const char* key, const std::string& where, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) schema(where + "." + key, "must be a boolean");
    return obj[key].get<bool>();
}

double get_number(const json& obj, const char* key, const std::string& where, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) schema(where + "." + key, "must be a number");
    return obj[key].get<double>();
}

long long get_positive_int(const json& obj, const char* key, const std::string& where, long long fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer() || obj[key].get<long long>() < 1) {
        schema(where + "." + key, "must be a positive integer");
    }
    return obj[key].get<long long>();
}

template <typename Fn>
auto rethrow_as_schema(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        schema(where, e.detail());
    }
}

std::string format_ms(std::chrono::steady_clock::duration d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", std::chrono::duration<double, std::milli>(d).count());
    return buf;
}

// Evenly spaced subset of at most `cap` items, keeping the first.
std::vector<std::string> thin(const std::vector<std::string>& items, std::size_t cap) {
    if (items.size() <= cap) return items;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < cap; ++i) out.push_back(items[i * items.size() / cap]);
    return out;
}

const session::Clip& clip_for(const session::SessionManifest& s, std::int64_t clip_index) {
    for (const session::Clip& c : s.clips) {
        if (c.clip_index == clip_index) return c;
    }
    throw Error(Errc::InconsistentInputs, "no clip " + std::to_string(clip_index) + " in " + s.session_id);
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; the first failure is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mutex;
    const auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const unsigned count = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
        for (unsigned w = 1; w < count; ++w) pool.emplace_back(work);
        work();
    }
    if (failure) std::rethrow_exception(failure);
}

metrics::GroundTruthLabeling load_truth_for(const session::SessionManifest& m, std::size_t n) {
    const fs::path file = m.root / kGroundTruthFile;
    if (!fs::exists(file)) throw Error(Errc::MissingGroundTruth, "no " + std::string(kGroundTruthFile) + " in " + m.root.string());
    metrics::GroundTruthLabeling gt = metrics::load_ground_truth(file);
    if (gt.labels.size() != n) {
        throw Error(Errc::LengthMismatch, std::to_string(gt.labels.size()) + " ground-truth labels for " +
                                              std::to_string(n) + " descriptions");
    }
    return gt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

tuning::GridSpec PipelineConfig::effective_grid() const { return grid ? *grid : tuning::GridSpec::defaults(embed_space()); }

PipelineConfig PipelineConfig::from_json(const json& doc) {
    PipelineConfig c;
    only_keys(doc, "root",
              {"gateway", "sampling_rate_hz", "clip_length_s", "cluster", "split", "grid", "seed", "report", "anonymize",
               "prompt_mode", "parallelism"});

    if (doc.contains("gateway")) {
        const json& g = doc["gateway"];
        only_keys(g, "gateway", {"base_url", "timeout_ms", "max_concurrent_requests", "caption_batch_cap", "models"});
        c.gateway.base_url = get_string(g, "base_url", "gateway", c.gateway.base_url);
        c.gateway.timeout = std::chrono::milliseconds(get_positive_int(g, "timeout_ms", "gateway", c.gateway.timeout.count()));
        c.gateway.max_concurrent_requests =
            static_cast<int>(get_positive_int(g, "max_concurrent_requests", "gateway", c.gateway.max_concurrent_requests));
        c.gateway.caption_batch_cap =
            static_cast<std::size_t>(get_positive_int(g, "caption_batch_cap", "gateway", static_cast<long long>(c.gateway.caption_batch_cap)));
        if (g.contains("models")) {
            const json& m = g["models"];
            only_keys(m, "gateway.models", {"caption", "text_embed", "joint_embed", "detect", "segment", "pos"});
            c.gateway.caption_model = get_string(m, "caption", "gateway.models", c.gateway.caption_model);
            c.gateway.text_embed_model = get_string(m, "text_embed", "gateway.models", c.gateway.text_embed_model);
            c.gateway.joint_embed_model = get_string(m, "joint_embed", "gateway.models", c.gateway.joint_embed_model);
            c.gateway.detect_model = get_string(m, "detect", "gateway.models", c.gateway.detect_model);
            c.gateway.segment_model = get_string(m, "segment", "gateway.models", c.gateway.segment_model);
            c.gateway.pos_model = get_string(m, "pos", "gateway.models", c.gateway.pos_model);
        }
    }

    c.sampling_rate_hz = get_number(doc, "sampling_rate_hz", "root", c.sampling_rate_hz);
    if (!(c.sampling_rate_hz > 0.0)) schema("sampling_rate_hz", "must be positive");
    const double clip_s = get_number(doc, "clip_length_s", "root", static_cast<double>(c.clip_length_us) / 1e6);
    if (!(clip_s >= 0.0)) schema("clip_length_s", "must be non-negative");
    c.clip_length_us = std::llround(clip_s * 1e6);

    if (doc.contains("cluster")) {
        const json& cl = doc["cluster"];
        if (cl.is_string()) {
            if (cl.get<std::string>() != "auto") schema("cluster", "must be \"auto\" or an object");
            c.cluster.reset();
        } else {
            only_keys(cl, "cluster", {"metric", "linkage", "threshold"});
            clustering::ClusterParams p;
            p.metric = rethrow_as_schema("cluster.metric", [&] {
                return clustering::parse_metric(get_string(cl, "metric", "cluster", clustering::to_string(p.metric)));
            });
            p.linkage = rethrow_as_schema("cluster.linkage", [&] {
                return clustering::parse_linkage(get_string(cl, "linkage", "cluster", clustering::to_string(p.linkage)));
            });
            p.threshold = get_number(cl, "threshold", "cluster", p.threshold);
            rethrow_as_schema("cluster", [&] {
                p.validate();
                return 0;
            });
            c.cluster = p;
        }
    }

    if (doc.contains("split")) {
        only_keys(doc["split"], "split", {"tuning_fraction"});
        c.split.tuning_fraction = get_number(doc["split"], "tuning_fraction", "split", c.split.tuning_fraction);
        rethrow_as_schema("split", [&] {
            c.split.validate();
            return 0;
        });
    }

    if (doc.contains("grid")) {
        c.grid = rethrow_as_schema("grid", [&] { return tuning::GridSpec::from_json(doc["grid"], c.embed_space()); });
    }

    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) schema("seed", "must be a non-negative integer");
        c.seed = doc["seed"].get<std::uint64_t>();
    }

    if (doc.contains("report")) {
        const json& r = doc["report"];
        only_keys(r, "report", {"formats", "embed_assets", "allow_tiles", "tile_url"});
        if (r.contains("formats")) {
            const json& f = r["formats"];
            std::string csv;
            if (f.is_string()) {
                csv = f.get<std::string>();
            } else if (f.is_array()) {
                for (const json& item : f) {
                    if (!item.is_string()) schema("report.formats", "must hold strings");
                    csv += (csv.empty() ? "" : ",") + item.get<std::string>();
                }
            } else {
                schema("report.formats", "must be a string or a list");
            }
            c.report.formats = rethrow_as_schema("report.formats", [&] { return report::parse_formats(csv); });
        }
        c.report.embed_assets = get_bool(r, "embed_assets", "report", c.report.embed_assets);
        c.report.allow_tiles = get_bool(r, "allow_tiles", "report", c.report.allow_tiles);
        c.report.tile_url = get_string(r, "tile_url", "report", c.report.tile_url);
    }

    c.anonymize = get_bool(doc, "anonymize", "root", c.anonymize);
    if (doc.contains("prompt_mode")) {
        c.prompt_mode = rethrow_as_schema("prompt_mode",
                                          [&] { return prompts::parse_mode(get_string(doc, "prompt_mode", "root", "")); });
    }
    c.parallelism = static_cast<unsigned>(get_positive_int(doc, "parallelism", "root", c.parallelism));
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::IoError, "cannot read config " + file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::SchemaViolation, file.filename().string() + ": " + e.what());
    }
    return from_json(doc);
}

json PipelineConfig::to_json() const {
    json j;
    j["gateway"] = {{"base_url", gateway.base_url},
                    {"timeout_ms", gateway.timeout.count()},
                    {"max_concurrent_requests", gateway.max_concurrent_requests},
                    {"caption_batch_cap", gateway.caption_batch_cap},
                    {"models",
                     {{"caption", gateway.caption_model},
                      {"text_embed", gateway.text_embed_model},
                      {"joint_embed", gateway.joint_embed_model},
                      {"detect", gateway.detect_model},
                      {"segment", gateway.segment_model},
                      {"pos", gateway.pos_model}}}};
    j["sampling_rate_hz"] = sampling_rate_hz;
    j["clip_length_s"] = static_cast<double>(clip_length_us) / 1e6;
    if (cluster) {
        j["cluster"] = {{"metric", clustering::to_string(cluster->metric)},
                        {"linkage", clustering::to_string(cluster->linkage)},
                        {"threshold", cluster->threshold}};
    } else {
        j["cluster"] = "auto";
    }
    j["split"] = {{"tuning_fraction", split.tuning_fraction}};
    j["grid"] = effective_grid().to_json();
    j["seed"] = seed;
    json formats = json::array();
    for (report::Format f : report.formats) formats.push_back(report::extension(f));
    j["report"] = {{"formats", formats},
                   {"embed_assets", report.embed_assets},
                   {"allow_tiles", report.allow_tiles},
                   {"tile_url", report.tile_url}};
    j["anonymize"] = anonymize;
    j["prompt_mode"] = prompt_mode == prompts::ExtractionMode::Heuristic ? "heuristic" : "gateway_pos";
    j["parallelism"] = parallelism;
    return j;
}

std::shared_ptr<gateway::GatewayClient> make_client(const PipelineConfig& config, const session::SessionManifest& session,
                                                    bool mock) {
    if (mock) {
        auto backend = std::make_shared<gateway::MockBackend>(gateway::MockFixture::load(session.root));
        return std::make_shared<gateway::GatewayClient>(config.gateway, std::make_shared<gateway::MockTransport>(backend));
    }
    const gateway::GatewayConfig g = gateway::apply_env_overrides(config.gateway);
    return std::make_shared<gateway::GatewayClient>(g, std::make_shared<gateway::HttpTransport>(g.base_url, g.timeout));
}

// ---------------------------------------------------------------------------
// Stage log

void StageLog::record(const std::string& stage, std::chrono::steady_clock::duration elapsed, const std::string& detail) {
    lines_.push_back("stage=" + stage + " elapsed_ms=" + format_ms(elapsed) + " " + detail);
}

std::string StageLog::text() const {
    std::string out;
    for (const std::string& l : lines_) out += l + "\n";
    return out;
}

void StageLog::write(const fs::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
    out << text();
}

// ---------------------------------------------------------------------------
// Stages

std::vector<session::SceneDescription> describe(const session::SessionManifest& session, gateway::GatewayClient& client,
                                                unsigned parallelism) {
    if (session.clips.empty()) throw Error(Errc::EmptyClip, "session has no clips");
    std::vector<session::SceneDescription> out(session.clips.size());
    parallel_for(session.clips.size(), parallelism, [&](std::size_t i) {
        const session::Clip& clip = session.clips[i];
        const auto& refs = clip.sampled_frame_refs.empty() ? clip.frame_refs : clip.sampled_frame_refs;
        std::vector<std::string> frames;
        for (const std::string& ref : thin(refs, client.config().caption_batch_cap)) {
            frames.push_back(session.frame_path(ref).string());
        }
        session::SceneDescription d;
        d.clip_index = clip.clip_index;
        d.text = client.caption(frames);
        // The description exists once the clip has ended.
        d.generated_at = clip.end_time;
        d.source = session::DescriptionSource::Gateway;
        if (!session.track.empty()) d.pose = session::description_pose(session, clip);
        out[i] = std::move(d);
    });
    return out;
}

std::vector<clustering::EmbeddingVector> embed(const std::vector<session::SceneDescription>& descriptions,
                                               gateway::GatewayClient& client, const std::string& space) {
    if (descriptions.empty()) throw Error(Errc::Empty, "nothing to embed");
    std::vector<std::string> texts;
    for (const auto& d : descriptions) texts.push_back(d.text);
    return client.embed_texts(texts, space);
}

std::vector<clustering::ClusterSummary> choose_representatives(const session::SessionManifest& session,
                                                               const std::vector<session::SceneDescription>& descriptions,
                                                               const clustering::Partition& partition,
                                                               gateway::GatewayClient& client, std::uint64_t seed) {
    std::vector<clustering::ClusterSummary> summaries = clustering::summarize(partition, seed);
    for (clustering::ClusterSummary& s : summaries) {
        const session::SceneDescription& d = descriptions[s.representative_index];
        const session::Clip& clip = clip_for(session, d.clip_index);
        const auto& refs = clip.sampled_frame_refs.empty() ? clip.frame_refs : clip.sampled_frame_refs;
        std::vector<std::string> frames;
        for (const std::string& ref : refs) frames.push_back(session.frame_path(ref).string());
        const clustering::FrameMatch match = clustering::best_frame(d.text, frames, client);
        s.representative_frame = refs[match.index];
        s.match_score = match.similarity;
    }
    return summaries;
}

std::map<int, std::vector<std::string>> extract_prompts(const std::vector<session::SceneDescription>& descriptions,
                                                        const std::vector<clustering::ClusterSummary>& summaries,
                                                        const PipelineConfig& config, gateway::GatewayClient& client) {
    const prompts::NounExtractor extractor;
    std::map<int, std::vector<std::string>> out;
    for (const clustering::ClusterSummary& s : summaries) {
        try {
            out[s.cluster_id] = extractor.extract(descriptions[s.representative_index].text, config.prompt_mode, &client).nouns;
        } catch (const Error& e) {
            if (e.code() != Errc::EmptyPromptSet) throw;
            out[s.cluster_id] = {};
        }
    }
    return out;
}

std::map<int, report::ClusterEvidence> gather_evidence(const session::SessionManifest& session,
                                                       const std::vector<clustering::ClusterSummary>& summaries,
                                                       const std::map<int, std::vector<std::string>>& prompts,
                                                       gateway::GatewayClient& client, const PipelineConfig& config) {
    std::vector<report::ClusterEvidence> found(summaries.size());
    parallel_for(summaries.size(), config.parallelism, [&](std::size_t i) {
        const clustering::ClusterSummary& s = summaries[i];
        report::ClusterEvidence& ev = found[i];
        if (auto p = prompts.find(s.cluster_id); p != prompts.end()) ev.prompts = p->second;
        if (s.representative_frame.empty()) return;
        const std::string frame = session.frame_path(s.representative_frame).string();
        if (!ev.prompts.empty()) {
            ev.detections = client.detect(frame, ev.prompts);
            std::vector<Box> boxes;
            for (const auto& d : ev.detections) boxes.push_back(d.box);
            const std::vector<gateway::RleMask> masks = client.segment(frame, boxes);
            for (std::size_t k = 0; k < masks.size(); ++k) ev.detections[k].mask = masks[k];
        }
        if (config.anonymize) ev.redactions = client.anonymize(frame);
    });
    std::map<int, report::ClusterEvidence> out;
    for (std::size_t i = 0; i < summaries.size(); ++i) out[summaries[i].cluster_id] = std::move(found[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

json params_json(const clustering::ClusterParams& p) {
    return {{"metric", clustering::to_string(p.metric)},
            {"linkage", clustering::to_string(p.linkage)},
            {"threshold", p.threshold}};
}

}  // namespace

json clusters_json(const ClusterRecord& r) {
    json clusters = json::array();
    json representatives = json::array();
    for (const clustering::ClusterSummary& s : r.summaries) {
        representatives.push_back({{"cluster_id", s.cluster_id},
                                   {"description_index", s.representative_index},
                                   {"frame", s.representative_frame}});
        json c = {{"cluster_id", s.cluster_id},
                  {"color", s.color.hex()},
                  {"size", s.member_indices.size()},
                  {"members", s.member_indices},
                  {"representative_index", s.representative_index},
                  {"representative_frame", s.representative_frame},
                  {"match_score", s.match_score}};
        if (auto p = r.prompts.find(s.cluster_id); p != r.prompts.end()) c["prompts"] = p->second;
        clusters.push_back(std::move(c));
    }
    json params = params_json(r.params);
    params["space_id"] = r.space;
    return {{"session_id", r.session_id},
            {"space", r.space},
            {"params", params},
            {"seed", r.seed},
            {"k", r.partition.k},
            {"labels", r.partition.labels},
            {"representatives", std::move(representatives)},
            {"clusters", std::move(clusters)}};
}

ClusterRecord load_clusters(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::IoError, "cannot read " + file.string());
    const std::string name = file.filename().string();
    try {
        const json doc = json::parse(in);
        if (!doc.is_object() || !doc.contains("labels") || !doc["labels"].is_array()) {
            throw Error(Errc::SchemaViolation, name + ": labels must be an array");
        }
        std::vector<int> labels;
        for (const json& l : doc["labels"]) {
            if (!l.is_number_integer() || l.get<long long>() < 0) {
                throw Error(Errc::SchemaViolation, name + ": labels must be non-negative integers");
            }
            labels.push_back(l.get<int>());
        }
        ClusterRecord r;
        r.partition = clustering::Partition::canonical(labels);
        if (r.partition.labels != labels) throw Error(Errc::SchemaViolation, name + ": labels are not canonical");
        r.session_id = doc.value("session_id", "");
        r.space = doc.value("space", "");
        r.seed = doc.value("seed", std::uint64_t{0});
        if (doc.contains("params")) {
            const json& p = doc["params"];
            r.params.metric = clustering::parse_metric(p.at("metric").get<std::string>());
            r.params.linkage = clustering::parse_linkage(p.at("linkage").get<std::string>());
            r.params.threshold = p.at("threshold").get<double>();
        }
        for (const json& c : doc.value("clusters", json::array())) {
            clustering::ClusterSummary s;
            s.cluster_id = c.at("cluster_id").get<int>();
            s.member_indices = c.at("members").get<std::vector<std::size_t>>();
            s.representative_index = c.at("representative_index").get<std::size_t>();
            s.representative_frame = c.value("representative_frame", "");
            s.match_score = c.value("match_score", 0.0);
            s.color = clustering::cluster_color(s.cluster_id);
            if (c.contains("prompts")) r.prompts[s.cluster_id] = c["prompts"].get<std::vector<std::string>>();
            r.summaries.push_back(std::move(s));
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::SchemaViolation, name + ": " + e.what());
    }
}

void save_json(const json& doc, const fs::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
    out << doc.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
}

json embeddings_json(const std::vector<clustering::EmbeddingVector>& vectors) {
    json list = json::array();
    for (const auto& v : vectors) list.push_back(v.values);
    return {{"space", vectors.empty() ? "" : vectors.front().space_id},
            {"dim", vectors.empty() ? 0 : vectors.front().dim()},
            {"vectors", std::move(list)}};
}

std::vector<clustering::EmbeddingVector> load_embeddings(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::IoError, "cannot read " + file.string());
    try {
        const json doc = json::parse(in);
        const std::string space = doc.at("space").get<std::string>();
        std::vector<clustering::EmbeddingVector> out;
        for (const json& v : doc.at("vectors")) out.push_back({space, v.get<std::vector<float>>()});
        return out;
    } catch (const json::exception& e) {
        throw Error(Errc::SchemaViolation, file.filename().string() + ": " + e.what());
    }
}

json metrics_json(const metrics::Scores& scores, const clustering::Partition& truth, const clustering::Partition& pred,
                  const std::string& domain, const ClusterRecord& record) {
    json params = nullptr;
    if (!record.space.empty()) {
        params = params_json(record.params);
        params["space"] = record.space;
    }
    return {{"domain", domain.empty() ? json(nullptr) : json(domain)},
            {"n", truth.size()},
            {"k_true", truth.k},
            {"k_pred", pred.k},
            {"ari", scores.ari},
            {"nmi_arithmetic", scores.nmi},
            {"fmi", scores.fmi},
            {"params", std::move(params)}};
}

clustering::Partition restrict(const clustering::Partition& p, const std::vector<std::size_t>& indices) {
    std::vector<int> labels;
    for (std::size_t i : indices) labels.push_back(p.labels.at(i));
    return clustering::Partition::canonical(labels);
}

// ---------------------------------------------------------------------------
// Tuning across sessions

TuneOutcome tune(const std::vector<LabeledSession>& sessions, const tuning::GridSpec& grid,
                 const tuning::SplitSpec& split_spec, unsigned parallelism) {
    std::vector<session::SessionManifest> manifests;
    std::map<std::string, const LabeledSession*> by_id;
    for (const LabeledSession& s : sessions) {
        if (!by_id.emplace(s.manifest.session_id, &s).second) {
            throw Error(Errc::InconsistentInputs, "session " + s.manifest.session_id + " given twice");
        }
        if (s.truth.labels.size() != s.descriptions.size()) {
            throw Error(Errc::LengthMismatch, s.manifest.session_id + ": ground truth does not cover every description");
        }
        manifests.push_back(s.manifest);
    }

    TuneOutcome out;
    out.split = tuning::split(manifests, split_spec);
    std::vector<tuning::EvaluationUnit> units;
    for (const tuning::DomainSplit& ds : out.split.per_domain) {
        tuning::EvaluationUnit unit;
        unit.name = ds.domain.name();
        std::map<std::pair<std::string, int>, int> namespaced;
        std::vector<int> raw;
        for (const tuning::DescriptionKey& key : ds.tuning) {
            const LabeledSession& s = *by_id.at(key.session_id);
            auto it = std::find_if(s.descriptions.begin(), s.descriptions.end(),
                                   [&](const session::SceneDescription& d) { return d.clip_index == key.clip_index; });
            if (it == s.descriptions.end()) {
                throw Error(Errc::InconsistentInputs,
                            key.session_id + " has no description for clip " + std::to_string(key.clip_index));
            }
            const auto idx = static_cast<std::size_t>(it - s.descriptions.begin());
            for (const auto& [space, vectors] : s.embeddings) unit.embeddings[space].push_back(vectors.at(idx));
            const auto label = std::make_pair(key.session_id, s.truth.labels.labels[idx]);
            raw.push_back(namespaced.emplace(label, static_cast<int>(namespaced.size())).first->second);
        }
        unit.truth = clustering::Partition::canonical(raw);
        units.push_back(std::move(unit));
    }
    out.grid = tuning::grid_search(units, grid, parallelism);
    return out;
}

LabeledSession prepare_labeled(const fs::path& session_dir, const PipelineConfig& config, const tuning::GridSpec& grid,
                               const ClientFactory& clients, StageLog& log) {
    LabeledSession s;
    s.manifest = stage(log, "ingest", [&] {
        return session::load_session(session_dir, {config.clip_length_us, config.sampling_rate_hz, true});
    });
    auto client = clients(s.manifest);
    s.descriptions = stage(log, "describe", [&] { return describe(s.manifest, *client, config.parallelism); });
    stage(log, "embed", [&] {
        for (const std::string& space : grid.embed_spaces) s.embeddings[space] = embed(s.descriptions, *client, space);
    });
    s.truth = stage(log, "ground-truth", [&] { return load_truth_for(s.manifest, s.descriptions.size()); });
    return s;
}

// ---------------------------------------------------------------------------
// Workspace

Workspace::Workspace(fs::path session_dir, fs::path out, PipelineConfig config, ClientFactory clients, bool reuse)
    : session_dir_(std::move(session_dir)),
      out_(std::move(out)),
      config_(std::move(config)),
      clients_(std::move(clients)),
      reuse_(reuse) {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + out_.string() + ": " + ec.message());
}

const session::SessionManifest& Workspace::manifest() {
    if (!manifest_) {
        manifest_ = stage(log_, "ingest", [&] {
            return session::load_session(session_dir_, {config_.clip_length_us, config_.sampling_rate_hz, true});
        });
    }
    return *manifest_;
}

gateway::GatewayClient& Workspace::client() {
    if (!client_) client_ = clients_(manifest());
    return *client_;
}

const std::vector<session::SceneDescription>& Workspace::descriptions() {
    if (descriptions_) return *descriptions_;
    const fs::path file = out_ / kDescriptionsFile;
    if (reuse_ && fs::exists(file)) {
        descriptions_ = stage(log_, "describe", [&] { return session::load_descriptions(file, manifest()); });
    } else {
        descriptions_ = stage(log_, "describe", [&] { return describe(manifest(), client(), config_.parallelism); });
        session::save_descriptions(*descriptions_, file);
    }
    return *descriptions_;
}

const std::vector<clustering::EmbeddingVector>& Workspace::embeddings() {
    if (embeddings_) return *embeddings_;
    const fs::path file = out_ / kEmbeddingsFile;
    if (reuse_ && fs::exists(file)) {
        auto loaded = stage(log_, "embed", [&] { return load_embeddings(file); });
        if (loaded.size() == descriptions().size() && !loaded.empty() && loaded.front().space_id == config_.embed_space()) {
            embeddings_ = std::move(loaded);
            return *embeddings_;
        }
    }
    embeddings_ = stage(log_, "embed", [&] { return embed(descriptions(), client(), config_.embed_space()); });
    save_json(embeddings_json(*embeddings_), file);
    return *embeddings_;
}

clustering::ClusterParams Workspace::resolve_params() {
    if (config_.cluster) return *config_.cluster;
    const tuning::GridSpec grid = config_.effective_grid();
    LabeledSession labeled;
    labeled.manifest = manifest();
    labeled.descriptions = descriptions();
    labeled.embeddings[config_.embed_space()] = embeddings();
    stage(log_, "embed-grid", [&] {
        for (const std::string& space : grid.embed_spaces) {
            if (!labeled.embeddings.contains(space)) labeled.embeddings[space] = embed(labeled.descriptions, client(), space);
        }
    });
    labeled.truth = stage(log_, "ground-truth", [&] { return load_truth_for(labeled.manifest, labeled.descriptions.size()); });
    TuneOutcome outcome = stage(log_, "tune", [&] { return tune({labeled}, grid, config_.split, config_.parallelism); });
    tuned_ = outcome.grid;
    split_ = outcome.split;
    const tuning::TrialParams& best = outcome.grid.best.params;
    if (best.space != config_.embed_space()) {
        // Cluster in the space the tuner picked.
        config_.gateway.text_embed_model = best.space;
        embeddings_ = labeled.embeddings.at(best.space);
        save_json(embeddings_json(*embeddings_), out_ / kEmbeddingsFile);
    }
    return {best.metric, best.threshold, best.linkage};
}

const ClusterRecord& Workspace::clusters() {
    if (clusters_) return *clusters_;
    const fs::path file = out_ / kClustersFile;
    if (reuse_ && fs::exists(file)) {
        ClusterRecord r = stage(log_, "cluster", [&] { return load_clusters(file); });
        if (r.partition.size() == descriptions().size() && !r.summaries.empty()) {
            clusters_ = std::move(r);
            return *clusters_;
        }
    }
    ClusterRecord r;
    r.session_id = manifest().session_id;
    r.params = resolve_params();
    r.space = config_.embed_space();
    r.seed = config_.seed;
    r.partition = stage(log_, "cluster", [&] { return clustering::cluster(embeddings(), r.params); });
    r.summaries = stage(log_, "represent", [&] {
        return choose_representatives(manifest(), descriptions(), r.partition, client(), config_.seed);
    });
    r.prompts = stage(log_, "nouns", [&] { return extract_prompts(descriptions(), r.summaries, config_, client()); });
    save_json(clusters_json(r), file);
    clusters_ = std::move(r);
    return *clusters_;
}

std::vector<fs::path> Workspace::report() {
    const ClusterRecord& record = clusters();
    const auto& descs = descriptions();
    const auto evidence = stage(log_, "detect", [&] {
        return gather_evidence(manifest(), record.summaries, record.prompts, client(), config_);
    });

    report::ReportModel model = stage(log_, "model", [&] {
        return report::build_report_model(manifest(), descs, record.partition, record.summaries, evidence, record.params);
    });
    model.anonymized = config_.anonymize;

    const fs::path report_dir = out_ / "report";
    std::error_code ec;
    fs::create_directories(report_dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + report_dir.string());

    std::vector<fs::path> written;
    if (fs::exists(manifest().root / kGroundTruthFile)) {
        stage(log_, "evaluate", [&] {
            const metrics::GroundTruthLabeling gt = load_truth_for(manifest(), descs.size());
            const metrics::Scores all = metrics::score(gt.labels, record.partition);
            model.scores = all;
            json doc = metrics_json(all, gt.labels, record.partition, manifest().domain.name(), record);
            if (split_) {
                std::set<std::int64_t> held_out;
                for (const auto& key : split_->evaluation) held_out.insert(key.clip_index);
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < descs.size(); ++i) {
                    if (held_out.contains(descs[i].clip_index)) idx.push_back(i);
                }
                const auto truth = restrict(gt.labels, idx);
                const auto pred = restrict(record.partition, idx);
                doc["evaluation_split"] = metrics_json(metrics::score(truth, pred), truth, pred, manifest().domain.name(), record);
            }
            save_json(doc, report_dir / "metrics.json");
            written.push_back(report_dir / "metrics.json");
        });
    }
    if (tuned_) {
        tuning::write_grid_tsv(tuned_->trials, report_dir / "grid_results.tsv");
        written.push_back(report_dir / "grid_results.tsv");
    }

    stage(log_, "report", [&] {
        for (report::Format f : config_.report.formats) {
            report::RenderTarget target;
            target.format = f;
            target.output_dir = report_dir;
            target.embed_assets = config_.report.embed_assets;
            if (config_.report.allow_tiles) target.tile_url = config_.report.tile_url;
            for (const fs::path& p : report::emit(model, target)) written.push_back(p);
        }
    });
    std::sort(written.begin(), written.end());
    written.erase(std::unique(written.begin(), written.end()), written.end());
    return written;
}

void Workspace::write_log() { log_.write(out_ / kLogFile); }

}  // namespace fieldscribe::pipeline
