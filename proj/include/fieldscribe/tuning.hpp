#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldscribe/clustering.hpp"
#include "fieldscribe/metrics.hpp"
#include "fieldscribe/session.hpp"

namespace fieldscribe::tuning {

using clustering::Linkage;
using clustering::Metric;

struct SplitSpec {
    double tuning_fraction = 0.2;

    void validate() const;
};

// One description, addressed by its session and clip.
struct DescriptionKey {
    std::string session_id;
    std::int64_t clip_index = 0;

    friend auto operator<=>(const DescriptionKey&, const DescriptionKey&) = default;
};

struct DomainSplit {
    session::Domain domain;
    std::vector<DescriptionKey> tuning;
    std::vector<DescriptionKey> evaluation;
};

struct SplitResult {
    std::vector<DescriptionKey> tuning;
    std::vector<DescriptionKey> evaluation;
    std::vector<DomainSplit> per_domain;  // ordered by domain
};

// Round half up, kept inside [1, n - 1].
std::size_t tuning_count(std::size_t n, double fraction);

// Per domain, the chronologically first round(fraction * n_d) descriptions
// (one per clip) go to tuning. Input order of `sessions` does not matter.
SplitResult split(std::span<const session::SessionManifest> sessions, const SplitSpec& spec);

struct GridSpec {
    std::vector<std::string> embed_spaces;
    std::vector<Metric> metrics;
    std::vector<double> thresholds;
    std::vector<Linkage> linkages;

    void validate() const;
    std::size_t size() const {
        return embed_spaces.size() * metrics.size() * thresholds.size() * linkages.size();
    }

    // 0.05 to 0.95 step 0.05, both metrics, all linkages.
    static GridSpec defaults(const std::string& space);
    static GridSpec from_json(const nlohmann::json& doc, const std::string& default_space);
    nlohmann::json to_json() const;
};

struct TrialParams {
    std::string space;
    Metric metric = Metric::Cosine;
    Linkage linkage = Linkage::Average;
    double threshold = 0.0;
};

struct TrialResult {
    TrialParams params;
    double ari = 0.0;
    double nmi = 0.0;
    double fmi = 0.0;
    int k = 0;
};

// A labeled pool the grid is scored on, for example one domain's tuning split.
struct EvaluationUnit {
    std::string name;
    std::map<std::string, std::vector<clustering::EmbeddingVector>> embeddings;  // by space
    clustering::Partition truth;
};

struct GridResult {
    TrialResult best;
    std::vector<TrialResult> trials;  // declaration order: space, metric, linkage, threshold
};

// Scores every grid cell. With several units a trial's metrics are the
// description-weighted means and k is the summed cluster count. Best is max
// ARI, then higher NMI, then lower threshold, then declaration order.
GridResult grid_search(std::span<const EvaluationUnit> units, const GridSpec& grid, unsigned parallelism = 4);

// True when `a` should be preferred over `b` (ignores declaration order).
bool better(const TrialResult& a, const TrialResult& b);

void write_grid_tsv(const std::vector<TrialResult>& trials, const std::filesystem::path& file);
std::string grid_tsv(const std::vector<TrialResult>& trials);

}  // namespace fieldscribe::tuning
