#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fieldscribe/gateway.hpp"
#include "fieldscribe/image.hpp"

namespace fieldscribe::clustering {

using gateway::EmbeddingVector;

enum class Metric { Cosine, Euclidean };
enum class Linkage { Average, Complete, Single };

std::string to_string(Metric metric);
std::string to_string(Linkage linkage);
Metric parse_metric(const std::string& text);
Linkage parse_linkage(const std::string& text);

struct ClusterParams {
    Metric metric = Metric::Cosine;
    double threshold = 0.5;
    Linkage linkage = Linkage::Average;

    // threshold > 0, and at most 2 for cosine distance.
    void validate() const;
};

// Cluster labels index-aligned with the input, renumbered by first occurrence.
struct Partition {
    std::vector<int> labels;
    int k = 0;

    static Partition canonical(std::span<const int> labels);
    std::size_t size() const { return labels.size(); }

    friend bool operator==(const Partition&, const Partition&) = default;
};

double distance(const EmbeddingVector& a, const EmbeddingVector& b, Metric metric);

// Row-major n x n matrix; throws SpaceMismatch when vectors disagree on space or dim.
std::vector<double> distance_matrix(std::span<const EmbeddingVector> vectors, Metric metric);

// One agglomeration step: `keep` absorbs `absorbed`. Both are identified by
// the smallest member index of their cluster, so keep < absorbed.
struct Merge {
    std::size_t keep = 0;
    std::size_t absorbed = 0;
    double height = 0.0;
};

// Complete merge history. Cutting at t replays merges while height <= t and
// stops at the first that exceeds it, which is the threshold-stopped
// agglomeration exactly (no monotonicity assumption).
struct Dendrogram {
    std::size_t n = 0;
    std::vector<Merge> merges;

    std::size_t merges_within(double threshold) const;
    Partition cut(double threshold) const;
};

// Merges the pair with minimal linkage distance, ties broken by the
// lexicographically smallest (keep, absorbed) pair. `distances` is n x n.
Dendrogram agglomerate(std::span<const double> distances, std::size_t n, Linkage linkage);

Partition cluster(std::span<const EmbeddingVector> vectors, const ClusterParams& params);

// Uniform pick under PCG32 seeded from (seed, cluster_id).
std::size_t select_representative(std::span<const std::size_t> members, std::uint64_t seed, int cluster_id);

struct FrameMatch {
    std::size_t index = 0;
    std::string frame;
    double similarity = 0.0;
};

// Argmax cosine similarity between the description and each candidate in the
// joint text/image space; ties go to the earliest candidate.
FrameMatch best_frame(const std::string& description, std::span<const std::string> candidate_frames,
                      gateway::GatewayClient& client);
FrameMatch best_match(const EmbeddingVector& text, std::span<const EmbeddingVector> images);

// Fixed 12-entry palette; ids past 12 cycle with a tone shift. Distinct for the first 60 ids.
Rgb cluster_color(int cluster_id);

struct ClusterSummary {
    int cluster_id = 0;
    std::vector<std::size_t> member_indices;
    std::size_t representative_index = 0;
    std::string representative_frame;  // frame ref relative to the session root
    double match_score = 0.0;
    Rgb color;
};

// Members and seeded representatives per cluster; frames are filled in later.
std::vector<ClusterSummary> summarize(const Partition& partition, std::uint64_t seed);

}  // namespace fieldscribe::clustering
