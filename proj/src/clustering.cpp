#include "fieldscribe/clustering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "fieldscribe/error.hpp"
#include "fieldscribe/rng.hpp"

namespace fieldscribe::clustering {

std::string to_string(Metric metric) { return metric == Metric::Cosine ? "cosine" : "euclidean"; }

std::string to_string(Linkage linkage) {
    switch (linkage) {
        case Linkage::Average: return "average";
        case Linkage::Complete: return "complete";
        case Linkage::Single: return "single";
    }
    return "average";
}

Metric parse_metric(const std::string& text) {
    if (text == "cosine") return Metric::Cosine;
    if (text == "euclidean") return Metric::Euclidean;
    throw Error(Errc::SchemaViolation, "unknown metric '" + text + "'");
}

Linkage parse_linkage(const std::string& text) {
    if (text == "average") return Linkage::Average;
    if (text == "complete") return Linkage::Complete;
    if (text == "single") return Linkage::Single;
    throw Error(Errc::SchemaViolation, "unknown linkage '" + text + "'");
}

void ClusterParams::validate() const {
    if (!(threshold > 0.0) || !std::isfinite(threshold)) {
        throw Error(Errc::Precondition, "cluster threshold must be positive");
    }
    if (metric == Metric::Cosine && threshold > 2.0) {
        throw Error(Errc::Precondition, "cosine distance threshold must be in (0, 2]");
    }
}

Partition Partition::canonical(std::span<const int> labels) {
    Partition p;
    p.labels.reserve(labels.size());
    std::vector<std::pair<int, int>> seen;  // raw -> canonical
    for (int raw : labels) {
        if (raw < 0) throw Error(Errc::Precondition, "cluster labels must be non-negative");
        auto it = std::find_if(seen.begin(), seen.end(), [raw](const auto& s) { return s.first == raw; });
        if (it == seen.end()) {
            seen.emplace_back(raw, static_cast<int>(seen.size()));
            p.labels.push_back(seen.back().second);
        } else {
            p.labels.push_back(it->second);
        }
    }
    p.k = static_cast<int>(seen.size());
    return p;
}

double distance(const EmbeddingVector& a, const EmbeddingVector& b, Metric metric) {
    if (a.space_id != b.space_id || a.dim() != b.dim()) {
        throw Error(Errc::SpaceMismatch, "'" + a.space_id + "'/" + std::to_string(a.dim()) + " vs '" + b.space_id +
                                             "'/" + std::to_string(b.dim()));
    }
    if (a.values == b.values) return 0.0;
    if (metric == Metric::Cosine) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.dim(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
        return std::clamp(1.0 - dot, 0.0, 2.0);
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = static_cast<double>(a.values[i]) - b.values[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

std::vector<double> distance_matrix(std::span<const EmbeddingVector> vectors, Metric metric) {
    const std::size_t n = vectors.size();
    for (const EmbeddingVector& v : vectors) {
        if (v.space_id != vectors[0].space_id || v.dim() != vectors[0].dim()) {
            throw Error(Errc::SpaceMismatch, "vectors come from different embedding spaces");
        }
    }
    std::vector<double> d(n * n, 0.0);
    const auto fill_rows = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < n; i += step) {
            for (std::size_t j = i + 1; j < n; ++j) d[i * n + j] = distance(vectors[i], vectors[j], metric);
        }
    };
    const std::size_t workers = n >= 256 ? std::max(1u, std::min(8u, std::thread::hardware_concurrency())) : 1;
    if (workers == 1) {
        fill_rows(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(fill_rows, w, workers);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) d[j * n + i] = d[i * n + j];
    }
    return d;
}

std::size_t Dendrogram::merges_within(double threshold) const {
    std::size_t count = 0;
    while (count < merges.size() && merges[count].height <= threshold) ++count;
    return count;
}

Partition Dendrogram::cut(double threshold) const {
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    const std::size_t applied = merges_within(threshold);
    for (std::size_t m = 0; m < applied; ++m) parent[find(merges[m].absorbed)] = find(merges[m].keep);
    std::vector<int> roots(n);
    for (std::size_t i = 0; i < n; ++i) roots[i] = static_cast<int>(find(i));
    return Partition::canonical(roots);
}

Dendrogram agglomerate(std::span<const double> distances, std::size_t n, Linkage linkage) {
    if (n == 0) throw Error(Errc::Empty, "cannot cluster zero vectors");
    if (distances.size() != n * n) throw Error(Errc::Precondition, "distance matrix is not n x n");

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // Single: min pairwise distance. Complete: max. Average: sum, divided on read.
    std::vector<double> state(distances.begin(), distances.end());
    std::vector<std::size_t> size(n, 1);
    std::vector<char> active(n, 1);
    std::vector<std::size_t> nn(n, n);
    std::vector<double> nn_dist(n, kInf);

    const auto link = [&](std::size_t a, std::size_t b) {
        const double v = state[a * n + b];
        return linkage == Linkage::Average ? v / static_cast<double>(size[a] * size[b]) : v;
    };
    const auto refresh = [&](std::size_t p) {
        nn[p] = n;
        nn_dist[p] = kInf;
        for (std::size_t q = p + 1; q < n; ++q) {
            if (!active[q]) continue;
            const double d = link(p, q);
            if (d < nn_dist[p]) {
                nn_dist[p] = d;
                nn[p] = q;
            }
        }
    };
    for (std::size_t p = 0; p < n; ++p) refresh(p);

    Dendrogram out;
    out.n = n;
    out.merges.reserve(n - 1);
    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t keep = n;
        double best = kInf;
        for (std::size_t p = 0; p < n; ++p) {
            if (active[p] && nn[p] < n && (keep == n || nn_dist[p] < best)) {
                best = nn_dist[p];
                keep = p;
            }
        }
        const std::size_t absorbed = nn[keep];
        out.merges.push_back({keep, absorbed, best});

        for (std::size_t r = 0; r < n; ++r) {
            if (!active[r] || r == keep || r == absorbed) continue;
            double& a = state[keep * n + r];
            const double b = state[absorbed * n + r];
            switch (linkage) {
                case Linkage::Single: a = std::min(a, b); break;
                case Linkage::Complete: a = std::max(a, b); break;
                case Linkage::Average: a = a + b; break;
            }
            state[r * n + keep] = a;
        }
        size[keep] += size[absorbed];
        active[absorbed] = 0;

        for (std::size_t r = 0; r < n; ++r) {
            if (!active[r]) continue;
            if (r == keep || nn[r] == keep || nn[r] == absorbed) {
                refresh(r);
            } else if (r < keep) {
                const double d = link(r, keep);
                if (d < nn_dist[r] || (d == nn_dist[r] && keep < nn[r])) {
                    nn_dist[r] = d;
                    nn[r] = keep;
                }
            }
        }
    }
    return out;
}

Partition cluster(std::span<const EmbeddingVector> vectors, const ClusterParams& params) {
    params.validate();
    if (vectors.empty()) throw Error(Errc::Empty, "cannot cluster zero vectors");
    const auto d = distance_matrix(vectors, params.metric);
    return agglomerate(d, vectors.size(), params.linkage).cut(params.threshold);
}

std::size_t select_representative(std::span<const std::size_t> members, std::uint64_t seed, int cluster_id) {
    if (members.empty()) throw Error(Errc::Empty, "cluster has no members");
    Pcg32 rng(seed, static_cast<std::uint64_t>(cluster_id));
    return members[rng.bounded(static_cast<std::uint32_t>(members.size()))];
}

FrameMatch best_match(const EmbeddingVector& text, std::span<const EmbeddingVector> images) {
    if (images.empty()) throw Error(Errc::Empty, "no candidate frames");
    FrameMatch best;
    best.similarity = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].space_id != text.space_id || images[i].dim() != text.dim()) {
            throw Error(Errc::SpaceMismatch, "image and text vectors differ in space");
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < text.dim(); ++j) dot += static_cast<double>(text.values[j]) * images[i].values[j];
        if (dot > best.similarity) {
            best.similarity = dot;
            best.index = i;
        }
    }
    best.similarity = std::clamp(best.similarity, -1.0, 1.0);
    return best;
}

FrameMatch best_frame(const std::string& description, std::span<const std::string> candidate_frames,
                      gateway::GatewayClient& client) {
    if (candidate_frames.empty()) throw Error(Errc::Empty, "no candidate frames");
    const std::vector<std::string> frames(candidate_frames.begin(), candidate_frames.end());
    const auto [texts, images] = client.embed_joint({description}, frames, client.config().joint_embed_model);
    FrameMatch match = best_match(texts.front(), images);
    match.frame = frames[match.index];
    return match;
}

Rgb cluster_color(int cluster_id) {
    static constexpr std::array<Rgb, 12> kPalette = {{
        {0xE6, 0x19, 0x4B}, {0x3C, 0xB4, 0x4B}, {0xFF, 0xE1, 0x19}, {0x43, 0x63, 0xD8},
        {0xF5, 0x82, 0x31}, {0x91, 0x1E, 0xB4}, {0x42, 0xD4, 0xF4}, {0xF0, 0x32, 0xE6},
        {0xBF, 0xEF, 0x45}, {0x46, 0x99, 0x90}, {0x9A, 0x63, 0x24}, {0x80, 0x00, 0x00},
    }};
    // Tone per cycle: negative darkens toward black, positive lightens toward white.
    static constexpr std::array<double, 5> kTones = {0.0, -0.35, 0.35, -0.6, 0.6};
    if (cluster_id < 0) throw Error(Errc::Precondition, "negative cluster id");
    const Rgb base = kPalette[static_cast<std::size_t>(cluster_id) % kPalette.size()];
    const double tone = kTones[(static_cast<std::size_t>(cluster_id) / kPalette.size()) % kTones.size()];
    const auto shift = [tone](std::uint8_t c) {
        const double v = tone < 0 ? c * (1.0 + tone) : c + (255 - c) * tone;
        return static_cast<std::uint8_t>(std::lround(v));
    };
    return {shift(base.r), shift(base.g), shift(base.b)};
}

std::vector<ClusterSummary> summarize(const Partition& partition, std::uint64_t seed) {
    std::vector<ClusterSummary> out(static_cast<std::size_t>(partition.k));
    for (int c = 0; c < partition.k; ++c) {
        out[c].cluster_id = c;
        out[c].color = cluster_color(c);
    }
    for (std::size_t i = 0; i < partition.labels.size(); ++i) out[partition.labels[i]].member_indices.push_back(i);
    for (ClusterSummary& s : out) s.representative_index = select_representative(s.member_indices, seed, s.cluster_id);
    return out;
}

}  // namespace fieldscribe::clustering
