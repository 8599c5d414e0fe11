#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fieldscribe/clustering.hpp"

namespace fieldscribe::metrics {

using clustering::Partition;

// Rows are ground-truth classes, columns predicted clusters.
struct ContingencyTable {
    std::vector<std::vector<std::int64_t>> counts;
    std::vector<std::int64_t> row_sums;
    std::vector<std::int64_t> col_sums;
    std::int64_t n = 0;
};

ContingencyTable contingency(const Partition& truth, const Partition& pred);

// Hubert-Arabie adjusted Rand index; pair sums are exact 128-bit integers.
// When the denominator vanishes: 1 if the partitions agree up to relabeling, else 0.
double ari(const Partition& truth, const Partition& pred);

// Mutual information over the arithmetic mean of the two entropies (natural log).
// Both entropies zero means both partitions are a single cluster: 1.
double nmi_arithmetic(const Partition& truth, const Partition& pred);

// TP / sqrt((TP+FP)(TP+FN)). Identical partitions give 1 (even all singletons);
// otherwise 0 when either partition has no co-clustered pair.
double fmi(const Partition& truth, const Partition& pred);

struct PairCounts {
    std::int64_t tp = 0;  // together in both
    std::int64_t fp = 0;  // together in pred only
    std::int64_t fn = 0;  // together in truth only
    std::int64_t tn = 0;  // apart in both

    friend bool operator==(const PairCounts&, const PairCounts&) = default;
};

// Brute force over all unordered pairs, O(n^2). Test oracle.
PairCounts pair_oracle(const Partition& truth, const Partition& pred);

bool same_up_to_relabeling(const Partition& a, const Partition& b);

struct GroundTruthLabeling {
    std::string annotator_id;
    Partition labels;
    std::string instructions_version;
    std::string domain;  // optional in the file
};

// ground_truth.json: {annotator_id, labels:[int], instructions_version}.
GroundTruthLabeling load_ground_truth(const std::filesystem::path& file);
void save_ground_truth(const GroundTruthLabeling& gt, const std::filesystem::path& file);

struct Scores {
    double ari = 0.0;
    double nmi = 0.0;
    double fmi = 0.0;
};

Scores score(const Partition& truth, const Partition& pred);

}  // namespace fieldscribe::metrics
