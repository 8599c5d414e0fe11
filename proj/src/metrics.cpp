#include "fieldscribe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "fieldscribe/error.hpp"

namespace fieldscribe::metrics {

using nlohmann::json;
using Int = __int128;

namespace {

void check_lengths(const Partition& truth, const Partition& pred) {
    if (truth.size() != pred.size()) {
        throw Error(Errc::LengthMismatch,
                    std::to_string(truth.size()) + " truth labels vs " + std::to_string(pred.size()) + " predicted");
    }
}

void check_min(const Partition& p, std::size_t min_n, const char* what) {
    if (p.size() < min_n) {
        throw Error(Errc::Precondition, std::string(what) + " needs at least " + std::to_string(min_n) + " items");
    }
}

int label_count(const Partition& p) {
    int k = 0;
    for (int l : p.labels) k = std::max(k, l + 1);
    return k;
}

ContingencyTable build(const Partition& truth, const Partition& pred) {
    ContingencyTable t;
    const int rows = label_count(truth);
    const int cols = label_count(pred);
    t.counts.assign(rows, std::vector<std::int64_t>(cols, 0));
    t.row_sums.assign(rows, 0);
    t.col_sums.assign(cols, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++t.counts[truth.labels[i]][pred.labels[i]];
        ++t.row_sums[truth.labels[i]];
        ++t.col_sums[pred.labels[i]];
    }
    t.n = static_cast<std::int64_t>(truth.size());
    return t;
}

Int choose2(std::int64_t x) { return static_cast<Int>(x) * (x - 1) / 2; }

struct PairSums {
    Int together_both = 0;   // sum C(n_ij, 2)
    Int together_truth = 0;  // sum C(a_i, 2)
    Int together_pred = 0;   // sum C(b_j, 2)
    Int total = 0;           // C(n, 2)
};

PairSums pair_sums(const ContingencyTable& t) {
    PairSums s;
    for (const auto& row : t.counts) {
        for (std::int64_t c : row) s.together_both += choose2(c);
    }
    for (std::int64_t a : t.row_sums) s.together_truth += choose2(a);
    for (std::int64_t b : t.col_sums) s.together_pred += choose2(b);
    s.total = choose2(t.n);
    return s;
}

}  // namespace

bool same_up_to_relabeling(const Partition& a, const Partition& b) {
    if (a.size() != b.size()) return false;
    return Partition::canonical(a.labels).labels == Partition::canonical(b.labels).labels;
}

ContingencyTable contingency(const Partition& truth, const Partition& pred) {
    check_lengths(truth, pred);
    check_min(truth, 2, "contingency");
    return build(truth, pred);
}

double ari(const Partition& truth, const Partition& pred) {
    check_lengths(truth, pred);
    check_min(truth, 2, "ari");
    const PairSums s = pair_sums(build(truth, pred));
    // ARI scaled through by 2*C(n,2) so numerator and denominator stay integral.
    const Int numerator = 2 * s.total * s.together_both - 2 * s.together_truth * s.together_pred;
    const Int denominator = s.total * (s.together_truth + s.together_pred) - 2 * s.together_truth * s.together_pred;
    if (denominator == 0) return same_up_to_relabeling(truth, pred) ? 1.0 : 0.0;
    return static_cast<double>(static_cast<long double>(numerator) / static_cast<long double>(denominator));
}

double nmi_arithmetic(const Partition& truth, const Partition& pred) {
    check_lengths(truth, pred);
    check_min(truth, 1, "nmi");
    if (same_up_to_relabeling(truth, pred)) return 1.0;
    const ContingencyTable t = build(truth, pred);
    const auto n = static_cast<long double>(t.n);
    const auto entropy = [n](const std::vector<std::int64_t>& sums) {
        long double h = 0.0L;
        for (std::int64_t c : sums) {
            if (c > 0) h -= (c / n) * std::log(c / n);
        }
        return h;
    };
    const long double hu = entropy(t.row_sums);
    const long double hv = entropy(t.col_sums);
    if (hu + hv == 0.0L) return 1.0;
    long double mi = 0.0L;
    for (std::size_t i = 0; i < t.counts.size(); ++i) {
        for (std::size_t j = 0; j < t.col_sums.size(); ++j) {
            const std::int64_t c = t.counts[i][j];
            if (c == 0) continue;
            mi += (c / n) * std::log(n * c / (static_cast<long double>(t.row_sums[i]) * t.col_sums[j]));
        }
    }
    return std::clamp(static_cast<double>(2.0L * mi / (hu + hv)), 0.0, 1.0);
}

double fmi(const Partition& truth, const Partition& pred) {
    check_lengths(truth, pred);
    check_min(truth, 2, "fmi");
    if (same_up_to_relabeling(truth, pred)) return 1.0;
    const PairSums s = pair_sums(build(truth, pred));
    if (s.together_truth == 0 || s.together_pred == 0) return 0.0;
    const auto tp = static_cast<long double>(s.together_both);
    if (s.together_truth == s.together_pred) return static_cast<double>(tp / static_cast<long double>(s.together_truth));
    const long double denom =
        std::sqrt(static_cast<long double>(s.together_truth) * static_cast<long double>(s.together_pred));
    return std::clamp(static_cast<double>(tp / denom), 0.0, 1.0);
}

PairCounts pair_oracle(const Partition& truth, const Partition& pred) {
    check_lengths(truth, pred);
    check_min(truth, 2, "pair_oracle");
    PairCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (std::size_t j = i + 1; j < truth.size(); ++j) {
            const bool t = truth.labels[i] == truth.labels[j];
            const bool p = pred.labels[i] == pred.labels[j];
            if (t && p) {
                ++c.tp;
            } else if (p) {
                ++c.fp;
            } else if (t) {
                ++c.fn;
            } else {
                ++c.tn;
            }
        }
    }
    return c;
}

Scores score(const Partition& truth, const Partition& pred) {
    return {ari(truth, pred), nmi_arithmetic(truth, pred), fmi(truth, pred)};
}

GroundTruthLabeling load_ground_truth(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::MissingGroundTruth, file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::SchemaViolation, file.filename().string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("labels") || !doc["labels"].is_array()) {
        throw Error(Errc::SchemaViolation, file.filename().string() + ": labels must be an array");
    }
    GroundTruthLabeling gt;
    std::vector<int> raw;
    for (const json& l : doc["labels"]) {
        if (!l.is_number_integer() || l.get<long long>() < 0) {
            throw Error(Errc::SchemaViolation, file.filename().string() + ": labels must be non-negative integers");
        }
        raw.push_back(l.get<int>());
    }
    gt.labels = Partition::canonical(raw);
    const auto optional_string = [&](const char* key) -> std::string {
        if (!doc.contains(key)) return {};
        if (!doc[key].is_string()) {
            throw Error(Errc::SchemaViolation, file.filename().string() + ": " + key + " must be a string");
        }
        return doc[key].get<std::string>();
    };
    gt.annotator_id = optional_string("annotator_id");
    gt.instructions_version = optional_string("instructions_version");
    gt.domain = optional_string("domain");
    return gt;
}

void save_ground_truth(const GroundTruthLabeling& gt, const std::filesystem::path& file) {
    json doc = {{"annotator_id", gt.annotator_id},
                {"labels", gt.labels.labels},
                {"instructions_version", gt.instructions_version}};
    if (!gt.domain.empty()) doc["domain"] = gt.domain;
    std::ofstream out(file);
    if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
    out << doc.dump(2) << '\n';
}

}  // namespace fieldscribe::metrics
