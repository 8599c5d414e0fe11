#include "fieldscribe/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "fieldscribe/error.hpp"

namespace fieldscribe::tuning {

using nlohmann::json;

void SplitSpec::validate() const {
    if (!(tuning_fraction > 0.0 && tuning_fraction < 1.0)) {
        throw Error(Errc::Precondition, "tuning_fraction must be in (0, 1)");
    }
}

std::size_t tuning_count(std::size_t n, double fraction) {
    if (n < 2) return n;
    const auto rounded = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
    return std::clamp<std::size_t>(rounded, 1, n - 1);
}

SplitResult split(std::span<const session::SessionManifest> sessions, const SplitSpec& spec) {
    spec.validate();
    struct Entry {
        session::TimestampUs start;
        DescriptionKey key;
    };
    std::map<session::Domain, std::vector<Entry>> by_domain;
    for (const auto& s : sessions) {
        auto& entries = by_domain[s.domain];
        for (const auto& clip : s.clips) entries.push_back({clip.start_time, {s.session_id, clip.clip_index}});
    }

    SplitResult out;
    for (auto& [domain, entries] : by_domain) {
        if (entries.size() < 5) {
            throw Error(Errc::InsufficientData, domain.name() + " has " + std::to_string(entries.size()) +
                                                    " descriptions, at least 5 are needed");
        }
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            return a.start != b.start ? a.start < b.start : a.key < b.key;
        });
        const std::size_t cut = tuning_count(entries.size(), spec.tuning_fraction);
        DomainSplit ds;
        ds.domain = domain;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            (i < cut ? ds.tuning : ds.evaluation).push_back(entries[i].key);
        }
        out.tuning.insert(out.tuning.end(), ds.tuning.begin(), ds.tuning.end());
        out.evaluation.insert(out.evaluation.end(), ds.evaluation.begin(), ds.evaluation.end());
        out.per_domain.push_back(std::move(ds));
    }
    return out;
}

void GridSpec::validate() const {
    if (embed_spaces.empty() || metrics.empty() || thresholds.empty() || linkages.empty()) {
        throw Error(Errc::SchemaViolation, "grid lists must all be non-empty");
    }
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > 0.0)) throw Error(Errc::SchemaViolation, "grid thresholds must be positive");
        if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
            throw Error(Errc::SchemaViolation, "grid thresholds must be strictly increasing");
        }
    }
}

GridSpec GridSpec::defaults(const std::string& space) {
    GridSpec g;
    g.embed_spaces = {space};
    g.metrics = {Metric::Cosine, Metric::Euclidean};
    g.linkages = {Linkage::Average, Linkage::Complete, Linkage::Single};
    for (int i = 1; i <= 19; ++i) g.thresholds.push_back(i / 20.0);
    return g;
}

GridSpec GridSpec::from_json(const json& doc, const std::string& default_space) {
    GridSpec g = defaults(default_space);
    if (!doc.is_object()) throw Error(Errc::SchemaViolation, "grid must be a JSON object");
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "embed_spaces") {
                g.embed_spaces = value.get<std::vector<std::string>>();
            } else if (key == "metrics") {
                g.metrics.clear();
                for (const auto& m : value) g.metrics.push_back(clustering::parse_metric(m.get<std::string>()));
            } else if (key == "linkages") {
                g.linkages.clear();
                for (const auto& l : value) g.linkages.push_back(clustering::parse_linkage(l.get<std::string>()));
            } else if (key == "thresholds") {
                g.thresholds.clear();
                if (value.is_array()) {
                    g.thresholds = value.get<std::vector<double>>();
                } else {
                    // {start, stop, step}, inclusive of stop within half a step
                    const double start = value.at("start").get<double>();
                    const double stop = value.at("stop").get<double>();
                    const double step = value.at("step").get<double>();
                    if (!(step > 0.0)) throw Error(Errc::SchemaViolation, "grid threshold step must be positive");
                    for (int i = 0; start + i * step <= stop + step / 2; ++i) g.thresholds.push_back(start + i * step);
                }
            } else {
                throw Error(Errc::SchemaViolation, "unknown grid key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw Error(Errc::SchemaViolation, std::string("grid: ") + e.what());
    }
    g.validate();
    return g;
}

json GridSpec::to_json() const {
    json j;
    j["embed_spaces"] = embed_spaces;
    j["metrics"] = json::array();
    for (Metric m : metrics) j["metrics"].push_back(clustering::to_string(m));
    j["linkages"] = json::array();
    for (Linkage l : linkages) j["linkages"].push_back(clustering::to_string(l));
    j["thresholds"] = thresholds;
    return j;
}

bool better(const TrialResult& a, const TrialResult& b) {
    if (a.ari != b.ari) return a.ari > b.ari;
    if (a.nmi != b.nmi) return a.nmi > b.nmi;
    return a.params.threshold < b.params.threshold;
}

GridResult grid_search(std::span<const EvaluationUnit> units, const GridSpec& grid, unsigned parallelism) {
    grid.validate();
    if (units.empty()) throw Error(Errc::MissingGroundTruth, "no labeled descriptions to tune on");
    std::size_t total_n = 0;
    for (const EvaluationUnit& u : units) {
        if (u.truth.labels.empty()) throw Error(Errc::MissingGroundTruth, "unit '" + u.name + "' has no ground truth");
        for (const std::string& space : grid.embed_spaces) {
            auto it = u.embeddings.find(space);
            if (it == u.embeddings.end()) {
                throw Error(Errc::Precondition, "unit '" + u.name + "' has no embeddings in space " + space);
            }
            if (it->second.size() != u.truth.size()) {
                throw Error(Errc::LengthMismatch, "unit '" + u.name + "': " + std::to_string(it->second.size()) +
                                                      " embeddings vs " + std::to_string(u.truth.size()) + " labels");
            }
        }
        total_n += u.truth.size();
    }

    const std::size_t n_metrics = grid.metrics.size();
    const std::size_t n_links = grid.linkages.size();
    const std::size_t n_thresholds = grid.thresholds.size();
    std::vector<TrialResult> trials(grid.size());

    // One task per (space, metric): the distance matrix is shared by every linkage.
    const std::size_t n_tasks = grid.embed_spaces.size() * n_metrics;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (std::size_t task = next++; task < n_tasks; task = next++) {
            try {
                const std::size_t s = task / n_metrics;
                const std::size_t m = task % n_metrics;
                const std::string& space = grid.embed_spaces[s];
                std::vector<std::vector<double>> matrices;
                for (const EvaluationUnit& u : units) {
                    matrices.push_back(clustering::distance_matrix(u.embeddings.at(space), grid.metrics[m]));
                }
                for (std::size_t l = 0; l < n_links; ++l) {
                    std::vector<clustering::Dendrogram> trees;
                    for (std::size_t ui = 0; ui < units.size(); ++ui) {
                        trees.push_back(clustering::agglomerate(matrices[ui], units[ui].truth.size(), grid.linkages[l]));
                    }
                    for (std::size_t t = 0; t < n_thresholds; ++t) {
                        TrialResult r;
                        r.params = {space, grid.metrics[m], grid.linkages[l], grid.thresholds[t]};
                        for (std::size_t ui = 0; ui < units.size(); ++ui) {
                            const auto pred = trees[ui].cut(r.params.threshold);
                            const auto scores = metrics::score(units[ui].truth, pred);
                            const double w = static_cast<double>(units[ui].truth.size()) / static_cast<double>(total_n);
                            if (units.size() == 1) {
                                r.ari = scores.ari;
                                r.nmi = scores.nmi;
                                r.fmi = scores.fmi;
                            } else {
                                r.ari += w * scores.ari;
                                r.nmi += w * scores.nmi;
                                r.fmi += w * scores.fmi;
                            }
                            r.k += pred.k;
                        }
                        trials[((s * n_metrics + m) * n_links + l) * n_thresholds + t] = std::move(r);
                    }
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(n_tasks)));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);

    GridResult out;
    out.trials = std::move(trials);
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.trials.size(); ++i) {
        if (better(out.trials[i], out.trials[best])) best = i;
    }
    out.best = out.trials[best];
    return out;
}

std::string grid_tsv(const std::vector<TrialResult>& trials) {
    std::string out = "space\tmetric\tlinkage\tthreshold\tari\tnmi\tfmi\tk\n";
    char buf[256];
    for (const TrialResult& t : trials) {
        std::snprintf(buf, sizeof buf, "\t%s\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%d\n", clustering::to_string(t.params.metric).c_str(),
                      clustering::to_string(t.params.linkage).c_str(), t.params.threshold, t.ari, t.nmi, t.fmi, t.k);
        out += t.params.space;
        out += buf;
    }
    return out;
}

void write_grid_tsv(const std::vector<TrialResult>& trials, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
    out << grid_tsv(trials);
}

}  // namespace fieldscribe::tuning
