// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance             run every criterion
//   acceptance <name>...   run the named criteria only
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldscribe/clustering.hpp"
#include "fieldscribe/error.hpp"
#include "fieldscribe/gateway.hpp"
#include "fieldscribe/image.hpp"
#include "fieldscribe/metrics.hpp"
#include "fieldscribe/pipeline.hpp"
#include "fieldscribe/prompts.hpp"
#include "fieldscribe/report.hpp"
#include "fieldscribe/rng.hpp"
#include "fieldscribe/session.hpp"
#include "fieldscribe/tuning.hpp"
#include "fixture.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fieldscribe;
using clustering::Partition;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

Partition random_partition(Pcg32& rng, std::size_t n, std::uint32_t k) {
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.bounded(k));
    return Partition::canonical(labels);
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fieldscribe-acceptance-" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = shell_quote(FIELDSCRIBE_CLI) + " " + args + " > " + shell_quote(log.string()) + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------
// Oracles, written independently of the contingency implementation.

struct OracleScores {
    long double ari = 0, nmi = 0, fmi = 0;
};

OracleScores oracle(const Partition& a, const Partition& b) {
    const std::size_t n = a.size();
    long double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a.labels[i] == a.labels[j];
            const bool sb = b.labels[i] == b.labels[j];
            if (sa && sb) {
                ++tp;
            } else if (sb) {
                ++fp;
            } else if (sa) {
                ++fn;
            } else {
                ++tn;
            }
        }
    }
    OracleScores s;
    const long double ari_den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
    if (ari_den == 0) {
        s.ari = a.labels == b.labels ? 1 : 0;  // both canonical
    } else {
        s.ari = 2 * (tp * tn - fn * fp) / ari_den;
    }
    // no co-clustered pair on either side means both are all singletons, hence identical
    if (tp + fp == 0 && tp + fn == 0) {
        s.fmi = 1;
    } else {
        s.fmi = (tp + fp == 0 || tp + fn == 0) ? 0 : tp / std::sqrt((tp + fp) * (tp + fn));
    }

    std::map<int, long double> pa, pb;
    std::map<std::pair<int, int>, long double> pab;
    for (std::size_t i = 0; i < n; ++i) {
        pa[a.labels[i]] += 1.0L / n;
        pb[b.labels[i]] += 1.0L / n;
        pab[{a.labels[i], b.labels[i]}] += 1.0L / n;
    }
    long double ha = 0, hb = 0, mi = 0;
    for (auto& [k, p] : pa) ha -= p * std::log(p);
    for (auto& [k, p] : pb) hb -= p * std::log(p);
    for (auto& [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    s.nmi = ha + hb == 0 ? 1 : 2 * mi / (ha + hb);
    return s;
}

// ---------------------------------------------------------------------------

Outcome metric_oracle() {
    const auto start = Clock::now();
    Pcg32 rng(20240514, 1);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.bounded(39);
        const std::uint32_t ka = 1 + rng.bounded(6);
        const std::uint32_t kb = 1 + rng.bounded(6);
        const Partition a = random_partition(rng, n, ka);
        const Partition b = random_partition(rng, n, kb);
        const metrics::Scores s = metrics::score(a, b);
        const OracleScores o = oracle(a, b);
        worst = std::max({worst, static_cast<double>(std::fabs(s.ari - o.ari)),
                          static_cast<double>(std::fabs(s.nmi - o.nmi)), static_cast<double>(std::fabs(s.fmi - o.fmi))});
    }
    const double elapsed = seconds_since(start);
    return {worst <= 1e-9 && elapsed < 5.0,
            "200 pairs, max |diff| " + num(worst, 15) + " (tol 1e-9), " + num(elapsed, 3) + " s (limit 5 s)"};
}

Outcome metric_identities() {
    Pcg32 rng(7, 2);
    std::size_t checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Partition p = random_partition(rng, 2 + rng.bounded(60), 1 + rng.bounded(8));
        const metrics::Scores s = metrics::score(p, p);
        if (s.ari != 1.0 || s.nmi != 1.0 || s.fmi != 1.0) {
            return {false, "identical partitions scored " + num(s.ari, 17) + "/" + num(s.nmi, 17) + "/" + num(s.fmi, 17)};
        }
        ++checked;
    }
    for (std::size_t n : {2u, 3u, 10u, 57u, 400u}) {
        std::vector<int> singletons(n);
        for (std::size_t i = 0; i < n; ++i) singletons[i] = static_cast<int>(i);
        const Partition one = Partition::canonical(std::vector<int>(n, 0));
        const Partition all = Partition::canonical(singletons);
        for (const auto& [t, p] : {std::pair{one, all}, std::pair{all, one}}) {
            const double ari = metrics::ari(t, p);
            const double fmi = metrics::fmi(t, p);
            if (ari != 0.0 || fmi != 0.0) {
                return {false, "one cluster vs singletons (n=" + std::to_string(n) + "): ARI " + num(ari, 17) + ", FMI " +
                                   num(fmi, 17)};
            }
        }
    }
    return {true, std::to_string(checked) + " identical pairs give exactly 1; one-vs-singletons gives exactly 0 for n in {2,3,10,57,400}"};
}

Outcome chance_level() {
    Pcg32 rng(99, 3);
    double sum = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Partition a = random_partition(rng, 500, 5);
        const Partition b = random_partition(rng, 500, 5);
        sum += std::fabs(metrics::ari(a, b));
    }
    const double mean = sum / 100;
    return {mean < 0.02, "mean |ARI| over 100 pairs (n=500, k=5) = " + num(mean) + " (limit 0.02)"};
}

std::vector<clustering::EmbeddingVector> random_embeddings(Pcg32& rng, std::size_t n) {
    const std::size_t dim = 8;
    const std::size_t centers = 1 + rng.bounded(5);
    std::vector<std::vector<double>> c(centers, std::vector<double>(dim));
    for (auto& v : c) {
        for (double& x : v) x = rng.normal();
    }
    const double spread = 0.1 + rng.uniform();
    std::vector<clustering::EmbeddingVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v = c[rng.bounded(static_cast<std::uint32_t>(centers))];
        for (double& x : v) x += spread * rng.normal();
        out.push_back(gateway::make_embedding("random", v));
    }
    return out;
}

Partition union_find_components(const std::vector<clustering::EmbeddingVector>& v, double threshold,
                                clustering::Metric metric) {
    const std::size_t n = v.size();
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    const std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = 0;
            if (metric == clustering::Metric::Cosine) {
                double dot = 0;
                for (std::size_t k = 0; k < v[i].dim(); ++k) dot += double(v[i].values[k]) * double(v[j].values[k]);
                d = std::clamp(1.0 - dot, 0.0, 2.0);
            } else {
                for (std::size_t k = 0; k < v[i].dim(); ++k) {
                    const double diff = double(v[i].values[k]) - double(v[j].values[k]);
                    d += diff * diff;
                }
                d = std::sqrt(d);
            }
            if (d <= threshold) parent[find(i)] = find(j);
        }
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(find(i));
    return Partition::canonical(labels);
}

Outcome clustering_soundness() {
    Pcg32 rng(314, 4);
    std::size_t single_checks = 0, sweeps = 0;
    for (int set = 0; set < 50; ++set) {
        const std::size_t n = 2 + rng.bounded(63);
        const auto vectors = random_embeddings(rng, n);
        for (clustering::Metric metric : {clustering::Metric::Cosine, clustering::Metric::Euclidean}) {
            for (double t = 0.05; t < 2.0; t += 0.15) {
                const Partition got = clustering::cluster(vectors, {metric, t, clustering::Linkage::Single});
                if (got != union_find_components(vectors, t, metric)) {
                    return {false, "set " + std::to_string(set) + ": single linkage differs from union-find at " +
                                       clustering::to_string(metric) + " t=" + num(t, 2)};
                }
                ++single_checks;
            }
            for (clustering::Linkage linkage :
                 {clustering::Linkage::Single, clustering::Linkage::Average, clustering::Linkage::Complete}) {
                int previous = static_cast<int>(n) + 1;
                for (int step = 1; step <= 40; ++step) {
                    const int k = clustering::cluster(vectors, {metric, 0.05 * step, linkage}).k;
                    if (k > previous) {
                        return {false, "set " + std::to_string(set) + ": k rose from " + std::to_string(previous) +
                                           " to " + std::to_string(k) + " under " + clustering::to_string(linkage)};
                    }
                    previous = k;
                }
                ++sweeps;
            }
        }
    }
    return {true, std::to_string(single_checks) + " single-linkage cuts equal union-find components; " +
                      std::to_string(sweeps) + " threshold sweeps with non-increasing k"};
}

Outcome planted_recovery() {
    const auto start = Clock::now();
    const fs::path dir = fixture::bundled_session();
    const session::SessionManifest m = session::load_session(dir);
    pipeline::PipelineConfig config;
    auto client = pipeline::make_client(config, m, true);
    const auto descriptions = pipeline::describe(m, *client, 4);
    const metrics::GroundTruthLabeling gt = metrics::load_ground_truth(dir / "ground_truth.json");

    const auto text = pipeline::embed(descriptions, *client, config.embed_space());
    const Partition by_text = clustering::cluster(text, clustering::ClusterParams{});
    const double ari_text = metrics::ari(gt.labels, by_text);

    // Noisy image-side vectors: one sampled frame per clip.
    std::vector<std::string> frames;
    for (const auto& clip : m.clips) frames.push_back(m.frame_path(clip.sampled_frame_refs.front()).string());
    const auto joint = client->embed_joint({descriptions.front().text}, frames, config.gateway.joint_embed_model);
    const Partition by_image = clustering::cluster(joint.second, clustering::ClusterParams{});
    const double ari_image = metrics::ari(gt.labels, by_image);

    const tuning::GridSpec grid = tuning::GridSpec::defaults(config.embed_space());
    tuning::EvaluationUnit whole{"whole", {{config.embed_space(), text}}, gt.labels};
    const double ari_full_grid = tuning::grid_search({&whole, 1}, grid).best.ari;

    const fs::path out = scratch("tune");
    const int code = run_cli("tune " + shell_quote(dir.string()) + " --mock --out " + shell_quote(out.string()),
                             out / "cli.log");
    double cli_best = -1;
    std::size_t rows = 0;
    if (code == 0) {
        cli_best = json::parse(slurp(out / "best_params.json")).at("ari").get<double>();
        std::istringstream tsv(slurp(out / "grid_results.tsv"));
        std::string line;
        std::getline(tsv, line);
        while (std::getline(tsv, line)) rows += !line.empty();
    }
    const std::size_t expected = grid.embed_spaces.size() * grid.metrics.size() * grid.linkages.size() * grid.thresholds.size();
    const double elapsed = seconds_since(start);
    const bool pass = ari_text == 1.0 && ari_image == 1.0 && ari_full_grid == 1.0 && code == 0 && cli_best == 1.0 &&
                      rows == expected && elapsed < 30.0;
    return {pass, "default params ARI " + num(ari_text) + " (text), " + num(ari_image) + " (noisy image); tune best ARI " +
                      num(cli_best) + " (split), " + num(ari_full_grid) + " (all clips); TSV rows " +
                      std::to_string(rows) + "/" + std::to_string(expected) + "; exit " + std::to_string(code) + "; " +
                      num(elapsed, 2) + " s (limit 30 s)"};
}

Outcome split_protocol() {
    // Recording minutes per domain, as five-second clips, spread over several sessions.
    const std::vector<std::pair<std::string, int>> domains = {{"CampusIndoor", 107}, {"CampusOutdoor", 74}, {"City", 53}};
    std::vector<session::SessionManifest> sessions;
    session::TimestampUs t = 1'700'000'000'000'000;
    for (const auto& [name, minutes] : domains) {
        int remaining = minutes * 12;
        for (int part = 0; remaining > 0; ++part) {
            const int clips = std::min(remaining, 150 + 37 * part);
            sessions.push_back(fixture::timed_session(name + "-" + std::to_string(part), session::Domain::parse(name), clips, t));
            t += static_cast<session::TimestampUs>(clips) * 5'000'000 + 3'600'000'000;
            remaining -= clips;
        }
    }
    std::vector<session::SessionManifest> shuffled = sessions;
    std::reverse(shuffled.begin(), shuffled.end());
    std::rotate(shuffled.begin(), shuffled.begin() + 2, shuffled.end());

    const tuning::SplitResult a = tuning::split(sessions, {});
    const tuning::SplitResult b = tuning::split(shuffled, {});
    if (a.tuning != b.tuning || a.evaluation != b.evaluation) return {false, "split depends on session order"};

    std::map<tuning::DescriptionKey, session::TimestampUs> start_of;
    for (const auto& s : sessions) {
        for (const auto& c : s.clips) start_of[{s.session_id, c.clip_index}] = c.start_time;
    }
    std::string detail;
    for (const tuning::DomainSplit& d : a.per_domain) {
        const std::size_t n = d.tuning.size() + d.evaluation.size();
        const double deviation = std::fabs(static_cast<double>(d.tuning.size()) - 0.2 * static_cast<double>(n));
        std::set<tuning::DescriptionKey> tun(d.tuning.begin(), d.tuning.end());
        std::set<tuning::DescriptionKey> ev(d.evaluation.begin(), d.evaluation.end());
        std::set<tuning::DescriptionKey> all = tun;
        all.insert(ev.begin(), ev.end());
        std::size_t expected_n = 0;
        for (const auto& s : sessions) {
            if (s.domain == d.domain) expected_n += s.clips.size();
        }
        session::TimestampUs last_tuning = 0, first_eval = std::numeric_limits<session::TimestampUs>::max();
        for (const auto& k : d.tuning) last_tuning = std::max(last_tuning, start_of.at(k));
        for (const auto& k : d.evaluation) first_eval = std::min(first_eval, start_of.at(k));
        if (deviation > 1.0 || tun.size() != d.tuning.size() || ev.size() != d.evaluation.size() ||
            all.size() != n || n != expected_n || last_tuning >= first_eval) {
            return {false, d.domain.name() + ": tuning " + std::to_string(d.tuning.size()) + " of " + std::to_string(n) +
                               " (deviation " + num(deviation, 2) + "), disjoint/exhaustive/chronological check failed"};
        }
        detail += d.domain.name() + " " + std::to_string(d.tuning.size()) + "/" + std::to_string(n) + " ";
    }
    return {true, detail + "(each within one clip of 20 %; disjoint, exhaustive, chronological, order-independent)"};
}

std::vector<std::string> external_references(const std::string& html) {
    std::vector<std::string> bad;
    static const std::regex attr(R"re(\b(?:src|href|action|poster|data)\s*=\s*["']?([^"'\s>]*))re", std::regex::icase);
    for (auto it = std::sregex_iterator(html.begin(), html.end(), attr); it != std::sregex_iterator(); ++it) {
        const std::string value = (*it)[1];
        if (value.rfind("data:", 0) != 0 && value.rfind('#', 0) != 0) bad.push_back(value.substr(0, 60));
    }
    static const std::regex css_url(R"re(url\(\s*["']?([^"')]*))re", std::regex::icase);
    for (auto it = std::sregex_iterator(html.begin(), html.end(), css_url); it != std::sregex_iterator(); ++it) {
        const std::string value = (*it)[1];
        if (value.rfind("data:", 0) != 0) bad.push_back(value.substr(0, 60));
    }
    for (std::size_t pos = html.find("://"); pos != std::string::npos; pos = html.find("://", pos + 3)) {
        bad.push_back(html.substr(pos >= 10 ? pos - 10 : 0, 30));
    }
    if (html.find("@import") != std::string::npos) bad.push_back("@import");
    return bad;
}

std::string find_latex_engine() {
    for (const char* engine : {"pdflatex", "lualatex", "xelatex", "tectonic"}) {
        const std::string cmd = std::string("command -v ") + engine + " > /dev/null 2>&1";
        if (std::system(cmd.c_str()) == 0) return engine;
    }
    return {};
}

Outcome end_to_end() {
    const fs::path dir = fixture::bundled_session();
    const fs::path a = scratch("run-a");
    const fs::path b = scratch("run-b");
    const std::string base = "run " + shell_quote(dir.string()) + " --mock --seed 42 --out ";
    const int code_a = run_cli(base + shell_quote(a.string()), a.parent_path() / "run-a.log");
    const int code_b = run_cli(base + shell_quote(b.string()), b.parent_path() / "run-b.log");
    if (code_a != 0 || code_b != 0) {
        return {false, "run exited " + std::to_string(code_a) + "/" + std::to_string(code_b) + ": " +
                           slurp(a.parent_path() / "run-a.log")};
    }

    std::vector<std::string> parts;
    bool pass = true;
    for (const fs::path rel : {fs::path("report/report.md"), fs::path("report/map.geojson"), fs::path("clusters.json")}) {
        const std::string x = slurp(a / rel);
        const bool same = !x.empty() && x == slurp(b / rel);
        pass = pass && same;
        parts.push_back(rel.filename().string() + (same ? " identical" : " DIFFERS"));
    }

    const std::string html = slurp(a / "report/report.html");
    const std::size_t n_desc = session::load_descriptions(a / "descriptions.jsonl", session::load_session(dir)).size();
    static const std::regex payload_re(R"re(<script type="application/json" id="fieldscribe-payload">([\s\S]*?)</script>)re");
    std::smatch match;
    std::size_t features = 0;
    if (std::regex_search(html, match, payload_re)) {
        features = json::parse(match[1].str()).at("geojson").at("features").size();
    }
    const bool one_per = features == n_desc && n_desc > 0;
    pass = pass && one_per;
    parts.push_back("HTML features " + std::to_string(features) + "/" + std::to_string(n_desc));
    const auto refs = external_references(html);
    pass = pass && refs.empty();
    parts.push_back("non-data refs " + std::to_string(refs.size()) + (refs.empty() ? "" : " (" + refs.front() + ")"));

    const std::string engine = find_latex_engine();
    if (engine.empty()) {
        pass = false;
        parts.push_back("tex compile NOT VERIFIED: no LaTeX engine (pdflatex/lualatex/xelatex/tectonic) on PATH");
    } else {
        const fs::path report_dir = a / "report";
        const std::string cmd = engine == "tectonic"
                                    ? "cd " + shell_quote(report_dir.string()) + " && tectonic report.tex > tex.log 2>&1"
                                    : "cd " + shell_quote(report_dir.string()) + " && " + engine +
                                          " -interaction=nonstopmode -halt-on-error -no-shell-escape report.tex > tex.log 2>&1";
        const bool ok = std::system(cmd.c_str()) == 0 && fs::exists(report_dir / "report.pdf");
        pass = pass && ok;
        parts.push_back(std::string("tex ") + (ok ? "compiles" : "FAILS") + " under " + engine);
    }
    std::string detail;
    for (const auto& p : parts) detail += (detail.empty() ? "" : "; ") + p;
    return {pass, detail};
}

Outcome anonymization_precedence() {
    const fs::path dir = fixture::bundled_session();
    const session::SessionManifest m = session::load_session(dir);
    pipeline::PipelineConfig config;
    auto client = pipeline::make_client(config, m, true);
    const std::string frame = m.frame_path(fixture::frame_ref(0, 0)).string();

    auto detections = client->detect(frame, {"car", "pedestrian", "sidewalk"});
    std::vector<Box> boxes;
    for (const auto& d : detections) boxes.push_back(d.box);
    const auto masks = client->segment(frame, boxes);
    for (std::size_t i = 0; i < masks.size(); ++i) detections[i].mask = masks[i];
    const std::vector<Box> redactions = client->anonymize(frame);
    if (redactions.empty() || detections.empty()) return {false, "fixture frame lacks redaction or detection boxes"};

    const Image original = read_png(frame);
    const Rgb color{0xE6, 0x19, 0x4B};
    const Image out = report::compose_overlay(original, detections, redactions, color);
    const PixelRect r = to_pixels_covering(redactions.front(), original.width(), original.height());

    // Some detection stroke must cross the region for the check to mean anything.
    bool crosses = false;
    for (const auto& d : detections) {
        const PixelRect b = to_pixels(d.box, original.width(), original.height());
        for (int y = b.y0; y < b.y1; ++y) crosses = crosses || r.contains(b.x0, y) || r.contains(b.x1 - 1, y);
        for (int x = b.x0; x < b.x1; ++x) crosses = crosses || r.contains(x, b.y0) || r.contains(x, b.y1 - 1);
    }

    std::size_t blocks = 0;
    for (int by = r.y0; by < r.y1; by += 16) {
        for (int bx = r.x0; bx < r.x1; bx += 16) {
            const int x1 = std::min(bx + 16, r.x1), y1 = std::min(by + 16, r.y1);
            long sum[3] = {0, 0, 0}, count = 0;
            for (int y = by; y < y1; ++y) {
                for (int x = bx; x < x1; ++x) {
                    const Rgb c = original.at(x, y);
                    sum[0] += c.r;
                    sum[1] += c.g;
                    sum[2] += c.b;
                    ++count;
                }
            }
            const Rgb expected{static_cast<std::uint8_t>((sum[0] + count / 2) / count),
                               static_cast<std::uint8_t>((sum[1] + count / 2) / count),
                               static_cast<std::uint8_t>((sum[2] + count / 2) / count)};
            for (int y = by; y < y1; ++y) {
                for (int x = bx; x < x1; ++x) {
                    if (out.at(x, y) != expected) {
                        return {false, "pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                           ") inside the redaction is not its block average"};
                    }
                }
            }
            ++blocks;
        }
    }
    // Strokes outside the region are drawn.
    std::size_t stroked = 0;
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) stroked += !r.contains(x, y) && out.at(x, y) == color;
    }
    const bool pass = crosses && blocks > 1 && stroked > 0;
    return {pass, std::to_string(blocks) + " constant 16x16 blocks in a " + std::to_string(r.width()) + "x" +
                      std::to_string(r.height()) + " region crossed by detection strokes; " + std::to_string(stroked) +
                      " stroke pixels outside"};
}

Outcome noun_regression() {
    const prompts::NounExtractor extractor;
    const auto first =
        extractor.extract("A street with cars parked on the side and a few pedestrians walking on the sidewalk.").nouns;
    const auto second = extractor.extract("A cyclist is riding down a city street.").nouns;
    const std::vector<std::string> want_first = {"street", "car", "side", "pedestrian", "sidewalk"};
    const std::vector<std::string> want_second = {"cyclist", "city", "street"};
    const auto show = [](const std::vector<std::string>& v) {
        std::string s = "{";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
        return s + "}";
    };
    return {first == want_first && second == want_second, show(first) + " and " + show(second)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric-oracle", metric_oracle},
        {"metric-identities", metric_identities},
        {"chance-level", chance_level},
        {"clustering-soundness", clustering_soundness},
        {"planted-recovery", planted_recovery},
        {"split-protocol", split_protocol},
        {"end-to-end", end_to_end},
        {"anonymization-precedence", anonymization_precedence},
        {"noun-regression", noun_regression},
    };
    std::set<std::string> wanted(argv + 1, argv + argc);
    for (const auto& w : wanted) {
        if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == w; })) {
            std::cerr << "unknown criterion " << w << "\n";
            return 2;
        }
    }
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        if (!wanted.empty() && !wanted.contains(name)) continue;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw ") + e.what()};
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
        failures += !o.pass;
    }
    fs::remove_all(fs::temp_directory_path() / ("fieldscribe-acceptance-" + std::to_string(::getpid())));
    return failures == 0 ? 0 : 1;
}
