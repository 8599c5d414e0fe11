#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include "fieldscribe/error.hpp"
#include "fieldscribe/gateway.hpp"
#include "fieldscribe/rng.hpp"

namespace fieldscribe::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Box parse_box(const json& j) {
    if (!j.is_array() || j.size() != 4) throw Error(Errc::SchemaViolation, "box must have four numbers");
    Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!b.valid()) throw Error(Errc::SchemaViolation, "box is not normalized xyxy");
    return b;
}

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

std::vector<double> normalized(std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

std::vector<double> gaussian_direction(Pcg32& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return normalized(std::move(v));
}

struct BadRequest {
    std::string message;
};

const json& need(const json& req, const char* key, json::value_t type) {
    if (!req.is_object() || !req.contains(key)) throw BadRequest{std::string("missing '") + key + "'"};
    const json& v = req.at(key);
    if (v.type() != type) throw BadRequest{std::string("'") + key + "' has the wrong type"};
    return v;
}

std::vector<std::string> string_list(const json& req, const char* key) {
    const json& arr = need(req, key, json::value_t::array);
    std::vector<std::string> out;
    for (const json& v : arr) {
        if (!v.is_string()) throw BadRequest{std::string("'") + key + "' must hold strings"};
        out.push_back(v.get<std::string>());
    }
    return out;
}

const std::set<std::string>& function_words() {
    static const std::set<std::string> words = {
        "a", "an", "the", "and", "or", "but", "with", "on", "in", "of", "at", "to", "from", "by", "for",
        "down", "up", "into", "onto", "over", "under", "near", "behind", "is", "are", "was", "were", "be",
        "it", "its", "they", "their", "some", "few", "several", "many", "this", "that", "there", "while"};
    return words;
}

std::string pos_tag(const std::string& lower) {
    if (function_words().contains(lower)) return "X";
    if (lower.size() > 4 && (lower.ends_with("ing") || lower.ends_with("ed"))) {
        // "building" is the one nominal -ing form the fixtures use.
        return lower == "building" ? "NOUN" : "VERB";
    }
    return "NOUN";
}

}  // namespace

MockFixture MockFixture::load(const fs::path& session_dir) {
    MockFixture fx;
    fx.root = fs::absolute(session_dir).lexically_normal();
    const fs::path file = session_dir / kMockFixtureFile;
    if (!fs::exists(file)) return fx;
    std::ifstream in(file);
    json doc;
    try {
        doc = json::parse(in);
        const json groups = doc.value("groups", json::object());
        for (const auto& [group, caption] : groups.items()) {
            fx.group_captions[group] = caption.get<std::string>();
        }
        const json frames = doc.value("frames", json::object());
        for (const auto& [key, jf] : frames.items()) {
            FrameAnnotation a;
            a.group = jf.value("group", "");
            for (const json& d : jf.value("detections", json::array())) {
                a.detections.push_back({d.at("label").get<std::string>(), parse_box(d.at("box")), d.value("score", 0.9)});
            }
            for (const json& b : jf.value("sensitive", json::array())) a.sensitive.push_back(parse_box(b));
            fx.frames[key] = std::move(a);
        }
    } catch (const json::exception& e) {
        throw Error(Errc::SchemaViolation, file.string() + ": " + e.what());
    }
    return fx;
}

void MockFixture::save(const fs::path& file) const {
    json doc;
    doc["groups"] = group_captions;
    json frames_json = json::object();
    for (const auto& [key, a] : frames) {
        json jf;
        jf["group"] = a.group;
        json dets = json::array();
        for (const AuthoredDetection& d : a.detections) {
            dets.push_back({{"label", d.label}, {"box", box_json(d.box)}, {"score", d.score}});
        }
        jf["detections"] = std::move(dets);
        json sens = json::array();
        for (const Box& b : a.sensitive) sens.push_back(box_json(b));
        jf["sensitive"] = std::move(sens);
        frames_json[key] = std::move(jf);
    }
    doc["frames"] = std::move(frames_json);
    std::ofstream out(file);
    if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
    out << doc.dump(2) << '\n';
}

std::string MockFixture::key_for(const std::string& frame) const {
    const fs::path p(frame);
    if (p.is_absolute() && !root.empty()) return p.lexically_normal().lexically_relative(root).generic_string();
    return p.lexically_normal().generic_string();
}

const FrameAnnotation* MockFixture::annotation(const std::string& frame) const {
    auto it = frames.find(key_for(frame));
    return it == frames.end() ? nullptr : &it->second;
}

MockBackend::MockBackend(MockFixture fixture, std::uint64_t seed) : fixture_(std::move(fixture)), seed_(seed) {}

std::vector<double> MockBackend::text_vector(const std::string& space, const std::string& text) const {
    const std::uint64_t h = fnv1a64(text, fnv1a64("\x1f", fnv1a64(space)));
    Pcg32 rng(splitmix64(h ^ seed_), 0x7e7);
    return gaussian_direction(rng, kMockDim);
}

std::vector<double> MockBackend::image_vector(const std::string& space, const std::string& frame) const {
    const std::string key = fixture_.key_for(frame);
    const FrameAnnotation* a = fixture_.annotation(frame);
    auto caption = a ? fixture_.group_captions.find(a->group) : fixture_.group_captions.end();
    if (caption == fixture_.group_captions.end()) return text_vector(space, "frame:" + key);

    // Group centroid plus a seeded perturbation of norm at most kMockNoiseNorm.
    std::vector<double> v = text_vector(space, caption->second);
    const std::uint64_t h = fnv1a64(key, fnv1a64("\x1f" "image:", fnv1a64(space)));
    Pcg32 rng(splitmix64(h ^ seed_), 0x1a6e);
    const std::vector<double> direction = gaussian_direction(rng, kMockDim);
    const double magnitude = kMockNoiseNorm * rng.uniform();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += magnitude * direction[i];
    return normalized(std::move(v));
}

std::string MockBackend::caption_for(const std::vector<std::string>& frames) const {
    std::vector<std::pair<std::string, int>> votes;  // first-appearance order
    for (const std::string& f : frames) {
        const FrameAnnotation* a = fixture_.annotation(f);
        if (!a || a->group.empty()) continue;
        auto it = std::find_if(votes.begin(), votes.end(), [&](const auto& v) { return v.first == a->group; });
        if (it == votes.end()) {
            votes.emplace_back(a->group, 1);
        } else {
            ++it->second;
        }
    }
    if (votes.empty()) return kMockDefaultCaption;
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it) {
        if (it->second > best->second) best = it;
    }
    auto caption = fixture_.group_captions.find(best->first);
    return caption == fixture_.group_captions.end() ? kMockDefaultCaption : caption->second;
}

void MockBackend::enter() const {
    const int now = ++in_flight_;
    ++calls_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
}

void MockBackend::leave() const { --in_flight_; }

MockBackend::Reply MockBackend::handle(const std::string& endpoint, const json& request) const {
    const auto frame_file = [&](const std::string& frame) {
        fs::path p(frame);
        if (!p.is_absolute()) p = fixture_.root / p;
        if (!fs::is_regular_file(p)) throw BadRequest{"unreadable frame " + frame};
        return p;
    };

    try {
        if (endpoint == "/v1/caption") {
            const auto frames = string_list(request, "frames");
            if (frames.empty()) throw BadRequest{"no frames"};
            for (const auto& f : frames) frame_file(f);
            return {200, {{"text", caption_for(frames)}}};
        }
        if (endpoint == "/v1/embed_text") {
            const std::string space = need(request, "model", json::value_t::string).get<std::string>();
            json vectors = json::array();
            for (const auto& t : string_list(request, "texts")) vectors.push_back(text_vector(space, t));
            return {200, {{"dim", kMockDim}, {"vectors", std::move(vectors)}}};
        }
        if (endpoint == "/v1/embed_joint") {
            const std::string space = need(request, "model", json::value_t::string).get<std::string>();
            json text_vectors = json::array();
            json image_vectors = json::array();
            for (const auto& t : string_list(request, "texts")) text_vectors.push_back(text_vector(space, t));
            for (const auto& f : string_list(request, "frames")) {
                frame_file(f);
                image_vectors.push_back(image_vector(space, f));
            }
            return {200,
                    {{"dim", kMockDim}, {"text_vectors", std::move(text_vectors)}, {"image_vectors", std::move(image_vectors)}}};
        }
        if (endpoint == "/v1/detect") {
            const std::string frame = need(request, "frame", json::value_t::string).get<std::string>();
            frame_file(frame);
            const auto prompts = string_list(request, "prompts");
            const std::set<std::string> wanted(prompts.begin(), prompts.end());
            std::vector<AuthoredDetection> hits;
            if (const FrameAnnotation* a = fixture_.annotation(frame)) {
                for (const AuthoredDetection& d : a->detections) {
                    if (wanted.contains(d.label)) hits.push_back(d);
                }
            }
            std::stable_sort(hits.begin(), hits.end(),
                             [](const AuthoredDetection& a, const AuthoredDetection& b) { return a.score > b.score; });
            json dets = json::array();
            for (const auto& d : hits) dets.push_back({{"label", d.label}, {"score", d.score}, {"box", box_json(d.box)}});
            return {200, {{"detections", std::move(dets)}}};
        }
        if (endpoint == "/v1/segment") {
            const std::string frame = need(request, "frame", json::value_t::string).get<std::string>();
            const auto [w, h] = png_dimensions(frame_file(frame));
            json masks = json::array();
            for (const json& jb : need(request, "boxes", json::value_t::array)) {
                Box b;
                try {
                    b = parse_box(jb);
                } catch (const Error& e) {
                    throw BadRequest{e.what()};
                }
                const RleMask rle = rle_encode(rect_mask(w, h, to_pixels(b, w, h)));
                masks.push_back({{"rle_counts", rle.counts}});
            }
            return {200, {{"width", w}, {"height", h}, {"masks", std::move(masks)}}};
        }
        if (endpoint == "/v1/anonymize") {
            const std::string frame = need(request, "frame", json::value_t::string).get<std::string>();
            png_dimensions(frame_file(frame));
            json boxes = json::array();
            if (const FrameAnnotation* a = fixture_.annotation(frame)) {
                for (const Box& b : a->sensitive) boxes.push_back(box_json(b));
            }
            return {200, {{"boxes", std::move(boxes)}}};
        }
        if (endpoint == "/v1/pos") {
            const std::string text = need(request, "text", json::value_t::string).get<std::string>();
            json tokens = json::array();
            std::string current;
            const auto flush = [&] {
                if (current.empty()) return;
                std::string lower = current;
                std::transform(lower.begin(), lower.end(), lower.begin(),
                               [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                tokens.push_back({{"text", current}, {"tag", pos_tag(lower)}});
                current.clear();
            };
            for (char c : text) {
                if (std::isalpha(static_cast<unsigned char>(c))) {
                    current += c;
                } else {
                    flush();
                }
            }
            flush();
            return {200, {{"tokens", std::move(tokens)}}};
        }
        return {404, {{"error", "unknown endpoint " + endpoint}}};
    } catch (const BadRequest& e) {
        return {422, {{"error", e.message}}};
    } catch (const Error& e) {
        return {422, {{"error", e.what()}}};
    } catch (const json::exception& e) {
        return {422, {{"error", e.what()}}};
    }
}

json MockTransport::post(const std::string& endpoint, const json& body) {
    backend_->enter();
    struct Leave {
        const MockBackend* b;
        ~Leave() { b->leave(); }
    } leave{backend_.get()};
    MockBackend::Reply reply = backend_->handle(endpoint, body);
    if (reply.status != 200) throw GatewayStatusError(reply.status, reply.body.dump());
    return std::move(reply.body);
}

}  // namespace fieldscribe::gateway
