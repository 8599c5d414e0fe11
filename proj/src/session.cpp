#include "fieldscribe/session.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fieldscribe/error.hpp"

namespace fieldscribe::session {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Domain::name() const {
    switch (kind) {
        case DomainKind::CampusIndoor: return "CampusIndoor";
        case DomainKind::CampusOutdoor: return "CampusOutdoor";
        case DomainKind::City: return "City";
        case DomainKind::Other: return other.empty() ? "Other" : other;
    }
    return "Other";
}

Domain Domain::parse(const std::string& text) {
    if (text == "CampusIndoor") return {DomainKind::CampusIndoor, {}};
    if (text == "CampusOutdoor") return {DomainKind::CampusOutdoor, {}};
    if (text == "City") return {DomainKind::City, {}};
    return {DomainKind::Other, text};
}

std::string trim(std::string_view text) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto begin = std::find_if_not(text.begin(), text.end(), is_space);
    auto end = std::find_if_not(text.rbegin(), text.rend(), is_space).base();
    if (begin >= end) return {};
    return std::string(begin, end);
}

std::string format_iso8601(TimestampUs t) {
    auto seconds = static_cast<std::time_t>(t / 1'000'000);
    auto micros = t % 1'000'000;
    if (micros < 0) {
        micros += 1'000'000;
        seconds -= 1;
    }
    std::tm tm{};
    gmtime_r(&seconds, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<long long>(micros));
    return buf;
}

namespace {

// Routes violations either to an exception (first one wins) or to a list.
class Violations {
public:
    explicit Violations(std::vector<std::string>* sink) : sink_(sink) {}

    void report(Errc code, const std::string& detail) {
        if (!sink_) throw Error(code, detail);
        sink_->push_back(std::string(errc_name(code)) + ": " + detail);
    }

    bool collecting() const { return sink_ != nullptr; }

private:
    std::vector<std::string>* sink_;
};

const json* require(const json& obj, const char* key, json::value_t type, const std::string& where,
                    Violations& v) {
    auto it = obj.find(key);
    const std::string field = where.empty() ? key : where + "." + key;
    if (it == obj.end()) {
        v.report(Errc::SchemaViolation, field + " missing");
        return nullptr;
    }
    const bool ok = type == json::value_t::number_float ? it->is_number()
                    : type == json::value_t::number_integer ? it->is_number_integer()
                                                            : it->type() == type;
    if (!ok) {
        v.report(Errc::SchemaViolation, field + " has wrong type");
        return nullptr;
    }
    return &*it;
}

std::optional<double> optional_number(const json& obj, const char* key, const std::string& where,
                                      Violations& v) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) {
        v.report(Errc::SchemaViolation, where + "." + key + " has wrong type");
        return std::nullopt;
    }
    return it->get<double>();
}

SessionManifest parse_manifest(const fs::path& dir, const LoadOptions& options,
                               std::vector<std::string>* sink) {
    Violations v(sink);
    SessionManifest m;
    m.root = fs::absolute(dir).lexically_normal();

    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::is_regular_file(manifest_path)) {
        // Nothing else can be checked without the manifest.
        Violations(nullptr).report(Errc::MissingManifest, manifest_path.string());
    }
    std::ifstream in(manifest_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        Violations(nullptr).report(Errc::SchemaViolation, std::string("manifest.json: ") + e.what());
    }
    if (!doc.is_object()) {
        Violations(nullptr).report(Errc::SchemaViolation, "manifest.json is not an object");
    }

    if (auto* id = require(doc, "session_id", json::value_t::string, "", v)) {
        m.session_id = id->get<std::string>();
        if (m.session_id.empty()) v.report(Errc::SchemaViolation, "session_id is empty");
    }
    if (auto* domain = require(doc, "domain", json::value_t::string, "", v)) {
        m.domain = Domain::parse(domain->get<std::string>());
    }
    if (auto* rec = require(doc, "recorded_at", json::value_t::number_integer, "", v)) {
        m.recorded_at = rec->get<TimestampUs>();
    }

    if (auto* clips = require(doc, "clips", json::value_t::array, "", v)) {
        for (std::size_t i = 0; i < clips->size(); ++i) {
            const json& jc = (*clips)[i];
            const std::string where = "clips[" + std::to_string(i) + "]";
            if (!jc.is_object()) {
                v.report(Errc::SchemaViolation, where + " is not an object");
                continue;
            }
            Clip clip;
            auto* idx = require(jc, "clip_index", json::value_t::number_integer, where, v);
            auto* start = require(jc, "start_us", json::value_t::number_integer, where, v);
            auto* end = require(jc, "end_us", json::value_t::number_integer, where, v);
            auto* frames = require(jc, "frames", json::value_t::array, where, v);
            if (!idx || !start || !end || !frames) continue;
            clip.clip_index = idx->get<std::int64_t>();
            clip.start_time = start->get<TimestampUs>();
            clip.end_time = end->get<TimestampUs>();
            if (clip.clip_index < 0) v.report(Errc::SchemaViolation, where + ".clip_index is negative");
            if (clip.end_time <= clip.start_time) {
                v.report(Errc::SchemaViolation, where + " ends before it starts");
            } else if (options.clip_length_us > 0 && clip.duration() != options.clip_length_us) {
                v.report(Errc::SchemaViolation,
                         where + " length " + std::to_string(clip.duration()) + " us, expected " +
                             std::to_string(options.clip_length_us));
            }
            for (std::size_t f = 0; f < frames->size(); ++f) {
                const json& jf = (*frames)[f];
                if (!jf.is_string()) {
                    v.report(Errc::SchemaViolation, where + ".frames[" + std::to_string(f) + "] is not a string");
                    continue;
                }
                clip.frame_refs.push_back(jf.get<std::string>());
            }
            if (clip.frame_refs.empty()) {
                v.report(Errc::SchemaViolation, where + ".frames is empty");
            }
            if (!m.clips.empty()) {
                const Clip& prev = m.clips.back();
                if (clip.start_time < prev.end_time || clip.clip_index <= prev.clip_index) {
                    v.report(Errc::SchemaViolation, where + " is out of order or overlaps its predecessor");
                }
            }
            m.clips.push_back(std::move(clip));
        }
    }

    if (auto* track = require(doc, "track", json::value_t::array, "", v)) {
        for (std::size_t i = 0; i < track->size(); ++i) {
            const json& jp = (*track)[i];
            const std::string where = "track[" + std::to_string(i) + "]";
            if (!jp.is_object()) {
                v.report(Errc::SchemaViolation, where + " is not an object");
                continue;
            }
            auto* t = require(jp, "t_us", json::value_t::number_integer, where, v);
            auto* lat = require(jp, "lat", json::value_t::number_float, where, v);
            auto* lon = require(jp, "lon", json::value_t::number_float, where, v);
            if (!t || !lat || !lon) continue;
            GeoPose pose;
            pose.timestamp = t->get<TimestampUs>();
            pose.latitude = lat->get<double>();
            pose.longitude = lon->get<double>();
            pose.altitude = optional_number(jp, "alt", where, v);
            pose.heading = optional_number(jp, "heading", where, v);
            if (!(pose.latitude >= -90.0 && pose.latitude <= 90.0)) {
                v.report(Errc::SchemaViolation, where + ".lat out of range");
            }
            if (!(pose.longitude >= -180.0 && pose.longitude <= 180.0)) {
                v.report(Errc::SchemaViolation, where + ".lon out of range");
            }
            if (!m.track.empty() && pose.timestamp <= m.track.back().timestamp) {
                v.report(Errc::UnsortedTrack, where + " is not after its predecessor");
            }
            m.track.push_back(pose);
        }
    }

    if (options.check_frames) {
        for (const Clip& clip : m.clips) {
            for (const std::string& ref : clip.frame_refs) {
                if (!fs::is_regular_file(dir / ref)) v.report(Errc::MissingFrame, (dir / ref).string());
            }
        }
    }

    for (Clip& clip : m.clips) {
        if (!clip.frame_refs.empty()) clip = sample_frames(clip, options.sampling_rate_hz);
    }
    return m;
}

}  // namespace

SessionManifest load_session(const fs::path& dir, const LoadOptions& options) {
    return parse_manifest(dir, options, nullptr);
}

std::vector<std::string> validate_session(const fs::path& dir, const LoadOptions& options) {
    std::vector<std::string> violations;
    try {
        parse_manifest(dir, options, &violations);
    } catch (const Error& e) {
        violations.push_back(e.what());
    }
    return violations;
}

void save_session(const SessionManifest& manifest, const fs::path& dir) {
    json doc;
    doc["session_id"] = manifest.session_id;
    doc["domain"] = manifest.domain.name();
    doc["recorded_at"] = manifest.recorded_at;
    json clips = json::array();
    for (const Clip& clip : manifest.clips) {
        clips.push_back({{"clip_index", clip.clip_index},
                         {"start_us", clip.start_time},
                         {"end_us", clip.end_time},
                         {"frames", clip.frame_refs}});
    }
    doc["clips"] = std::move(clips);
    json track = json::array();
    for (const GeoPose& p : manifest.track) {
        json jp = {{"t_us", p.timestamp}, {"lat", p.latitude}, {"lon", p.longitude}};
        if (p.altitude) jp["alt"] = *p.altitude;
        if (p.heading) jp["heading"] = *p.heading;
        track.push_back(std::move(jp));
    }
    doc["track"] = std::move(track);

    fs::create_directories(dir);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(Errc::IoError, (dir / "manifest.json").string());
    out << doc.dump(2) << '\n';
}

Clip sample_frames(const Clip& clip, double rate_hz) {
    if (!(rate_hz > 0.0)) throw Error(Errc::Precondition, "sampling rate must be positive");
    if (clip.frame_refs.empty()) {
        throw Error(Errc::EmptyClip, "clip " + std::to_string(clip.clip_index) + " has no frames");
    }
    Clip out = clip;
    out.sampled_frame_refs.clear();
    const auto n = static_cast<std::int64_t>(clip.frame_refs.size());
    const double duration_s = static_cast<double>(clip.duration()) / 1e6;

    if (n == 1 || duration_s <= 0.0 || rate_hz * duration_s >= static_cast<double>(n)) {
        out.sampled_frame_refs = clip.frame_refs;
        return out;
    }
    // Frame i sits at start + i * duration / n; pick the frame nearest each grid point k / rate.
    const double frames_per_second = static_cast<double>(n) / duration_s;
    std::int64_t last = -1;
    for (std::int64_t k = 0; static_cast<double>(k) / rate_hz < duration_s; ++k) {
        const double position = static_cast<double>(k) / rate_hz * frames_per_second;
        const auto index = std::clamp<std::int64_t>(std::llround(position), 0, n - 1);
        if (index != last) {
            out.sampled_frame_refs.push_back(clip.frame_refs[static_cast<std::size_t>(index)]);
            last = index;
        }
    }
    return out;
}

GeoPose interpolate_pose(const std::vector<GeoPose>& track, TimestampUs t) {
    if (track.empty()) throw Error(Errc::EmptyTrack, "cannot interpolate on an empty track");
    if (t <= track.front().timestamp) {
        GeoPose p = track.front();
        p.timestamp = t;
        return p;
    }
    if (t >= track.back().timestamp) {
        GeoPose p = track.back();
        p.timestamp = t;
        return p;
    }
    auto upper = std::lower_bound(track.begin(), track.end(), t,
                                  [](const GeoPose& p, TimestampUs value) { return p.timestamp < value; });
    if (upper->timestamp == t) return *upper;
    const GeoPose& a = *(upper - 1);
    const GeoPose& b = *upper;
    const double f = static_cast<double>(t - a.timestamp) / static_cast<double>(b.timestamp - a.timestamp);

    GeoPose p;
    p.timestamp = t;
    p.latitude = a.latitude + (b.latitude - a.latitude) * f;
    p.longitude = a.longitude + (b.longitude - a.longitude) * f;
    if (a.altitude && b.altitude) p.altitude = *a.altitude + (*b.altitude - *a.altitude) * f;
    if (a.heading && b.heading) {
        // shortest signed arc from a to b, in (-180, 180]
        double delta = std::fmod(*b.heading - *a.heading, 360.0);
        if (delta > 180.0) delta -= 360.0;
        if (delta <= -180.0) delta += 360.0;
        double h = std::fmod(*a.heading + delta * f, 360.0);
        if (h < 0.0) h += 360.0;
        p.heading = h;
    }
    return p;
}

GeoPose description_pose(const SessionManifest& manifest, const Clip& clip) {
    return interpolate_pose(manifest.track, clip.midpoint());
}

std::vector<SceneDescription> load_descriptions(const fs::path& file, const SessionManifest& manifest) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::IoError, "cannot read " + file.string());

    std::vector<SceneDescription> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = file.filename().string() + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw Error(Errc::SchemaViolation, where + " is not valid JSON");
        }
        if (!j.is_object() || !j.contains("clip_index") || !j["clip_index"].is_number_integer() ||
            !j.contains("text") || !j["text"].is_string()) {
            throw Error(Errc::SchemaViolation, where + " needs integer clip_index and string text");
        }
        SceneDescription d;
        d.clip_index = j["clip_index"].get<std::int64_t>();
        d.text = trim(j["text"].get<std::string>());
        if (d.text.empty()) throw Error(Errc::SchemaViolation, where + " has empty text");
        if (j.contains("generated_at_us")) {
            if (!j["generated_at_us"].is_number_integer()) {
                throw Error(Errc::SchemaViolation, where + ".generated_at_us must be an integer");
            }
            d.generated_at = j["generated_at_us"].get<TimestampUs>();
        }
        d.source = DescriptionSource::Precomputed;
        out.push_back(std::move(d));
    }

    std::sort(out.begin(), out.end(),
              [](const SceneDescription& a, const SceneDescription& b) { return a.clip_index < b.clip_index; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].clip_index == out[i - 1].clip_index) {
            throw Error(Errc::SchemaViolation,
                        "duplicate description for clip " + std::to_string(out[i].clip_index));
        }
    }
    for (SceneDescription& d : out) {
        auto clip = std::find_if(manifest.clips.begin(), manifest.clips.end(),
                                 [&](const Clip& c) { return c.clip_index == d.clip_index; });
        if (clip == manifest.clips.end()) {
            throw Error(Errc::SchemaViolation, "description for unknown clip " + std::to_string(d.clip_index));
        }
        if (!manifest.track.empty()) d.pose = description_pose(manifest, *clip);
    }
    return out;
}

void save_descriptions(const std::vector<SceneDescription>& descriptions, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
    for (const SceneDescription& d : descriptions) {
        json j = {{"clip_index", d.clip_index}, {"text", d.text}, {"generated_at_us", d.generated_at}};
        out << j.dump() << '\n';
    }
}

}  // namespace fieldscribe::session
