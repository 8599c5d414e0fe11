#include "fixture.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdio>

#include "fieldscribe/error.hpp"
#include "fieldscribe/image.hpp"
#include "fieldscribe/metrics.hpp"
#include "fieldscribe/rng.hpp"

#ifndef FIELDSCRIBE_SOURCE_DIR
#error "FIELDSCRIBE_SOURCE_DIR must point at the source tree"
#endif

namespace fieldscribe::fixture {

namespace fs = std::filesystem;

namespace {

constexpr session::TimestampUs kClipUs = 5'000'000;
constexpr double kLat0 = 49.7500;
constexpr double kLon0 = 6.6300;
constexpr double kEastPerSecond = 0.00005;   // about 3.6 m
constexpr double kNorthPerSecond = 0.00003;  // about 3.3 m

// Drive: east for 30 s, north for 40 s (the cyclist segment), then east again.
session::GeoPose pose_at(int second) {
    session::GeoPose p;
    p.timestamp = kStartUs + static_cast<session::TimestampUs>(second) * 1'000'000;
    const int east = std::min(second, 30) + std::max(0, second - 70);
    const int north = std::clamp(second - 30, 0, 40);
    p.latitude = kLat0 + north * kNorthPerSecond;
    p.longitude = kLon0 + east * kEastPerSecond;
    p.heading = (second >= 30 && second < 70) ? 0.0 : 90.0;
    return p;
}

Rgb base_color(int label) {
    switch (label) {
        case 0: return {118, 118, 124};
        case 1: return {96, 140, 92};
        default: return {92, 112, 160};
    }
}

Image frame_image(int clip, int frame, int label) {
    Pcg32 rng(fnv1a64(frame_ref(clip, frame)), 0xf1);
    const Rgb base = base_color(label);
    Image img(kFrameSize, kFrameSize, base);
    for (int y = 0; y < kFrameSize; ++y) {
        for (int x = 0; x < kFrameSize; ++x) {
            const int shade = (x + y + frame * 3) % 24 - 12 + static_cast<int>(rng.bounded(9)) - 4;
            const auto ch = [shade](std::uint8_t c) { return static_cast<std::uint8_t>(std::clamp(c + shade, 0, 255)); };
            img.set(x, y, {ch(base.r), ch(base.g), ch(base.b)});
        }
    }
    // Skin-toned patch with fine detail where the sensitive box sits.
    for (int y = 16; y < 39; ++y) {
        for (int x = 32; x < 52; ++x) {
            const bool dark = ((x / 2) + (y / 2)) % 2 == 0;
            img.set(x, y, dark ? Rgb{196, 150, 120} : Rgb{236, 196, 168});
        }
    }
    return img;
}

}  // namespace

std::vector<int> planted_labels() {
    std::vector<int> labels;
    for (int c = 0; c < kClips; ++c) labels.push_back(c < 6 ? 0 : c < 14 ? 1 : c < 20 ? 0 : 2);
    return labels;
}

std::string group_name(int label) {
    switch (label) {
        case 0: return "street";
        case 1: return "cyclist";
        default: return "bus_stop";
    }
}

std::string frame_ref(int clip, int frame) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "frames/clip_%02d/frame_%02d.png", clip, frame);
    return buf;
}

session::SessionManifest synthetic_manifest() {
    session::SessionManifest m;
    m.session_id = kSessionId;
    m.domain = session::Domain::parse("CampusOutdoor");
    m.recorded_at = kStartUs;
    for (int c = 0; c < kClips; ++c) {
        session::Clip clip;
        clip.clip_index = c;
        clip.start_time = kStartUs + c * kClipUs;
        clip.end_time = clip.start_time + kClipUs;
        for (int f = 0; f < kFramesPerClip; ++f) clip.frame_refs.push_back(frame_ref(c, f));
        m.clips.push_back(std::move(clip));
    }
    for (int s = 0; s <= kClips * 5; ++s) m.track.push_back(pose_at(s));
    return m;
}

gateway::MockFixture synthetic_annotations() {
    gateway::MockFixture fx;
    fx.group_captions = {{"street", kStreetCaption}, {"cyclist", kCyclistCaption}, {"bus_stop", kBusStopCaption}};
    const Box face{0.5, 0.25, 0.8, 0.6};
    const std::vector<int> labels = planted_labels();
    for (int c = 0; c < kClips; ++c) {
        gateway::FrameAnnotation a;
        a.group = group_name(labels[c]);
        switch (labels[c]) {
            case 0:
                // The car's right edge runs through the face box.
                a.detections = {{"car", {0.05, 0.4, 0.6, 0.85}, 0.91},
                                {"pedestrian", {0.45, 0.2, 0.85, 0.95}, 0.84},
                                {"sidewalk", {0.0, 0.85, 1.0, 1.0}, 0.62}};
                a.sensitive = {face};
                break;
            case 1:
                a.detections = {{"cyclist", {0.3, 0.2, 0.75, 0.9}, 0.93}, {"street", {0.0, 0.7, 1.0, 1.0}, 0.71}};
                a.sensitive = {face};
                break;
            default:
                a.detections = {{"bus", {0.05, 0.3, 0.55, 0.85}, 0.88},
                                {"building", {0.5, 0.05, 0.95, 0.7}, 0.8},
                                {"flag", {0.6, 0.05, 0.72, 0.25}, 0.66}};
                a.sensitive = {{0.15, 0.7, 0.4, 0.8}};  // plate
                break;
        }
        for (int f = 0; f < kFramesPerClip; ++f) fx.frames[frame_ref(c, f)] = a;
    }
    return fx;
}

void build_synthetic_session(const fs::path& dir) {
    fs::create_directories(dir);
    const session::SessionManifest m = synthetic_manifest();
    session::save_session(m, dir);
    const std::vector<int> labels = planted_labels();
    for (int c = 0; c < kClips; ++c) {
        fs::create_directories(dir / fs::path(frame_ref(c, 0)).parent_path());
        for (int f = 0; f < kFramesPerClip; ++f) write_png(frame_image(c, f, labels[c]), dir / frame_ref(c, f));
    }
    synthetic_annotations().save(dir / gateway::kMockFixtureFile);
    metrics::GroundTruthLabeling gt;
    gt.annotator_id = "planted";
    gt.labels = clustering::Partition::canonical(labels);
    gt.instructions_version = "1";
    gt.domain = m.domain.name();
    metrics::save_ground_truth(gt, dir / "ground_truth.json");
}

fs::path bundled_session() { return fs::path(FIELDSCRIBE_SOURCE_DIR) / "tests" / "fixtures" / kSessionId; }

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("fieldscribe-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

session::SessionManifest timed_session(const std::string& id, session::Domain domain, int clips,
                                       session::TimestampUs start) {
    session::SessionManifest m;
    m.session_id = id;
    m.domain = std::move(domain);
    m.recorded_at = start;
    for (int c = 0; c < clips; ++c) {
        session::Clip clip;
        clip.clip_index = c;
        clip.start_time = start + c * kClipUs;
        clip.end_time = clip.start_time + kClipUs;
        clip.frame_refs = {"f.png"};
        m.clips.push_back(std::move(clip));
    }
    return m;
}

}  // namespace fieldscribe::fixture
