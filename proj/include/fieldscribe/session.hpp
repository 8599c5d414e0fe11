#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fieldscribe::session {

// Microseconds since the Unix epoch, UTC.
using TimestampUs = std::int64_t;

inline constexpr TimestampUs kDefaultClipLengthUs = 5'000'000;
inline constexpr double kDefaultSamplingRateHz = 1.0;

enum class DomainKind { CampusIndoor, CampusOutdoor, City, Other };

struct Domain {
    DomainKind kind = DomainKind::Other;
    std::string other;  // free-form tag when kind == Other

    std::string name() const;
    static Domain parse(const std::string& text);

    friend bool operator==(const Domain&, const Domain&) = default;
    friend auto operator<=>(const Domain&, const Domain&) = default;
};

struct GeoPose {
    TimestampUs timestamp = 0;
    double latitude = 0.0;
    double longitude = 0.0;
    std::optional<double> altitude;
    std::optional<double> heading;  // degrees from true north

    friend bool operator==(const GeoPose&, const GeoPose&) = default;
};

struct Clip {
    std::int64_t clip_index = 0;
    TimestampUs start_time = 0;
    TimestampUs end_time = 0;
    std::vector<std::string> frame_refs;          // relative to the session root
    std::vector<std::string> sampled_frame_refs;  // empty until sample_frames()

    TimestampUs duration() const { return end_time - start_time; }
    TimestampUs midpoint() const { return start_time + duration() / 2; }

    friend bool operator==(const Clip&, const Clip&) = default;
};

struct SessionManifest {
    std::string session_id;
    Domain domain;
    TimestampUs recorded_at = 0;
    std::vector<Clip> clips;
    std::vector<GeoPose> track;
    std::filesystem::path root;  // directory the manifest was loaded from

    std::filesystem::path frame_path(const std::string& ref) const { return root / ref; }

    friend bool operator==(const SessionManifest& a, const SessionManifest& b) {
        return a.session_id == b.session_id && a.domain == b.domain &&
               a.recorded_at == b.recorded_at && a.clips == b.clips && a.track == b.track;
    }
};

enum class DescriptionSource { Gateway, Precomputed };

struct SceneDescription {
    std::int64_t clip_index = 0;
    std::string text;
    TimestampUs generated_at = 0;
    DescriptionSource source = DescriptionSource::Gateway;
    GeoPose pose;
};

struct LoadOptions {
    // Expected clip length; 0 disables the check.
    TimestampUs clip_length_us = kDefaultClipLengthUs;
    // Loaded clips are sampled at this rate so sampled_frame_refs is never empty.
    double sampling_rate_hz = kDefaultSamplingRateHz;
    bool check_frames = true;
};

SessionManifest load_session(const std::filesystem::path& dir, const LoadOptions& options = {});

// Writes manifest.json only; frames are referenced, never copied.
void save_session(const SessionManifest& manifest, const std::filesystem::path& dir);

// Collects every violation instead of stopping at the first one.
std::vector<std::string> validate_session(const std::filesystem::path& dir,
                                          const LoadOptions& options = {});

Clip sample_frames(const Clip& clip, double rate_hz);

GeoPose interpolate_pose(const std::vector<GeoPose>& track, TimestampUs t);

// descriptions.jsonl: one {clip_index, text, generated_at_us} per line.
std::vector<SceneDescription> load_descriptions(const std::filesystem::path& file,
                                                const SessionManifest& manifest);
void save_descriptions(const std::vector<SceneDescription>& descriptions,
                       const std::filesystem::path& file);

// Pose anchored at the clip midpoint.
GeoPose description_pose(const SessionManifest& manifest, const Clip& clip);

std::string trim(std::string_view text);

std::string format_iso8601(TimestampUs t);

}  // namespace fieldscribe::session
