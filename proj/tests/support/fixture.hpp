#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fieldscribe/gateway.hpp"
#include "fieldscribe/session.hpp"

namespace fieldscribe::fixture {

// The bundled session: 24 five-second clips in three planted groups.
inline constexpr const char* kSessionId = "synthetic-a";
inline constexpr int kClips = 24;
inline constexpr int kFramesPerClip = 10;
inline constexpr int kFrameSize = 64;
inline constexpr session::TimestampUs kStartUs = 1'715'677'200'000'000;  // 2024-05-14T09:00:00Z

inline constexpr const char* kStreetCaption =
    "A street with cars parked on the side and a few pedestrians walking on the sidewalk.";
inline constexpr const char* kCyclistCaption = "A cyclist is riding down a city street.";
inline constexpr const char* kBusStopCaption = "A street with a bus stop and a building with flags.";

// Planted group per clip: street 0-5 and 14-19, cyclist 6-13, bus stop 20-23.
std::vector<int> planted_labels();
std::string group_name(int label);

// Frame path relative to the session root.
std::string frame_ref(int clip, int frame);

session::SessionManifest synthetic_manifest();
gateway::MockFixture synthetic_annotations();

// Writes manifest.json, frames/, mock_gateway.json and ground_truth.json.
void build_synthetic_session(const std::filesystem::path& dir);

// Bundled copy in the source tree.
std::filesystem::path bundled_session();

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

// Metadata-only session for split tests: `clips` back-to-back clips from `start`.
session::SessionManifest timed_session(const std::string& id, session::Domain domain, int clips,
                                       session::TimestampUs start);

}  // namespace fieldscribe::fixture
