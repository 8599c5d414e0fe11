#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fieldscribe/clustering.hpp"
#include "fieldscribe/gateway.hpp"
#include "fieldscribe/image.hpp"
#include "fieldscribe/metrics.hpp"
#include "fieldscribe/session.hpp"

namespace fieldscribe::report {

// Per-cluster evidence gathered on the representative frame.
struct ClusterEvidence {
    std::vector<std::string> prompts;
    std::vector<gateway::Detection> detections;
    std::vector<Box> redactions;
};

struct ClusterSection {
    clustering::ClusterSummary summary;
    std::string representative_text;
    ClusterEvidence evidence;
    std::size_t count = 0;
    double fraction = 0.0;
};

struct GeoPoint {
    session::GeoPose pose;
    int cluster_id = 0;
    std::size_t description_index = 0;
};

struct TimelineEntry {
    std::int64_t clip_index = 0;
    int cluster_id = 0;
    session::TimestampUs t_us = 0;
};

struct DistributionEntry {
    int cluster_id = 0;
    std::size_t count = 0;
    double fraction = 0.0;
};

struct ReportModel {
    std::string session_id;
    session::Domain domain;
    session::TimestampUs recorded_at = 0;
    std::filesystem::path session_root;
    clustering::ClusterParams params;
    bool anonymized = true;

    std::vector<ClusterSection> clusters;  // by cluster id
    std::vector<GeoPoint> geo_points;      // one per description
    std::vector<TimelineEntry> timeline;   // ordered by clip
    std::vector<DistributionEntry> distribution;
    std::vector<session::SceneDescription> descriptions;
    std::vector<int> labels;  // cluster id per description
    std::optional<metrics::Scores> scores;

    // Throws InconsistentInputs when a model invariant does not hold.
    void validate() const;
};

// `evidence` may omit clusters; they get an empty section.
ReportModel build_report_model(const session::SessionManifest& session,
                               const std::vector<session::SceneDescription>& descriptions,
                               const clustering::Partition& partition,
                               const std::vector<clustering::ClusterSummary>& summaries,
                               const std::map<int, ClusterEvidence>& evidence,
                               const clustering::ClusterParams& params = {});

inline constexpr int kMosaicBlock = 16;

// Each redaction box is replaced by 16x16 block averages anchored at its
// top-left pixel. Mask outlines, box strokes and labels are then drawn in
// `color`, never over a redacted pixel.
Image compose_overlay(const Image& image, const std::vector<gateway::Detection>& detections,
                      const std::vector<Box>& redactions, Rgb color);
void compose_overlay_file(const std::filesystem::path& input, const std::filesystem::path& output,
                          const std::vector<gateway::Detection>& detections, const std::vector<Box>& redactions,
                          Rgb color);

struct MapFrame {
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;  // projected, degrees
    double ref_lat = 0;
    int width = 800;
    int height = 500;

    // Pixel position, y growing downward.
    std::pair<double, double> project(double lat, double lon) const;
};

inline constexpr double kDegenerateSpanMeters = 100.0;

// Equirectangular fit with a 5 % margin. Throws NoGeoData on no usable points.
MapFrame fit_map(const std::vector<GeoPoint>& points, int width = 800, int height = 500);

struct MapRender {
    nlohmann::json geojson;
    std::string svg;
};

MapRender render_map(const ReportModel& model);
std::string render_map_svg(const ReportModel& model, bool with_namespace = true);
Image render_map_image(const ReportModel& model, int width = 800, int height = 500);

std::string timeline_svg(const ReportModel& model, bool with_namespace = true);
std::string distribution_svg(const ReportModel& model, bool with_namespace = true);

enum class Format { Markdown, Html, Latex };

Format parse_format(const std::string& text);
std::vector<Format> parse_formats(const std::string& csv);
std::string extension(Format format);

struct RenderTarget {
    Format format = Format::Markdown;
    std::filesystem::path output_dir;
    bool embed_assets = true;
    // Tile template handed to the viewer; empty keeps the report offline.
    std::string tile_url;
};

// Writes the report file plus shared assets (overlays, map, charts, GeoJSON).
// Returns every path written, sorted.
std::vector<std::filesystem::path> emit(const ReportModel& model, const RenderTarget& target);

std::string render_markdown(const ReportModel& model, bool map_available);
std::string render_latex(const ReportModel& model, bool map_available);
std::string render_html(const ReportModel& model, const RenderTarget& target, bool map_available);

// Viewer payload injected into the HTML report.
nlohmann::json viewer_payload(const ReportModel& model, const std::string& tile_url);

// Escapes LaTeX specials. Throws LatexEscapeError on invalid UTF-8 or control characters.
std::string latex_escape(std::string_view text);
std::string html_escape(std::string_view text);

// The prebuilt map viewer, embedded verbatim.
std::string_view viewer_bundle();

}  // namespace fieldscribe::report
