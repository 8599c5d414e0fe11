#include "fieldscribe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "fieldscribe/error.hpp"

namespace fieldscribe::report {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kMetersPerDegree = 111'320.0;
const Rgb kTrackGray{158, 158, 158};

std::string fixed(double value, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, value);
    return buf;
}

std::string percent(double fraction) { return fixed(100.0 * fraction, 1); }

void write_file(const fs::path& file, std::string_view content, std::set<fs::path>& written) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(Errc::IoError, "short write to " + file.string());
    written.insert(file);
}

std::string overlay_name(int cluster_id) { return "cluster-" + std::to_string(cluster_id) + ".png"; }

bool usable(const session::GeoPose& p) {
    return std::isfinite(p.latitude) && std::isfinite(p.longitude) && std::abs(p.latitude) <= 90.0 &&
           std::abs(p.longitude) <= 180.0;
}

std::string svg_open(int width, int height, bool with_namespace) {
    std::string s = "<svg";
    if (with_namespace) s += " xmlns=\"http://www.w3.org/2000/svg\"";
    s += " width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
    return s;
}

std::string xml_escape(std::string_view text) { return html_escape(text); }

std::string one_line(std::string_view text) {
    std::string out;
    for (char c : text) out += (c == '\n' || c == '\r' || c == '\t') ? ' ' : c;
    return out;
}

std::string markdown_cell(std::string_view text) {
    std::string out;
    for (char c : one_line(text)) {
        if (c == '|') {
            out += "\\|";
        } else if (c == '<') {
            out += "&lt;";
        } else {
            out += c;
        }
    }
    return out;
}

void pixelate(Image& img, const PixelRect& r) {
    for (int by = r.y0; by < r.y1; by += kMosaicBlock) {
        for (int bx = r.x0; bx < r.x1; bx += kMosaicBlock) {
            const PixelRect block{bx, by, std::min(bx + kMosaicBlock, r.x1), std::min(by + kMosaicBlock, r.y1)};
            long sum[3] = {0, 0, 0};
            const long count = static_cast<long>(block.width()) * block.height();
            for (int y = block.y0; y < block.y1; ++y) {
                for (int x = block.x0; x < block.x1; ++x) {
                    const Rgb c = img.at(x, y);
                    sum[0] += c.r;
                    sum[1] += c.g;
                    sum[2] += c.b;
                }
            }
            const auto avg = [&](long s) { return static_cast<std::uint8_t>((s + count / 2) / count); };
            img.fill_rect(block, {avg(sum[0]), avg(sum[1]), avg(sum[2])});
        }
    }
}

template <typename Plot>
void line(int x0, int y0, int x1, int y1, Plot plot) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        plot(x0, y0);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

// Decodes one code point; returns 0 bytes consumed on malformed input.
std::size_t decode_utf8(std::string_view s, std::size_t i, char32_t& cp) {
    const auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char c = b(i);
    std::size_t len = 0;
    if (c < 0x80) {
        cp = c;
        return 1;
    }
    if ((c & 0xE0) == 0xC0) {
        len = 2;
        cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
        len = 3;
        cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
        len = 4;
        cp = c & 0x07;
    } else {
        return 0;
    }
    if (i + len > s.size()) return 0;
    for (std::size_t k = 1; k < len; ++k) {
        if ((b(i + k) & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (b(i + k) & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
    return len;
}

// Code points that utf8 inputenc with T1 fonts typesets directly.
bool latex_passthrough(char32_t cp) {
    if (cp >= 0xA0 && cp <= 0x17F) return cp != 0xAD;
    switch (cp) {
        case 0x2013: case 0x2014: case 0x2018: case 0x2019:
        case 0x201C: case 0x201D: case 0x2026: case 0x20AC:
            return true;
        default:
            return false;
    }
}

std::string color_name(int cluster_id) { return "cluster" + std::to_string(cluster_id); }

std::string hex_digits(const Rgb& c) { return c.hex().substr(1); }

}  // namespace

void ReportModel::validate() const {
    const std::size_t n = descriptions.size();
    if (labels.size() != n || geo_points.size() != n || timeline.size() != n) {
        throw Error(Errc::InconsistentInputs, "labels, geo points and timeline must cover every description");
    }
    double total = 0.0;
    std::set<int> distributed;
    for (const DistributionEntry& d : distribution) {
        total += d.fraction;
        distributed.insert(d.cluster_id);
    }
    if (n > 0 && std::abs(total - 1.0) > 1e-9) {
        throw Error(Errc::InconsistentInputs, "distribution fractions sum to " + fixed(total, 12));
    }
    std::set<int> sectioned;
    for (const ClusterSection& c : clusters) sectioned.insert(c.summary.cluster_id);
    for (const TimelineEntry& t : timeline) {
        if (!distributed.contains(t.cluster_id) || !sectioned.contains(t.cluster_id)) {
            throw Error(Errc::InconsistentInputs, "cluster " + std::to_string(t.cluster_id) + " has no section");
        }
    }
}

ReportModel build_report_model(const session::SessionManifest& session,
                               const std::vector<session::SceneDescription>& descriptions,
                               const clustering::Partition& partition,
                               const std::vector<clustering::ClusterSummary>& summaries,
                               const std::map<int, ClusterEvidence>& evidence, const clustering::ClusterParams& params) {
    const std::size_t n = descriptions.size();
    if (partition.size() != n) {
        throw Error(Errc::InconsistentInputs, std::to_string(partition.size()) + " labels for " + std::to_string(n) +
                                                  " descriptions");
    }
    std::set<std::int64_t> clip_ids;
    for (const session::Clip& c : session.clips) clip_ids.insert(c.clip_index);
    for (const auto& d : descriptions) {
        if (!clip_ids.contains(d.clip_index)) {
            throw Error(Errc::InconsistentInputs, "description for unknown clip " + std::to_string(d.clip_index));
        }
    }

    ReportModel m;
    m.session_id = session.session_id;
    m.domain = session.domain;
    m.recorded_at = session.recorded_at;
    m.session_root = session.root;
    m.params = params;
    m.descriptions = descriptions;
    m.labels = partition.labels;

    std::vector<std::size_t> counts(static_cast<std::size_t>(partition.k), 0);
    for (int label : partition.labels) {
        if (label < 0 || label >= partition.k) throw Error(Errc::InconsistentInputs, "label outside [0, k)");
        ++counts[static_cast<std::size_t>(label)];
    }

    std::map<int, const clustering::ClusterSummary*> by_id;
    for (const auto& s : summaries) by_id[s.cluster_id] = &s;
    for (int id = 0; id < partition.k; ++id) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(Errc::InconsistentInputs, "missing summary for cluster " + std::to_string(id));
        const clustering::ClusterSummary& s = *it->second;
        if (s.representative_index >= n || partition.labels[s.representative_index] != id) {
            throw Error(Errc::InconsistentInputs, "representative of cluster " + std::to_string(id) + " is not a member");
        }
        ClusterSection section;
        section.summary = s;
        section.summary.color = clustering::cluster_color(id);
        section.representative_text = descriptions[s.representative_index].text;
        if (auto ev = evidence.find(id); ev != evidence.end()) section.evidence = ev->second;
        section.count = counts[static_cast<std::size_t>(id)];
        section.fraction = static_cast<double>(section.count) / static_cast<double>(n);
        m.clusters.push_back(std::move(section));
        m.distribution.push_back({id, m.clusters.back().count, m.clusters.back().fraction});
    }
    if (by_id.size() != static_cast<std::size_t>(partition.k)) {
        throw Error(Errc::InconsistentInputs, "summaries reference clusters outside the partition");
    }

    for (std::size_t i = 0; i < n; ++i) {
        m.geo_points.push_back({descriptions[i].pose, partition.labels[i], i});
        m.timeline.push_back({descriptions[i].clip_index, partition.labels[i], descriptions[i].pose.timestamp});
    }
    std::stable_sort(m.timeline.begin(), m.timeline.end(),
                     [](const TimelineEntry& a, const TimelineEntry& b) { return a.clip_index < b.clip_index; });
    m.validate();
    return m;
}

Image compose_overlay(const Image& image, const std::vector<gateway::Detection>& detections,
                      const std::vector<Box>& redactions, Rgb color) {
    Image out = image;
    const int w = image.width();
    const int h = image.height();

    std::vector<PixelRect> redacted;
    for (const Box& b : redactions) {
        const PixelRect r = to_pixels_covering(b, w, h);
        if (r.width() == 0 || r.height() == 0) continue;
        pixelate(out, r);
        redacted.push_back(r);
    }
    const auto skip = [&](int x, int y) {
        return std::any_of(redacted.begin(), redacted.end(), [&](const PixelRect& r) { return r.contains(x, y); });
    };
    const auto plot = [&](int x, int y) {
        if (out.in_bounds(x, y) && !skip(x, y)) out.set(x, y, color);
    };

    for (const gateway::Detection& d : detections) {
        if (d.mask) {
            if (d.mask->width != w || d.mask->height != h) {
                throw Error(Errc::InconsistentInputs, "mask size does not match the image");
            }
            const gateway::BinaryMask mask = gateway::rle_decode(*d.mask);
            const auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && mask.at(x, y); };
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!mask.at(x, y)) continue;
                    const bool edge = !inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1);
                    if (edge) plot(x, y);
                }
            }
        }
        const PixelRect r = to_pixels(d.box, w, h);
        if (r.width() == 0 || r.height() == 0) continue;
        for (int x = r.x0; x < r.x1; ++x) {
            plot(x, r.y0);
            plot(x, r.y1 - 1);
        }
        for (int y = r.y0; y < r.y1; ++y) {
            plot(r.x0, y);
            plot(r.x1 - 1, y);
        }
        // Label above the box when there is room, otherwise just inside it.
        const bool above = r.y0 >= 6;
        draw_text(out, above ? r.x0 : r.x0 + 2, above ? r.y0 - 6 : r.y0 + 2, d.label, color, skip);
    }
    return out;
}

void compose_overlay_file(const fs::path& input, const fs::path& output,
                          const std::vector<gateway::Detection>& detections, const std::vector<Box>& redactions,
                          Rgb color) {
    write_png(compose_overlay(read_png(input), detections, redactions, color), output);
}

std::pair<double, double> MapFrame::project(double lat, double lon) const {
    const double x = lon * std::cos(ref_lat * std::numbers::pi / 180.0);
    const double y = lat;
    const double usable_w = width * 0.9;
    const double usable_h = height * 0.9;
    const double scale = std::min(usable_w / (max_x - min_x), usable_h / (max_y - min_y));
    const double cx = (min_x + max_x) / 2;
    const double cy = (min_y + max_y) / 2;
    return {width / 2.0 + (x - cx) * scale, height / 2.0 - (y - cy) * scale};
}

MapFrame fit_map(const std::vector<GeoPoint>& points, int width, int height) {
    MapFrame f;
    f.width = width;
    f.height = height;
    double min_lat = 0, max_lat = 0;
    bool any = false;
    for (const GeoPoint& p : points) {
        if (!usable(p.pose)) continue;
        if (!any) {
            min_lat = max_lat = p.pose.latitude;
            any = true;
        }
        min_lat = std::min(min_lat, p.pose.latitude);
        max_lat = std::max(max_lat, p.pose.latitude);
    }
    if (!any) throw Error(Errc::NoGeoData, "no description carries a usable position");
    f.ref_lat = (min_lat + max_lat) / 2;
    const double k = std::cos(f.ref_lat * std::numbers::pi / 180.0);
    bool first = true;
    for (const GeoPoint& p : points) {
        if (!usable(p.pose)) continue;
        const double x = p.pose.longitude * k;
        const double y = p.pose.latitude;
        if (first) {
            f.min_x = f.max_x = x;
            f.min_y = f.max_y = y;
            first = false;
        }
        f.min_x = std::min(f.min_x, x);
        f.max_x = std::max(f.max_x, x);
        f.min_y = std::min(f.min_y, y);
        f.max_y = std::max(f.max_y, y);
    }
    const double min_span = kDegenerateSpanMeters / kMetersPerDegree;
    const auto widen = [&](double& lo, double& hi) {
        if (hi - lo >= min_span * 1e-6) return;
        const double c = (lo + hi) / 2;
        lo = c - min_span / 2;
        hi = c + min_span / 2;
    };
    // A degenerate axis takes the other axis' span when that one is larger.
    const bool flat_x = f.max_x - f.min_x < min_span * 1e-6;
    const bool flat_y = f.max_y - f.min_y < min_span * 1e-6;
    widen(f.min_x, f.max_x);
    widen(f.min_y, f.max_y);
    if (flat_x && !flat_y) {
        const double c = (f.min_x + f.max_x) / 2, half = std::max(min_span, f.max_y - f.min_y) / 2;
        f.min_x = c - half;
        f.max_x = c + half;
    } else if (flat_y && !flat_x) {
        const double c = (f.min_y + f.max_y) / 2, half = std::max(min_span, f.max_x - f.min_x) / 2;
        f.min_y = c - half;
        f.max_y = c + half;
    }
    return f;
}

MapRender render_map(const ReportModel& model) {
    fit_map(model.geo_points);  // NoGeoData check
    json features = json::array();
    for (const GeoPoint& p : model.geo_points) {
        if (!usable(p.pose)) continue;
        const auto& d = model.descriptions[p.description_index];
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Point"}, {"coordinates", {p.pose.longitude, p.pose.latitude}}}},
                            {"properties",
                             {{"cluster_id", p.cluster_id},
                              {"color", clustering::cluster_color(p.cluster_id).hex()},
                              {"text", d.text},
                              {"clip_index", d.clip_index},
                              {"t_us", p.pose.timestamp}}}});
    }
    return {{{"type", "FeatureCollection"}, {"features", std::move(features)}}, render_map_svg(model)};
}

std::string render_map_svg(const ReportModel& model, bool with_namespace) {
    const MapFrame f = fit_map(model.geo_points);
    std::string s = svg_open(f.width, f.height, with_namespace);
    s += "<rect width=\"" + std::to_string(f.width) + "\" height=\"" + std::to_string(f.height) +
         "\" fill=\"#ffffff\" stroke=\"#cccccc\"/>\n";
    std::string path;
    for (const GeoPoint& p : model.geo_points) {
        if (!usable(p.pose)) continue;
        const auto [x, y] = f.project(p.pose.latitude, p.pose.longitude);
        if (!path.empty()) path += ' ';
        path += fixed(x, 2) + "," + fixed(y, 2);
    }
    s += "<polyline points=\"" + path + "\" fill=\"none\" stroke=\"" + kTrackGray.hex() + "\" stroke-width=\"1.5\"/>\n";
    for (const GeoPoint& p : model.geo_points) {
        if (!usable(p.pose)) continue;
        const auto [x, y] = f.project(p.pose.latitude, p.pose.longitude);
        const auto& d = model.descriptions[p.description_index];
        s += "<circle class=\"fs-point\" cx=\"" + fixed(x, 2) + "\" cy=\"" + fixed(y, 2) + "\" r=\"5\" fill=\"" +
             clustering::cluster_color(p.cluster_id).hex() + "\" data-cluster=\"" + std::to_string(p.cluster_id) +
             "\" data-index=\"" + std::to_string(p.description_index) + "\"><title>clip " +
             std::to_string(d.clip_index) + ": " + xml_escape(one_line(d.text)) + "</title></circle>\n";
    }
    s += "</svg>\n";
    return s;
}

Image render_map_image(const ReportModel& model, int width, int height) {
    const MapFrame f = fit_map(model.geo_points, width, height);
    Image img(width, height, {255, 255, 255});
    std::vector<std::pair<int, int>> pts;
    for (const GeoPoint& p : model.geo_points) {
        if (!usable(p.pose)) continue;
        const auto [x, y] = f.project(p.pose.latitude, p.pose.longitude);
        pts.emplace_back(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
    }
    const auto plot = [&](int x, int y) {
        if (img.in_bounds(x, y)) img.set(x, y, kTrackGray);
    };
    for (std::size_t i = 1; i < pts.size(); ++i) line(pts[i - 1].first, pts[i - 1].second, pts[i].first, pts[i].second, plot);
    std::size_t k = 0;
    for (const GeoPoint& p : model.geo_points) {
        if (!usable(p.pose)) continue;
        const auto [cx, cy] = pts[k++];
        const Rgb c = clustering::cluster_color(p.cluster_id);
        for (int dy = -5; dy <= 5; ++dy) {
            for (int dx = -5; dx <= 5; ++dx) {
                const int r2 = dx * dx + dy * dy;
                if (r2 > 25 || !img.in_bounds(cx + dx, cy + dy)) continue;
                img.set(cx + dx, cy + dy, r2 > 16 ? Rgb{255, 255, 255} : c);
            }
        }
    }
    return img;
}

std::string timeline_svg(const ReportModel& model, bool with_namespace) {
    constexpr int kWidth = 800, kHeight = 48, kBar = 32;
    std::string s = svg_open(kWidth, kHeight, with_namespace);
    const std::size_t n = model.timeline.size();
    for (std::size_t i = 0; i < n; ++i) {
        const TimelineEntry& t = model.timeline[i];
        const double x0 = kWidth * static_cast<double>(i) / static_cast<double>(n);
        const double x1 = kWidth * static_cast<double>(i + 1) / static_cast<double>(n);
        s += "<rect class=\"fs-segment\" x=\"" + fixed(x0, 2) + "\" y=\"0\" width=\"" + fixed(x1 - x0, 2) +
             "\" height=\"" + std::to_string(kBar) + "\" fill=\"" + clustering::cluster_color(t.cluster_id).hex() +
             "\"><title>clip " + std::to_string(t.clip_index) + ", cluster " + std::to_string(t.cluster_id) +
             "</title></rect>\n";
    }
    if (n > 0) {
        s += "<text x=\"0\" y=\"46\" font-size=\"11\" font-family=\"sans-serif\">" +
             xml_escape(session::format_iso8601(model.timeline.front().t_us)) + "</text>\n";
        s += "<text x=\"800\" y=\"46\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">" +
             xml_escape(session::format_iso8601(model.timeline.back().t_us)) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

std::string distribution_svg(const ReportModel& model, bool with_namespace) {
    constexpr int kWidth = 800, kRow = 26, kLabel = 110, kBarMax = 560;
    const int height = std::max<int>(kRow, kRow * static_cast<int>(model.distribution.size()));
    std::string s = svg_open(kWidth, height, with_namespace);
    int y = 0;
    for (const DistributionEntry& d : model.distribution) {
        s += "<text x=\"0\" y=\"" + std::to_string(y + 17) + "\" font-size=\"13\" font-family=\"sans-serif\">cluster " +
             std::to_string(d.cluster_id) + "</text>\n";
        s += "<rect x=\"" + std::to_string(kLabel) + "\" y=\"" + std::to_string(y + 4) + "\" width=\"" +
             fixed(kBarMax * d.fraction, 2) + "\" height=\"18\" fill=\"" + clustering::cluster_color(d.cluster_id).hex() +
             "\"/>\n";
        s += "<text x=\"" + fixed(kLabel + kBarMax * d.fraction + 6, 2) + "\" y=\"" + std::to_string(y + 17) +
             "\" font-size=\"13\" font-family=\"sans-serif\">" + std::to_string(d.count) + " (" + percent(d.fraction) +
             " %)</text>\n";
        y += kRow;
    }
    s += "</svg>\n";
    return s;
}

Format parse_format(const std::string& text) {
    if (text == "md" || text == "markdown") return Format::Markdown;
    if (text == "html") return Format::Html;
    if (text == "tex" || text == "latex") return Format::Latex;
    throw Error(Errc::SchemaViolation, "unknown report format '" + text + "'");
}

std::vector<Format> parse_formats(const std::string& csv) {
    std::vector<Format> out;
    std::stringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        const Format f = parse_format(session::trim(item));
        if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    }
    if (out.empty()) throw Error(Errc::SchemaViolation, "no report format given");
    return out;
}

std::string extension(Format format) {
    switch (format) {
        case Format::Markdown: return "md";
        case Format::Html: return "html";
        case Format::Latex: return "tex";
    }
    return "md";
}

std::string html_escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string latex_escape(std::string_view text) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = 0;
        const std::size_t len = decode_utf8(text, i, cp);
        if (len == 0) throw Error(Errc::LatexEscapeError, "invalid UTF-8 at byte " + std::to_string(i));
        if (len > 1) {
            if (latex_passthrough(cp)) {
                out.append(text.substr(i, len));
            } else {
                char buf[32];
                std::snprintf(buf, sizeof buf, "\\texttt{[U+%04X]}", static_cast<unsigned>(cp));
                out += buf;
            }
            i += len;
            continue;
        }
        const char c = text[i++];
        switch (c) {
            case '\\': out += "\\textbackslash{}"; break;
            case '{': out += "\\{"; break;
            case '}': out += "\\}"; break;
            case '$': out += "\\$"; break;
            case '&': out += "\\&"; break;
            case '#': out += "\\#"; break;
            case '_': out += "\\_"; break;
            case '%': out += "\\%"; break;
            case '~': out += "\\textasciitilde{}"; break;
            case '^': out += "\\textasciicircum{}"; break;
            case '<': out += "\\textless{}"; break;
            case '>': out += "\\textgreater{}"; break;
            case '|': out += "\\textbar{}"; break;
            case '\n': case '\r': case '\t': out += ' '; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20 || c == 0x7F) {
                    char buf[48];
                    std::snprintf(buf, sizeof buf, "control character 0x%02X", static_cast<unsigned>(c));
                    throw Error(Errc::LatexEscapeError, buf);
                }
                out += c;
        }
    }
    return out;
}

std::string render_markdown(const ReportModel& m, bool map_available) {
    std::ostringstream o;
    o << "# Field report: " << markdown_cell(m.session_id) << "\n\n";
    o << "| | |\n|---|---|\n";
    o << "| Domain | " << markdown_cell(m.domain.name()) << " |\n";
    o << "| Recorded | " << session::format_iso8601(m.recorded_at) << " |\n";
    o << "| Descriptions | " << m.descriptions.size() << " |\n";
    o << "| Clusters | " << m.clusters.size() << " |\n";
    o << "| Clustering | " << clustering::to_string(m.params.metric) << ", " << clustering::to_string(m.params.linkage)
      << " linkage, threshold " << fixed(m.params.threshold, 3) << " |\n";
    if (m.scores) {
        o << "| ARI / NMI / FMI | " << fixed(m.scores->ari, 3) << " / " << fixed(m.scores->nmi, 3) << " / "
          << fixed(m.scores->fmi, 3) << " |\n";
    }
    if (!m.anonymized) o << "\n**Warning:** images in this report were not anonymized.\n";

    o << "\n## Clusters\n";
    for (const ClusterSection& c : m.clusters) {
        const int id = c.summary.cluster_id;
        o << "\n### Cluster " << id << " (" << c.summary.color.hex() << ", " << c.count << " descriptions, "
          << percent(c.fraction) << " %)\n\n";
        o << "> " << markdown_cell(c.representative_text) << "\n\n";
        if (!c.summary.representative_frame.empty()) {
            o << "![Cluster " << id << " representative frame](assets/" << overlay_name(id) << ")\n\n";
            o << "Representative frame: `" << c.summary.representative_frame << "` (similarity "
              << fixed(c.summary.match_score, 3) << ")\n\n";
        }
        if (!c.evidence.prompts.empty()) {
            o << "Prompts:";
            for (const auto& p : c.evidence.prompts) o << ' ' << markdown_cell(p);
            o << "\n\n";
        }
        if (!c.evidence.detections.empty()) {
            o << "Detections:\n\n";
            for (const auto& d : c.evidence.detections) o << "- " << markdown_cell(d.label) << " " << fixed(d.score, 2) << "\n";
            o << "\n";
        }
        if (!c.evidence.redactions.empty()) o << "Redacted regions: " << c.evidence.redactions.size() << "\n\n";
    }

    o << "## Map\n\n";
    if (map_available) {
        o << "![Descriptions colored by cluster](map.svg)\n\nPoint data: `map.geojson`.\n\n";
    } else {
        o << "Map unavailable: no description carries a usable position.\n\n";
    }
    o << "## Distribution\n\n| Cluster | Color | Count | Fraction |\n|---|---|---|---|\n";
    for (const DistributionEntry& d : m.distribution) {
        o << "| " << d.cluster_id << " | " << clustering::cluster_color(d.cluster_id).hex() << " | " << d.count << " | "
          << percent(d.fraction) << " % |\n";
    }
    o << "\n![Cluster distribution](assets/distribution.svg)\n\n";
    o << "## Timeline\n\n![Timeline colored by cluster](assets/timeline.svg)\n\n";

    o << "## Descriptions\n\n| Clip | Time | Cluster | Latitude | Longitude | Description |\n|---|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < m.descriptions.size(); ++i) {
        const auto& d = m.descriptions[i];
        o << "| " << d.clip_index << " | " << session::format_iso8601(d.pose.timestamp) << " | " << m.labels[i] << " | "
          << fixed(d.pose.latitude, 6) << " | " << fixed(d.pose.longitude, 6) << " | " << markdown_cell(d.text) << " |\n";
    }
    return o.str();
}

std::string render_latex(const ReportModel& m, bool map_available) {
    std::ostringstream o;
    o << "\\documentclass[11pt,a4paper]{article}\n"
         "\\usepackage[T1]{fontenc}\n"
         "\\usepackage[utf8]{inputenc}\n"
         "\\usepackage[margin=2cm]{geometry}\n"
         "\\usepackage{graphicx}\n"
         "\\usepackage{xcolor}\n"
         "\\usepackage{longtable}\n";
    for (const ClusterSection& c : m.clusters) {
        o << "\\definecolor{" << color_name(c.summary.cluster_id) << "}{HTML}{" << hex_digits(c.summary.color) << "}\n";
    }
    o << "\\title{Field report: " << latex_escape(m.session_id) << "}\n";
    o << "\\date{" << latex_escape(session::format_iso8601(m.recorded_at)) << "}\n";
    o << "\\author{}\n\\begin{document}\n\\maketitle\n\n";

    o << "\\begin{tabular}{ll}\n";
    o << "Domain & " << latex_escape(m.domain.name()) << " \\\\\n";
    o << "Descriptions & " << m.descriptions.size() << " \\\\\n";
    o << "Clusters & " << m.clusters.size() << " \\\\\n";
    o << "Clustering & " << clustering::to_string(m.params.metric) << ", " << clustering::to_string(m.params.linkage)
      << " linkage, threshold " << fixed(m.params.threshold, 3) << " \\\\\n";
    if (m.scores) {
        o << "ARI / NMI / FMI & " << fixed(m.scores->ari, 3) << " / " << fixed(m.scores->nmi, 3) << " / "
          << fixed(m.scores->fmi, 3) << " \\\\\n";
    }
    o << "\\end{tabular}\n\n";
    if (!m.anonymized) o << "\\textbf{Warning:} images in this report were not anonymized.\n\n";

    o << "\\section*{Clusters}\n";
    for (const ClusterSection& c : m.clusters) {
        const int id = c.summary.cluster_id;
        o << "\\subsection*{\\textcolor{" << color_name(id) << "}{\\rule{0.8em}{0.8em}} Cluster " << id << "}\n";
        o << c.count << " descriptions (" << percent(c.fraction) << "\\,\\%).\n";
        o << "\\begin{quote}\n" << latex_escape(c.representative_text) << "\n\\end{quote}\n";
        if (!c.summary.representative_frame.empty()) {
            o << "\\begin{center}\n\\includegraphics[width=0.45\\linewidth]{assets/" << overlay_name(id)
              << "}\n\\end{center}\n";
        }
        if (!c.evidence.prompts.empty()) {
            o << "\\noindent\\emph{Prompts:}";
            for (const auto& p : c.evidence.prompts) o << ' ' << latex_escape(p);
            o << "\n\n";
        }
        if (!c.evidence.detections.empty()) {
            o << "\\noindent\\emph{Detections:}";
            for (std::size_t i = 0; i < c.evidence.detections.size(); ++i) {
                o << (i ? ", " : " ") << latex_escape(c.evidence.detections[i].label) << " ("
                  << fixed(c.evidence.detections[i].score, 2) << ")";
            }
            o << "\n\n";
        }
    }

    o << "\\section*{Map}\n";
    if (map_available) {
        o << "\\begin{center}\n\\includegraphics[width=\\linewidth]{assets/map.png}\n\\end{center}\n";
    } else {
        o << "Map unavailable: no description carries a usable position.\n";
    }

    o << "\\section*{Distribution}\n";
    for (const DistributionEntry& d : m.distribution) {
        o << "\\noindent\\textcolor{" << color_name(d.cluster_id) << "}{\\rule{" << fixed(12.0 * d.fraction, 3)
          << "cm}{0.35cm}} Cluster " << d.cluster_id << ": " << d.count << " (" << percent(d.fraction) << "\\,\\%)\\par\n";
    }

    o << "\\section*{Timeline}\n\\noindent%\n";
    const double seg = m.timeline.empty() ? 0.0 : 16.0 / static_cast<double>(m.timeline.size());
    for (const TimelineEntry& t : m.timeline) {
        o << "\\textcolor{" << color_name(t.cluster_id) << "}{\\rule{" << fixed(seg, 4) << "cm}{0.5cm}}%\n";
    }
    o << "\\par\n";

    o << "\\section*{Descriptions}\n";
    o << "\\begin{longtable}{rrp{12cm}}\nClip & Cluster & Description \\\\\n\\hline\n\\endhead\n";
    for (std::size_t i = 0; i < m.descriptions.size(); ++i) {
        o << m.descriptions[i].clip_index << " & " << m.labels[i] << " & " << latex_escape(m.descriptions[i].text)
          << " \\\\\n";
    }
    o << "\\end{longtable}\n\\end{document}\n";
    return o.str();
}

json viewer_payload(const ReportModel& m, const std::string& tile_url) {
    json geojson = {{"type", "FeatureCollection"}, {"features", json::array()}};
    try {
        geojson = render_map(m).geojson;
    } catch (const Error& e) {
        if (e.code() != Errc::NoGeoData) throw;
    }
    json timeline = json::array();
    for (const TimelineEntry& t : m.timeline) {
        timeline.push_back({{"clip_index", t.clip_index}, {"cluster_id", t.cluster_id}, {"t_us", t.t_us}});
    }
    json palette = json::object();
    for (const ClusterSection& c : m.clusters) palette[std::to_string(c.summary.cluster_id)] = c.summary.color.hex();
    json texts = json::array();
    for (const auto& d : m.descriptions) texts.push_back(d.text);
    json payload = {{"geojson", std::move(geojson)},
                    {"timeline", std::move(timeline)},
                    {"palette", std::move(palette)},
                    {"texts", std::move(texts)}};
    payload["tiles"] = tile_url.empty() ? json(nullptr) : json(tile_url);
    return payload;
}

std::string render_html(const ReportModel& m, const RenderTarget& target, bool map_available) {
    const auto image_src = [&](const std::string& name) -> std::string {
        if (!target.embed_assets) return "assets/" + name;
        std::ifstream in(target.output_dir / "assets" / name, std::ios::binary);
        if (!in) throw Error(Errc::IoError, "missing asset " + name);
        const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return "data:image/png;base64," + base64_encode(bytes);
    };

    std::ostringstream o;
    o << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Field report: "
      << html_escape(m.session_id) << "</title>\n";
    o << "<style>\n"
         "body{font-family:sans-serif;max-width:960px;margin:2em auto;padding:0 1em;color:#222}\n"
         "table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 6px;vertical-align:top}\n"
         ".swatch{display:inline-block;width:0.9em;height:0.9em;margin-right:0.3em}\n"
         ".cluster img{max-width:320px;image-rendering:pixelated;width:320px}\n"
         "blockquote{border-left:4px solid #ccc;margin:0.5em 0;padding-left:0.8em}\n"
         "#fieldscribe-map{width:100%;max-width:800px;height:500px;position:relative;overflow:hidden;border:1px solid #ccc}\n"
         "</style>\n</head>\n<body>\n";
    o << "<h1>Field report: " << html_escape(m.session_id) << "</h1>\n<table>\n";
    o << "<tr><th>Domain</th><td>" << html_escape(m.domain.name()) << "</td></tr>\n";
    o << "<tr><th>Recorded</th><td>" << session::format_iso8601(m.recorded_at) << "</td></tr>\n";
    o << "<tr><th>Descriptions</th><td>" << m.descriptions.size() << "</td></tr>\n";
    o << "<tr><th>Clusters</th><td>" << m.clusters.size() << "</td></tr>\n";
    o << "<tr><th>Clustering</th><td>" << clustering::to_string(m.params.metric) << ", "
      << clustering::to_string(m.params.linkage) << " linkage, threshold " << fixed(m.params.threshold, 3)
      << "</td></tr>\n";
    if (m.scores) {
        o << "<tr><th>ARI / NMI / FMI</th><td>" << fixed(m.scores->ari, 3) << " / " << fixed(m.scores->nmi, 3) << " / "
          << fixed(m.scores->fmi, 3) << "</td></tr>\n";
    }
    o << "</table>\n";
    if (!m.anonymized) o << "<p><strong>Warning:</strong> images in this report were not anonymized.</p>\n";

    o << "<h2>Map</h2>\n";
    if (map_available) {
        o << "<div id=\"fieldscribe-map\">\n" << render_map_svg(m, false) << "</div>\n";
    } else {
        o << "<p>Map unavailable: no description carries a usable position.</p>\n";
    }
    o << "<h2>Timeline</h2>\n<div id=\"fieldscribe-timeline\">\n" << timeline_svg(m, false) << "</div>\n";
    o << "<h2>Distribution</h2>\n" << distribution_svg(m, false);

    o << "<h2>Clusters</h2>\n";
    for (const ClusterSection& c : m.clusters) {
        const int id = c.summary.cluster_id;
        o << "<section class=\"cluster\" id=\"cluster-" << id << "\">\n<h3><span class=\"swatch\" style=\"background:"
          << c.summary.color.hex() << "\"></span>Cluster " << id << " (" << c.count << " descriptions, "
          << percent(c.fraction) << " %)</h3>\n";
        o << "<blockquote>" << html_escape(c.representative_text) << "</blockquote>\n";
        if (!c.summary.representative_frame.empty()) {
            o << "<img alt=\"Cluster " << id << " representative frame\" src=\"" << image_src(overlay_name(id))
              << "\">\n";
        }
        if (!c.evidence.prompts.empty()) {
            o << "<p>Prompts:";
            for (const auto& p : c.evidence.prompts) o << ' ' << html_escape(p);
            o << "</p>\n";
        }
        if (!c.evidence.detections.empty()) {
            o << "<ul>\n";
            for (const auto& d : c.evidence.detections) {
                o << "<li>" << html_escape(d.label) << " " << fixed(d.score, 2) << "</li>\n";
            }
            o << "</ul>\n";
        }
        o << "</section>\n";
    }

    o << "<h2>Descriptions</h2>\n<table>\n<tr><th>Clip</th><th>Time</th><th>Cluster</th><th>Description</th></tr>\n";
    for (std::size_t i = 0; i < m.descriptions.size(); ++i) {
        const auto& d = m.descriptions[i];
        o << "<tr><td>" << d.clip_index << "</td><td>" << session::format_iso8601(d.pose.timestamp) << "</td><td>"
          << m.labels[i] << "</td><td>" << html_escape(d.text) << "</td></tr>\n";
    }
    o << "</table>\n";

    std::string payload = viewer_payload(m, target.tile_url).dump(-1, ' ', false, json::error_handler_t::replace);
    std::string safe;
    for (char c : payload) {
        if (c == '<') {
            safe += "\\u003c";
        } else {
            safe += c;
        }
    }
    o << "<script type=\"application/json\" id=\"fieldscribe-payload\">" << safe << "</script>\n";
    o << "<script>\n" << viewer_bundle() << "\n</script>\n";
    if (map_available) o << "<script>mountFieldscribeViewer(\"fieldscribe-map\");</script>\n";
    o << "</body>\n</html>\n";
    return o.str();
}

std::vector<fs::path> emit(const ReportModel& model, const RenderTarget& target) {
    model.validate();
    std::set<fs::path> written;
    const fs::path dir = target.output_dir;
    const fs::path assets = dir / "assets";
    std::error_code ec;
    fs::create_directories(assets, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + assets.string() + ": " + ec.message());

    bool map_available = true;
    try {
        const MapRender map = render_map(model);
        write_file(dir / "map.geojson", map.geojson.dump(2, ' ', false, json::error_handler_t::replace) + "\n", written);
        write_file(dir / "map.svg", map.svg, written);
        write_png(render_map_image(model), assets / "map.png");
        written.insert(assets / "map.png");
    } catch (const Error& e) {
        if (e.code() != Errc::NoGeoData) throw;
        map_available = false;
    }
    write_file(assets / "timeline.svg", timeline_svg(model), written);
    write_file(assets / "distribution.svg", distribution_svg(model), written);

    for (const ClusterSection& c : model.clusters) {
        if (c.summary.representative_frame.empty()) continue;
        const fs::path out = assets / overlay_name(c.summary.cluster_id);
        compose_overlay_file(model.session_root / c.summary.representative_frame, out, c.evidence.detections,
                             c.evidence.redactions, c.summary.color);
        written.insert(out);
    }

    const fs::path report = dir / ("report." + extension(target.format));
    switch (target.format) {
        case Format::Markdown: write_file(report, render_markdown(model, map_available), written); break;
        case Format::Latex: write_file(report, render_latex(model, map_available), written); break;
        case Format::Html: write_file(report, render_html(model, target, map_available), written); break;
    }
    return {written.begin(), written.end()};
}

}  // namespace fieldscribe::report
