#include <doctest.h>

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fieldscribe/error.hpp"
#include "fieldscribe/report.hpp"
#include "fieldscribe/rng.hpp"
#include "fixture.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fieldscribe;
using namespace fieldscribe::report;

namespace {

std::vector<session::SceneDescription> planted_descriptions(const session::SessionManifest& m) {
    const std::vector<int> labels = fixture::planted_labels();
    const char* captions[] = {fixture::kStreetCaption, fixture::kCyclistCaption, fixture::kBusStopCaption};
    std::vector<session::SceneDescription> out;
    for (const session::Clip& c : m.clips) {
        session::SceneDescription d;
        d.clip_index = c.clip_index;
        d.text = captions[labels[static_cast<std::size_t>(c.clip_index)]];
        d.generated_at = c.end_time;
        d.pose = session::description_pose(m, c);
        out.push_back(d);
    }
    return out;
}

struct Planted {
    session::SessionManifest session;
    std::vector<session::SceneDescription> descriptions;
    clustering::Partition partition;
    std::vector<clustering::ClusterSummary> summaries;
};

Planted planted() {
    Planted p;
    p.session = session::load_session(fixture::bundled_session());
    p.descriptions = planted_descriptions(p.session);
    p.partition = clustering::Partition::canonical(fixture::planted_labels());
    p.summaries = clustering::summarize(p.partition, 42);
    for (auto& s : p.summaries) s.representative_frame = fixture::frame_ref(static_cast<int>(s.representative_index), 0);
    return p;
}

std::map<int, ClusterEvidence> street_evidence() {
    gateway::Detection car{"car", 0.91, {0.05, 0.4, 0.6, 0.85}, std::nullopt};
    return {{0, {{"street", "car"}, {car}, {{0.5, 0.25, 0.8, 0.6}}}}};
}

ReportModel planted_model() {
    const Planted p = planted();
    return build_report_model(p.session, p.descriptions, p.partition, p.summaries, street_evidence());
}

Image textured(int w, int h, std::uint64_t seed) {
    Pcg32 rng(seed, 3);
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.set(x, y, {static_cast<std::uint8_t>(rng.bounded(256)), static_cast<std::uint8_t>(rng.bounded(256)),
                           static_cast<std::uint8_t>(rng.bounded(256))});
        }
    }
    return img;
}

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Structural checks a LaTeX engine would fail on: unbalanced braces or environments.
std::vector<std::string> latex_lint(const std::string& tex) {
    std::vector<std::string> problems;
    if (tex.rfind("\\documentclass", 0) != 0) problems.push_back("does not start with \\documentclass");
    int depth = 0;
    for (std::size_t i = 0; i < tex.size(); ++i) {
        if (tex[i] == '\\') {
            ++i;  // skips the escaped character, including \{ and \}
            continue;
        }
        if (tex[i] == '%') {
            while (i < tex.size() && tex[i] != '\n') ++i;
            continue;
        }
        if (tex[i] == '{') ++depth;
        if (tex[i] == '}' && --depth < 0) problems.push_back("unmatched } at byte " + std::to_string(i));
    }
    if (depth != 0) problems.push_back("unbalanced braces");
    static const std::regex env(R"(\\(begin|end)\{([A-Za-z*]+)\})");
    std::vector<std::string> stack;
    for (auto it = std::sregex_iterator(tex.begin(), tex.end(), env); it != std::sregex_iterator(); ++it) {
        if ((*it)[1] == "begin") {
            stack.push_back((*it)[2]);
        } else if (stack.empty() || stack.back() != (*it)[2]) {
            problems.push_back("mismatched \\end{" + (*it)[2].str() + "}");
        } else {
            stack.pop_back();
        }
    }
    if (!stack.empty()) problems.push_back("unclosed environment " + stack.back());
    if (tex.find("\\end{document}") == std::string::npos) problems.push_back("no \\end{document}");
    for (unsigned char c : tex) {
        if (c < 0x20 && c != '\n') problems.push_back("control character in output");
    }
    return problems;
}

}  // namespace

TEST_CASE("model fractions follow cluster sizes") {
    const ReportModel m = planted_model();
    REQUIRE(m.clusters.size() == 3);
    CHECK(m.clusters[0].count == 12);
    CHECK(m.clusters[0].fraction == doctest::Approx(0.5));
    CHECK(m.clusters[1].fraction == doctest::Approx(1.0 / 3.0));
    CHECK(m.clusters[2].fraction == doctest::Approx(1.0 / 6.0));
    double total = 0;
    for (const auto& d : m.distribution) total += d.fraction;
    CHECK(std::fabs(total - 1.0) <= 1e-9);
    CHECK(m.geo_points.size() == 24);
    CHECK(m.timeline.size() == 24);
    CHECK(m.clusters[0].evidence.prompts.size() == 2);
    CHECK(m.clusters[1].evidence.detections.empty());
    CHECK(m.clusters[1].representative_text == fixture::kCyclistCaption);
}

TEST_CASE("inconsistent inputs are rejected") {
    const Planted p = planted();
    const auto code = [](const std::function<void()>& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::Empty;
    };
    auto short_desc = p.descriptions;
    short_desc.pop_back();
    CHECK(code([&] { build_report_model(p.session, short_desc, p.partition, p.summaries, {}); }) ==
          Errc::InconsistentInputs);
    auto missing = p.summaries;
    missing.pop_back();
    CHECK(code([&] { build_report_model(p.session, p.descriptions, p.partition, missing, {}); }) ==
          Errc::InconsistentInputs);
    auto wrong_rep = p.summaries;
    wrong_rep[0].representative_index = 7;  // a cyclist clip
    CHECK(code([&] { build_report_model(p.session, p.descriptions, p.partition, wrong_rep, {}); }) ==
          Errc::InconsistentInputs);
    auto unknown_clip = p.descriptions;
    unknown_clip[3].clip_index = 99;
    CHECK(code([&] { build_report_model(p.session, unknown_clip, p.partition, p.summaries, {}); }) ==
          Errc::InconsistentInputs);

    ReportModel m = planted_model();
    m.distribution[0].fraction += 1e-6;
    CHECK(code([&] { m.validate(); }) == Errc::InconsistentInputs);
    m = planted_model();
    m.clusters.pop_back();
    CHECK(code([&] { m.validate(); }) == Errc::InconsistentInputs);
}

TEST_CASE("overlay with nothing to draw is a no-op, also through PNG") {
    fixture::TempDir tmp("overlay-noop");
    const Image img = textured(40, 30, 1);
    CHECK(compose_overlay(img, {}, {}, {255, 0, 0}) == img);
    write_png(img, tmp / "in.png");
    compose_overlay_file(tmp / "in.png", tmp / "out.png", {}, {}, {255, 0, 0});
    CHECK(read_png(tmp / "out.png") == img);
}

TEST_CASE("overlay strokes stay on the box outline and its label") {
    const Image img = textured(64, 64, 2);
    const Rgb color{1, 2, 3};
    gateway::Detection d{"car", 0.8, {0.25, 0.25, 0.75, 0.75}, std::nullopt};
    const Image out = compose_overlay(img, {d}, {}, color);
    const PixelRect r = to_pixels(d.box, 64, 64);
    const PixelRect label{r.x0, r.y0 - 6, r.x0 + 4 * 3, r.y0 - 1};
    std::size_t changed = 0;
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            if (out.at(x, y) == img.at(x, y)) continue;
            ++changed;
            const bool on_outline =
                r.contains(x, y) && (x == r.x0 || x == r.x1 - 1 || y == r.y0 || y == r.y1 - 1);
            CHECK_MESSAGE((on_outline || label.contains(x, y)), x << "," << y);
            CHECK(out.at(x, y) == color);
        }
    }
    CHECK(changed >= static_cast<std::size_t>(2 * (r.width() + r.height()) - 4));
}

TEST_CASE("a rectangular mask outlines exactly the box perimeter") {
    const Image img = textured(64, 48, 3);
    const Box box{0.1, 0.2, 0.6, 0.9};
    const PixelRect r = to_pixels(box, 64, 48);
    gateway::Detection plain{"x", 0.5, box, std::nullopt};
    gateway::Detection masked = plain;
    masked.mask = gateway::rle_encode(gateway::rect_mask(64, 48, r));
    CHECK(compose_overlay(img, {masked}, {}, {9, 9, 9}) == compose_overlay(img, {plain}, {}, {9, 9, 9}));

    masked.mask = gateway::rle_encode(gateway::rect_mask(32, 48, r));
    CHECK_THROWS_AS(compose_overlay(img, {masked}, {}, {9, 9, 9}), Error);
}

TEST_CASE("redactions pixelate and stay free of strokes") {
    const Image img = textured(64, 64, 4);
    const Rgb color{0, 255, 0};
    const Box face{0.5, 0.25, 0.8, 0.6};
    gateway::Detection car{"car", 0.9, {0.05, 0.4, 0.6, 0.85}, std::nullopt};
    const Image out = compose_overlay(img, {car}, {face}, color);
    const PixelRect r = to_pixels_covering(face, 64, 64);
    for (int by = r.y0; by < r.y1; by += kMosaicBlock) {
        for (int bx = r.x0; bx < r.x1; bx += kMosaicBlock) {
            const Rgb first = out.at(bx, by);
            for (int y = by; y < std::min(by + kMosaicBlock, r.y1); ++y) {
                for (int x = bx; x < std::min(bx + kMosaicBlock, r.x1); ++x) CHECK(out.at(x, y) == first);
            }
        }
    }
    // redacting alone gives the same region
    const Image only = compose_overlay(img, {}, {face}, color);
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) CHECK(out.at(x, y) == only.at(x, y));
    }
}

TEST_CASE("GeoJSON has one feature per description") {
    const ReportModel m = planted_model();
    const MapRender map = render_map(m);
    const auto& features = map.geojson.at("features");
    REQUIRE(features.size() == m.descriptions.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& f = features[i];
        CHECK(f.at("geometry").at("coordinates")[0].get<double>() == m.descriptions[i].pose.longitude);
        CHECK(f.at("properties").at("cluster_id").get<int>() == m.labels[i]);
        CHECK(f.at("properties").at("text").get<std::string>() == m.descriptions[i].text);
    }
    std::size_t circles = 0;
    for (std::size_t pos = map.svg.find("class=\"fs-point\""); pos != std::string::npos;
         pos = map.svg.find("class=\"fs-point\"", pos + 1)) {
        ++circles;
    }
    CHECK(circles == m.descriptions.size());
}

TEST_CASE("degenerate extents widen to 100 m") {
    std::vector<GeoPoint> one(3);
    for (auto& p : one) p.pose = {0, 49.75, 6.63, std::nullopt, std::nullopt};
    const MapFrame f = fit_map(one);
    CHECK((f.max_y - f.min_y) * 111320.0 == doctest::Approx(100.0));
    CHECK((f.max_x - f.min_x) * 111320.0 == doctest::Approx(100.0));
    const auto [x, y] = f.project(49.75, 6.63);
    CHECK(x == doctest::Approx(400.0));
    CHECK(y == doctest::Approx(250.0));

    std::vector<GeoPoint> line(2);
    line[0].pose = {0, 49.75, 6.60, std::nullopt, std::nullopt};
    line[1].pose = {0, 49.75, 6.70, std::nullopt, std::nullopt};
    const MapFrame g = fit_map(line);
    CHECK(g.max_y - g.min_y == doctest::Approx(g.max_x - g.min_x));
    CHECK(g.project(49.75, 6.60).first >= 0.0);
    CHECK(g.project(49.75, 6.70).first <= 800.0);

    std::vector<GeoPoint> none(1);
    none[0].pose.latitude = NAN;
    CHECK_THROWS_AS(fit_map(none), Error);
}

TEST_CASE("projection is monotone and keeps points inside the frame") {
    Pcg32 rng(7, 7);
    std::vector<GeoPoint> pts(50);
    for (auto& p : pts) p.pose = {0, 49.0 + rng.uniform(), 6.0 + rng.uniform(), std::nullopt, std::nullopt};
    const MapFrame f = fit_map(pts);
    for (const auto& a : pts) {
        const auto [ax, ay] = f.project(a.pose.latitude, a.pose.longitude);
        CHECK(ax >= 0.0);
        CHECK(ax <= 800.0);
        CHECK(ay >= 0.0);
        CHECK(ay <= 500.0);
        for (const auto& b : pts) {
            const auto [bx, by] = f.project(b.pose.latitude, b.pose.longitude);
            if (a.pose.longitude < b.pose.longitude) CHECK(ax < bx);
            if (a.pose.latitude < b.pose.latitude) CHECK(ay > by);
        }
    }
}

TEST_CASE("planted map layout: cyclist leg north of the start and left of the bus stop") {
    const ReportModel m = planted_model();
    const MapFrame f = fit_map(m.geo_points);
    const auto at = [&](std::size_t i) {
        return f.project(m.descriptions[i].pose.latitude, m.descriptions[i].pose.longitude);
    };
    CHECK(at(9).first < at(21).first);
    CHECK(at(9).second < at(1).second);
}

TEST_CASE("escaping") {
    CHECK(latex_escape("50% of $x & #y_z {a} ~ ^ \\") ==
          "50\\% of \\$x \\& \\#y\\_z \\{a\\} \\textasciitilde{} \\textasciicircum{} \\textbackslash{}");
    CHECK(latex_escape("caf\xC3\xA9") == "caf\xC3\xA9");
    CHECK(latex_escape("\xE6\xBC\xA2") == "\\texttt{[U+6F22]}");
    CHECK(latex_escape("a\nb\tc") == "a b c");
    CHECK_THROWS_AS(latex_escape("bad\x01"), Error);
    CHECK_THROWS_AS(latex_escape("bad\xC3"), Error);
    CHECK_THROWS_AS(latex_escape("\xC0\xAF"), Error);  // overlong
    CHECK(html_escape("<a href=\"x\">'&'</a>") == "&lt;a href=&quot;x&quot;&gt;&#39;&amp;&#39;&lt;/a&gt;");
}

TEST_CASE("LaTeX output is structurally sound even with hostile text") {
    Planted p = planted();
    p.descriptions[0].text = "{unbalanced \\begin{itemize} 100% & $ money_ ^ ~ #1 }}} \xE2\x80\x94 \xE6\xBC\xA2";
    p.descriptions[5].text = "\\end{document} <b>x</b> | pipes";
    const ReportModel m = build_report_model(p.session, p.descriptions, p.partition, p.summaries, street_evidence());
    const std::string tex = render_latex(m, true);
    const auto problems = latex_lint(tex);
    for (const auto& problem : problems) INFO(problem);
    CHECK(problems.empty());
    CHECK(tex.find("\\definecolor{cluster2}{HTML}{") != std::string::npos);
    CHECK(tex.find("assets/cluster-0.png") != std::string::npos);
    CHECK(latex_lint(render_latex(m, false)).empty());
}

TEST_CASE("HTML is self-contained and carries the viewer payload") {
    fixture::TempDir tmp("html");
    ReportModel m = planted_model();
    m.descriptions[2].text = "</script><script>alert(1)</script>";
    emit(m, {Format::Html, tmp.path()});
    const std::string html = slurp(tmp / "report.html");
    CHECK(html.find("://") == std::string::npos);
    CHECK(html.find("<script>alert") == std::string::npos);

    const std::regex payload_re(R"re(<script type="application/json" id="fieldscribe-payload">([\s\S]*?)</script>)re");
    std::smatch match;
    REQUIRE(std::regex_search(html, match, payload_re));
    const json payload = json::parse(match[1].str());
    CHECK(payload.at("geojson").at("features").size() == 24);
    CHECK(payload.at("texts")[2].get<std::string>() == m.descriptions[2].text);
    CHECK(payload.at("tiles").is_null());
    CHECK(payload.at("palette").size() == 3);

    const auto payload_pos = html.find("id=\"fieldscribe-payload\"");
    const auto bundle_pos = html.find("global.mountFieldscribeViewer");
    const auto mount_pos = html.find("mountFieldscribeViewer(\"fieldscribe-map\")");
    CHECK(payload_pos < bundle_pos);
    CHECK(bundle_pos < mount_pos);
    CHECK(mount_pos != std::string::npos);
    CHECK(html.find("src=\"data:image/png;base64,") != std::string::npos);
    CHECK(html.find("src=\"assets/") == std::string::npos);

    RenderTarget tiles{Format::Html, tmp / "tiles", true, "https://tile.example/{z}/{x}/{y}.png"};
    emit(m, tiles);
    CHECK(slurp(tmp / "tiles/report.html").find("tile.example") != std::string::npos);
}

TEST_CASE("viewer bundle exposes the mount function without network references") {
    const std::string_view bundle = viewer_bundle();
    CHECK(bundle.find("mountFieldscribeViewer") != std::string_view::npos);
    CHECK(bundle.find("fieldscribe-payload") != std::string_view::npos);
    CHECK(bundle.find("://") == std::string_view::npos);
}

TEST_CASE("rendering twice is byte-identical") {
    fixture::TempDir tmp("rerender");
    const ReportModel m = planted_model();
    for (const char* run : {"a", "b"}) {
        for (Format f : {Format::Markdown, Format::Html, Format::Latex}) emit(m, {f, tmp / run});
    }
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(tmp / "a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), tmp / "a");
        CHECK_MESSAGE(slurp(entry.path()) == slurp(tmp / "b" / rel), rel.string());
        ++files;
    }
    // three reports, map.geojson, map.svg, map.png, two charts, three overlays
    CHECK(files == 11);
}

TEST_CASE("emit lists what it wrote") {
    fixture::TempDir tmp("emit");
    const auto written = emit(planted_model(), {Format::Markdown, tmp.path()});
    CHECK(std::is_sorted(written.begin(), written.end()));
    for (const auto& f : written) CHECK(fs::is_regular_file(f));
    CHECK(std::find(written.begin(), written.end(), tmp / "report.md") != written.end());
    const std::string md = slurp(tmp / "report.md");
    CHECK(md.find("](assets/cluster-0.png)") != std::string::npos);
    CHECK(md.find("| Descriptions | 24 |") != std::string::npos);
}

TEST_CASE("missing positions drop the map but keep the report") {
    fixture::TempDir tmp("nogeo");
    Planted p = planted();
    for (auto& d : p.descriptions) d.pose.latitude = NAN;
    const ReportModel m = build_report_model(p.session, p.descriptions, p.partition, p.summaries, {});
    emit(m, {Format::Markdown, tmp.path()});
    emit(m, {Format::Html, tmp.path()});
    CHECK_FALSE(fs::exists(tmp / "map.geojson"));
    CHECK(slurp(tmp / "report.md").find("Map unavailable") != std::string::npos);
    CHECK(slurp(tmp / "report.html").find("mountFieldscribeViewer(\"fieldscribe-map\")") == std::string::npos);
}

TEST_CASE("format names") {
    CHECK(parse_formats("md,html,tex") == std::vector<Format>{Format::Markdown, Format::Html, Format::Latex});
    CHECK(parse_format("latex") == Format::Latex);
    CHECK(extension(Format::Latex) == "tex");
    CHECK_THROWS_AS(parse_format("pdf"), Error);
    CHECK_THROWS_AS(parse_formats(""), Error);
}
