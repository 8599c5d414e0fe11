#include "fieldscribe/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "fieldscribe/error.hpp"

namespace fieldscribe {

Rgb Rgb::from_hex(const std::string& hex) {
    unsigned r = 0, g = 0, b = 0;
    if (hex.size() != 7 || hex[0] != '#' || std::sscanf(hex.c_str() + 1, "%02x%02x%02x", &r, &g, &b) != 3) {
        throw Error(Errc::Precondition, "bad color " + hex);
    }
    return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
}

std::string Rgb::hex() const {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02X%02X%02X", r, g, b);
    return buf;
}

bool Box::valid() const {
    const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    return in_unit(x1) && in_unit(y1) && in_unit(x2) && in_unit(y2) && x1 <= x2 && y1 <= y2;
}

PixelRect to_pixels(const Box& box, int width, int height) {
    const auto px = [](double v, int extent) {
        return std::clamp(static_cast<int>(std::lround(v * extent)), 0, extent);
    };
    return {px(box.x1, width), px(box.y1, height), px(box.x2, width), px(box.y2, height)};
}

PixelRect to_pixels_covering(const Box& box, int width, int height) {
    const auto lo = [](double v, int extent) {
        return std::clamp(static_cast<int>(std::floor(v * extent)), 0, extent);
    };
    const auto hi = [](double v, int extent) {
        return std::clamp(static_cast<int>(std::ceil(v * extent)), 0, extent);
    };
    return {lo(box.x1, width), lo(box.y1, height), hi(box.x2, width), hi(box.y2, height)};
}

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw Error(Errc::Precondition, "image dimensions must be positive");
    pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
        pixels_[i] = fill.r;
        pixels_[i + 1] = fill.g;
        pixels_[i + 2] = fill.b;
    }
}

Rgb Image::at(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
}

void Image::fill_rect(const PixelRect& rect, Rgb c) {
    for (int y = std::max(rect.y0, 0); y < std::min(rect.y1, height_); ++y) {
        for (int x = std::max(rect.x0, 0); x < std::min(rect.x1, width_); ++x) set(x, y, c);
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// RAII over libpng's simplified-API control structure.
struct PngImage {
    png_image image{};

    PngImage() { image.version = PNG_IMAGE_VERSION; }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

void begin_read(PngImage& png, const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw Error(Errc::DecodeError, "cannot open " + path.string());
    if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
        throw Error(Errc::DecodeError, path.string() + ": " + png.image.message);
    }
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    PngImage png;
    begin_read(png, path);
    png.image.format = PNG_FORMAT_RGB;
    const int w = static_cast<int>(png.image.width);
    const int h = static_cast<int>(png.image.height);
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png.image));
    if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
        throw Error(Errc::DecodeError, path.string() + ": " + png.image.message);
    }
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const png_byte* p = buffer.data() + (static_cast<std::size_t>(y) * w + x) * 3;
            img.set(x, y, {p[0], p[1], p[2]});
        }
    }
    return img;
}

std::array<int, 2> png_dimensions(const std::filesystem::path& path) {
    PngImage png;
    begin_read(png, path);
    return {static_cast<int>(png.image.width), static_cast<int>(png.image.height)};
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    if (image.empty()) throw Error(Errc::Precondition, "cannot encode an empty image");
    PngImage png;
    png.image.width = static_cast<png_uint_32>(image.width());
    png.image.height = static_cast<png_uint_32>(image.height());
    png.image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    const auto bytes = image.bytes();
    if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
        throw Error(Errc::IoError, std::string("png encode: ") + png.image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
        throw Error(Errc::IoError, std::string("png encode: ") + png.image.message);
    }
    out.resize(size);
    return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
    const auto data = encode_png(image);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f || std::fwrite(data.data(), 1, data.size(), f.get()) != data.size()) {
        throw Error(Errc::IoError, "cannot write " + path.string());
    }
}

std::string base64_encode(std::span<const std::uint8_t> data) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < data.size(); i += 3) {
        const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i < data.size()) {
        std::uint32_t v = data[i] << 16;
        if (i + 1 < data.size()) v |= data[i + 1] << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += i + 1 < data.size() ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

namespace detail {

namespace {
constexpr std::uint16_t glyph(const char (&rows)[16]) {
    std::uint16_t bits = 0;
    for (int i = 0; i < 15; ++i) bits = static_cast<std::uint16_t>((bits << 1) | (rows[i] == '#' ? 1 : 0));
    return bits;
}
}  // namespace

std::uint16_t glyph_bits(char c) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    switch (c) {
        case 'a': return glyph(".#.#.#####.##.#");
        case 'b': return glyph("##.#.###.#.###.");
        case 'c': return glyph(".###..#..#...##");
        case 'd': return glyph("##.#.##.##.###.");
        case 'e': return glyph("####..###..####");
        case 'f': return glyph("####..###..#...");
        case 'g': return glyph(".###..#.##.#.##");
        case 'h': return glyph("#.##.#####.##.#");
        case 'i': return glyph("###.#..#..#.###");
        case 'j': return glyph("..#..#..##.#.#.");
        case 'k': return glyph("#.##.###.#.##.#");
        case 'l': return glyph("#..#..#..#..###");
        case 'm': return glyph("#.#####.##.##.#");
        case 'n': return glyph("##.#.##.##.##.#");
        case 'o': return glyph(".#.#.##.##.#.#.");
        case 'p': return glyph("##.#.###.#..#..");
        case 'q': return glyph(".#.#.##.##.#.##");
        case 'r': return glyph("##.#.###.#.##.#");
        case 's': return glyph(".###...#...###.");
        case 't': return glyph("###.#..#..#..#.");
        case 'u': return glyph("#.##.##.##.####");
        case 'v': return glyph("#.##.##.##.#.#.");
        case 'w': return glyph("#.##.##.######.");
        case 'x': return glyph("#.##.#.#.#.##.#");
        case 'y': return glyph("#.##.#.#..#..#.");
        case 'z': return glyph("###..#.#.#..###");
        case '0': return glyph("####.##.##.####");
        case '1': return glyph(".#.##..#..#.###");
        case '2': return glyph("###..#####..###");
        case '3': return glyph("###..####..####");
        case '4': return glyph("#.##.####..#..#");
        case '5': return glyph("####..###..####");
        case '6': return glyph("####..####.####");
        case '7': return glyph("###..#..#..#..#");
        case '8': return glyph("####.#####.####");
        case '9': return glyph("####.####..####");
        case '.': return glyph("............#..");
        case '-': return glyph("......###......");
        default: return 0;
    }
}

}  // namespace detail

}  // namespace fieldscribe
