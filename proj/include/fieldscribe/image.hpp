#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fieldscribe {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;

    static Rgb from_hex(const std::string& hex);  // "#RRGGBB"
    std::string hex() const;
};

// Normalized xyxy box in [0,1]^4.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    bool valid() const;

    friend bool operator==(const Box&, const Box&) = default;
};

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 > x0 ? x1 - x0 : 0; }
    int height() const { return y1 > y0 ? y1 - y0 : 0; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Rounds each edge to the nearest pixel boundary.
PixelRect to_pixels(const Box& box, int width, int height);
// Expands outward to cover every pixel the box touches.
PixelRect to_pixels_covering(const Box& box, int width, int height);

class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {});

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return pixels_.empty(); }

    Rgb at(int x, int y) const;
    void set(int x, int y, Rgb c);
    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    void fill_rect(const PixelRect& rect, Rgb c);

    std::span<const std::uint8_t> bytes() const { return pixels_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;  // row-major RGB8
};

// Throws Error(DecodeError) on unreadable or malformed input.
Image read_png(const std::filesystem::path& path);
// Reads only the header.
std::array<int, 2> png_dimensions(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);

std::string base64_encode(std::span<const std::uint8_t> data);

// Single-pixel glyphs from a fixed 3x5 font; unknown characters render as blanks.
// Pixels for which `skip` returns true are left untouched.
template <typename SkipFn>
void draw_text(Image& image, int x, int y, const std::string& text, Rgb color, SkipFn skip);

namespace detail {
// Bit 14 is the top-left pixel, row-major, 3 bits per row.
std::uint16_t glyph_bits(char c);
}  // namespace detail

template <typename SkipFn>
void draw_text(Image& image, int x, int y, const std::string& text, Rgb color, SkipFn skip) {
    int cursor = x;
    for (char c : text) {
        const std::uint16_t bits = detail::glyph_bits(c);
        for (int row = 0; row < 5; ++row) {
            for (int col = 0; col < 3; ++col) {
                if (!(bits & (1u << (14 - (row * 3 + col))))) continue;
                const int px = cursor + col;
                const int py = y + row;
                if (image.in_bounds(px, py) && !skip(px, py)) image.set(px, py, color);
            }
        }
        cursor += 4;
    }
}

}  // namespace fieldscribe
