#pragma once

// 8-bit binary PGM (P5, maxval 255) reading and writing. read_image also
// accepts raw tensor files carrying an Image record.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cscf/error.hpp"
#include "cscf/grid.hpp"
#include "cscf/tensor_io.hpp"

namespace cscf {

// Largest accepted pixel count; guards against absurd headers.
inline constexpr std::size_t max_image_pixels = std::size_t{1} << 28;

// Clamp to [0,1], scale to 255 and round half up.
inline std::uint8_t quantize_u8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

namespace detail {

class PgmHeaderParser {
public:
    PgmHeaderParser(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), off_(start) {}

    std::size_t offset() const noexcept { return off_; }

    void skip_space_and_comments() {
        while (off_ < bytes_.size()) {
            const auto c = bytes_[off_];
            if (c == '#') {
                while (off_ < bytes_.size() && bytes_[off_] != '\n') ++off_;
            } else if (std::isspace(c)) {
                ++off_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char *field) {
        skip_space_and_comments();
        const auto start = off_;
        if (off_ >= bytes_.size()) throw FormatError(std::string("truncated header: missing ") + field, off_);
        if (!std::isdigit(bytes_[off_])) throw FormatError(std::string("malformed header: bad ") + field, off_);
        std::size_t v = 0;
        while (off_ < bytes_.size() && std::isdigit(bytes_[off_])) {
            const std::size_t digit = bytes_[off_] - '0';
            if (v > (std::numeric_limits<std::uint32_t>::max() - digit) / 10)
                throw FormatError(std::string("dimension overflow in ") + field, start);
            v = v * 10 + digit;
            ++off_;
        }
        return v;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void single_space() {
        if (off_ >= bytes_.size()) throw FormatError("truncated header", off_);
        if (!std::isspace(bytes_[off_])) throw FormatError("malformed header: expected whitespace", off_);
        ++off_;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t off_;
};

} // namespace detail

inline Image decode_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2) throw FormatError("truncated header", bytes.size());
    if (bytes[0] != 'P' || bytes[1] != '5') throw FormatError("malformed header: not a P5 PGM", 0);
    detail::PgmHeaderParser p(bytes, 2);
    const auto width = p.number("width");
    const auto height = p.number("height");
    const auto maxval = p.number("maxval");
    const auto hdr_end = p.offset();
    if (width == 0 || height == 0) throw FormatError("malformed header: zero dimension", hdr_end);
    if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval), hdr_end);
    if (width > max_image_pixels / height) throw FormatError("dimension overflow", hdr_end);
    p.single_space();
    const std::size_t start = p.offset();
    const std::size_t n = width * height;
    if (bytes.size() - start < n) throw FormatError("truncated payload", bytes.size());
    Image img(height, width);
    auto out = img.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = bytes[start + i] / 255.0;
    return img;
}

inline std::vector<std::uint8_t> encode_pgm(const Image &img) {
    if (img.empty()) throw ArgumentError("write_image: empty image");
    if (!all_finite(img.data())) throw ArgumentError("write_image: non-finite pixel");
    const std::string header =
        "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + img.size());
    for (double v : img.data()) out.push_back(quantize_u8(v));
    return out;
}

inline Image read_image(const std::filesystem::path &path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, tensor_magic)) {
        std::size_t off = 0;
        auto rec = decode_record(bytes, off);
        if (off != bytes.size()) throw FormatError("trailing bytes after tensor", off);
        auto img = from_record<Image>(rec);
        if (!all_finite(img.data())) throw FormatError("non-finite pixel in tensor", 0);
        return img;
    }
    return decode_pgm(bytes);
}

inline void write_image(const Image &img, const std::filesystem::path &path) {
    write_file_bytes(path, encode_pgm(img));
}

} // namespace cscf
