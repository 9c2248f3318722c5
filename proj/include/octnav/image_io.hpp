#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "octnav/image.hpp"

namespace octnav {

struct Rescaled16 {
    Image2D<std::uint16_t> image;
    double min = 0.0;  ///< source value mapped to 0
    double max = 0.0;  ///< source value mapped to 65535
};

/// Linear min/max stretch to [0, 65535]. A constant image maps to all zeros.
Rescaled16 rescale_to_u16(const Image2D<float>& src);
/// Linear min/max stretch to [0, 255].
Image2D<std::uint8_t> rescale_to_u8(const Image2D<float>& src);
Image2D<std::uint8_t> rescale_to_u8(const Image2D<std::uint16_t>& src);
/// Scores in [0,1] to 0..255.
Image2D<std::uint8_t> scores_to_u8(const Image2D<float>& scores);

/// Binary PGM (P5). 16-bit samples are written big-endian as the format requires.
void write_pgm(const std::filesystem::path& path, const Image2D<std::uint16_t>& image);
void write_pgm(const std::filesystem::path& path, const Image2D<std::uint8_t>& image);
Image2D<std::uint16_t> read_pgm16(const std::filesystem::path& path);

/// 8-bit grayscale PNG, returned as the encoded byte string.
std::string encode_png(const Image2D<std::uint8_t>& image);

}  // namespace octnav
