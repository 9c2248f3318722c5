#include "octnav/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <png.h>

namespace octnav {

namespace {

template <typename T>
std::pair<double, double> min_max(const Image2D<T>& img) {
    if (img.empty()) return {0.0, 0.0};
    const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
    return {double(*lo), double(*hi)};
}

template <typename Out, typename In>
Image2D<Out> stretch(const Image2D<In>& src, double lo, double hi, double top) {
    Image2D<Out> out(src.width(), src.height());
    const double range = hi - lo;
    auto dst = out.pixels();
    auto s = src.pixels();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double t = range > 0.0 ? (double(s[i]) - lo) / range : 0.0;
        dst[i] = Out(std::lround(std::clamp(t, 0.0, 1.0) * top));
    }
    return out;
}

}  // namespace

Rescaled16 rescale_to_u16(const Image2D<float>& src) {
    const auto [lo, hi] = min_max(src);
    return {stretch<std::uint16_t>(src, lo, hi, 65535.0), lo, hi};
}

Image2D<std::uint8_t> rescale_to_u8(const Image2D<float>& src) {
    const auto [lo, hi] = min_max(src);
    return stretch<std::uint8_t>(src, lo, hi, 255.0);
}

Image2D<std::uint8_t> rescale_to_u8(const Image2D<std::uint16_t>& src) {
    const auto [lo, hi] = min_max(src);
    return stretch<std::uint8_t>(src, lo, hi, 255.0);
}

Image2D<std::uint8_t> scores_to_u8(const Image2D<float>& scores) {
    return stretch<std::uint8_t>(scores, 0.0, 1.0, 255.0);
}

void write_pgm(const std::filesystem::path& path, const Image2D<std::uint16_t>& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "P5\n" << image.width() << ' ' << image.height() << "\n65535\n";
    std::string buf(image.size() * 2, '\0');
    auto px = image.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        buf[2 * i] = char(px[i] >> 8);
        buf[2 * i + 1] = char(px[i] & 0xff);
    }
    out.write(buf.data(), std::streamsize(buf.size()));
}

void write_pgm(const std::filesystem::path& path, const Image2D<std::uint8_t>& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.data()), std::streamsize(image.size()));
}

Image2D<std::uint16_t> read_pgm16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    if (magic != "P5" || maxval != 65535 || !in) throw std::runtime_error("not a 16-bit binary PGM: " + path.string());
    std::string buf(w * h * 2, '\0');
    in.read(buf.data(), std::streamsize(buf.size()));
    if (in.gcount() != std::streamsize(buf.size())) throw std::runtime_error("truncated PGM: " + path.string());
    Image2D<std::uint16_t> img(w, h);
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = std::uint16_t((std::uint8_t(buf[2 * i]) << 8) | std::uint8_t(buf[2 * i + 1]));
    }
    return img;
}

std::string encode_png(const Image2D<std::uint8_t>& image) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = png_uint_32(image.width());
    png.height = png_uint_32(image.height());
    png.format = PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("png sizing failed: ") + png.message);
    }
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("png encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

}  // namespace octnav
