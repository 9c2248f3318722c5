#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace octnav {

/// Metric size of one pixel of a 2D image, in micrometres.
struct PixelSpacing {
    double x = 1.0;  ///< horizontal (columns)
    double y = 1.0;  ///< vertical (rows)
};

/**
 * Dense row-major 2D image. Pixel (x, y) lives at index y * width + x, so a
 * "row" is one value of y and iterating over the flat buffer visits pixels in
 * row-major order.
 */
template <typename T>
class Image2D {
  public:
    Image2D() = default;
    Image2D(std::size_t width, std::size_t height, T fill = T{})
        : width_(width), height_(height), data_(width * height, fill) {}

    std::size_t width() const { return width_; }
    std::size_t height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
    const T& operator()(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }

    T& at(std::size_t x, std::size_t y) {
        if (x >= width_ || y >= height_) throw std::out_of_range("Image2D::at: pixel outside image");
        return (*this)(x, y);
    }
    const T& at(std::size_t x, std::size_t y) const {
        if (x >= width_ || y >= height_) throw std::out_of_range("Image2D::at: pixel outside image");
        return (*this)(x, y);
    }

    std::span<T> row(std::size_t y) { return {data_.data() + y * width_, width_}; }
    std::span<const T> row(std::size_t y) const { return {data_.data() + y * width_, width_}; }

    std::span<T> pixels() { return data_; }
    std::span<const T> pixels() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    bool operator==(const Image2D&) const = default;

  private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<T> data_;
};

}  // namespace octnav
