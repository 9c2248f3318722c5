#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "octnav/image.hpp"

namespace octnav {

/// A point in the volume frame, in micrometres. Origin at the centre of voxel
/// (0,0,0); +Z points down into the tissue (optical depth).
using MetricPoint = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Dims {
    std::size_t x = 1;  ///< A-scans per B-scan
    std::size_t y = 1;  ///< B-scans per volume
    std::size_t z = 1;  ///< axial samples per A-scan

    std::size_t count() const { return x * y * z; }
    bool operator==(const Dims&) const = default;
};

/// Voxel spacing in micrometres.
struct Spacing {
    double x = 1.0;
    double y = 1.0;
    double z = 1.0;
    bool operator==(const Spacing&) const = default;
};

inline constexpr Dims kDefaultDims{1000, 100, 1024};
inline constexpr Spacing kDefaultSpacing{2.5, 25.0, 3.0};

struct VoxelIndex {
    std::size_t x = 0;
    std::size_t y = 0;
    std::size_t z = 0;
};

/// Grid extent and spacing without voxel storage. Oracles and planners that
/// only need coordinates work on this.
struct VolumeGeometry {
    Dims dims = kDefaultDims;
    Spacing spacing = kDefaultSpacing;

    void validate() const;

    /// Largest metric coordinate along each axis (centre of the last voxel).
    Vec3 extent() const;
    bool contains_lateral(double x_um, double y_um, double tol = 1e-9) const;
    bool contains(const MetricPoint& p, double tol = 1e-9) const;

    MetricPoint voxel_to_metric(const VoxelIndex& v) const;
    Vec3 metric_to_voxel(const MetricPoint& p) const;

    bool operator==(const VolumeGeometry&) const = default;
};

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/**
 * Anisotropic iOCT intensity volume.
 *
 * Voxels are stored A-scan-major: z fastest, then x, then y. One A-scan is a
 * contiguous run of dims.z samples, one B-scan is dims.x consecutive A-scans.
 */
class IoctVolume {
  public:
    IoctVolume() : IoctVolume(VolumeGeometry{Dims{1, 1, 1}, Spacing{1, 1, 1}}) {}
    explicit IoctVolume(const VolumeGeometry& geometry);
    IoctVolume(const VolumeGeometry& geometry, std::vector<std::uint16_t> voxels);

    const VolumeGeometry& geometry() const { return geometry_; }
    const Dims& dims() const { return geometry_.dims; }
    const Spacing& spacing() const { return geometry_.spacing; }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return (y * geometry_.dims.x + x) * geometry_.dims.z + z;
    }
    std::uint16_t operator()(std::size_t x, std::size_t y, std::size_t z) const { return voxels_[index(x, y, z)]; }
    std::uint16_t& operator()(std::size_t x, std::size_t y, std::size_t z) { return voxels_[index(x, y, z)]; }

    std::span<const std::uint16_t> ascan(std::size_t x, std::size_t y) const {
        return {voxels_.data() + index(x, y, 0), geometry_.dims.z};
    }
    std::span<std::uint16_t> ascan(std::size_t x, std::size_t y) {
        return {voxels_.data() + index(x, y, 0), geometry_.dims.z};
    }
    /// All A-scans of B-scan y, back to back.
    std::span<std::uint16_t> bscan_storage(std::size_t y) {
        return {voxels_.data() + index(0, y, 0), geometry_.dims.x * geometry_.dims.z};
    }

    std::span<const std::uint16_t> voxels() const { return voxels_; }
    std::span<std::uint16_t> voxels() { return voxels_; }

    bool operator==(const IoctVolume&) const = default;

  private:
    VolumeGeometry geometry_;
    std::vector<std::uint16_t> voxels_;
};

MetricPoint voxel_to_metric(const IoctVolume& volume, const VoxelIndex& v);
Vec3 metric_to_voxel(const IoctVolume& volume, const MetricPoint& p);

/// Per B-scan flag: 1 when every voxel is zero (a dropped acquisition).
std::vector<std::uint8_t> dropped_bscans(const IoctVolume& volume);

/// Native B-scan i as an X (width) by Z (height) image; a straight copy.
Image2D<std::uint16_t> native_bscan(const IoctVolume& volume, std::size_t i);

/// `*.ioct`: one JSON header line then little-endian u16 voxels in storage order.
void save_volume(const IoctVolume& volume, const std::filesystem::path& path);
IoctVolume load_volume(const std::filesystem::path& path);

}  // namespace octnav
