#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "octnav/image.hpp"
#include "octnav/volume.hpp"

namespace octnav {

struct PlaneSpec {
    MetricPoint point = MetricPoint::Zero();
    Vec3 normal = Vec3::UnitY();
};

/// Vertical plane through (tx, ty) with normal (sin tz, cos tz, 0).
/// Throws std::out_of_range when (tx, ty) lies outside the lateral bounds.
PlaneSpec tool_aligned_plane(double theta_z, double tx_um, double ty_um, const VolumeGeometry& geometry);

/// Range of the in-plane horizontal coordinate u, in micrometres from plane.point.
struct SliceExtent {
    double u_min = 0.0;
    double u_max = 0.0;
};

/**
 * Pixel grid of a vertical slice. Column c sits at u = u_min + c * u_spacing
 * along the horizontal axis h = n x k; row z is the volume's axial sample z.
 */
struct SliceGeometry {
    PlaneSpec plane;
    Vec3 horizontal = Vec3::UnitX();
    double u_min = 0.0;
    double u_spacing = 1.0;
    double z_spacing = 1.0;
    std::size_t width = 0;
    std::size_t height = 0;

    MetricPoint to_volume(double col, double row) const;
    /// Inverse of to_volume for points on the plane (the normal component is dropped).
    Eigen::Vector2d to_pixel(const MetricPoint& p) const;
    /// Horizontal coordinate of column `col` in micrometres relative to plane.point.
    double u_at(double col) const { return u_min + col * u_spacing; }
};

/// Throws std::invalid_argument for non-vertical planes and std::domain_error when the plane misses the volume.
SliceGeometry slice_geometry(const VolumeGeometry& volume, const PlaneSpec& plane,
                             std::optional<SliceExtent> u_extent = std::nullopt,
                             std::optional<double> u_spacing = std::nullopt);

struct VirtualBScan {
    SliceGeometry geometry;
    Image2D<float> image;        ///< width = columns along u, height = dims.z
    std::vector<std::uint8_t> valid;  ///< per column: 1 when the column lies inside the volume

    PixelSpacing spacing() const { return {geometry.u_spacing, geometry.z_spacing}; }
};

/// Slice by lateral bilinear interpolation of the four surrounding A-scans.
/// Columns outside the volume are zero and flagged invalid. B-scans flagged in
/// `missing` are skipped: such columns interpolate between the nearest present
/// B-scans on either side (see dropped_bscans).
VirtualBScan virtual_bscan(const IoctVolume& volume, const PlaneSpec& plane,
                           std::optional<SliceExtent> u_extent = std::nullopt,
                           std::optional<double> u_spacing = std::nullopt,
                           std::span<const std::uint8_t> missing = {});
VirtualBScan virtual_bscan_serial(const IoctVolume& volume, const PlaneSpec& plane,
                                  std::optional<SliceExtent> u_extent = std::nullopt,
                                  std::optional<double> u_spacing = std::nullopt,
                                  std::span<const std::uint8_t> missing = {});

}  // namespace octnav
