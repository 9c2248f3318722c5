#include "octnav/slicing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace octnav {

namespace {

constexpr double kLateralTol = 1e-6;
constexpr std::size_t kRowBlock = 64;

/// Interval of u where point + u * h stays inside [lo, hi] on one axis.
void clip_axis(double p, double h, double lo, double hi, double& u0, double& u1) {
    if (std::abs(h) < 1e-15) {
        if (p < lo - kLateralTol || p > hi + kLateralTol) u0 = std::numeric_limits<double>::infinity();
        return;
    }
    const double a = (lo - p) / h;
    const double b = (hi - p) / h;
    u0 = std::max(u0, std::min(a, b));
    u1 = std::min(u1, std::max(a, b));
}

/// Four A-scan offsets and bilinear weights of one slice column.
struct ColumnTap {
    std::size_t i00 = 0, i10 = 0, i01 = 0, i11 = 0;
    float w00 = 0, w10 = 0, w01 = 0, w11 = 0;
    bool valid = false;
};

void axis_cell(double f, std::size_t n, std::size_t& i, double& w) {
    if (n == 1) {
        i = 0;
        w = 0.0;
        return;
    }
    f = std::clamp(f, 0.0, double(n - 1));
    i = std::min(std::size_t(f), n - 2);
    w = f - double(i);
}

bool is_missing(std::span<const std::uint8_t> missing, std::size_t y) { return y < missing.size() && missing[y]; }

/// Rows and weight along y skipping missing B-scans; false when none is left.
bool bridge_rows(double f, std::span<const std::uint8_t> missing, std::size_t n, std::size_t& lo, std::size_t& hi,
                 double& w) {
    f = std::clamp(f, 0.0, double(n - 1));
    std::ptrdiff_t a = std::ptrdiff_t(std::floor(f)), b = std::ptrdiff_t(std::ceil(f));
    while (a >= 0 && is_missing(missing, std::size_t(a))) --a;
    while (b < std::ptrdiff_t(n) && is_missing(missing, std::size_t(b))) ++b;
    const bool has_a = a >= 0, has_b = b < std::ptrdiff_t(n);
    if (!has_a && !has_b) return false;
    if (!has_a) a = b;
    if (!has_b) b = a;
    lo = std::size_t(a);
    hi = std::size_t(b);
    w = hi > lo ? (f - double(lo)) / double(hi - lo) : 0.0;
    return true;
}

std::vector<ColumnTap> column_taps(const IoctVolume& volume, const SliceGeometry& g,
                                   std::span<const std::uint8_t> missing) {
    const auto& vg = volume.geometry();
    std::vector<ColumnTap> taps(g.width);
    for (std::size_t c = 0; c < g.width; ++c) {
        const MetricPoint p = g.to_volume(double(c), 0.0);
        ColumnTap& t = taps[c];
        if (!vg.contains_lateral(p.x(), p.y(), kLateralTol)) continue;
        std::size_t ix = 0, iy = 0;
        double wx = 0.0, wy = 0.0;
        axis_cell(p.x() / vg.spacing.x, vg.dims.x, ix, wx);
        axis_cell(p.y() / vg.spacing.y, vg.dims.y, iy, wy);
        const std::size_t jx = std::min(ix + 1, vg.dims.x - 1);
        std::size_t jy = std::min(iy + 1, vg.dims.y - 1);
        if ((is_missing(missing, iy) && wy < 1.0) || (is_missing(missing, jy) && wy > 0.0)) {
            if (!bridge_rows(p.y() / vg.spacing.y, missing, vg.dims.y, iy, jy, wy)) continue;
        }
        t.i00 = volume.index(ix, iy, 0);
        t.i10 = volume.index(jx, iy, 0);
        t.i01 = volume.index(ix, jy, 0);
        t.i11 = volume.index(jx, jy, 0);
        t.w00 = float((1.0 - wx) * (1.0 - wy));
        t.w10 = float(wx * (1.0 - wy));
        t.w01 = float((1.0 - wx) * wy);
        t.w11 = float(wx * wy);
        t.valid = true;
    }
    return taps;
}

void fill_block(const IoctVolume& volume, const std::vector<ColumnTap>& taps, std::size_t z0, std::size_t z1,
                Image2D<float>& out) {
    const std::uint16_t* v = volume.voxels().data();
    for (std::size_t c = 0; c < taps.size(); ++c) {
        const ColumnTap& t = taps[c];
        if (!t.valid) continue;
        for (std::size_t z = z0; z < z1; ++z) {
            out(c, z) = t.w00 * float(v[t.i00 + z]) + t.w10 * float(v[t.i10 + z]) + t.w01 * float(v[t.i01 + z]) +
                        t.w11 * float(v[t.i11 + z]);
        }
    }
}

VirtualBScan prepare(const IoctVolume& volume, const PlaneSpec& plane, std::optional<SliceExtent> extent,
                     std::optional<double> spacing, std::span<const std::uint8_t> missing, std::vector<ColumnTap>& taps) {
    VirtualBScan s;
    s.geometry = slice_geometry(volume.geometry(), plane, extent, spacing);
    s.image = Image2D<float>(s.geometry.width, s.geometry.height, 0.0f);
    taps = column_taps(volume, s.geometry, missing);
    s.valid.resize(taps.size());
    for (std::size_t c = 0; c < taps.size(); ++c) s.valid[c] = taps[c].valid ? 1 : 0;
    return s;
}

}  // namespace

PlaneSpec tool_aligned_plane(double theta_z, double tx_um, double ty_um, const VolumeGeometry& geometry) {
    if (!std::isfinite(theta_z)) throw std::invalid_argument("tool_aligned_plane: theta_z must be finite");
    if (!geometry.contains_lateral(tx_um, ty_um, kLateralTol)) {
        throw std::out_of_range("tool_aligned_plane: tip outside lateral volume bounds");
    }
    return {MetricPoint(tx_um, ty_um, 0.0), Vec3(std::sin(theta_z), std::cos(theta_z), 0.0)};
}

MetricPoint SliceGeometry::to_volume(double col, double row) const {
    MetricPoint p = plane.point + u_at(col) * horizontal;
    p.z() = row * z_spacing;
    return p;
}

Eigen::Vector2d SliceGeometry::to_pixel(const MetricPoint& p) const {
    const double u = (p - plane.point).dot(horizontal);
    return {(u - u_min) / u_spacing, p.z() / z_spacing};
}

SliceGeometry slice_geometry(const VolumeGeometry& volume, const PlaneSpec& plane, std::optional<SliceExtent> u_extent,
                             std::optional<double> u_spacing) {
    volume.validate();
    if (std::abs(plane.normal.norm() - 1.0) > 1e-9) throw std::invalid_argument("slice plane normal must be unit length");
    if (std::abs(plane.normal.z()) > 1e-9) throw std::invalid_argument("only vertical slice planes are supported");

    SliceGeometry g;
    g.plane = plane;
    g.horizontal = plane.normal.cross(Vec3::UnitZ());
    g.horizontal.z() = 0.0;
    g.horizontal.normalize();
    g.z_spacing = volume.spacing.z;
    g.height = volume.dims.z;
    g.u_spacing = u_spacing.value_or(volume.spacing.x);
    if (!(g.u_spacing > 0.0)) throw std::invalid_argument("slice u_spacing must be > 0");

    const Vec3 e = volume.extent();
    double u0 = -std::numeric_limits<double>::infinity();
    double u1 = std::numeric_limits<double>::infinity();
    clip_axis(plane.point.x(), g.horizontal.x(), 0.0, e.x(), u0, u1);
    clip_axis(plane.point.y(), g.horizontal.y(), 0.0, e.y(), u0, u1);
    if (!(u0 <= u1 + kLateralTol)) throw std::domain_error("slice plane misses the volume");

    const SliceExtent ext = u_extent.value_or(SliceExtent{u0, std::max(u0, u1)});
    if (!(ext.u_max >= ext.u_min)) throw std::invalid_argument("slice extent must have u_max >= u_min");
    g.u_min = ext.u_min;
    g.width = std::size_t(std::floor((ext.u_max - ext.u_min) / g.u_spacing + 1e-9)) + 1;
    return g;
}

VirtualBScan virtual_bscan(const IoctVolume& volume, const PlaneSpec& plane, std::optional<SliceExtent> u_extent,
                           std::optional<double> u_spacing, std::span<const std::uint8_t> missing) {
    std::vector<ColumnTap> taps;
    VirtualBScan s = prepare(volume, plane, u_extent, u_spacing, missing, taps);
    const auto blocks = std::int64_t((s.geometry.height + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < blocks; ++b) {
        const std::size_t z0 = std::size_t(b) * kRowBlock;
        fill_block(volume, taps, z0, std::min(z0 + kRowBlock, s.geometry.height), s.image);
    }
    return s;
}

VirtualBScan virtual_bscan_serial(const IoctVolume& volume, const PlaneSpec& plane,
                                  std::optional<SliceExtent> u_extent, std::optional<double> u_spacing,
                                  std::span<const std::uint8_t> missing) {
    std::vector<ColumnTap> taps;
    VirtualBScan s = prepare(volume, plane, u_extent, u_spacing, missing, taps);
    fill_block(volume, taps, 0, s.geometry.height, s.image);
    return s;
}

}  // namespace octnav
