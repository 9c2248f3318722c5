#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>

#include "octnav/image.hpp"
#include "octnav/volume.hpp"

namespace octnav {

enum class ProjectionOp { Mean, Min, Max };

std::string_view projection_op_name(ProjectionOp op);
ProjectionOp parse_projection_op(std::string_view name);

/// Half-open range of axial samples [begin, end) reduced by the projection.
struct DepthWindow {
    std::size_t begin = 0;
    std::size_t end = std::numeric_limits<std::size_t>::max();  ///< clipped to dims.z
};

/// One value per A-scan: width X, height Y.
struct AxialProjectionImage {
    Image2D<float> pixels;
    ProjectionOp op = ProjectionOp::Mean;
    std::string source_id;
    PixelSpacing spacing;

    std::size_t width() const { return pixels.width(); }
    std::size_t height() const { return pixels.height(); }
};

/// Reduces every A-scan with `op`. Sums use integer accumulation, so the
/// result does not depend on the number of threads.
AxialProjectionImage axial_projection(const IoctVolume& volume, ProjectionOp op = ProjectionOp::Mean,
                                      DepthWindow window = {}, std::string source_id = {});
AxialProjectionImage axial_projection_serial(const IoctVolume& volume, ProjectionOp op = ProjectionOp::Mean,
                                             DepthWindow window = {}, std::string source_id = {});

}  // namespace octnav
