#include "octnav/projection.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>

namespace octnav {

std::string_view projection_op_name(ProjectionOp op) {
    switch (op) {
        case ProjectionOp::Mean: return "mean";
        case ProjectionOp::Min: return "min";
        case ProjectionOp::Max: return "max";
    }
    return "mean";
}

ProjectionOp parse_projection_op(std::string_view name) {
    if (name == "mean") return ProjectionOp::Mean;
    if (name == "min") return ProjectionOp::Min;
    if (name == "max") return ProjectionOp::Max;
    throw std::invalid_argument("unknown projection operator: " + std::string(name));
}

namespace {

float reduce(std::span<const std::uint16_t> a, ProjectionOp op) {
    switch (op) {
        case ProjectionOp::Mean: {
            std::uint64_t sum = 0;
            for (std::uint16_t v : a) sum += v;
            return float(double(sum) / double(a.size()));
        }
        case ProjectionOp::Min: return float(*std::min_element(a.begin(), a.end()));
        case ProjectionOp::Max: return float(*std::max_element(a.begin(), a.end()));
    }
    return 0.0f;
}

AxialProjectionImage prepare(const IoctVolume& volume, ProjectionOp op, DepthWindow& window, std::string id) {
    const auto& d = volume.dims();
    window.end = std::min(window.end, d.z);
    if (window.begin >= window.end) throw std::invalid_argument("axial_projection: empty depth window");
    return {Image2D<float>(d.x, d.y), op, std::move(id), {volume.spacing().x, volume.spacing().y}};
}

void project_row(const IoctVolume& volume, ProjectionOp op, const DepthWindow& w, std::size_t y,
                 AxialProjectionImage& out) {
    auto row = out.pixels.row(y);
    for (std::size_t x = 0; x < row.size(); ++x) row[x] = reduce(volume.ascan(x, y).subspan(w.begin, w.end - w.begin), op);
}

}  // namespace

AxialProjectionImage axial_projection(const IoctVolume& volume, ProjectionOp op, DepthWindow window,
                                      std::string source_id) {
    AxialProjectionImage out = prepare(volume, op, window, std::move(source_id));
    const auto ny = std::int64_t(volume.dims().y);
#pragma omp parallel for schedule(static)
    for (std::int64_t y = 0; y < ny; ++y) project_row(volume, op, window, std::size_t(y), out);
    return out;
}

AxialProjectionImage axial_projection_serial(const IoctVolume& volume, ProjectionOp op, DepthWindow window,
                                             std::string source_id) {
    AxialProjectionImage out = prepare(volume, op, window, std::move(source_id));
    for (std::size_t y = 0; y < volume.dims().y; ++y) project_row(volume, op, window, y, out);
    return out;
}

}  // namespace octnav
