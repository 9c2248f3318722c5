#include "octnav/volume.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace octnav {

static_assert(std::endian::native == std::endian::little, "ioct payload is written as host-order u16");

void VolumeGeometry::validate() const {
    if (dims.x < 1 || dims.y < 1 || dims.z < 1) throw std::invalid_argument("volume dims must all be >= 1");
    for (double s : {spacing.x, spacing.y, spacing.z}) {
        if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("volume spacing must be finite and > 0");
    }
}

Vec3 VolumeGeometry::extent() const {
    return {double(dims.x - 1) * spacing.x, double(dims.y - 1) * spacing.y, double(dims.z - 1) * spacing.z};
}

bool VolumeGeometry::contains_lateral(double x_um, double y_um, double tol) const {
    const Vec3 e = extent();
    return x_um >= -tol && y_um >= -tol && x_um <= e.x() + tol && y_um <= e.y() + tol;
}

bool VolumeGeometry::contains(const MetricPoint& p, double tol) const {
    const Vec3 e = extent();
    return p.allFinite() && contains_lateral(p.x(), p.y(), tol) && p.z() >= -tol && p.z() <= e.z() + tol;
}

MetricPoint VolumeGeometry::voxel_to_metric(const VoxelIndex& v) const {
    if (v.x >= dims.x || v.y >= dims.y || v.z >= dims.z) throw std::out_of_range("voxel_to_metric: index outside volume");
    return {double(v.x) * spacing.x, double(v.y) * spacing.y, double(v.z) * spacing.z};
}

Vec3 VolumeGeometry::metric_to_voxel(const MetricPoint& p) const {
    if (!contains(p)) throw std::out_of_range("metric_to_voxel: point outside volume");
    return {p.x() / spacing.x, p.y() / spacing.y, p.z() / spacing.z};
}

IoctVolume::IoctVolume(const VolumeGeometry& geometry) : geometry_(geometry) {
    geometry_.validate();
    voxels_.assign(geometry_.dims.count(), 0);
}

IoctVolume::IoctVolume(const VolumeGeometry& geometry, std::vector<std::uint16_t> voxels)
    : geometry_(geometry), voxels_(std::move(voxels)) {
    geometry_.validate();
    if (voxels_.size() != geometry_.dims.count()) throw std::invalid_argument("voxel count does not match dims");
}

MetricPoint voxel_to_metric(const IoctVolume& volume, const VoxelIndex& v) {
    return volume.geometry().voxel_to_metric(v);
}

Vec3 metric_to_voxel(const IoctVolume& volume, const MetricPoint& p) {
    return volume.geometry().metric_to_voxel(p);
}

std::vector<std::uint8_t> dropped_bscans(const IoctVolume& volume) {
    const auto& d = volume.dims();
    std::vector<std::uint8_t> out(d.y, 0);
    const auto v = volume.voxels();
    for (std::size_t y = 0; y < d.y; ++y) {
        const auto first = v.begin() + std::ptrdiff_t(volume.index(0, y, 0));
        const auto last = first + std::ptrdiff_t(d.x * d.z);
        out[y] = std::all_of(first, last, [](std::uint16_t x) { return x == 0; }) ? 1 : 0;
    }
    return out;
}

Image2D<std::uint16_t> native_bscan(const IoctVolume& volume, std::size_t i) {
    const Dims& d = volume.dims();
    if (i >= d.y) throw std::out_of_range("native_bscan: B-scan index out of range");
    Image2D<std::uint16_t> out(d.x, d.z);
    for (std::size_t x = 0; x < d.x; ++x) {
        const auto a = volume.ascan(x, i);
        for (std::size_t z = 0; z < d.z; ++z) out(x, z) = a[z];
    }
    return out;
}

void save_volume(const IoctVolume& volume, const std::filesystem::path& path) {
    const auto& g = volume.geometry();
    nlohmann::ordered_json header = {
        {"dims", {g.dims.x, g.dims.y, g.dims.z}},
        {"spacing_um", {g.spacing.x, g.spacing.y, g.spacing.z}},
        {"dtype", "u16"},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << header.dump() << '\n';
    const auto v = volume.voxels();
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size_bytes()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

IoctVolume load_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open volume file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw FormatError("missing ioct header line");

    VolumeGeometry g;
    try {
        const auto h = nlohmann::json::parse(line);
        if (h.at("dtype").get<std::string>() != "u16") throw FormatError("unsupported dtype");
        const auto dims = h.at("dims");
        const auto sp = h.at("spacing_um");
        if (dims.size() != 3 || sp.size() != 3) throw FormatError("dims and spacing_um need three entries");
        for (const auto& d : dims) {
            if (!d.is_number_integer() || d.get<long long>() < 1) throw FormatError("dims must be positive integers");
        }
        g.dims = {dims[0].get<std::size_t>(), dims[1].get<std::size_t>(), dims[2].get<std::size_t>()};
        g.spacing = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad ioct header: ") + e.what());
    }
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }

    std::vector<std::uint16_t> voxels(g.dims.count());
    const auto want = std::streamsize(voxels.size() * sizeof(std::uint16_t));
    in.read(reinterpret_cast<char*>(voxels.data()), want);
    if (in.gcount() != want) {
        std::ostringstream msg;
        msg << "payload size mismatch: expected " << want << " bytes, got " << in.gcount();
        throw FormatError(msg.str());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("payload size mismatch: trailing bytes after voxels");
    return IoctVolume(g, std::move(voxels));
}

}  // namespace octnav
