#include <fstream>

#include "doctest.h"
#include "octnav/volume.hpp"
#include "support.hpp"

using namespace octnav;

TEST_CASE("default geometry") {
    VolumeGeometry g;
    CHECK(g.dims == Dims{1000, 100, 1024});
    CHECK(g.spacing == Spacing{2.5, 25.0, 3.0});
    CHECK(g.extent().isApprox(Vec3(999 * 2.5, 99 * 25.0, 1023 * 3.0)));
}

TEST_CASE("voxel and metric coordinates") {
    IoctVolume v(VolumeGeometry{Dims{10, 4, 8}, Spacing{2.5, 25, 3}});
    CHECK(voxel_to_metric(v, {0, 0, 0}) == MetricPoint(0, 0, 0));
    CHECK(voxel_to_metric(v, {4, 2, 5}) == MetricPoint(10, 50, 15));
    CHECK(metric_to_voxel(v, MetricPoint(10, 50, 15)).isApprox(Vec3(4, 2, 5)));
    CHECK_THROWS_AS(voxel_to_metric(v, {10, 0, 0}), std::out_of_range);
    CHECK_THROWS_AS(metric_to_voxel(v, MetricPoint(-1, 0, 0)), std::out_of_range);

    for (std::size_t x = 0; x < 10; ++x)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t z = 0; z < 8; ++z) {
                const Vec3 back = metric_to_voxel(v, voxel_to_metric(v, {x, y, z}));
                CHECK(back.isApprox(Vec3(double(x), double(y), double(z)), 1e-12));
            }
}

TEST_CASE("storage order is A-scan major") {
    IoctVolume v(VolumeGeometry{Dims{3, 2, 4}, Spacing{1, 1, 1}});
    CHECK(v.index(0, 0, 1) == 1);
    CHECK(v.index(1, 0, 0) == 4);
    CHECK(v.index(0, 1, 0) == 12);
    v(2, 1, 3) = 77;
    CHECK(v.ascan(2, 1)[3] == 77);
    CHECK(native_bscan(v, 1)(2, 3) == 77);
    CHECK_THROWS_AS(native_bscan(v, 2), std::out_of_range);
}

TEST_CASE("invalid geometry is rejected") {
    CHECK_THROWS_AS(IoctVolume(VolumeGeometry{Dims{0, 1, 1}, Spacing{1, 1, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(IoctVolume(VolumeGeometry{Dims{1, 1, 1}, Spacing{1, 0, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(IoctVolume(VolumeGeometry{Dims{2, 1, 1}, Spacing{1, 1, 1}}, std::vector<std::uint16_t>(3)),
                    std::invalid_argument);
}

TEST_CASE("ioct round trip and format errors") {
    IoctVolume v(VolumeGeometry{Dims{5, 3, 7}, Spacing{2.5, 25, 3}});
    for (std::size_t i = 0; i < v.voxels().size(); ++i) v.voxels()[i] = std::uint16_t(i * 37);
    const auto path = testing::temp_path("roundtrip.ioct");
    save_volume(v, path);
    CHECK(load_volume(path) == v);

    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == R"({"dims":[5,3,7],"spacing_um":[2.5,25.0,3.0],"dtype":"u16"})");
    in.close();

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 2);
    CHECK_THROWS_AS(load_volume(path), FormatError);

    save_volume(v, path);
    std::ofstream(path, std::ios::app | std::ios::binary) << "xx";
    CHECK_THROWS_AS(load_volume(path), FormatError);

    std::ofstream(path, std::ios::binary) << R"({"dims":[2,2,2],"spacing_um":[1,1,1],"dtype":"f32"})" << '\n';
    CHECK_THROWS_AS(load_volume(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("default-size file loads with default spacing") {
    const auto path = testing::temp_path("default.ioct");
    save_volume(IoctVolume(VolumeGeometry{}), path);
    const IoctVolume v = load_volume(path);
    CHECK(v.dims() == kDefaultDims);
    CHECK(v.spacing() == kDefaultSpacing);
    std::filesystem::remove(path);
}
