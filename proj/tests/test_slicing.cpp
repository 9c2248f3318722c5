#include <queue>
#include <random>

#include "doctest.h"
#include "octnav/phantom.hpp"
#include "octnav/slicing.hpp"
#include "support.hpp"

using namespace octnav;
using testing::deg;

TEST_CASE("tool-aligned plane") {
    const VolumeGeometry g;
    PlaneSpec p = tool_aligned_plane(0.0, 100, 200, g);
    CHECK(p.point == MetricPoint(100, 200, 0));
    CHECK(p.normal == Vec3(0, 1, 0));
    p = tool_aligned_plane(deg(90), 100, 200, g);
    CHECK(p.normal.isApprox(Vec3(1, 0, 0)));
    p = tool_aligned_plane(deg(30), 100, 200, g);
    CHECK(p.normal.x() == doctest::Approx(0.5));
    CHECK(p.normal.y() == doctest::Approx(std::sqrt(3.0) / 2));
    CHECK(std::abs(p.normal.norm() - 1.0) < 1e-12);
    CHECK_THROWS_AS(tool_aligned_plane(0.0, -5, 200, g), std::out_of_range);
}

TEST_CASE("native B-scan planes reproduce native B-scans bit for bit") {
    PhantomScene s = testing::small_scene();
    const IoctVolume v = render_volume(s);
    for (std::size_t i = 0; i < v.dims().y; ++i) {
        const VirtualBScan b = virtual_bscan(v, PlaneSpec{MetricPoint(0, double(i) * 25.0, 0), Vec3::UnitY()});
        const auto native = native_bscan(v, i);
        REQUIRE(b.image.width() == native.width());
        REQUIRE(b.image.height() == native.height());
        bool same = true;
        for (std::size_t k = 0; k < native.size(); ++k) same = same && b.image.pixels()[k] == float(native.pixels()[k]);
        CHECK(same);
    }
}

TEST_CASE("linear lateral fields are reproduced exactly") {
    IoctVolume v(VolumeGeometry{Dims{120, 30, 4}, kDefaultSpacing});
    for (std::size_t y = 0; y < 30; ++y)
        for (std::size_t x = 0; x < 120; ++x)
            for (std::size_t z = 0; z < 4; ++z) v(x, y, z) = std::uint16_t(x + 2 * y + 100 * z);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI), px(0, 119 * 2.5), py(0, 29 * 25.0);
    for (int trial = 0; trial < 20; ++trial) {
        const PlaneSpec plane = tool_aligned_plane(ang(rng), px(rng), py(rng), v.geometry());
        const VirtualBScan b = virtual_bscan(v, plane);
        for (std::size_t c = 0; c < b.image.width(); ++c) {
            REQUIRE(b.valid[c]);
            for (std::size_t z = 0; z < 4; ++z) {
                const MetricPoint p = b.geometry.to_volume(double(c), double(z));
                const double want = p.x() / 2.5 + 2.0 * p.y() / 25.0 + 100.0 * double(z);
                CHECK(std::abs(b.image(c, z) - want) <= 1e-6 * std::max(1.0, std::abs(want)));
            }
        }
    }
}

TEST_CASE("slice geometry maps pixels to the plane and back") {
    const VolumeGeometry g;
    const SliceGeometry s = slice_geometry(g, tool_aligned_plane(deg(35), 1000, 1200, g));
    CHECK(s.horizontal.isApprox(Vec3(std::cos(deg(35)), -std::sin(deg(35)), 0)));
    const MetricPoint p = s.to_volume(17.25, 40.5);
    CHECK(std::abs((p - s.plane.point).dot(s.plane.normal)) < 1e-9);
    CHECK(s.to_pixel(p).isApprox(Eigen::Vector2d(17.25, 40.5)));
    CHECK(g.contains_lateral(s.to_volume(0, 0).x(), s.to_volume(0, 0).y(), 1e-6));
    const MetricPoint last = s.to_volume(double(s.width - 1), 0);
    CHECK(g.contains_lateral(last.x(), last.y(), 1e-6));
}

TEST_CASE("out-of-volume columns are zero and invalid") {
    PhantomScene s = testing::small_scene();
    const IoctVolume v = render_volume(s);
    const VirtualBScan b = virtual_bscan(v, PlaneSpec{MetricPoint(100, 300, 0), Vec3::UnitY()}, SliceExtent{-200, 600});
    std::size_t invalid = 0;
    for (std::size_t c = 0; c < b.image.width(); ++c) {
        if (b.valid[c]) continue;
        ++invalid;
        for (std::size_t z = 0; z < b.image.height(); ++z) CHECK(b.image(c, z) == 0.0f);
    }
    CHECK(invalid > 0);
}

TEST_CASE("slice errors") {
    const IoctVolume v(VolumeGeometry{Dims{10, 10, 4}, kDefaultSpacing});
    CHECK_THROWS_AS(virtual_bscan(v, PlaneSpec{MetricPoint(0, 0, 0), Vec3(0, 0.6, 0.8)}), std::invalid_argument);
    CHECK_THROWS_AS(virtual_bscan(v, PlaneSpec{MetricPoint(0, -500, 0), Vec3::UnitY()}), std::domain_error);
}

TEST_CASE("serial and parallel slices agree") {
    const IoctVolume v = render_volume(testing::small_scene());
    const PlaneSpec p = tool_aligned_plane(deg(23), 300, 400, v.geometry());
    const VirtualBScan a = virtual_bscan(v, p), b = virtual_bscan_serial(v, p);
    CHECK(a.image == b.image);
    CHECK(a.valid == b.valid);
}

TEST_CASE("needle along a 45 degree plane is one straight bright segment") {
    PhantomScene s = testing::clean_scene();
    s.geometry = VolumeGeometry{Dims{300, 40, 800}, kDefaultSpacing};
    s.needle = NeedleModel{compose_pose(deg(45), deg(20), MetricPoint(500, 450, 1000)), 55, 6000};
    const IoctVolume v = render_volume(s);
    const VirtualBScan b = virtual_bscan(v, tool_aligned_plane(deg(45), 500, 450, v.geometry()));

    // Pixels well inside the rendered needle band (value close to the needle level), above the retina.
    const std::size_t w = b.image.width(), h = b.image.height();
    std::vector<std::uint8_t> on(w * h, 0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < w * h; ++i) {
        const float x = b.image.pixels()[i];
        on[i] = x > 11000.0f && x < 13000.0f && i / w < 520;
        count += on[i];
    }
    REQUIRE(count > 1000);
    // One 8-connected component holding nearly all of them.
    std::vector<std::uint8_t> seen(w * h, 0);
    std::size_t largest = 0;
    for (std::size_t s0 = 0; s0 < w * h; ++s0) {
        if (!on[s0] || seen[s0]) continue;
        std::size_t n = 0;
        std::queue<std::size_t> q;
        q.push(s0);
        seen[s0] = 1;
        while (!q.empty()) {
            const std::size_t i = q.front();
            q.pop();
            ++n;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto x = std::ptrdiff_t(i % w) + dx, y = std::ptrdiff_t(i / w) + dy;
                    if (x < 0 || y < 0 || x >= std::ptrdiff_t(w) || y >= std::ptrdiff_t(h)) continue;
                    const auto j = std::size_t(y) * w + std::size_t(x);
                    if (on[j] && !seen[j]) {
                        seen[j] = 1;
                        q.push(j);
                    }
                }
        }
        largest = std::max(largest, n);
    }
    CHECK(double(largest) > 0.95 * double(count));

    // Centre of the band follows the analytic axis.
    const Vec3 d = s.needle->pose.direction();
    for (double t : {-100.0, -300.0, -600.0}) {
        const MetricPoint p = s.needle->pose.tip + t * d;
        const Eigen::Vector2d px = b.geometry.to_pixel(s.to_optical(p));
        const auto c = std::size_t(std::lround(px.x()));
        double sum = 0, wz = 0;
        for (std::size_t z = 0; z < h; ++z) {
            if (on[z * w + c]) {
                sum += double(z);
                wz += 1.0;
            }
        }
        REQUIRE(wz > 0);
        CHECK(std::abs(sum / wz - px.y()) < 2.0);
    }
}

TEST_CASE("dropped B-scans are bridged by their neighbours") {
    IoctVolume v(VolumeGeometry{Dims{60, 12, 3}, kDefaultSpacing});
    for (std::size_t y = 0; y < 12; ++y)
        for (std::size_t x = 0; x < 60; ++x)
            for (std::size_t z = 0; z < 3; ++z) v(x, y, z) = std::uint16_t(10 + x + 40 * y + 1000 * z);
    for (std::size_t y : {5u, 6u}) {
        auto b = v.bscan_storage(y);
        std::fill(b.begin(), b.end(), std::uint16_t{0});
    }
    const auto missing = dropped_bscans(v);
    CHECK(missing == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0});

    const PlaneSpec plane = tool_aligned_plane(deg(60), 70, 140, v.geometry());
    const VirtualBScan raw = virtual_bscan(v, plane);
    const VirtualBScan fixed = virtual_bscan(v, plane, {}, {}, missing);
    CHECK(fixed.image == virtual_bscan_serial(v, plane, {}, {}, missing).image);
    std::size_t bridged = 0;
    for (std::size_t c = 0; c < fixed.image.width(); ++c) {
        REQUIRE(fixed.valid[c]);
        const MetricPoint p = fixed.geometry.to_volume(double(c), 1.0);
        const double want = 10 + p.x() / 2.5 + 40.0 * p.y() / 25.0 + 1000.0;
        CHECK(std::abs(fixed.image(c, 1) - want) <= 1e-3 * want);
        const double fy = p.y() / 25.0;
        if (fy > 4.0 && fy < 7.0) {
            ++bridged;
            CHECK(raw.image(c, 1) < fixed.image(c, 1));
        }
    }
    CHECK(bridged > 10);
    // Nothing flagged: identical to the plain slice.
    const std::vector<std::uint8_t> none(12, 0);
    CHECK(virtual_bscan(v, plane, {}, {}, none).image == raw.image);
}
