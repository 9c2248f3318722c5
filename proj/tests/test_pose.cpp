#include <random>

#include "doctest.h"
#include "octnav/pose.hpp"
#include "support.hpp"

using namespace octnav;
using testing::deg;

namespace {

struct OracleEstimate {
    InplaneEstimate inplane;
    AxialEstimate axial;
    NeedlePose pose;
};

// Full estimate from oracle masks; the oracle only needs slice geometry, not voxels.
OracleEstimate oracle_estimate(const PhantomScene& s, EntryBorder border = EntryBorder::MinusX) {
    const OracleSegmenter seg(s);
    const auto& g = s.geometry;
    const AxialProjectionImage proj{Image2D<float>(g.dims.x, g.dims.y), ProjectionOp::Mean, "", {g.spacing.x, g.spacing.y}};
    OracleEstimate e;
    e.inplane = estimate_inplane(seg.segment_projection(proj), kDefaultConfidenceFraction, border);
    VirtualBScan b;
    b.geometry = slice_geometry(g, tool_aligned_plane(e.inplane.theta_z, e.inplane.tx, e.inplane.ty, g));
    e.axial = estimate_axial(seg.segment_bscan(b).needle, b.geometry);
    e.pose = compose_pose(e.inplane.theta_z, e.axial.theta_y, {e.inplane.tx, e.inplane.ty, e.axial.tz});
    return e;
}

PhantomScene scene_with_apparent(double tz, double ty, const MetricPoint& tip) {
    PhantomScene s = testing::small_scene();
    s.geometry = VolumeGeometry{};
    s.set_apparent_needle(compose_pose(tz, ty, tip), 55.0, 6000.0);
    return s;
}

SoftMask pixel_line_mask(PixelSpacing sp) {
    SoftMask m{Image2D<float>(100, 20), MaskClass::Needle, sp};
    for (std::size_t y = 0; y < 20; ++y) m.scores(10 + 4 * y, y) = 1.0f;
    return m;
}

}  // namespace

TEST_CASE("compose_pose examples") {
    CHECK(compose_pose(0, 0, {1, 2, 3}).R.isApprox(Mat3::Identity(), 0));
    Mat3 r90;
    r90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK((compose_pose(deg(90), 0, MetricPoint::Zero()).R - r90).cwiseAbs().maxCoeff() < 1e-15);

    const double a = deg(30), b = deg(20);
    Mat3 rz, ry;
    rz << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    ry << std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b);
    Mat3 product = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) product(i, j) += rz(i, k) * ry(k, j);
    const NeedlePose p = compose_pose(a, b, MetricPoint::Zero());
    CHECK((p.R - product).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((p.R.transpose() * p.R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));

    const Vec3 d = p.direction();
    CHECK(d.isApprox(Vec3(std::cos(a) * std::cos(b), -std::sin(a) * std::cos(b), std::sin(b)), 1e-15));
    CHECK(advance_direction(a).dot(Vec3(std::sin(a), std::cos(a), 0)) == doctest::Approx(0.0));
    CHECK_THROWS_AS(compose_pose(NAN, 0, MetricPoint::Zero()), std::invalid_argument);
}

TEST_CASE("pose json round trip") {
    const NeedlePose p = compose_pose(deg(-25), deg(17), {1.5, 2.25, 300});
    const auto j = pose_to_json(p);
    CHECK(j.at("R").size() == 9);
    const NeedlePose q = pose_from_json(j);
    CHECK(q.theta_z == p.theta_z);
    CHECK(q.tip == p.tip);
    CHECK(q.R == p.R);
}

TEST_CASE("huber fit examples") {
    std::vector<WeightedPoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({{double(i), 3.0 - 0.5 * i}, 1.0});
    const Line2D l = fit_line_huber(pts);
    for (const auto& q : pts) CHECK(std::abs(l.residual(q.p)) < 1e-9);
    CHECK(std::abs(l.direction.y() / l.direction.x() + 0.5) < 1e-12);
    CHECK(l.inliers.size() == 10);

    const std::vector<WeightedPoint> two{{{1, 1}, 1.0}, {{4, 5}, 1.0}};
    const Line2D l2 = fit_line_huber(two);
    CHECK(std::abs(l2.residual({1, 1})) < 1e-12);
    CHECK(std::abs(l2.residual({4, 5})) < 1e-12);
    CHECK(std::abs(std::abs(l2.direction.y() / l2.direction.x()) - 4.0 / 3.0) < 1e-12);

    const std::vector<WeightedPoint> one{{{1, 1}, 1.0}};
    CHECK_THROWS_AS(fit_line_huber(one), EstimationError);
    const std::vector<WeightedPoint> same{{{1, 1}, 1.0}, {{1, 1}, 1.0}};
    CHECK_THROWS_AS(fit_line_huber(same), EstimationError);
    std::vector<WeightedPoint> blob;
    for (int i = 0; i < 20; ++i) blob.push_back({{std::cos(i * 0.3), std::sin(i * 0.3)}, 1.0});
    CHECK_THROWS_AS(fit_line_huber(blob), EstimationError);
}

TEST_CASE("huber fit resists gross outliers") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<WeightedPoint> pts;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 50; ++i) {
        const double x = 2.0 * i, y = x + noise(rng);
        pts.push_back({{x, y}, 1.0});
        sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double ls_slope = (50 * sxy - sx * sy) / (50 * sxx - sx * sx);
    for (int i = 0; i < 5; ++i) pts.push_back({{10.0 + 20 * i, 10.0 + 20 * i + 50.0}, 1.0});
    const Line2D l = fit_line_huber(pts);
    const double slope = l.direction.y() / l.direction.x();
    CHECK(std::abs(slope - 1.0) < 0.05);
    CHECK(std::abs(slope - ls_slope) < 0.05);
    CHECK(l.inliers.size() >= 50);
}

TEST_CASE("in-plane estimate on axis-aligned needles") {
    SUBCASE("along +x from the -x border") {
        // Short visible shaft: the whole footprint fits in the top 1%, so the selection is symmetric.
        const auto e = oracle_estimate(scene_with_apparent(0.0, deg(20), {400, 1250, 1000})).inplane;
        CHECK(std::abs(e.theta_z) < 1e-9);
        CHECK(std::abs(e.tx - 400) <= 25.1);
        CHECK(std::abs(e.ty - 1250) <= 25.1);
    }
    SUBCASE("along +y from the -y border") {
        const auto e = oracle_estimate(scene_with_apparent(deg(-90), deg(20), {1250, 1800, 1000}), EntryBorder::MinusY).inplane;
        CHECK(std::abs(e.theta_z - deg(-90)) < deg(0.01));
        CHECK(e.line.direction.y() > 0.99);  // tip is the largest-y inlier
        CHECK(std::abs(e.ty - 1800) <= 25.1);
        CHECK(std::abs(e.tx - 1250) <= 25.1);
    }
}

TEST_CASE("oracle estimate at 30 and 20 degrees") {
    const NeedlePose truth = compose_pose(deg(30), deg(20), {1300, 1250, 1000});
    const auto e = oracle_estimate(scene_with_apparent(truth.theta_z, truth.theta_y, truth.tip));
    CHECK(std::abs(e.inplane.theta_z - truth.theta_z) <= deg(1));
    CHECK(std::hypot(e.inplane.tx - truth.tip.x(), e.inplane.ty - truth.tip.y()) <= 25.1);
    CHECK(std::abs(e.axial.theta_y - truth.theta_y) <= deg(1));
    CHECK(std::abs(e.axial.tz - truth.tip.z()) <= 6.0);
    CHECK((e.pose.tip - truth.tip).norm() <= 25.3);
}

TEST_CASE("horizontal needle gives zero pitch and the axis depth") {
    const auto e = oracle_estimate(scene_with_apparent(deg(10), 0.0, {1300, 1250, 900}));
    CHECK(std::abs(e.axial.theta_y) < deg(0.01));
    CHECK(std::abs(e.axial.tz - 900) <= 6.0);
}

TEST_CASE("absent needle is an error") {
    const SoftMask empty{Image2D<float>(1000, 100), MaskClass::Needle, {2.5, 25}};
    CHECK_THROWS_AS(estimate_inplane(empty), EstimationError);
    SoftMask faint = empty;
    for (float& s : faint.scores.pixels()) s = 0.01f;
    CHECK_THROWS_AS(estimate_inplane(faint), EstimationError);
    VirtualBScan b;
    b.geometry = slice_geometry(VolumeGeometry{}, tool_aligned_plane(0, 1000, 1000, VolumeGeometry{}));
    const SoftMask slice{Image2D<float>(b.geometry.width, b.geometry.height), MaskClass::Needle, b.spacing()};
    CHECK_THROWS_AS(estimate_axial(slice, b.geometry), EstimationError);
}

TEST_CASE("uniform rescaling of scores leaves the estimate unchanged") {
    const PhantomScene s = scene_with_apparent(deg(25), deg(15), {1300, 1250, 1000});
    const auto& g = s.geometry;
    const AxialProjectionImage proj{Image2D<float>(g.dims.x, g.dims.y), ProjectionOp::Mean, "", {g.spacing.x, g.spacing.y}};
    const SoftMask m = OracleSegmenter(s).segment_projection(proj);
    const auto ref = estimate_inplane(m);
    for (float k : {2.0f, 0.75f}) {
        SoftMask scaled = m;
        for (float& v : scaled.scores.pixels()) v *= k;
        const auto e = estimate_inplane(scaled);
        CHECK(e.theta_z == doctest::Approx(ref.theta_z).epsilon(1e-9));
        CHECK(e.tx == doctest::Approx(ref.tx).epsilon(1e-9));
        CHECK(e.ty == doctest::Approx(ref.ty).epsilon(1e-9));
    }
}

TEST_CASE("angles are computed in metric units") {
    const auto a = estimate_inplane(pixel_line_mask({2.5, 25}), 0.01);
    const auto b = estimate_inplane(pixel_line_mask({2.5, 50}), 0.01);
    CHECK(a.theta_z == doctest::Approx(std::atan2(-25.0, 10.0)).epsilon(1e-12));
    CHECK(b.theta_z == doctest::Approx(std::atan2(-50.0, 10.0)).epsilon(1e-12));
    CHECK(b.tx == doctest::Approx((10 + 4 * 19) * 2.5));
    CHECK(b.ty == doctest::Approx(19 * 50.0));
}

TEST_CASE("entry border names") {
    for (auto b : {EntryBorder::MinusX, EntryBorder::PlusX, EntryBorder::MinusY, EntryBorder::PlusY})
        CHECK(parse_entry_border(entry_border_name(b)) == b);
    CHECK_THROWS_AS(parse_entry_border("z"), std::invalid_argument);
}
