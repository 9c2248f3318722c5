#include <random>

#include "doctest.h"
#include "octnav/registration.hpp"
#include "octnav/trajectory.hpp"
#include "support.hpp"

using namespace octnav;
using testing::deg;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

// Pose whose axis is (0, 1/sqrt2, 1/sqrt2).
NeedlePose diagonal_pose() { return compose_pose(deg(-90), deg(45), MetricPoint::Zero()); }

MediaStack single(double n) { return MediaStack({{Medium::Vitreous, n, -1000.0, 1000.0}}); }

}  // namespace

TEST_CASE("registration examples") {
    Mat3 c0;
    c0 << -1, 0, 0, 0, 1, 0, 0, 0, -1;
    CHECK(max_abs(build_registration(0).C - c0) < 1e-15);

    const RegistrationMatrix r = build_registration(deg(30));
    const double c = std::cos(deg(30)), s = std::sin(deg(30));
    CHECK(max_abs(r.v_x() - Vec3(-c, s, 0)) < 1e-15);
    CHECK(max_abs(r.v_y() - Vec3(s, c, 0)) < 1e-15);
    CHECK(max_abs(r.v_z() - Vec3(0, 0, -1)) < 1e-15);
    CHECK(std::abs(std::abs(r.C.determinant()) - 1.0) < 1e-12);

    CHECK(volume_to_robot(r, Vec3::Zero()) == Vec3::Zero());
    CHECK(max_abs(volume_to_robot(build_registration(0), {0, 0, 100}) - Vec3(0, 0, -100)) < 1e-15);
}

TEST_CASE("registration isometry and round trip") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> angle(-M_PI, M_PI), coord(-2000, 2000);
    for (int i = 0; i < 1000; ++i) {
        const RegistrationMatrix r = build_registration(angle(rng));
        const Vec3 t(coord(rng), coord(rng), coord(rng));
        const Vec3 tr = volume_to_robot(r, t);
        CHECK(std::abs(tr.norm() - t.norm()) <= 1e-9 * t.norm());
        CHECK((r.C * tr - t).norm() <= 1e-9 * t.norm());
        CHECK((robot_to_volume(r, tr) - t).norm() <= 1e-9 * t.norm());
        CHECK(max_abs(r.C.transpose() * r.C - Mat3::Identity()) < 1e-12);
    }
}

TEST_CASE("plan examples") {
    const NeedlePose p = diagonal_pose();
    REQUIRE(max_abs(p.direction() - Vec3(0, M_SQRT1_2, M_SQRT1_2)) < 1e-15);

    const InsertionPlan on_axis = plan_trajectory(p, {0, 100, 100});
    CHECK(max_abs(on_axis.J) < 1e-12);
    CHECK(max_abs(on_axis.t_A) < 1e-12);
    CHECK(max_abs(on_axis.t_B - Vec3(0, 100, 100)) < 1e-12);

    const InsertionPlan off = plan_trajectory(p, {0, 200, 100});
    CHECK(max_abs(off.J - Vec3(0, 100, 0)) < 1e-12);
    CHECK(max_abs(off.t_A - Vec3(0, 100, 0)) < 1e-12);
    CHECK(max_abs(off.t_B - Vec3(0, 100, 100)) < 1e-12);

    CHECK_THROWS_AS(plan_trajectory(compose_pose(deg(-90), 0, MetricPoint::Zero()), {0, 100, 100}), PlanningError);
    CHECK_THROWS_AS(plan_trajectory(p, {0, 100, -50}), PlanningError);
}

TEST_CASE("plan invariants on random poses") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> tz(-M_PI, M_PI), ty(deg(3), deg(60)), c(0, 3000), dz(1, 1500);
    for (int i = 0; i < 1000; ++i) {
        const NeedlePose p = compose_pose(tz(rng), ty(rng), {c(rng), c(rng), 1000});
        const MetricPoint v(c(rng), c(rng), 1000 + dz(rng));
        const InsertionPlan plan = plan_trajectory(p, v);
        const Vec3 d = p.direction();
        CHECK((plan.t_A + plan.t_B - (v - p.tip)).norm() <= 1e-9 * (v - p.tip).norm());
        CHECK(std::abs(plan.t_A.z()) <= 1e-9);
        CHECK(plan.t_B.normalized().cross(d).norm() <= 1e-9);
        CHECK(plan.t_B.dot(d) > 0);
        const Line3D line = insertion_line(v, p);
        for (double s : {-500.0, 0.0, 250.0}) CHECK((line.at(s) - v).cross(d).norm() <= 1e-9 * (1 + std::abs(s)));
        CHECK((plan.J - v).cross(d).norm() <= 1e-9 * (plan.J - v).norm() + 1e-9);
        CHECK((volume_to_robot(plan.registration, plan.t_A) - plan.robot_A).norm() == 0.0);
    }
}

TEST_CASE("insertion line cases") {
    const NeedlePose p = compose_pose(deg(20), deg(30), {100, 200, 300});
    const Line3D on = insertion_line(p.tip + 50.0 * p.direction(), p);
    CHECK((on.at(-50.0) - p.tip).norm() < 1e-9);
    const Line3D flat = insertion_line({1, 2, 3}, compose_pose(deg(20), 0, MetricPoint::Zero()));
    CHECK(flat.direction.z() == 0.0);
    CHECK(flat.at(123.0).z() == 3.0);
}

TEST_CASE("refraction correction examples") {
    const Vec3 t(10, 20, 138);
    CHECK(refraction_correct(t, {0, 0, 0}, single(1.0)) == t);
    const Vec3 c = refraction_correct(t, {0, 0, 0}, single(1.38));
    CHECK(std::abs(c.z() - 100.0) <= 1e-9 * 100.0);
    CHECK(c.x() == 10.0);
    CHECK(c.y() == 20.0);

    const MediaStack two = MediaStack::open_sky(50.0, 1000.0, 1500.0, {1.0, 1.38, 1.38});
    const Vec3 c2 = refraction_correct({0, 0, 188}, {0, 0, 0}, two);
    CHECK(std::abs(c2.z() - 150.0) <= 1e-9 * 150.0);
    // upward paths keep their sign
    CHECK(refraction_correct({0, 0, -138}, {0, 0, 138}, single(1.38)).z() == doctest::Approx(-100.0));
    CHECK_THROWS_AS(refraction_correct({0, 0, 2000}, {0, 0, 0}, two), PlanningError);
}

TEST_CASE("refraction correction is monotone") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> n(1.0, 1.6), z(0, 1400);
    for (int i = 0; i < 500; ++i) {
        const MediaStack m = MediaStack::open_sky(100, 600, 1500, {1.0, n(rng), n(rng)});
        const double a = z(rng), b = z(rng);
        const double corr = refraction_correct({0, 0, b - a}, {0, 0, a}, m).z();
        CHECK(std::abs(corr) <= std::abs(b - a) + 1e-12);
    }
    const MediaStack air = MediaStack::open_sky(100, 600, 1500, {1.0, 1.0, 1.0});
    CHECK(refraction_correct({0, 0, 1000}, {0, 0, 200}, air).z() == 1000.0);
}

TEST_CASE("media stack construction") {
    const MediaStack m = MediaStack::open_sky(100, 600, 1500, MediaIndices{});
    REQUIRE(m.regions().size() == 3);
    CHECK(m.regions()[1].label == Medium::Vitreous);
    CHECK(m.regions()[2].top_um == 600.0);
    CHECK(m.bottom() == 1500.0);
    // fluid surface below the ILM: no vitreous region
    CHECK(MediaStack::open_sky(700, 600, 1500, MediaIndices{}).regions().size() == 2);
    CHECK_THROWS_AS(MediaStack({{Medium::Air, 1.0, 0, 10}, {Medium::Tissue, 1.38, 20, 30}}), std::invalid_argument);
    CHECK_THROWS_AS(MediaStack({{Medium::Air, 1.0, 10, 10}}), std::invalid_argument);
    CHECK(media_to_json(m).size() == 3);
}

TEST_CASE("second virtual B-scan plane") {
    const VolumeGeometry g;
    const PlaneSpec a = second_virtual_bscan({100, 200, 300}, 0.0, g);
    CHECK(a.point == MetricPoint(100, 200, 300));
    CHECK(a.normal == Vec3(0, 1, 0));
    const PlaneSpec tool = tool_aligned_plane(deg(25), 1300, 1250, g);
    const PlaneSpec b = second_virtual_bscan({1300, 1250, 900}, deg(25), g);
    CHECK((tool.normal - b.normal).norm() < 1e-15);
    CHECK_THROWS_AS(second_virtual_bscan({-10, 0, 0}, 0.0, g), std::out_of_range);
}

TEST_CASE("plan json fields") {
    const auto j = plan_to_json(plan_trajectory(diagonal_pose(), {0, 200, 100}));
    for (const char* k : {"target_um", "J_um", "tA_um", "tB_um", "tB_corrected_um", "robot_cmds_um"}) CHECK(j.contains(k));
    CHECK(j["robot_cmds_um"].size() == 2);
}
