#include "octnav/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace octnav {

std::string_view medium_name(Medium m) {
    switch (m) {
        case Medium::Air: return "air";
        case Medium::Vitreous: return "vitreous";
        case Medium::Tissue: return "tissue";
    }
    return "air";
}

MediaStack::MediaStack(std::vector<MediaRegion> regions) : regions_(std::move(regions)) {
    if (regions_.empty()) throw std::invalid_argument("media stack needs at least one region");
    for (std::size_t i = 0; i < regions_.size(); ++i) {
        const auto& r = regions_[i];
        if (!(r.n >= 1.0)) throw std::invalid_argument("refractive index must be >= 1");
        if (!(r.bottom_um > r.top_um)) throw std::invalid_argument("media boundaries must increase with depth");
        if (i > 0 && r.top_um != regions_[i - 1].bottom_um) throw std::invalid_argument("media regions must be contiguous");
    }
}

MediaStack MediaStack::open_sky(double fluid_surface_um, double ilm_um, double rpe_um, const MediaIndices& n) {
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<MediaRegion> r;
    const double vit_top = fluid_surface_um;
    const double vit_bottom = std::max(ilm_um, fluid_surface_um);
    r.push_back({Medium::Air, n.air, ninf, fluid_surface_um});
    if (vit_bottom > vit_top) r.push_back({Medium::Vitreous, n.vitreous, vit_top, vit_bottom});
    if (rpe_um > vit_bottom) r.push_back({Medium::Tissue, n.tissue, vit_bottom, rpe_um});
    return MediaStack(std::move(r));
}

Line3D insertion_line(const MetricPoint& target, const NeedlePose& pose) {
    return {target, pose.direction().normalized()};
}

InsertionPlan plan_trajectory(const NeedlePose& pose, const MetricPoint& target) {
    if (!target.allFinite() || !pose.tip.allFinite()) throw PlanningError("plan: non-finite tip or target");
    const Vec3 d = pose.direction().normalized();
    if (std::abs(d.z()) < 1e-9) throw PlanningError("plan: needle is horizontal, insertion line never reaches the tip plane");

    InsertionPlan p;
    p.target = target;
    p.tip = pose.tip;
    p.direction = d;
    const double s = (pose.tip.z() - target.z()) / d.z();  // J = V + s d lies in the tip's horizontal plane
    if (s > 0.0) throw PlanningError("plan: target lies behind the needle tip (retraction is not planned)");
    p.J = target + s * d;
    p.J.z() = pose.tip.z();
    p.t_A = p.J - pose.tip;
    p.t_B = target - p.J;
    p.t_B_corrected = p.t_B;
    p.registration = build_registration(pose.theta_z);
    p.robot_A = volume_to_robot(p.registration, p.t_A);
    p.robot_B = volume_to_robot(p.registration, p.t_B_corrected);
    return p;
}

Vec3 refraction_correct(const Vec3& t_B, const MetricPoint& entry, const MediaStack& media) {
    const double z0 = entry.z();
    const double z1 = entry.z() + t_B.z();
    const double lo = std::min(z0, z1), hi = std::max(z0, z1);
    if (media.regions().empty() || lo < media.top() || hi > media.bottom()) {
        throw PlanningError("refraction correction: path leaves the media stack");
    }
    double physical = 0.0;
    for (const MediaRegion& r : media.regions()) {
        const double a = std::max(lo, r.top_um), b = std::min(hi, r.bottom_um);
        if (b > a) physical += (b - a) / r.n;
    }
    return {t_B.x(), t_B.y(), z1 >= z0 ? physical : -physical};
}

void apply_media(InsertionPlan& plan, const MediaStack& media) {
    plan.media = media;
    plan.t_B_corrected = refraction_correct(plan.t_B, plan.J, media);
    plan.robot_B = volume_to_robot(plan.registration, plan.t_B_corrected);
}

PlaneSpec second_virtual_bscan(const MetricPoint& target, double theta_z, const VolumeGeometry& geometry) {
    if (!geometry.contains(target)) throw std::out_of_range("second virtual B-scan: target outside the volume");
    return {target, Vec3(std::sin(theta_z), std::cos(theta_z), 0.0)};
}

namespace {

nlohmann::json vec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

nlohmann::json media_to_json(const MediaStack& media) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : media.regions()) {
        out.push_back({{"label", std::string(medium_name(r.label))},
                       {"n", r.n},
                       {"top_um", std::isfinite(r.top_um) ? nlohmann::json(r.top_um) : nlohmann::json(nullptr)},
                       {"bottom_um", r.bottom_um}});
    }
    return out;
}

nlohmann::json plan_to_json(const InsertionPlan& p) {
    return {{"target_um", vec(p.target)},
            {"tip_um", vec(p.tip)},
            {"direction", vec(p.direction)},
            {"J_um", vec(p.J)},
            {"tA_um", vec(p.t_A)},
            {"tB_um", vec(p.t_B)},
            {"tB_corrected_um", vec(p.t_B_corrected)},
            {"robot_cmds_um", {vec(p.robot_A), vec(p.robot_B)}},
            {"media", p.media.regions().empty() ? nlohmann::json::array() : media_to_json(p.media)}};
}

}  // namespace octnav
