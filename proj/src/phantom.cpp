#include "octnav/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace octnav {

namespace {

constexpr std::size_t kNoiseTableBits = 16;
constexpr std::size_t kNoiseTableSize = std::size_t{1} << kNoiseTableBits;
constexpr double kGaussReach = 6.0;    // profile support in sigmas
constexpr double kGaussSteps = 64.0;   // lookup samples per sigma

/// Standard normal quantiles at (k + 0.5) / N, shared by every render.
const std::vector<double>& normal_quantiles() {
    static const std::vector<double> table = [] {
        std::vector<double> q(kNoiseTableSize);
        for (std::size_t k = 0; k < kNoiseTableSize; ++k) {
            const double p = (double(k) + 0.5) / double(kNoiseTableSize);
            q[k] = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
        }
        return q;
    }();
    return table;
}

const std::vector<double>& gauss_table() {
    static const std::vector<double> table = [] {
        const auto n = std::size_t(kGaussReach * kGaussSteps) + 2;
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = double(i) / kGaussSteps;
            g[i] = std::exp(-0.5 * t * t);
        }
        return g;
    }();
    return table;
}

inline double gauss(const std::vector<double>& table, double t) {
    const double a = std::abs(t) * kGaussSteps;
    const auto i = std::size_t(a);
    const double f = a - double(i);
    return table[i] * (1.0 - f) + table[i + 1] * f;
}

/// Per-A-scan quantities in optical depth, computed once before the voxel pass.
struct AscanPlan {
    double ilm = 0.0;
    double rpe = 0.0;
    bool has_needle = false;
    double needle_top = 0.0;
    double needle_bottom = 0.0;
};

struct RenderContext {
    const PhantomScene& scene;
    std::vector<AscanPlan> ascans;  // indexed y * X + x
    std::vector<float> noise;       // multiplicative speckle, mean 1
};

RenderContext prepare(const PhantomScene& scene) {
    scene.validate();
    RenderContext ctx{scene, {}, {}};
    const auto& g = scene.geometry;
    const double max_depth = double(g.dims.z - 1) * g.spacing.z;
    ctx.ascans.resize(g.dims.x * g.dims.y);
    bool visible = false;
    for (std::size_t y = 0; y < g.dims.y; ++y) {
        for (std::size_t x = 0; x < g.dims.x; ++x) {
            const double xu = double(x) * g.spacing.x;
            const double yu = double(y) * g.spacing.y;
            const double ilm = scene.ilm.depth(xu, yu);
            const double rpe = scene.rpe.depth(xu, yu);
            if (!(rpe > ilm)) throw std::domain_error("phantom: RPE must lie strictly deeper than ILM");
            if (ilm < scene.media.fluid_surface_um) throw std::domain_error("phantom: ILM above the fluid surface");
            AscanPlan& a = ctx.ascans[y * g.dims.x + x];
            a.ilm = scene.optical_depth(xu, yu, ilm);
            a.rpe = scene.optical_depth(xu, yu, rpe);
            if (scene.needle) {
                if (auto c = needle_chord(*scene.needle, xu, yu)) {
                    a.has_needle = true;
                    a.needle_top = scene.optical_depth(xu, yu, c->top);
                    a.needle_bottom = scene.optical_depth(xu, yu, c->bottom);
                    visible = visible || (a.needle_top <= max_depth && a.needle_bottom >= 0.0);
                }
            }
        }
    }
    if (scene.needle && !visible) throw std::domain_error("phantom: needle entirely outside scan region");

    const auto& q = normal_quantiles();
    const double s = scene.speckle_noise_sigma;
    ctx.noise.resize(kNoiseTableSize);
    for (std::size_t k = 0; k < kNoiseTableSize; ++k) ctx.noise[k] = float(std::exp(s * q[k] - 0.5 * s * s));
    return ctx;
}

std::mt19937_64 bscan_stream(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), 0x6f63744eu};
    return std::mt19937_64(seq);
}

void render_bscan(const RenderContext& ctx, std::size_t y, std::span<std::uint16_t> out) {
    const PhantomScene& scene = ctx.scene;
    const auto& g = scene.geometry;
    const auto& ap = scene.appearance;
    const auto& gt = gauss_table();
    auto rng = bscan_stream(scene.rng_seed, y);

    const double u = double(rng() >> 11) * 0x1.0p-53;
    if (u < scene.bscan_dropout_prob) {
        std::fill(out.begin(), out.end(), std::uint16_t{0});
        return;
    }

    const double sz = g.spacing.z;
    const double ilm_reach = kGaussReach * ap.ilm_width_um;
    const double rpe_reach = kGaussReach * ap.rpe_width_um;
    const double choroid_step = std::exp(-sz / ap.choroid_decay_um);
    std::uint64_t bits = 0;
    int bits_left = 0;

    for (std::size_t x = 0; x < g.dims.x; ++x) {
        const AscanPlan& a = ctx.ascans[y * g.dims.x + x];
        auto dst = out.subspan(x * g.dims.z, g.dims.z);
        double choroid = -1.0;
        for (std::size_t z = 0; z < g.dims.z; ++z) {
            const double zu = double(z) * sz;
            double v = ap.background;
            const double di = zu - a.ilm;
            if (std::abs(di) < ilm_reach) v += ap.ilm_peak * gauss(gt, di / ap.ilm_width_um);
            if (zu >= a.ilm + 2.0 * ap.ilm_width_um && zu < a.rpe) v += ap.retina;
            const double dr = zu - a.rpe;
            if (std::abs(dr) < rpe_reach) v += ap.rpe_peak * gauss(gt, dr / ap.rpe_width_um);
            if (dr >= 0.0) {
                choroid = choroid < 0.0 ? std::exp(-dr / ap.choroid_decay_um) : choroid * choroid_step;
                v += ap.choroid * choroid;
            }
            if (a.has_needle) {
                if (zu >= a.needle_top && zu <= a.needle_bottom) {
                    v = ap.needle;
                } else if (zu > a.needle_bottom) {
                    v *= scene.shadow_factor;
                }
            }
            if (bits_left == 0) {
                bits = rng();
                bits_left = 4;
            }
            v *= ctx.noise[bits & (kNoiseTableSize - 1)];
            bits >>= kNoiseTableBits;
            --bits_left;
            dst[z] = std::uint16_t(std::clamp(std::nearbyint(v), 0.0, 65535.0));
        }
    }
}

double surface_gauss(const GaussianBump& b, double x, double y) {
    const double dx = x - b.center_x_um;
    const double dy = y - b.center_y_um;
    return b.amplitude_um * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma_um * b.sigma_um));
}

}  // namespace

double Surface::depth(double x_um, double y_um) const {
    const double dx = x_um - center_x_um;
    const double dy = y_um - center_y_um;
    double z = offset_um + slope_x * dx + slope_y * dy + curvature_x * dx * dx + curvature_y * dy * dy;
    for (const auto& b : bumps) z += surface_gauss(b, x_um, y_um);
    return z;
}

void PhantomScene::validate() const {
    geometry.validate();
    if (needle) {
        if (!(needle->radius_um > 0.0)) throw std::invalid_argument("phantom: needle radius must be > 0");
        if (!(needle->length_um > 0.0)) throw std::invalid_argument("phantom: needle length must be > 0");
        if (std::abs(needle->pose.direction().z()) > 1.0 - 1e-9) {
            throw std::invalid_argument("phantom: vertical needles are not supported");
        }
    }
    if (!(bscan_dropout_prob >= 0.0 && bscan_dropout_prob <= 1.0)) {
        throw std::invalid_argument("phantom: bscan_dropout_prob must be in [0,1]");
    }
    if (!(shadow_factor >= 0.0 && shadow_factor <= 1.0)) throw std::invalid_argument("phantom: shadow_factor in [0,1]");
    if (!(speckle_noise_sigma >= 0.0)) throw std::invalid_argument("phantom: speckle sigma must be >= 0");
    const auto& n = media.indices;
    if (!(n.air >= 1.0 && n.vitreous >= 1.0 && n.tissue >= 1.0)) {
        throw std::invalid_argument("phantom: refractive indices must be >= 1");
    }
    if (!(appearance.ilm_width_um > 0.0 && appearance.rpe_width_um > 0.0 && appearance.choroid_decay_um > 0.0)) {
        throw std::invalid_argument("phantom: layer widths must be > 0");
    }
}

double PhantomScene::optical_depth(double x_um, double y_um, double z) const {
    const double f = media.fluid_surface_um;
    const auto& n = media.indices;
    if (z <= f) return f + n.air * (z - f);
    const double ilm_p = ilm.depth(x_um, y_um);
    if (z <= ilm_p) return f + n.vitreous * (z - f);
    return f + n.vitreous * (ilm_p - f) + n.tissue * (z - ilm_p);
}

double PhantomScene::physical_depth(double x_um, double y_um, double z) const {
    const double f = media.fluid_surface_um;
    const auto& n = media.indices;
    if (z <= f) return f + (z - f) / n.air;
    const double ilm_p = ilm.depth(x_um, y_um);
    const double ilm_o = f + n.vitreous * (ilm_p - f);
    if (z <= ilm_o) return f + (z - f) / n.vitreous;
    return ilm_p + (z - ilm_o) / n.tissue;
}

MetricPoint PhantomScene::to_optical(const MetricPoint& p) const {
    return {p.x(), p.y(), optical_depth(p.x(), p.y(), p.z())};
}

MetricPoint PhantomScene::to_physical(const MetricPoint& p) const {
    return {p.x(), p.y(), physical_depth(p.x(), p.y(), p.z())};
}

double PhantomScene::ilm_optical(double x_um, double y_um) const {
    return optical_depth(x_um, y_um, ilm.depth(x_um, y_um));
}

double PhantomScene::rpe_optical(double x_um, double y_um) const {
    return optical_depth(x_um, y_um, rpe.depth(x_um, y_um));
}

NeedlePose PhantomScene::apparent_needle_pose() const {
    if (!needle) throw std::logic_error("phantom: scene has no needle");
    const NeedlePose& p = needle->pose;
    const MetricPoint tip_o = to_optical(p.tip);
    const MetricPoint back_o = to_optical(p.tip - 1.0 * p.direction());
    const Vec3 d = (tip_o - back_o).normalized();
    return compose_pose(p.theta_z, std::atan2(d.z(), std::hypot(d.x(), d.y())), tip_o);
}

void PhantomScene::set_apparent_needle(const NeedlePose& apparent, double radius_um, double length_um) {
    const MetricPoint& t = apparent.tip;
    double n = media.indices.air;
    if (t.z() > media.fluid_surface_um) n = t.z() > ilm_optical(t.x(), t.y()) ? media.indices.tissue : media.indices.vitreous;
    const double theta_y = std::atan(std::tan(apparent.theta_y) / n);
    needle = NeedleModel{compose_pose(apparent.theta_z, theta_y, to_physical(t)), radius_um, length_um};
}

PhantomScene default_scene() {
    PhantomScene s;
    s.id = "default";
    s.geometry = VolumeGeometry{kDefaultDims, kDefaultSpacing};
    const Vec3 c = s.geometry.extent() / 2.0;

    s.ilm.offset_um = 1230.0;
    s.ilm.slope_x = 0.03;
    s.ilm.slope_y = -0.02;
    s.ilm.curvature_x = 2e-5;
    s.ilm.curvature_y = 1e-5;
    s.ilm.center_x_um = c.x();
    s.ilm.center_y_um = c.y();
    s.ilm.bumps = {{-40.0, 1800.0, 900.0, 350.0}};

    s.rpe = s.ilm;
    s.rpe.offset_um = 1460.0;
    s.rpe.bumps = {{-30.0, 1800.0, 900.0, 400.0}};

    s.needle = NeedleModel{compose_pose(12.0 * M_PI / 180.0, 22.0 * M_PI / 180.0, MetricPoint(1300.0, 1250.0, 1000.0)),
                           55.0, 6000.0};
    s.bscan_dropout_prob = 0.01;
    s.rng_seed = 1;
    return s;
}

std::optional<Chord> needle_chord(const NeedleModel& needle, double x_um, double y_um) {
    const Vec3 d = needle.pose.direction();
    const MetricPoint& tip = needle.pose.tip;
    const Vec3 w0(x_um - tip.x(), y_um - tip.y(), -tip.z());
    const double axial0 = w0.dot(d);
    const Vec3 perp0 = w0 - axial0 * d;
    const Vec3 e = Vec3::UnitZ() - d.z() * d;

    const double a = e.squaredNorm();
    const double b = 2.0 * perp0.dot(e);
    const double c = perp0.squaredNorm() - needle.radius_um * needle.radius_um;
    if (a < 1e-18) return std::nullopt;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double lo = (-b - sq) / (2.0 * a);
    double hi = (-b + sq) / (2.0 * a);

    // Axial coordinate along the ray is axial0 + z * d.z and must stay in [-L, 0].
    if (std::abs(d.z()) < 1e-15) {
        if (axial0 < -needle.length_um || axial0 > 0.0) return std::nullopt;
    } else {
        const double za = (-needle.length_um - axial0) / d.z();
        const double zb = -axial0 / d.z();
        lo = std::max(lo, std::min(za, zb));
        hi = std::min(hi, std::max(za, zb));
    }
    if (lo > hi) return std::nullopt;
    return Chord{lo, hi};
}

double lateral_axis_distance(const NeedleModel& needle, double x_um, double y_um) {
    const Vec3 d = needle.pose.direction();
    const Eigen::Vector2d tip(needle.pose.tip.x(), needle.pose.tip.y());
    const Eigen::Vector2d back = tip - needle.length_um * Eigen::Vector2d(d.x(), d.y());
    const Eigen::Vector2d p(x_um, y_um);
    const Eigen::Vector2d seg = tip - back;
    const double len2 = seg.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - back).dot(seg) / len2, 0.0, 1.0) : 0.0;
    return (p - (back + t * seg)).norm();
}

bool in_needle_footprint(const PhantomScene& scene, double x_um, double y_um) {
    if (!scene.needle) return false;
    const auto c = needle_chord(*scene.needle, x_um, y_um);
    if (!c) return false;
    return scene.optical_depth(x_um, y_um, c->top) <= scene.geometry.extent().z();
}

IoctVolume render_volume(const PhantomScene& scene) {
    const RenderContext ctx = prepare(scene);
    IoctVolume vol(scene.geometry);
    const auto ny = std::int64_t(scene.geometry.dims.y);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t y = 0; y < ny; ++y) render_bscan(ctx, std::size_t(y), vol.bscan_storage(std::size_t(y)));
    return vol;
}

IoctVolume render_volume_serial(const PhantomScene& scene) {
    const RenderContext ctx = prepare(scene);
    IoctVolume vol(scene.geometry);
    for (std::size_t y = 0; y < scene.geometry.dims.y; ++y) render_bscan(ctx, y, vol.bscan_storage(y));
    return vol;
}

SimulatedRobot::SimulatedRobot(const MetricPoint& origin_in_volume, double frame_theta_z, double sigma_move_um,
                               std::uint64_t seed)
    : origin_(origin_in_volume),
      frame_theta_z_(frame_theta_z),
      sigma_move_(sigma_move_um),
      frame_(build_registration(frame_theta_z)),
      rng_(seed) {
    if (!(sigma_move_um >= 0.0)) throw std::invalid_argument("robot: sigma_move must be >= 0");
}

MetricPoint SimulatedRobot::tip_in_volume() const {
    return origin_ + robot_to_volume(frame_, tip_);
}

SimulatedRobot apply_translation(SimulatedRobot robot, const Vec3& t_robot) {
    if (!t_robot.allFinite()) throw std::invalid_argument("robot: translation must be finite");
    Vec3 eps = Vec3::Zero();
    if (robot.sigma_move_ > 0.0) {
        for (int i = 0; i < 3; ++i) eps[i] = robot.sigma_move_ * robot.noise_(robot.rng_);
    }
    robot.tip_ += t_robot + eps;
    return robot;
}

SimulatedRobot robot_for_scene(const PhantomScene& scene, double sigma_move_um, std::uint64_t seed) {
    if (!scene.needle) throw std::logic_error("robot_for_scene: scene has no needle");
    return SimulatedRobot(scene.needle->pose.tip, scene.needle->pose.theta_z, sigma_move_um, seed);
}

PhantomScene scene_with_robot(const PhantomScene& scene, const SimulatedRobot& robot) {
    if (!scene.needle) throw std::logic_error("scene_with_robot: scene has no needle");
    PhantomScene moved = scene;
    const NeedlePose& p = scene.needle->pose;
    moved.needle->pose = compose_pose(p.theta_z, p.theta_y, robot.tip_in_volume());
    return moved;
}

IoctVolume reacquire(const PhantomScene& scene, const SimulatedRobot& robot) {
    return render_volume(scene_with_robot(scene, robot));
}

// ---- JSON ------------------------------------------------------------------

namespace {

using nlohmann::json;

json surface_to_json(const Surface& s) {
    json bumps = json::array();
    for (const auto& b : s.bumps) {
        bumps.push_back({{"amplitude_um", b.amplitude_um},
                         {"center_x_um", b.center_x_um},
                         {"center_y_um", b.center_y_um},
                         {"sigma_um", b.sigma_um}});
    }
    return {{"offset_um", s.offset_um},     {"slope_x", s.slope_x},         {"slope_y", s.slope_y},
            {"curvature_x", s.curvature_x}, {"curvature_y", s.curvature_y}, {"center_x_um", s.center_x_um},
            {"center_y_um", s.center_y_um}, {"bumps", bumps}};
}

Surface surface_from_json(const json& j, const Surface& def) {
    Surface s = def;
    s.offset_um = j.value("offset_um", def.offset_um);
    s.slope_x = j.value("slope_x", def.slope_x);
    s.slope_y = j.value("slope_y", def.slope_y);
    s.curvature_x = j.value("curvature_x", def.curvature_x);
    s.curvature_y = j.value("curvature_y", def.curvature_y);
    s.center_x_um = j.value("center_x_um", def.center_x_um);
    s.center_y_um = j.value("center_y_um", def.center_y_um);
    if (j.contains("bumps")) {
        s.bumps.clear();
        for (const auto& b : j.at("bumps")) {
            s.bumps.push_back({b.at("amplitude_um").get<double>(), b.at("center_x_um").get<double>(),
                               b.at("center_y_um").get<double>(), b.at("sigma_um").get<double>()});
        }
    }
    return s;
}

MetricPoint point_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

json scene_to_json(const PhantomScene& s) {
    const auto& a = s.appearance;
    json j = {
        {"id", s.id},
        {"volume",
         {{"dims", {s.geometry.dims.x, s.geometry.dims.y, s.geometry.dims.z}},
          {"spacing_um", {s.geometry.spacing.x, s.geometry.spacing.y, s.geometry.spacing.z}}}},
        {"ilm_surface", surface_to_json(s.ilm)},
        {"rpe_surface", surface_to_json(s.rpe)},
        {"appearance",
         {{"background", a.background},
          {"ilm_peak", a.ilm_peak},
          {"ilm_width_um", a.ilm_width_um},
          {"retina", a.retina},
          {"rpe_peak", a.rpe_peak},
          {"rpe_width_um", a.rpe_width_um},
          {"choroid", a.choroid},
          {"choroid_decay_um", a.choroid_decay_um},
          {"needle", a.needle}}},
        {"shadow_factor", s.shadow_factor},
        {"media",
         {{"fluid_surface_um", s.media.fluid_surface_um},
          {"n_air", s.media.indices.air},
          {"n_vitreous", s.media.indices.vitreous},
          {"n_tissue", s.media.indices.tissue}}},
        {"speckle_noise_sigma", s.speckle_noise_sigma},
        {"bscan_dropout_prob", s.bscan_dropout_prob},
        {"rng_seed", s.rng_seed},
    };
    if (s.needle) {
        const auto& p = s.needle->pose;
        j["needle"] = {{"theta_z_rad", p.theta_z},
                       {"theta_y_rad", p.theta_y},
                       {"tip_um", {p.tip.x(), p.tip.y(), p.tip.z()}},
                       {"radius_um", s.needle->radius_um},
                       {"length_um", s.needle->length_um}};
    } else {
        j["needle"] = nullptr;
    }
    return j;
}

PhantomScene scene_from_json(const json& j) {
    const PhantomScene def = default_scene();
    PhantomScene s = def;
    s.id = j.value("id", def.id);
    if (j.contains("volume")) {
        const auto& v = j.at("volume");
        if (v.contains("dims")) {
            const auto& d = v.at("dims");
            s.geometry.dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>()};
        }
        if (v.contains("spacing_um")) {
            const auto& sp = v.at("spacing_um");
            s.geometry.spacing = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
        }
    }
    if (j.contains("ilm_surface")) s.ilm = surface_from_json(j.at("ilm_surface"), def.ilm);
    if (j.contains("rpe_surface")) s.rpe = surface_from_json(j.at("rpe_surface"), def.rpe);
    if (j.contains("appearance")) {
        const auto& a = j.at("appearance");
        auto& o = s.appearance;
        o.background = a.value("background", o.background);
        o.ilm_peak = a.value("ilm_peak", o.ilm_peak);
        o.ilm_width_um = a.value("ilm_width_um", o.ilm_width_um);
        o.retina = a.value("retina", o.retina);
        o.rpe_peak = a.value("rpe_peak", o.rpe_peak);
        o.rpe_width_um = a.value("rpe_width_um", o.rpe_width_um);
        o.choroid = a.value("choroid", o.choroid);
        o.choroid_decay_um = a.value("choroid_decay_um", o.choroid_decay_um);
        o.needle = a.value("needle", o.needle);
    }
    if (j.contains("needle")) {
        const auto& n = j.at("needle");
        if (n.is_null()) {
            s.needle.reset();
        } else {
            const NeedleModel& dn = *def.needle;
            const double tz = n.value("theta_z_rad", dn.pose.theta_z);
            const double ty = n.value("theta_y_rad", dn.pose.theta_y);
            const MetricPoint tip = n.contains("tip_um") ? point_from_json(n.at("tip_um")) : dn.pose.tip;
            s.needle = NeedleModel{compose_pose(tz, ty, tip), n.value("radius_um", dn.radius_um),
                                   n.value("length_um", dn.length_um)};
        }
    }
    s.shadow_factor = j.value("shadow_factor", def.shadow_factor);
    if (j.contains("media")) {
        const auto& m = j.at("media");
        s.media.fluid_surface_um = m.value("fluid_surface_um", def.media.fluid_surface_um);
        s.media.indices.air = m.value("n_air", def.media.indices.air);
        s.media.indices.vitreous = m.value("n_vitreous", def.media.indices.vitreous);
        s.media.indices.tissue = m.value("n_tissue", def.media.indices.tissue);
    }
    s.speckle_noise_sigma = j.value("speckle_noise_sigma", def.speckle_noise_sigma);
    s.bscan_dropout_prob = j.value("bscan_dropout_prob", def.bscan_dropout_prob);
    s.rng_seed = j.value("rng_seed", def.rng_seed);
    s.validate();
    return s;
}

PhantomScene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scene file: " + path);
    return scene_from_json(nlohmann::json::parse(in));
}

}  // namespace octnav
