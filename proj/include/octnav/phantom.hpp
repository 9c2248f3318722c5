#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "octnav/media.hpp"
#include "octnav/needle_pose.hpp"
#include "octnav/registration.hpp"
#include "octnav/volume.hpp"

namespace octnav {

struct GaussianBump {
    double amplitude_um = 0.0;
    double center_x_um = 0.0;
    double center_y_um = 0.0;
    double sigma_um = 1.0;
};

/// Smooth height field z(x, y) in micrometres (physical depth).
struct Surface {
    double offset_um = 0.0;
    double slope_x = 0.0;
    double slope_y = 0.0;
    double curvature_x = 0.0;  ///< coefficient of (x - cx)^2
    double curvature_y = 0.0;  ///< coefficient of (y - cy)^2
    double center_x_um = 0.0;
    double center_y_um = 0.0;
    std::vector<GaussianBump> bumps;

    double depth(double x_um, double y_um) const;
};

/// Intensity model of the rendered layers, in raw u16 units.
struct LayerAppearance {
    double background = 400.0;
    double ilm_peak = 15000.0;
    double ilm_width_um = 6.0;  ///< Gaussian sigma of the ILM reflection
    double retina = 6000.0;
    double rpe_peak = 25000.0;
    double rpe_width_um = 8.0;
    double choroid = 7000.0;
    double choroid_decay_um = 200.0;
    double needle = 12000.0;
};

/// Straight finite cylinder ending in a flat cap at the tip.
struct NeedleModel {
    NeedlePose pose;  ///< physical pose (no refraction)
    double radius_um = 55.0;
    double length_um = 6000.0;
};

struct MediaModel {
    double fluid_surface_um = 0.0;  ///< flat air/fluid boundary depth
    MediaIndices indices;
};

/// Depth interval [top, bottom] where a vertical ray is inside the needle.
struct Chord {
    double top = 0.0;
    double bottom = 0.0;
};

/**
 * Synthetic open-sky scene with known ground truth.
 *
 * Geometry (surfaces, needle) is physical. The rendered volume is optical:
 * below the fluid surface every depth interval is stretched by the refractive
 * index of its medium, laterally nothing changes.
 */
struct PhantomScene {
    std::string id = "phantom";
    VolumeGeometry geometry;
    Surface ilm;
    Surface rpe;
    LayerAppearance appearance;
    std::optional<NeedleModel> needle;
    double shadow_factor = 0.2;
    MediaModel media;
    double speckle_noise_sigma = 0.3;  ///< sigma of the log of the multiplicative speckle
    double bscan_dropout_prob = 0.0;
    std::uint64_t rng_seed = 1;

    void validate() const;

    double optical_depth(double x_um, double y_um, double physical_z) const;
    double physical_depth(double x_um, double y_um, double optical_z) const;
    MetricPoint to_optical(const MetricPoint& physical) const;
    MetricPoint to_physical(const MetricPoint& optical) const;

    double ilm_optical(double x_um, double y_um) const;
    double rpe_optical(double x_um, double y_um) const;

    /// Needle pose as it appears in the volume (tip and axis mapped through
    /// the refraction of the medium at the tip). Requires a needle.
    NeedlePose apparent_needle_pose() const;
    /// Places the needle so that its apparent pose is `apparent` (tip and
    /// near-tip axis in a single medium).
    void set_apparent_needle(const NeedlePose& apparent, double radius_um, double length_um);
};

/// Default open-sky scene at the default volume geometry.
PhantomScene default_scene();

/// Physical chord of the vertical ray at (x, y) through the needle cylinder.
std::optional<Chord> needle_chord(const NeedleModel& needle, double x_um, double y_um);

/// Lateral distance from (x, y) to the needle axis segment projected onto the XY plane.
double lateral_axis_distance(const NeedleModel& needle, double x_um, double y_um);

/// True when the A-scan at (x, y) is occluded by the needle inside the scan depth.
bool in_needle_footprint(const PhantomScene& scene, double x_um, double y_um);

/// Renders B-scans in parallel; each B-scan draws from its own RNG stream
/// seeded by (rng_seed, index), so the output is independent of thread count.
IoctVolume render_volume(const PhantomScene& scene);
/// Serial reference for render_volume.
IoctVolume render_volume_serial(const PhantomScene& scene);

/**
 * Translational robot carrying the needle. The robot frame relates to the
 * volume frame by the registration of its true yaw; every commanded
 * translation gets N(0, sigma^2) noise per robot axis.
 */
class SimulatedRobot {
  public:
    SimulatedRobot(const MetricPoint& origin_in_volume, double frame_theta_z, double sigma_move_um,
                   std::uint64_t seed);

    const Vec3& tip_position() const { return tip_; }
    double frame_theta_z() const { return frame_theta_z_; }
    double sigma_move() const { return sigma_move_; }
    /// Physical tip position in the volume frame.
    MetricPoint tip_in_volume() const;

    friend SimulatedRobot apply_translation(SimulatedRobot robot, const Vec3& t_robot);

  private:
    MetricPoint origin_;
    double frame_theta_z_;
    double sigma_move_;
    RegistrationMatrix frame_;
    Vec3 tip_ = Vec3::Zero();
    std::mt19937_64 rng_;
    std::normal_distribution<double> noise_{0.0, 1.0};
};

SimulatedRobot apply_translation(SimulatedRobot robot, const Vec3& t_robot);

/// Robot whose frame matches the scene needle: origin at the needle tip, yaw = needle yaw.
SimulatedRobot robot_for_scene(const PhantomScene& scene, double sigma_move_um, std::uint64_t seed);

/// Scene with the needle tip moved to the robot's current position.
PhantomScene scene_with_robot(const PhantomScene& scene, const SimulatedRobot& robot);
IoctVolume reacquire(const PhantomScene& scene, const SimulatedRobot& robot);

nlohmann::json scene_to_json(const PhantomScene& scene);
PhantomScene scene_from_json(const nlohmann::json& j);
PhantomScene load_scene(const std::string& path);

}  // namespace octnav
