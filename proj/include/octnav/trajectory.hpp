#pragma once

#include <stdexcept>

#include "json.hpp"
#include "octnav/media.hpp"
#include "octnav/needle_pose.hpp"
#include "octnav/registration.hpp"
#include "octnav/slicing.hpp"

namespace octnav {

class PlanningError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Line3D {
    MetricPoint point = MetricPoint::Zero();
    Vec3 direction = Vec3::UnitX();  ///< unit
    MetricPoint at(double s) const { return point + s * direction; }
};

/// Line through V parallel to the needle axis.
Line3D insertion_line(const MetricPoint& target, const NeedlePose& pose);

/**
 * Two-phase insertion: t_A moves the tip horizontally onto the insertion line
 * at J, t_B advances along the needle axis to V. All vectors are optical
 * (volume frame) except t_B_corrected, which is the physical advance.
 */
struct InsertionPlan {
    MetricPoint target = MetricPoint::Zero();
    MetricPoint tip = MetricPoint::Zero();
    Vec3 direction = Vec3::UnitX();
    MetricPoint J = MetricPoint::Zero();
    Vec3 t_A = Vec3::Zero();
    Vec3 t_B = Vec3::Zero();
    Vec3 t_B_corrected = Vec3::Zero();
    MediaStack media;
    RegistrationMatrix registration;
    Vec3 robot_A = Vec3::Zero();  ///< commands in the robot frame
    Vec3 robot_B = Vec3::Zero();
};

/// Geometry only: t_B_corrected = t_B until refraction correction is applied.
/// Throws PlanningError for a horizontal needle or a target behind the tip.
InsertionPlan plan_trajectory(const NeedlePose& pose, const MetricPoint& target);

/// Splits the z-extent of t_B at media boundaries and divides each optical
/// segment by its index. Throws PlanningError when the path leaves the stack.
Vec3 refraction_correct(const Vec3& t_B, const MetricPoint& entry, const MediaStack& media);

/// Fills t_B_corrected and the robot commands from `media`.
void apply_media(InsertionPlan& plan, const MediaStack& media);

/// Tool-aligned plane through the target. Throws std::out_of_range when V is outside the volume.
PlaneSpec second_virtual_bscan(const MetricPoint& target, double theta_z, const VolumeGeometry& geometry);

nlohmann::json plan_to_json(const InsertionPlan& plan);
nlohmann::json media_to_json(const MediaStack& media);

}  // namespace octnav
