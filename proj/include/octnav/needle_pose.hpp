#pragma once

#include "json.hpp"
#include "octnav/volume.hpp"

namespace octnav {

/**
 * 5-DoF needle pose in the volume frame.
 *
 * R = R_z(theta_z) * R_y(theta_y); roll is not observable for a straight
 * needle and stays zero. R is expressed in the needle-mount frame, which has
 * the volume's Y and Z axes flipped (Z up, as for the robot). The needle axis
 * in volume coordinates is therefore diag(1,-1,-1) * R * e_x:
 *
 *     d = (cos tz cos ty, -sin tz cos ty, sin ty)
 *
 * so positive theta_y descends into the tissue and the lateral part of d is
 * perpendicular to the tool-aligned plane normal (sin tz, cos tz, 0).
 */
struct NeedlePose {
    double theta_z = 0.0;  ///< yaw about volume Z, radians
    double theta_y = 0.0;  ///< pitch, radians
    MetricPoint tip = MetricPoint::Zero();
    Mat3 R = Mat3::Identity();

    /// Unit needle axis pointing from the shaft towards the tip.
    Vec3 direction() const;
};

Mat3 rotation_z(double theta);
Mat3 rotation_y(double theta);

NeedlePose compose_pose(double theta_z, double theta_y, const MetricPoint& tip);

/// Lateral advance direction (cos tz, -sin tz), the horizontal axis of the tool-aligned slice.
Vec3 advance_direction(double theta_z);

/// {theta_z_rad, theta_y_rad, tip_um:[x,y,z], R:[9 numbers row-major]}
nlohmann::json pose_to_json(const NeedlePose& pose);
NeedlePose pose_from_json(const nlohmann::json& j);

}  // namespace octnav
