#pragma once

#include "octnav/volume.hpp"

namespace octnav {

/// Robot axes expressed in the volume frame, as columns (v_x, v_y, v_z).
struct RegistrationMatrix {
    Mat3 C = Mat3::Identity();
    double theta_z = 0.0;

    Vec3 v_x() const { return C.col(0); }
    Vec3 v_y() const { return C.col(1); }
    Vec3 v_z() const { return C.col(2); }
};

/// v_z = -k, v_y = (sin tz, cos tz, 0), v_x = v_y x v_z.
RegistrationMatrix build_registration(double theta_z);

/// T_r = C^-1 T_v, evaluated as C^T T_v (C is orthonormal).
Vec3 volume_to_robot(const RegistrationMatrix& reg, const Vec3& t_volume);
Vec3 robot_to_volume(const RegistrationMatrix& reg, const Vec3& t_robot);

}  // namespace octnav
