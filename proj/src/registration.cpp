#include "octnav/registration.hpp"

#include <cmath>

namespace octnav {

RegistrationMatrix build_registration(double theta_z) {
    const Vec3 v_z(0.0, 0.0, -1.0);
    const Vec3 v_y(std::sin(theta_z), std::cos(theta_z), 0.0);
    const Vec3 v_x = v_y.cross(v_z);

    RegistrationMatrix reg;
    reg.C.col(0) = v_x;
    reg.C.col(1) = v_y;
    reg.C.col(2) = v_z;
    reg.theta_z = theta_z;
    return reg;
}

Vec3 volume_to_robot(const RegistrationMatrix& reg, const Vec3& t_volume) {
    return reg.C.transpose() * t_volume;
}

Vec3 robot_to_volume(const RegistrationMatrix& reg, const Vec3& t_robot) {
    return reg.C * t_robot;
}

}  // namespace octnav
