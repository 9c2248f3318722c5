#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "octnav/phantom.hpp"

namespace octnav::testing {

inline double deg(double d) { return d * M_PI / 180.0; }

/// A reduced-size scene that renders in well under a second.
inline PhantomScene small_scene() {
    PhantomScene s = default_scene();
    s.id = "small";
    s.geometry = VolumeGeometry{Dims{200, 40, 800}, kDefaultSpacing};
    const Vec3 c = s.geometry.extent() / 2.0;
    for (Surface* surf : {&s.ilm, &s.rpe}) {
        surf->center_x_um = c.x();
        surf->center_y_um = c.y();
        surf->bumps.clear();
    }
    s.needle = NeedleModel{compose_pose(deg(10.0), deg(22.0), MetricPoint(350.0, 500.0, 1000.0)), 55.0, 6000.0};
    s.bscan_dropout_prob = 0.0;
    s.rng_seed = 7;
    return s;
}

/// Same scene without speckle.
inline PhantomScene clean_scene() {
    PhantomScene s = small_scene();
    s.speckle_noise_sigma = 0.0;
    return s;
}

inline std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("octnav_test_" + name);
}

}  // namespace octnav::testing
