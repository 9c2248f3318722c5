#pragma once

#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "octnav/needle_pose.hpp"
#include "octnav/segmentation.hpp"
#include "octnav/slicing.hpp"

namespace octnav {

class EstimationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct WeightedPoint {
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    double w = 1.0;
};

struct Line2D {
    Eigen::Vector2d direction = Eigen::Vector2d::UnitX();  ///< unit
    Eigen::Vector2d point = Eigen::Vector2d::Zero();
    std::vector<std::size_t> inliers;  ///< indices into the fitted point set
    Eigen::Vector2d start = Eigen::Vector2d::Zero();  ///< inlier extent projected onto the line
    Eigen::Vector2d end = Eigen::Vector2d::Zero();
    double scale = 0.0;  ///< robust residual scale

    /// Signed perpendicular distance of p from the line.
    double residual(const Eigen::Vector2d& p) const;
};

inline constexpr double kHuberDelta = 1.345;

/**
 * Huber line fit by iteratively reweighted least squares. The regression runs
 * in the frame of the dominant principal axis, so steep lines are no special
 * case. Throws EstimationError with fewer than two distinct points or when the
 * points form a blob rather than a line.
 */
Line2D fit_line_huber(std::span<const WeightedPoint> points, double delta = kHuberDelta);

/// Image edge the needle enters from; the tip is the inlier extremum pointing away from it.
enum class EntryBorder { MinusX, PlusX, MinusY, PlusY };

std::string_view entry_border_name(EntryBorder b);
EntryBorder parse_entry_border(std::string_view name);

struct InplaneEstimate {
    double theta_z = 0.0;
    double tx = 0.0;
    double ty = 0.0;
    Line2D line;
};

/// theta_z, (tx, ty) from the top-fraction pixels of the projection mask, in micrometres.
InplaneEstimate estimate_inplane(const SoftMask& projection_mask, double fraction = kDefaultConfidenceFraction,
                                 EntryBorder border = EntryBorder::MinusX, double delta = kHuberDelta);

struct AxialEstimate {
    double theta_y = 0.0;
    double tz = 0.0;      ///< tip depth in micrometres (volume z)
    double tip_col = 0.0; ///< slice column of the tip (fractional)
    Line2D line;          ///< in slice micrometres (u relative to column 0, z)
};

/// theta_y and tip depth from the needle mask of the tool-aligned slice.
AxialEstimate estimate_axial(const SoftMask& needle_mask, const SliceGeometry& slice,
                             double fraction = kDefaultConfidenceFraction, double delta = kHuberDelta);

}  // namespace octnav
