#include "octnav/pose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace octnav {

// ---- needle pose ------------------------------------------------------------

Mat3 rotation_z(double t) {
    Mat3 r;
    r << std::cos(t), -std::sin(t), 0.0, std::sin(t), std::cos(t), 0.0, 0.0, 0.0, 1.0;
    return r;
}

Mat3 rotation_y(double t) {
    Mat3 r;
    r << std::cos(t), 0.0, std::sin(t), 0.0, 1.0, 0.0, -std::sin(t), 0.0, std::cos(t);
    return r;
}

NeedlePose compose_pose(double theta_z, double theta_y, const MetricPoint& tip) {
    if (!std::isfinite(theta_z) || !std::isfinite(theta_y)) throw std::invalid_argument("compose_pose: angles must be finite");
    return {theta_z, theta_y, tip, rotation_z(theta_z) * rotation_y(theta_y)};
}

Vec3 NeedlePose::direction() const {
    const Vec3 axis = R.col(0);
    return {axis.x(), -axis.y(), -axis.z()};
}

Vec3 advance_direction(double theta_z) {
    return {std::cos(theta_z), -std::sin(theta_z), 0.0};
}

nlohmann::json pose_to_json(const NeedlePose& p) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) r.push_back(p.R(i, j));
    }
    return {{"theta_z_rad", p.theta_z},
            {"theta_y_rad", p.theta_y},
            {"tip_um", {p.tip.x(), p.tip.y(), p.tip.z()}},
            {"R", r}};
}

NeedlePose pose_from_json(const nlohmann::json& j) {
    const auto& t = j.at("tip_um");
    if (t.size() != 3) throw std::invalid_argument("pose tip_um needs three entries");
    return compose_pose(j.at("theta_z_rad").get<double>(), j.at("theta_y_rad").get<double>(),
                        MetricPoint(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
}

// ---- line fitting -----------------------------------------------------------

namespace {

constexpr double kMaxAxisRatio = 0.2;  // minor/major eigenvalue ratio above which the set is a blob
constexpr int kMaxIterations = 100;
constexpr double kTolerance = 1e-8;
constexpr double kInlierSigmas = 3.0;

double weighted_median_abs(std::vector<double> v) {
    for (double& x : v) x = std::abs(x);
    const auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

}  // namespace

double Line2D::residual(const Eigen::Vector2d& p) const {
    const Eigen::Vector2d d = p - point;
    return direction.x() * d.y() - direction.y() * d.x();
}

Line2D fit_line_huber(std::span<const WeightedPoint> pts, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("fit_line_huber: delta must be > 0");
    double wsum = 0.0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& q : pts) {
        if (!(q.w > 0.0)) throw std::invalid_argument("fit_line_huber: weights must be > 0");
        wsum += q.w;
        mean += q.w * q.p;
    }
    if (pts.size() < 2) throw EstimationError("line fit needs at least two distinct points");
    mean /= wsum;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& q : pts) cov += q.w * (q.p - mean) * (q.p - mean).transpose();
    cov /= wsum;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const double major = es.eigenvalues()(1);
    const double minor = std::max(es.eigenvalues()(0), 0.0);
    if (!(major > 1e-18)) throw EstimationError("line fit needs at least two distinct points");
    if (minor / major > kMaxAxisRatio) throw EstimationError("degenerate line fit: points form a blob");
    const Eigen::Vector2d e1 = es.eigenvectors().col(1).normalized();
    const Eigen::Vector2d e2(-e1.y(), e1.x());

    const std::size_t n = pts.size();
    std::vector<double> a(n), b(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = (pts[i].p - mean).dot(e1);
        b[i] = (pts[i].p - mean).dot(e2);
    }

    // b = c0 + c1 * a, weights prior * huber(r / scale)
    double c0 = 0.0, c1 = 0.0, scale = 0.0;
    std::vector<double> w(n, 1.0);
    for (int it = 0; it < kMaxIterations; ++it) {
        double s = 0, sa = 0, sb = 0, saa = 0, sab = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double wi = pts[i].w * w[i];
            s += wi;
            sa += wi * a[i];
            sb += wi * b[i];
            saa += wi * a[i] * a[i];
            sab += wi * a[i] * b[i];
        }
        const double det = s * saa - sa * sa;
        if (!(det > 0.0)) throw EstimationError("degenerate line fit");
        const double n1 = (s * sab - sa * sb) / det;
        const double n0 = (sb - n1 * sa) / s;
        const double change = std::abs(n0 - c0) + std::abs(n1 - c1);
        c0 = n0;
        c1 = n1;
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - c0 - c1 * a[i];
        scale = weighted_median_abs(r) / 0.6745;
        const double k = delta * scale;
        for (std::size_t i = 0; i < n; ++i) {
            const double ar = std::abs(r[i]);
            w[i] = (k > 0.0 && ar > k) ? k / ar : 1.0;
        }
        if (it > 0 && change < kTolerance) break;
    }

    Line2D line;
    line.direction = (e1 + c1 * e2).normalized();
    line.point = mean + c0 * e2;
    line.scale = scale;
    const double cut = std::max(kInlierSigmas * scale, 1e-9 * std::sqrt(major));
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(line.residual(pts[i].p)) > cut) continue;
        line.inliers.push_back(i);
        const double t = (pts[i].p - line.point).dot(line.direction);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    if (line.inliers.empty()) throw EstimationError("line fit has no inliers");
    line.start = line.point + lo * line.direction;
    line.end = line.point + hi * line.direction;
    return line;
}

std::string_view entry_border_name(EntryBorder b) {
    switch (b) {
        case EntryBorder::MinusX: return "-x";
        case EntryBorder::PlusX: return "+x";
        case EntryBorder::MinusY: return "-y";
        case EntryBorder::PlusY: return "+y";
    }
    return "-x";
}

EntryBorder parse_entry_border(std::string_view s) {
    if (s == "-x") return EntryBorder::MinusX;
    if (s == "+x") return EntryBorder::PlusX;
    if (s == "-y") return EntryBorder::MinusY;
    if (s == "+y") return EntryBorder::PlusY;
    throw std::invalid_argument("unknown entry border: " + std::string(s));
}

// ---- estimators -------------------------------------------------------------

namespace {

std::vector<WeightedPoint> confident_points(const SoftMask& mask, double fraction, double u0 = 0.0) {
    std::vector<WeightedPoint> pts;
    const auto top = confidence_filter(mask, fraction);
    // Absolute gate on the best pixel (is there a needle at all), then a floor
    // relative to it, so a uniform rescaling of the scores keeps the same set.
    const float best = mask.scores(top.front().x, top.front().y);
    if (best < kMinConfidence) return pts;
    const float floor = kMinConfidence * best;
    for (const PixelIndex& px : top) {
        const float s = mask.scores(px.x, px.y);
        if (s < floor) break;  // sorted best first
        pts.push_back({{u0 + double(px.x) * mask.spacing.x, double(px.y) * mask.spacing.y}, double(s)});
    }
    return pts;
}

/// Orients `dir` to point away from the entry border.
Eigen::Vector2d orient(Eigen::Vector2d dir, EntryBorder border) {
    double key = 0.0, tie = 0.0;
    switch (border) {
        case EntryBorder::MinusX: key = dir.x(); tie = -dir.y(); break;
        case EntryBorder::PlusX: key = -dir.x(); tie = dir.y(); break;
        case EntryBorder::MinusY: key = dir.y(); tie = dir.x(); break;
        case EntryBorder::PlusY: key = -dir.y(); tie = -dir.x(); break;
    }
    if (key < 0.0 || (key == 0.0 && tie < 0.0)) dir = -dir;
    return dir;
}

/// Point on the line at the furthest inlier along `dir`.
Eigen::Vector2d extremum(const Line2D& line, std::span<const WeightedPoint> pts, const Eigen::Vector2d& dir) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i : line.inliers) best = std::max(best, (pts[i].p - line.point).dot(dir));
    return line.point + best * dir;
}

}  // namespace

InplaneEstimate estimate_inplane(const SoftMask& mask, double fraction, EntryBorder border, double delta) {
    const auto pts = confident_points(mask, fraction);
    if (pts.empty()) throw EstimationError("no confident needle pixels in the projection");
    InplaneEstimate e;
    e.line = fit_line_huber(pts, delta);
    const Eigen::Vector2d dir = orient(e.line.direction, border);
    e.line.direction = dir;
    const Eigen::Vector2d tip = extremum(e.line, pts, dir);
    e.theta_z = std::atan2(-dir.y(), dir.x());
    e.tx = tip.x();
    e.ty = tip.y();
    return e;
}

AxialEstimate estimate_axial(const SoftMask& mask, const SliceGeometry& slice, double fraction, double delta) {
    const auto pts = confident_points(mask, fraction);
    if (pts.empty()) throw EstimationError("no confident needle pixels in the slice");
    AxialEstimate e;
    e.line = fit_line_huber(pts, delta);
    Eigen::Vector2d dir = e.line.direction;
    if (dir.x() < 0.0) dir = -dir;  // slice u axis is the advance direction
    e.line.direction = dir;
    const Eigen::Vector2d tip = extremum(e.line, pts, dir);
    e.theta_y = std::atan2(dir.y(), dir.x());
    e.tz = tip.y();
    e.tip_col = tip.x() / slice.u_spacing;
    return e;
}

}  // namespace octnav
