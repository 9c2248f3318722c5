#include "octnav/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace octnav {

std::string_view mask_class_name(MaskClass c) {
    switch (c) {
        case MaskClass::Needle: return "needle";
        case MaskClass::Ilm: return "ilm";
        case MaskClass::Rpe: return "rpe";
    }
    return "needle";
}

std::vector<PixelIndex> confidence_filter(const SoftMask& mask, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("confidence_filter: fraction must be in (0, 1]");
    const auto scores = mask.scores.pixels();
    const std::size_t total = scores.size();
    const auto keep = std::min(total, std::size_t(std::ceil(fraction * double(total) - 1e-9)));

    std::vector<std::uint32_t> order(total);
    std::iota(order.begin(), order.end(), 0u);
    const auto better = [&](std::uint32_t a, std::uint32_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    if (keep < total) std::nth_element(order.begin(), order.begin() + std::ptrdiff_t(keep), order.end(), better);
    order.resize(keep);
    std::sort(order.begin(), order.end(), better);

    std::vector<PixelIndex> out;
    out.reserve(keep);
    const std::size_t w = mask.width();
    for (std::uint32_t i : order) out.push_back({i % w, i / w});
    return out;
}

std::size_t LayerBoundaries::nearest_valid(std::size_t col) const {
    const std::size_t n = valid.size();
    for (std::size_t r = 0; r < n; ++r) {
        if (col >= r && col - r < n && valid[col - r]) return col - r;
        if (col + r < n && valid[col + r]) return col + r;
    }
    return std::size_t(-1);
}

LayerBoundaries extract_layer_boundaries(const SoftMask& ilm, const SoftMask& rpe, double min_total) {
    if (ilm.width() != rpe.width() || ilm.height() != rpe.height()) {
        throw std::invalid_argument("extract_layer_boundaries: masks differ in size");
    }
    const std::size_t w = ilm.width();
    const std::size_t h = ilm.height();
    LayerBoundaries b;
    b.ilm_z.assign(w, 0.0);
    b.rpe_z.assign(w, 0.0);
    b.valid.assign(w, 0);
    b.z_spacing = ilm.spacing.y;

    std::vector<double> si(w, 0.0), sr(w, 0.0), mi(w, 0.0), mr(w, 0.0);
    for (std::size_t z = 0; z < h; ++z) {
        const auto ri = ilm.scores.row(z);
        const auto rr = rpe.scores.row(z);
        for (std::size_t x = 0; x < w; ++x) {
            si[x] += ri[x];
            mi[x] += double(ri[x]) * double(z);
            sr[x] += rr[x];
            mr[x] += double(rr[x]) * double(z);
        }
    }
    for (std::size_t x = 0; x < w; ++x) {
        if (si[x] < min_total || sr[x] < min_total) continue;
        b.ilm_z[x] = mi[x] / si[x];
        b.rpe_z[x] = mr[x] / sr[x];
        b.valid[x] = b.rpe_z[x] > b.ilm_z[x] ? 1 : 0;
    }
    return b;
}

// ---- shared helpers ---------------------------------------------------------

namespace {

SoftMask empty_mask(std::size_t w, std::size_t h, MaskClass c, PixelSpacing s) {
    return {Image2D<float>(w, h, 0.0f), c, s};
}

/// Sliding max (or min) over a centred window of 2*radius+1 samples, truncated at the ends.
template <typename Cmp>
void sliding_extreme(const float* in, float* out, std::size_t n, std::size_t stride, std::size_t radius, Cmp cmp) {
    std::deque<std::size_t> q;
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t hi = std::min(n - 1, i + radius);
        for (; next <= hi; ++next) {
            while (!q.empty() && !cmp(in[q.back() * stride], in[next * stride])) q.pop_back();
            q.push_back(next);
        }
        while (q.front() + radius < i) q.pop_front();
        out[i * stride] = in[q.front() * stride];
    }
}

template <typename Cmp>
Image2D<float> rect_filter(const Image2D<float>& img, std::size_t rows, std::size_t cols, Cmp cmp) {
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    Image2D<float> tmp(w, h), out(w, h);
    for (std::size_t y = 0; y < h; ++y) sliding_extreme(img.row(y).data(), tmp.row(y).data(), w, 1, cols / 2, cmp);
    for (std::size_t x = 0; x < w; ++x) sliding_extreme(tmp.data() + x, out.data() + x, h, w, rows / 2, cmp);
    return out;
}

Image2D<float> box_rows(const Image2D<float>& img, std::size_t radius) {
    const std::size_t w = img.width();
    Image2D<float> out(w, img.height());
    for (std::size_t y = 0; y < img.height(); ++y) {
        const auto in = img.row(y);
        auto o = out.row(y);
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t a = x >= radius ? x - radius : 0;
            const std::size_t b = std::min(w - 1, x + radius);
            double s = 0.0;
            for (std::size_t i = a; i <= b; ++i) s += in[i];
            o[x] = float(s / double(b - a + 1));
        }
    }
    return out;
}

Image2D<float> gauss_cols(const Image2D<float>& img, double sigma) {
    const auto radius = std::size_t(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double t = double(i) - double(radius);
        k[i] = std::exp(-0.5 * t * t / (sigma * sigma));
    }
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    Image2D<float> out(w, h);
    std::vector<double> acc(w), norm(w);
    for (std::size_t y = 0; y < h; ++y) {
        std::fill(acc.begin(), acc.end(), 0.0);
        double ksum = 0.0;
        for (std::size_t i = 0; i < k.size(); ++i) {
            const auto yy = std::ptrdiff_t(y + i) - std::ptrdiff_t(radius);
            if (yy < 0 || yy >= std::ptrdiff_t(h)) continue;
            ksum += k[i];
            const auto r = img.row(std::size_t(yy));
            for (std::size_t x = 0; x < w; ++x) acc[x] += k[i] * r[x];
        }
        auto o = out.row(y);
        for (std::size_t x = 0; x < w; ++x) o[x] = float(acc[x] / ksum);
    }
    return out;
}

/// 8-connected components of `on`; returns labels (0 = background) and pixel counts per label.
std::vector<std::uint32_t> label_components(const std::vector<std::uint8_t>& on, std::size_t w, std::size_t h,
                                            std::vector<std::size_t>& sizes) {
    std::vector<std::uint32_t> label(on.size(), 0);
    sizes.assign(1, 0);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < on.size(); ++start) {
        if (!on[start] || label[start]) continue;
        const auto id = std::uint32_t(sizes.size());
        sizes.push_back(0);
        label[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++sizes[id];
            const std::size_t x = i % w, y = i / w;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto nx = std::ptrdiff_t(x) + dx, ny = std::ptrdiff_t(y) + dy;
                    if (nx < 0 || ny < 0 || nx >= std::ptrdiff_t(w) || ny >= std::ptrdiff_t(h)) continue;
                    const std::size_t j = std::size_t(ny) * w + std::size_t(nx);
                    if (on[j] && !label[j]) {
                        label[j] = id;
                        stack.push_back(j);
                    }
                }
            }
        }
    }
    return label;
}

/// Position of pixel i inside its run of `id` pixels along one axis, as 1 at
/// the run midpoint falling to 0 at the run ends.
void run_centrality(const std::vector<std::uint32_t>& label, std::uint32_t id, std::size_t w, std::size_t h,
                    bool along_columns, std::vector<float>& out) {
    const std::size_t lines = along_columns ? w : h;
    const std::size_t len = along_columns ? h : w;
    const auto at = [&](std::size_t line, std::size_t k) { return along_columns ? k * w + line : line * w + k; };
    for (std::size_t line = 0; line < lines; ++line) {
        std::size_t k = 0;
        while (k < len) {
            if (label[at(line, k)] != id) {
                ++k;
                continue;
            }
            const std::size_t a = k;
            while (k < len && label[at(line, k)] == id) ++k;
            const double mid = 0.5 * double(a + k - 1);
            const double half = 0.5 * double(k - a);
            for (std::size_t i = a; i < k; ++i) out[at(line, i)] = float(1.0 - std::abs(double(i) - mid) / half);
        }
    }
}

/// True when the component's dominant metric axis is closer to the image x axis.
bool mostly_horizontal(const std::vector<std::uint32_t>& label, std::uint32_t id, std::size_t w, PixelSpacing s) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d m2 = Eigen::Matrix2d::Zero();
    double n = 0.0;
    for (std::size_t i = 0; i < label.size(); ++i) {
        if (label[i] != id) continue;
        const Eigen::Vector2d p(double(i % w) * s.x, double(i / w) * s.y);
        mean += p;
        m2 += p * p.transpose();
        n += 1.0;
    }
    mean /= n;
    const Eigen::Matrix2d cov = m2 / n - mean * mean.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const Eigen::Vector2d axis = es.eigenvectors().col(1);
    return std::abs(axis.x()) >= std::abs(axis.y());
}

/// Hat profile of half-width one row centred on `z`, added into column x.
void stamp_hat(Image2D<float>& img, std::size_t x, double z) {
    const auto base = std::ptrdiff_t(std::floor(z));
    for (std::ptrdiff_t r = base - 1; r <= base + 2; ++r) {
        if (r < 0 || r >= std::ptrdiff_t(img.height())) continue;
        const double v = 1.0 - std::abs(double(r) - z);
        if (v > 0.0) img(x, std::size_t(r)) = float(v);
    }
}

}  // namespace

// ---- baseline ---------------------------------------------------------------

SoftMask BaselineSegmenter::segment_projection(const AxialProjectionImage& image) const {
    const std::size_t w = image.width();
    const std::size_t h = image.height();
    SoftMask mask = empty_mask(w, h, MaskClass::Needle, image.spacing);
    if (w == 0 || h == 0) return mask;

    // Dropped B-scans show up as all-zero rows; fill them from their neighbours.
    std::vector<std::uint8_t> dropped(h, 0);
    for (std::size_t y = 0; y < h; ++y) {
        const auto r = image.pixels.row(y);
        dropped[y] = *std::max_element(r.begin(), r.end()) < 1.0f ? 1 : 0;
    }
    if (std::all_of(dropped.begin(), dropped.end(), [](auto d) { return d != 0; })) return mask;
    Image2D<float> filled = image.pixels;
    for (std::size_t y = 0; y < h; ++y) {
        if (!dropped[y]) continue;
        std::ptrdiff_t a = std::ptrdiff_t(y) - 1, b = std::ptrdiff_t(y) + 1;
        while (a >= 0 && dropped[std::size_t(a)]) --a;
        while (b < std::ptrdiff_t(h) && dropped[std::size_t(b)]) ++b;
        for (std::size_t x = 0; x < w; ++x) {
            if (a < 0) {
                filled(x, y) = image.pixels(x, std::size_t(b));
            } else if (b >= std::ptrdiff_t(h)) {
                filled(x, y) = image.pixels(x, std::size_t(a));
            } else {
                const double t = double(std::ptrdiff_t(y) - a) / double(b - a);
                filled(x, y) = float((1.0 - t) * image.pixels(x, std::size_t(a)) + t * image.pixels(x, std::size_t(b)));
            }
        }
    }

    // The needle and its shadow darken the projection; compare against a closing
    // that is too large to fit inside the footprint.
    const Image2D<float> smooth = box_rows(filled, 2);
    const Image2D<float> bg = rect_filter(rect_filter(smooth, p_.background_rows, p_.background_cols, std::greater<>()),
                                          p_.background_rows, p_.background_cols, std::less<>());
    std::vector<float> contrast(w * h, 0.0f);
    std::vector<std::uint8_t> on(w * h, 0);
    for (std::size_t i = 0; i < w * h; ++i) {
        const float b = bg.pixels()[i];
        const double c = b > 0.0f ? (double(b) - smooth.pixels()[i]) / double(b) : 0.0;
        contrast[i] = float(std::clamp((c - p_.contrast_lo) / (p_.contrast_hi - p_.contrast_lo), 0.0, 1.0));
        on[i] = contrast[i] > 0.0f;
    }

    std::vector<std::size_t> sizes;
    const auto label = label_components(on, w, h, sizes);
    if (sizes.size() < 2) return mask;
    const auto best = std::uint32_t(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());

    std::vector<float> central(w * h, 0.0f);
    run_centrality(label, best, w, h, mostly_horizontal(label, best, w, image.spacing), central);
    auto out = mask.scores.pixels();
    for (std::size_t i = 0; i < w * h; ++i) {
        if (label[i] != best || dropped[i / w]) continue;
        out[i] = contrast[i] * (0.5f + 0.5f * central[i]);
    }
    return mask;
}

BScanMasks BaselineSegmenter::segment_bscan(const VirtualBScan& slice) const {
    const std::size_t w = slice.image.width();
    const std::size_t h = slice.image.height();
    const PixelSpacing sp = slice.spacing();
    BScanMasks m{empty_mask(w, h, MaskClass::Needle, sp), empty_mask(w, h, MaskClass::Ilm, sp),
                 empty_mask(w, h, MaskClass::Rpe, sp)};
    if (w == 0 || h == 0) return m;

    const Image2D<float> smooth = box_rows(gauss_cols(slice.image, 2.0), 2);

    // Needle: the largest bright component tall enough to be a shaft cross-section.
    std::vector<std::uint8_t> on(w * h, 0);
    for (std::size_t i = 0; i < w * h; ++i) on[i] = smooth.pixels()[i] > p_.needle_threshold;
    std::vector<std::size_t> sizes;
    const auto label = label_components(on, w, h, sizes);
    const auto min_run = std::size_t(std::ceil(p_.needle_min_run_um / sp.y));
    std::vector<std::size_t> longest(sizes.size(), 0);
    for (std::size_t x = 0; x < w; ++x) {
        std::size_t run = 0;
        std::uint32_t prev = 0;
        for (std::size_t z = 0; z < h; ++z) {
            const std::uint32_t l = label[z * w + x];
            run = (l != 0 && l == prev) ? run + 1 : (l != 0 ? 1 : 0);
            prev = l;
            if (l) longest[l] = std::max(longest[l], run);
        }
    }
    std::uint32_t needle = 0;
    for (std::uint32_t l = 1; l < sizes.size(); ++l) {
        if (longest[l] >= min_run && (needle == 0 || sizes[l] > sizes[needle])) needle = l;
    }

    std::vector<std::ptrdiff_t> needle_bottom(w, -1);
    if (needle) {
        std::vector<float> central(w * h, 0.0f);
        run_centrality(label, needle, w, h, true, central);
        for (std::size_t i = 0; i < w * h; ++i) {
            if (label[i] != needle) continue;
            m.needle.scores.pixels()[i] = 0.5f + 0.5f * central[i];
            needle_bottom[i % w] = std::ptrdiff_t(i / w);
        }
    }

    // Layers: first strong ridge below the needle is the ILM, brightest ridge within reach below it the RPE.
    const auto gap_lo = std::size_t(std::ceil(p_.rpe_min_gap_um / sp.y));
    const auto gap_hi = std::size_t(std::floor(p_.rpe_max_gap_um / sp.y));
    const auto peak_reach = std::size_t(std::ceil(30.0 / sp.y));
    const auto refine = [&](std::size_t x, std::size_t z) {
        if (z == 0 || z + 1 >= h) return double(z);
        const double a = smooth(x, z - 1), b = smooth(x, z), c = smooth(x, z + 1);
        const double den = a - 2.0 * b + c;
        return den < 0.0 ? double(z) + std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : double(z);
    };
    for (std::size_t x = 0; x < w; ++x) {
        if (!slice.valid.empty() && !slice.valid[x]) continue;
        std::size_t z = std::size_t(needle_bottom[x] + 1);
        while (z < h && smooth(x, z) <= p_.ilm_threshold) ++z;
        if (z >= h) continue;
        std::size_t ilm = z;
        for (std::size_t k = z; k < std::min(h, z + peak_reach); ++k) {
            if (smooth(x, k) > smooth(x, ilm)) ilm = k;
        }
        std::size_t rpe = 0;
        float best = p_.rpe_threshold;
        for (std::size_t k = ilm + gap_lo; k < std::min(h, ilm + gap_hi + 1); ++k) {
            if (smooth(x, k) > best) {
                best = smooth(x, k);
                rpe = k;
            }
        }
        if (rpe == 0) continue;
        stamp_hat(m.ilm.scores, x, refine(x, ilm));
        stamp_hat(m.rpe.scores, x, refine(x, rpe));
    }
    return m;
}

// ---- oracle -----------------------------------------------------------------

namespace {

constexpr float kOracleFloor = 0.05f;

/// 1 - (d/r)^2 for pixels whose nearest axis point lies strictly inside the
/// shaft; the cap overhang beyond the tip keeps the floor score.
float oracle_axis_score(const NeedleModel& n, double x, double y) {
    const Vec3 d = n.pose.direction();
    const Eigen::Vector2d axis(d.x(), d.y());
    const double len2 = axis.squaredNorm();
    if (len2 < 1e-18) return kOracleFloor;
    const Eigen::Vector2d rel(x - n.pose.tip.x(), y - n.pose.tip.y());
    const double t = rel.dot(axis) / len2;  // axial coordinate in um, tip at 0
    if (t > 0.0 || t < -n.length_um) return kOracleFloor;
    const double q = std::abs(rel.x() * axis.y() - rel.y() * axis.x()) / std::sqrt(len2) / n.radius_um;
    return std::max(float(1.0 - q * q), kOracleFloor);
}

}  // namespace

SoftMask OracleSegmenter::segment_projection(const AxialProjectionImage& image) const {
    SoftMask mask = empty_mask(image.width(), image.height(), MaskClass::Needle, image.spacing);
    if (!scene_.needle) return mask;
    const NeedleModel& n = *scene_.needle;
    for (std::size_t y = 0; y < image.height(); ++y) {
        for (std::size_t x = 0; x < image.width(); ++x) {
            const double xu = double(x) * image.spacing.x;
            const double yu = double(y) * image.spacing.y;
            if (!in_needle_footprint(scene_, xu, yu)) continue;
            mask.scores(x, y) = oracle_axis_score(n, xu, yu);
        }
    }
    return mask;
}

BScanMasks OracleSegmenter::segment_bscan(const VirtualBScan& slice) const {
    // Geometry only: the oracle never looks at the pixels.
    const SliceGeometry& g = slice.geometry;
    const std::size_t w = g.width;
    const std::size_t h = g.height;
    const PixelSpacing sp = slice.spacing();
    BScanMasks m{empty_mask(w, h, MaskClass::Needle, sp), empty_mask(w, h, MaskClass::Ilm, sp),
                 empty_mask(w, h, MaskClass::Rpe, sp)};

    for (std::size_t x = 0; x < w; ++x) {
        if (!slice.valid.empty() && !slice.valid[x]) continue;
        const MetricPoint top = g.to_volume(double(x), 0.0);
        const double xu = top.x(), yu = top.y();
        double shadow_from = std::numeric_limits<double>::infinity();

        if (scene_.needle) {
            const NeedleModel& n = *scene_.needle;
            if (const auto c = needle_chord(n, xu, yu)) {
                const double z0 = scene_.optical_depth(xu, yu, c->top) / g.z_spacing;
                const double z1 = scene_.optical_depth(xu, yu, c->bottom) / g.z_spacing;
                shadow_from = z1;
                const Vec3 d = n.pose.direction();
                for (auto z = std::ptrdiff_t(std::ceil(z0)); z <= std::ptrdiff_t(std::floor(z1)); ++z) {
                    if (z < 0 || z >= std::ptrdiff_t(h)) continue;
                    const MetricPoint q(xu, yu, scene_.physical_depth(xu, yu, double(z) * g.z_spacing));
                    const Vec3 wv = q - n.pose.tip;
                    const double s = wv.dot(d);
                    const double r = (wv - s * d).norm() / n.radius_um;
                    if (s < -n.length_um || s > 0.0 || r > 1.0) continue;
                    m.needle.scores(x, std::size_t(z)) = std::max(float(1.0 - r * r), kOracleFloor);
                }
            }
        }
        const double ilm = scene_.ilm_optical(xu, yu) / g.z_spacing;
        const double rpe = scene_.rpe_optical(xu, yu) / g.z_spacing;
        if (ilm < shadow_from) stamp_hat(m.ilm.scores, x, ilm);
        if (rpe < shadow_from) stamp_hat(m.rpe.scores, x, rpe);
    }
    return m;
}

std::unique_ptr<Segmenter> make_segmenter(std::string_view name, const PhantomScene* scene) {
    if (name == "baseline") return std::make_unique<BaselineSegmenter>();
    if (name == "oracle") {
        if (!scene) throw std::invalid_argument("oracle segmenter needs the phantom scene");
        return std::make_unique<OracleSegmenter>(*scene);
    }
    throw std::invalid_argument("unknown segmenter: " + std::string(name));
}

}  // namespace octnav
