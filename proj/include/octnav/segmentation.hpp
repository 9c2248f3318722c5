#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "octnav/image.hpp"
#include "octnav/phantom.hpp"
#include "octnav/projection.hpp"
#include "octnav/slicing.hpp"

namespace octnav {

enum class MaskClass { Needle, Ilm, Rpe };

std::string_view mask_class_name(MaskClass c);

/// Per-pixel confidence in [0, 1] for one class.
struct SoftMask {
    Image2D<float> scores;
    MaskClass label = MaskClass::Needle;
    PixelSpacing spacing;

    std::size_t width() const { return scores.width(); }
    std::size_t height() const { return scores.height(); }
};

struct PixelIndex {
    std::size_t x = 0;
    std::size_t y = 0;
    bool operator==(const PixelIndex&) const = default;
};

inline constexpr double kDefaultConfidenceFraction = 0.01;
/// The best kept pixel must reach this score for a needle to count as present;
/// kept pixels below this fraction of the best score are ignored by the pose estimators.
inline constexpr float kMinConfidence = 0.5f;

/// Exactly ceil(fraction * W * H) pixels with the highest scores, best first;
/// equal scores keep row-major order.
std::vector<PixelIndex> confidence_filter(const SoftMask& mask, double fraction);

struct BScanMasks {
    SoftMask needle;
    SoftMask ilm;
    SoftMask rpe;
};

/// Per-column boundary rows (fractional pixel z) of one B-scan.
struct LayerBoundaries {
    std::vector<double> ilm_z;
    std::vector<double> rpe_z;
    std::vector<std::uint8_t> valid;
    double z_spacing = 1.0;

    std::size_t size() const { return valid.size(); }
    double ilm_um(std::size_t col) const { return ilm_z.at(col) * z_spacing; }
    double rpe_um(std::size_t col) const { return rpe_z.at(col) * z_spacing; }
    /// Valid column closest to `col`, or npos when none is valid.
    std::size_t nearest_valid(std::size_t col) const;
};

inline constexpr double kMinColumnScore = 0.5;

/// Score-weighted centroid depth per column; a column is invalid when either
/// class sums to less than `min_total` or the RPE is not below the ILM.
LayerBoundaries extract_layer_boundaries(const SoftMask& ilm, const SoftMask& rpe,
                                         double min_total = kMinColumnScore);

class Segmenter {
  public:
    virtual ~Segmenter() = default;
    virtual std::string name() const = 0;
    virtual SoftMask segment_projection(const AxialProjectionImage& image) const = 0;
    virtual BScanMasks segment_bscan(const VirtualBScan& slice) const = 0;
};

/// Classical heuristics; works on any volume.
class BaselineSegmenter final : public Segmenter {
  public:
    struct Params {
        double contrast_lo = 0.05;       ///< needle contrast against local background mapped to score 0
        double contrast_hi = 0.15;       ///< ... and to score 1
        std::size_t background_rows = 17;
        std::size_t background_cols = 161;
        float needle_threshold = 9000.0f;  ///< smoothed B-scan intensity of needle pixels
        double needle_min_run_um = 90.0;   ///< vertical extent of a needle cross-section
        float ilm_threshold = 4000.0f;
        float rpe_threshold = 12000.0f;
        double rpe_min_gap_um = 30.0;
        double rpe_max_gap_um = 700.0;
    };

    BaselineSegmenter() = default;
    explicit BaselineSegmenter(Params p) : p_(p) {}

    std::string name() const override { return "baseline"; }
    SoftMask segment_projection(const AxialProjectionImage& image) const override;
    BScanMasks segment_bscan(const VirtualBScan& slice) const override;

    const Params& params() const { return p_; }

  private:
    Params p_;
};

/// Ground truth taken from the scene geometry. Scores are graded by distance
/// to the needle axis, so the top-confidence pixels hug the axis.
class OracleSegmenter final : public Segmenter {
  public:
    explicit OracleSegmenter(PhantomScene scene) : scene_(std::move(scene)) {}

    std::string name() const override { return "oracle"; }
    SoftMask segment_projection(const AxialProjectionImage& image) const override;
    BScanMasks segment_bscan(const VirtualBScan& slice) const override;

    const PhantomScene& scene() const { return scene_; }

  private:
    PhantomScene scene_;
};

/// "baseline" or "oracle"; the oracle needs the scene.
std::unique_ptr<Segmenter> make_segmenter(std::string_view name, const PhantomScene* scene = nullptr);

}  // namespace octnav
