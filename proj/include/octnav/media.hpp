#pragma once

#include <limits>
#include <string_view>
#include <vector>

namespace octnav {

enum class Medium { Air, Vitreous, Tissue };

std::string_view medium_name(Medium m);

/// Refractive indices of the open-sky media.
struct MediaIndices {
    double air = 1.0;
    double vitreous = 1.38;
    double tissue = 1.38;
};

/// One medium between two optical depths (micrometres, volume frame).
struct MediaRegion {
    Medium label = Medium::Air;
    double n = 1.0;
    double top_um = -std::numeric_limits<double>::infinity();
    double bottom_um = 0.0;
};

/**
 * Media traversed by one A-scan, ordered along +Z. Regions are contiguous;
 * depths outside [front().top_um, back().bottom_um] are undefined.
 */
class MediaStack {
  public:
    MediaStack() = default;
    explicit MediaStack(std::vector<MediaRegion> regions);

    /// Air above the fluid surface, vitreous down to the ILM, tissue down to the RPE.
    /// Empty regions (e.g. fluid surface below the ILM) are dropped.
    static MediaStack open_sky(double fluid_surface_um, double ilm_um, double rpe_um, const MediaIndices& n);

    const std::vector<MediaRegion>& regions() const { return regions_; }
    double top() const { return regions_.front().top_um; }
    double bottom() const { return regions_.back().bottom_um; }

  private:
    std::vector<MediaRegion> regions_;
};

}  // namespace octnav
