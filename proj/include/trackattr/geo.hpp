#pragma once

#include <string>
#include <vector>

namespace trackattr {

// A GPS fix in degrees.
struct GeoFix {
    double lat = 0.0;
    double lon = 0.0;
};

// Validates lat in [-90, 90] and lon in [-180, 180]; throws ValidationError.
void validate_geo_fix(const GeoFix& fix);

// Great-circle distance in kilometres (haversine, spherical earth).
double haversine_km(const GeoFix& a, const GeoFix& b);

struct GeoRegion {
    int region_id = 0;
    std::string name;
    GeoFix centroid;
};

// Ordered list of regions with ids 0..C_g-1, no gaps, pairwise distinct
// centroids. Region ids double as class labels for the location head.
class GeoRegionSet {
  public:
    GeoRegionSet() = default;
    explicit GeoRegionSet(std::vector<GeoRegion> regions);

    int n_regions() const { return static_cast<int>(regions_.size()); }
    const GeoRegion& region(int id) const { return regions_.at(static_cast<std::size_t>(id)); }
    const std::vector<GeoRegion>& regions() const { return regions_; }

    // Distance between two region centroids in km.
    double centroid_separation_km(int a, int b) const;

    static GeoRegionSet load_csv(const std::string& path);
    void save_csv(const std::string& path) const;

    // Four far-apart synthetic regions used when no region file is given.
    static GeoRegionSet default_regions();

  private:
    std::vector<GeoRegion> regions_;
};

// Nearest-centroid region label under great-circle distance; ties broken by
// lowest region_id.
int discretize_geo(const GeoFix& fix, const GeoRegionSet& regions);

}  // namespace trackattr
