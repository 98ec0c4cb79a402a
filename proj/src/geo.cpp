#include "trackattr/geo.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "trackattr/error.hpp"

namespace trackattr {

namespace {
constexpr double kEarthRadiusKm = 6371.0088;  // IUGG mean radius
constexpr double kDegToRad = 0.017453292519943295;
}  // namespace

void validate_geo_fix(const GeoFix& fix) {
    if (!(std::isfinite(fix.lat) && fix.lat >= -90.0 && fix.lat <= 90.0))
        throw ValidationError("latitude out of range [-90, 90]: " + std::to_string(fix.lat));
    if (!(std::isfinite(fix.lon) && fix.lon >= -180.0 && fix.lon <= 180.0))
        throw ValidationError("longitude out of range [-180, 180]: " + std::to_string(fix.lon));
}

double haversine_km(const GeoFix& a, const GeoFix& b) {
    double lat1 = a.lat * kDegToRad;
    double lat2 = b.lat * kDegToRad;
    double dlat = (b.lat - a.lat) * kDegToRad;
    double dlon = (b.lon - a.lon) * kDegToRad;
    double sl = std::sin(0.5 * dlat);
    double so = std::sin(0.5 * dlon);
    double h = sl * sl + std::cos(lat1) * std::cos(lat2) * so * so;
    h = std::min(1.0, h);
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

GeoRegionSet::GeoRegionSet(std::vector<GeoRegion> regions) : regions_(std::move(regions)) {
    if (regions_.size() < 2) throw ValidationError("region set needs at least 2 regions");
    for (std::size_t i = 0; i < regions_.size(); ++i) {
        if (regions_[i].region_id != static_cast<int>(i))
            throw ValidationError("region ids must be 0..C_g-1 without gaps; got id " +
                                  std::to_string(regions_[i].region_id) + " at position " + std::to_string(i));
        validate_geo_fix(regions_[i].centroid);
    }
    for (std::size_t i = 0; i < regions_.size(); ++i)
        for (std::size_t j = i + 1; j < regions_.size(); ++j)
            if (regions_[i].centroid.lat == regions_[j].centroid.lat &&
                regions_[i].centroid.lon == regions_[j].centroid.lon)
                throw ValidationError("regions " + std::to_string(i) + " and " + std::to_string(j) +
                                      " share a centroid");
}

double GeoRegionSet::centroid_separation_km(int a, int b) const {
    return haversine_km(region(a).centroid, region(b).centroid);
}

GeoRegionSet GeoRegionSet::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open region file: " + path);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("region file is empty: " + path, 1);
    ++line_no;
    if (line == "region_id,name,lat,lon\r") line.pop_back();
    if (line != "region_id,name,lat,lon")
        throw ParseError("region file header must be 'region_id,name,lat,lon'", line_no);
    std::vector<GeoRegion> regions;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id_s, name, lat_s, lon_s;
        if (!std::getline(ss, id_s, ',') || !std::getline(ss, name, ',') ||
            !std::getline(ss, lat_s, ',') || !std::getline(ss, lon_s))
            throw ParseError("region row needs 4 comma-separated fields", line_no);
        GeoRegion r;
        try {
            r.region_id = std::stoi(id_s);
            r.centroid.lat = std::stod(lat_s);
            r.centroid.lon = std::stod(lon_s);
        } catch (const std::exception&) {
            throw ParseError("bad numeric field in region row", line_no);
        }
        r.name = name;
        regions.push_back(std::move(r));
    }
    return GeoRegionSet(std::move(regions));
}

void GeoRegionSet::save_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write region file: " + path);
    out << "region_id,name,lat,lon\n";
    for (const auto& r : regions_) {
        std::ostringstream row;
        row.precision(17);
        row << r.region_id << ',' << r.name << ',' << r.centroid.lat << ',' << r.centroid.lon << '\n';
        out << row.str();
    }
    if (!out) throw IoError("failed writing region file: " + path);
}

GeoRegionSet GeoRegionSet::default_regions() {
    return GeoRegionSet({
        {0, "north", {10.0, 0.0}},
        {1, "east", {0.0, 10.0}},
        {2, "south", {-10.0, 0.0}},
        {3, "west", {0.0, -10.0}},
    });
}

int discretize_geo(const GeoFix& fix, const GeoRegionSet& regions) {
    int best = 0;
    double best_d = haversine_km(fix, regions.region(0).centroid);
    for (int i = 1; i < regions.n_regions(); ++i) {
        double d = haversine_km(fix, regions.region(i).centroid);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

}  // namespace trackattr
