#pragma once

#include <filesystem>
#include <vector>

namespace qpass::geometry {

inline constexpr double kEarthRadiusM = 6371e3;
inline constexpr double kEarthMu = 3.986004418e14;  // m^3/s^2
/// Elevations below this are rejected outright: csc(theta) diverges.
inline constexpr double kMinModelElevationRad = 0.5 * 3.14159265358979323846 / 180.0;
/// Default operational floor; samples below it are dropped from simulation.
inline constexpr double kOperationalElevationRad = 20.0 * 3.14159265358979323846 / 180.0;

struct PassSample {
    double t = 0.0;              // seconds since pass start
    double range_m = 0.0;        // slant distance to the satellite
    double elevation_rad = 0.0;  // elevation above the horizon
};

struct PassProfile {
    std::vector<PassSample> samples;
    double step_s = 0.0;

    bool empty() const { return samples.empty(); }
    size_t size() const { return samples.size(); }
    double duration_s() const {
        return samples.empty() ? 0.0 : samples.back().t - samples.front().t;
    }
    /// Index of the sample whose t is nearest the given time.
    size_t nearest_index(double t) const;

    void validate() const;  // throws InvalidGeometry on violated invariants
};

/// Slant range to a satellite at the given altitude seen under elevation theta:
/// d = sqrt(Re^2 sin^2(theta) + h^2 + 2 Re h) - Re sin(theta).
double range_from_elevation(double elevation_rad, double altitude_m,
                            double earth_radius_m = kEarthRadiusM);

/// Generate a circular-orbit pass. The cross-track offset is chosen so the
/// elevation tops out at peak_elevation_rad; samples run from min elevation up
/// through the peak and back down, symmetric about the peak sample.
PassProfile synthetic_pass(double orbit_altitude_m, double peak_elevation_rad,
                           double min_elevation_rad, double step_s,
                           double earth_radius_m = kEarthRadiusM);

/// Load a `t_s,elevation_deg,range_m` CSV; non-uniform input is linearly
/// resampled onto a uniform grid at the smallest input step.
PassProfile load_ephemeris(const std::filesystem::path& path);
PassProfile parse_ephemeris(const std::string& text, const std::string& origin = "<string>");

std::string ephemeris_csv(const PassProfile& profile);
void save_ephemeris(const PassProfile& profile, const std::filesystem::path& path);

/// Keep only samples at or above the elevation floor (times are preserved).
PassProfile clamp_operational(const PassProfile& profile,
                              double min_elevation_rad = kOperationalElevationRad);

}  // namespace qpass::geometry
