#include "qpass/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "qpass/csv.hpp"
#include "qpass/errors.hpp"

namespace qpass::geometry {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Earth-central angle between station and sub-satellite point for a satellite
/// at orbit radius r seen under elevation theta.
double central_angle_from_elevation(double theta, double earth_radius, double orbit_radius) {
    return kPi / 2.0 - theta - std::asin((earth_radius / orbit_radius) * std::cos(theta));
}

double elevation_from_central_angle(double psi, double earth_radius, double orbit_radius) {
    return std::atan2(std::cos(psi) - earth_radius / orbit_radius, std::sin(psi));
}

/// Stable law-of-cosines range: exact at psi = 0.
double range_from_central_angle(double psi, double earth_radius, double orbit_radius) {
    double s = std::sin(psi / 2.0);
    double dr = orbit_radius - earth_radius;
    return std::sqrt(dr * dr + 4.0 * earth_radius * orbit_radius * s * s);
}

}  // namespace

size_t PassProfile::nearest_index(double t) const {
    if (samples.empty()) throw InvalidGeometry("nearest_index on empty profile");
    auto it = std::lower_bound(samples.begin(), samples.end(), t,
                               [](const PassSample& s, double v) { return s.t < v; });
    if (it == samples.begin()) return 0;
    if (it == samples.end()) return samples.size() - 1;
    size_t hi = static_cast<size_t>(it - samples.begin());
    return (t - samples[hi - 1].t <= samples[hi].t - t) ? hi - 1 : hi;
}

void PassProfile::validate() const {
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!(s.range_m > 0.0)) {
            throw InvalidGeometry("sample " + std::to_string(i) +
                                  ": range_m must be > 0");
        }
        if (!(s.elevation_rad > 0.0 && s.elevation_rad <= kPi / 2.0 + 1e-12)) {
            throw InvalidGeometry("sample " + std::to_string(i) +
                                  ": elevation_rad must be in (0, pi/2]");
        }
        if (i > 0 && !(samples[i].t > samples[i - 1].t)) {
            throw InvalidGeometry("sample times must be strictly increasing (index " +
                                  std::to_string(i) + ")");
        }
    }
    if (samples.size() >= 2) {
        if (!(step_s > 0.0)) throw InvalidGeometry("step_s must be > 0");
        for (size_t i = 1; i < samples.size(); ++i) {
            double dt = samples[i].t - samples[i - 1].t;
            if (std::fabs(dt - step_s) > 1e-9) {
                throw InvalidGeometry("non-uniform sampling at index " + std::to_string(i) +
                                      ": dt=" + std::to_string(dt));
            }
        }
    }
}

double range_from_elevation(double elevation_rad, double altitude_m, double earth_radius_m) {
    double s = earth_radius_m * std::sin(elevation_rad);
    return std::sqrt(s * s + altitude_m * altitude_m + 2.0 * earth_radius_m * altitude_m) - s;
}

PassProfile synthetic_pass(double orbit_altitude_m, double peak_elevation_rad,
                           double min_elevation_rad, double step_s, double earth_radius_m) {
    if (!(orbit_altitude_m >= 2e5 && orbit_altitude_m <= 2e6)) {
        throw InvalidGeometry("orbit altitude must be in [2e5, 2e6] m");
    }
    if (!(min_elevation_rad > 0.0 && min_elevation_rad < peak_elevation_rad &&
          peak_elevation_rad <= kPi / 2.0 + 1e-12)) {
        throw InvalidGeometry("need 0 < min elevation < peak elevation <= pi/2");
    }
    if (!(step_s > 0.0)) throw InvalidGeometry("step_s must be > 0");

    const double r = earth_radius_m + orbit_altitude_m;
    const double beta = central_angle_from_elevation(std::min(peak_elevation_rad, kPi / 2.0),
                                                     earth_radius_m, r);
    const double psi_min = central_angle_from_elevation(min_elevation_rad, earth_radius_m, r);
    const double cos_ratio = std::cos(psi_min) / std::cos(beta);
    if (!(cos_ratio <= 1.0)) {
        throw InvalidGeometry("peak elevation unreachable for the given altitude/offset");
    }
    const double lambda_max = std::acos(cos_ratio);
    const double omega = std::sqrt(kEarthMu / (r * r * r));

    const auto n_half = static_cast<size_t>(std::floor(lambda_max / (omega * step_s)));
    const size_t n = 2 * n_half + 1;

    PassProfile profile;
    profile.step_s = step_s;
    profile.samples.resize(n);
    for (size_t i = 0; i <= n_half; ++i) {
        // evaluate the rising half and mirror it, so the pass is symmetric
        // about the peak sample to the last bit
        double lambda = (static_cast<double>(n_half) - static_cast<double>(i)) * omega * step_s;
        double psi = std::acos(std::cos(beta) * std::cos(lambda));
        double elev = elevation_from_central_angle(psi, earth_radius_m, r);
        double range = range_from_central_angle(psi, earth_radius_m, r);
        profile.samples[i] = {static_cast<double>(i) * step_s, range, elev};
        size_t j = n - 1 - i;
        profile.samples[j] = {static_cast<double>(j) * step_s, range, elev};
    }
    profile.validate();
    return profile;
}

PassProfile parse_ephemeris(const std::string& text, const std::string& origin) {
    auto table = csv::read_string(text, origin);
    size_t ct = table.column("t_s");
    size_t ce = table.column("elevation_deg");
    size_t cr = table.column("range_m");

    std::vector<PassSample> raw;
    raw.reserve(table.rows.size());
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        PassSample s;
        s.t = row[ct];
        s.elevation_rad = row[ce] * kPi / 180.0;
        s.range_m = row[cr];
        auto fail = [&](const std::string& what) {
            throw ConfigError(origin + ":" + std::to_string(table.line_numbers[i]) + ": " +
                              what);
        };
        if (!(s.range_m > 0.0)) fail("range_m must be > 0");
        if (!(s.elevation_rad > 0.0 && s.elevation_rad <= kPi / 2.0 + 1e-12)) {
            fail("elevation_deg must be in (0, 90]");
        }
        if (!raw.empty() && !(s.t > raw.back().t)) fail("t_s must be strictly increasing");
        raw.push_back(s);
    }
    if (raw.empty()) throw ConfigError(origin + ": no data rows");

    PassProfile profile;
    if (raw.size() == 1) {
        profile.samples = raw;
        profile.step_s = 0.0;
        return profile;
    }

    double min_dt = raw[1].t - raw[0].t;
    double max_dt = min_dt;
    for (size_t i = 1; i < raw.size(); ++i) {
        double dt = raw[i].t - raw[i - 1].t;
        min_dt = std::min(min_dt, dt);
        max_dt = std::max(max_dt, dt);
    }
    if (max_dt - min_dt <= 1e-9) {
        profile.samples = std::move(raw);
        profile.step_s = profile.samples[1].t - profile.samples[0].t;
        profile.validate();
        return profile;
    }

    // Non-uniform input: resample linearly at the smallest step.
    const double step = min_dt;
    const double t0 = raw.front().t;
    const double t_end = raw.back().t;
    const auto count = static_cast<size_t>(std::floor((t_end - t0) / step + 1e-9)) + 1;
    profile.step_s = step;
    profile.samples.reserve(count);
    size_t seg = 0;
    for (size_t k = 0; k < count; ++k) {
        double t = t0 + static_cast<double>(k) * step;
        while (seg + 2 < raw.size() && raw[seg + 1].t <= t) ++seg;
        const auto& a = raw[seg];
        const auto& b = raw[seg + 1];
        double u = (t - a.t) / (b.t - a.t);
        u = std::clamp(u, 0.0, 1.0);
        PassSample s;
        s.t = t;
        s.range_m = a.range_m + u * (b.range_m - a.range_m);
        s.elevation_rad = a.elevation_rad + u * (b.elevation_rad - a.elevation_rad);
        profile.samples.push_back(s);
    }
    profile.validate();
    return profile;
}

PassProfile load_ephemeris(const std::filesystem::path& path) {
    std::string text;
    FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw ConfigError("cannot open '" + path.string() + "'");
    char buf[4096];
    size_t got;
    while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, got);
    std::fclose(f);
    return parse_ephemeris(text, path.string());
}

std::string ephemeris_csv(const PassProfile& profile) {
    csv::Writer w;
    w.header({"t_s", "elevation_deg", "range_m"});
    for (const auto& s : profile.samples) {
        w.row({s.t, s.elevation_rad * 180.0 / kPi, s.range_m});
    }
    return w.text;
}

void save_ephemeris(const PassProfile& profile, const std::filesystem::path& path) {
    csv::write_file_atomic(path, ephemeris_csv(profile));
}

PassProfile clamp_operational(const PassProfile& profile, double min_elevation_rad) {
    PassProfile out;
    out.step_s = profile.step_s;
    for (const auto& s : profile.samples) {
        if (s.elevation_rad >= min_elevation_rad) out.samples.push_back(s);
    }
    return out;
}

}  // namespace qpass::geometry
