#include "qpass/link_model.hpp"

#include <cmath>

#include "qpass/errors.hpp"

namespace qpass::link {

Efficiency channel_efficiency(const geometry::PassSample& sample, const ReceiverConfig& rx,
                              const SourceConfig& src, Channel channel) {
    if (!(sample.range_m > 0.0)) throw InvalidGeometry("range must be > 0");
    if (!(sample.elevation_rad >= geometry::kMinModelElevationRad)) {
        throw InvalidGeometry("elevation below 0.5 deg is outside the model's validity");
    }
    const double sin_el = std::sin(sample.elevation_rad);
    const double cos_el = std::cos(sample.elevation_rad);
    const double csc = 1.0 / sin_el;
    const double cot2 = (cos_el / sin_el) * (cos_el / sin_el);
    const double airmass = csc * (1.0 - 0.0012 * cot2);
    const double atm = std::pow(10.0, -0.4 * rx.kappa * airmass);
    const double beam = src.divergence_rad * sample.range_m;
    const double geo = rx.obstruction * rx.aperture_m * rx.aperture_m / (beam * beam);

    Efficiency out;
    out.value = geo * atm * at(rx.eta_opt, channel) * rx.eta_det;
    if (out.value > 1.0) {
        out.value = 1.0;
        out.clamped = true;
    }
    return out;
}

double count_rate(double eta_xi, const ReceiverConfig& rx, const SourceConfig& src,
                  Channel channel) {
    if (!(eta_xi >= 0.0 && eta_xi <= 1.0)) throw NumericError("eta_xi must be in [0,1]");
    double source_terms = 0.0;
    for (Intensity i : kIntensities) {
        double alpha = src.intensity_value(i);
        source_terms += src.intensity_prob(i) * (-std::expm1(-alpha * eta_xi));
    }
    double noise = rx.sat_noise_T * eta_xi + rx.bg_noise_C;
    return at(rx.p_channel, channel) * (noise + src.pulse_rate_hz * source_terms);
}

double noise_rate(double eta_mean, const ReceiverConfig& rx) {
    if (!(eta_mean >= 0.0 && eta_mean <= 1.0)) throw NumericError("eta_mean must be in [0,1]");
    return rx.sat_noise_T * eta_mean + rx.bg_noise_C;
}

ChannelEfficiencySeries efficiency_series(const geometry::PassProfile& profile,
                                          const ReceiverConfig& rx, const SourceConfig& src) {
    ChannelEfficiencySeries series;
    series.t.reserve(profile.size());
    series.eta.reserve(profile.size());
    series.eta_mean.reserve(profile.size());
    for (const auto& sample : profile.samples) {
        ChannelArray<double> eta{};
        for (Channel c : kChannels) {
            auto e = channel_efficiency(sample, rx, src, c);
            at(eta, c) = e.value;
            series.any_clamped = series.any_clamped || e.clamped;
        }
        series.t.push_back(sample.t);
        series.eta_mean.push_back((eta[0] + eta[1] + eta[2] + eta[3]) / 4.0);
        series.eta.push_back(eta);
    }
    return series;
}

}  // namespace qpass::link
