#pragma once

#include <vector>

#include "qpass/channel.hpp"
#include "qpass/config.hpp"
#include "qpass/geometry.hpp"

namespace qpass::link {

struct Efficiency {
    double value = 0.0;
    bool clamped = false;  // raw expression exceeded 1 and was clamped
};

/// Overall link efficiency of one polarization channel:
///   eta = eps * D_T^2 / (gamma d)^2
///         * 10^(-0.4 kappa csc(theta) (1 - 0.0012 cot^2(theta)))
///         * eta_opt * eta_det
/// Elevations below 0.5 deg are rejected (csc blows up well outside the
/// operational envelope).
Efficiency channel_efficiency(const geometry::PassSample& sample, const ReceiverConfig& rx,
                              const SourceConfig& src, Channel channel);

/// Photon count rate of one channel:
///   F = p_ch * [ (T eta + C) + sum_alpha f p_alpha (1 - exp(-alpha eta)) ].
double count_rate(double eta_xi, const ReceiverConfig& rx, const SourceConfig& src,
                  Channel channel);

/// Unfiltered noise rate N = T * eta_mean + C.
double noise_rate(double eta_mean, const ReceiverConfig& rx);

struct ChannelEfficiencySeries {
    std::vector<double> t;
    std::vector<ChannelArray<double>> eta;  // per sample
    std::vector<double> eta_mean;           // arithmetic mean of the four channels
    bool any_clamped = false;

    size_t size() const { return t.size(); }
};

ChannelEfficiencySeries efficiency_series(const geometry::PassProfile& profile,
                                          const ReceiverConfig& rx, const SourceConfig& src);

}  // namespace qpass::link
