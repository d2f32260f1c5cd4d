#pragma once

#include <filesystem>
#include <string>

#include "qpass/channel.hpp"

namespace qpass {

/// Satellite transmitter: intensities, their probabilities, pulse rate,
/// beam divergence and the mean transmitter polarization error.
struct SourceConfig {
    double mu = 0.8;            // signal mean photon number
    double nu = 0.1;            // decoy mean photon number
    double lambda_vac = 0.0;    // vacuum mean photon number, fixed 0
    double p_s = 0.5;
    double p_d = 0.25;
    double p_v = 0.25;
    double pulse_rate_hz = 1e8;
    double divergence_rad = 1e-5;
    /// Average polarization error of the transmitter; a contrast ratio of
    /// c:1 maps to 1/(c+1).
    double tx_mean_error = 1.0 / 226.0;

    double intensity_value(Intensity i) const {
        switch (i) {
            case Intensity::Signal: return mu;
            case Intensity::Decoy: return nu;
            case Intensity::Vacuum: return lambda_vac;
        }
        return 0.0;
    }
    double intensity_prob(Intensity i) const {
        switch (i) {
            case Intensity::Signal: return p_s;
            case Intensity::Decoy: return p_d;
            case Intensity::Vacuum: return p_v;
        }
        return 0.0;
    }

    void validate() const;  // throws ConfigError
};

/// Ground-station constants: telescope, per-channel optical efficiencies,
/// detector efficiency, fitted noise coefficients and temporal filtering.
struct ReceiverConfig {
    double aperture_m = 0.6;     // telescope diameter D_T
    double obstruction = 0.73;   // secondary-mirror obstruction factor
    ChannelArray<double> eta_opt{0.21, 0.35, 0.37, 0.19};
    double eta_det = 0.6;
    ChannelArray<double> p_channel{0.25, 0.25, 0.25, 0.25};
    double sat_noise_T = 1.8e6;  // counts/s, sunlight reflected off the satellite
    double bg_noise_C = 290.0;   // counts/s, sky background and dark counts
    double kappa = 0.22;         // atmospheric extinction coefficient
    double filter_suppression = 5.0;
    double filter_window_ns = 2.0;

    void validate() const;  // throws ConfigError
};

struct Config {
    SourceConfig source;
    ReceiverConfig receiver;

    void validate() const;
};

/// Built-in defaults match the bundled reference scenario.
Config default_config();

Config load_config(const std::filesystem::path& path);
Config parse_config(const std::string& json_text, const std::string& origin = "<string>");
std::string config_json(const Config& config);

}  // namespace qpass
