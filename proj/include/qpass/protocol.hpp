#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qpass/channel.hpp"
#include "qpass/config.hpp"
#include "qpass/geometry.hpp"
#include "qpass/link_model.hpp"

namespace qpass::protocol {

/// Background yield per sent pulse, Y0 = N / (suppression * f).
double background_yield(double noise_total, double pulse_rate_hz, double suppression = 5.0);

/// Sifted bit rate for a source of the given intensity:
///   R = 1/2 f p_alpha [ Y0 + sum_ch p_ch (1 - exp(-alpha eta_ch)) ].
double sifted_rate(double alpha, double p_alpha, double y0, const ChannelArray<double>& eta,
                   const SourceConfig& src,
                   const ChannelArray<double>& p_channel = {0.25, 0.25, 0.25, 0.25});

/// Upper bound on a channel's intrinsic error: receiver term plus mean
/// transmitter term, capped at 1/2.
double intrinsic_error_upper(double e_rx, double e_tx_mean);

/// Upper bound on errors per second in the sifted bits:
///   1/2 f p_alpha [ 1/2 Y0 + 1/4 sum_ch e_ch (1 - exp(-alpha eta_ch)) ].
/// The 1/4 weight inside the sum is fixed, not p_ch.
double error_count_upper(double alpha, double p_alpha, double y0,
                         const ChannelArray<double>& e_det_upper,
                         const ChannelArray<double>& eta, const SourceConfig& src);

/// QBER upper bound; throws NumericError when r_sift is zero.
double qber_upper(double n_err, double r_sift);

/// Time series of per-channel receiver intrinsic errors, nearest-sample lookup.
struct IntrinsicErrorSeries {
    std::vector<double> t;
    std::vector<ChannelArray<double>> e_rx;

    ChannelArray<double> at_time(double time) const;
    void validate() const;

    static IntrinsicErrorSeries constant(double e, double t0 = 0.0, double t1 = 0.0);
    static IntrinsicErrorSeries parse_csv(const std::string& text,
                                          const std::string& origin = "<string>");
    static IntrinsicErrorSeries load(const std::filesystem::path& path);
    std::string csv() const;
};

struct SiftedRateSeries {
    std::vector<double> t;
    std::vector<IntensityArray<double>> rate;        // bits/s per intensity
    std::vector<IntensityArray<double>> qber_upper;  // model upper bound per intensity
    std::vector<double> y0;

    size_t size() const { return t.size(); }
    static SiftedRateSeries parse_csv(const std::string& text,
                                      const std::string& origin = "<string>");
    std::string csv() const;
};

struct DetectionRecord {
    uint64_t pulse_index = 0;
    Channel channel = Channel::H;
    Basis alice_basis = Basis::Z;
    uint8_t alice_bit = 0;
    Basis bob_basis = Basis::Z;  // always basis_of(channel)
    uint8_t bob_bit = 0;         // bit_of(channel) except resolved double clicks
    Intensity intensity = Intensity::Signal;
    double timestamp_ns = 0.0;
};

std::string records_csv(const std::vector<DetectionRecord>& records);
std::vector<DetectionRecord> parse_records_csv(const std::string& text,
                                               const std::string& origin = "<string>");

/// Pass-level tallies. Analytic runs hold expected values; Monte Carlo runs
/// hold realized counts.
struct PassAggregates {
    IntensityArray<double> sent{};    // pulses per intensity
    IntensityArray<double> sifted{};  // sifted detections per intensity
    IntensityArray<double> errors{};  // erroneous sifted detections per intensity

    // Signal-state statistics conditioned on matched bases, for the
    // efficiency-mismatch analysis. Index [basis][bit].
    std::array<double, 2> pulses_bb{};    // matched-basis signal pulses per basis
    std::array<std::array<double, 2>, 2> det{};
    std::array<std::array<double, 2>, 2> err{};

    double duration_s = 0.0;
    double total_pulses = 0.0;

    double sifted_total() const { return sifted[0] + sifted[1] + sifted[2]; }
};

enum class SimMode { Analytic, MonteCarlo };

struct SimulationOptions {
    SimMode mode = SimMode::Analytic;
    uint64_t seed = 0;
    bool has_seed = false;       // Monte Carlo requires an explicit seed
    bool record_events = false;  // materialize DetectionRecords (Monte Carlo only)
    bool per_pulse = false;      // Bernoulli draws per pulse instead of Poisson
                                 // counts per sample; intended for small rates
    double sync_center_ns = 6.0;
    double jitter_sigma_ns = 0.5;
};

struct SimulationResult {
    SiftedRateSeries series;
    PassAggregates aggregates;
    std::vector<DetectionRecord> records;
};

/// Drive the link and error model over a pass. Analytic mode evaluates the
/// rate and error expressions per sample; Monte Carlo mode draws per-sample
/// counts from Poisson distributions with the analytic means. The per-basis
/// detector tallies assume the symmetric receiver (p_channel = 1/4 each);
/// the rate series themselves honor arbitrary channel splits.
SimulationResult simulate_pass(const geometry::PassProfile& profile, const ReceiverConfig& rx,
                               const SourceConfig& src,
                               const IntrinsicErrorSeries& err_series,
                               const SimulationOptions& opts);

/// Keep events whose timestamp folded into the pulse period lies within
/// window/2 of the center.
std::vector<DetectionRecord> temporal_filter(const std::vector<DetectionRecord>& events,
                                             double window_ns, double center_ns,
                                             double period_ns);

struct SyncFit {
    std::vector<double> bin_center_ns;
    std::vector<double> counts;
    double mean_ns = 0.0;
    double sigma_ns = 0.0;
    double amplitude = 0.0;
    double floor = 0.0;
};

/// Fold timestamps into the pulse period, histogram them and fit a Gaussian
/// peak over a constant floor. Throws NumericError when no dominant peak
/// exists (peak-to-floor ratio below 2).
SyncFit sync_histogram(const std::vector<DetectionRecord>& events, double bin_ns,
                       double period_ns);

}  // namespace qpass::protocol
