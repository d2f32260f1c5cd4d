#pragma once

#include <string>
#include <vector>

#include "qpass/protocol.hpp"
#include "qpass/security.hpp"

namespace qpass::report {

/// Result of the efficiency-mismatch pipeline on pass-aggregate statistics.
struct MismatchAnalysis {
    security::MismatchParams params;    // nominal parameters (consistency-projected)
    security::DeltaTerms deltas_raw;    // deltas before any projection
    security::MismatchRate rate;        // per-pulse rate on the nominal parameters
    double eve_term_z = 0.0;            // worst-corner h_direct - h_cross per basis
    double eve_term_x = 0.0;
    double qber_z = 0.0;                // aggregate per-basis QBERs
    double qber_x = 0.0;
    double leak_bits = 0.0;
    double key_bits = 0.0;
    int projected_deltas = 0;           // cross-deltas pulled back to magnitude 1
    std::vector<std::string> diagnostics;
};

struct KeyReport {
    double eta_z = 0.6;
    double eta_x = 0.51;
    double f_ec = 1.44;
    double epsilon = 1e-9;

    double total_pulses = 0.0;
    double duration_s = 0.0;
    IntensityArray<double> sent{};
    IntensityArray<double> sifted{};
    IntensityArray<double> errors{};
    double sifted_total_bits = 0.0;
    double qber_signal = 0.0;  // aggregate signal-state error fraction

    security::DecoyStats decoy_stats{};
    security::DecoyBounds decoy;
    double single_photon_count = 0.0;
    double decoy_key_bits = 0.0;

    MismatchAnalysis mismatch;
};

security::DecoyStats decoy_stats_from(const protocol::PassAggregates& agg, double epsilon);

std::string aggregates_json(const protocol::PassAggregates& agg);
protocol::PassAggregates aggregates_from_json(const std::string& text,
                                              const std::string& origin = "<string>");

/// Run both security pipelines over pass aggregates.
///
/// Decoy pipeline: vacuum + weak-decoy single-photon bounds with Chernoff
/// corners, then n1 (1 - h(e1)) - f_ec n_sift h(Q).
///
/// Mismatch pipeline: the per-basis mismatch brackets
/// h((1-d_bb)/2) - h((1-sqrt(d_bb^2+d_bx^2))/2) evaluated on worst-case
/// Chernoff corners of the matched-basis click statistics, applied to the
/// decoy-certified single-photon count. The weaker basis's bracket is used
/// for both halves (they are merged into one key before privacy
/// amplification), the single-photon phase entropy h(e1) is discounted on
/// top, and the full error-correction leakage is subtracted:
///   key = n1 [ min_b (h_direct_b - h_cross_b) - h(e1) ]
///         - f_ec sum_b n_b h(Q_b).
KeyReport build_key_report(const protocol::PassAggregates& agg, const SourceConfig& src,
                           double eta_z, double eta_x, double f_ec, double epsilon);

std::string key_report_json(const KeyReport& r, const std::string& manifest_json = "",
                            const std::string& aggregates_json_text = "");

}  // namespace qpass::report
