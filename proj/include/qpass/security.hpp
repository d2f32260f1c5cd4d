#pragma once

#include <string>
#include <vector>

#include "qpass/channel.hpp"
#include "qpass/config.hpp"

namespace qpass::security {

/// Binary entropy in bits, with h(0) = h(1) = 0. Throws std::domain_error
/// outside [0, 1].
double binary_entropy(double p);

/// Observables entering the four-detector efficiency-mismatch key rate.
/// Click probabilities are conditioned on Alice and Bob having chosen the
/// same basis; bit 0 denotes the stronger detector of each pair.
struct MismatchParams {
    double p_z = 0.5;        // basis choice probabilities
    double p_x = 0.5;
    double p_det_z = 0.0;    // detection probability per basis
    double p_det_x = 0.0;
    double q_z_bit0 = 0.0;   // per-detector click probabilities
    double q_z_bit1 = 0.0;
    double q_x_bit0 = 0.0;
    double q_x_bit1 = 0.0;
    double eta_z = 1.0;      // efficiency-ratio lower bounds, eta_b1/eta_b0
    double eta_x = 1.0;
    double qber_z = 0.0;     // QBERs feeding the error-correction term
    double qber_x = 0.0;
    double q_err_z = 0.0;    // weighted mean erroneous detection rates:
    double q_err_x = 0.0;    //   erroneous zeroes + erroneous ones / eta_b
    double f_ec = 1.44;
    double t_xz = 1.0;       // reception-probability ratio; diagnostic only

    void validate() const;   // throws InvalidParams
};

struct DeltaTerms {
    double zz = 0.0;  // (q_z0 - q_z1) / p_det_z
    double zx = 0.0;  // sqrt(eta_x) (t_z - 2 q_err_x) / p_det_z
    double xx = 0.0;
    double xz = 0.0;  // sqrt(eta_z) (t_x - 2 q_err_z) / p_det_x
    double t_z = 0.0;  // transparency q_b0 + q_b1 / eta_b
    double t_x = 0.0;
};

/// The four delta ratios, computed verbatim. Throws InvalidParams when a
/// detection probability is zero.
DeltaTerms delta_terms(const MismatchParams& m);

struct BasisBracket {
    double h_direct = 0.0;   // h((1 - delta_bb)/2)
    double h_cross = 0.0;    // h((1 - sqrt(delta_bb^2 + delta_bx^2))/2)
    double ec_term = 0.0;    // f_ec h(Q_b)
    double value = 0.0;      // h_direct - h_cross - ec_term
    bool radicand_clamped = false;
};

struct MismatchRate {
    DeltaTerms deltas;
    BasisBracket z;
    BasisBracket x;
    double key_per_pulse = 0.0;  // clamped below at zero
};

/// Secret-key rate per emitted pulse under detector-efficiency mismatch:
///   K = sum_b p_b^2 p_det_b [ h((1-d_bb)/2) - h((1-sqrt(d_bx^2+d_bb^2))/2)
///                             - f_ec h(Q_b) ].
/// The radicand is clamped so the entropy argument stays in [0, 1/2]; any
/// delta magnitude beyond 1 + 1e-9 signals inconsistent inputs.
MismatchRate mismatch_key_rate(const MismatchParams& m);

struct ChernoffInterval {
    double lower = 0.0;
    double upper = 0.0;
};

/// Interval for the mean of a Poissonized count from one observation: each
/// side solves the multiplicative Chernoff tail exponent equal to
/// ln(1/failure_prob) by bisection (relative tolerance 1e-9).
ChernoffInterval chernoff_interval(double observed, double failure_prob);

struct IntensityStats {
    double sent = 0.0;
    double sifted = 0.0;
    double errors = 0.0;
};

struct DecoyStats {
    IntensityArray<IntensityStats> per_intensity{};
    double failure_prob = 1e-9;

    const IntensityStats& of(Intensity i) const { return at(per_intensity, i); }
    IntensityStats& of(Intensity i) { return at(per_intensity, i); }
    void validate() const;  // throws InvalidParams
};

struct DecoyBounds {
    double y1_lower = 0.0;   // single-photon yield, sifted domain
    double e1_upper = 0.5;   // single-photon error rate
    bool feasible = false;
    std::vector<std::string> diagnostics;
};

/// Vacuum + weak-decoy bounds on the single-photon yield and error rate,
/// evaluated on Chernoff-corrected gain corners.
DecoyBounds decoy_bounds(const DecoyStats& stats, const SourceConfig& src,
                         bool apply_fluctuations = true);

/// Single-photon sifted count implied by the bound.
double decoy_single_photon_count(const DecoyStats& stats, const SourceConfig& src,
                                 const DecoyBounds& bounds);

/// Secret-key length n1 (1 - h(e1)) - f_ec n_sift h(Q), clamped at zero.
double decoy_key_length(const DecoyStats& stats, const DecoyBounds& bounds,
                        double qber_signal, double f_ec, const SourceConfig& src);

}  // namespace qpass::security
