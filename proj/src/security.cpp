#include "qpass/security.hpp"

#include <algorithm>
#include <cmath>

#include "qpass/errors.hpp"

namespace qpass::security {

double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binary_entropy: p must be in [0,1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

void MismatchParams::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (double v : {p_z, p_x, p_det_z, p_det_x, q_z_bit0, q_z_bit1, q_x_bit0, q_x_bit1,
                     qber_z, qber_x, q_err_z, q_err_x}) {
        if (!in01(v)) throw InvalidParams("mismatch params: probabilities must be in [0,1]");
    }
    if (!(eta_z > 0.0 && eta_z <= 1.0) || !(eta_x > 0.0 && eta_x <= 1.0)) {
        throw InvalidParams("mismatch params: eta ratios must be in (0,1]");
    }
    if (!(f_ec >= 1.0)) throw InvalidParams("mismatch params: f_ec must be >= 1");
    if (std::fabs(p_det_z - (q_z_bit0 + q_z_bit1)) > 1e-12 ||
        std::fabs(p_det_x - (q_x_bit0 + q_x_bit1)) > 1e-12) {
        throw InvalidParams("mismatch params: p_det_b must equal q_b0 + q_b1");
    }
}

DeltaTerms delta_terms(const MismatchParams& m) {
    if (!(m.p_det_z > 0.0) || !(m.p_det_x > 0.0)) {
        throw InvalidParams("delta_terms: detection probabilities must be positive");
    }
    DeltaTerms d;
    d.t_z = m.q_z_bit0 + m.q_z_bit1 / m.eta_z;
    d.t_x = m.q_x_bit0 + m.q_x_bit1 / m.eta_x;
    d.zz = (m.q_z_bit0 - m.q_z_bit1) / m.p_det_z;
    d.xx = (m.q_x_bit0 - m.q_x_bit1) / m.p_det_x;
    d.zx = std::sqrt(m.eta_x) * (d.t_z - 2.0 * m.q_err_x) / m.p_det_z;
    d.xz = std::sqrt(m.eta_z) * (d.t_x - 2.0 * m.q_err_z) / m.p_det_x;
    return d;
}

namespace {

constexpr double kDeltaTol = 1e-9;

BasisBracket basis_bracket(double d_bb, double d_bx, double qber, double f_ec) {
    BasisBracket b;
    b.h_direct = binary_entropy((1.0 - d_bb) / 2.0);
    double radicand = d_bb * d_bb + d_bx * d_bx;
    double root = std::sqrt(radicand);
    if (root > 1.0) {
        root = 1.0;
        b.radicand_clamped = true;
    }
    b.h_cross = binary_entropy((1.0 - root) / 2.0);
    b.ec_term = f_ec * binary_entropy(std::min(qber, 0.5));
    b.value = b.h_direct - b.h_cross - b.ec_term;
    return b;
}

}  // namespace

MismatchRate mismatch_key_rate(const MismatchParams& m) {
    m.validate();
    MismatchRate r;
    r.deltas = delta_terms(m);
    for (double d : {r.deltas.zz, r.deltas.zx, r.deltas.xx, r.deltas.xz}) {
        if (std::fabs(d) > 1.0 + kDeltaTol) {
            throw InvalidParams("mismatch_key_rate: |delta| = " + std::to_string(std::fabs(d)) +
                                " exceeds 1; inputs are inconsistent");
        }
    }
    r.z = basis_bracket(r.deltas.zz, r.deltas.zx, m.qber_z, m.f_ec);
    r.x = basis_bracket(r.deltas.xx, r.deltas.xz, m.qber_x, m.f_ec);
    double k = m.p_z * m.p_z * m.p_det_z * r.z.value + m.p_x * m.p_x * m.p_det_x * r.x.value;
    r.key_per_pulse = std::max(0.0, k);
    return r;
}

// ---------------------------------------------------------------------------
// Chernoff interval

namespace {

/// Poisson large-deviation exponent D(x, m) = m - x + x ln(x/m); the tail
/// probability of observing <= x (m > x) or >= x (m < x) is at most e^-D.
double poisson_divergence(double x, double m) {
    if (x == 0.0) return m;
    return m - x + x * std::log(x / m);
}

}  // namespace

ChernoffInterval chernoff_interval(double observed, double failure_prob) {
    if (!(observed >= 0.0)) throw InvalidParams("chernoff_interval: observed must be >= 0");
    if (!(failure_prob > 0.0 && failure_prob < 1.0)) {
        throw InvalidParams("chernoff_interval: failure_prob must be in (0,1)");
    }
    const double target = std::log(1.0 / failure_prob);
    const double x = observed;
    ChernoffInterval out;

    // Upper limit: D(x, m) rises monotonically for m > x.
    double hi = x + 2.0 * std::sqrt(std::max(x, 1.0) * target) + 2.0 * target + 10.0;
    while (poisson_divergence(x, hi) < target) hi *= 2.0;
    double lo = x;
    for (int i = 0; i < 400; ++i) {
        double mid = 0.5 * (lo + hi);
        if (poisson_divergence(x, mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-12 * std::max(1.0, hi)) break;
    }
    out.upper = 0.5 * (lo + hi);

    // Lower limit: D(x, m) rises as m falls below x; 0 when observed is 0.
    if (x == 0.0) {
        out.lower = 0.0;
        return out;
    }
    double llo = x * std::exp(-(target + x) / x);  // D(x, llo) >= target
    double lhi = x;
    for (int i = 0; i < 400; ++i) {
        double mid = 0.5 * (llo + lhi);
        if (poisson_divergence(x, mid) < target) {
            lhi = mid;
        } else {
            llo = mid;
        }
        if (lhi - llo <= 1e-12 * std::max(1.0, lhi)) break;
    }
    out.lower = 0.5 * (llo + lhi);
    return out;
}

// ---------------------------------------------------------------------------
// Decoy bounds

void DecoyStats::validate() const {
    if (!(failure_prob > 0.0 && failure_prob < 1.0)) {
        throw InvalidParams("decoy stats: failure_prob must be in (0,1)");
    }
    for (Intensity i : kIntensities) {
        const auto& s = of(i);
        if (!(s.sent >= 0.0) || !(s.sifted >= 0.0) || !(s.errors >= 0.0)) {
            throw InvalidParams("decoy stats: counts must be >= 0");
        }
        if (s.errors > s.sifted + 1e-9 || s.sifted > s.sent + 1e-9) {
            throw InvalidParams("decoy stats: need errors <= sifted <= sent");
        }
    }
}

DecoyBounds decoy_bounds(const DecoyStats& stats, const SourceConfig& src,
                         bool apply_fluctuations) {
    stats.validate();
    const double mu = src.mu;
    const double nu = src.nu;
    if (!(nu < mu) || !(nu > 0.0)) throw InvalidParams("decoy_bounds: need 0 < nu < mu");
    for (Intensity i : kIntensities) {
        if (!(stats.of(i).sent > 0.0)) {
            throw InvalidParams("decoy_bounds: statistics incomplete for " +
                                std::string(name_of(i)));
        }
    }

    DecoyBounds out;
    auto corner = [&](double count) -> ChernoffInterval {
        if (!apply_fluctuations) return {count, count};
        return chernoff_interval(count, stats.failure_prob);
    };

    const auto& sig = stats.of(Intensity::Signal);
    const auto& dec = stats.of(Intensity::Decoy);
    const auto& vac = stats.of(Intensity::Vacuum);

    auto g_mu = corner(sig.sifted);
    auto g_nu = corner(dec.sifted);
    auto g_0 = corner(vac.sifted);
    auto eg_nu = corner(dec.errors);

    const double gain_mu_u = g_mu.upper / sig.sent;
    const double gain_nu_l = g_nu.lower / dec.sent;
    const double gain0_u = g_0.upper / vac.sent;
    const double gain0_l = g_0.lower / vac.sent;
    const double errgain_nu_u = eg_nu.upper / dec.sent;

    const double scale = mu / (mu * nu - nu * nu);
    double y1 = scale * (gain_nu_l * std::exp(nu) - gain_mu_u * std::exp(mu) * nu * nu / (mu * mu) -
                         (mu * mu - nu * nu) / (mu * mu) * gain0_u);
    if (y1 <= 0.0) {
        out.y1_lower = 0.0;
        out.e1_upper = 0.5;
        out.feasible = false;
        out.diagnostics.push_back("single-photon yield bound is not positive; reported as 0");
        return out;
    }
    out.y1_lower = y1;
    out.feasible = true;

    double e1_num = errgain_nu_u * std::exp(nu) - 0.5 * gain0_l;
    double e1 = e1_num / (nu * y1);
    if (e1 < 0.0) e1 = 0.0;
    if (e1 > 0.5) {
        e1 = 0.5;
        out.diagnostics.push_back("single-photon error bound clamped at 1/2");
    }
    out.e1_upper = e1;
    return out;
}

double decoy_single_photon_count(const DecoyStats& stats, const SourceConfig& src,
                                 const DecoyBounds& bounds) {
    const double p1 = src.mu * std::exp(-src.mu);
    return stats.of(Intensity::Signal).sent * p1 * bounds.y1_lower;
}

double decoy_key_length(const DecoyStats& stats, const DecoyBounds& bounds,
                        double qber_signal, double f_ec, const SourceConfig& src) {
    if (!(qber_signal >= 0.0 && qber_signal <= 0.5)) {
        throw InvalidParams("decoy_key_length: qber must be in [0, 0.5]");
    }
    double n1 = decoy_single_photon_count(stats, src, bounds);
    double key = n1 * (1.0 - binary_entropy(bounds.e1_upper)) -
                 f_ec * stats.of(Intensity::Signal).sifted * binary_entropy(qber_signal);
    return std::max(0.0, std::floor(key));
}

}  // namespace qpass::security
