#include "qpass/report.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "qpass/errors.hpp"

namespace qpass::report {

using nlohmann::json;
using security::binary_entropy;

security::DecoyStats decoy_stats_from(const protocol::PassAggregates& agg, double epsilon) {
    security::DecoyStats stats;
    stats.failure_prob = epsilon;
    for (Intensity i : kIntensities) {
        stats.of(i).sent = at(agg.sent, i);
        stats.of(i).sifted = at(agg.sifted, i);
        stats.of(i).errors = at(agg.errors, i);
    }
    return stats;
}

namespace {

struct BasisCounts {
    double pulses = 0.0;
    double det0 = 0.0, det1 = 0.0;
    double err0 = 0.0, err1 = 0.0;
    bool swapped = false;  // bit roles exchanged so bit 0 is the stronger detector
};

BasisCounts basis_counts(const protocol::PassAggregates& agg, size_t b) {
    BasisCounts c;
    c.pulses = agg.pulses_bb[b];
    c.det0 = agg.det[b][0];
    c.det1 = agg.det[b][1];
    c.err0 = agg.err[b][0];
    c.err1 = agg.err[b][1];
    if (c.det1 > c.det0) {
        std::swap(c.det0, c.det1);
        std::swap(c.err0, c.err1);
        c.swapped = true;
    }
    return c;
}

struct BasisView {
    double p0 = 0.0, p1 = 0.0, p_det = 0.0;
    double t = 0.0;
    double q_err = 0.0;
    double qber = 0.0;
};

BasisView basis_view(const BasisCounts& c, double det0, double det1, double err0, double err1,
                     double eta) {
    BasisView v;
    v.p0 = det0 / c.pulses;
    v.p1 = det1 / c.pulses;
    v.p_det = v.p0 + v.p1;
    v.t = v.p0 + v.p1 / eta;
    v.q_err = (err0 + err1 / eta) / c.pulses;
    double det = det0 + det1;
    v.qber = det > 0.0 ? std::min((err0 + err1) / det, 0.5) : 0.5;
    return v;
}

struct EveTerms {
    double eve = 0.0;        // h((1-d_bb)/2) - h((1-sqrt(d_bb^2+d_bx^2))/2)
    double qber = 0.0;
    bool projected = false;  // cross-delta magnitude pulled back to 1
    bool clamped = false;    // radicand clamped
};

EveTerms eve_terms(const BasisView& host, const BasisView& other, double eta_other) {
    EveTerms out;
    double d_bb = (host.p0 - host.p1) / host.p_det;
    double d_bx = std::sqrt(eta_other) * (host.t - 2.0 * other.q_err) / host.p_det;
    if (std::fabs(d_bx) > 1.0) {
        d_bx = std::copysign(1.0, d_bx);
        out.projected = true;
    }
    double root = std::sqrt(d_bb * d_bb + d_bx * d_bx);
    if (root > 1.0) {
        root = 1.0;
        out.clamped = true;
    }
    out.eve = binary_entropy((1.0 - d_bb) / 2.0) - binary_entropy((1.0 - root) / 2.0);
    out.qber = host.qber;
    return out;
}

}  // namespace

KeyReport build_key_report(const protocol::PassAggregates& agg, const SourceConfig& src,
                           double eta_z, double eta_x, double f_ec, double epsilon) {
    if (!(eta_z > 0.0 && eta_z <= 1.0 && eta_x > 0.0 && eta_x <= 1.0)) {
        throw InvalidParams("eta ratios must be in (0,1]");
    }
    KeyReport r;
    r.eta_z = eta_z;
    r.eta_x = eta_x;
    r.f_ec = f_ec;
    r.epsilon = epsilon;
    r.total_pulses = agg.total_pulses;
    r.duration_s = agg.duration_s;
    r.sent = agg.sent;
    r.sifted = agg.sifted;
    r.errors = agg.errors;
    r.sifted_total_bits = agg.sifted_total();
    double sig_sift = at(agg.sifted, Intensity::Signal);
    r.qber_signal = sig_sift > 0.0 ? at(agg.errors, Intensity::Signal) / sig_sift : 0.0;

    // Decoy pipeline.
    r.decoy_stats = decoy_stats_from(agg, epsilon);
    r.decoy = security::decoy_bounds(r.decoy_stats, src);
    r.single_photon_count = security::decoy_single_photon_count(r.decoy_stats, src, r.decoy);
    r.decoy_key_bits =
        security::decoy_key_length(r.decoy_stats, r.decoy, r.qber_signal, f_ec, src);

    // Mismatch pipeline.
    auto& mm = r.mismatch;
    BasisCounts cz = basis_counts(agg, 0);
    BasisCounts cx = basis_counts(agg, 1);
    if (cz.swapped) mm.diagnostics.push_back("Z basis: bit roles swapped so bit 0 is stronger");
    if (cx.swapped) mm.diagnostics.push_back("X basis: bit roles swapped so bit 0 is stronger");
    if (!(cz.pulses > 0.0 && cx.pulses > 0.0) || cz.det0 + cz.det1 <= 0.0 ||
        cx.det0 + cx.det1 <= 0.0) {
        mm.diagnostics.push_back("no matched-basis detections; mismatch key is 0");
        mm.key_bits = 0.0;
        return r;
    }

    auto corner = [&](double count) {
        return security::chernoff_interval(count, epsilon);
    };
    security::ChernoffInterval iz0 = corner(cz.det0), iz1 = corner(cz.det1);
    security::ChernoffInterval ez0 = corner(cz.err0), ez1 = corner(cz.err1);
    security::ChernoffInterval ix0 = corner(cx.det0), ix1 = corner(cx.det1);
    security::ChernoffInterval ex0 = corner(cx.err0), ex1 = corner(cx.err1);

    const double n_det_z = cz.det0 + cz.det1;
    const double n_det_x = cx.det0 + cx.det1;
    const double n1 = r.single_photon_count;
    // Only the single-photon fraction is private, and its phase-error
    // entropy is discounted on top of the mismatch cross term; stacking both
    // penalties keeps the bound valid whichever analysis is tighter.
    const double h_e1 = binary_entropy(r.decoy.e1_upper);

    // Error-correction leakage is what the reconciliation step actually
    // discloses, so it uses the measured error fractions, not worst-case
    // corners (matching the decoy pipeline's accounting).
    BasisView vz_nom = basis_view(cz, cz.det0, cz.det1, cz.err0, cz.err1, eta_z);
    BasisView vx_nom = basis_view(cx, cx.det0, cx.det1, cx.err0, cx.err1, eta_x);
    mm.qber_z = vz_nom.qber;
    mm.qber_x = vx_nom.qber;
    mm.leak_bits = f_ec * (n_det_z * binary_entropy(vz_nom.qber) +
                           n_det_x * binary_entropy(vx_nom.qber));

    double worst_eve = 0.0;
    EveTerms worst_z, worst_x;
    bool first = true;
    for (unsigned mask = 0; mask < 256; ++mask) {
        auto pick = [&](unsigned bit, const security::ChernoffInterval& iv) {
            return (mask >> bit) & 1u ? iv.upper : iv.lower;
        };
        BasisView vz = basis_view(cz, pick(0, iz0), pick(1, iz1), pick(2, ez0), pick(3, ez1),
                                  eta_z);
        BasisView vx = basis_view(cx, pick(4, ix0), pick(5, ix1), pick(6, ex0), pick(7, ex1),
                                  eta_x);
        if (!(vz.p_det > 0.0 && vx.p_det > 0.0)) continue;
        EveTerms tz = eve_terms(vz, vx, eta_x);
        EveTerms tx = eve_terms(vx, vz, eta_z);
        double eve = std::min(tz.eve, tx.eve);
        if (first || eve < worst_eve) {
            worst_eve = eve;
            worst_z = tz;
            worst_x = tx;
            first = false;
        }
    }
    double worst_key = n1 * (worst_eve - h_e1) - mm.leak_bits;

    mm.eve_term_z = worst_z.eve;
    mm.eve_term_x = worst_x.eve;
    mm.projected_deltas = (worst_z.projected ? 1 : 0) + (worst_x.projected ? 1 : 0);
    if (mm.projected_deltas > 0) {
        mm.diagnostics.push_back(
            "cross-delta exceeded magnitude 1 on aggregate statistics and was projected back");
    }
    mm.key_bits = std::max(0.0, std::floor(worst_key));

    // Nominal parameters for the report, consistency-projected so the
    // per-pulse rate of the verbatim formula can be evaluated and audited.
    BasisView vz = basis_view(cz, cz.det0, cz.det1, cz.err0, cz.err1, eta_z);
    BasisView vx = basis_view(cx, cx.det0, cx.det1, cx.err0, cx.err1, eta_x);
    security::MismatchParams p;
    p.p_det_z = vz.p_det;
    p.p_det_x = vx.p_det;
    p.q_z_bit0 = vz.p0;
    p.q_z_bit1 = vz.p1;
    p.q_x_bit0 = vx.p0;
    p.q_x_bit1 = vx.p1;
    p.eta_z = eta_z;
    p.eta_x = eta_x;
    p.qber_z = vz.qber;
    p.qber_x = vx.qber;
    p.q_err_z = vz.q_err;
    p.q_err_x = vx.q_err;
    p.f_ec = f_ec;
    p.t_xz = vx.p_det / vz.p_det;
    mm.deltas_raw = security::delta_terms(p);
    // Raise the crossing error rate to the smallest value consistent with
    // |delta| = 1 when the raw statistics land outside the model.
    if (std::fabs(mm.deltas_raw.xz) > 1.0) {
        p.q_err_z = 0.5 * (mm.deltas_raw.t_x - vx.p_det / std::sqrt(eta_z));
        mm.diagnostics.push_back("q_err_z raised to the |delta_xz| = 1 consistency floor");
    }
    if (std::fabs(mm.deltas_raw.zx) > 1.0) {
        p.q_err_x = 0.5 * (mm.deltas_raw.t_z - vz.p_det / std::sqrt(eta_x));
        mm.diagnostics.push_back("q_err_x raised to the |delta_zx| = 1 consistency floor");
    }
    mm.params = p;
    mm.rate = security::mismatch_key_rate(p);
    return r;
}

namespace {

json intensity_json(const IntensityArray<double>& a) {
    return json{{"signal", a[0]}, {"decoy", a[1]}, {"vacuum", a[2]}};
}

IntensityArray<double> intensity_from_json(const json& j) {
    return {j.at("signal").get<double>(), j.at("decoy").get<double>(),
            j.at("vacuum").get<double>()};
}

}  // namespace

std::string aggregates_json(const protocol::PassAggregates& agg) {
    json j;
    j["duration_s"] = agg.duration_s;
    j["total_pulses"] = agg.total_pulses;
    j["sent"] = intensity_json(agg.sent);
    j["sifted"] = intensity_json(agg.sifted);
    j["errors"] = intensity_json(agg.errors);
    j["pulses_bb"] = {agg.pulses_bb[0], agg.pulses_bb[1]};
    j["det"] = {{agg.det[0][0], agg.det[0][1]}, {agg.det[1][0], agg.det[1][1]}};
    j["err"] = {{agg.err[0][0], agg.err[0][1]}, {agg.err[1][0], agg.err[1][1]}};
    return j.dump(2) + "\n";
}

protocol::PassAggregates aggregates_from_json(const std::string& text,
                                              const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
        if (j.contains("aggregates")) j = j.at("aggregates");
        protocol::PassAggregates agg;
        agg.duration_s = j.at("duration_s").get<double>();
        agg.total_pulses = j.at("total_pulses").get<double>();
        agg.sent = intensity_from_json(j.at("sent"));
        agg.sifted = intensity_from_json(j.at("sifted"));
        agg.errors = intensity_from_json(j.at("errors"));
        for (size_t b = 0; b < 2; ++b) {
            agg.pulses_bb[b] = j.at("pulses_bb").at(b).get<double>();
            for (size_t i = 0; i < 2; ++i) {
                agg.det[b][i] = j.at("det").at(b).at(i).get<double>();
                agg.err[b][i] = j.at("err").at(b).at(i).get<double>();
            }
        }
        return agg;
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

std::string key_report_json(const KeyReport& r, const std::string& manifest_json,
                            const std::string& aggregates_json_text) {
    json j;
    if (!manifest_json.empty()) {
        j["manifest"] = json::parse(manifest_json);
    }
    if (!aggregates_json_text.empty()) {
        j["aggregates"] = json::parse(aggregates_json_text);
    }
    j["inputs"] = {{"eta_z", r.eta_z},
                   {"eta_x", r.eta_x},
                   {"f_ec", r.f_ec},
                   {"epsilon", r.epsilon}};
    j["pass"] = {{"total_pulses", r.total_pulses},
                 {"duration_s", r.duration_s},
                 {"sent", intensity_json(r.sent)},
                 {"sifted", intensity_json(r.sifted)},
                 {"errors", intensity_json(r.errors)},
                 {"sifted_total_bits", r.sifted_total_bits},
                 {"qber_signal", r.qber_signal}};
    j["decoy"] = {{"y1_lower", r.decoy.y1_lower},
                  {"e1_upper", r.decoy.e1_upper},
                  {"feasible", r.decoy.feasible},
                  {"single_photon_count", r.single_photon_count},
                  {"key_bits", r.decoy_key_bits},
                  {"diagnostics", r.decoy.diagnostics}};
    const auto& m = r.mismatch;
    j["mismatch"] = {
        {"key_bits", m.key_bits},
        {"leak_bits", m.leak_bits},
        {"eve_term_z", m.eve_term_z},
        {"eve_term_x", m.eve_term_x},
        {"qber_z", m.qber_z},
        {"qber_x", m.qber_x},
        {"projected_deltas", m.projected_deltas},
        {"diagnostics", m.diagnostics},
        {"params",
         {{"p_det_z", m.params.p_det_z},
          {"p_det_x", m.params.p_det_x},
          {"q_z_bit0", m.params.q_z_bit0},
          {"q_z_bit1", m.params.q_z_bit1},
          {"q_x_bit0", m.params.q_x_bit0},
          {"q_x_bit1", m.params.q_x_bit1},
          {"q_err_z", m.params.q_err_z},
          {"q_err_x", m.params.q_err_x},
          {"t_xz", m.params.t_xz}}},
        {"deltas_raw",
         {{"zz", m.deltas_raw.zz},
          {"zx", m.deltas_raw.zx},
          {"xx", m.deltas_raw.xx},
          {"xz", m.deltas_raw.xz}}},
        {"eq_rate",
         {{"key_per_pulse", m.rate.key_per_pulse},
          {"bracket_z", m.rate.z.value},
          {"bracket_x", m.rate.x.value},
          {"h_direct_z", m.rate.z.h_direct},
          {"h_cross_z", m.rate.z.h_cross},
          {"h_direct_x", m.rate.x.h_direct},
          {"h_cross_x", m.rate.x.h_cross},
          {"radicand_clamped",
           m.rate.z.radicand_clamped || m.rate.x.radicand_clamped}}},
    };
    return j.dump(2) + "\n";
}

}  // namespace qpass::report
