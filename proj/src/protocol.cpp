#include "qpass/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "qpass/csv.hpp"
#include "qpass/errors.hpp"
#include "qpass/fitting.hpp"
#include "qpass/rng.hpp"

namespace qpass::protocol {

double background_yield(double noise_total, double pulse_rate_hz, double suppression) {
    if (!(noise_total >= 0.0)) throw NumericError("noise_total must be >= 0");
    if (!(pulse_rate_hz > 0.0)) throw NumericError("pulse_rate_hz must be > 0");
    if (!(suppression >= 1.0)) throw NumericError("suppression must be >= 1");
    return noise_total / (suppression * pulse_rate_hz);
}

double sifted_rate(double alpha, double p_alpha, double y0, const ChannelArray<double>& eta,
                   const SourceConfig& src, const ChannelArray<double>& p_channel) {
    if (!(alpha >= 0.0)) throw NumericError("alpha must be >= 0");
    double sum = 0.0;
    for (Channel c : kChannels) {
        sum += at(p_channel, c) * (-std::expm1(-alpha * at(eta, c)));
    }
    return 0.5 * src.pulse_rate_hz * p_alpha * (y0 + sum);
}

double intrinsic_error_upper(double e_rx, double e_tx_mean) {
    if (!(e_rx >= 0.0 && e_rx <= 0.5)) throw NumericError("e_rx must be in [0, 0.5]");
    if (!(e_tx_mean >= 0.0 && e_tx_mean <= 0.5)) {
        throw NumericError("e_tx_mean must be in [0, 0.5]");
    }
    return std::min(e_rx + e_tx_mean, 0.5);
}

double error_count_upper(double alpha, double p_alpha, double y0,
                         const ChannelArray<double>& e_det_upper,
                         const ChannelArray<double>& eta, const SourceConfig& src) {
    if (!(alpha >= 0.0)) throw NumericError("alpha must be >= 0");
    double sum = 0.0;
    for (Channel c : kChannels) {
        sum += 0.25 * at(e_det_upper, c) * (-std::expm1(-alpha * at(eta, c)));
    }
    return 0.5 * src.pulse_rate_hz * p_alpha * (0.5 * y0 + sum);
}

double qber_upper(double n_err, double r_sift) {
    if (r_sift == 0.0) throw NumericError("qber_upper: sifted rate is zero");
    return n_err / r_sift;
}

// ---------------------------------------------------------------------------
// IntrinsicErrorSeries

ChannelArray<double> IntrinsicErrorSeries::at_time(double time) const {
    if (t.empty()) throw ConfigError("intrinsic error series is empty");
    // nearest sample; series are slowly varying
    auto it = std::lower_bound(t.begin(), t.end(), time);
    size_t hi = static_cast<size_t>(it - t.begin());
    if (hi == 0) return e_rx.front();
    if (hi >= t.size()) return e_rx.back();
    return (time - t[hi - 1] <= t[hi] - time) ? e_rx[hi - 1] : e_rx[hi];
}

void IntrinsicErrorSeries::validate() const {
    if (t.size() != e_rx.size()) throw ConfigError("intrinsic error series: size mismatch");
    for (size_t i = 0; i < t.size(); ++i) {
        if (i > 0 && !(t[i] > t[i - 1])) {
            throw ConfigError("intrinsic error series: t must be strictly increasing");
        }
        for (double e : e_rx[i]) {
            if (!(e >= 0.0 && e <= 0.5)) {
                throw ConfigError("intrinsic error series: values must be in [0, 0.5]");
            }
        }
    }
}

IntrinsicErrorSeries IntrinsicErrorSeries::constant(double e, double t0, double t1) {
    IntrinsicErrorSeries s;
    s.t.push_back(t0);
    s.e_rx.push_back({e, e, e, e});
    if (t1 > t0) {
        s.t.push_back(t1);
        s.e_rx.push_back({e, e, e, e});
    }
    s.validate();
    return s;
}

IntrinsicErrorSeries IntrinsicErrorSeries::parse_csv(const std::string& text,
                                                     const std::string& origin) {
    auto table = csv::read_string(text, origin);
    size_t ct = table.column("t_s");
    ChannelArray<size_t> cols{table.column("e_H"), table.column("e_V"), table.column("e_D"),
                              table.column("e_A")};
    IntrinsicErrorSeries s;
    for (const auto& row : table.rows) {
        s.t.push_back(row[ct]);
        ChannelArray<double> e{};
        for (Channel c : kChannels) at(e, c) = row[at(cols, c)];
        s.e_rx.push_back(e);
    }
    try {
        s.validate();
    } catch (const ConfigError& err) {
        throw ConfigError(origin + ": " + err.what());
    }
    return s;
}

IntrinsicErrorSeries IntrinsicErrorSeries::load(const std::filesystem::path& path) {
    auto table = csv::read_file(path);  // syntax check with filename in errors
    (void)table;
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path.string());
}

std::string IntrinsicErrorSeries::csv() const {
    csv::Writer w;
    w.header({"t_s", "e_H", "e_V", "e_D", "e_A"});
    for (size_t i = 0; i < t.size(); ++i) {
        w.row({t[i], e_rx[i][0], e_rx[i][1], e_rx[i][2], e_rx[i][3]});
    }
    return w.text;
}

// ---------------------------------------------------------------------------
// SiftedRateSeries

std::string SiftedRateSeries::csv() const {
    csv::Writer w;
    w.header({"t_s", "rate_signal", "rate_decoy", "rate_vacuum", "qber_u_signal",
              "qber_u_decoy", "qber_u_vacuum", "y0"});
    for (size_t i = 0; i < t.size(); ++i) {
        w.row({t[i], rate[i][0], rate[i][1], rate[i][2], qber_upper[i][0], qber_upper[i][1],
               qber_upper[i][2], y0[i]});
    }
    return w.text;
}

SiftedRateSeries SiftedRateSeries::parse_csv(const std::string& text,
                                             const std::string& origin) {
    auto table = csv::read_string(text, origin);
    size_t ct = table.column("t_s");
    IntensityArray<size_t> cr{table.column("rate_signal"), table.column("rate_decoy"),
                              table.column("rate_vacuum")};
    IntensityArray<size_t> cq{table.column("qber_u_signal"), table.column("qber_u_decoy"),
                              table.column("qber_u_vacuum")};
    size_t cy = table.column("y0");
    SiftedRateSeries s;
    for (const auto& row : table.rows) {
        s.t.push_back(row[ct]);
        s.rate.push_back({row[cr[0]], row[cr[1]], row[cr[2]]});
        s.qber_upper.push_back({row[cq[0]], row[cq[1]], row[cq[2]]});
        s.y0.push_back(row[cy]);
    }
    return s;
}

// ---------------------------------------------------------------------------
// DetectionRecord CSV

std::string records_csv(const std::vector<DetectionRecord>& records) {
    std::string out = "pulse_index,channel,alice_basis,alice_bit,bob_basis,bob_bit,intensity,"
                      "timestamp_ns\n";
    for (const auto& r : records) {
        out += std::to_string(r.pulse_index);
        out += ',';
        out += name_of(r.channel);
        out += ',';
        out += name_of(r.alice_basis);
        out += ',';
        out += static_cast<char>('0' + r.alice_bit);
        out += ',';
        out += name_of(r.bob_basis);
        out += ',';
        out += static_cast<char>('0' + r.bob_bit);
        out += ',';
        out += name_of(r.intensity);
        out += ',';
        out += csv::format_double(r.timestamp_ns);
        out += '\n';
    }
    return out;
}

std::vector<DetectionRecord> parse_records_csv(const std::string& text,
                                               const std::string& origin) {
    std::stringstream ss(text);
    std::string line;
    size_t lineno = 0;
    bool have_header = false;
    std::vector<std::string> header;
    std::vector<DetectionRecord> out;
    auto fail = [&](const std::string& what) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(ss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (!have_header) {
            header = fields;
            const std::vector<std::string> expected{"pulse_index", "channel",   "alice_basis",
                                                    "alice_bit",   "bob_basis", "bob_bit",
                                                    "intensity",   "timestamp_ns"};
            if (header != expected) fail("unexpected detection record header");
            have_header = true;
            continue;
        }
        if (fields.size() != 8) fail("expected 8 fields");
        DetectionRecord r;
        try {
            r.pulse_index = std::stoull(fields[0]);
            r.channel = channel_from_name(fields[1]);
            r.alice_basis = basis_from_name(fields[2]);
            r.alice_bit = static_cast<uint8_t>(std::stoi(fields[3]));
            r.bob_basis = basis_from_name(fields[4]);
            r.bob_bit = static_cast<uint8_t>(std::stoi(fields[5]));
            r.intensity = intensity_from_name(fields[6]);
            r.timestamp_ns = std::stod(fields[7]);
        } catch (const std::exception& e) {
            fail(std::string("bad field: ") + e.what());
        }
        if (r.bob_basis != basis_of(r.channel)) fail("bob_basis inconsistent with channel");
        out.push_back(r);
    }
    if (!have_header) throw ConfigError(origin + ": empty file (no header row)");
    return out;
}

// ---------------------------------------------------------------------------
// simulate_pass

namespace {

struct SampleModel {
    ChannelArray<double> eta{};
    ChannelArray<double> click_prob{};  // per intensity filled separately
    ChannelArray<double> e_det{};
    double eta_mean = 0.0;
    double y0 = 0.0;
};

SampleModel sample_model(const geometry::PassSample& s, const ReceiverConfig& rx,
                         const SourceConfig& src, const IntrinsicErrorSeries& errs) {
    SampleModel m;
    for (Channel c : kChannels) {
        at(m.eta, c) = link::channel_efficiency(s, rx, src, c).value;
    }
    m.eta_mean = (m.eta[0] + m.eta[1] + m.eta[2] + m.eta[3]) / 4.0;
    m.y0 = background_yield(link::noise_rate(m.eta_mean, rx), src.pulse_rate_hz,
                            rx.filter_suppression);
    auto e_rx = errs.at_time(s.t);
    for (Channel c : kChannels) {
        at(m.e_det, c) = intrinsic_error_upper(at(e_rx, c), src.tx_mean_error);
    }
    return m;
}

}  // namespace

SimulationResult simulate_pass(const geometry::PassProfile& profile, const ReceiverConfig& rx,
                               const SourceConfig& src,
                               const IntrinsicErrorSeries& err_series,
                               const SimulationOptions& opts) {
    rx.validate();
    src.validate();
    err_series.validate();
    if (opts.mode == SimMode::MonteCarlo && !opts.has_seed) {
        throw ConfigError("Monte Carlo mode requires an explicit seed");
    }

    SimulationResult result;
    auto& agg = result.aggregates;
    agg.duration_s = profile.empty() ? 0.0 : profile.step_s * static_cast<double>(profile.size());
    const double dt = profile.step_s;
    const double period_ns = 1e9 / src.pulse_rate_hz;
    if (opts.mode == SimMode::MonteCarlo && opts.per_pulse &&
        src.pulse_rate_hz * agg.duration_s > 2e7) {
        throw ConfigError("per-pulse sampling is intended for small pulse rates "
                          "(at most 2e7 pulses per run)");
    }

    for (size_t si = 0; si < profile.size(); ++si) {
        const auto& sample = profile.samples[si];
        SampleModel m = sample_model(sample, rx, src, err_series);

        result.series.t.push_back(sample.t);
        result.series.y0.push_back(m.y0);
        IntensityArray<double> rates{};
        IntensityArray<double> qbers{};
        for (Intensity in : kIntensities) {
            double alpha = src.intensity_value(in);
            double p_alpha = src.intensity_prob(in);
            double r = sifted_rate(alpha, p_alpha, m.y0, m.eta, src, rx.p_channel);
            double e = error_count_upper(alpha, p_alpha, m.y0, m.e_det, m.eta, src);
            at(rates, in) = r;
            at(qbers, in) = r > 0.0 ? qber_upper(e, r) : 0.0;
        }
        result.series.qber_upper.push_back(qbers);

        if (dt <= 0.0) {
            result.series.rate.push_back(rates);
            continue;
        }
        const double pulses = src.pulse_rate_hz * dt;
        agg.total_pulses += pulses;

        if (opts.mode == SimMode::Analytic) {
            result.series.rate.push_back(rates);
            for (Intensity in : kIntensities) {
                double alpha = src.intensity_value(in);
                double n_alpha = pulses * src.intensity_prob(in);
                at(agg.sent, in) += n_alpha;
                for (Channel c : kChannels) {
                    double click = -std::expm1(-alpha * at(m.eta, c));
                    double det = n_alpha * (click / 8.0 + m.y0 / 8.0);
                    double err = n_alpha * (at(m.e_det, c) * click / 8.0 + m.y0 / 16.0);
                    at(agg.sifted, in) += det;
                    at(agg.errors, in) += err;
                    if (in == Intensity::Signal) {
                        auto b = static_cast<size_t>(basis_of(c));
                        agg.det[b][static_cast<size_t>(bit_of(c))] += det;
                        agg.err[b][static_cast<size_t>(bit_of(c))] += err;
                    }
                }
                if (in == Intensity::Signal) {
                    agg.pulses_bb[0] += n_alpha / 4.0;
                    agg.pulses_bb[1] += n_alpha / 4.0;
                }
            }
            continue;
        }

        // Monte Carlo: counts per (channel, intensity) cell.
        IntensityArray<double> sample_sifted{};
        const auto pulse_count = static_cast<uint64_t>(std::llround(pulses));
        const uint64_t pulse_lo = static_cast<uint64_t>(si) * pulse_count;

        if (opts.per_pulse) {
            // Bernoulli draws pulse by pulse with exact per-state routing;
            // double clicks resolve inline to one record with a random bit.
            auto rng = CounterRng::stream(opts.seed, si, 0xBE7, 0);
            for (uint64_t k = 0; k < pulse_count; ++k) {
                double u = rng.u01();
                Intensity in = u < src.p_s
                                   ? Intensity::Signal
                                   : (u < src.p_s + src.p_d ? Intensity::Decoy
                                                            : Intensity::Vacuum);
                double alpha = src.intensity_value(in);
                at(agg.sent, in) += 1.0;
                auto state = static_cast<uint32_t>(rng.below(4));
                Basis ab = state < 2 ? Basis::Z : Basis::X;
                auto abit = static_cast<uint8_t>(state & 1u);
                Channel sent_ch = channel_of(ab, abit);
                if (in == Intensity::Signal) {
                    agg.pulses_bb[static_cast<size_t>(ab)] += 0.5;
                }

                struct Hit {
                    Channel c;
                    bool is_signal;
                };
                Hit hits[8];
                int nhits = 0;
                for (Channel c : kChannels) {
                    double route;
                    if (c == sent_ch) {
                        route = 0.5 * (1.0 - at(m.e_det, c));
                    } else if (basis_of(c) == ab) {
                        route = 0.5 * at(m.e_det, c);
                    } else {
                        route = 0.25;
                    }
                    double p_sig = route * (-std::expm1(-alpha * at(m.eta, c)));
                    if (rng.u01() < p_sig) hits[nhits++] = {c, true};
                    if (rng.u01() < m.y0 / 4.0) hits[nhits++] = {c, false};
                }
                if (nhits == 0) continue;
                int keep = nhits == 1 ? 0 : static_cast<int>(rng.below(nhits));
                Channel c = hits[keep].c;
                auto bob_bit = static_cast<uint8_t>(bit_of(c));
                if (nhits > 1) {
                    bob_bit = static_cast<uint8_t>(rng.below(2));
                    c = channel_of(basis_of(c), bob_bit);
                }

                bool matched = ab == basis_of(c);
                if (matched) {
                    at(agg.sifted, in) += 1.0;
                    at(sample_sifted, in) += 1.0;
                    bool error = abit != bob_bit;
                    if (error) at(agg.errors, in) += 1.0;
                    if (in == Intensity::Signal) {
                        auto b = static_cast<size_t>(ab);
                        agg.det[b][bob_bit] += 1.0;
                        if (error) agg.err[b][bob_bit] += 1.0;
                    }
                }
                if (opts.record_events) {
                    DetectionRecord r;
                    r.pulse_index = pulse_lo + k;
                    r.channel = c;
                    r.alice_basis = ab;
                    r.alice_bit = abit;
                    r.bob_basis = basis_of(c);
                    r.bob_bit = bob_bit;
                    r.intensity = in;
                    double offset;
                    if (hits[keep].is_signal) {
                        offset = opts.sync_center_ns + opts.jitter_sigma_ns * rng.normal();
                        offset = std::fmod(std::fmod(offset, period_ns) + period_ns,
                                           period_ns);
                    } else {
                        offset = rng.u01() * period_ns;
                    }
                    r.timestamp_ns = static_cast<double>(r.pulse_index) * period_ns + offset;
                    result.records.push_back(r);
                }
            }
            IntensityArray<double> r{};
            for (Intensity in : kIntensities) at(r, in) = at(sample_sifted, in) / dt;
            result.series.rate.push_back(r);
            continue;
        }

        for (Intensity in : kIntensities) {
            double alpha = src.intensity_value(in);
            double n_alpha = pulses * src.intensity_prob(in);
            at(agg.sent, in) += n_alpha;
            if (in == Intensity::Signal) {
                agg.pulses_bb[0] += n_alpha / 4.0;
                agg.pulses_bb[1] += n_alpha / 4.0;
            }
            for (Channel c : kChannels) {
                auto rng = CounterRng::stream(opts.seed, si, static_cast<uint64_t>(c),
                                              static_cast<uint64_t>(in));
                double click = -std::expm1(-alpha * at(m.eta, c));
                uint64_t n_sig = rng.poisson(n_alpha * at(rx.p_channel, c) * click);
                uint64_t n_bg = rng.poisson(n_alpha * at(rx.p_channel, c) * m.y0);
                auto b = static_cast<size_t>(basis_of(c));
                auto bit = static_cast<size_t>(bit_of(c));

                if (!opts.record_events) {
                    uint64_t sig_same = rng.binomial(n_sig, 0.5);
                    uint64_t sig_err = rng.binomial(sig_same, at(m.e_det, c));
                    uint64_t bg_same = rng.binomial(n_bg, 0.5);
                    uint64_t bg_err = rng.binomial(bg_same, 0.5);
                    double det = static_cast<double>(sig_same + bg_same);
                    double err = static_cast<double>(sig_err + bg_err);
                    at(agg.sifted, in) += det;
                    at(agg.errors, in) += err;
                    at(sample_sifted, in) += det;
                    if (in == Intensity::Signal) {
                        agg.det[b][bit] += det;
                        agg.err[b][bit] += err;
                    }
                    continue;
                }

                // Record mode: materialize every click.
                for (uint64_t k = 0; k < n_sig + n_bg; ++k) {
                    bool is_signal = k < n_sig;
                    DetectionRecord r;
                    r.channel = c;
                    r.bob_basis = basis_of(c);
                    r.bob_bit = static_cast<uint8_t>(bit_of(c));
                    r.intensity = in;
                    r.pulse_index = pulse_lo + rng.below(pulse_count);
                    double offset;
                    if (is_signal) {
                        // same-basis with probability 1/2; flipped with e_det
                        if (rng.u01() < 0.5) {
                            r.alice_basis = r.bob_basis;
                            bool flip = rng.u01() < at(m.e_det, c);
                            r.alice_bit = static_cast<uint8_t>(flip ? 1 - bit_of(c)
                                                                    : bit_of(c));
                        } else {
                            r.alice_basis = r.bob_basis == Basis::Z ? Basis::X : Basis::Z;
                            r.alice_bit = static_cast<uint8_t>(rng.below(2));
                        }
                        offset = opts.sync_center_ns + opts.jitter_sigma_ns * rng.normal();
                        offset = std::fmod(std::fmod(offset, period_ns) + period_ns, period_ns);
                    } else {
                        auto state = static_cast<uint32_t>(rng.below(4));
                        r.alice_basis = state < 2 ? Basis::Z : Basis::X;
                        r.alice_bit = static_cast<uint8_t>(state & 1u);
                        offset = rng.u01() * period_ns;
                    }
                    r.timestamp_ns =
                        static_cast<double>(r.pulse_index) * period_ns + offset;
                    result.records.push_back(r);
                }
            }
        }
        if (!opts.record_events) {
            IntensityArray<double> r{};
            for (Intensity in : kIntensities) at(r, in) = at(sample_sifted, in) / dt;
            result.series.rate.push_back(r);
        } else {
            result.series.rate.push_back(rates);  // replaced below from records
        }
    }

    if (opts.mode == SimMode::MonteCarlo && opts.record_events && !opts.per_pulse &&
        !result.records.empty()) {
        // Resolve double clicks: keep one record per pulse, random bit.
        std::unordered_map<uint64_t, size_t> first_of_pulse;
        first_of_pulse.reserve(result.records.size());
        std::vector<DetectionRecord> kept;
        kept.reserve(result.records.size());
        std::unordered_map<uint64_t, std::vector<DetectionRecord>> collided;
        for (const auto& r : result.records) {
            auto [it, inserted] = first_of_pulse.try_emplace(r.pulse_index, kept.size());
            if (inserted) {
                kept.push_back(r);
            } else {
                auto& bucket = collided[r.pulse_index];
                if (bucket.empty()) bucket.push_back(kept[it->second]);
                bucket.push_back(r);
            }
        }
        // Resolve in pulse order so the draw sequence does not depend on
        // hash-map iteration order.
        std::vector<uint64_t> collided_pulses;
        collided_pulses.reserve(collided.size());
        for (const auto& [pulse, group] : collided) collided_pulses.push_back(pulse);
        std::sort(collided_pulses.begin(), collided_pulses.end());
        auto rng = CounterRng::stream(opts.seed, 0xD0B1E, 0, 0);
        for (uint64_t pulse : collided_pulses) {
            const auto& group = collided[pulse];
            auto pick = static_cast<size_t>(rng.below(group.size()));
            DetectionRecord r = group[pick];
            r.bob_bit = static_cast<uint8_t>(rng.below(2));
            r.channel = channel_of(r.bob_basis, r.bob_bit);
            kept[first_of_pulse[pulse]] = r;
        }
        result.records = std::move(kept);
        std::sort(result.records.begin(), result.records.end(),
                  [](const DetectionRecord& a, const DetectionRecord& b) {
                      return a.pulse_index < b.pulse_index;
                  });

        // Rebuild tallies and the per-sample sifted rates from the records.
        agg.sifted = {};
        agg.errors = {};
        agg.det = {};
        agg.err = {};
        std::vector<IntensityArray<double>> counts(profile.size(), IntensityArray<double>{});
        const auto pulse_count = static_cast<uint64_t>(std::llround(src.pulse_rate_hz * dt));
        for (const auto& r : result.records) {
            if (r.alice_basis != r.bob_basis) continue;
            bool error = r.alice_bit != static_cast<uint8_t>(bit_of(r.channel));
            at(agg.sifted, r.intensity) += 1.0;
            if (error) at(agg.errors, r.intensity) += 1.0;
            if (r.intensity == Intensity::Signal) {
                auto b = static_cast<size_t>(basis_of(r.channel));
                agg.det[b][static_cast<size_t>(bit_of(r.channel))] += 1.0;
                if (error) agg.err[b][static_cast<size_t>(bit_of(r.channel))] += 1.0;
            }
            size_t si = pulse_count ? std::min<size_t>(r.pulse_index / pulse_count,
                                                       profile.size() - 1)
                                    : 0;
            at(counts[si], r.intensity) += 1.0;
        }
        for (size_t si = 0; si < profile.size(); ++si) {
            for (Intensity in : kIntensities) {
                at(result.series.rate[si], in) = at(counts[si], in) / dt;
            }
        }
    }

    return result;
}

// ---------------------------------------------------------------------------
// temporal_filter

std::vector<DetectionRecord> temporal_filter(const std::vector<DetectionRecord>& events,
                                             double window_ns, double center_ns,
                                             double period_ns) {
    if (!(window_ns > 0.0)) throw NumericError("window_ns must be > 0");
    if (!(period_ns > 0.0)) throw NumericError("period_ns must be > 0");
    std::vector<DetectionRecord> out;
    out.reserve(events.size());
    for (const auto& r : events) {
        double d = std::fmod(r.timestamp_ns - center_ns, period_ns);
        if (d < -period_ns / 2.0) d += period_ns;
        if (d >= period_ns / 2.0) d -= period_ns;
        if (std::fabs(d) <= window_ns / 2.0) out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// sync_histogram

SyncFit sync_histogram(const std::vector<DetectionRecord>& events, double bin_ns,
                       double period_ns) {
    if (!(bin_ns > 0.0)) throw NumericError("bin_ns must be > 0");
    if (!(period_ns > bin_ns)) throw NumericError("period must exceed the bin width");
    const auto nbins = static_cast<size_t>(std::ceil(period_ns / bin_ns));
    std::vector<double> counts(nbins, 0.0);
    for (const auto& r : events) {
        double folded = std::fmod(r.timestamp_ns, period_ns);
        if (folded < 0.0) folded += period_ns;
        auto idx = std::min(static_cast<size_t>(folded / bin_ns), nbins - 1);
        counts[idx] += 1.0;
    }

    SyncFit fit;
    fit.bin_center_ns.resize(nbins);
    for (size_t i = 0; i < nbins; ++i) {
        fit.bin_center_ns[i] = (static_cast<double>(i) + 0.5) * bin_ns;
    }
    fit.counts = counts;

    size_t peak_idx = 0;
    for (size_t i = 1; i < nbins; ++i) {
        if (counts[i] > counts[peak_idx]) peak_idx = i;
    }
    std::vector<double> sorted = counts;
    std::nth_element(sorted.begin(), sorted.begin() + nbins / 2, sorted.end());
    double floor = sorted[nbins / 2];
    double peak = counts[peak_idx];
    if (peak <= 0.0 || peak < 2.0 * std::max(floor, 1e-12)) {
        throw NumericError("sync_histogram: no dominant peak (peak-to-floor ratio < 2)");
    }

    // Rotate so the peak sits mid-array; the fit then never straddles the wrap.
    std::vector<double> y(nbins);
    const size_t half = nbins / 2;
    for (size_t i = 0; i < nbins; ++i) {
        y[i] = counts[(peak_idx + nbins - half + i) % nbins];
    }

    fitting::Problem problem;
    problem.y = y;
    problem.weights.assign(nbins, 1.0);
    problem.model = [&](const std::vector<double>& p, std::vector<double>& out) {
        double a = p[0], mu = p[1], sigma = p[2], c = p[3];
        for (size_t i = 0; i < nbins; ++i) {
            double x = static_cast<double>(i);
            double z = (x - mu) / sigma;
            out[i] = a * std::exp(-0.5 * z * z) + c;
        }
    };
    std::vector<double> init{peak - floor, static_cast<double>(half), 3.0, floor};
    std::vector<double> lo{0.0, 0.0, 1e-3, 0.0};
    std::vector<double> hi{std::max(peak, 1.0) * 10.0 + 1.0, static_cast<double>(nbins),
                           static_cast<double>(nbins), std::max(peak, 1.0)};
    auto res = fitting::least_squares(problem, init, lo, hi);
    if (!res.converged) throw NumericError("sync_histogram: Gaussian fit did not converge");

    double mean_bins = res.params[1];
    fit.mean_ns = std::fmod((mean_bins - static_cast<double>(half) +
                             static_cast<double>(peak_idx) + 0.5) * bin_ns +
                                period_ns,
                            period_ns);
    fit.sigma_ns = std::fabs(res.params[2]) * bin_ns;
    fit.amplitude = res.params[0];
    fit.floor = res.params[3];
    return fit;
}

}  // namespace qpass::protocol
