#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qpass/errors.hpp"
#include "qpass/protocol.hpp"
#include "qpass/rng.hpp"

using namespace qpass;
namespace proto = qpass::protocol;

namespace {
constexpr double kDeg = 3.14159265358979323846 / 180.0;

geometry::PassProfile reference_pass() {
    return geometry::synthetic_pass(500e3, 54.0 * kDeg, 26.0 * kDeg, 1.0);
}

proto::IntrinsicErrorSeries flat_errors(const geometry::PassProfile& p, double e = 0.004) {
    return proto::IntrinsicErrorSeries::constant(e, 0.0, p.empty() ? 0.0
                                                                   : p.samples.back().t);
}
}  // namespace

TEST_CASE("background yield") {
    CHECK(proto::background_yield(2090.0, 1e8, 5.0) == doctest::Approx(4.18e-6).epsilon(1e-12));
    CHECK(proto::background_yield(0.0, 1e8, 5.0) == 0.0);
    CHECK(proto::background_yield(2090.0, 1e8, 1.0) ==
          doctest::Approx(2090.0 / 1e8).epsilon(1e-15));
}

TEST_CASE("sifted rate: vacuum source sees only background") {
    SourceConfig src;
    ChannelArray<double> eta{1e-4, 2e-4, 3e-4, 4e-4};
    double y0 = 4.18e-6;
    double r = proto::sifted_rate(0.0, src.p_v, y0, eta, src);
    CHECK(r == 0.5 * src.pulse_rate_hz * src.p_v * y0);
}

TEST_CASE("intrinsic error upper bound") {
    CHECK(proto::intrinsic_error_upper(0.0, 0.0) == 0.0);
    CHECK(proto::intrinsic_error_upper(0.004, 1.0 / 226.0) ==
          doctest::Approx(0.008424778761).epsilon(1e-9));
    CHECK(proto::intrinsic_error_upper(0.5, 0.1) == 0.5);
}

TEST_CASE("error count upper bound") {
    SourceConfig src;
    ChannelArray<double> eta{1e-4, 2e-4, 3e-4, 4e-4};
    ChannelArray<double> zeros{0.0, 0.0, 0.0, 0.0};
    CHECK(proto::error_count_upper(0.8, src.p_s, 0.0, zeros, eta, src) == 0.0);
    double y0 = 4e-6;
    double expected = 0.5 * src.pulse_rate_hz * src.p_v * (0.5 * y0);
    CHECK(proto::error_count_upper(0.0, src.p_v, y0, zeros, eta, src) ==
          doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("qber upper bound behaves at the edges") {
    CHECK(proto::qber_upper(0.0, 10.0) == 0.0);
    CHECK_THROWS_AS(proto::qber_upper(1.0, 0.0), NumericError);
}

TEST_CASE("signal QBER upper bound near one percent at the reference point") {
    // Independent evaluation of the ratio of the error and rate expressions.
    ReceiverConfig rx;
    SourceConfig src;
    geometry::PassSample s{0.0, 600e3, 54.0 * kDeg};
    ChannelArray<double> eta{};
    for (Channel c : kChannels) {
        at(eta, c) = link::channel_efficiency(s, rx, src, c).value;
    }
    double eta_mean = (eta[0] + eta[1] + eta[2] + eta[3]) / 4.0;
    double y0 = proto::background_yield(link::noise_rate(eta_mean, rx), src.pulse_rate_hz,
                                        rx.filter_suppression);
    double e_det = proto::intrinsic_error_upper(0.004, src.tx_mean_error);
    ChannelArray<double> e{e_det, e_det, e_det, e_det};
    double q = proto::qber_upper(
        proto::error_count_upper(src.mu, src.p_s, y0, e, eta, src),
        proto::sifted_rate(src.mu, src.p_s, y0, eta, src));

    long double num = 0.0L, den = 0.0L;
    for (Channel c : kChannels) {
        long double click = -std::expm1(-0.8L * static_cast<long double>(at(eta, c)));
        num += 0.25L * static_cast<long double>(e_det) * click;
        den += 0.25L * click;
    }
    num += 0.5L * static_cast<long double>(y0);
    den += static_cast<long double>(y0);
    CHECK(q == doctest::Approx(static_cast<double>(num / den)).epsilon(1e-12));
    CHECK(q > 0.006);
    CHECK(q < 0.012);
}

TEST_CASE("vacuum QBER upper bound is exactly one half") {
    ReceiverConfig rx;
    SourceConfig src;
    auto p = reference_pass();
    auto res = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    for (size_t i = 0; i < res.series.size(); ++i) {
        CHECK(at(res.series.qber_upper[i], Intensity::Vacuum) == 0.5);
        for (Intensity in : kIntensities) {
            CHECK(at(res.series.qber_upper[i], in) >= 0.0);
            CHECK(at(res.series.qber_upper[i], in) <= 0.5);
        }
    }
}

TEST_CASE("analytic simulation is deterministic") {
    ReceiverConfig rx;
    SourceConfig src;
    auto p = reference_pass();
    auto a = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    auto b = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    REQUIRE(a.series.size() == b.series.size());
    for (size_t i = 0; i < a.series.size(); ++i) {
        for (Intensity in : kIntensities) {
            CHECK(at(a.series.rate[i], in) == at(b.series.rate[i], in));
        }
    }
    CHECK(a.aggregates.sifted_total() == b.aggregates.sifted_total());
}

TEST_CASE("zero-duration profile produces an empty series") {
    ReceiverConfig rx;
    SourceConfig src;
    geometry::PassProfile empty;
    auto res = proto::simulate_pass(empty, rx, src,
                                    proto::IntrinsicErrorSeries::constant(0.004), {});
    CHECK(res.series.size() == 0);
    CHECK(res.aggregates.sifted_total() == 0.0);
}

TEST_CASE("Monte Carlo requires a seed") {
    ReceiverConfig rx;
    SourceConfig src;
    auto p = reference_pass();
    proto::SimulationOptions opts;
    opts.mode = proto::SimMode::MonteCarlo;
    CHECK_THROWS_AS(proto::simulate_pass(p, rx, src, flat_errors(p), opts), ConfigError);
}

TEST_CASE("cross-module consistency: sifted rates match the count-rate model") {
    // Summed over intensities, the sifted rate equals half the channel-sum of
    // the count-rate expression once the noise term is mapped through Y0.
    ReceiverConfig rx;
    SourceConfig src;
    auto p = reference_pass();
    auto series = link::efficiency_series(p, rx, src);
    auto res = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    for (size_t i = 0; i < p.size(); i += 37) {
        double lhs = 0.0;
        for (Intensity in : kIntensities) lhs += at(res.series.rate[i], in);

        double noise = link::noise_rate(series.eta_mean[i], rx);
        double filtered_noise = noise / rx.filter_suppression;
        double sum = 0.0;
        for (Channel c : kChannels) {
            double full = link::count_rate(at(series.eta[i], c), rx, src, c);
            double unfiltered_noise_share =
                at(rx.p_channel, c) * (rx.sat_noise_T * at(series.eta[i], c) + rx.bg_noise_C);
            sum += full - unfiltered_noise_share;
        }
        double rhs = 0.5 * (sum + filtered_noise);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("QBER upper bound falls as the link improves") {
    ReceiverConfig rx;
    SourceConfig src;
    double y0 = 4e-6;
    double e_det = 0.0085;
    ChannelArray<double> e{e_det, e_det, e_det, e_det};
    double prev = 1.0;
    for (double scale : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        ChannelArray<double> eta{1.6e-4 * scale, 2.7e-4 * scale, 2.9e-4 * scale,
                                 1.5e-4 * scale};
        double q = proto::qber_upper(
            proto::error_count_upper(src.mu, src.p_s, y0, e, eta, src),
            proto::sifted_rate(src.mu, src.p_s, y0, eta, src));
        CHECK(q <= prev);
        prev = q;
    }
}

TEST_CASE("Monte Carlo sifted counts match the analytic mean at 5 sigma") {
    ReceiverConfig rx;
    SourceConfig src;
    src.pulse_rate_hz = 1e7;  // 1e7 pulses over one sample
    geometry::PassProfile p;
    p.step_s = 1.0;
    p.samples = {{0.0, 700e3, 45.0 * kDeg}};
    auto analytic = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    double mean = analytic.aggregates.sifted_total();
    proto::SimulationOptions opts;
    opts.mode = proto::SimMode::MonteCarlo;
    opts.seed = 12345;
    opts.has_seed = true;
    auto mc = proto::simulate_pass(p, rx, src, flat_errors(p), opts);
    double got = mc.aggregates.sifted_total();
    CHECK(std::fabs(got - mean) < 5.0 * std::sqrt(mean));
}

TEST_CASE("Monte Carlo mean over 30 seeds stays within 3 sigma / sqrt(30)") {
    ReceiverConfig rx;
    SourceConfig src;
    src.pulse_rate_hz = 1e7;
    geometry::PassProfile p;
    p.step_s = 1.0;
    p.samples = {{0.0, 700e3, 45.0 * kDeg}};
    auto analytic = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    double mean = analytic.aggregates.sifted_total();
    const int n_seeds = 30;
    double sum = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        proto::SimulationOptions opts;
        opts.mode = proto::SimMode::MonteCarlo;
        opts.seed = 1000 + static_cast<uint64_t>(s);
        opts.has_seed = true;
        sum += proto::simulate_pass(p, rx, src, flat_errors(p), opts).aggregates.sifted_total();
    }
    double avg = sum / n_seeds;
    CHECK(std::fabs(avg - mean) < 3.0 * std::sqrt(mean) / std::sqrt(double(n_seeds)));
}

TEST_CASE("Monte Carlo record mode agrees with its own aggregates") {
    ReceiverConfig rx;
    SourceConfig src;
    src.pulse_rate_hz = 1e6;
    geometry::PassProfile p;
    p.step_s = 1.0;
    p.samples = {{0.0, 700e3, 45.0 * kDeg}, {1.0, 690e3, 46.0 * kDeg}};
    proto::SimulationOptions opts;
    opts.mode = proto::SimMode::MonteCarlo;
    opts.seed = 7;
    opts.has_seed = true;
    opts.record_events = true;
    auto res = proto::simulate_pass(p, rx, src, flat_errors(p), opts);
    REQUIRE(!res.records.empty());
    double sifted = 0.0;
    for (const auto& r : res.records) {
        CHECK(r.bob_basis == basis_of(r.channel));
        if (r.alice_basis == r.bob_basis) sifted += 1.0;
    }
    CHECK(res.aggregates.sifted_total() == doctest::Approx(sifted));
    // pulse indices must be unique after double-click resolution
    for (size_t i = 1; i < res.records.size(); ++i) {
        CHECK(res.records[i].pulse_index >= res.records[i - 1].pulse_index);
        CHECK(res.records[i].pulse_index != res.records[i - 1].pulse_index);
    }
}

TEST_CASE("per-pulse Monte Carlo matches the analytic mean and is deterministic") {
    ReceiverConfig rx;
    SourceConfig src;
    src.pulse_rate_hz = 2e6;
    geometry::PassProfile p;
    p.step_s = 1.0;
    p.samples = {{0.0, 700e3, 45.0 * kDeg}, {1.0, 690e3, 46.0 * kDeg},
                 {2.0, 680e3, 47.0 * kDeg}};
    auto analytic = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    double mean = analytic.aggregates.sifted_total();

    proto::SimulationOptions opts;
    opts.mode = proto::SimMode::MonteCarlo;
    opts.seed = 99;
    opts.has_seed = true;
    opts.per_pulse = true;
    auto a = proto::simulate_pass(p, rx, src, flat_errors(p), opts);
    auto b = proto::simulate_pass(p, rx, src, flat_errors(p), opts);
    CHECK(a.aggregates.sifted_total() == b.aggregates.sifted_total());
    CHECK(std::fabs(a.aggregates.sifted_total() - mean) < 5.0 * std::sqrt(mean));
    // realized intensity tallies, not expected ones
    double sent_total = 0.0;
    for (Intensity in : kIntensities) sent_total += at(a.aggregates.sent, in);
    CHECK(sent_total == 3.0 * src.pulse_rate_hz);

    // record mode: one record per pulse, consistent bases
    opts.record_events = true;
    auto rec = proto::simulate_pass(p, rx, src, flat_errors(p), opts);
    REQUIRE(!rec.records.empty());
    for (size_t i = 0; i < rec.records.size(); ++i) {
        CHECK(rec.records[i].bob_basis == basis_of(rec.records[i].channel));
        if (i > 0) CHECK(rec.records[i].pulse_index > rec.records[i - 1].pulse_index);
    }
}

TEST_CASE("per-pulse mode refuses desk-hostile pulse counts") {
    ReceiverConfig rx;
    SourceConfig src;  // 1e8 Hz
    auto p = reference_pass();
    proto::SimulationOptions opts;
    opts.mode = proto::SimMode::MonteCarlo;
    opts.seed = 1;
    opts.has_seed = true;
    opts.per_pulse = true;
    CHECK_THROWS_AS(proto::simulate_pass(p, rx, src, flat_errors(p), opts), ConfigError);
}

TEST_CASE("detection records round-trip through CSV") {
    ReceiverConfig rx;
    SourceConfig src;
    src.pulse_rate_hz = 1e5;
    geometry::PassProfile p;
    p.step_s = 1.0;
    p.samples = {{0.0, 700e3, 45.0 * kDeg}};
    proto::SimulationOptions opts;
    opts.mode = proto::SimMode::MonteCarlo;
    opts.seed = 21;
    opts.has_seed = true;
    opts.record_events = true;
    auto res = proto::simulate_pass(p, rx, src, flat_errors(p), opts);
    auto text = proto::records_csv(res.records);
    auto back = proto::parse_records_csv(text);
    REQUIRE(back.size() == res.records.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].pulse_index == res.records[i].pulse_index);
        CHECK(back[i].channel == res.records[i].channel);
        CHECK(back[i].alice_basis == res.records[i].alice_basis);
        CHECK(back[i].alice_bit == res.records[i].alice_bit);
        CHECK(back[i].bob_bit == res.records[i].bob_bit);
        CHECK(back[i].intensity == res.records[i].intensity);
        CHECK(back[i].timestamp_ns == res.records[i].timestamp_ns);
    }
}

TEST_CASE("temporal filter: full-period window is the identity") {
    std::vector<proto::DetectionRecord> events;
    auto rng = CounterRng::stream(5, 1);
    for (int i = 0; i < 1000; ++i) {
        proto::DetectionRecord r;
        r.timestamp_ns = rng.u01() * 1e5;
        events.push_back(r);
    }
    auto kept = proto::temporal_filter(events, 10.0, 5.0, 10.0);
    CHECK(kept.size() == events.size());
}

TEST_CASE("temporal filter keeps the Gaussian-window fraction of signal") {
    std::vector<proto::DetectionRecord> events;
    auto rng = CounterRng::stream(99, 2);
    const double period = 10.0, center = 6.0, sigma = 0.5;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        proto::DetectionRecord r;
        double offset = center + sigma * rng.normal();
        offset = std::fmod(std::fmod(offset, period) + period, period);
        r.pulse_index = static_cast<uint64_t>(i);
        r.timestamp_ns = static_cast<double>(i) * period + offset;
        events.push_back(r);
    }
    auto kept = proto::temporal_filter(events, 2.0, center, period);
    double frac = static_cast<double>(kept.size()) / n;
    double expected = oracles::gaussian_window_fraction(sigma, 1.0);
    CHECK(expected == doctest::Approx(0.9544997).epsilon(1e-6));
    CHECK(frac == doctest::Approx(expected).epsilon(0.003));
}

TEST_CASE("temporal filter keeps exactly window/period of gridded noise") {
    std::vector<proto::DetectionRecord> events;
    const double period = 10.0;
    const int n = 1000;  // uniform grid over one period
    for (int i = 0; i < n; ++i) {
        proto::DetectionRecord r;
        r.timestamp_ns = (static_cast<double>(i) + 0.5) * period / n;
        events.push_back(r);
    }
    auto kept = proto::temporal_filter(events, 2.0, 5.0, period);
    CHECK(kept.size() == n / 5);
}

TEST_CASE("sync histogram recovers a 500 ps jitter") {
    std::vector<proto::DetectionRecord> events;
    auto rng = CounterRng::stream(4242, 3);
    const double period = 10.0, center = 6.0, sigma = 0.5;
    for (int i = 0; i < 200000; ++i) {
        proto::DetectionRecord r;
        double offset;
        if (rng.u01() < 0.92) {
            offset = center + sigma * rng.normal();
            offset = std::fmod(std::fmod(offset, period) + period, period);
        } else {
            offset = rng.u01() * period;
        }
        r.pulse_index = static_cast<uint64_t>(i);
        r.timestamp_ns = static_cast<double>(i) * period + offset;
        events.push_back(r);
    }
    auto fit = proto::sync_histogram(events, 0.1, period);
    CHECK(fit.sigma_ns == doctest::Approx(sigma).epsilon(0.10));
    CHECK(fit.mean_ns == doctest::Approx(center).epsilon(0.02));
}

TEST_CASE("sync histogram fails on uniform noise") {
    std::vector<proto::DetectionRecord> events;
    auto rng = CounterRng::stream(11, 4);
    for (int i = 0; i < 100000; ++i) {
        proto::DetectionRecord r;
        r.timestamp_ns = rng.u01() * 1e4;
        events.push_back(r);
    }
    CHECK_THROWS_AS(proto::sync_histogram(events, 0.1, 10.0), NumericError);
}

TEST_CASE("sync histogram on a delta spike returns sigma below the bin width") {
    std::vector<proto::DetectionRecord> events;
    for (int i = 0; i < 5000; ++i) {
        proto::DetectionRecord r;
        r.timestamp_ns = static_cast<double>(i) * 10.0 + 3.14;
        events.push_back(r);
    }
    auto fit = proto::sync_histogram(events, 0.1, 10.0);
    CHECK(fit.sigma_ns <= 0.1);
}

TEST_CASE("intrinsic error series CSV round trip and nearest lookup") {
    proto::IntrinsicErrorSeries s;
    s.t = {0.0, 10.0, 20.0};
    s.e_rx = {{0.001, 0.002, 0.003, 0.004},
              {0.002, 0.003, 0.004, 0.005},
              {0.003, 0.004, 0.005, 0.006}};
    auto text = s.csv();
    auto back = proto::IntrinsicErrorSeries::parse_csv(text);
    REQUIRE(back.t.size() == 3);
    CHECK(back.e_rx[1][2] == s.e_rx[1][2]);
    CHECK(at(back.at_time(4.9), Channel::H) == 0.001);
    CHECK(at(back.at_time(5.1), Channel::H) == 0.002);
    CHECK(at(back.at_time(-5.0), Channel::H) == 0.001);
    CHECK(at(back.at_time(99.0), Channel::H) == 0.003);
}

TEST_CASE("sifted rate series CSV round trip") {
    ReceiverConfig rx;
    SourceConfig src;
    auto p = geometry::synthetic_pass(500e3, 54.0 * kDeg, 45.0 * kDeg, 1.0);
    auto res = proto::simulate_pass(p, rx, src, flat_errors(p), {});
    auto text = res.series.csv();
    auto back = proto::SiftedRateSeries::parse_csv(text);
    REQUIRE(back.size() == res.series.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back.t[i] == res.series.t[i]);
        CHECK(back.rate[i] == res.series.rate[i]);
        CHECK(back.qber_upper[i] == res.series.qber_upper[i]);
        CHECK(back.y0[i] == res.series.y0[i]);
    }
}
