#include "qpass/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qpass/errors.hpp"

namespace qpass {

using nlohmann::json;

void SourceConfig::validate() const {
    if (std::fabs(p_s + p_d + p_v - 1.0) > 1e-12) {
        throw ConfigError("source: p_s + p_d + p_v must equal 1");
    }
    for (double p : {p_s, p_d, p_v}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("source: probabilities must be in [0,1]");
    }
    if (!(nu >= 0.0 && nu < mu)) throw ConfigError("source: need 0 <= nu < mu");
    if (lambda_vac != 0.0) throw ConfigError("source: lambda_vac is fixed at 0");
    if (!(pulse_rate_hz > 0.0)) throw ConfigError("source: pulse_rate_hz must be > 0");
    if (!(divergence_rad > 0.0)) throw ConfigError("source: divergence_rad must be > 0");
    if (!(tx_mean_error >= 0.0 && tx_mean_error < 0.5)) {
        throw ConfigError("source: tx_mean_error must be in [0, 0.5)");
    }
}

void ReceiverConfig::validate() const {
    if (!(aperture_m > 0.0)) throw ConfigError("receiver: aperture_m must be > 0");
    if (!(obstruction > 0.0 && obstruction <= 1.0)) {
        throw ConfigError("receiver: obstruction must be in (0,1]");
    }
    double psum = 0.0;
    for (Channel c : kChannels) {
        double e = at(eta_opt, c);
        if (!(e > 0.0 && e <= 1.0)) throw ConfigError("receiver: eta_opt must be in (0,1]");
        double p = at(p_channel, c);
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("receiver: p_channel must be in [0,1]");
        psum += p;
    }
    if (std::fabs(psum - 1.0) > 1e-12) throw ConfigError("receiver: p_channel must sum to 1");
    if (!(eta_det > 0.0 && eta_det <= 1.0)) throw ConfigError("receiver: eta_det must be in (0,1]");
    if (!(kappa >= 0.0)) throw ConfigError("receiver: kappa must be >= 0");
    if (!(sat_noise_T >= 0.0)) throw ConfigError("receiver: sat_noise_T must be >= 0");
    if (!(bg_noise_C >= 0.0)) throw ConfigError("receiver: bg_noise_C must be >= 0");
    if (!(filter_suppression >= 1.0)) {
        throw ConfigError("receiver: filter_suppression must be >= 1");
    }
    if (!(filter_window_ns > 0.0)) throw ConfigError("receiver: filter_window_ns must be > 0");
}

void Config::validate() const {
    source.validate();
    receiver.validate();
}

Config default_config() { return Config{}; }

namespace {

double get_num(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
    return j.at(key).get<double>();
}

ChannelArray<double> get_channel_map(const json& j, const char* key,
                                     const ChannelArray<double>& fallback) {
    if (!j.contains(key)) return fallback;
    const json& m = j.at(key);
    ChannelArray<double> out = fallback;
    for (Channel c : kChannels) {
        std::string name(name_of(c));
        if (!m.contains(name)) throw ConfigError(std::string("config: '") + key +
                                                 "' missing channel " + name);
        out[static_cast<size_t>(c)] = m.at(name).get<double>();
    }
    return out;
}

void reject_unknown_keys(const json& j, const char* section,
                         std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) {
            if (key == k) ok = true;
        }
        if (!ok) {
            throw ConfigError(std::string("config: unknown key '") + key + "' in " +
                              section);
        }
    }
}

}  // namespace

Config parse_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    Config cfg = default_config();
    reject_unknown_keys(j, "the top level", {"source", "receiver"});
    if (j.contains("source")) {
        const json& s = j.at("source");
        reject_unknown_keys(s, "source",
                            {"mu", "nu", "lambda_vac", "p_s", "p_d", "p_v", "pulse_rate_hz",
                             "divergence_rad", "tx_mean_error"});
        auto& src = cfg.source;
        src.mu = get_num(s, "mu", src.mu);
        src.nu = get_num(s, "nu", src.nu);
        src.lambda_vac = get_num(s, "lambda_vac", src.lambda_vac);
        src.p_s = get_num(s, "p_s", src.p_s);
        src.p_d = get_num(s, "p_d", src.p_d);
        src.p_v = get_num(s, "p_v", src.p_v);
        src.pulse_rate_hz = get_num(s, "pulse_rate_hz", src.pulse_rate_hz);
        src.divergence_rad = get_num(s, "divergence_rad", src.divergence_rad);
        src.tx_mean_error = get_num(s, "tx_mean_error", src.tx_mean_error);
    }
    if (j.contains("receiver")) {
        const json& r = j.at("receiver");
        reject_unknown_keys(r, "receiver",
                            {"aperture_m", "obstruction", "eta_opt", "eta_det", "p_channel",
                             "sat_noise_T", "bg_noise_C", "kappa", "filter_suppression",
                             "filter_window_ns"});
        auto& rx = cfg.receiver;
        rx.aperture_m = get_num(r, "aperture_m", rx.aperture_m);
        rx.obstruction = get_num(r, "obstruction", rx.obstruction);
        rx.eta_opt = get_channel_map(r, "eta_opt", rx.eta_opt);
        rx.eta_det = get_num(r, "eta_det", rx.eta_det);
        rx.p_channel = get_channel_map(r, "p_channel", rx.p_channel);
        rx.sat_noise_T = get_num(r, "sat_noise_T", rx.sat_noise_T);
        rx.bg_noise_C = get_num(r, "bg_noise_C", rx.bg_noise_C);
        rx.kappa = get_num(r, "kappa", rx.kappa);
        rx.filter_suppression = get_num(r, "filter_suppression", rx.filter_suppression);
        rx.filter_window_ns = get_num(r, "filter_window_ns", rx.filter_window_ns);
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string config_json(const Config& cfg) {
    json j;
    j["source"] = {
        {"mu", cfg.source.mu},
        {"nu", cfg.source.nu},
        {"lambda_vac", cfg.source.lambda_vac},
        {"p_s", cfg.source.p_s},
        {"p_d", cfg.source.p_d},
        {"p_v", cfg.source.p_v},
        {"pulse_rate_hz", cfg.source.pulse_rate_hz},
        {"divergence_rad", cfg.source.divergence_rad},
        {"tx_mean_error", cfg.source.tx_mean_error},
    };
    json eta;
    json pch;
    for (Channel c : kChannels) {
        eta[std::string(name_of(c))] = at(cfg.receiver.eta_opt, c);
        pch[std::string(name_of(c))] = at(cfg.receiver.p_channel, c);
    }
    j["receiver"] = {
        {"aperture_m", cfg.receiver.aperture_m},
        {"obstruction", cfg.receiver.obstruction},
        {"eta_opt", eta},
        {"eta_det", cfg.receiver.eta_det},
        {"p_channel", pch},
        {"sat_noise_T", cfg.receiver.sat_noise_T},
        {"bg_noise_C", cfg.receiver.bg_noise_C},
        {"kappa", cfg.receiver.kappa},
        {"filter_suppression", cfg.receiver.filter_suppression},
        {"filter_window_ns", cfg.receiver.filter_window_ns},
    };
    return j.dump(2) + "\n";
}

}  // namespace qpass
