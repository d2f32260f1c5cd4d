#include "qpass/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qpass/csv.hpp"
#include "qpass/errors.hpp"
#include "qpass/link_model.hpp"

namespace qpass::fitting {

double FitResult::param(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return params[i];
    }
    throw ConfigError("fit result has no parameter '" + name + "'");
}

double FitResult::std_error_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return std_error[i];
    }
    throw ConfigError("fit result has no parameter '" + name + "'");
}

namespace {

std::vector<double> residuals(const Problem& p, const std::vector<double>& params,
                              std::vector<double>& model_buf) {
    model_buf.resize(p.y.size());
    p.model(params, model_buf);
    std::vector<double> r(p.y.size());
    for (size_t i = 0; i < p.y.size(); ++i) {
        r[i] = p.weights[i] * (model_buf[i] - p.y[i]);
    }
    return r;
}

double chi2_of(const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
}

/// Solve the symmetric positive-definite system A x = b in place.
/// Returns false when the Cholesky factorization breaks down.
bool cholesky_solve(std::vector<std::vector<double>> a, std::vector<double> b,
                    std::vector<double>& x) {
    const size_t n = b.size();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double s = a[i][j];
            for (size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
            if (i == j) {
                if (!(s > 0.0)) return false;
                a[i][i] = std::sqrt(s);
            } else {
                a[i][j] = s / a[j][j];
            }
        }
    }
    for (size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (size_t k = 0; k < i; ++k) s -= a[i][k] * b[k];
        b[i] = s / a[i][i];
    }
    x.assign(n, 0.0);
    for (size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (size_t k = ii + 1; k < n; ++k) s -= a[k][ii] * x[k];
        x[ii] = s / a[ii][ii];
    }
    return true;
}

bool invert_spd(const std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& inv) {
    const size_t n = a.size();
    inv.assign(n, std::vector<double>(n, 0.0));
    for (size_t j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1.0;
        std::vector<double> col;
        if (!cholesky_solve(a, e, col)) return false;
        for (size_t i = 0; i < n; ++i) inv[i][j] = col[i];
    }
    return true;
}

std::vector<std::vector<double>> jacobian_impl(const Problem& p,
                                               const std::vector<double>& params,
                                               double step_scale, bool central) {
    std::vector<double> model_buf;
    const size_t n = p.y.size();
    const size_t k = params.size();
    std::vector<std::vector<double>> jac(n, std::vector<double>(k, 0.0));
    std::vector<double> base;
    if (!central) base = residuals(p, params, model_buf);
    for (size_t j = 0; j < k; ++j) {
        double h = step_scale * std::max(std::fabs(params[j]), 1.0);
        auto pj = params;
        pj[j] += h;
        auto rp = residuals(p, pj, model_buf);
        if (central) {
            pj[j] = params[j] - h;
            auto rm = residuals(p, pj, model_buf);
            for (size_t i = 0; i < n; ++i) jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
        } else {
            for (size_t i = 0; i < n; ++i) jac[i][j] = (rp[i] - base[i]) / h;
        }
    }
    return jac;
}

}  // namespace

std::vector<std::vector<double>> jacobian_forward(const Problem& p,
                                                  const std::vector<double>& params,
                                                  double step_scale) {
    return jacobian_impl(p, params, step_scale, false);
}

std::vector<std::vector<double>> jacobian_central(const Problem& p,
                                                  const std::vector<double>& params,
                                                  double step_scale) {
    return jacobian_impl(p, params, step_scale, true);
}

FitResult least_squares(const Problem& problem, std::vector<double> init,
                        const std::vector<double>& lower, const std::vector<double>& upper,
                        const Options& opts) {
    const size_t k = init.size();
    if (problem.y.size() != problem.weights.size()) {
        throw ConfigError("least_squares: y and weights size mismatch");
    }
    if (lower.size() != k || upper.size() != k) {
        throw ConfigError("least_squares: bounds size mismatch");
    }
    for (size_t j = 0; j < k; ++j) {
        if (!std::isfinite(init[j]) || init[j] < lower[j] || init[j] > upper[j]) {
            throw ConfigError("least_squares: init must be finite and within bounds");
        }
    }

    FitResult result;
    std::vector<double> model_buf;
    auto p = init;
    auto r = residuals(problem, p, model_buf);
    double chi2 = chi2_of(r);
    double lambda = 0.0;

    std::vector<std::vector<double>> jac;
    std::vector<double> grad(k, 0.0);
    bool converged = false;
    int iter = 0;
    for (; iter < opts.max_iterations && !converged; ++iter) {
        jac = jacobian_forward(problem, p);
        std::vector<std::vector<double>> jtj(k, std::vector<double>(k, 0.0));
        for (size_t a = 0; a < k; ++a) {
            for (size_t b = 0; b <= a; ++b) {
                double s = 0.0;
                for (size_t i = 0; i < r.size(); ++i) s += jac[i][a] * jac[i][b];
                jtj[a][b] = jtj[b][a] = s;
            }
            double g = 0.0;
            for (size_t i = 0; i < r.size(); ++i) g += jac[i][a] * r[i];
            grad[a] = g;
        }
        double gnorm = 0.0;
        for (double g : grad) gnorm = std::max(gnorm, std::fabs(g));
        if (gnorm < opts.tol) {
            converged = true;
            break;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
            auto damped = jtj;
            for (size_t a = 0; a < k; ++a) {
                damped[a][a] += lambda * std::max(jtj[a][a], 1e-30);
            }
            std::vector<double> rhs(k);
            for (size_t a = 0; a < k; ++a) rhs[a] = -grad[a];
            std::vector<double> delta;
            if (cholesky_solve(damped, rhs, delta)) {
                auto trial = p;
                double rel_step = 0.0;
                for (size_t a = 0; a < k; ++a) {
                    trial[a] = std::clamp(p[a] + delta[a], lower[a], upper[a]);
                    rel_step = std::max(rel_step, std::fabs(trial[a] - p[a]) /
                                                      std::max(std::fabs(p[a]), 1.0));
                }
                auto rt = residuals(problem, trial, model_buf);
                double c2 = chi2_of(rt);
                if (c2 <= chi2 * (1.0 + 1e-15)) {
                    bool small_step = rel_step < opts.tol;
                    p = trial;
                    r = std::move(rt);
                    chi2 = c2;
                    lambda = lambda == 0.0 ? 0.0 : std::max(lambda * 0.3, 1e-12);
                    accepted = true;
                    if (small_step) converged = true;
                    break;
                }
            }
            lambda = lambda == 0.0 ? 1e-4 : lambda * 10.0;
            if (lambda > 1e14) break;
        }
        if (!accepted) break;
    }

    result.params = p;
    result.iterations = iter;
    result.converged = converged;

    // Unweighted residual rms.
    model_buf.resize(problem.y.size());
    problem.model(p, model_buf);
    double ss = 0.0;
    for (size_t i = 0; i < problem.y.size(); ++i) {
        double d = model_buf[i] - problem.y[i];
        ss += d * d;
    }
    result.residual_rms = problem.y.empty() ? 0.0 : std::sqrt(ss / problem.y.size());

    // Standard errors from the weighted normal equations.
    jac = jacobian_forward(problem, p);
    std::vector<std::vector<double>> jtj(k, std::vector<double>(k, 0.0));
    for (size_t a = 0; a < k; ++a) {
        for (size_t b = 0; b <= a; ++b) {
            double s = 0.0;
            for (size_t i = 0; i < problem.y.size(); ++i) s += jac[i][a] * jac[i][b];
            jtj[a][b] = jtj[b][a] = s;
        }
    }
    result.std_error.assign(k, 0.0);
    std::vector<std::vector<double>> cov;
    if (invert_spd(jtj, cov)) {
        r = residuals(problem, p, model_buf);
        double dof = std::max<double>(1.0, static_cast<double>(problem.y.size()) -
                                               static_cast<double>(k));
        double s2 = chi2_of(r) / dof;
        for (size_t a = 0; a < k; ++a) {
            result.std_error[a] = std::sqrt(std::max(0.0, cov[a][a] * s2));
        }
    } else {
        result.warnings.push_back("singular normal equations; standard errors unavailable");
    }

    for (size_t a = 0; a < k; ++a) {
        double g = grad[a];
        bool at_lo = p[a] <= lower[a] + 1e-14 * std::max(1.0, std::fabs(lower[a]));
        bool at_hi = p[a] >= upper[a] - 1e-14 * std::max(1.0, std::fabs(upper[a]));
        if ((at_lo && g > 0.0) || (at_hi && g < 0.0)) {
            result.warnings.push_back("parameter-at-bound: index " + std::to_string(a));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// ObservationSeries

ObservationSeries ObservationSeries::parse_csv(const std::string& text,
                                               const std::string& origin) {
    auto table = csv::read_string(text, origin);
    size_t ct = table.column("t_s");
    ChannelArray<size_t> cc{table.column("counts_H"), table.column("counts_V"),
                            table.column("counts_D"), table.column("counts_A")};
    bool with_noise = table.has_column("noise");
    size_t cn = with_noise ? table.column("noise") : 0;
    ObservationSeries s;
    for (size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        s.t.push_back(row[ct]);
        ChannelArray<double> counts{};
        for (Channel c : kChannels) {
            double v = row[at(cc, c)];
            if (!(v >= 0.0)) {
                throw ConfigError(origin + ":" + std::to_string(table.line_numbers[i]) +
                                  ": counts must be >= 0");
            }
            at(counts, c) = v;
        }
        s.counts.push_back(counts);
        if (with_noise) s.noise.push_back(row[cn]);
    }
    return s;
}

ObservationSeries ObservationSeries::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path.string());
}

std::string ObservationSeries::csv() const {
    csv::Writer w;
    if (has_noise()) {
        w.header({"t_s", "counts_H", "counts_V", "counts_D", "counts_A", "noise"});
    } else {
        w.header({"t_s", "counts_H", "counts_V", "counts_D", "counts_A"});
    }
    for (size_t i = 0; i < t.size(); ++i) {
        std::vector<double> row{t[i], counts[i][0], counts[i][1], counts[i][2], counts[i][3]};
        if (has_noise()) row.push_back(noise[i]);
        w.row(row);
    }
    return w.text;
}

// ---------------------------------------------------------------------------
// Model fits

namespace {

std::vector<size_t> align_times(const std::vector<double>& obs_t,
                                const geometry::PassProfile& profile) {
    std::vector<size_t> idx;
    idx.reserve(obs_t.size());
    for (double t : obs_t) {
        size_t i = profile.nearest_index(t);
        if (std::fabs(profile.samples[i].t - t) > 1e-9) {
            throw ConfigError("observation at t=" + std::to_string(t) +
                              " has no matching profile sample");
        }
        idx.push_back(i);
    }
    return idx;
}

void check_elevation_span(const geometry::PassProfile& profile, FitResult& result) {
    double lo = 1e9, hi = -1e9;
    for (const auto& s : profile.samples) {
        lo = std::min(lo, s.elevation_rad);
        hi = std::max(hi, s.elevation_rad);
    }
    constexpr double kSpan = 15.0 * 3.14159265358979323846 / 180.0;
    if (hi - lo < kSpan) {
        result.warnings.push_back(
            "ill-conditioned: elevation span below 15 deg; kappa and a global "
            "efficiency scale separate poorly");
    }
}

}  // namespace

FitResult fit_count_rate(const ObservationSeries& obs, const geometry::PassProfile& profile,
                         const ReceiverConfig& rx, const SourceConfig& src,
                         const CountRateFitSpec& spec) {
    if (obs.t.empty()) throw ConfigError("fit_count_rate: empty observation series");
    auto idx = align_times(obs.t, profile);

    std::vector<std::string> names;
    std::vector<double> init, lo, hi;
    if (spec.free_kappa) {
        names.push_back("kappa");
        init.push_back(0.3);
        lo.push_back(0.0);
        hi.push_back(2.0);
    }
    for (Channel c : kChannels) {
        if (at(spec.free_eta_opt, c)) {
            names.push_back("eta_opt_" + std::string(name_of(c)));
            init.push_back(0.25);
            lo.push_back(1e-6);
            hi.push_back(1.0);
        }
    }
    if (names.empty()) throw ConfigError("fit_count_rate: no free parameters");

    Problem problem;
    const size_t n = obs.t.size();
    problem.y.resize(n * 4);
    problem.weights.resize(n * 4);
    for (size_t i = 0; i < n; ++i) {
        for (Channel c : kChannels) {
            double y = at(obs.counts[i], c);
            problem.y[i * 4 + static_cast<size_t>(c)] = y;
            problem.weights[i * 4 + static_cast<size_t>(c)] =
                1.0 / std::sqrt(std::max(y, 1.0));
        }
    }
    problem.model = [&, idx](const std::vector<double>& p, std::vector<double>& out) {
        ReceiverConfig trial = rx;
        size_t j = 0;
        if (spec.free_kappa) trial.kappa = p[j++];
        for (Channel c : kChannels) {
            if (at(spec.free_eta_opt, c)) at(trial.eta_opt, c) = p[j++];
        }
        for (size_t i = 0; i < idx.size(); ++i) {
            const auto& sample = profile.samples[idx[i]];
            for (Channel c : kChannels) {
                double eta = link::channel_efficiency(sample, trial, src, c).value;
                out[i * 4 + static_cast<size_t>(c)] = link::count_rate(eta, trial, src, c);
            }
        }
    };

    auto result = least_squares(problem, init, lo, hi);
    result.names = names;
    check_elevation_span(profile, result);
    return result;
}

FitResult fit_noise(const ObservationSeries& noise_series,
                    const geometry::PassProfile& profile, const ReceiverConfig& rx,
                    const SourceConfig& src, double fixed_eta_opt_total) {
    if (noise_series.t.empty() || !noise_series.has_noise()) {
        throw ConfigError("fit_noise: series has no noise column");
    }
    auto idx = align_times(noise_series.t, profile);

    Problem problem;
    const size_t n = noise_series.t.size();
    problem.y = noise_series.noise;
    problem.weights.assign(n, 1.0);
    problem.model = [&, idx](const std::vector<double>& p, std::vector<double>& out) {
        ReceiverConfig trial = rx;
        trial.sat_noise_T = p[0];
        trial.bg_noise_C = p[1];
        trial.kappa = p[2];
        trial.eta_opt = {fixed_eta_opt_total, fixed_eta_opt_total, fixed_eta_opt_total,
                         fixed_eta_opt_total};
        for (size_t i = 0; i < idx.size(); ++i) {
            const auto& sample = profile.samples[idx[i]];
            double eta = link::channel_efficiency(sample, trial, src, Channel::H).value;
            out[i] = link::noise_rate(eta, trial);
        }
    };

    // Iteratively reweighted by the model's Poisson variance. Weighting by
    // the observed counts instead biases the level downward, and unit
    // weights leave the (T, C, kappa) ridge too loosely pinned.
    const std::vector<double> lo{0.0, 0.0, 0.0};
    const std::vector<double> hi{1e12, 1e9, 2.0};
    std::vector<double> init{1e6, 100.0, 0.3};
    FitResult result;
    std::vector<double> model_vals(n);
    for (int pass_i = 0; pass_i < 3; ++pass_i) {
        result = least_squares(problem, init, lo, hi);
        problem.model(result.params, model_vals);
        for (size_t i = 0; i < n; ++i) {
            problem.weights[i] = 1.0 / std::sqrt(std::max(model_vals[i], 1.0));
        }
        init = result.params;
    }
    result.names = {"sat_noise_T", "bg_noise_C", "kappa"};
    check_elevation_span(profile, result);
    return result;
}

std::vector<ChannelArray<double>> count_rate_model(const geometry::PassProfile& profile,
                                                   const ReceiverConfig& rx,
                                                   const SourceConfig& src) {
    std::vector<ChannelArray<double>> out;
    out.reserve(profile.size());
    for (const auto& sample : profile.samples) {
        ChannelArray<double> row{};
        for (Channel c : kChannels) {
            double eta = link::channel_efficiency(sample, rx, src, c).value;
            at(row, c) = link::count_rate(eta, rx, src, c);
        }
        out.push_back(row);
    }
    return out;
}

}  // namespace qpass::fitting
