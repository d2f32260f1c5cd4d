#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "qpass/channel.hpp"
#include "qpass/config.hpp"
#include "qpass/geometry.hpp"

namespace qpass::fitting {

/// Weighted least-squares problem: minimize sum_i (w_i (model_i - y_i))^2.
struct Problem {
    std::function<void(const std::vector<double>&, std::vector<double>&)> model;
    std::vector<double> y;
    std::vector<double> weights;
};

struct Options {
    double tol = 1e-10;
    int max_iterations = 200;
};

struct FitResult {
    std::vector<std::string> names;   // parameter names (empty for anonymous fits)
    std::vector<double> params;
    std::vector<double> std_error;
    double residual_rms = 0.0;        // unweighted rms of model - y
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;

    double param(const std::string& name) const;      // throws if not present
    double std_error_of(const std::string& name) const;
};

/// Forward- and central-difference Jacobians of the weighted residual vector.
std::vector<std::vector<double>> jacobian_forward(const Problem& p,
                                                  const std::vector<double>& params,
                                                  double step_scale = 1e-7);
std::vector<std::vector<double>> jacobian_central(const Problem& p,
                                                  const std::vector<double>& params,
                                                  double step_scale = 1e-7);

/// Levenberg-Marquardt with a numeric forward-difference Jacobian and box
/// constraints applied by clipping. Converges when the relative parameter
/// step or the gradient norm drops below tol.
FitResult least_squares(const Problem& problem, std::vector<double> init,
                        const std::vector<double>& lower, const std::vector<double>& upper,
                        const Options& opts = {});

/// Observed per-channel count rates (and optionally an out-of-window noise
/// rate) aligned with a pass profile by timestamp.
struct ObservationSeries {
    std::vector<double> t;
    std::vector<ChannelArray<double>> counts;
    std::vector<double> noise;  // empty when the file has no noise column

    bool has_noise() const { return !noise.empty(); }
    static ObservationSeries parse_csv(const std::string& text,
                                       const std::string& origin = "<string>");
    static ObservationSeries load(const std::filesystem::path& path);
    std::string csv() const;
};

struct CountRateFitSpec {
    bool free_kappa = true;
    ChannelArray<bool> free_eta_opt{true, true, true, true};
};

/// Recover kappa and per-channel optical efficiencies from observed count
/// rates; T and C stay fixed at their configured values. Counts are weighted
/// by 1/sqrt(max(count, 1)).
FitResult fit_count_rate(const ObservationSeries& obs, const geometry::PassProfile& profile,
                         const ReceiverConfig& rx, const SourceConfig& src,
                         const CountRateFitSpec& spec = {});

/// Fit N(t) = T * eta_mean(t; kappa) + C to an out-of-window noise series,
/// with the receiver-total optical efficiency held fixed.
FitResult fit_noise(const ObservationSeries& noise_series,
                    const geometry::PassProfile& profile, const ReceiverConfig& rx,
                    const SourceConfig& src, double fixed_eta_opt_total = 0.27);

/// Model predictions for the fitted parameters, for residual emission.
std::vector<ChannelArray<double>> count_rate_model(const geometry::PassProfile& profile,
                                                   const ReceiverConfig& rx,
                                                   const SourceConfig& src);

}  // namespace qpass::fitting
