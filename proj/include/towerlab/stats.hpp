#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "towerlab/coupling.hpp"
#include "towerlab/maps.hpp"
#include "towerlab/observables.hpp"

namespace towerlab {

struct CorrelationOptions {
    int n_max = 100;
    long orbit_length = 1'000'000;  // number of lagged products per estimate
    long burn_in = 100'000;
    std::uint64_t seed = 1;
    int batches = 50;
    int dense_lags = 50;    // 0..dense_lags kept dense, then log-spaced
    double singular_margin = 1e-9;
};

struct CorrelationSeries {
    std::vector<int> lags;
    std::vector<double> c;         // |C-hat_n|
    std::vector<double> c_signed;  // signed autocovariances (Green-Kubo input)
    std::vector<double> se;        // batch-means standard errors
    long orbit_length = 0;
    long burn_in = 0;
    std::uint64_t seed = 0;
    std::string rng_name;
    double phi_mean = 0.0, psi_mean = 0.0;
    long resample_notices = 0;  // singular-point nudges along the orbit

    void write_csv(std::ostream&) const;  // columns n,C_n,stderr
};

// Single-long-orbit time-average estimator with batch-means errors,
// bit-exact for a given seed. The doubling map is simulated through a
// sliding window over the counter-rng bit stream, which realizes the
// stationary symbolic measure exactly and avoids the mod-2 bit drain.
CorrelationSeries estimate_correlation(const MapSpec& map, const ObservableSpec& phi,
                                       const ObservableSpec& psi,
                                       const CorrelationOptions& opts);

struct RateFit {
    enum class Model { polynomial, exponential, stretched, log_poly, inconclusive };
    enum class Verdict { consistent, inconsistent, inconclusive };

    Model model = Model::inconclusive;
    double param = 0.0;     // tau, theta, or gamma
    double param_se = 0.0;  // OLS slope error where applicable
    double tau = 0.0;       // polynomial-family slope, always fitted on the window
    double tau_se = 0.0;
    double theta = 0.0;     // exponential-family rate, always fitted
    double aic = 0.0;
    int window_lo = 0, window_hi = 0;
    int points = 0;
    double residual = 0.0;
    Verdict verdict = Verdict::inconclusive;
    std::string note;

    std::string to_json_text() const;
};

// AIC selection across the four decay families in log coordinates, fitted on
// the window where C-hat clears three standard errors.
RateFit fit_rate(const CorrelationSeries& series);

// Same, then compared against a predicted envelope: consistent when the
// fitted decay is at least as fast as the prediction within tolerance.
RateFit fit_rate(const CorrelationSeries& series, const RateDescriptor& predicted,
                 double tol = 0.3);

struct CltOptions {
    int n = 2000;       // Birkhoff sum length
    int trials = 10000; // independent seeded starts
    long burn_in = 10000;
    std::uint64_t seed = 1;
    int sigma_lags = 64;
    long sigma_orbit = 2'000'000;
    long sigma_burn_in = 100'000;
    double singular_margin = 1e-9;
};

struct CltEmpiricalReport {
    double sigma2 = 0.0;  // Green-Kubo variance, truncated at the SE floor
    double ks = 0.0;      // Kolmogorov-Smirnov distance to N(0, sigma2)
    int trials = 0;
    int n = 0;
    double phi_mean = 0.0;
    bool coboundary_suspect = false;
    std::uint64_t seed = 0;
    std::string rng_name;
    int sigma_truncation = 0;  // first lag dropped from the Green-Kubo sum

    std::string to_json_text() const;  // {sigma2, ks, trials, verdict}
};

// Normalized Birkhoff sums over independent seeded streams against
// N(0, sigma2) with the Green-Kubo variance.
CltEmpiricalReport clt_empirical(const MapSpec& map, const ObservableSpec& phi,
                                 const CltOptions& opts);

} // namespace towerlab
