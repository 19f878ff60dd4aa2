#include "towerlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>

#include <json.hpp>

#include "towerlab/rng.hpp"

namespace towerlab {

namespace {

// Orbit sources. Iterating the doubling map in floating point drains one bit
// per step and collapses to zero; the stationary process is instead realized
// exactly by sliding a 64-bit window along the counter-rng bit stream.
class OrbitSource {
public:
    virtual ~OrbitSource() = default;
    virtual double next() = 0;
    virtual long notices() const { return 0; }
};

class DoublingOrbit final : public OrbitSource {
public:
    DoublingOrbit(std::uint64_t seed, std::uint64_t stream, long skip) : rng_(seed, stream) {
        pos_ = static_cast<std::uint64_t>(skip);
    }
    double next() override {
        const std::uint64_t word_idx = pos_ / 64;
        const unsigned shift = static_cast<unsigned>(pos_ % 64);
        std::uint64_t u = rng_.word(word_idx);
        if (shift != 0)
            u = (u << shift) | (rng_.word(word_idx + 1) >> (64 - shift));
        ++pos_;
        return static_cast<double>(u >> 11) * 0x1.0p-53;
    }

private:
    CounterRng rng_;
    std::uint64_t pos_ = 0;
};

class IteratedOrbit final : public OrbitSource {
public:
    IteratedOrbit(const MapSpec& spec, std::uint64_t seed, std::uint64_t stream, long burn_in,
                  double margin)
        : spec_(spec), margin_(margin) {
        CounterRng rng(seed, stream);
        x_ = rng.next_uniform();
        nudge();
        for (long i = 0; i < burn_in; ++i) step();
    }
    double next() override {
        const double out = x_;
        step();
        return out;
    }
    long notices() const override { return notices_; }

private:
    void nudge() {
        if (spec_.family == MapFamily::log_singular) {
            if (std::abs(x_ - spec_.a) <= margin_) {
                x_ = spec_.a + (x_ < spec_.a ? -2.0 : 2.0) * margin_;
                ++notices_;
            }
            if (x_ >= 1.0 - margin_) {
                x_ = 1.0 - 2.0 * margin_;
                ++notices_;
            }
        }
        if (x_ < 0.0) x_ = 0.0;
        if (x_ > 1.0) x_ = 1.0;
    }
    void step() {
        x_ = eval_map(spec_, x_);
        nudge();
    }

    MapSpec spec_;
    double margin_;
    double x_ = 0.0;
    long notices_ = 0;
};

std::unique_ptr<OrbitSource> make_orbit(const MapSpec& spec, std::uint64_t seed,
                                        std::uint64_t stream, long burn_in, double margin) {
    if (spec.family == MapFamily::doubling)
        return std::make_unique<DoublingOrbit>(seed, stream, burn_in);
    return std::make_unique<IteratedOrbit>(spec, seed, stream, burn_in, margin);
}

std::vector<int> build_lag_set(int n_max, int dense) {
    std::vector<int> lags;
    for (int n = 0; n <= std::min(dense, n_max); ++n) lags.push_back(n);
    if (n_max > dense) {
        double v = dense;
        while (true) {
            v *= 1.25;
            const int n = static_cast<int>(v);
            if (n >= n_max) break;
            if (n > lags.back()) lags.push_back(n);
        }
        lags.push_back(n_max);
    }
    return lags;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace

CorrelationSeries estimate_correlation(const MapSpec& map, const ObservableSpec& phi,
                                       const ObservableSpec& psi,
                                       const CorrelationOptions& opts) {
    if (opts.n_max < 0 || opts.orbit_length < 100)
        throw invalid_input_error("estimate_correlation: bad orbit parameters");
    const long N = opts.orbit_length;
    const int B = std::max(2, opts.batches);
    const auto lags = build_lag_set(opts.n_max, opts.dense_lags);
    const int L = static_cast<int>(lags.size());
    const int ring_len = opts.n_max + 1;

    auto orbit = make_orbit(map, opts.seed, 0, opts.burn_in, opts.singular_margin);

    // psi values ring buffer; phi evaluated at the leading edge
    std::vector<double> psi_ring(static_cast<std::size_t>(ring_len), 0.0);
    std::vector<double> phi_ring(static_cast<std::size_t>(ring_len), 0.0);

    // per-batch accumulators: product sums per lag plus marginal sums
    std::vector<std::vector<double>> prod(static_cast<std::size_t>(B),
                                          std::vector<double>(static_cast<std::size_t>(L), 0.0));
    std::vector<std::vector<double>> phi_sum_lag(
        static_cast<std::size_t>(B), std::vector<double>(static_cast<std::size_t>(L), 0.0));
    std::vector<double> psi_sum(static_cast<std::size_t>(B), 0.0);
    std::vector<long> count(static_cast<std::size_t>(B), 0);

    const long total_steps = N + opts.n_max;
    for (long t = 0; t < total_steps; ++t) {
        const double x = orbit->next();
        const int slot = static_cast<int>(t % ring_len);
        psi_ring[static_cast<std::size_t>(slot)] = psi(x);
        phi_ring[static_cast<std::size_t>(slot)] = phi(x);
        for (int il = 0; il < L; ++il) {
            const int n = lags[static_cast<std::size_t>(il)];
            const long j = t - n;  // psi index
            if (j < 0 || j >= N) continue;
            const int b = static_cast<int>(j * B / N);
            const double pv = psi_ring[static_cast<std::size_t>((j % ring_len))];
            prod[static_cast<std::size_t>(b)][static_cast<std::size_t>(il)] +=
                phi_ring[static_cast<std::size_t>(slot)] * pv;
            phi_sum_lag[static_cast<std::size_t>(b)][static_cast<std::size_t>(il)] +=
                phi_ring[static_cast<std::size_t>(slot)];
        }
        const long j = t;
        if (j < N) {
            const int b = static_cast<int>(j * B / N);
            psi_sum[static_cast<std::size_t>(b)] += psi_ring[static_cast<std::size_t>(slot)];
            count[static_cast<std::size_t>(b)] += 1;
        }
    }

    double psi_mean = 0.0, phi_mean = 0.0;
    for (int b = 0; b < B; ++b) psi_mean += psi_sum[static_cast<std::size_t>(b)];
    psi_mean /= static_cast<double>(N);
    for (int b = 0; b < B; ++b)
        phi_mean += phi_sum_lag[static_cast<std::size_t>(b)][0];
    phi_mean /= static_cast<double>(N);

    CorrelationSeries series;
    series.lags = lags;
    series.orbit_length = N;
    series.burn_in = opts.burn_in;
    series.seed = opts.seed;
    series.rng_name = CounterRng::name();
    series.phi_mean = phi_mean;
    series.psi_mean = psi_mean;
    series.resample_notices = orbit->notices();
    series.c.resize(static_cast<std::size_t>(L));
    series.c_signed.resize(static_cast<std::size_t>(L));
    series.se.resize(static_cast<std::size_t>(L));

    for (int il = 0; il < L; ++il) {
        // per-batch covariance against the global means, then batch means
        double mean_cov = 0.0;
        std::vector<double> bc(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b) {
            const double m = static_cast<double>(count[static_cast<std::size_t>(b)]);
            const double pm =
                phi_sum_lag[static_cast<std::size_t>(b)][static_cast<std::size_t>(il)] / m;
            const double sm = psi_sum[static_cast<std::size_t>(b)] / m;
            bc[static_cast<std::size_t>(b)] =
                prod[static_cast<std::size_t>(b)][static_cast<std::size_t>(il)] / m -
                pm * psi_mean - phi_mean * sm + phi_mean * psi_mean;
            mean_cov += bc[static_cast<std::size_t>(b)];
        }
        mean_cov /= static_cast<double>(B);
        double var = 0.0;
        for (int b = 0; b < B; ++b) {
            const double d = bc[static_cast<std::size_t>(b)] - mean_cov;
            var += d * d;
        }
        var /= static_cast<double>(B - 1);
        series.c_signed[static_cast<std::size_t>(il)] = mean_cov;
        series.c[static_cast<std::size_t>(il)] = std::abs(mean_cov);
        series.se[static_cast<std::size_t>(il)] = std::sqrt(var / static_cast<double>(B));
    }
    return series;
}

void CorrelationSeries::write_csv(std::ostream& os) const {
    os << "n,C_n,stderr\n";
    char buf[128];
    for (std::size_t i = 0; i < lags.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g", lags[i], c[i], se[i]);
        os << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// rate fitting
// ---------------------------------------------------------------------------

namespace {

struct Fit2 {
    double slope = 0.0, icpt = 0.0, rss = 0.0, slope_se = 0.0;
};

Fit2 ols(const std::vector<double>& xs, const std::vector<double>& ys) {
    const int m = static_cast<int>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < m; ++i) {
        sx += xs[static_cast<std::size_t>(i)];
        sy += ys[static_cast<std::size_t>(i)];
        sxx += xs[static_cast<std::size_t>(i)] * xs[static_cast<std::size_t>(i)];
        sxy += xs[static_cast<std::size_t>(i)] * ys[static_cast<std::size_t>(i)];
    }
    Fit2 f;
    const double den = m * sxx - sx * sx;
    f.slope = (m * sxy - sx * sy) / den;
    f.icpt = (sy - f.slope * sx) / m;
    for (int i = 0; i < m; ++i) {
        const double r =
            ys[static_cast<std::size_t>(i)] - f.icpt - f.slope * xs[static_cast<std::size_t>(i)];
        f.rss += r * r;
    }
    if (m > 2) f.slope_se = std::sqrt(f.rss / (m - 2) / (den / m));
    return f;
}

double aic_of(double rss, int m, int k) {
    return m * std::log(std::max(rss, 1e-300) / m) + 2.0 * k;
}

} // namespace

RateFit fit_rate(const CorrelationSeries& series) {
    // usable window: contiguous run of lags n >= 1 with C_n above 3 SE
    std::vector<int> ns;
    std::vector<double> logc;
    for (std::size_t i = 0; i < series.lags.size(); ++i) {
        if (series.lags[i] < 1) continue;
        if (!(series.c[i] > 3.0 * series.se[i]) || series.c[i] <= 0.0) break;
        ns.push_back(series.lags[i]);
        logc.push_back(std::log(series.c[i]));
    }
    RateFit fit;
    if (ns.size() < 10) {
        fit.model = RateFit::Model::inconclusive;
        fit.verdict = RateFit::Verdict::inconclusive;
        fit.note = "fewer than 10 lags clear the 3-sigma gate";
        return fit;
    }
    fit.points = static_cast<int>(ns.size());
    fit.window_lo = ns.front();
    fit.window_hi = ns.back();
    const int m = fit.points;

    std::vector<double> xlog(ns.size()), xlin(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        xlog[i] = std::log(static_cast<double>(ns[i]));
        xlin[i] = static_cast<double>(ns[i]);
    }

    const Fit2 poly = ols(xlog, logc);
    const Fit2 expo = ols(xlin, logc);
    fit.tau = -poly.slope;
    fit.tau_se = poly.slope_se;
    fit.theta = std::exp(expo.slope);

    // stretched exponential and log-polynomial via a parameter grid
    double best_stretch_rss = std::numeric_limits<double>::infinity(), best_stretch_g = 0.5;
    for (double g = 0.10; g <= 0.95; g += 0.05) {
        std::vector<double> xs(ns.size());
        for (std::size_t i = 0; i < ns.size(); ++i)
            xs[i] = -std::pow(static_cast<double>(ns[i]), g);
        const Fit2 f = ols(xs, logc);
        if (f.slope > 0.0 && f.rss < best_stretch_rss) {
            best_stretch_rss = f.rss;
            best_stretch_g = g;
        }
    }
    double best_lp_rss = std::numeric_limits<double>::infinity(), best_lp_g = 1.5;
    for (double g = 1.05; g <= 4.0; g += 0.05) {
        std::vector<double> xs(ns.size());
        for (std::size_t i = 0; i < ns.size(); ++i)
            xs[i] = -std::pow(std::log(static_cast<double>(ns[i]) + 1.0), g);
        const Fit2 f = ols(xs, logc);
        if (f.slope > 0.0 && f.rss < best_lp_rss) {
            best_lp_rss = f.rss;
            best_lp_g = g;
        }
    }

    const double aics[4] = {aic_of(poly.rss, m, 2), aic_of(expo.rss, m, 2),
                            aic_of(best_stretch_rss, m, 3), aic_of(best_lp_rss, m, 3)};
    int best = 0;
    for (int k = 1; k < 4; ++k)
        if (aics[k] < aics[best]) best = k;

    switch (best) {
        case 0:
            fit.model = RateFit::Model::polynomial;
            fit.param = -poly.slope;  // tau
            fit.param_se = poly.slope_se;
            fit.residual = poly.rss;
            break;
        case 1:
            fit.model = RateFit::Model::exponential;
            fit.param = std::exp(expo.slope);  // theta
            fit.param_se = fit.param * expo.slope_se;
            fit.residual = expo.rss;
            break;
        case 2:
            fit.model = RateFit::Model::stretched;
            fit.param = best_stretch_g;
            fit.residual = best_stretch_rss;
            break;
        default:
            fit.model = RateFit::Model::log_poly;
            fit.param = best_lp_g;
            fit.residual = best_lp_rss;
            break;
    }
    fit.aic = aics[best];
    fit.verdict = RateFit::Verdict::inconclusive;
    return fit;
}

RateFit fit_rate(const CorrelationSeries& series, const RateDescriptor& predicted, double tol) {
    RateFit fit = fit_rate(series);
    if (fit.model == RateFit::Model::inconclusive) return fit;

    auto speed_rank = [](RateFit::Model mdl) {
        switch (mdl) {
            case RateFit::Model::exponential: return 3;
            case RateFit::Model::stretched: return 2;
            case RateFit::Model::log_poly: return 1;
            default: return 0;
        }
    };
    auto predicted_rank = [](RateDescriptor::Family f) {
        switch (f) {
            case RateDescriptor::Family::exponential: return 3;
            case RateDescriptor::Family::stretched_exp: return 2;
            case RateDescriptor::Family::log_poly_exp: return 1;
            default: return 0;
        }
    };

    const int fr = speed_rank(fit.model);
    const int pr = predicted_rank(predicted.family);
    if (fr > pr) {
        fit.verdict = RateFit::Verdict::consistent;
        fit.note = "fitted family faster than the predicted envelope";
    } else if (fr < pr) {
        fit.verdict = RateFit::Verdict::inconsistent;
        fit.note = "fitted family slower than the predicted envelope";
    } else if (fit.model == RateFit::Model::polynomial) {
        // envelope semantics: at least as fast within tolerance
        if (fit.param >= predicted.exponent - tol) {
            fit.verdict = RateFit::Verdict::consistent;
            fit.note = "polynomial exponent within the envelope band";
        } else {
            fit.verdict = RateFit::Verdict::inconsistent;
            fit.note = "polynomial exponent below the envelope";
        }
    } else {
        fit.verdict = RateFit::Verdict::consistent;
        fit.note = "same family as the predicted envelope";
    }
    return fit;
}

std::string RateFit::to_json_text() const {
    nlohmann::json j;
    const char* mdl = model == Model::polynomial     ? "polynomial"
                      : model == Model::exponential  ? "exponential"
                      : model == Model::stretched    ? "stretched"
                      : model == Model::log_poly     ? "log_poly"
                                                     : "inconclusive";
    const char* vdt = verdict == Verdict::consistent     ? "consistent"
                      : verdict == Verdict::inconsistent ? "inconsistent"
                                                         : "inconclusive";
    j["model"] = mdl;
    j["param"] = param;
    j["param_se"] = param_se;
    j["tau"] = tau;
    j["tau_se"] = tau_se;
    j["theta"] = theta;
    j["aic"] = aic;
    j["window"] = {window_lo, window_hi};
    j["points"] = points;
    j["residual"] = residual;
    j["verdict"] = vdt;
    j["note"] = note;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// empirical CLT
// ---------------------------------------------------------------------------

CltEmpiricalReport clt_empirical(const MapSpec& map, const ObservableSpec& phi,
                                 const CltOptions& opts) {
    if (opts.n < 1000) throw invalid_input_error("clt_empirical: n must be >= 1000");
    if (opts.trials < 100) throw invalid_input_error("clt_empirical: trials must be >= 100");

    // Green-Kubo variance from the autocovariance series
    CorrelationOptions copts;
    copts.n_max = opts.sigma_lags;
    copts.dense_lags = opts.sigma_lags;
    copts.orbit_length = opts.sigma_orbit;
    copts.burn_in = opts.sigma_burn_in;
    copts.seed = opts.seed;
    copts.singular_margin = opts.singular_margin;
    const auto series = estimate_correlation(map, phi, phi, copts);

    CltEmpiricalReport report;
    report.trials = opts.trials;
    report.n = opts.n;
    report.seed = opts.seed;
    report.rng_name = CounterRng::name();
    report.phi_mean = series.phi_mean;

    double sigma2 = series.c_signed[0];
    const double var0 = series.c_signed[0];
    int cutoff = opts.sigma_lags + 1;
    for (std::size_t i = 1; i < series.lags.size(); ++i) {
        if (series.c[i] < series.se[i]) {
            cutoff = series.lags[i];
            break;
        }
        sigma2 += 2.0 * series.c_signed[i];
    }
    report.sigma2 = sigma2;
    report.sigma_truncation = cutoff;
    report.coboundary_suspect = !(sigma2 > 0.0) || sigma2 < 0.01 * var0;
    if (report.coboundary_suspect) {
        report.ks = 1.0;
        return report;
    }

    // independent trials on seeded substreams
    std::vector<double> sums(static_cast<std::size_t>(opts.trials));
    const double mean = series.phi_mean;
    for (int k = 0; k < opts.trials; ++k) {
        auto orbit = make_orbit(map, opts.seed, static_cast<std::uint64_t>(k) + 1, opts.burn_in,
                                opts.singular_margin);
        double s = 0.0;
        for (int j = 0; j < opts.n; ++j) s += phi(orbit->next()) - mean;
        sums[static_cast<std::size_t>(k)] = s / std::sqrt(static_cast<double>(opts.n));
    }
    // the sqrt(n)-amplified error of the estimated centering mean shifts every
    // sum by the same amount; remove the location nuisance with the grand mean
    double grand = 0.0;
    for (double s : sums) grand += s;
    grand /= static_cast<double>(opts.trials);
    for (double& s : sums) s -= grand;
    std::sort(sums.begin(), sums.end());
    const double sd = std::sqrt(sigma2);
    double ks = 0.0;
    for (int i = 0; i < opts.trials; ++i) {
        const double F = normal_cdf(sums[static_cast<std::size_t>(i)] / sd);
        ks = std::max(ks, std::abs(F - static_cast<double>(i) / opts.trials));
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / opts.trials - F));
    }
    report.ks = ks;
    return report;
}

std::string CltEmpiricalReport::to_json_text() const {
    nlohmann::json j;
    j["sigma2"] = sigma2;
    j["ks"] = ks;
    j["trials"] = trials;
    j["n"] = n;
    j["phi_mean"] = phi_mean;
    j["seed"] = seed;
    j["rng"] = rng_name;
    j["sigma_truncation"] = sigma_truncation;
    j["verdict"] = coboundary_suspect ? "coboundary-suspect" : (ks < 0.05 ? "pass" : "fail");
    return j.dump(2);
}

} // namespace towerlab
