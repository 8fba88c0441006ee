#pragma once

// Goodness of fit: time-rescaled residuals (KS vs Exp(1)) for point-process
// dimensions; Anscombe residuals (D'Agostino K^2) and fit score for counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "errors.hpp"
#include "fitting.hpp"
#include "pmbp.hpp"
#include "random.hpp"

namespace pmbp {

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

struct NormalityResult {
    double statistic = 0.0;  // K^2
    double p_value = 1.0;
};

// Kolmogorov distribution tail Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2)
inline double kolmogorov_tail(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

// one-sample KS against Exp(1); Stephens' small-sample scaling of the asymptotic law
inline KsResult ks_exponential(std::vector<double> x) {
    if (x.empty()) throw InsufficientDataError("KS test needs at least one residual");
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double D = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double F = x[k] > 0.0 ? -std::expm1(-x[k]) : 0.0;
        D = std::max({D, (static_cast<double>(k) + 1.0) / n - F, F - static_cast<double>(k) / n});
    }
    const double sn = std::sqrt(n);
    return {D, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * D)};
}

// D'Agostino-Pearson omnibus test: skewness and kurtosis z-scores combined into K^2 ~ chi2(2)
inline NormalityResult dagostino_k2(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    if (x.size() < 8) throw InsufficientDataError("skew-kurtosis test needs at least 8 values");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean, d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 1e-300)) return {0.0, 1.0};
    const double b1 = m3 / std::pow(m2, 1.5);
    const double b2 = m4 / (m2 * m2);

    const double y = b1 * std::sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)));
    const double beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2) * (n + 5) * (n + 7) * (n + 9));
    const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
    const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
    const double alpha = std::sqrt(2.0 / (w2 - 1.0));
    const double ya = y / alpha;
    const double z1 = delta * std::log(ya + std::sqrt(ya * ya + 1.0));

    const double eb2 = 3.0 * (n - 1) / (n + 1);
    const double vb2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1) * (n + 3) * (n + 5));
    const double xk = (b2 - eb2) / std::sqrt(vb2);
    const double sb1 = 6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) * std::sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)));
    const double A = 6.0 + 8.0 / sb1 * (2.0 / sb1 + std::sqrt(1.0 + 4.0 / (sb1 * sb1)));
    const double t = (1.0 - 2.0 / A) / (1.0 + xk * std::sqrt(2.0 / (A - 4.0)));
    const double z2 = ((1.0 - 2.0 / (9.0 * A)) - std::cbrt(t)) / std::sqrt(2.0 / (9.0 * A));

    const double k2 = z1 * z1 + z2 * z2;
    return {k2, std::exp(-0.5 * k2)};
}

struct TimeRescalingResult {
    std::vector<double> residuals;
    KsResult ks;
};

// residuals r_k = Xi(t_{k+1}) - Xi(t_k) from the compensator at consecutive events
inline TimeRescalingResult gof_time_rescaling(const std::vector<double>& Xi_at_events) {
    if (Xi_at_events.size() < 2) throw InsufficientDataError("time rescaling needs at least 2 events");
    TimeRescalingResult r;
    for (std::size_t k = 1; k < Xi_at_events.size(); ++k) r.residuals.push_back(Xi_at_events[k] - Xi_at_events[k - 1]);
    r.ks = ks_exponential(r.residuals);
    return r;
}

struct AnscombeResult {
    std::vector<double> residuals;
    NormalityResult sk;
};

inline AnscombeResult gof_anscombe(const std::vector<long>& counts, const std::vector<double>& increments) {
    if (counts.size() != increments.size()) throw DimensionError("anscombe: counts and increments differ in length");
    AnscombeResult r;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (!(increments[k] > 0.0)) throw NumericalConsistencyError("anscombe: non-positive compensator increment");
        r.residuals.push_back(2.0 * (std::sqrt(static_cast<double>(counts[k]) + 0.375) - std::sqrt(increments[k] + 0.375)));
    }
    r.sk = dagostino_k2(r.residuals);
    return r;
}

// share of windows whose count lies inside the central 95% band of Poisson(increment) draws
inline double fit_score(const std::vector<long>& counts, const std::vector<double>& increments, int n_draws,
                        std::uint64_t seed) {
    if (counts.size() != increments.size()) throw DimensionError("fit_score: counts and increments differ in length");
    if (counts.empty()) return 0.0;
    if (n_draws < 1) throw std::invalid_argument("fit_score: n_draws must be positive");
    int hit = 0;
    std::vector<double> draws(static_cast<std::size_t>(n_draws));
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (increments[k] < 0.0) throw NumericalConsistencyError("fit_score: negative compensator increment");
        Rng rng(derive_seed(seed, k));
        if (increments[k] == 0.0) {
            std::fill(draws.begin(), draws.end(), 0.0);
        } else {
            std::poisson_distribution<long> pois(increments[k]);
            for (auto& v : draws) v = static_cast<double>(pois(rng.engine()));
        }
        const double lo = quantile(draws, 0.025), hi = quantile(draws, 0.975);
        const auto c = static_cast<double>(counts[k]);
        if (c >= lo && c <= hi) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(counts.size());
}

struct DimGof {
    int dim = 0;
    std::string kind;  // time-rescaling | anscombe
    double statistic = 0.0;
    double p_value = 1.0;
    double fit_score = -1.0;  // anscombe dims only
    std::size_t n = 0;        // residual count
};

struct GofReport {
    std::vector<DimGof> dims;
};

// diagnostics for one dataset under params: KS for E^c dims, Anscombe + fit score for E dims
inline GofReport gof_report(const ModelParams& p, const Dataset& data, const ConvGrid& grid, int n_draws,
                            std::uint64_t seed, double gamma_h = 1e-6) {
    data.validate(p.d, p.e);
    const auto tab = compute_h(p, grid, gamma_h);
    const ResponseTables<double> rt(p, tab);
    // every query time in order, then pick out the per-dimension values
    std::vector<double> q;
    for (int j = p.e; j < p.d; ++j)
        for (double t : data.histories.times[static_cast<std::size_t>(j)]) q.push_back(t);
    for (const auto& c : data.counts) q.insert(q.end(), c.boundaries.begin(), c.boundaries.end());
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());
    PmbpEvaluator<double> ev(rt, data.histories);
    PmbpEvaluator<double>::Values v;
    std::vector<std::vector<double>> Xi(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
        ev.at(q[k], false, true, v);
        Xi[k] = v.Xi;
    }
    auto Xi_at = [&](double t, int j) {
        const auto k = static_cast<std::size_t>(std::lower_bound(q.begin(), q.end(), t) - q.begin());
        return Xi[k][static_cast<std::size_t>(j)];
    };
    GofReport rep;
    for (const auto& c : data.counts) {
        std::vector<double> inc;
        for (std::size_t k = 0; k + 1 < c.boundaries.size(); ++k)
            inc.push_back(Xi_at(c.boundaries[k + 1], c.dim) - Xi_at(c.boundaries[k], c.dim));
        const auto a = gof_anscombe(c.counts, inc);
        rep.dims.push_back({c.dim, "anscombe", a.sk.statistic, a.sk.p_value,
                            fit_score(c.counts, inc, n_draws, derive_seed(seed, static_cast<std::uint64_t>(c.dim))),
                            a.residuals.size()});
    }
    for (int j = p.e; j < p.d; ++j) {
        std::vector<double> x;
        for (double t : data.histories.times[static_cast<std::size_t>(j)]) x.push_back(Xi_at(t, j));
        const auto r = gof_time_rescaling(x);
        rep.dims.push_back({j, "time-rescaling", r.ks.statistic, r.ks.p_value, -1.0, r.residuals.size()});
    }
    return rep;
}

}  // namespace pmbp
