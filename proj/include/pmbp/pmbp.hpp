#pragma once

// PMBP(d,e) conditional intensity xi_E and compensator Xi_E.
//
// Two evaluation paths:
//  * xi_eval / compensator_eval: grid-only, O(P^2), a direct transcription of
//    the outer convolution with H_E.
//  * ResponseTables + PmbpEvaluator: per-event response functions
//      G = h_E * phi_{E^c},  GI = h_E * Phi_{E^c},  H2 = integral of H_E,
//    so that xi_E and Xi_E at an arbitrary time are finite sums over observed
//    events. Each response is the same quadrature rule evaluated with the
//    target appended to the partition. Used by likelihood, sampling, prediction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "convolution.hpp"
#include "errors.hpp"
#include "hawkes.hpp"
#include "impulse_response.hpp"
#include "model.hpp"
#include "random.hpp"

namespace pmbp {

namespace detail {

// a and A on the grid from E^c events (strictly before each grid point)
inline void hawkes_part_on_grid(const ModelParams& p, const EventHistory& obs, const ConvGrid& grid,
                                std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& A) {
    const auto d = static_cast<std::size_t>(p.d);
    a.assign(grid.size(), std::vector<double>(d, 0.0));
    A = a;
    HawkesState st(p);
    std::vector<TimedEvent> ev;
    for (const auto& x : merge_events(obs))
        if (x.dim >= p.e) ev.push_back(x);
    std::size_t k = 0;
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const double t = grid.time(q);
        while (k < ev.size() && ev[k].t < t) {
            st.advance(ev[k].t);
            st.add(ev[k].dim);
            ++k;
        }
        st.advance(t);
        for (std::size_t i = 0; i < d; ++i) {
            a[q][i] = st.intensity(i) - p.nu[i];
            A[q][i] = st.compensator(i) - p.nu[i] * t - (t > 0.0 ? p.gamma[i] : 0.0);
        }
    }
}

inline void check_tables(const ModelParams& p, const EventHistory& obs, const HTables<double>& tab,
                         const ConvGrid& grid) {
    if (!(tab.grid == grid)) throw DomainError("tables were built on a different grid");
    if (tab.d != p.d || tab.e != p.e) throw DimensionError("tables built for a different (d, e)");
    if (obs.dims() != p.d) throw DimensionError("observed history dimension mismatch");
}

}  // namespace detail

// xi_E on every grid point; rows indexed by grid point
inline std::vector<std::vector<double>> xi_eval(const ModelParams& p, const EventHistory& observed,
                                                const HTables<double>& tab, const ConvGrid& grid) {
    detail::check_tables(p, observed, tab, grid);
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    std::vector<std::vector<double>> a, A;
    detail::hawkes_part_on_grid(p, observed, grid, a, A);
    std::vector<std::vector<double>> out(grid.size(), std::vector<double>(d));
    for (std::size_t q = 0; q < grid.size(); ++q) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = p.nu[i] + a[q][i];
            for (std::size_t j = 0; j < e; ++j) {
                const auto& H = tab.H[i * d + j];
                s += tab.h[i * d + j][q] * p.gamma[j];
                double c = 0.0;
                for (std::size_t r = 0; r < q; ++r) c += (H[q - r] - H[q - r - 1]) * (p.nu[j] + a[r][j]);
                s += c;
            }
            out[q][i] = s;
        }
    }
    return out;
}

inline std::vector<std::vector<double>> compensator_eval(const ModelParams& p, const EventHistory& observed,
                                                         const HTables<double>& tab, const ConvGrid& grid) {
    detail::check_tables(p, observed, tab, grid);
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    std::vector<std::vector<double>> a, A;
    detail::hawkes_part_on_grid(p, observed, grid, a, A);
    std::vector<std::vector<double>> out(grid.size(), std::vector<double>(d));
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const double t = grid.time(q);
        for (std::size_t i = 0; i < d; ++i) {
            double s = (q > 0 ? p.gamma[i] : 0.0) + p.nu[i] * t + A[q][i];
            for (std::size_t j = 0; j < e; ++j) {
                const auto& H = tab.H[i * d + j];
                s += H[q] * p.gamma[j];
                double c = 0.0;
                for (std::size_t r = 0; r < q; ++r) c += (H[q - r] - H[q - r - 1]) * (p.nu[j] * grid.time(r) + A[r][j]);
                s += c;
            }
            out[q][i] = s;
        }
    }
    return out;
}

// ---- response tables (off-grid evaluation) --------------------------------

template <class S>
class ResponseTables {
public:
    ResponseTables(const BasicModelParams<S>& p, const HTables<S>& tab) : p_(p), grid_(tab.grid) {
        d_ = static_cast<std::size_t>(p.d);
        e_ = static_cast<std::size_t>(p.e);
        bool need_h = false;
        for (std::size_t j = 0; j < e_; ++j) need_h = need_h || value_of(p.gamma[j]) != 0.0;
        const std::size_t c = d_ - e_;
        Hch_.resize(d_ * e_ * e_);
        if (need_h) hch_.resize(d_ * e_ * e_);
        Gch_.resize(d_ * e_ * c);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t l = 0; l < e_; ++l) {
                for (std::size_t j = 0; j < e_; ++j) {
                    Hch_[(i * e_ + l) * e_ + j] = ExpChannel<S>(grid_, p.alpha(i, l), p.theta(i, l), tab.h[l * d_ + j], true);
                    if (need_h)
                        hch_[(i * e_ + l) * e_ + j] =
                            ExpChannel<S>(grid_, p.alpha(i, l), p.theta(i, l), tab.hprev[l * d_ + j], false);
                }
                for (std::size_t j = e_; j < d_; ++j)
                    Gch_[(i * e_ + l) * c + (j - e_)] =
                        ExpChannel<S>(grid_, p.alpha(l, j), p.theta(l, j), tab.h[i * d_ + l], true);
            }
    }

    [[nodiscard]] const BasicModelParams<S>& params() const { return p_; }
    [[nodiscard]] const ConvGrid& grid() const { return grid_; }

    // h^{ij}(t), j in E
    [[nodiscard]] S h(std::size_t i, std::size_t j, double t) const {
        S s = kernel::phi(p_.alpha(i, j), p_.theta(i, j), t);
        if (hch_.empty()) throw std::logic_error("h(t) tables not built (gamma_E = 0)");
        for (std::size_t l = 0; l < e_; ++l) s += hch_[(i * e_ + l) * e_ + j].conv1(t);
        return s;
    }
    [[nodiscard]] S H(std::size_t i, std::size_t j, double t) const {
        S s = kernel::Phi(p_.alpha(i, j), p_.theta(i, j), t);
        for (std::size_t l = 0; l < e_; ++l) s += Hch_[(i * e_ + l) * e_ + j].conv2(t);
        return s;
    }
    [[nodiscard]] S H2(std::size_t i, std::size_t j, double t) const {
        S s = kernel::Phi2(p_.alpha(i, j), p_.theta(i, j), t);
        for (std::size_t l = 0; l < e_; ++l) s += Hch_[(i * e_ + l) * e_ + j].conv3(t);
        return s;
    }
    // G^{ij}(u) = (h_E * phi_{E^c})^{ij}(u), j in E^c
    [[nodiscard]] S G(std::size_t i, std::size_t j, double u) const {
        S s(0.0);
        const std::size_t c = d_ - e_;
        for (std::size_t l = 0; l < e_; ++l) s += Gch_[(i * e_ + l) * c + (j - e_)].conv1(u);
        return s;
    }
    [[nodiscard]] S GI(std::size_t i, std::size_t j, double u) const {
        S s(0.0);
        const std::size_t c = d_ - e_;
        for (std::size_t l = 0; l < e_; ++l) s += Gch_[(i * e_ + l) * c + (j - e_)].conv2(u);
        return s;
    }

private:
    BasicModelParams<S> p_;
    ConvGrid grid_;
    std::size_t d_ = 0, e_ = 0;
    std::vector<ExpChannel<S>> Hch_, hch_, Gch_;
};

// Evaluates xi_E / Xi_E at ascending query times for a fixed E^c history.
template <class S>
class PmbpEvaluator {
public:
    PmbpEvaluator(const ResponseTables<S>& rt, const EventHistory& observed) : rt_(&rt) {
        const auto& p = rt.params();
        d_ = static_cast<std::size_t>(p.d);
        e_ = static_cast<std::size_t>(p.e);
        if (observed.dims() != p.d) throw DimensionError("observed history dimension mismatch");
        for (const auto& x : merge_events(observed))
            if (x.dim >= p.e) ev_.push_back(x);
        R_.assign(d_ * d_, S(0.0));
        n_.assign(d_, 0);
    }

    struct Values {
        std::vector<S> xi, Xi;
    };

    // append an E^c event (sampling); it counts for queries strictly after t
    void push_event(double t, int dim) {
        if (dim < static_cast<int>(e_)) return;
        if (!ev_.empty() && t < ev_.back().t) throw DomainError("push_event: events must be appended in order");
        ev_.push_back({t, dim});
    }

    // query times must be non-decreasing across calls; events strictly before t count
    void at(double t, bool want_xi, bool want_Xi, Values& out) {
        using std::exp;
        if (t < now_) throw DomainError("PmbpEvaluator: queries must be non-decreasing");
        if (t > rt_->grid().horizon() * (1.0 + 1e-12) + 1e-12) throw DomainError("query beyond grid horizon");
        const auto& p = rt_->params();
        while (next_ < ev_.size() && ev_[next_].t < t) {
            advance(ev_[next_].t);
            const auto j = static_cast<std::size_t>(ev_[next_].dim);
            for (std::size_t i = 0; i < d_; ++i) R_[i * d_ + j] += 1.0;
            ++n_[j];
            ++next_;
        }
        advance(t);
        out.xi.assign(want_xi ? d_ : 0, S(0.0));
        out.Xi.assign(want_Xi ? d_ : 0, S(0.0));
        for (std::size_t i = 0; i < d_; ++i) {
            if (want_xi) {
                S s = p.nu[i];
                for (std::size_t j = e_; j < d_; ++j) s += p.alpha(i, j) * p.theta(i, j) * R_[i * d_ + j];
                for (std::size_t j = 0; j < e_; ++j) {
                    if (value_of(p.gamma[j]) != 0.0) s += rt_->h(i, j, t) * p.gamma[j];
                    s += rt_->H(i, j, t) * p.nu[j];
                }
                out.xi[i] = s;
            }
            if (want_Xi) {
                S s = p.nu[i] * t;
                if (t > 0.0) s += p.gamma[i];
                for (std::size_t j = e_; j < d_; ++j)
                    s += p.alpha(i, j) * (static_cast<double>(n_[j]) - R_[i * d_ + j]);
                for (std::size_t j = 0; j < e_; ++j) {
                    s += rt_->H(i, j, t) * p.gamma[j];
                    s += rt_->H2(i, j, t) * p.nu[j];
                }
                out.Xi[i] = s;
            }
        }
        if (e_ > 0)
            for (std::size_t k = 0; k < next_; ++k) {
                const double u = t - ev_[k].t;
                const auto j = static_cast<std::size_t>(ev_[k].dim);
                for (std::size_t i = 0; i < d_; ++i) {
                    if (want_xi) out.xi[i] += rt_->G(i, j, u);
                    if (want_Xi) out.Xi[i] += rt_->GI(i, j, u);
                }
            }
    }

private:
    void advance(double t) {
        using std::exp;
        const double dt = t - now_;
        if (dt > 0.0) {
            const auto& p = rt_->params();
            for (std::size_t i = 0; i < d_; ++i)
                for (std::size_t j = e_; j < d_; ++j) R_[i * d_ + j] *= exp(-p.theta(i, j) * dt);
        }
        now_ = t;
    }

    const ResponseTables<S>* rt_;
    std::size_t d_ = 0, e_ = 0;
    std::vector<TimedEvent> ev_;
    std::size_t next_ = 0;
    std::vector<S> R_;
    std::vector<long> n_;
    double now_ = 0.0;
};

// convenience: xi and Xi at arbitrary ascending times
inline void pmbp_evaluate(const ModelParams& p, const EventHistory& observed, const std::vector<double>& times,
                          const ConvGrid& grid, double gamma_h, std::vector<std::vector<double>>* xi,
                          std::vector<std::vector<double>>* Xi) {
    const auto tab = compute_h(p, grid, gamma_h);
    const ResponseTables<double> rt(p, tab);
    PmbpEvaluator<double> ev(rt, observed);
    PmbpEvaluator<double>::Values v;
    if (xi) xi->clear();
    if (Xi) Xi->clear();
    for (double t : times) {
        ev.at(t, xi != nullptr, Xi != nullptr, v);
        if (xi) xi->push_back(v.xi);
        if (Xi) Xi->push_back(v.Xi);
    }
}

// ---- closed form for PMBP(2,1) ---------------------------------------------

struct ClosedForm21 {
    double xi1 = 0, xi2 = 0, Xi1 = 0, Xi2 = 0;
};

namespace detail {
inline bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }
// X(p,q,u) = int_0^u e^{p(u-v)} e^{qv} dv
inline double xconv(double p, double q, double u) {
    if (near(p, q)) return u * std::exp(p * u);
    return (std::exp(p * u) - std::exp(q * u)) / (p - q);
}
// J(p,u) = int_0^u e^{pv} dv
inline double jint(double p, double u) {
    if (near(p, 0.0)) return u;
    return std::expm1(p * u) / p;
}
// Y(p,q,u) = int_0^u X(p,q,v) dv
inline double yint(double p, double q, double u) {
    if (near(p, q)) {
        if (near(p, 0.0)) return 0.5 * u * u;
        return (std::exp(p * u) * (p * u - 1.0) + 1.0) / (p * p);
    }
    return (jint(p, u) - jint(q, u)) / (p - q);
}
}  // namespace detail

// Exact xi and Xi for d=2, e=1 with exponential kernels; dim 1 (index 1) events given.
inline ClosedForm21 closed_form_pmbp21(const ModelParams& p, const std::vector<double>& history2, double t) {
    if (p.d != 2 || p.e != 1) throw DimensionError("closed_form_pmbp21 needs d=2, e=1");
    using detail::jint;
    using detail::xconv;
    using detail::yint;
    const double a11 = p.alpha(0, 0) * p.theta(0, 0), k12 = p.alpha(0, 1) * p.theta(0, 1);
    const double e21 = p.alpha(1, 0) * p.theta(1, 0), a22 = p.alpha(1, 1) * p.theta(1, 1);
    const double th12 = p.theta(0, 1), th21 = p.theta(1, 0), th22 = p.theta(1, 1);
    const double c = (p.alpha(0, 0) - 1.0) * p.theta(0, 0);
    if (detail::near(c, 0.0)) throw DegenerateParameterError("alpha^{11} = 1 has no closed form here");
    if (k12 != 0.0 && detail::near(c + th12, 0.0)) throw DegenerateParameterError("(alpha^{11}-1) theta^{11} + theta^{12} = 0");
    const double nu1 = p.nu[0], nu2 = p.nu[1], g1 = p.gamma[0], g2 = p.gamma[1];

    // xi^1 = C0 + Ce e^{c t} + sum_k [K1 e^{-th12 u_k} + K2 e^{c u_k}]
    const double C0 = nu1 * (1.0 - a11 / c);
    const double Ce = nu1 * a11 / c + g1 * a11;
    const double K1 = k12 == 0.0 ? 0.0 : k12 * (1.0 - a11 / (c + th12));
    const double K2 = k12 == 0.0 ? 0.0 : a11 * k12 / (c + th12);

    ClosedForm21 r;
    r.xi1 = C0 + Ce * std::exp(c * t);
    r.Xi1 = (t > 0 ? g1 : 0.0) + C0 * t + Ce * jint(c, t);
    r.xi2 = nu2 + e21 * (C0 * xconv(-th21, 0.0, t) + Ce * xconv(-th21, c, t)) + g1 * e21 * std::exp(-th21 * t);
    r.Xi2 = (t > 0 ? g2 : 0.0) + nu2 * t + e21 * (C0 * yint(-th21, 0.0, t) + Ce * yint(-th21, c, t)) +
            g1 * p.alpha(1, 0) * -std::expm1(-th21 * t);
    for (double tk : history2) {
        if (!(tk < t)) continue;
        const double u = t - tk;
        r.xi1 += K1 * std::exp(-th12 * u) + K2 * std::exp(c * u);
        r.Xi1 += K1 * jint(-th12, u) + K2 * jint(c, u);
        r.xi2 += a22 * std::exp(-th22 * u) + e21 * (K1 * xconv(-th21, -th12, u) + K2 * xconv(-th21, c, u));
        r.Xi2 += p.alpha(1, 1) * -std::expm1(-th22 * u) + e21 * (K1 * yint(-th21, -th12, u) + K2 * yint(-th21, c, u));
    }
    return r;
}

// ---- Monte Carlo oracle ----------------------------------------------------

struct MonteCarloEstimate {
    std::vector<std::vector<double>> mean;  // per query time, length d
    std::vector<std::vector<double>> se;
};

// average of the full Hawkes intensity over conditional E-histories
inline MonteCarloEstimate xi_monte_carlo(const ModelParams& p, const EventHistory& observed,
                                         const std::vector<double>& times, int n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    const auto d = static_cast<std::size_t>(p.d);
    const std::size_t m = times.size();
    // Welford running moments: constant samples give exactly zero spread
    std::vector<std::vector<double>> mean(m, std::vector<double>(d, 0.0)), m2 = mean;
    double tmax = observed.horizon;
    for (double t : times) tmax = std::max(tmax, std::nextafter(t, INFINITY));
    for (int s = 0; s < n_samples; ++s) {
        const auto full = sample_conditional_hawkes(p, observed, tmax, derive_seed(seed, static_cast<std::uint64_t>(s)));
        // walk query times in order with a single accumulator state
        std::vector<std::size_t> order(m);
        for (std::size_t k = 0; k < m; ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
        const auto ev = merge_events(full);
        HawkesState st(p);
        std::size_t k = 0;
        for (std::size_t q : order) {
            while (k < ev.size() && ev[k].t < times[q]) {
                st.advance(ev[k].t);
                st.add(ev[k].dim);
                ++k;
            }
            st.advance(times[q]);
            for (std::size_t i = 0; i < d; ++i) {
                const double lam = st.intensity(i);
                const double dx = lam - mean[q][i];
                mean[q][i] += dx / static_cast<double>(s + 1);
                m2[q][i] += dx * (lam - mean[q][i]);
            }
        }
    }
    MonteCarloEstimate out;
    out.mean = mean;
    out.se.assign(m, std::vector<double>(d, 0.0));
    const double n = n_samples;
    if (n_samples > 1)
        for (std::size_t q = 0; q < m; ++q)
            for (std::size_t i = 0; i < d; ++i) out.se[q][i] = std::sqrt(m2[q][i] / (n - 1.0) / n);
    return out;
}

}  // namespace pmbp
