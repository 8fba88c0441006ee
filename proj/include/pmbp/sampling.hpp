#pragma once

// PMBP(d,e) sampling by thinning against the two upper-bound constructions,
// and compensator-based forecasting of interval counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "convolution.hpp"
#include "errors.hpp"
#include "hawkes.hpp"
#include "impulse_response.hpp"
#include "parallel.hpp"
#include "pmbp.hpp"
#include "random.hpp"

namespace pmbp {

enum class BoundMode { UB1, UB2 };

// Everything the bounds need: grid envelopes of h, the E^c event state, and
// the E^c-driven Hawkes term a(t+).
class BoundContext {
public:
    BoundContext(const ModelParams& p, const HTables<double>& tab, double T)
        : p_(p), Ec_(split_kernel(p).Ec), state_(Ec_), T_(T), grid_(tab.grid) {
        if (T > grid_.horizon() * (1.0 + 1e-12)) throw DomainError("bound context: grid shorter than horizon");
        d_ = static_cast<std::size_t>(p.d);
        e_ = static_cast<std::size_t>(p.e);
        const std::size_t n = grid_.size();
        hbar_ = MatrixD(d_, d_);
        Hend_ = MatrixD(d_, d_);
        hsuf_.assign(d_ * d_, {});
        hcum_.assign(d_ * d_, {});
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < e_; ++j) {
                const auto& h = tab.h[i * d_ + j];
                auto& suf = hsuf_[i * d_ + j];
                suf.assign(n, 0.0);
                double m = 0.0;
                for (std::size_t q = n; q-- > 0;) suf[q] = m = std::max(m, h[q]);
                hbar_(i, j) = 1.05 * m;
                auto& cum = hcum_[i * d_ + j];
                cum.assign(n, 0.0);
                for (std::size_t q = 1; q < n; ++q) cum[q] = cum[q - 1] + h[q - 1] * grid_.step;
                Hend_(i, j) = tab.H[i * d_ + j][n - 1];
            }
        // h-hat: non-increasing envelope (suffix max of the piecewise-constant h)
        const std::size_t c = d_ - e_;
        Ghat_.resize(d_ * e_ * c);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t l = 0; l < e_; ++l)
                for (std::size_t j = e_; j < d_; ++j)
                    Ghat_[(i * e_ + l) * c + (j - e_)] = ExpChannel<double>(grid_, p.alpha(l, j), p.theta(l, j), hsuf_[i * d_ + l], false);
        counts_.assign(d_, 0);
    }

    [[nodiscard]] double horizon() const { return T_; }

    // E^c event at time t (t >= every earlier call)
    void add_event(double t, int dim) {
        if (dim < p_.e) return;
        state_.advance(t);
        state_.add(dim);
        events_.push_back({t, dim});
        ++counts_[static_cast<std::size_t>(dim)];
    }

    // componentwise bound on xi_E valid from t until the next E^c event
    std::vector<double> bound(double t, BoundMode mode) {
        state_.advance(t);
        std::vector<double> a(d_), out(d_);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = e_; j < d_; ++j) a[i] += state_.intensity_from(i, j);
        for (std::size_t i = 0; i < d_; ++i) {
            double s = p_.nu[i] + a[i];
            if (mode == BoundMode::UB1) {
                for (std::size_t l = 0; l < e_; ++l) {
                    double inner = p_.gamma[l] + T_ * p_.nu[l];
                    for (std::size_t j = e_; j < d_; ++j) inner += static_cast<double>(counts_[j]) * p_.alpha(l, j);
                    s += hbar_(i, l) * inner;
                }
            } else {
                const std::size_t q = cell(t);
                const std::size_t qr = cell_up(T_ - t);
                for (std::size_t l = 0; l < e_; ++l) {
                    s += 1.05 * hsuf_[i * d_ + l][q] * p_.gamma[l] + Hend_(i, l) * p_.nu[l];
                    s += hcum_[i * d_ + l][qr] * a[l];
                }
                const std::size_t c = d_ - e_;
                for (const auto& ev : events_)
                    for (std::size_t l = 0; l < e_; ++l)
                        s += Ghat_[(i * e_ + l) * c + (static_cast<std::size_t>(ev.dim) - e_)].conv1(t - ev.t);
            }
            out[i] = s;
        }
        return out;
    }

private:
    [[nodiscard]] std::size_t cell(double t) const {
        return std::min(grid_.P, static_cast<std::size_t>(std::max(0.0, std::floor(t / grid_.step))));
    }
    [[nodiscard]] std::size_t cell_up(double x) const {
        return std::min(grid_.P, static_cast<std::size_t>(std::max(0.0, std::ceil(x / grid_.step))));
    }

    ModelParams p_, Ec_;
    HawkesState state_;
    double T_;
    ConvGrid grid_;
    std::size_t d_ = 0, e_ = 0;
    MatrixD hbar_, Hend_;
    std::vector<std::vector<double>> hsuf_, hcum_;
    std::vector<ExpChannel<double>> Ghat_;
    std::vector<TimedEvent> events_;
    std::vector<long> counts_;
};

inline std::vector<double> pmbp_upper_bound(BoundContext& ctx, double t, BoundMode mode) { return ctx.bound(t, mode); }

struct PmbpSamplerOptions {
    long max_events = 1000000;
    double gamma_h = 1e-6;
    bool only_Ec = false;  // sample E^c dimensions only (prediction step 1)
    std::function<void(double, double, double)> observer;  // (t, bound, total intensity)
};

struct ThinningStats {
    long proposals = 0;
    long accepted = 0;
    [[nodiscard]] double acceptance_ratio() const { return proposals ? double(accepted) / double(proposals) : 0.0; }
};

namespace detail {

// Thinning on [t0, T) given prebuilt tables; `history` holds E^c events before t0
// and receives the accepted events.
inline void thin_pmbp(const ModelParams& p, const HTables<double>& tab, const ResponseTables<double>& rt,
                      EventHistory& history, double t0, double T, Rng& rng, BoundMode mode,
                      const PmbpSamplerOptions& opt, ThinningStats* stats) {
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    const std::size_t r0 = opt.only_Ec ? e : 0;
    BoundContext ctx(p, tab, T);
    EventHistory past(p.d, T);
    for (std::size_t j = e; j < d; ++j)
        for (double t : history.times[j])
            if (t < t0) past.times[j].push_back(t);
    for (const auto& ev : merge_events(past)) ctx.add_event(ev.t, ev.dim);
    PmbpEvaluator<double> eval(rt, past);
    PmbpEvaluator<double>::Values v;
    ThinningStats st;
    long total = 0;
    double t = t0;
    std::vector<double> w(d);
    for (;;) {
        const auto b = ctx.bound(t, mode);
        double B = 0.0;
        for (std::size_t i = r0; i < d; ++i) B += b[i];
        if (!(B > 0.0)) break;
        t += rng.exponential(B);
        if (!(t < T)) break;
        ++st.proposals;
        eval.at(t, true, false, v);
        double sum = 0.0;
        for (std::size_t i = r0; i < d; ++i) sum += (w[i] = std::max(0.0, v.xi[i]));
        if (opt.observer) opt.observer(t, B, sum);
        if (sum > B * (1.0 + 1e-9)) throw NumericalConsistencyError("thinning bound violated");
        const double u = rng.uniform() * B;
        if (u >= sum) continue;
        std::size_t j = r0;
        double acc = w[r0];
        while (j + 1 < d && u >= acc) acc += w[++j];
        detail::push_strict(history.times[j], t);
        t = history.times[j].back();
        if (j >= e) {
            ctx.add_event(t, static_cast<int>(j));
            eval.push_event(t, static_cast<int>(j));
        }
        ++st.accepted;
        if (++total > opt.max_events) throw ExplosionError("sample_pmbp: event cap exceeded");
    }
    if (stats) *stats = st;
}

}  // namespace detail

// Full PMBP realisation on [0, T).
inline EventHistory sample_pmbp(const ModelParams& p, double T, const ConvGrid& grid, std::uint64_t seed,
                                BoundMode mode = BoundMode::UB2, const PmbpSamplerOptions& opt = {},
                                ThinningStats* stats = nullptr) {
    p.validate();
    const auto tab = compute_h(p, grid, opt.gamma_h);
    const ResponseTables<double> rt(p, tab);
    EventHistory out(p.d, T);
    Rng rng(seed);
    detail::thin_pmbp(p, tab, rt, out, 0.0, T, rng, mode, opt, stats);
    return out;
}

// Continue a realisation on [t0, T) given E^c events before t0 (E dims start empty).
inline EventHistory continue_pmbp(const ModelParams& p, const EventHistory& observed, double t0, double T,
                                  const ConvGrid& grid, std::uint64_t seed, BoundMode mode = BoundMode::UB2,
                                  const PmbpSamplerOptions& opt = {}) {
    const auto tab = compute_h(p, grid, opt.gamma_h);
    const ResponseTables<double> rt(p, tab);
    EventHistory out(p.d, T);
    for (int j = p.e; j < p.d; ++j)
        for (double t : observed.times[static_cast<std::size_t>(j)])
            if (t < t0) out.times[static_cast<std::size_t>(j)].push_back(t);
    Rng rng(seed);
    detail::thin_pmbp(p, tab, rt, out, t0, T, rng, mode, opt, nullptr);
    return out;
}

// ---- prediction ----------------------------------------------------------------

struct CountForecast {
    std::vector<double> boundaries;          // o_0 = T_train < ... < o_m = T_test
    std::vector<std::vector<double>> mean;   // [interval][dim]
    std::vector<std::vector<double>> sd;
    int samples_used = 0;
    int samples_failed = 0;
};

namespace detail {
inline CountForecast summarise(const std::vector<double>& b, int d, const std::vector<std::vector<std::vector<double>>>& per,
                               const std::vector<char>& ok) {
    CountForecast f;
    f.boundaries = b;
    const std::size_t m = b.size() - 1;
    f.mean.assign(m, std::vector<double>(static_cast<std::size_t>(d), 0.0));
    f.sd = f.mean;
    for (std::size_t s = 0; s < per.size(); ++s) {
        if (!ok[s]) {
            ++f.samples_failed;
            continue;
        }
        ++f.samples_used;
    }
    if (f.samples_used == 0) throw ExplosionError("prediction: every sample failed");
    // two passes in sample order keep the result independent of thread count
    for (std::size_t s = 0; s < per.size(); ++s)
        if (ok[s])
            for (std::size_t k = 0; k < m; ++k)
                for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i) f.mean[k][i] += per[s][k][i];
    for (auto& r : f.mean)
        for (auto& x : r) x /= f.samples_used;
    if (f.samples_used > 1) {
        for (std::size_t s = 0; s < per.size(); ++s)
            if (ok[s])
                for (std::size_t k = 0; k < m; ++k)
                    for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i) {
                        const double dx = per[s][k][i] - f.mean[k][i];
                        f.sd[k][i] += dx * dx;
                    }
        for (auto& r : f.sd)
            for (auto& x : r) x = std::sqrt(x / (f.samples_used - 1));
    }
    return f;
}

inline void check_partition(const std::vector<double>& b, double T_train) {
    if (b.size() < 2) throw std::invalid_argument("prediction partition needs >= 2 points");
    if (b.front() != T_train) throw std::invalid_argument("prediction partition must start at T_train");
    for (std::size_t k = 1; k < b.size(); ++k)
        if (!(b[k] > b[k - 1])) throw std::invalid_argument("prediction partition must increase");
}
}  // namespace detail

// Compensator method: sample E^c continuations only, average Xi_E increments.
inline CountForecast predict_counts(const ModelParams& p, const EventHistory& observed, double T_train,
                                    const std::vector<double>& partition, int n_samples, std::uint64_t seed,
                                    const ConvGrid& grid, int threads = 1, BoundMode mode = BoundMode::UB2,
                                    double gamma_h = 1e-6) {
    p.validate();
    detail::check_partition(partition, T_train);
    const double T_test = partition.back();
    if (!(T_test > T_train)) throw std::invalid_argument("T_test must exceed T_train");
    const auto tab = compute_h(p, grid, gamma_h);
    const ResponseTables<double> rt(p, tab);
    const auto d = static_cast<std::size_t>(p.d);
    const std::size_t m = partition.size() - 1;
    std::vector<std::vector<std::vector<double>>> per(static_cast<std::size_t>(n_samples),
                                                       std::vector<std::vector<double>>(m, std::vector<double>(d)));
    std::vector<char> ok(static_cast<std::size_t>(n_samples), 1);
    PmbpSamplerOptions opt;
    opt.only_Ec = true;
    opt.gamma_h = gamma_h;
    parallel_for(static_cast<std::size_t>(n_samples), threads, [&](std::size_t s) {
        try {
            EventHistory h(p.d, T_test);
            for (std::size_t j = static_cast<std::size_t>(p.e); j < d; ++j)
                for (double t : observed.times[j])
                    if (t < T_train) h.times[j].push_back(t);
            Rng rng(derive_seed(seed, s));
            if (p.e < p.d) detail::thin_pmbp(p, tab, rt, h, T_train, T_test, rng, mode, opt, nullptr);
            PmbpEvaluator<double> ev(rt, h);
            PmbpEvaluator<double>::Values v, prev;
            ev.at(partition[0], false, true, prev);
            for (std::size_t k = 0; k < m; ++k) {
                ev.at(partition[k + 1], false, true, v);
                for (std::size_t i = 0; i < d; ++i) per[s][k][i] = v.Xi[i] - prev.Xi[i];
                prev = v;
            }
        } catch (const ExplosionError&) {
            ok[s] = 0;
        }
    });
    return detail::summarise(partition, p.d, per, ok);
}

// Reference estimator: sample every dimension forward and count events.
inline CountForecast predict_counts_by_sampling(const ModelParams& p, const EventHistory& observed, double T_train,
                                                const std::vector<double>& partition, int n_samples,
                                                std::uint64_t seed, const ConvGrid& grid, int threads = 1,
                                                BoundMode mode = BoundMode::UB2, double gamma_h = 1e-6) {
    p.validate();
    detail::check_partition(partition, T_train);
    const double T_test = partition.back();
    const auto tab = compute_h(p, grid, gamma_h);
    const ResponseTables<double> rt(p, tab);
    const auto d = static_cast<std::size_t>(p.d);
    const std::size_t m = partition.size() - 1;
    std::vector<std::vector<std::vector<double>>> per(static_cast<std::size_t>(n_samples),
                                                       std::vector<std::vector<double>>(m, std::vector<double>(d)));
    std::vector<char> ok(static_cast<std::size_t>(n_samples), 1);
    PmbpSamplerOptions opt;
    opt.gamma_h = gamma_h;
    parallel_for(static_cast<std::size_t>(n_samples), threads, [&](std::size_t s) {
        try {
            EventHistory h(p.d, T_test);
            for (std::size_t j = static_cast<std::size_t>(p.e); j < d; ++j)
                for (double t : observed.times[j])
                    if (t < T_train) h.times[j].push_back(t);
            Rng rng(derive_seed(seed, s));
            detail::thin_pmbp(p, tab, rt, h, T_train, T_test, rng, mode, opt, nullptr);
            for (std::size_t i = 0; i < d; ++i) {
                for (double t : h.times[i]) {
                    if (t < T_train) continue;
                    const auto it = std::upper_bound(partition.begin(), partition.end(), t);
                    per[s][static_cast<std::size_t>(it - partition.begin()) - 1][i] += 1.0;
                }
            }
        } catch (const ExplosionError&) {
            ok[s] = 0;
        }
    });
    return detail::summarise(partition, p.d, per, ok);
}

}  // namespace pmbp
