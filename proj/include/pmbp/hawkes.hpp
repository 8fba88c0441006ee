#pragma once

// Multivariate Hawkes process with exponential kernels: intensity,
// compensator, point-process NLL and thinning samplers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "model.hpp"
#include "random.hpp"

namespace pmbp {

struct TimedEvent {
    double t;
    int dim;
};

inline std::vector<TimedEvent> merge_events(const EventHistory& h) {
    std::vector<TimedEvent> ev;
    ev.reserve(h.total());
    for (int j = 0; j < h.dims(); ++j)
        for (double t : h.times[static_cast<std::size_t>(j)]) ev.push_back({t, j});
    std::sort(ev.begin(), ev.end(), [](const TimedEvent& a, const TimedEvent& b) {
        return a.t < b.t || (a.t == b.t && a.dim < b.dim);
    });
    return ev;
}

// Decaying accumulators R(i,j) = sum_{t_k^j already added} exp(-theta(i,j)(now - t_k)).
// Intensity and compensator both follow from R and the per-source counts.
class HawkesState {
public:
    explicit HawkesState(const ModelParams& p)
        : p_(&p), d_(static_cast<std::size_t>(p.d)), R_(d_ * d_, 0.0), n_(d_, 0) {}

    [[nodiscard]] double now() const { return now_; }

    void advance(double t) {
        if (t < now_) throw DomainError("HawkesState: time went backwards");
        const double dt = t - now_;
        if (dt > 0.0)
            for (std::size_t i = 0; i < d_; ++i)
                for (std::size_t j = 0; j < d_; ++j) R_[i * d_ + j] *= std::exp(-p_->theta(i, j) * dt);
        now_ = t;
    }

    // event in dimension j at the current time
    void add(int j) {
        const auto uj = static_cast<std::size_t>(j);
        for (std::size_t i = 0; i < d_; ++i) R_[i * d_ + uj] += 1.0;
        ++n_[uj];
    }

    // lambda^i(now) counting only the events added so far; restrict sources by mask if given
    [[nodiscard]] double intensity(std::size_t i) const {
        double s = p_->nu[i];
        for (std::size_t j = 0; j < d_; ++j) s += p_->alpha(i, j) * p_->theta(i, j) * R_[i * d_ + j];
        return s;
    }
    [[nodiscard]] double intensity_from(std::size_t i, std::size_t j) const {
        return p_->alpha(i, j) * p_->theta(i, j) * R_[i * d_ + j];
    }

    [[nodiscard]] double compensator(std::size_t i) const {
        double s = (now_ > 0.0 ? p_->gamma[i] : 0.0) + p_->nu[i] * now_;
        for (std::size_t j = 0; j < d_; ++j)
            s += p_->alpha(i, j) * (static_cast<double>(n_[j]) - R_[i * d_ + j]);
        return s;
    }

private:
    const ModelParams* p_;
    std::size_t d_;
    std::vector<double> R_;
    std::vector<long> n_;
    double now_ = 0.0;
};

namespace detail {
// state with every event strictly before t added, advanced to t
inline HawkesState state_at(const ModelParams& p, const EventHistory& h, double t) {
    if (h.dims() != p.d) throw DimensionError("history dimension mismatch");
    HawkesState st(p);
    for (const auto& ev : merge_events(h)) {
        if (!(ev.t < t)) break;
        st.advance(ev.t);
        st.add(ev.dim);
    }
    st.advance(t);
    return st;
}
}  // namespace detail

inline std::vector<double> hawkes_intensity(const ModelParams& p, const EventHistory& h, double t) {
    if (t < 0.0) throw DomainError("hawkes_intensity: t < 0");
    const auto st = detail::state_at(p, h, t);
    std::vector<double> out(static_cast<std::size_t>(p.d));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = st.intensity(i);
    return out;
}

inline std::vector<double> hawkes_compensator(const ModelParams& p, const EventHistory& h, double t) {
    if (t < 0.0) throw DomainError("hawkes_compensator: t < 0");
    const auto st = detail::state_at(p, h, t);
    std::vector<double> out(static_cast<std::size_t>(p.d));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = st.compensator(i);
    return out;
}

// negative log-likelihood over [0, T)
inline double pp_loglik(const ModelParams& p, const EventHistory& h, double T) {
    if (h.dims() != p.d) throw DimensionError("history dimension mismatch");
    const auto ev = merge_events(h);
    HawkesState st(p);
    double nll = 0.0;
    std::size_t k = 0;
    while (k < ev.size()) {
        if (!(ev[k].t < T)) throw std::invalid_argument("pp_loglik: event at or beyond T");
        st.advance(ev[k].t);
        // simultaneous events do not excite each other
        std::size_t k2 = k;
        while (k2 < ev.size() && ev[k2].t == ev[k].t) {
            const double lam = st.intensity(static_cast<std::size_t>(ev[k2].dim));
            if (!(lam > 0.0)) throw EvaluationError("non-positive intensity at an event");
            nll -= std::log(lam);
            ++k2;
        }
        for (; k < k2; ++k) st.add(ev[k].dim);
    }
    st.advance(T);
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.d); ++i) nll += st.compensator(i);
    return nll;
}

struct ThinningState {
    double t = 0.0;
    std::vector<long> accepted;
    double bound = 0.0;
    long proposals = 0;
};

struct SamplerOptions {
    long max_events = 1000000;
    // called at every proposal with (t, bound, total intensity); for property tests
    std::function<void(double, double, double)> observer;
};

namespace detail {
inline void push_strict(std::vector<double>& v, double t) {
    if (!v.empty() && !(t > v.back())) t = std::nextafter(v.back(), INFINITY);
    v.push_back(t);
}
}  // namespace detail

// Ogata thinning. gamma is never sampled (it is deterministic mass at 0).
inline EventHistory sample_hawkes(const ModelParams& p, double T, std::uint64_t seed,
                                  const SamplerOptions& opt = {}) {
    p.validate();
    if (!(T > 0.0)) throw std::invalid_argument("sample_hawkes: T must be positive");
    const auto d = static_cast<std::size_t>(p.d);
    EventHistory out(p.d, T);
    Rng rng(seed);
    HawkesState st(p);
    ThinningState ts;
    ts.accepted.assign(d, 0);
    long total = 0;
    std::vector<double> lam(d);
    for (;;) {
        double bound = 0.0;
        for (std::size_t i = 0; i < d; ++i) bound += st.intensity(i);
        ts.bound = bound;
        if (!(bound > 0.0)) break;
        const double t = st.now() + rng.exponential(bound);
        if (!(t < T)) break;
        st.advance(t);
        ++ts.proposals;
        double sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            lam[i] = st.intensity(i);
            sum += lam[i];
        }
        if (opt.observer) opt.observer(t, bound, sum);
        const double u = rng.uniform() * bound;
        if (u >= sum) continue;
        std::size_t j = 0;
        double acc = lam[0];
        while (j + 1 < d && u >= acc) acc += lam[++j];
        st.add(static_cast<int>(j));
        detail::push_strict(out.times[j], t);
        ++ts.accepted[j];
        if (++total > opt.max_events) throw ExplosionError("sample_hawkes: event cap exceeded");
    }
    return out;
}

// Sample E-dimension histories given fixed observed E^c histories on [0, T).
inline EventHistory sample_conditional_hawkes(const ModelParams& p, const EventHistory& observed, double T,
                                              std::uint64_t seed, const SamplerOptions& opt = {}) {
    p.validate();
    if (observed.dims() != p.d) throw DimensionError("observed history dimension mismatch");
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    for (std::size_t j = e; j < d; ++j)
        for (double t : observed.times[j])
            if (!(t < T)) throw std::invalid_argument("observed event at or beyond T");

    // constant part of the bound: nu^i + sum_{j in E^c} |H^j_T| phi^{ij}(0)
    std::vector<double> base(e, 0.0);
    for (std::size_t i = 0; i < e; ++i) {
        base[i] = p.nu[i];
        for (std::size_t j = e; j < d; ++j)
            base[i] += static_cast<double>(observed.times[j].size()) * p.alpha(i, j) * p.theta(i, j);
    }
    std::vector<TimedEvent> obs;
    for (std::size_t j = e; j < d; ++j)
        for (double t : observed.times[j]) obs.push_back({t, static_cast<int>(j)});
    std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.t < b.t || (a.t == b.t && a.dim < b.dim); });

    EventHistory out(p.d, T);
    for (std::size_t j = e; j < d; ++j) out.times[j] = observed.times[j];
    if (e == 0) return out;

    Rng rng(seed);
    HawkesState st(p);  // carries both observed (E^c) and sampled (E) sources
    std::size_t next_obs = 0;
    long total = 0;
    double now = 0.0;
    std::vector<double> lam(e);
    for (;;) {
        // bound at now: E-sourced part decays, so evaluate it at now (events <= now included)
        double bound = 0.0;
        for (std::size_t i = 0; i < e; ++i) {
            bound += base[i];
            for (std::size_t j = 0; j < e; ++j) bound += st.intensity_from(i, j);
        }
        if (!(bound > 0.0)) break;
        const double t = now + rng.exponential(bound);
        if (!(t < T)) break;
        while (next_obs < obs.size() && obs[next_obs].t < t) {
            st.advance(obs[next_obs].t);
            st.add(obs[next_obs].dim);
            ++next_obs;
        }
        st.advance(t);
        now = t;
        double sum = 0.0;
        for (std::size_t i = 0; i < e; ++i) {
            lam[i] = st.intensity(i);
            sum += lam[i];
        }
        if (opt.observer) opt.observer(t, bound, sum);
        const double u = rng.uniform() * bound;
        if (u >= sum) continue;
        std::size_t j = 0;
        double acc = lam[0];
        while (j + 1 < e && u >= acc) acc += lam[++j];
        st.add(static_cast<int>(j));
        detail::push_strict(out.times[j], t);
        if (++total > opt.max_events) throw ExplosionError("sample_conditional_hawkes: event cap exceeded");
    }
    return out;
}

}  // namespace pmbp
