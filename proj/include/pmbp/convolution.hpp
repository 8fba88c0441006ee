#pragma once

// Uniform grid, the left-piecewise-constant convolution rule, and exponential
// "channels": the same rule specialised to exponential kernels, evaluated
// by recursion and at arbitrary (off-grid) targets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "model.hpp"

namespace pmbp {

struct ConvGrid {
    double step = 0.01;
    std::size_t P = 0;  // points t_0..t_P

    ConvGrid() = default;
    ConvGrid(double step_, std::size_t P_) : step(step_), P(P_) {
        if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
    }

    // smallest grid with horizon >= T
    static ConvGrid covering(double T, double step) {
        if (!(T > 0.0) || !(step > 0.0)) throw std::invalid_argument("grid needs positive T and step");
        const double n = std::ceil(T / step - 1e-9);
        return ConvGrid(step, static_cast<std::size_t>(std::max(1.0, n)));
    }

    // 0.01 x shortest kernel time scale, clamped to [T/1e5, T/100]
    static double default_step(const ModelParams& p, double T) {
        double tmin = INFINITY;
        for (std::size_t i = 0; i < p.theta.rows(); ++i)
            for (std::size_t j = 0; j < p.theta.cols(); ++j) tmin = std::min(tmin, 1.0 / p.theta(i, j));
        return std::clamp(0.01 * tmin, T / 1e5, T / 100.0);
    }

    [[nodiscard]] std::size_t size() const { return P + 1; }
    [[nodiscard]] double horizon() const { return static_cast<double>(P) * step; }
    [[nodiscard]] double time(std::size_t p) const { return static_cast<double>(p) * step; }

    // exact grid index of t, or DomainError
    [[nodiscard]] std::size_t index_of(double t) const {
        const double x = t / step;
        const double r = std::round(x);
        if (r < 0.0 || r > static_cast<double>(P) || std::abs(x - r) > 1e-9 * std::max(1.0, r))
            throw DomainError("time is not a grid point");
        return static_cast<std::size_t>(r);
    }

    bool operator==(const ConvGrid& o) const { return step == o.step && P == o.P; }
};

// sum_{t_i < t} [F(t - t_i) - F(t - min(t_{i+1}, t))] * g(t_i), t on the grid
template <class Fn, class G>
auto conv_quadrature(Fn&& F, const std::vector<G>& g, const ConvGrid& grid, double t) {
    const std::size_t p = grid.index_of(t);
    if (g.size() < grid.size()) throw DimensionError("conv_quadrature: sample count below grid size");
    auto acc = F(0.0) * g[0];  // zero of the right shape since F(0) = 0
    for (std::size_t i = 0; i < p; ++i) {
        const double u = t - grid.time(i);
        acc = acc + (F(u) - F(std::max(u - grid.step, 0.0))) * g[i];
    }
    return acc;
}

// rectangle-rule alternative: sum_{t_i <= t} f(t - t_i) g(t_i) * step
template <class Fn, class G>
auto conv_rectangle(Fn&& f, const std::vector<G>& g, const ConvGrid& grid, double t) {
    const std::size_t p = grid.index_of(t);
    auto acc = f(0.0) * g[0] * 0.0;
    for (std::size_t i = 0; i <= p; ++i) acc = acc + f(t - grid.time(i)) * g[i] * grid.step;
    return acc;
}

// One scalar convolution channel: source g (left piecewise constant on the
// grid) against the exponential kernel (a, th). conv1/conv2/conv3 evaluate the
// rule with F = K1, K2, K3 (i.e. against f = phi, Phi, Phi2) at any t in [0, T].
template <class S>
class ExpChannel {
public:
    ExpChannel() = default;

    ExpChannel(const ConvGrid& grid, const S& a, const S& th, std::vector<S> g, bool integrals)
        : step_(grid.step), P_(grid.P), a_(a), th_(th), g_(std::move(g)) {
        using std::exp;
        const S decay = exp(-th_ * step_);
        const S gain = a_ * (1.0 - decay);
        state_.assign(P_ + 1, S(0.0));
        for (std::size_t p = 0; p < P_; ++p) state_[p + 1] = decay * state_[p] + gain * g_[p];
        if (integrals) {
            cum_.assign(P_ + 1, S(0.0));
            cm_.assign(P_ + 1, S(0.0));
            for (std::size_t p = 0; p < P_; ++p) {
                const double mid = (static_cast<double>(p) + 0.5) * step_;
                cum_[p + 1] = cum_[p] + g_[p] * step_;
                cm_[p + 1] = cm_[p] + g_[p] * (step_ * mid);
            }
        }
    }

    [[nodiscard]] S conv1(double t) const {
        std::size_t p;
        double delta;
        locate(t, p, delta);
        if (delta == 0.0) return state_[p];
        using std::exp;
        const S dec = exp(-th_ * delta);
        return dec * state_[p] + a_ * (1.0 - dec) * g_[p];
    }

    [[nodiscard]] S conv2(double t) const {
        std::size_t p;
        double delta;
        locate(t, p, delta);
        const S c1 = conv1(t);
        const S cum = delta == 0.0 ? cum_[p] : cum_[p] + g_[p] * delta;
        return a_ * cum - c1 / th_;
    }

    [[nodiscard]] S conv3(double t) const {
        std::size_t p;
        double delta;
        locate(t, p, delta);
        const S c1 = conv1(t);
        S cum = cum_[p], cm = cm_[p];
        if (delta != 0.0) {
            cum = cum + g_[p] * delta;
            cm = cm + g_[p] * (delta * (static_cast<double>(p) * step_ + 0.5 * delta));
        }
        return a_ * (cum * t - cm - cum / th_) + c1 / (th_ * th_);
    }

private:
    void locate(double t, std::size_t& p, double& delta) const {
        if (t <= 0.0) {
            p = 0;
            delta = 0.0;
            return;
        }
        const double x = t / step_;
        double fl = std::floor(x);
        if (x - fl > 1.0 - 1e-10) fl += 1.0;  // snap values a hair below a grid point
        if (fl >= static_cast<double>(P_)) {
            if (t > static_cast<double>(P_) * step_ * (1.0 + 1e-12) + 1e-12)
                throw DomainError("evaluation time beyond grid horizon");
            p = P_;
            delta = 0.0;
            return;
        }
        p = static_cast<std::size_t>(fl);
        delta = t - static_cast<double>(p) * step_;
        if (delta < 1e-12 * step_) delta = 0.0;
    }

    double step_ = 0.0;
    std::size_t P_ = 0;
    S a_{}, th_{};
    std::vector<S> g_;
    std::vector<S> state_, cum_, cm_;
};

}  // namespace pmbp
