#pragma once

// h_E = sum_n phi_E^{(*n)} on a uniform grid, its integral H_E, and the
// parameter derivative recursion for h_E.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "convolution.hpp"
#include "dual.hpp"
#include "errors.hpp"
#include "model.hpp"

namespace pmbp {

// Grid tables stored entry-major: series(i, j)[p].
template <class S>
struct HTables {
    ConvGrid grid;
    int d = 0;
    int e = 0;
    std::vector<std::vector<S>> h;      // d*d series
    std::vector<std::vector<S>> H;      // d*d series
    std::vector<std::vector<S>> hprev;  // h minus its last term (for off-grid evaluation)
    int k_star = 0;
    double residual_max = 0.0;

    [[nodiscard]] const std::vector<S>& h_series(int i, int j) const { return h[idx(i, j)]; }
    [[nodiscard]] const std::vector<S>& H_series(int i, int j) const { return H[idx(i, j)]; }

    [[nodiscard]] Matrix<S> h_at(std::size_t p) const { return at(h, p); }
    [[nodiscard]] Matrix<S> H_at(std::size_t p) const { return at(H, p); }

private:
    [[nodiscard]] std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i * d + j); }
    [[nodiscard]] Matrix<S> at(const std::vector<std::vector<S>>& v, std::size_t p) const {
        const auto n = static_cast<std::size_t>(d);
        Matrix<S> m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m(i, j) = v[i * n + j][p];
        return m;
    }
};

struct HOptions {
    int max_terms = 1000;
    int fixed_terms = 0;              // > 0: sum exactly this many terms (used to pin truncation in FD checks)
    bool allow_supercritical = false; // finite horizons converge regardless; off by default
};

namespace detail {

template <class S>
using Series = std::vector<std::vector<S>>;

template <class S>
double max_abs(const Series<S>& s) {
    double m = 0.0;
    for (const auto& v : s)
        for (const auto& x : v) m = std::max(m, std::abs(value_of(x)));
    return m;
}

// Q(T)^{ij}(t_p) = sum_{l in E} rule_{K1}[alpha^{il}, theta^{il}] applied to T^{lj}
template <class S>
Series<S> apply_Q(const BasicModelParams<S>& p, const ConvGrid& grid, const Series<S>& T) {
    using std::exp;
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    const std::size_t n = grid.size();
    Series<S> out(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            auto& o = out[i * d + j];
            o.assign(n, S(0.0));
            if (j >= e) continue;
            for (std::size_t l = 0; l < e; ++l) {
                const S decay = exp(-p.theta(i, l) * grid.step);
                const S gain = p.alpha(i, l) * (1.0 - decay);
                const auto& g = T[l * d + j];
                S st(0.0);
                for (std::size_t q = 1; q < n; ++q) {
                    st = decay * st + gain * g[q - 1];
                    o[q] += st;
                }
            }
        }
    return out;
}

// H^{ij} = Phi_E^{ij} + sum_l rule_{K2}[alpha^{il}, theta^{il}] applied to h^{lj}
template <class S>
Series<S> build_H(const BasicModelParams<S>& p, const ConvGrid& grid, const Series<S>& h) {
    using std::exp;
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    const std::size_t n = grid.size();
    Series<S> out(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            auto& o = out[i * d + j];
            o.assign(n, S(0.0));
            if (j >= e) continue;
            for (std::size_t q = 0; q < n; ++q) o[q] = kernel::Phi(p.alpha(i, j), p.theta(i, j), grid.time(q));
            for (std::size_t l = 0; l < e; ++l) {
                const S decay = exp(-p.theta(i, l) * grid.step);
                const S gain = p.alpha(i, l) * (1.0 - decay);
                const auto& g = h[l * d + j];
                S st(0.0), cum(0.0);
                for (std::size_t q = 1; q < n; ++q) {
                    st = decay * st + gain * g[q - 1];
                    cum = cum + g[q - 1] * grid.step;
                    o[q] += p.alpha(i, l) * cum - st / p.theta(i, l);
                }
            }
        }
    return out;
}

template <class S>
void check_h_feasible(const BasicModelParams<S>& p, const HOptions& opt) {
    if (opt.allow_supercritical || p.e == 0) return;
    const auto e = static_cast<std::size_t>(p.e);
    MatrixD a(e, e);
    for (std::size_t i = 0; i < e; ++i)
        for (std::size_t j = 0; j < e; ++j) a(i, j) = value_of(p.alpha(i, j));
    if (!(spectral_radius(a) < 1.0))
        throw DomainError("compute_h: spectral radius of alpha^{EE} is not below 1");
}

}  // namespace detail

template <class S>
HTables<S> compute_h(const BasicModelParams<S>& p, const ConvGrid& grid, double gamma_h, const HOptions& opt = {}) {
    if (!(gamma_h > 0.0)) throw std::invalid_argument("gamma_h must be positive");
    detail::check_h_feasible(p, opt);
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    const std::size_t n = grid.size();

    HTables<S> tab;
    tab.grid = grid;
    tab.d = p.d;
    tab.e = p.e;

    detail::Series<S> term(d * d, std::vector<S>(n, S(0.0)));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < e; ++j)
            for (std::size_t q = 0; q < n; ++q) term[i * d + j][q] = kernel::phi(p.alpha(i, j), p.theta(i, j), grid.time(q));

    detail::Series<S> h = term;
    int k = 1;
    double res = detail::max_abs(term);
    auto done = [&] { return opt.fixed_terms > 0 ? k >= opt.fixed_terms : res < gamma_h; };
    while (!done()) {
        if (k >= opt.max_terms) throw TruncationError("compute_h: series did not converge within term cap");
        term = detail::apply_Q(p, grid, term);
        for (std::size_t s = 0; s < d * d; ++s)
            for (std::size_t q = 0; q < n; ++q) h[s][q] += term[s][q];
        res = detail::max_abs(term);
        ++k;
    }
    tab.hprev = h;
    for (std::size_t s = 0; s < d * d; ++s)
        for (std::size_t q = 0; q < n; ++q) tab.hprev[s][q] -= term[s][q];
    tab.H = detail::build_H(p, grid, h);
    tab.h = std::move(h);
    tab.k_star = k;
    tab.residual_max = res;
    return tab;
}

// ---- parameter identities and h derivatives ---------------------------------

struct ParamId {
    enum Family { Theta, Alpha, Nu, Gamma };
    Family family = Alpha;
    int i = 0;
    int j = 0;  // unused for Nu/Gamma

    [[nodiscard]] std::string name() const {
        switch (family) {
            case Theta: return "theta_" + std::to_string(i) + "_" + std::to_string(j);
            case Alpha: return "alpha_" + std::to_string(i) + "_" + std::to_string(j);
            case Nu: return "nu_" + std::to_string(i);
            default: return "gamma_" + std::to_string(i);
        }
    }
};

// free-parameter layout: theta (row-major), alpha (row-major), nu, [gamma]
inline std::vector<ParamId> free_parameters(int d, bool include_gamma = false) {
    std::vector<ParamId> ids;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) ids.push_back({ParamId::Theta, i, j});
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) ids.push_back({ParamId::Alpha, i, j});
    for (int i = 0; i < d; ++i) ids.push_back({ParamId::Nu, i, 0});
    if (include_gamma)
        for (int i = 0; i < d; ++i) ids.push_back({ParamId::Gamma, i, 0});
    return ids;
}

inline double get_param(const ModelParams& p, const ParamId& id) {
    const auto i = static_cast<std::size_t>(id.i), j = static_cast<std::size_t>(id.j);
    switch (id.family) {
        case ParamId::Theta: return p.theta(i, j);
        case ParamId::Alpha: return p.alpha(i, j);
        case ParamId::Nu: return p.nu[i];
        default: return p.gamma[i];
    }
}

inline void set_param(ModelParams& p, const ParamId& id, double v) {
    const auto i = static_cast<std::size_t>(id.i), j = static_cast<std::size_t>(id.j);
    switch (id.family) {
        case ParamId::Theta: p.theta(i, j) = v; break;
        case ParamId::Alpha: p.alpha(i, j) = v; break;
        case ParamId::Nu: p.nu[i] = v; break;
        default: p.gamma[i] = v; break;
    }
}

struct GradTables {
    ParamId param;
    std::vector<std::vector<double>> dh;  // d*d series
    std::vector<std::vector<double>> dH;
    int iterations = 0;
};

// Derivative of the discrete h with respect to one kernel parameter.
// B runs through the generations phi_E, Q(phi_E), ...; A is the derivative of the
// current generation: A <- Q(A) + dQ(B), B <- Q(B), S <- S + A, seeded with
// (B, A) = (phi_E, d phi_E). Stops once both A and B are below gamma_h.
inline GradTables grad_h(const ModelParams& p, const ConvGrid& grid, double gamma_h, const ParamId& id,
                         const HOptions& opt = {}) {
    detail::check_h_feasible(p, opt);
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    const std::size_t n = grid.size();
    GradTables out;
    out.param = id;
    const bool kernel_param = (id.family == ParamId::Theta || id.family == ParamId::Alpha) && id.j < p.e;
    if (!kernel_param) {
        out.dh.assign(d * d, std::vector<double>(n, 0.0));
        out.dH = out.dh;
        return out;
    }
    // a one-tangent dual carries (value, derivative) through dQ; B and A stay plain
    using D1 = Dual<1>;
    BasicModelParams<D1> pd = lift<D1>(p);
    const auto ui = static_cast<std::size_t>(id.i), uj = static_cast<std::size_t>(id.j);
    if (id.family == ParamId::Theta)
        pd.theta(ui, uj) = D1::variable(p.theta(ui, uj), 0);
    else
        pd.alpha(ui, uj) = D1::variable(p.alpha(ui, uj), 0);

    detail::Series<double> B(d * d, std::vector<double>(n, 0.0)), A = B;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < e; ++j)
            for (std::size_t q = 0; q < n; ++q) {
                const D1 f = kernel::phi(pd.alpha(i, j), pd.theta(i, j), grid.time(q));
                B[i * d + j][q] = f.v;
                A[i * d + j][q] = f.d[0];
            }
    detail::Series<double> Ssum = A;
    detail::Series<D1> Bd(d * d);
    int it = 1;
    for (;;) {
        const double mb = detail::max_abs(B), ma = detail::max_abs(A);
        if (opt.fixed_terms > 0 ? it >= opt.fixed_terms : (ma < gamma_h && mb < gamma_h)) break;
        if (it >= opt.max_terms) throw TruncationError("grad_h: recursion did not converge within cap");
        // dQ(B): Q with dual kernel applied to plain B, tangent part only
        for (std::size_t s = 0; s < d * d; ++s) Bd[s].assign(B[s].begin(), B[s].end());
        const auto QB = detail::apply_Q(pd, grid, Bd);
        const auto QA = detail::apply_Q(p, grid, A);
        for (std::size_t s = 0; s < d * d; ++s)
            for (std::size_t q = 0; q < n; ++q) {
                A[s][q] = QA[s][q] + QB[s][q].d[0];
                B[s][q] = QB[s][q].v;
                Ssum[s][q] += A[s][q];
            }
        ++it;
    }
    out.iterations = it;
    out.dh = Ssum;

    // dH = dPhi_E + rule_{K2}(dh) + d(rule_{K2})(h): one dual pass over h + eps*dh
    const auto tab = compute_h(p, grid, gamma_h, opt);
    detail::Series<D1> hd(d * d, std::vector<D1>(n));
    for (std::size_t s = 0; s < d * d; ++s)
        for (std::size_t q = 0; q < n; ++q) {
            hd[s][q] = D1(tab.h[s][q]);
            hd[s][q].d[0] = Ssum[s][q];
        }
    const auto Hd = detail::build_H(pd, grid, hd);
    out.dH.assign(d * d, std::vector<double>(n, 0.0));
    for (std::size_t s = 0; s < d * d; ++s)
        for (std::size_t q = 0; q < n; ++q) out.dH[s][q] = Hd[s][q].d[0];
    return out;
}

}  // namespace pmbp
