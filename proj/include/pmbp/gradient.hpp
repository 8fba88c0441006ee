#pragma once

// NLL gradients over the free parameters (theta, alpha, nu; optionally gamma).
// The likelihood is templated on the scalar type; instantiating it with
// forward-mode duals yields the exact derivative of the discretised objective.

#include <cstddef>
#include <functional>
#include <vector>

#include "dual.hpp"
#include "errors.hpp"
#include "impulse_response.hpp"
#include "likelihood.hpp"
#include "model.hpp"

namespace pmbp {

struct ValueAndGradient {
    double value = 0.0;
    std::vector<double> grad;
};

template <std::size_t N>
BasicModelParams<Dual<N>> seed_params(const ModelParams& p, const std::vector<ParamId>& ids) {
    if (ids.size() > N) throw std::logic_error("dual capacity too small");
    auto q = lift<Dual<N>>(p);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto& id = ids[k];
        const auto i = static_cast<std::size_t>(id.i), j = static_cast<std::size_t>(id.j);
        const double v = get_param(p, id);
        switch (id.family) {
            case ParamId::Theta: q.theta(i, j) = Dual<N>::variable(v, k); break;
            case ParamId::Alpha: q.alpha(i, j) = Dual<N>::variable(v, k); break;
            case ParamId::Nu: q.nu[i] = Dual<N>::variable(v, k); break;
            default: q.gamma[i] = Dual<N>::variable(v, k); break;
        }
    }
    return q;
}

namespace detail {
template <std::size_t N>
ValueAndGradient grad_with(const ModelParams& p, const std::vector<Dataset>& data, const LikelihoodConfig& cfg,
                           const ConvGrid& grid, const std::vector<ParamId>& ids, int threads) {
    const auto q = seed_params<N>(p, ids);
    const Dual<N> r = joint_nll(q, data, cfg, grid, threads);
    ValueAndGradient out;
    out.value = r.v;
    out.grad.assign(r.d.begin(), r.d.begin() + static_cast<std::ptrdiff_t>(ids.size()));
    return out;
}
}  // namespace detail

inline ValueAndGradient nll_and_gradient(const ModelParams& p, const std::vector<Dataset>& data,
                                         const LikelihoodConfig& cfg, const ConvGrid& grid,
                                         const std::vector<ParamId>& ids, int threads = 1) {
    const std::size_t n = ids.size();
    if (n <= 12) return detail::grad_with<12>(p, data, cfg, grid, ids, threads);
    if (n <= 24) return detail::grad_with<24>(p, data, cfg, grid, ids, threads);
    if (n <= 40) return detail::grad_with<40>(p, data, cfg, grid, ids, threads);
    if (n <= 60) return detail::grad_with<60>(p, data, cfg, grid, ids, threads);
    throw DimensionError("analytic gradient supports at most 60 free parameters; use finite differences");
}

// gradient of joint_nll over free_parameters(d, include_gamma)
inline std::vector<double> grad_nll(const ModelParams& p, const std::vector<Dataset>& data,
                                    const LikelihoodConfig& cfg, const ConvGrid& grid, bool include_gamma = false,
                                    int threads = 1) {
    return nll_and_gradient(p, data, cfg, grid, free_parameters(p.d, include_gamma), threads).grad;
}

inline std::vector<double> grad_nll(const ModelParams& p, const Dataset& data, const LikelihoodConfig& cfg,
                                    const ConvGrid& grid, bool include_gamma = false) {
    return grad_nll(p, std::vector<Dataset>{data}, cfg, grid, include_gamma);
}

// central differences, coordinate-wise
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x, double step) {
    std::vector<double> g(x.size());
    std::vector<double> y = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        y[k] = x[k] + step;
        const double fp = f(y);
        y[k] = x[k] - step;
        const double fm = f(y);
        y[k] = x[k];
        g[k] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// FD gradient of joint_nll with the h-series truncation order pinned to the
// centre point's, so the two sides of each difference sum the same terms.
inline std::vector<double> fd_grad_nll(const ModelParams& p, const std::vector<Dataset>& data,
                                       const LikelihoodConfig& cfg, const ConvGrid& grid, double step = 1e-5,
                                       bool include_gamma = false, int threads = 1) {
    const auto ids = free_parameters(p.d, include_gamma);
    LikelihoodConfig pinned = cfg;
    if (pinned.h_options.fixed_terms == 0) pinned.h_options.fixed_terms = compute_h(p, grid, cfg.gamma_h, cfg.h_options).k_star;
    std::vector<double> x(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) x[k] = get_param(p, ids[k]);
    auto f = [&](const std::vector<double>& y) {
        ModelParams q = p;
        for (std::size_t k = 0; k < ids.size(); ++k) set_param(q, ids[k], y[k]);
        return joint_nll(q, data, pinned, grid, threads);
    };
    return fd_gradient(f, x, step);
}

}  // namespace pmbp
