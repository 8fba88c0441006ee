#pragma once

// Partially interval-censored negative log-likelihood evaluated at the
// points of interest (event times, censoring boundaries, horizon).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "convolution.hpp"
#include "dual.hpp"
#include "errors.hpp"
#include "impulse_response.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "pmbp.hpp"

namespace pmbp {

struct PointOfInterest {
    enum Role : unsigned { Timestamp = 1u, Boundary = 2u, GridPoint = 4u };
    double t = 0.0;
    unsigned roles = 0;
    std::vector<int> timestamp_dims;
    std::vector<int> boundary_dims;
};

// Merged, sorted point set; the horizon counts as a boundary of every E^c dimension.
inline std::vector<PointOfInterest> points_of_interest(const Dataset& data, const ConvGrid* grid = nullptr) {
    std::map<double, PointOfInterest> pts;
    auto at = [&](double t) -> PointOfInterest& {
        auto& pt = pts[t];
        pt.t = t;
        return pt;
    };
    const int d = data.histories.dims();
    const int e = static_cast<int>(data.counts.size());
    for (int j = e; j < d; ++j) {
        for (double t : data.histories.times[static_cast<std::size_t>(j)]) {
            auto& pt = at(t);
            pt.roles |= PointOfInterest::Timestamp;
            pt.timestamp_dims.push_back(j);
        }
        auto& pt = at(data.horizon);
        pt.roles |= PointOfInterest::Boundary;
        pt.boundary_dims.push_back(j);
    }
    for (const auto& c : data.counts)
        for (double o : c.boundaries) {
            auto& pt = at(o);
            pt.roles |= PointOfInterest::Boundary;
            pt.boundary_dims.push_back(c.dim);
        }
    if (grid)
        for (std::size_t q = 0; q < grid->size() && grid->time(q) <= data.horizon; ++q) at(grid->time(q)).roles |= PointOfInterest::GridPoint;
    std::vector<PointOfInterest> out;
    out.reserve(pts.size());
    for (auto& [t, pt] : pts) out.push_back(std::move(pt));
    return out;
}

struct LikelihoodConfig {
    std::vector<double> weights;  // per dimension; empty means all 1
    double nu_penalty = 0.0;
    double eps = 1e-10;
    double gamma_h = 1e-6;
    HOptions h_options;

    [[nodiscard]] double weight(int j) const {
        return weights.empty() ? 1.0 : weights.at(static_cast<std::size_t>(j));
    }
};

// sum_k [dXi_k - C_k log max(dXi_k, eps)]; Xi given at all boundaries o_0..o_m
template <class S>
S icll(const CensoredDim& counts, const std::vector<S>& Xi_at_boundaries, double eps = 1e-10) {
    if (Xi_at_boundaries.size() != counts.boundaries.size())
        throw DimensionError("icll: compensator values not aligned to boundaries");
    using std::log;
    S total(0.0);
    for (std::size_t k = 0; k < counts.counts.size(); ++k) {
        const S inc = Xi_at_boundaries[k + 1] - Xi_at_boundaries[k];
        if (value_of(inc) < -1e-9) throw NumericalConsistencyError("icll: negative compensator increment");
        total += inc;
        if (counts.counts[k] > 0) total -= static_cast<double>(counts.counts[k]) * log(scalar_max(inc, eps));
    }
    return total;
}

// -sum_k log xi(t_k) + Xi(T)
template <class S>
S ppll(const std::vector<S>& xi_at_events, const S& Xi_T, double eps = 1e-10) {
    using std::log;
    S total = Xi_T;
    for (const auto& x : xi_at_events) total -= log(scalar_max(x, eps));
    return total;
}

// NLL of one dataset given prebuilt response tables
template <class S>
S dataset_nll(const ResponseTables<S>& rt, const Dataset& data, const LikelihoodConfig& cfg) {
    const auto& p = rt.params();
    data.validate(p.d, p.e);
    if (data.horizon > rt.grid().horizon() * (1.0 + 1e-12)) throw DomainError("grid does not cover the dataset horizon");
    const auto d = static_cast<std::size_t>(p.d);
    const auto pts = points_of_interest(data);
    PmbpEvaluator<S> ev(rt, data.histories);
    typename PmbpEvaluator<S>::Values v;
    std::vector<std::vector<S>> xi_events(d), Xi_bounds(d);
    std::vector<S> Xi_T(d, S(0.0));
    for (const auto& pt : pts) {
        const bool want_xi = !pt.timestamp_dims.empty();
        const bool want_Xi = !pt.boundary_dims.empty();
        if (!want_xi && !want_Xi) continue;
        ev.at(pt.t, want_xi, want_Xi, v);
        for (int j : pt.timestamp_dims) xi_events[static_cast<std::size_t>(j)].push_back(v.xi[static_cast<std::size_t>(j)]);
        for (int j : pt.boundary_dims) {
            const auto uj = static_cast<std::size_t>(j);
            if (j < p.e)
                Xi_bounds[uj].push_back(v.Xi[uj]);
            else
                Xi_T[uj] = v.Xi[uj];
        }
    }
    S total(0.0);
    for (int j = 0; j < p.d; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const double w = cfg.weight(j);
        if (w == 0.0) continue;
        if (j < p.e)
            total += w * icll(data.counts[uj], Xi_bounds[uj], cfg.eps);
        else
            total += w * ppll(xi_events[uj], Xi_T[uj], cfg.eps);
    }
    return total;
}

template <class S>
S nu_penalty_term(const BasicModelParams<S>& p, const LikelihoodConfig& cfg) {
    S s(0.0);
    if (cfg.nu_penalty != 0.0)
        for (const auto& x : p.nu) s += cfg.nu_penalty * x;
    return s;
}

template <class S>
S total_nll(const BasicModelParams<S>& p, const Dataset& data, const LikelihoodConfig& cfg, const ConvGrid& grid) {
    const auto tab = compute_h(p, grid, cfg.gamma_h, cfg.h_options);
    const ResponseTables<S> rt(p, tab);
    return dataset_nll(rt, data, cfg) + nu_penalty_term(p, cfg);
}

// sum_r total_nll(p, data_r); one set of tables shared by all terms
template <class S>
S joint_nll(const BasicModelParams<S>& p, const std::vector<Dataset>& data, const LikelihoodConfig& cfg,
            const ConvGrid& grid, int threads = 1) {
    if (data.empty()) throw std::invalid_argument("joint_nll: no datasets");
    const auto tab = compute_h(p, grid, cfg.gamma_h, cfg.h_options);
    const ResponseTables<S> rt(p, tab);
    std::vector<S> parts(data.size(), S(0.0));
    const S pen = nu_penalty_term(p, cfg);
    parallel_for(data.size(), threads, [&](std::size_t r) { parts[r] = dataset_nll(rt, data[r], cfg) + pen; });
    S total(0.0);
    for (const auto& x : parts) total += x;
    return total;
}

}  // namespace pmbp
