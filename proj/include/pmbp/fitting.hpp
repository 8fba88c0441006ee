#pragma once

// Box-constrained maximum likelihood: projected limited-memory quasi-Newton
// with Armijo backtracking, multi-start, and the recovery experiment driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "errors.hpp"
#include "gradient.hpp"
#include "hawkes.hpp"
#include "impulse_response.hpp"
#include "likelihood.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace pmbp {

struct Bounds {
    double lo = 0.0, hi = 0.0;
};

enum class GradientMode { Analytic, FiniteDifference };

struct FitConfig {
    Bounds alpha{0.0, 5.0};
    Bounds theta{1e-3, 1e3};
    Bounds nu{0.0, 0.0};  // hi <= 0: 1e3 x the largest empirical rate
    int n_starts = 8;
    int max_iterations = 500;
    GradientMode gradient = GradientMode::Analytic;
    double ftol = 1e-7;   // relative NLL change
    double pgtol = 1e-5;  // projected gradient, sup norm
    int memory = 10;
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<ModelParams> extra_starts;  // appended after the generated starts
    LikelihoodConfig likelihood;

    void validate() const {
        for (const auto* b : {&alpha, &theta})
            if (!(b->lo <= b->hi)) throw std::invalid_argument("fit bounds: lower > upper");
        if (nu.hi > 0.0 && !(nu.lo <= nu.hi)) throw std::invalid_argument("fit bounds: lower > upper");
        if (!(theta.lo > 0.0)) throw std::invalid_argument("fit bounds: theta lower bound must be positive");
        if (alpha.lo < 0.0 || nu.lo < 0.0) throw std::invalid_argument("fit bounds: alpha and nu must be non-negative");
        if (n_starts < 1) throw std::invalid_argument("n_starts must be >= 1");
        if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    }
};

struct StartReport {
    ModelParams start;
    ModelParams final_params;
    double final_nll = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::string termination;  // ftol | pgtol | max_iterations | line_search | failed: <reason>
    bool ok = false;
};

struct FitResult {
    ModelParams params;
    double nll = std::numeric_limits<double>::infinity();
    int best_start = -1;
    std::vector<StartReport> starts;
    RegularityReport regularity;
    double wall_time = 0.0;  // seconds; not part of the deterministic output
};

namespace detail {

struct Objective {
    const std::vector<Dataset>* data;
    const FitConfig* cfg;
    const ConvGrid* grid;
    ModelParams shape;
    std::vector<ParamId> ids;
    std::vector<double> lo, hi;  // in internal coordinates
    int threads = 1;

    [[nodiscard]] ModelParams decode(const std::vector<double>& z) const {
        ModelParams p = shape;
        for (std::size_t k = 0; k < ids.size(); ++k)
            set_param(p, ids[k], ids[k].family == ParamId::Theta ? std::exp(z[k]) : z[k]);
        return p;
    }
    [[nodiscard]] std::vector<double> encode(const ModelParams& p) const {
        std::vector<double> z(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const double v = get_param(p, ids[k]);
            z[k] = std::clamp(ids[k].family == ParamId::Theta ? std::log(v) : v, lo[k], hi[k]);
        }
        return z;
    }

    // +inf when the parameters cannot be evaluated (e.g. rho(alpha_EE) >= 1)
    double operator()(const std::vector<double>& z, std::vector<double>* g) const {
        const ModelParams p = decode(z);
        try {
            double f;
            std::vector<double> gp;
            if (!g) return joint_nll(p, *data, cfg->likelihood, *grid, threads);
            if (cfg->gradient == GradientMode::Analytic) {
                auto vg = nll_and_gradient(p, *data, cfg->likelihood, *grid, ids, threads);
                f = vg.value;
                gp = std::move(vg.grad);
            } else {
                f = joint_nll(p, *data, cfg->likelihood, *grid, threads);
                gp = fd_grad_nll(p, *data, cfg->likelihood, *grid, 1e-6, false, threads);
            }
            if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
            g->resize(ids.size());
            for (std::size_t k = 0; k < ids.size(); ++k)
                (*g)[k] = ids[k].family == ParamId::Theta ? gp[k] * std::exp(z[k]) : gp[k];
            return f;
        } catch (const DomainError&) {
        } catch (const EvaluationError&) {
        } catch (const TruncationError&) {
        } catch (const NumericalConsistencyError&) {
        }
        return std::numeric_limits<double>::infinity();
    }
};

inline std::vector<double> project(std::vector<double> z, const std::vector<double>& lo, const std::vector<double>& hi) {
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = std::clamp(z[k], lo[k], hi[k]);
    return z;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

// coordinates held at a bound by the gradient
inline std::vector<char> active_set(const std::vector<double>& z, const std::vector<double>& g,
                                    const std::vector<double>& lo, const std::vector<double>& hi) {
    std::vector<char> act(z.size(), 0);
    for (std::size_t k = 0; k < z.size(); ++k)
        act[k] = (z[k] <= lo[k] && g[k] > 0.0) || (z[k] >= hi[k] && g[k] < 0.0);
    return act;
}

inline double projected_gradient_norm(const std::vector<double>& z, const std::vector<double>& g,
                                      const std::vector<double>& lo, const std::vector<double>& hi) {
    double m = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) m = std::max(m, std::abs(std::clamp(z[k] - g[k], lo[k], hi[k]) - z[k]));
    return m;
}

struct MinimizeResult {
    std::vector<double> z;
    double f = 0.0;
    int iterations = 0;
    std::string termination;
};

inline MinimizeResult minimize(const Objective& obj, std::vector<double> z, const FitConfig& cfg) {
    const auto& lo = obj.lo;
    const auto& hi = obj.hi;
    z = project(std::move(z), lo, hi);
    std::vector<double> g;
    double f = obj(z, &g);
    if (!std::isfinite(f)) throw FitFailure("objective not finite at start point");
    std::deque<std::pair<std::vector<double>, std::vector<double>>> mem;  // (s, y)
    const std::size_t n = z.size();
    MinimizeResult r;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        r.iterations = it;
        if (projected_gradient_norm(z, g, lo, hi) < cfg.pgtol) {
            r.termination = "pgtol";
            break;
        }
        const auto act = active_set(z, g, lo, hi);
        // two-loop recursion on the free coordinates
        std::vector<double> q(n);
        for (std::size_t k = 0; k < n; ++k) q[k] = act[k] ? 0.0 : g[k];
        std::vector<double> al(mem.size());
        for (std::size_t m = mem.size(); m-- > 0;) {
            const auto& [s, y] = mem[m];
            al[m] = dot(s, q) / dot(y, s);
            for (std::size_t k = 0; k < n; ++k) q[k] -= al[m] * y[k];
        }
        if (!mem.empty()) {
            const auto& [s, y] = mem.back();
            const double scale = dot(s, y) / dot(y, y);
            for (auto& x : q) x *= scale;
        }
        for (std::size_t m = 0; m < mem.size(); ++m) {
            const auto& [s, y] = mem[m];
            const double b = dot(y, q) / dot(y, s);
            for (std::size_t k = 0; k < n; ++k) q[k] += (al[m] - b) * s[k];
        }
        std::vector<double> dir(n);
        for (std::size_t k = 0; k < n; ++k) dir[k] = act[k] ? 0.0 : -q[k];
        if (!(dot(dir, g) < 0.0)) {
            mem.clear();
            for (std::size_t k = 0; k < n; ++k) dir[k] = act[k] ? 0.0 : -g[k];
        }
        double step = 1.0;
        if (mem.empty()) {
            double dn = 0.0;
            for (double x : dir) dn = std::max(dn, std::abs(x));
            if (dn > 0.0) step = std::min(1.0, 0.1 / dn);
        }
        // Armijo backtracking along the projected path
        std::vector<double> zn, gn;
        double fn = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            zn = z;
            for (std::size_t k = 0; k < n; ++k) zn[k] += step * dir[k];
            zn = project(std::move(zn), lo, hi);
            std::vector<double> dz(n);
            for (std::size_t k = 0; k < n; ++k) dz[k] = zn[k] - z[k];
            const double dec = dot(g, dz);
            if (dec >= 0.0) break;
            fn = obj(zn, &gn);
            if (std::isfinite(fn) && fn <= f + 1e-4 * dec) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            r.termination = "line_search";
            break;
        }
        std::vector<double> s(n), y(n);
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = zn[k] - z[k];
            y[k] = gn[k] - g[k];
        }
        const double sy = dot(s, y);
        if (sy > 1e-10 * std::sqrt(dot(s, s) * dot(y, y))) {
            mem.emplace_back(std::move(s), std::move(y));
            if (mem.size() > static_cast<std::size_t>(cfg.memory)) mem.pop_front();
        }
        const double fold = f;
        z = std::move(zn);
        g = std::move(gn);
        f = fn;
        r.iterations = it + 1;
        if (std::abs(fold - f) <= cfg.ftol * std::max(1.0, std::abs(f))) {
            r.termination = "ftol";
            break;
        }
    }
    if (r.termination.empty()) r.termination = "max_iterations";
    r.z = std::move(z);
    r.f = f;
    return r;
}

inline double empirical_rate(const std::vector<Dataset>& data, int j) {
    double n = 0.0, T = 0.0;
    for (const auto& ds : data) {
        T += ds.horizon;
        const auto uj = static_cast<std::size_t>(j);
        if (uj < ds.counts.size())
            for (long c : ds.counts[uj].counts) n += static_cast<double>(c);
        else
            n += static_cast<double>(ds.histories.times[uj].size());
    }
    return T > 0.0 ? n / T : 0.0;
}

}  // namespace detail

// shape supplies d, e and the fixed gamma; theta, alpha, nu are estimated
inline FitResult fit(const std::vector<Dataset>& data, const ModelParams& shape, const FitConfig& cfg,
                     const ConvGrid& grid) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    shape.validate();
    if (data.empty()) throw std::invalid_argument("fit: no datasets");
    for (const auto& ds : data) ds.validate(shape.d, shape.e);

    detail::Objective obj;
    obj.data = &data;
    obj.cfg = &cfg;
    obj.grid = &grid;
    obj.shape = shape;
    obj.ids = free_parameters(shape.d, false);
    std::vector<double> rate(static_cast<std::size_t>(shape.d));
    double max_rate = 0.0;
    for (int j = 0; j < shape.d; ++j) max_rate = std::max(max_rate, rate[static_cast<std::size_t>(j)] = detail::empirical_rate(data, j));
    const double nu_hi = cfg.nu.hi > 0.0 ? cfg.nu.hi : 1e3 * std::max(max_rate, 1e-3);
    for (const auto& id : obj.ids) {
        switch (id.family) {
            case ParamId::Theta:
                obj.lo.push_back(std::log(cfg.theta.lo));
                obj.hi.push_back(std::log(cfg.theta.hi));
                break;
            case ParamId::Alpha:
                obj.lo.push_back(cfg.alpha.lo);
                obj.hi.push_back(cfg.alpha.hi);
                break;
            default:
                obj.lo.push_back(cfg.nu.lo);
                obj.hi.push_back(nu_hi);
                break;
        }
    }

    // start 0 is the heuristic point, the rest are drawn log-uniformly
    const auto ng = static_cast<std::size_t>(cfg.n_starts);
    const std::size_t n = ng + cfg.extra_starts.size();
    std::vector<ModelParams> starts(ng, shape);
    const double d = shape.d;
    for (std::size_t s = 0; s < ng; ++s) {
        Rng rng(derive_seed(cfg.seed, s));
        auto lu = [&](double a, double b) { return a * std::exp(rng.uniform() * std::log(b / a)); };
        auto& p = starts[s];
        for (std::size_t i = 0; i < p.theta.rows(); ++i)
            for (std::size_t j = 0; j < p.theta.cols(); ++j) {
                p.theta(i, j) = s == 0 ? 1.0 : lu(0.05, 20.0);
                p.alpha(i, j) = s == 0 ? 0.5 : lu(1e-2, 0.9 / d);
            }
        for (std::size_t j = 0; j < p.nu.size(); ++j) {
            const double r = std::max(rate[j], 1e-3);
            p.nu[j] = s == 0 ? r : r * lu(0.1, 10.0);
        }
        p = obj.decode(obj.encode(p));
    }
    for (const auto& x : cfg.extra_starts) {
        if (x.d != shape.d) throw DimensionError("fit: extra start has wrong dimension");
        ModelParams p = shape;
        p.theta = x.theta;
        p.alpha = x.alpha;
        p.nu = x.nu;
        starts.push_back(obj.decode(obj.encode(p)));
    }

    FitResult res;
    res.starts.resize(n);
    const int inner = n > 1 ? 1 : cfg.threads;
    obj.threads = inner;
    parallel_for(n, n > 1 ? cfg.threads : 1, [&](std::size_t s) {
        auto& rep = res.starts[s];
        rep.start = starts[s];
        rep.final_params = starts[s];
        try {
            const auto m = detail::minimize(obj, obj.encode(starts[s]), cfg);
            rep.final_params = obj.decode(m.z);
            rep.final_nll = m.f;
            rep.iterations = m.iterations;
            rep.termination = m.termination;
            rep.ok = std::isfinite(m.f);
        } catch (const std::exception& ex) {
            rep.termination = std::string("failed: ") + ex.what();
        }
    });
    for (std::size_t s = 0; s < n; ++s)
        if (res.starts[s].ok && res.starts[s].final_nll < res.nll) {
            res.nll = res.starts[s].final_nll;
            res.best_start = static_cast<int>(s);
        }
    if (res.best_start < 0) {
        std::string why;
        for (std::size_t s = 0; s < n; ++s) why += "\n  start " + std::to_string(s) + ": " + res.starts[s].termination;
        throw FitFailure("all starts failed:" + why);
    }
    res.params = res.starts[static_cast<std::size_t>(res.best_start)].final_params;
    res.regularity = check_subcriticality(res.params);
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// ---- recovery experiment -------------------------------------------------------

struct RecoveryRow {
    std::string param;
    double true_value = 0.0;
    std::string mode;  // PP-PP or IC-PP[w]
    int group = 0;
    double estimate = 0.0;
};

struct RecoverySummary {
    std::string param;
    std::string mode;
    double true_value = 0.0;
    double mean = 0.0, median = 0.0, iqr = 0.0;
};

struct RecoveryTable {
    std::vector<RecoveryRow> rows;
    std::vector<RecoverySummary> summary;
};

struct RecoveryOptions {
    double horizon = 60.0;
    double grid_step = 0.05;
    FitConfig fit;
};

inline std::string ic_mode_name(double w) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "IC-PP[%g]", w);
    return buf;
}

// type-7 (linear interpolation) sample quantile
inline double quantile(std::vector<double> x, double q) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(x.begin(), x.end());
    const double h = q * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline RecoveryTable recovery_experiment(const ModelParams& truth, int n_sequences, int group_size,
                                         const std::vector<double>& censor_widths, std::uint64_t seed,
                                         const RecoveryOptions& opt = {}) {
    truth.validate();
    if (truth.e != 0) throw std::invalid_argument("recovery: true model must be a Hawkes process (e = 0)");
    if (!(spectral_radius(truth.alpha) < 1.0)) throw DomainError("recovery: true parameters must be subcritical");
    if (n_sequences < 1 || group_size < 1 || group_size > n_sequences)
        throw std::invalid_argument("recovery: need 1 <= group_size <= n_sequences");
    const int groups = n_sequences / group_size;
    const double T = opt.horizon;
    std::vector<EventHistory> seqs(static_cast<std::size_t>(n_sequences));
    for (int s = 0; s < n_sequences; ++s)
        seqs[static_cast<std::size_t>(s)] = sample_hawkes(truth, T, derive_seed(seed, static_cast<std::uint64_t>(s)));

    struct Mode {
        std::string name;
        int e;
        double width;
    };
    std::vector<Mode> modes{{"PP-PP", 0, 0.0}};
    for (double w : censor_widths) {
        if (!(w > 0.0)) throw std::invalid_argument("recovery: censor width must be positive");
        modes.push_back({ic_mode_name(w), 1, w});
    }
    const auto ids = free_parameters(truth.d, false);
    const ConvGrid grid = ConvGrid::covering(T, opt.grid_step);
    RecoveryTable table;
    for (const auto& m : modes) {
        ModelParams shape = truth;
        shape.e = m.e;
        std::fill(shape.gamma.begin(), shape.gamma.end(), 0.0);
        for (int g = 0; g < groups; ++g) {
            std::vector<Dataset> data;
            for (int k = 0; k < group_size; ++k) {
                const auto& h = seqs[static_cast<std::size_t>(g * group_size + k)];
                data.push_back(m.e == 0 ? as_point_data(h) : censor(h, {0}, m.width));
            }
            FitConfig fc = opt.fit;
            fc.seed = derive_seed(seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(g));
            const auto r = fit(data, shape, fc, grid);
            for (const auto& id : ids)
                table.rows.push_back({id.name(), get_param(truth, id), m.name, g, get_param(r.params, id)});
            table.rows.push_back({"spectral_radius", spectral_radius(truth.alpha), m.name, g, spectral_radius(r.params.alpha)});
        }
    }
    // summary in first-appearance order of (param, mode)
    std::vector<std::pair<std::string, std::string>> keys;
    std::map<std::pair<std::string, std::string>, std::vector<double>> est;
    std::map<std::pair<std::string, std::string>, double> tv;
    for (const auto& r : table.rows) {
        const auto k = std::make_pair(r.param, r.mode);
        if (!est.count(k)) keys.push_back(k);
        est[k].push_back(r.estimate);
        tv[k] = r.true_value;
    }
    for (const auto& k : keys) {
        const auto& x = est[k];
        RecoverySummary s;
        s.param = k.first;
        s.mode = k.second;
        s.true_value = tv[k];
        for (double v : x) s.mean += v;
        s.mean /= static_cast<double>(x.size());
        s.median = quantile(x, 0.5);
        s.iqr = quantile(x, 0.75) - quantile(x, 0.25);
        table.summary.push_back(s);
    }
    return table;
}

}  // namespace pmbp
