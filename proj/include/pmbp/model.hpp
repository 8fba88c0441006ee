#pragma once

// Parameter containers, the exponential kernel and regularity checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dual.hpp"
#include "errors.hpp"
#include "linalg.hpp"

namespace pmbp {

// Dimensions are 0-based in code and files; E = {0..e-1}, E^c = {e..d-1}.
template <class S>
struct BasicModelParams {
    int d = 1;
    int e = 0;
    Matrix<S> theta;  // theta(i,j): decay of j -> i excitation
    Matrix<S> alpha;  // alpha(i,j): branching factor j -> i
    std::vector<S> gamma;
    std::vector<S> nu;

    [[nodiscard]] bool in_E(int j) const { return j < e; }

    void validate() const {
        if (d < 1) throw DimensionError("d must be >= 1");
        if (e < 0 || e > d) throw DimensionError("e must lie in [0, d]");
        const auto ud = static_cast<std::size_t>(d);
        if (theta.rows() != ud || theta.cols() != ud || alpha.rows() != ud || alpha.cols() != ud)
            throw DimensionError("theta/alpha must be d x d");
        if (gamma.size() != ud || nu.size() != ud) throw DimensionError("gamma/nu must have length d");
        for (std::size_t i = 0; i < ud; ++i) {
            for (std::size_t j = 0; j < ud; ++j) {
                if (!(value_of(theta(i, j)) > 0.0) || !std::isfinite(value_of(theta(i, j))))
                    throw std::invalid_argument("theta entries must be positive");
                if (!(value_of(alpha(i, j)) >= 0.0) || !std::isfinite(value_of(alpha(i, j))))
                    throw std::invalid_argument("alpha entries must be non-negative");
            }
            if (!(value_of(gamma[i]) >= 0.0)) throw std::invalid_argument("gamma entries must be non-negative");
            if (!(value_of(nu[i]) >= 0.0)) throw std::invalid_argument("nu entries must be non-negative");
        }
    }
};

using ModelParams = BasicModelParams<double>;

inline ModelParams make_params(int d, int e, const std::vector<std::vector<double>>& theta,
                               const std::vector<std::vector<double>>& alpha, std::vector<double> gamma,
                               std::vector<double> nu) {
    ModelParams p;
    p.d = d;
    p.e = e;
    p.theta = MatrixD::from_rows(theta);
    p.alpha = MatrixD::from_rows(alpha);
    p.gamma = std::move(gamma);
    p.nu = std::move(nu);
    p.validate();
    return p;
}

// lift double params into another scalar type (no tangents seeded)
template <class S>
BasicModelParams<S> lift(const ModelParams& p) {
    BasicModelParams<S> q;
    q.d = p.d;
    q.e = p.e;
    const auto n = static_cast<std::size_t>(p.d);
    q.theta = Matrix<S>(n, n);
    q.alpha = Matrix<S>(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            q.theta(i, j) = S(p.theta(i, j));
            q.alpha(i, j) = S(p.alpha(i, j));
        }
    q.gamma.assign(p.gamma.begin(), p.gamma.end());
    q.nu.assign(p.nu.begin(), p.nu.end());
    return q;
}

// ---- exponential kernel primitives --------------------------------------
// f(t) = alpha*theta*exp(-theta t); K1 = integral of f, K2 = integral of K1, K3 likewise.
namespace kernel {

using std::exp;
using std::expm1;

template <class S>
S phi(const S& a, const S& th, double t) {
    if (t < 0.0) return S(0.0);
    return a * th * exp(-th * t);
}

template <class S>
S Phi(const S& a, const S& th, double t) {
    if (t <= 0.0) return S(0.0);
    return -a * expm1(-th * t);
}

// alpha*(t - (1-e^{-theta t})/theta), series near 0 to avoid cancellation
template <class S>
S Phi2(const S& a, const S& th, double t) {
    if (t <= 0.0) return S(0.0);
    const S x = th * t;
    if (value_of(x) < 1e-2) {
        const S x2 = x * x;
        return a / th * (x2 * (0.5 - x * (1.0 / 6.0) + x2 * (1.0 / 24.0) - x2 * x * (1.0 / 120.0)));
    }
    return a * (t + expm1(-x) / th);
}

// alpha*(t^2/2 - t/theta + (1-e^{-theta t})/theta^2)
template <class S>
S Phi3(const S& a, const S& th, double t) {
    if (t <= 0.0) return S(0.0);
    const S x = th * t;
    if (value_of(x) < 1e-2) {
        const S x3 = x * x * x;
        return a / (th * th) * (x3 * (1.0 / 6.0 - x * (1.0 / 24.0) + x * x * (1.0 / 120.0) - x * x * x * (1.0 / 720.0)));
    }
    return a * (0.5 * t * t - t / th - expm1(-x) / (th * th));
}

}  // namespace kernel

// ---- data containers -----------------------------------------------------

struct EventHistory {
    double horizon = 0.0;
    std::vector<std::vector<double>> times;  // one sorted list per dimension

    EventHistory() = default;
    EventHistory(int d, double T) : horizon(T), times(static_cast<std::size_t>(d)) {}

    [[nodiscard]] int dims() const { return static_cast<int>(times.size()); }
    [[nodiscard]] std::size_t total() const {
        std::size_t n = 0;
        for (const auto& v : times) n += v.size();
        return n;
    }

    void validate() const {
        if (!(horizon > 0.0)) throw std::invalid_argument("history horizon must be positive");
        for (const auto& v : times) {
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (!(v[k] >= 0.0) || !(v[k] < horizon)) throw std::invalid_argument("event outside [0, T)");
                if (k > 0 && !(v[k] > v[k - 1])) throw std::invalid_argument("events must be strictly increasing");
            }
        }
    }
};

struct CensoredDim {
    int dim = 0;
    std::vector<double> boundaries;  // o_0 = 0 < o_1 < ...
    std::vector<long> counts;        // size boundaries - 1

    void validate() const {
        if (boundaries.size() < 2) throw std::invalid_argument("censored dimension needs >= 2 boundaries");
        if (boundaries.front() != 0.0) throw std::invalid_argument("first observation point must be 0");
        for (std::size_t k = 1; k < boundaries.size(); ++k)
            if (!(boundaries[k] > boundaries[k - 1])) throw std::invalid_argument("boundaries must increase");
        if (counts.size() + 1 != boundaries.size()) throw std::invalid_argument("counts/boundaries length mismatch");
        for (long c : counts)
            if (c < 0) throw std::invalid_argument("negative count");
    }
};

struct Dataset {
    double horizon = 0.0;
    EventHistory histories;           // d lists; lists for E dims stay empty
    std::vector<CensoredDim> counts;  // exactly the E dims, sorted by dim

    void validate(int d, int e) const {
        if (!(horizon > 0.0)) throw std::invalid_argument("dataset horizon must be positive");
        if (histories.dims() != d) throw DimensionError("dataset dimension count mismatch");
        if (static_cast<int>(counts.size()) != e) throw DimensionError("dataset must censor exactly the E dimensions");
        for (int j = 0; j < e; ++j) {
            const auto& c = counts[static_cast<std::size_t>(j)];
            if (c.dim != j) throw DimensionError("censored dims must be 0..e-1 in order");
            c.validate();
            if (c.boundaries.back() > horizon + 1e-12) throw std::invalid_argument("boundary beyond horizon");
            if (!histories.times[static_cast<std::size_t>(j)].empty())
                throw DimensionError("censored dimension also carries timestamps");
        }
        for (const auto& v : histories.times)
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (!(v[k] >= 0.0) || !(v[k] < horizon)) throw std::invalid_argument("event outside [0, T)");
                if (k > 0 && !(v[k] > v[k - 1])) throw std::invalid_argument("events must be strictly increasing");
            }
    }
};

struct RegularityReport {
    double rho_EE = 0.0;
    double rho_EcEc = 0.0;
    double rho_cross = 0.0;
    bool subcritical = true;
};

// ---- kernel matrices -----------------------------------------------------

inline MatrixD phi_eval(const ModelParams& p, double t) {
    const auto n = static_cast<std::size_t>(p.d);
    MatrixD m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = kernel::phi(p.alpha(i, j), p.theta(i, j), t);
    return m;
}

inline MatrixD phi_integral(const ModelParams& p, double t) {
    const auto n = static_cast<std::size_t>(p.d);
    MatrixD m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = kernel::Phi(p.alpha(i, j), p.theta(i, j), t);
    return m;
}

// masked kernel pair; the masks are expressed as parameter sets with zeroed alpha columns
struct SplitKernel {
    ModelParams E;   // columns e..d-1 zeroed
    ModelParams Ec;  // columns 0..e-1 zeroed

    [[nodiscard]] MatrixD phi_E(double t) const { return phi_eval(E, t); }
    [[nodiscard]] MatrixD phi_Ec(double t) const { return phi_eval(Ec, t); }
};

inline SplitKernel split_kernel(const ModelParams& p) {
    SplitKernel s{p, p};
    for (int i = 0; i < p.d; ++i)
        for (int j = 0; j < p.d; ++j) {
            const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
            if (j < p.e)
                s.Ec.alpha(ui, uj) = 0.0;
            else
                s.E.alpha(ui, uj) = 0.0;
        }
    return s;
}

inline RegularityReport check_subcriticality(const ModelParams& p) {
    const auto d = static_cast<std::size_t>(p.d), e = static_cast<std::size_t>(p.e);
    const std::size_t c = d - e;
    RegularityReport r;
    const MatrixD aEE = p.alpha.block(0, 0, e, e);
    const MatrixD aCC = p.alpha.block(e, e, c, c);
    r.rho_EE = spectral_radius(aEE);
    r.rho_EcEc = spectral_radius(aCC);
    if (e == 0 || c == 0) {
        r.rho_cross = 0.0;
    } else if (r.rho_EE >= 1.0) {
        r.rho_cross = std::numeric_limits<double>::infinity();
    } else {
        try {
            MatrixD cross = p.alpha.block(e, 0, c, e) * inverse(MatrixD::identity(e) - aEE) * p.alpha.block(0, e, e, c);
            for (std::size_t i = 0; i < c; ++i)
                for (std::size_t j = 0; j < c; ++j) cross(i, j) = std::max(cross(i, j), 0.0);
            r.rho_cross = spectral_radius(cross);
        } catch (const DegenerateParameterError&) {
            r.rho_cross = std::numeric_limits<double>::infinity();
        }
    }
    r.subcritical = r.rho_EE < 1.0 && r.rho_EcEc < 1.0 && r.rho_cross < 1.0;
    return r;
}

}  // namespace pmbp
