#pragma once

// Forward-mode dual numbers with a fixed tangent capacity. Used to
// differentiate the likelihood without hand-deriving every table partial.

#include <array>
#include <cmath>
#include <cstddef>

namespace pmbp {

template <std::size_t N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double x) : v(x) {}  // NOLINT: implicit on purpose

    static Dual variable(double x, std::size_t k) {
        Dual r(x);
        r.d[k] = 1.0;
        return r;
    }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (std::size_t k = 0; k < N; ++k) d[k] += o.d[k];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (std::size_t k = 0; k < N; ++k) d[k] -= o.d[k];
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        for (std::size_t k = 0; k < N; ++k) d[k] = d[k] * o.v + v * o.d[k];
        v *= o.v;
        return *this;
    }
    Dual& operator*=(double s) {
        v *= s;
        for (std::size_t k = 0; k < N; ++k) d[k] *= s;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        const double inv = 1.0 / o.v;
        const double q = v * inv;
        for (std::size_t k = 0; k < N; ++k) d[k] = (d[k] - q * o.d[k]) * inv;
        v = q;
        return *this;
    }
};

template <std::size_t N> inline Dual<N> operator-(Dual<N> a) {
    a.v = -a.v;
    for (auto& x : a.d) x = -x;
    return a;
}
template <std::size_t N> inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <std::size_t N> inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <std::size_t N> inline Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <std::size_t N> inline Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }
template <std::size_t N> inline Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <std::size_t N> inline Dual<N> operator+(double b, Dual<N> a) { a.v += b; return a; }
template <std::size_t N> inline Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <std::size_t N> inline Dual<N> operator-(double b, const Dual<N>& a) { return -a + b; }
template <std::size_t N> inline Dual<N> operator*(Dual<N> a, double b) { return a *= b; }
template <std::size_t N> inline Dual<N> operator*(double b, Dual<N> a) { return a *= b; }
template <std::size_t N> inline Dual<N> operator/(Dual<N> a, double b) { return a *= (1.0 / b); }
template <std::size_t N> inline Dual<N> operator/(double b, const Dual<N>& a) { return Dual<N>(b) / a; }

template <std::size_t N> inline bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.v < b.v; }
template <std::size_t N> inline bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.v > b.v; }
template <std::size_t N> inline bool operator<(const Dual<N>& a, double b) { return a.v < b; }
template <std::size_t N> inline bool operator>(const Dual<N>& a, double b) { return a.v > b; }
template <std::size_t N> inline bool operator<=(const Dual<N>& a, double b) { return a.v <= b; }
template <std::size_t N> inline bool operator>=(const Dual<N>& a, double b) { return a.v >= b; }

// chain rule helper: f(a) with f'(a) = df
template <std::size_t N> inline Dual<N> chain(const Dual<N>& a, double f, double df) {
    Dual<N> r(f);
    for (std::size_t k = 0; k < N; ++k) r.d[k] = df * a.d[k];
    return r;
}

template <std::size_t N> inline Dual<N> exp(const Dual<N>& a) {
    const double e = std::exp(a.v);
    return chain(a, e, e);
}
template <std::size_t N> inline Dual<N> expm1(const Dual<N>& a) {
    return chain(a, std::expm1(a.v), std::exp(a.v));
}
template <std::size_t N> inline Dual<N> log(const Dual<N>& a) {
    return chain(a, std::log(a.v), 1.0 / a.v);
}
template <std::size_t N> inline Dual<N> sqrt(const Dual<N>& a) {
    const double s = std::sqrt(a.v);
    return chain(a, s, 0.5 / s);
}

// value extraction usable for both double and Dual
inline double value_of(double x) { return x; }
template <std::size_t N> inline double value_of(const Dual<N>& x) { return x.v; }

template <class S> inline S scalar_max(const S& a, double b) { return value_of(a) < b ? S(b) : a; }

}  // namespace pmbp
