#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace sensnet {

// Scalar activation helpers shared by the real and interval evaluation paths.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_prime(double x) {
    double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

inline double silu_second(double x) {
    double s = sigmoid(x);
    double sp = s * (1.0 - s);
    return sp * (2.0 + x * (1.0 - 2.0 * s));
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// relu'(0) = 1: the kink convention for indicator-style payoffs
inline double relu_grad(double x) { return x >= 0.0 ? 1.0 : 0.0; }
inline double sigmoid_grad(double x) {
    double s = sigmoid(x);
    return s * (1.0 - s);
}
inline double silu_grad(double x) { return silu_prime(x); }

// Location and value of the global minimum of silu, outward-rounded so the
// constants always bound the true values.
inline constexpr double kSiluArgmin = -1.2784645427610738;
inline constexpr double kSiluMin = -0.2784645427610739;
// Global range of silu'.
inline constexpr double kSiluPrimeMin = -0.0998393201288670;
inline constexpr double kSiluPrimeMax = 1.0998393201288670;

// Closed real interval [lo, hi]. Bounds are computed with nearest rounding
// and no outward adjustment: enclosures are practical, not formally verified.
class Interval {
public:
    Interval() : lo_(0.0), hi_(0.0) {}

    // degenerate point interval
    Interval(double p) : lo_(p), hi_(p) { check(p, p); }

    Interval(double lo, double hi) : lo_(std::min(lo, hi)), hi_(std::max(lo, hi)) {
        check(lo, hi);
    }

    double lo() const { return lo_; }
    double hi() const { return hi_; }

    bool operator==(const Interval& o) const { return lo_ == o.lo_ && hi_ == o.hi_; }

private:
    static void check(double lo, double hi) {
        if (std::isnan(lo) || std::isnan(hi))
            throw std::invalid_argument("Interval: NaN bound");
    }

    double lo_;
    double hi_;
};

inline double width(const Interval& a) { return a.hi() - a.lo(); }
inline double midpoint(const Interval& a) { return 0.5 * (a.lo() + a.hi()); }
inline double max_abs(const Interval& a) { return std::max(std::abs(a.lo()), std::abs(a.hi())); }
inline bool contains(const Interval& a, double p) { return a.lo() <= p && p <= a.hi(); }
inline bool subset(const Interval& a, const Interval& b) {
    return b.lo() <= a.lo() && a.hi() <= b.hi();
}

inline Interval hull(std::span<const double> points) {
    if (points.empty()) throw std::invalid_argument("hull: empty point set");
    double lo = points[0], hi = points[0];
    for (double p : points) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    return {lo, hi};
}

inline Interval hull(const Interval& a, const Interval& b) {
    return {std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi())};
}

inline Interval intersect(const Interval& a, const Interval& b) {
    double lo = std::max(a.lo(), b.lo());
    double hi = std::min(a.hi(), b.hi());
    if (lo > hi) throw std::domain_error("intersect: empty intersection");
    return {lo, hi};
}

inline Interval operator+(const Interval& a, const Interval& b) {
    return {a.lo() + b.lo(), a.hi() + b.hi()};
}

inline Interval operator-(const Interval& a, const Interval& b) {
    return {a.lo() - b.hi(), a.hi() - b.lo()};
}

inline Interval operator-(const Interval& a) { return {-a.hi(), -a.lo()}; }

inline Interval operator*(const Interval& a, const Interval& b) {
    double p1 = a.lo() * b.lo();
    double p2 = a.lo() * b.hi();
    double p3 = a.hi() * b.lo();
    double p4 = a.hi() * b.hi();
    return {std::min(std::min(p1, p2), std::min(p3, p4)),
            std::max(std::max(p1, p2), std::max(p3, p4))};
}

inline Interval operator/(const Interval& a, const Interval& b) {
    if (b.lo() <= 0.0 && 0.0 <= b.hi())
        throw std::domain_error("Interval division by interval containing zero");
    double q1 = a.lo() / b.lo();
    double q2 = a.lo() / b.hi();
    double q3 = a.hi() / b.lo();
    double q4 = a.hi() / b.hi();
    return {std::min(std::min(q1, q2), std::min(q3, q4)),
            std::max(std::max(q1, q2), std::max(q3, q4))};
}

inline Interval& operator+=(Interval& a, const Interval& b) { return a = a + b; }
inline Interval& operator-=(Interval& a, const Interval& b) { return a = a - b; }
inline Interval& operator*=(Interval& a, const Interval& b) { return a = a * b; }
inline Interval& operator/=(Interval& a, const Interval& b) { return a = a / b; }

inline Interval exp(const Interval& a) { return {std::exp(a.lo()), std::exp(a.hi())}; }

inline Interval log(const Interval& a) {
    if (a.lo() <= 0.0) throw std::domain_error("Interval log of non-positive bound");
    return {std::log(a.lo()), std::log(a.hi())};
}

namespace detail {
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// exact range of cos/sin: endpoint values plus any critical points inside
inline Interval trig_range(const Interval& a, bool is_cos) {
    if (width(a) >= 2.0 * kPi) return {-1.0, 1.0};
    double f_lo = is_cos ? std::cos(a.lo()) : std::sin(a.lo());
    double f_hi = is_cos ? std::cos(a.hi()) : std::sin(a.hi());
    double lo = std::min(f_lo, f_hi);
    double hi = std::max(f_lo, f_hi);
    // critical points: k*pi for cos, (k+1/2)*pi for sin
    double shift = is_cos ? 0.0 : 0.5;
    double kmin = std::ceil(a.lo() / kPi - shift);
    double kmax = std::floor(a.hi() / kPi - shift);
    for (double k = kmin; k <= kmax && k <= kmin + 2.0; k += 1.0) {
        bool even = std::fmod(std::abs(k), 2.0) < 0.5;
        if (even) hi = 1.0;
        else lo = -1.0;
    }
    return {lo, hi};
}
} // namespace detail

inline Interval cos(const Interval& a) { return detail::trig_range(a, true); }
inline Interval sin(const Interval& a) { return detail::trig_range(a, false); }

inline Interval relu(const Interval& a) {
    return {std::max(a.lo(), 0.0), std::max(a.hi(), 0.0)};
}

inline Interval sigmoid(const Interval& a) {
    return {sigmoid(a.lo()), sigmoid(a.hi())};
}

// Range of x*sigmoid(x): endpoint values, extended to the global minimum
// when the argmin lies inside the interval (silu is unimodal).
inline Interval silu(const Interval& a) {
    double f_lo = silu(a.lo());
    double f_hi = silu(a.hi());
    double lo = std::min(f_lo, f_hi);
    double hi = std::max(f_lo, f_hi);
    if (a.lo() < kSiluArgmin && kSiluArgmin < a.hi()) lo = std::min(lo, kSiluMin);
    return {lo, hi};
}

// Local derivative enclosures used by interval reverse sweeps.
// ReLU: exact subderivative hull; [0,1] when the interval crosses zero.
inline Interval relu_grad(const Interval& a) {
    if (a.lo() > 0.0) return {1.0, 1.0};
    if (a.hi() <= 0.0) return {0.0, 0.0};
    return {0.0, 1.0};
}

inline Interval sigmoid_grad(const Interval& a) {
    Interval s = sigmoid(a);
    Interval g = s * (Interval(1.0) - s);
    return intersect(g, Interval(0.0, 0.25));
}

// natural extension of s*(1 + x*(1-s)) clipped to the global range of silu'
inline Interval silu_grad(const Interval& a) {
    Interval s = sigmoid(a);
    Interval g = s * (Interval(1.0) + a * (Interval(1.0) - s));
    return intersect(g, Interval(kSiluPrimeMin, kSiluPrimeMax));
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }
inline double norm_pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

inline Interval norm_cdf(const Interval& a) { return {norm_cdf(a.lo()), norm_cdf(a.hi())}; }

// unimodal with maximum at 0
inline Interval norm_pdf(const Interval& a) {
    double f_lo = norm_pdf(a.lo());
    double f_hi = norm_pdf(a.hi());
    double hi = contains(a, 0.0) ? norm_pdf(0.0) : std::max(f_lo, f_hi);
    return {std::min(f_lo, f_hi), hi};
}

} // namespace sensnet
