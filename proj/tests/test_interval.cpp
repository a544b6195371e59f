#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sensnet/interval.hpp"
#include "sensnet/random.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace sensnet;

namespace {

// independent oracle: hull of the four endpoint products
Interval mul_oracle(const Interval& a, const Interval& b) {
    std::vector<double> p = {a.lo() * b.lo(), a.lo() * b.hi(), a.hi() * b.lo(), a.hi() * b.hi()};
    return hull(std::span<const double>(p));
}

// independent oracle: dense grid scan of f over [lo, hi]
Interval scan_range(const std::function<double(double)>& f, double lo, double hi, int n = 200001) {
    double mn = f(lo), mx = f(lo);
    for (int i = 1; i < n; ++i) {
        double x = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
        double v = f(x);
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    return {mn, mx};
}

Interval random_interval(Rng& rng, double lo = -5.0, double hi = 5.0) {
    double a = rng.uniform(lo, hi);
    double b = rng.uniform(lo, hi);
    return {std::min(a, b), std::max(a, b)};
}

} // namespace

TEST_CASE("construction normalizes and rejects NaN") {
    Interval a(3.0, 1.0);
    CHECK(a.lo() == 1.0);
    CHECK(a.hi() == 3.0);
    CHECK_THROWS_AS(Interval(std::nan(""), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(Interval(0.0, std::nan("")), std::invalid_argument);
    Interval p(5.0);
    CHECK(p.lo() == 5.0);
    CHECK(p.hi() == 5.0);
}

TEST_CASE("addition endpoints") {
    Interval r = Interval(1, 2) + Interval(3, 4);
    CHECK(r.lo() == 4.0);
    CHECK(r.hi() == 6.0);

    // primal-trace row: t00 + t01 + bias
    Interval k00 = Interval(0.12544, 1.2544) + Interval(0.0277, 0.277) + Interval(0.1619);
    CHECK(k00.lo() == doctest::Approx(0.31504).epsilon(1e-12));
    CHECK(k00.hi() == doctest::Approx(1.6933).epsilon(1e-12));

    Interval id = Interval(5, 5) + Interval(0, 0);
    CHECK(id.lo() == 5.0);
    CHECK(id.hi() == 5.0);
}

TEST_CASE("multiplication hull of endpoint products") {
    Interval t00 = Interval(1, 10) * Interval(0.12544);
    CHECK(t00.lo() == doctest::Approx(0.12544).epsilon(1e-15));
    CHECK(t00.hi() == doctest::Approx(1.2544).epsilon(1e-15));

    Interval t03 = Interval(1, 10) * Interval(-0.0023);
    CHECK(t03.lo() == doctest::Approx(-0.023).epsilon(1e-15));
    CHECK(t03.hi() == doctest::Approx(-0.0023).epsilon(1e-15));

    Interval r = Interval(-1, 2) * Interval(3, 4);
    Interval want = mul_oracle(Interval(-1, 2), Interval(3, 4));
    CHECK(r.lo() == want.lo()); // -4
    CHECK(r.hi() == want.hi()); // 8
    CHECK(r.lo() == -4.0);
    CHECK(r.hi() == 8.0);

    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        Interval a = random_interval(rng), b = random_interval(rng);
        CHECK((a * b) == mul_oracle(a, b));
    }
}

TEST_CASE("activation ranges") {
    Interval r = relu(Interval(0.315, 1.693));
    CHECK(r.lo() == 0.315);
    CHECK(r.hi() == 1.693);
    Interval n = relu(Interval(-2, -1));
    CHECK(n.lo() == 0.0);
    CHECK(n.hi() == 0.0);

    // silu over [-1,1]: the argmin is outside, so the range is exactly the
    // endpoint values
    Interval s = silu(Interval(-1, 1));
    CHECK(s.lo() == doctest::Approx(-0.26894142136999512).epsilon(1e-14));
    CHECK(s.hi() == doctest::Approx(0.73105857863000488).epsilon(1e-14));
    Interval scan = scan_range([](double x) { return silu(x); }, -1.0, 1.0);
    CHECK(s.lo() <= scan.lo());
    CHECK(s.hi() >= scan.hi());

    // argmin inside: lower bound extends to the global minimum
    Interval s2 = silu(Interval(-3, 1));
    Interval scan2 = scan_range([](double x) { return silu(x); }, -3.0, 1.0);
    CHECK(s2.lo() <= scan2.lo());
    CHECK(s2.lo() == doctest::Approx(-0.2784645427610738).epsilon(1e-12));
    CHECK(s2.hi() >= scan2.hi());

    Interval g = sigmoid(Interval(-1, 2));
    CHECK(g.lo() == doctest::Approx(sigmoid(-1.0)).epsilon(1e-15));
    CHECK(g.hi() == doctest::Approx(sigmoid(2.0)).epsilon(1e-15));
}

TEST_CASE("width midpoint max_abs contains") {
    CHECK(width(Interval(0.241, 0.733)) == doctest::Approx(0.492).epsilon(1e-12));
    CHECK(max_abs(Interval(0.4287, 0.4287)) == 0.4287);
    // significance-style product
    CHECK(width(Interval(0.241, 0.733)) * max_abs(Interval(0.4287, 0.4287)) ==
          doctest::Approx(0.21).epsilon(0.05));
    CHECK(midpoint(Interval(0.1034, 0.3141)) == doctest::Approx(0.20875).epsilon(1e-12));
    CHECK(contains(Interval(1, 10), 5.5));
    CHECK(!contains(Interval(1, 10), 0.9));
    CHECK(max_abs(Interval(-3, 1)) == 3.0);
}

TEST_CASE("hull and intersect") {
    std::vector<double> pts = {3.0, -1.0, 2.5};
    Interval h = hull(std::span<const double>(pts));
    CHECK(h.lo() == -1.0);
    CHECK(h.hi() == 3.0);
    std::vector<double> empty;
    CHECK_THROWS_AS(hull(std::span<const double>(empty)), std::invalid_argument);
    Interval i = intersect(Interval(0, 2), Interval(1, 3));
    CHECK(i.lo() == 1.0);
    CHECK(i.hi() == 2.0);
    CHECK_THROWS_AS(intersect(Interval(0, 1), Interval(2, 3)), std::domain_error);
}

TEST_CASE("division and log reject invalid domains") {
    CHECK_THROWS_AS(Interval(1, 2) / Interval(-1, 1), std::domain_error);
    CHECK_THROWS_AS(Interval(1, 2) / Interval(0, 1), std::domain_error);
    Interval q = Interval(1, 2) / Interval(2, 4);
    CHECK(q.lo() == 0.25);
    CHECK(q.hi() == 1.0);
    CHECK_THROWS_AS(log(Interval(-1, 2)), std::domain_error);
    CHECK_THROWS_AS(log(Interval(0, 2)), std::domain_error);
}

TEST_CASE("trig ranges are exact") {
    constexpr double pi = 3.141592653589793238462643383279502884;
    Interval c = cos(Interval(0.1, 0.2));
    CHECK(c.lo() == doctest::Approx(std::cos(0.2)).epsilon(1e-15));
    CHECK(c.hi() == doctest::Approx(std::cos(0.1)).epsilon(1e-15));
    Interval c2 = cos(Interval(-0.5, 0.5)); // maximum at 0
    CHECK(c2.hi() == 1.0);
    Interval c3 = cos(Interval(pi - 0.1, pi + 0.1)); // minimum at pi
    CHECK(c3.lo() == -1.0);
    Interval s = sin(Interval(0.0, 4.0)); // peak at pi/2, trough past pi
    CHECK(s.hi() == 1.0);
    CHECK(s.lo() == doctest::Approx(std::sin(4.0)).epsilon(1e-15));
    Interval wide = sin(Interval(0.0, 10.0));
    CHECK(wide.lo() == -1.0);
    CHECK(wide.hi() == 1.0);
}

namespace {

struct UnaryCase {
    const char* name;
    std::function<Interval(const Interval&)> iv;
    std::function<double(double)> fn;
    double lo, hi; // sampling domain
};

} // namespace

TEST_CASE("inclusion property over 1e5 random pairs per op") {
    std::vector<UnaryCase> cases = {
        {"neg", [](const Interval& a) { return -a; }, [](double x) { return -x; }, -5, 5},
        {"exp", [](const Interval& a) { return exp(a); }, [](double x) { return std::exp(x); }, -5,
         5},
        {"log", [](const Interval& a) { return log(a); }, [](double x) { return std::log(x); },
         0.01, 10},
        {"sin", [](const Interval& a) { return sin(a); }, [](double x) { return std::sin(x); }, -8,
         8},
        {"cos", [](const Interval& a) { return cos(a); }, [](double x) { return std::cos(x); }, -8,
         8},
        {"relu", [](const Interval& a) { return relu(a); }, [](double x) { return relu(x); }, -5,
         5},
        {"sigmoid", [](const Interval& a) { return sigmoid(a); },
         [](double x) { return sigmoid(x); }, -5, 5},
        {"silu", [](const Interval& a) { return silu(a); }, [](double x) { return silu(x); }, -5,
         5},
        {"silu_grad", [](const Interval& a) { return silu_grad(a); },
         [](double x) { return silu_prime(x); }, -5, 5},
        {"sigmoid_grad", [](const Interval& a) { return sigmoid_grad(a); },
         [](double x) { return sigmoid_grad(x); }, -5, 5},
        {"norm_cdf", [](const Interval& a) { return norm_cdf(a); },
         [](double x) { return norm_cdf(x); }, -5, 5},
        {"norm_pdf", [](const Interval& a) { return norm_pdf(a); },
         [](double x) { return norm_pdf(x); }, -5, 5},
    };

    Rng rng(42);
    for (const auto& c : cases) {
        INFO(c.name);
        int violations = 0;
        for (int i = 0; i < 100000; ++i) {
            Interval a = random_interval(rng, c.lo, c.hi);
            double p = rng.uniform(a.lo(), a.hi());
            if (!contains(c.iv(a), c.fn(p))) ++violations;
        }
        CHECK(violations == 0);
    }

    // binary ops
    int violations = 0;
    for (int i = 0; i < 100000; ++i) {
        Interval a = random_interval(rng), b = random_interval(rng);
        double p = rng.uniform(a.lo(), a.hi());
        double q = rng.uniform(b.lo(), b.hi());
        if (!contains(a + b, p + q)) ++violations;
        if (!contains(a - b, p - q)) ++violations;
        if (!contains(a * b, p * q)) ++violations;
        double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        Interval d(sign * rng.uniform(0.1, 4.0), sign * rng.uniform(0.1, 4.0));
        double r = rng.uniform(d.lo(), d.hi());
        if (!contains(a / d, p / r)) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("isotonicity on nested pairs") {
    Rng rng(123);
    std::vector<UnaryCase> cases = {
        {"exp", [](const Interval& a) { return exp(a); }, nullptr, -4, 4},
        {"log", [](const Interval& a) { return log(a); }, nullptr, 0.01, 10},
        {"sin", [](const Interval& a) { return sin(a); }, nullptr, -8, 8},
        {"cos", [](const Interval& a) { return cos(a); }, nullptr, -8, 8},
        {"relu", [](const Interval& a) { return relu(a); }, nullptr, -5, 5},
        {"sigmoid", [](const Interval& a) { return sigmoid(a); }, nullptr, -5, 5},
        {"silu", [](const Interval& a) { return silu(a); }, nullptr, -5, 5},
    };
    for (const auto& c : cases) {
        INFO(c.name);
        for (int i = 0; i < 20000; ++i) {
            Interval b = random_interval(rng, c.lo, c.hi);
            double u = rng.uniform(b.lo(), b.hi());
            double v = rng.uniform(b.lo(), b.hi());
            Interval a(std::min(u, v), std::max(u, v));
            CHECK(subset(c.iv(a), c.iv(b)));
        }
    }
    for (int i = 0; i < 20000; ++i) {
        Interval b1 = random_interval(rng), b2 = random_interval(rng);
        double u = rng.uniform(b1.lo(), b1.hi()), v = rng.uniform(b1.lo(), b1.hi());
        Interval a1(std::min(u, v), std::max(u, v));
        u = rng.uniform(b2.lo(), b2.hi());
        v = rng.uniform(b2.lo(), b2.hi());
        Interval a2(std::min(u, v), std::max(u, v));
        CHECK(subset(a1 + a2, b1 + b2));
        CHECK(subset(a1 * a2, b1 * b2));
        CHECK(subset(a1 - a2, b1 - b2));
    }
}

TEST_CASE("point-interval consistency") {
    Rng rng(9);
    for (int i = 0; i < 20000; ++i) {
        double p = rng.uniform(-5, 5), q = rng.uniform(-5, 5);
        Interval a(p), b(q);
        CHECK((a + b) == Interval(p + q));
        CHECK((a - b) == Interval(p - q));
        CHECK((a * b) == Interval(p * q));
        if (std::abs(q) > 1e-3) CHECK((a / b) == Interval(p / q));
        CHECK(exp(a) == Interval(std::exp(p)));
        CHECK(sin(a) == Interval(std::sin(p)));
        CHECK(cos(a) == Interval(std::cos(p)));
        CHECK(relu(a) == Interval(relu(p)));
        CHECK(sigmoid(a) == Interval(sigmoid(p)));
        CHECK(silu(a) == Interval(silu(p)));
        if (p > 0.01) CHECK(log(a) == Interval(std::log(p)));
    }
}

TEST_CASE("scalar summary invariants") {
    Rng rng(5);
    for (int i = 0; i < 20000; ++i) {
        Interval a = random_interval(rng);
        CHECK(width(a) >= 0.0);
        CHECK(a.lo() <= midpoint(a));
        CHECK(midpoint(a) <= a.hi());
        CHECK(max_abs(a) >= 0.0);
    }
}
