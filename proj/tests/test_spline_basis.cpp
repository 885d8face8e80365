#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sshape/rng.hpp"
#include "sshape/spline_basis.hpp"

using namespace sshape;

namespace {

// Independent oracle: textbook Cox-de Boor recursion on the clamped knot
// vector, with the last span treated as closed.
double cox_de_boor(const std::vector<double>& T, int i, int k, double t) {
    if (k == 0) {
        const double hi = T[i + 1];
        const bool last = hi == T.back();
        if (t >= T[i] && (t < hi || (last && t <= hi))) return T[i] < hi ? 1.0 : 0.0;
        return 0.0;
    }
    double left = 0.0, right = 0.0;
    if (T[i + k] > T[i])
        left = (t - T[i]) / (T[i + k] - T[i]) * cox_de_boor(T, i, k - 1, t);
    if (T[i + k + 1] > T[i + 1])
        right = (T[i + k + 1] - t) / (T[i + k + 1] - T[i + 1]) *
                cox_de_boor(T, i + 1, k - 1, t);
    return left + right;
}

std::vector<double> clamp_knots(const std::vector<double>& knots) {
    std::vector<double> T(2, knots.front());
    T.insert(T.end(), knots.begin(), knots.end());
    T.insert(T.end(), 2, knots.back());
    return T;
}

BasisSpec random_basis(Rng& rng, int m) {
    std::vector<double> knots(m - 1);
    double t = rng.uniform(0.0, 10.0);
    for (auto& k : knots) {
        k = t;
        t += rng.uniform(0.5, 3.0);
    }
    return BasisSpec(m, knots);
}

}  // namespace

TEST_CASE("quadratic bases form a partition of unity") {
    Rng rng(101);
    const BasisSpec spec = random_basis(rng, 10);
    for (int i = 0; i <= 1000; ++i) {
        const double t = spec.lower() + (spec.upper() - spec.lower()) * i / 1000.0;
        REQUIRE(std::abs(spec.bspline(t).sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("bases match the Cox-de Boor recursion") {
    Rng rng(102);
    for (int rep = 0; rep < 3; ++rep) {
        const BasisSpec spec = random_basis(rng, 6 + 3 * rep);
        const auto T = clamp_knots(spec.knots());
        for (int i = 0; i < 200; ++i) {
            const double t = rng.uniform(spec.lower(), spec.upper());
            const Eigen::VectorXd b = spec.bspline(t);
            for (int m = 0; m < spec.basis_count(); ++m)
                REQUIRE(b[m] == Catch::Approx(cox_de_boor(T, m, 2, t)).margin(1e-12));
        }
        // closed right end
        const Eigen::VectorXd b = spec.bspline(spec.upper());
        REQUIRE(b[spec.basis_count() - 1] == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("left boundary loads only the leading basis") {
    Rng rng(103);
    const BasisSpec spec = random_basis(rng, 9);
    const Eigen::VectorXd b = spec.bspline(spec.lower());
    REQUIRE(b[0] == Catch::Approx(1.0).margin(1e-14));
    for (int m = 1; m < spec.basis_count(); ++m) REQUIRE(b[m] == 0.0);
}

TEST_CASE("uniform-knot interior basis peaks at 0.75") {
    std::vector<double> knots;
    for (int i = 0; i <= 8; ++i) knots.push_back(double(i));
    const BasisSpec spec(10, knots);
    // basis m = 5 (1-based) supported on [2, 5]; central interval [3, 4]
    REQUIRE(spec.bspline(3.5)[4] == Catch::Approx(0.75).margin(1e-13));
}

TEST_CASE("basis support is exact") {
    Rng rng(104);
    const BasisSpec spec = random_basis(rng, 11);
    const auto& z = spec.knots();
    const int m_total = spec.basis_count();
    for (int i = 0; i <= 500; ++i) {
        const double t = spec.lower() + (spec.upper() - spec.lower()) * i / 500.0;
        const Eigen::VectorXd b = spec.bspline(t);
        for (int m = 1; m <= m_total; ++m) {
            const double lo = z[std::max(1, m - 2) - 1];
            const double hi = z[std::min(m_total - 1, m + 1) - 1];
            if (t < lo || t > hi) REQUIRE(b[m - 1] == 0.0);
        }
    }
}

TEST_CASE("integrated splines vanish at L and accumulate full mass") {
    Rng rng(105);
    const BasisSpec spec = random_basis(rng, 12);
    REQUIRE(spec.ispline(spec.lower()).norm() == 0.0);
    const auto& z = spec.knots();
    const Eigen::VectorXd at_u = spec.ispline(spec.upper());
    for (int m = 3; m <= spec.basis_count() - 2; ++m)
        REQUIRE(at_u[m - 1] ==
                Catch::Approx((z[m] - z[m - 3]) / 3.0).epsilon(1e-12));
}

TEST_CASE("integrated splines match quadrature of the bases") {
    Rng rng(106);
    const BasisSpec spec = random_basis(rng, 9);
    for (int rep = 0; rep < 20; ++rep) {
        const double t = rng.uniform(spec.lower(), spec.upper());
        const Eigen::VectorXd is = spec.ispline(t);
        for (int m = 0; m < spec.basis_count(); ++m) {
            const double oracle = simpson(
                [&](double s) { return spec.bspline(s)[m]; }, spec.lower(), t, 2000);
            REQUIRE(is[m] == Catch::Approx(oracle).margin(1e-9));
        }
    }
}

TEST_CASE("integrated splines are componentwise nondecreasing") {
    Rng rng(107);
    const BasisSpec spec = random_basis(rng, 10);
    Eigen::VectorXd prev = spec.ispline(spec.lower());
    for (int i = 1; i <= 400; ++i) {
        const double t = spec.lower() + (spec.upper() - spec.lower()) * i / 400.0;
        const Eigen::VectorXd cur = spec.ispline(t);
        REQUIRE(((cur - prev).array() >= -1e-14).all());
        prev = cur;
    }
}

TEST_CASE("curve evaluation and its derivative are consistent") {
    Rng rng(108);
    const BasisSpec spec = random_basis(rng, 10);
    const int m_total = spec.basis_count();

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(m_total);
    auto [v0, d0] = spec.curve(zero, 0.5 * (spec.lower() + spec.upper()));
    REQUIRE(v0 == 0.0);
    REQUIRE(d0 == 0.0);

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(m_total);
    for (int i = 0; i <= 50; ++i) {
        const double t = spec.lower() + (spec.upper() - spec.lower()) * i / 50.0;
        REQUIRE(spec.curve(ones, t).second == Catch::Approx(1.0).margin(1e-12));
    }

    Eigen::VectorXd gamma(m_total);
    for (int m = 0; m < m_total; ++m) gamma[m] = rng.uniform();
    for (int rep = 0; rep < 10; ++rep) {
        const double t = rng.uniform(spec.lower(), spec.upper());
        const double quad = simpson(
            [&](double s) { return spec.curve(gamma, s).second; }, spec.lower(), t,
            4000);
        REQUIRE(spec.curve(gamma, t).first == Catch::Approx(quad).margin(1e-6));
    }

    // fundamental theorem by central differences
    for (int i = 1; i < 100; ++i) {
        const double t =
            spec.lower() + (spec.upper() - spec.lower()) * i / 100.0;
        const double h = 1e-5;
        const double fd =
            (spec.curve(gamma, t + h).first - spec.curve(gamma, t - h).first) /
            (2 * h);
        REQUIRE(fd == Catch::Approx(spec.curve(gamma, t).second).margin(1e-6));
    }
}

TEST_CASE("curve extends flat beyond the knot range") {
    Rng rng(109);
    const BasisSpec spec = random_basis(rng, 8);
    Eigen::VectorXd gamma = Eigen::VectorXd::Ones(8);
    auto [vl, dl] = spec.curve(gamma, spec.lower() - 5.0);
    REQUIRE(vl == 0.0);
    REQUIRE(dl == 0.0);
    auto [vu, du] = spec.curve(gamma, spec.upper() + 5.0);
    REQUIRE(vu == Catch::Approx(gamma.dot(spec.ispline(spec.upper()))));
    REQUIRE(du == 0.0);
}

TEST_CASE("beta kernel shapes and mode") {
    const SmoothedAgeDensity d({60.0}, 10.0);
    const auto [a, b] = d.kernel_shapes(60.0);
    REQUIRE(a == Catch::Approx(6.0));
    REQUIRE(b == Catch::Approx(6.0));

    double best_t = 0.0, best = -1.0;
    for (int i = 0; i <= 2400; ++i) {
        const double t = 120.0 * i / 2400.0;
        const double v = d.pdf(t);
        if (v > best) {
            best = v;
            best_t = t;
        }
    }
    REQUIRE(std::abs(best_t - 60.0) <= 0.1);
}

TEST_CASE("smoothed density integrates to one") {
    Rng rng(110);
    std::vector<double> pts;
    for (int i = 0; i < 40; ++i) pts.push_back(rng.uniform(20.0, 100.0));
    const SmoothedAgeDensity d(pts, 10.0);
    const double mass =
        simpson([&](double t) { return d.pdf(t); }, 0.0, 120.0, 8192);
    REQUIRE(mass == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("density rejects invalid inputs") {
    REQUIRE_THROWS_AS(SmoothedAgeDensity({}, 10.0), Error);
    REQUIRE_THROWS_AS(SmoothedAgeDensity({130.0}, 10.0), Error);
    REQUIRE_THROWS_AS(SmoothedAgeDensity({60.0}, 0.0), Error);
}

TEST_CASE("near-uniform density yields evenly spaced knots") {
    const SmoothedAgeDensity d({10.0, 50.0, 110.0}, 1e-9);
    const BasisSpec spec = build_knots(d, 6, 0.0, 120.0);
    const std::vector<double> expect{0.0, 30.0, 60.0, 90.0, 120.0};
    REQUIRE(spec.knots().size() == 5);
    for (int i = 0; i < 5; ++i)
        REQUIRE(spec.knots()[i] == Catch::Approx(expect[i]).margin(1e-5));
}

TEST_CASE("knot builder matches Monte Carlo quantiles of the density") {
    Rng rng(111);
    std::vector<double> pts;
    for (int i = 0; i < 1000; ++i) pts.push_back(rng.uniform(50.0, 90.0));
    const SmoothedAgeDensity d(pts, 10.0);
    const BasisSpec spec = build_knots(d, 24, 0.0, 120.0);

    // sample the mixture directly: pick a kernel, draw its beta variate
    std::vector<double> draws;
    for (int i = 0; i < 200000; ++i) {
        const double p = pts[static_cast<std::size_t>(rng.uniform() * pts.size())];
        const auto [a, b] = d.kernel_shapes(p);
        const double x = rng.gamma(a, 1.0);
        const double y = rng.gamma(b, 1.0);
        draws.push_back(120.0 * x / (x + y));
    }
    std::sort(draws.begin(), draws.end());
    std::vector<double> interior(spec.knots().begin() + 1, spec.knots().end() - 1);
    for (std::size_t k = 0; k < interior.size(); ++k) {
        const double level = double(k + 1) / 22.0;
        const double oracle = quantile_of_sorted(draws, level);
        REQUIRE(interior[k] == Catch::Approx(oracle).margin(0.5));
    }
    const double median = interior[interior.size() / 2];
    REQUIRE(median > 60.0);
    REQUIRE(median < 80.0);

    // determinism: bit-identical on rebuild
    const BasisSpec again = build_knots(d, 24, 0.0, 120.0);
    for (std::size_t i = 0; i < spec.knots().size(); ++i)
        REQUIRE(spec.knots()[i] == again.knots()[i]);
}

TEST_CASE("basic validation errors") {
    REQUIRE_THROWS_AS(BasisSpec(6, {0.0, 1.0, 1.0, 2.0, 3.0}), Error);
    REQUIRE_THROWS_AS(BasisSpec(6, {0.0, 1.0, 2.0}), Error);
    Rng rng(112);
    const BasisSpec spec = random_basis(rng, 8);
    REQUIRE_THROWS_AS(spec.bspline(spec.lower() - 1.0), Error);
    REQUIRE_THROWS_AS(spec.curve(Eigen::VectorXd::Zero(3), spec.lower()), Error);
}
