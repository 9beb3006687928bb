#include <cmath>

#include "doctest.h"
#include "smoothtest/numerics.hpp"
#include "smoothtest/rng.hpp"

using namespace smoothtest;

TEST_CASE("single-panel two-node rule integrates cubics exactly") {
    const QuadratureRule rule = gauss_legendre_rule(1, 2, -1.0, 1.0);
    REQUIRE(rule.size() == 2);
    CHECK(rule.nodes[0] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-14));
    CHECK(rule.nodes[1] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
    CHECK(rule.weights[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(rule.weights[1] == doctest::Approx(1.0).epsilon(1e-14));
    // Exact for x^k, k = 0..3: 2, 0, 2/3, 0.
    const double expected[4] = {2.0, 0.0, 2.0 / 3.0, 0.0};
    for (int k = 0; k <= 3; ++k) {
        const double got = rule.integrate([k](double x) { return std::pow(x, k); });
        CHECK(got == doctest::Approx(expected[k]).epsilon(1e-14));
    }
}

TEST_CASE("weights sum to the interval length") {
    for (const auto& [panels, nodes, lo, hi] :
         {std::tuple{1, 2, -1.0, 1.0}, {32, 16, 0.0, 1.0}, {7, 5, -3.5, 12.25}}) {
        const QuadratureRule rule = gauss_legendre_rule(panels, nodes, lo, hi);
        double sum = 0.0;
        for (double w : rule.weights) {
            CHECK(w > 0.0);
            sum += w;
        }
        CHECK(sum == doctest::Approx(hi - lo).epsilon(1e-12));
        for (double x : rule.nodes) {
            CHECK(x > lo);
            CHECK(x < hi);
        }
    }
}

TEST_CASE("default 512-node rule integrates u^2 on [0,1]") {
    const QuadratureRule rule = gauss_legendre_rule(32, 16, 0.0, 1.0);
    REQUIRE(rule.size() == 512);
    const double got = rule.integrate([](double u) { return u * u; });
    CHECK(std::abs(got - 1.0 / 3.0) < 1e-14);
}

TEST_CASE("invalid intervals are rejected") {
    CHECK_THROWS_AS(gauss_legendre_rule(1, 2, 1.0, 1.0), invalid_interval_error);
    CHECK_THROWS_AS(gauss_legendre_rule(1, 2, 2.0, 1.0), invalid_interval_error);
    CHECK_THROWS_AS(gauss_legendre_rule(1, 2, 0.0, std::numeric_limits<double>::infinity()),
                    invalid_interval_error);
    CHECK_THROWS_AS(gauss_legendre_rule(0, 2, 0.0, 1.0), invalid_interval_error);
}

TEST_CASE("breakpoint rule keeps the panel total and hits the breakpoints") {
    const double bp[] = {4.0};
    const QuadratureRule rule = gauss_legendre_rule_with_breakpoints(32, 16, -10.0, 10.0, bp);
    CHECK(rule.size() == 512);
    // No node may straddle the breakpoint's panel: 4.0 must be a panel edge,
    // so some pair of adjacent nodes brackets it with no node equal to it.
    for (double x : rule.nodes) CHECK(x != 4.0);
}

TEST_CASE("shifted Legendre values and orthonormality") {
    CHECK(legendre_shifted_normalized(0, 0.37) == 1.0);
    CHECK(legendre_shifted_normalized(1, 0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(legendre_shifted_normalized(2, 0.0) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
    // h2(u) = sqrt(5)(6u^2 - 6u + 1) from Gram-Schmidt on monomials.
    for (double u : {0.1, 0.25, 0.8}) {
        CHECK(legendre_shifted_normalized(2, u) ==
              doctest::Approx(std::sqrt(5.0) * (6.0 * u * u - 6.0 * u + 1.0)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(legendre_shifted_normalized(2, 1.5), evaluation_error);
    CHECK_THROWS_AS(legendre_shifted_normalized(-1, 0.5), parameter_error);

    // Degree-exact rule: nodes_per_panel = 14 handles products up to degree 24.
    const QuadratureRule rule = gauss_legendre_rule(8, 14, 0.0, 1.0);
    for (int i = 0; i <= 12; ++i) {
        for (int j = i; j <= 12; ++j) {
            const double ip = rule.integrate([i, j](double u) {
                return legendre_shifted_normalized(i, u) * legendre_shifted_normalized(j, u);
            });
            CHECK(std::abs(ip - (i == j ? 1.0 : 0.0)) < 1e-12);
        }
    }
}

TEST_CASE("batch Legendre evaluation matches the scalar recurrence") {
    double out[12];
    for (double u : {0.0, 0.123, 0.5, 0.999, 1.0}) {
        legendre_shifted_all(12, u, out);
        for (int j = 1; j <= 12; ++j)
            CHECK(out[j - 1] == doctest::Approx(legendre_shifted_normalized(j, u)).epsilon(1e-14));
    }
}

TEST_CASE("principal inverse square root") {
    SUBCASE("identity") {
        const SymMatrix s = principal_inverse_sqrt(SymMatrix::identity(3));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(s.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));
    }
    SUBCASE("diagonal") {
        SymMatrix m(2);
        m.at(0, 0) = 4.0;
        m.at(1, 1) = 9.0;
        const SymMatrix s = principal_inverse_sqrt(m);
        CHECK(s.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(s.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
        CHECK(std::abs(s.at(0, 1)) < 1e-14);
    }
    SUBCASE("random SPD: S S = m^{-1} and S m S = I, S commutes with m") {
        RngStream rng(7, 0);
        for (int rep = 0; rep < 20; ++rep) {
            const int p = 2 + static_cast<int>(rng.next_u32() % 5);
            // m = A A^T + 0.1 I.
            std::vector<double> a(static_cast<std::size_t>(p) * p);
            for (double& v : a) v = 2.0 * rng.uniform() - 1.0;
            SymMatrix m(p);
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) {
                    double acc = (i == j) ? 0.1 : 0.0;
                    for (int k = 0; k < p; ++k) acc += a[i * p + k] * a[j * p + k];
                    m.at(i, j) = acc;
                }
            const SymMatrix s = principal_inverse_sqrt(m);
            const SymMatrix sms = s.mul(m).mul(s);
            const SymMatrix ss = s.mul(s);
            const SymMatrix ms = m.mul(s);
            const SymMatrix sm = s.mul(m);
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) {
                    CHECK(std::abs(sms.at(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
                    CHECK(std::abs(ms.at(i, j) - sm.at(i, j)) < 1e-10);
                    // S S m = I  =>  S S = m^{-1}.
                    double acc = 0.0;
                    for (int k = 0; k < p; ++k) acc += ss.at(i, k) * m.at(k, j);
                    CHECK(std::abs(acc - (i == j ? 1.0 : 0.0)) < 1e-10);
                }
        }
    }
    SUBCASE("non-PD rejected") {
        SymMatrix m(2);
        m.at(0, 0) = 1.0;
        m.at(1, 1) = -2.0;
        CHECK_THROWS_AS(principal_inverse_sqrt(m), not_positive_definite_error);
    }
}

TEST_CASE("solve_spd") {
    SUBCASE("identity and diagonal") {
        const double v[] = {2.0, 5.0};
        auto x = solve_spd(SymMatrix::identity(2), v);
        CHECK(x[0] == 2.0);
        CHECK(x[1] == 5.0);
        SymMatrix d(2);
        d.at(0, 0) = 2.0;
        d.at(1, 1) = 5.0;
        x = solve_spd(d, v);
        CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("random SPD residual") {
        RngStream rng(11, 0);
        for (int rep = 0; rep < 20; ++rep) {
            const int p = 2 + static_cast<int>(rng.next_u32() % 6);
            std::vector<double> a(static_cast<std::size_t>(p) * p);
            for (double& v : a) v = 2.0 * rng.uniform() - 1.0;
            SymMatrix m(p);
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) {
                    double acc = (i == j) ? 0.05 : 0.0;
                    for (int k = 0; k < p; ++k) acc += a[i * p + k] * a[j * p + k];
                    m.at(i, j) = acc;
                }
            std::vector<double> v(p);
            for (double& c : v) c = 2.0 * rng.uniform() - 1.0;
            const auto x = solve_spd(m, v);
            double rnorm = 0.0, vnorm = 0.0;
            for (int i = 0; i < p; ++i) {
                double acc = -v[i];
                for (int j = 0; j < p; ++j) acc += m.at(i, j) * x[j];
                rnorm += acc * acc;
                vnorm += v[i] * v[i];
            }
            CHECK(std::sqrt(rnorm) < 1e-10 * std::sqrt(vnorm));
        }
    }
    SUBCASE("failure names the leading minor") {
        SymMatrix m(3);
        m.at(0, 0) = 1.0;
        m.at(1, 1) = -1.0;
        m.at(2, 2) = 1.0;
        const double v[] = {1.0, 1.0, 1.0};
        try {
            (void)solve_spd(m, v);
            FAIL("expected not_positive_definite_error");
        } catch (const not_positive_definite_error& e) {
            CHECK(std::string(e.what()).find("minor 2") != std::string::npos);
        }
    }
}

TEST_CASE("normal quantile inverts the normal CDF") {
    for (double p : {1e-12, 1e-6, 0.025, 0.31, 0.5, 0.84, 0.999, 1.0 - 1e-10}) {
        const double x = norm_quantile(p);
        CHECK(norm_cdf(x) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK(norm_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(norm_quantile(0.0), parameter_error);
}
