#include <cmath>

#include "doctest.h"
#include "smoothtest/basis.hpp"

using namespace smoothtest;

TEST_CASE("legendre basis on a model with no free parameters") {
    const auto m = uniform_model(-10.0, 10.0);
    const QuadratureRule rule = default_rule(*m);
    const BasisPtr basis = legendre_composed_basis(m, 6, rule);
    CHECK(basis->kind() == "legendre");
    // No projection: residuals coincide with raw compositions; Gram is the
    // identity.
    for (double x : {-9.0, -1.0, 0.5, 8.0})
        for (int j = 1; j <= 6; ++j)
            CHECK(basis->eval_residual(j, x) == doctest::Approx(basis->eval(j, x)).epsilon(1e-14));
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            CHECK(std::abs(basis->gram().at(i, j) - (i == j ? 1.0 : 0.0)) < 1e-8);
}

TEST_CASE("legendre basis invariants for the asymmetric Laplace, M = 10") {
    const auto m = asym_laplace_model(-10.0, 2.0, 0.1);
    const QuadratureRule rule = default_rule(*m);
    const BasisPtr basis = legendre_composed_basis(m, 10, rule);
    const OrthonormalScore b(m, rule);

    SUBCASE("raw functions are orthonormal under the model") {
        for (int i = 1; i <= 10; ++i)
            for (int j = i; j <= 10; ++j) {
                const double ip = rule.integrate([&](double x) {
                    return basis->eval(i, x) * basis->eval(j, x) * m->pdf(x);
                });
                CHECK(std::abs(ip - (i == j ? 1.0 : 0.0)) < 1e-8);
            }
    }
    SUBCASE("residuals are orthogonal to the score and mean zero") {
        for (int j = 1; j <= 10; ++j) {
            const double ipb = rule.integrate([&](double x) {
                return basis->eval_residual(j, x) * b.eval_vec(x)[0] * m->pdf(x);
            });
            CHECK(std::abs(ipb) < 1e-8);
            CHECK(std::abs(basis->residual_means()[j - 1]) < 1e-8);
        }
    }
    SUBCASE("residuals recompose from scratch to 1e-12") {
        // Independent projection coefficients.
        for (int j = 1; j <= 10; ++j) {
            const double c = rule.integrate([&](double x) {
                return basis->eval(j, x) * b.eval_vec(x)[0] * m->pdf(x);
            });
            for (double x : rule.nodes) {
                const double expect = basis->eval(j, x) - c * b.eval_vec(x)[0];
                CHECK(basis->eval_residual(j, x) == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
    SUBCASE("gram equals the independent recomposition") {
        for (int i = 1; i <= 10; ++i)
            for (int j = 1; j <= 10; ++j) {
                const double hij = rule.integrate([&](double x) {
                    return basis->eval(i, x) * basis->eval(j, x) * m->pdf(x);
                });
                const double ci = rule.integrate([&](double x) {
                    return basis->eval(i, x) * b.eval_vec(x)[0] * m->pdf(x);
                });
                const double cj = rule.integrate([&](double x) {
                    return basis->eval(j, x) * b.eval_vec(x)[0] * m->pdf(x);
                });
                CHECK(std::abs(basis->gram().at(i - 1, j - 1) - (hij - ci * cj)) < 1e-10);
            }
    }
    SUBCASE("batch residual evaluation matches per-index evaluation") {
        double out[10];
        for (double x : {-12.0, -10.0, -9.97, -5.0, 40.0}) {
            basis->eval_residual_all(x, out);
            for (int j = 1; j <= 10; ++j)
                CHECK(out[j - 1] == doctest::Approx(basis->eval_residual(j, x)).epsilon(1e-14));
        }
    }
}

TEST_CASE("doubling quadrature panels leaves inner products unchanged") {
    const auto m = asym_laplace_model(-10.0, 2.0, 0.1);
    const BasisPtr coarse = legendre_composed_basis(m, 8, default_rule(*m, 32, 16));
    const BasisPtr fine = legendre_composed_basis(m, 8, default_rule(*m, 64, 16));
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(std::abs(coarse->gram().at(i, j) - fine->gram().at(i, j)) < 1e-9);

    const auto g3 = mixture_model({trunc_normal_model(-4.0, 1.0, -10.0, 10.0),
                                   trunc_laplace_model(4.0, 1.0, -10.0, 10.0),
                                   uniform_model(-10.0, 10.0)},
                                  {0.25, 0.35, 0.4}, true);
    const BasisPtr c2 = legendre_composed_basis(g3, 6, default_rule(*g3, 32, 16));
    const BasisPtr f2 = legendre_composed_basis(g3, 6, default_rule(*g3, 64, 16));
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            CHECK(std::abs(c2->gram().at(i, j) - f2->gram().at(i, j)) < 1e-9);
}

TEST_CASE("empirical process evaluation") {
    const auto m = asym_laplace_model(-10.0, 2.0, 0.1);
    const QuadratureRule rule = default_rule(*m);
    const BasisPtr basis = legendre_composed_basis(m, 5, rule);

    SUBCASE("single observation reduces to the residual value") {
        const double x = -9.0;
        const std::vector<double> data = {x};
        for (int j = 1; j <= 5; ++j) {
            const double v = empirical_process(*basis, j, data);
            CHECK(v == doctest::Approx(basis->eval_residual(j, x) -
                                       basis->residual_means()[j - 1])
                           .epsilon(1e-12));
        }
    }
    SUBCASE("constant indexing function yields zero") {
        const std::vector<double> data = {-9.5, -8.0, 0.0, 25.0};
        const auto one = [](double) { return 1.0; };
        CHECK(std::abs(empirical_process(one, *m, data, rule)) < 1e-10);
    }
    SUBCASE("out-of-support observation names its index") {
        const auto u = uniform_model(0.0, 1.0);
        const BasisPtr ub = legendre_composed_basis(u, 3, default_rule(*u));
        const std::vector<double> data = {0.5, 0.7, 1.5};
        try {
            (void)empirical_process(*ub, 1, data);
            FAIL("expected support_violation_error");
        } catch (const support_violation_error& e) {
            CHECK(std::string(e.what()).find("2") != std::string::npos);
        }
    }
    SUBCASE("replicate variance of v matches the Gram diagonal") {
        // 2000 replicates of n = 50 from the model itself.
        const int reps = 2000, n = 50;
        std::vector<double> v1(reps);
        for (int r = 0; r < reps; ++r) {
            RngStream rng(555, static_cast<std::uint64_t>(r));
            std::vector<double> data(n);
            m->sample_n(rng, data);
            v1[r] = empirical_process(*basis, 1, data);
        }
        double mean = 0.0, var = 0.0;
        for (double v : v1) mean += v;
        mean /= reps;
        for (double v : v1) var += (v - mean) * (v - mean);
        var /= reps - 1;
        const double expect = basis->gram().at(0, 0);
        // Var of a sample variance of ~normal data: ~ 2 sigma^4 / (reps-1).
        const double se = expect * std::sqrt(2.0 / (reps - 1.0));
        CHECK(std::abs(var - expect) < 3.0 * se);
    }
}

TEST_CASE("estimated expansion coefficients") {
    const auto m = asym_laplace_model(-10.0, 2.0, 0.1);
    const BasisPtr basis = legendre_composed_basis(m, 6, default_rule(*m));

    SUBCASE("single observation returns the raw basis values") {
        const std::vector<double> data = {-9.3};
        const auto theta = estimate_coefficients(*basis, data);
        for (int j = 1; j <= 6; ++j)
            CHECK(theta[j - 1] == doctest::Approx(basis->eval(j, -9.3)).epsilon(1e-14));
    }
    SUBCASE("null data keeps every coefficient within the CLT band") {
        const int n = 4000;
        RngStream rng(808, 0);
        std::vector<double> data(n);
        m->sample_n(rng, data);
        const auto theta = estimate_coefficients(*basis, data);
        for (double t : theta) CHECK(std::abs(t) < 3.0 / std::sqrt(static_cast<double>(n)));
    }
    SUBCASE("a location shift pushes the first coefficient out of the band") {
        const int n = 10000;
        const auto shifted = asym_laplace_model(-9.0, 2.0, 0.1);
        RngStream rng(809, 0);
        std::vector<double> data(n);
        shifted->sample_n(rng, data);
        const auto theta = estimate_coefficients(*basis, data);
        CHECK(std::abs(theta[0]) > 3.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("estimation projection") {
    const auto m = trunc_normal_model(0.3, 1.4, -10.0, 10.0, true);
    const QuadratureRule rule = default_rule(*m);
    const BasisPtr basis = legendre_composed_basis(m, 4, rule);

    for (const auto kind : {EstimatorSpec::Kind::mle, EstimatorSpec::Kind::moments}) {
        CAPTURE(static_cast<int>(kind));
        const EstimatorSpec psi = psi_for(m, kind, rule);

        SUBCASE("score-orthogonal functions pass through unchanged") {
            for (int j = 1; j <= 4; ++j) {
                const auto h = [&, j](double x) { return basis->eval_residual(j, x); };
                const auto ph = projection_pi(h, m, psi, rule);
                for (double x : rule.nodes)
                    CHECK(ph(x) == doctest::Approx(h(x)).epsilon(1e-10).scale(1.0));
            }
        }
        SUBCASE("projection is idempotent") {
            const auto h = [&](double x) { return basis->eval(3, x); };
            const auto ph = projection_pi(h, m, psi, rule);
            const auto pph = projection_pi(ph, m, psi, rule);
            for (double x : rule.nodes)
                CHECK(pph(x) == doctest::Approx(ph(x)).epsilon(1e-10).scale(1.0));
        }
        SUBCASE("projected functions are orthogonal to the score") {
            const auto h = [&](double x) { return basis->eval(2, x); };
            const auto ph = projection_pi(h, m, psi, rule);
            for (int k = 0; k < 2; ++k) {
                const double ip = rule.integrate(
                    [&](double x) { return m->score_vec(x)[k] * ph(x) * m->pdf(x); });
                CHECK(std::abs(ip) < 1e-8);
            }
        }
    }
}
