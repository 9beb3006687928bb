#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "smoothtest/models.hpp"

using namespace smoothtest;

namespace {

// Families exercised across the suite: the mixture studies share the
// [-10,10] support with a truncated-normal reference.
ModelPtr sec42_truth() {
    return mixture_model({trunc_normal_model(-5.0, 3.0, -10.0, 10.0),
                          trunc_laplace_model(5.0, 3.0, -10.0, 10.0),
                          uniform_model(-10.0, 10.0)},
                         {0.3, 0.5, 0.2});
}

ModelPtr sec42_g3(double b1, double b2) {
    return mixture_model({trunc_normal_model(-4.0, 1.0, -10.0, 10.0),
                          trunc_laplace_model(4.0, 1.0, -10.0, 10.0),
                          uniform_model(-10.0, 10.0)},
                         {b1, b2, 1.0 - b1 - b2}, true);
}

double ks_against_cdf(const Model& m, int n, std::uint64_t seed) {
    RngStream rng(seed, 0);
    std::vector<double> u(static_cast<std::size_t>(n));
    for (double& x : u) x = m.cdf(m.sample(rng));
    std::sort(u.begin(), u.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        d = std::max(d, std::abs(u[i] - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - u[i]));
    }
    return d;
}

}  // namespace

TEST_CASE("asymmetric Laplace closed forms") {
    SUBCASE("density at the kink for beta=1, sigma=sqrt2") {
        const auto m = asym_laplace_model(0.0, std::sqrt(2.0), 1.0);
        CHECK(m->pdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("mass below theta is beta^2/(1+beta^2)") {
        for (double beta : {0.1, 0.7, 1.0, 2.5}) {
            const auto m = asym_laplace_model(-10.0, 2.0, beta);
            const double split = beta * beta / (1.0 + beta * beta);
            CHECK(m->cdf(-10.0) == doctest::Approx(split).epsilon(1e-12));
            // Independent check: integrate the lower branch.
            const QuadratureRule rule =
                gauss_legendre_rule(64, 16, m->quantile(1e-14), -10.0);
            const double mass = rule.integrate([&](double x) { return m->pdf(x); });
            CHECK(mass == doctest::Approx(split).epsilon(1e-9));
        }
    }
    SUBCASE("beta=1 is symmetric about theta") {
        const auto m = asym_laplace_model(3.0, 1.7, 1.0);
        CHECK(m->cdf(3.0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(m->pdf(3.0 + 0.9) == doctest::Approx(m->pdf(3.0 - 0.9)).epsilon(1e-12));
    }
    SUBCASE("quantile inverts the cdf") {
        const auto m = asym_laplace_model(-10.0, 2.0, 0.1);
        for (double u : {1e-9, 0.0098, 0.0099, 0.5, 0.97, 1.0 - 1e-9})
            CHECK(m->cdf(m->quantile(u)) == doctest::Approx(u).epsilon(1e-10));
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(asym_laplace_model(0.0, -1.0, 1.0), parameter_error);
        CHECK_THROWS_AS(asym_laplace_model(0.0, 1.0, 0.0), parameter_error);
    }
}

TEST_CASE("densities integrate to one and quantiles invert CDFs") {
    const std::vector<ModelPtr> models = {
        uniform_model(-10.0, 10.0),
        trunc_normal_model(-5.0, 3.0, -10.0, 10.0, true),
        trunc_laplace_model(5.0, 3.0, -10.0, 10.0),
        asym_laplace_model(-10.0, 2.0, 0.1),
        sec42_truth(),
        sec42_g3(0.25, 0.35),
        convolved_line_model(1.78499, 0.0025, 0.05, 2.5, 1.65, 2.05),
    };
    for (const auto& m : models) {
        CAPTURE(m->family());
        const QuadratureRule rule = default_rule(*m);
        const double mass = rule.integrate([&](double x) { return m->pdf(x); });
        CHECK(std::abs(mass - 1.0) < 1e-8);
        for (double u : {0.03, 0.5, 0.77, 0.999})
            CHECK(m->cdf(m->quantile(u)) == doctest::Approx(u).epsilon(1e-8));
    }
}

TEST_CASE("scores are mean zero and match finite differences") {
    const std::vector<ModelPtr> models = {
        trunc_normal_model(1.0, 2.5, -10.0, 10.0, true),
        asym_laplace_model(-10.0, 2.0, 0.1),
        sec42_g3(0.25, 0.35),
        mixture_model({trunc_normal_model(-5.0, 1.0, -10.0, 10.0),
                       trunc_normal_model(2.0, 3.0, -10.0, 10.0, true)},
                      {0.3, 0.7}),
    };
    for (const auto& m : models) {
        CAPTURE(m->family());
        const int p = m->param_dim();
        REQUIRE(p > 0);
        const QuadratureRule rule = default_rule(*m);

        // <score_k, 1> = 0 under the model.
        for (int k = 0; k < p; ++k) {
            const double mean = rule.integrate(
                [&](double x) { return m->score_vec(x)[k] * m->pdf(x); });
            CHECK(std::abs(mean) < 1e-8);
        }

        // Analytic score equals the central difference of ln pdf.
        RngStream rng(99, 0);
        const std::vector<double> base = m->params();
        for (int rep = 0; rep < 100; ++rep) {
            const double x = m->quantile(0.001 + 0.998 * rng.uniform());
            const auto s = m->score_vec(x);
            std::vector<double> shifted = base;
            for (int k = 0; k < p; ++k) {
                const double step = 1e-6 * std::max(1.0, std::abs(base[k]));
                shifted[k] = base[k] + step;
                const double up = m->with_params(shifted)->log_pdf(x);
                shifted[k] = base[k] - step;
                const double dn = m->with_params(shifted)->log_pdf(x);
                shifted[k] = base[k];
                CHECK(s[k] == doctest::Approx((up - dn) / (2.0 * step)).epsilon(1e-5).scale(1.0));
            }
        }
    }
}

TEST_CASE("samplers agree with their CDFs (KS below the 1% critical value)") {
    const std::vector<ModelPtr> models = {
        uniform_model(-10.0, 10.0),
        trunc_normal_model(-5.0, 3.0, -10.0, 10.0),
        trunc_laplace_model(5.0, 3.0, -10.0, 10.0),
        asym_laplace_model(-10.0, 2.0, 0.1),
        sec42_truth(),
        convolved_line_model(1.85247, 0.0025, 0.05, 2.5, 1.65, 2.05),
    };
    const int n = 100000;
    const double crit01 = 1.628 / std::sqrt(static_cast<double>(n));
    std::uint64_t seed = 101;
    for (const auto& m : models) {
        CAPTURE(m->family());
        CHECK(ks_against_cdf(*m, n, seed++) < crit01);
    }
}

TEST_CASE("fisher information") {
    SUBCASE("truncated normal at (0,1) on [-10,10] is diag(1,2)") {
        const auto m = trunc_normal_model(0.0, 1.0, -10.0, 10.0, true);
        const SymMatrix g = fisher_information(*m, default_rule(*m));
        CHECK(g.at(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
        CHECK(g.at(1, 1) == doctest::Approx(2.0).epsilon(1e-4));
        CHECK(std::abs(g.at(0, 1)) < 1e-4);
        CHECK(g.max_asymmetry() < 1e-12);
    }
    SUBCASE("no free parameters gives an empty matrix") {
        const auto m = uniform_model(0.0, 1.0);
        CHECK(fisher_information(*m, default_rule(*m)).dim() == 0);
    }
    SUBCASE("outer product matches -E[grad u^T] by finite differences") {
        const auto m = trunc_normal_model(0.5, 1.5, -10.0, 10.0, true);
        const QuadratureRule rule = default_rule(*m);
        const SymMatrix g = fisher_information(*m, rule);
        const std::vector<double> base = m->params();
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                // -E d u_a / d beta_b via a centered difference of the score.
                const double step = 1e-5;
                const double e = rule.integrate([&](double x) {
                    std::vector<double> up = base, dn = base;
                    up[b] += step;
                    dn[b] -= step;
                    const double du = (m->with_params(up)->score_vec(x)[a] -
                                       m->with_params(dn)->score_vec(x)[a]) /
                                      (2.0 * step);
                    return -du * m->pdf(x);
                });
                CHECK(g.at(a, b) == doctest::Approx(e).epsilon(1e-4).scale(1.0));
            }
    }
}

TEST_CASE("orthonormal score has identity Gram matrix") {
    const std::vector<ModelPtr> models = {
        trunc_normal_model(0.0, 1.0, -10.0, 10.0, true),
        asym_laplace_model(-10.0, 2.0, 0.1),
        sec42_g3(0.25, 0.35),
    };
    for (const auto& m : models) {
        CAPTURE(m->family());
        const QuadratureRule rule = default_rule(*m);
        const OrthonormalScore b(m, rule);
        const int p = b.dim();
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) {
                const double ip = rule.integrate([&](double x) {
                    const auto v = b.eval_vec(x);
                    return v[i] * v[j] * m->pdf(x);
                });
                CHECK(std::abs(ip - (i == j ? 1.0 : 0.0)) < 1e-8);
            }
        for (int i = 0; i < p; ++i) {
            const double mean =
                rule.integrate([&](double x) { return b.eval_vec(x)[i] * m->pdf(x); });
            CHECK(std::abs(mean) < 1e-8);
        }
    }
    // Scalar case: b = u / sqrt(Gamma).
    const auto m = asym_laplace_model(-10.0, 2.0, 0.7);
    const QuadratureRule rule = default_rule(*m);
    const double gamma = fisher_information(*m, rule).at(0, 0);
    const OrthonormalScore b(m, rule);
    for (double x : {-11.0, -10.0, -9.5, -7.0, 3.0})
        CHECK(b.eval_vec(x)[0] ==
              doctest::Approx(m->score_vec(x)[0] / std::sqrt(gamma)).epsilon(1e-12));
}

TEST_CASE("psi_for satisfies the estimator identities") {
    const auto m = trunc_normal_model(0.3, 1.2, -10.0, 10.0, true);
    const QuadratureRule rule = default_rule(*m);
    for (const auto kind : {EstimatorSpec::Kind::mle, EstimatorSpec::Kind::moments}) {
        const EstimatorSpec spec = psi_for(m, kind, rule);
        REQUIRE(spec.p == 2);
        // <u^T, psi^T> = I within 1e-6 and <psi_k, 1> = 0 within 1e-8.
        for (int a = 0; a < 2; ++a) {
            const double mean =
                rule.integrate([&](double x) { return spec.psi_vec(x)[a] * m->pdf(x); });
            CHECK(std::abs(mean) < 1e-8);
            for (int b = 0; b < 2; ++b) {
                const double ip = rule.integrate([&](double x) {
                    return m->score_vec(x)[a] * spec.psi_vec(x)[b] * m->pdf(x);
                });
                CHECK(std::abs(ip - (a == b ? 1.0 : 0.0)) < 1e-6);
            }
        }
    }
    // Scalar MLE case: psi = u / Gamma.
    const auto s = asym_laplace_model(-10.0, 2.0, 0.4);
    const QuadratureRule srule = default_rule(*s);
    const double gamma = fisher_information(*s, srule).at(0, 0);
    const EstimatorSpec spec = psi_for(s, EstimatorSpec::Kind::mle, srule);
    for (double x : {-10.5, -10.0, -8.0, 1.0})
        CHECK(spec.psi_vec(x)[0] == doctest::Approx(s->score_vec(x)[0] / gamma).epsilon(1e-10));
}

TEST_CASE("mixture model construction") {
    SUBCASE("the three-part study density integrates to one") {
        const auto q = sec42_truth();
        const QuadratureRule rule = default_rule(*q);
        CHECK(std::abs(rule.integrate([&](double x) { return q->pdf(x); }) - 1.0) < 1e-8);
        CHECK(q->param_dim() == 0);
    }
    SUBCASE("single component with weight one matches the component") {
        const auto comp = trunc_normal_model(1.0, 2.0, -10.0, 10.0);
        const auto m = mixture_model({comp}, {1.0});
        for (double x : {-9.0, 0.0, 1.0, 7.3}) {
            CHECK(m->pdf(x) == doctest::Approx(comp->pdf(x)).epsilon(1e-15));
            CHECK(m->cdf(x) == doctest::Approx(comp->cdf(x)).epsilon(1e-15));
        }
    }
    SUBCASE("free-weight score is mean zero") {
        const auto g3 = sec42_g3(0.25, 0.35);
        const QuadratureRule rule = default_rule(*g3);
        for (int k = 0; k < 2; ++k) {
            const double mean =
                rule.integrate([&](double x) { return g3->score_vec(x)[k] * g3->pdf(x); });
            CHECK(std::abs(mean) < 1e-8);
        }
    }
    SUBCASE("invalid weights rejected") {
        CHECK_THROWS_AS(
            mixture_model({uniform_model(0, 1), uniform_model(0, 1)}, {0.5, 0.6}),
            parameter_error);
        CHECK_THROWS_AS(
            mixture_model({uniform_model(0, 1), uniform_model(0, 1)}, {1.2, -0.2}),
            parameter_error);
    }
    SUBCASE("support mismatch rejected") {
        CHECK_THROWS_AS(
            mixture_model({uniform_model(0, 1), uniform_model(0, 2)}, {0.5, 0.5}),
            support_mismatch_error);
    }
}

TEST_CASE("convolved line profile") {
    const double mu = 1.78499, sigma = 0.0025;
    const auto s1 = convolved_line_model(mu, sigma, 0.05, 2.5, 1.65, 2.05);
    SUBCASE("normalized on the support") {
        const QuadratureRule rule = default_rule(*s1, 64, 16);
        CHECK(std::abs(rule.integrate([&](double x) { return s1->pdf(x); }) - 1.0) < 1e-8);
        CHECK(s1->cdf(2.05) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("symmetric about the line center") {
        for (double d : {0.01, 0.05, 0.1}) {
            CHECK(s1->pdf(mu + d) == doctest::Approx(s1->pdf(mu - d)).epsilon(1e-8));
        }
    }
    SUBCASE("tiny sigma approaches the bare kernel") {
        const auto narrow = convolved_line_model(mu, 1e-6, 0.05, 2.5, 1.65, 2.05);
        // Normalized kernel restricted to the support, evaluated directly.
        const auto kernel = [&](double x) {
            return std::pow(1.0 + std::pow((x - mu) / 0.05, 2.0), -2.5);
        };
        const QuadratureRule rule = gauss_legendre_rule(64, 16, 1.65, 2.05);
        const double z = rule.integrate(kernel);
        for (double x : {1.7, 1.78, 1.8, 1.95})
            CHECK(narrow->pdf(x) == doctest::Approx(kernel(x) / z).epsilon(1e-6));
    }
    SUBCASE("half-integer power required") {
        CHECK_THROWS_AS(convolved_line_model(mu, sigma, 0.05, 2.3, 1.65, 2.05),
                        parameter_error);
        CHECK_THROWS_AS(convolved_line_model(mu, -1.0, 0.05, 2.5, 1.65, 2.05), parameter_error);
    }
}

TEST_CASE("inner products under a model measure") {
    const auto one = [](double) { return 1.0; };
    SUBCASE("density integrates to one") {
        const auto m = sec42_truth();
        CHECK(std::abs(inner_product(one, one, *m, default_rule(*m)) - 1.0) < 1e-10);
    }
    SUBCASE("composed first Legendre polynomial has unit norm") {
        const auto m = asym_laplace_model(-10.0, 2.0, 0.1);
        const QuadratureRule rule = default_rule(*m);
        const auto h1 = [&](double x) { return legendre_shifted_normalized(1, m->cdf(x)); };
        CHECK(std::abs(inner_product(h1, h1, *m, rule) - 1.0) < 1e-8);
    }
    SUBCASE("uniform model identity function") {
        const auto m = uniform_model(0.0, 1.0);
        const auto id = [](double x) { return x; };
        CHECK(inner_product(id, id, *m, default_rule(*m)) ==
              doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("non-finite integrand names the node") {
        const auto m = uniform_model(0.0, 1.0);
        const auto bad = [](double) { return std::numeric_limits<double>::quiet_NaN(); };
        CHECK_THROWS_AS(inner_product(bad, bad, *m, default_rule(*m)), evaluation_error);
    }
}

TEST_CASE("model hashes separate families and parameters") {
    const auto a = trunc_normal_model(-5.0, 1.0, -10.0, 10.0);
    const auto b = trunc_normal_model(-4.0, 1.0, -10.0, 10.0);
    const auto c = trunc_laplace_model(-5.0, 1.0, -10.0, 10.0);
    CHECK(a->hash() != b->hash());
    CHECK(a->hash() != c->hash());
    CHECK(a->hash() == trunc_normal_model(-5.0, 1.0, -10.0, 10.0)->hash());
    const auto m1 = sec42_g3(0.25, 0.35);
    const auto m2 = sec42_g3(0.26, 0.35);
    CHECK(m1->hash() != m2->hash());
}
