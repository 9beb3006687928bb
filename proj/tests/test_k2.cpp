#include <cmath>

#include "doctest.h"
#include "smoothtest/k2.hpp"

using namespace smoothtest;

namespace {

// Reference and targets of the mixture study on [-10, 10].
ModelPtr ref_truncnormal(double mu = 0.0, double sigma = 4.0) {
    return trunc_normal_model(mu, sigma, -10.0, 10.0, true);
}

ModelPtr g1(double b1 = -4.5, double b2 = 2.8) {
    return mixture_model(
        {trunc_normal_model(b1, b2, -10.0, 10.0, true), uniform_model(-10.0, 10.0)}, {0.5, 0.5});
}

ModelPtr g2(double b1 = 4.0, double b2 = 3.0) {
    return mixture_model({trunc_normal_model(-5.0, 1.0, -10.0, 10.0),
                          trunc_normal_model(b1, b2, -10.0, 10.0, true)},
                         {0.3, 0.7});
}

ModelPtr g3(double b1 = 0.25, double b2 = 0.4) {
    return mixture_model({trunc_normal_model(-4.0, 1.0, -10.0, 10.0),
                          trunc_laplace_model(4.0, 1.0, -10.0, 10.0),
                          uniform_model(-10.0, 10.0)},
                         {b1, b2, 1.0 - b1 - b2}, true);
}

std::shared_ptr<const K2Basis> build(const ModelPtr& target, const ModelPtr& reference, int m,
                                     int panels = 32) {
    const ModelPtr both[2] = {target, reference};
    return std::make_shared<const K2Basis>(target, reference, m, shared_rule(both, panels, 16));
}

}  // namespace

TEST_CASE("isometry between the reference and target spaces") {
    const auto target = g2();
    const auto reference = ref_truncnormal();
    const ModelPtr both[2] = {target, reference};
    const QuadratureRule rule = shared_rule(both, 32, 16);
    const auto l = isometry_l(target, reference, rule);
    const auto one = [](double) { return 1.0; };

    SUBCASE("reference equal to target collapses to the constant one") {
        const auto lid = isometry_l(target, target, rule);
        for (double x : {-9.0, -5.0, 0.0, 4.0, 9.0}) CHECK(lid(x) == 1.0);
    }
    SUBCASE("unit norm and Bhattacharyya bound") {
        CHECK(std::abs(inner_product(l, l, *target, rule) - 1.0) < 1e-8);
        const double s = inner_product(l, one, *target, rule);
        CHECK(s < 1.0);
        CHECK(s > 0.0);
    }
    SUBCASE("inner products transfer from the reference space") {
        for (int i = 1; i <= 3; ++i)
            for (int j = i; j <= 3; ++j) {
                const auto phi_i = [&](double x) {
                    return legendre_shifted_normalized(i, reference->cdf(x));
                };
                const auto phi_j = [&](double x) {
                    return legendre_shifted_normalized(j, reference->cdf(x));
                };
                const auto lpi = [&](double x) { return l(x) * phi_i(x); };
                const auto lpj = [&](double x) { return l(x) * phi_j(x); };
                CHECK(std::abs(inner_product(lpi, lpj, *target, rule) -
                               inner_product(phi_i, phi_j, *reference, rule)) < 1e-8);
            }
    }
    SUBCASE("vanishing target density is a support mismatch") {
        const auto narrow = uniform_model(0.0, 1.0);
        CHECK_THROWS_AS(isometry_l(narrow, reference, rule), support_mismatch_error);
    }
}

TEST_CASE("reflection K on arbitrary functions") {
    const auto target = g1();
    const auto reference = ref_truncnormal();
    const ModelPtr both[2] = {target, reference};
    const QuadratureRule rule = shared_rule(both, 32, 16);
    const auto l = isometry_l(target, reference, rule);
    const auto one = [](double) { return 1.0; };

    SUBCASE("K l = 1 and K 1 = l on the grid") {
        const auto kl = reflect_K(l, l, target, rule);
        const auto k1 = reflect_K(one, l, target, rule);
        for (double x : rule.nodes) {
            CHECK(kl(x) == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(k1(x) == doctest::Approx(l(x)).epsilon(1e-9).scale(1.0));
        }
    }
    SUBCASE("functions orthogonal to span(1, l) are fixed") {
        // Residualize a test function against 1 and l by quadrature:
        // solve [1 s; s 1][a; b] = [c1; cl].
        const auto raw = [&](double x) {
            return legendre_shifted_normalized(3, target->cdf(x));
        };
        const double s = inner_product(l, one, *target, rule);
        const double c1 = inner_product(raw, one, *target, rule);
        const double cl = inner_product(raw, l, *target, rule);
        const double det = 1.0 - s * s;
        const double a = (c1 - s * cl) / det;
        const double b = (cl - s * c1) / det;
        const auto perp = [&, a, b](double x) { return raw(x) - a - b * l(x); };
        const auto kperp = reflect_K(perp, l, target, rule);
        for (double x : rule.nodes)
            CHECK(kperp(x) == doctest::Approx(perp(x)).epsilon(1e-9).scale(1.0));
    }
    SUBCASE("K is an involution") {
        const auto phi = [&](double x) {
            return 0.7 * legendre_shifted_normalized(1, target->cdf(x)) -
                   1.3 * legendre_shifted_normalized(4, reference->cdf(x)) + 0.2;
        };
        const auto kk = reflect_K(reflect_K(phi, l, target, rule), l, target, rule);
        for (double x : rule.nodes)
            CHECK(kk(x) == doctest::Approx(phi(x)).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("full collapse when reference and target coincide") {
    const auto m = ref_truncnormal(1.0, 3.0);
    const auto basis = build(m, m, 6);
    CHECK(basis->k_is_identity());
    for (int k = 1; k <= basis->target_dim(); ++k) CHECK(basis->chain()[k - 1].identity);
    for (double x : {-9.0, -3.0, 0.0, 2.5, 9.5}) {
        for (int j = 1; j <= 6; ++j) {
            CHECK(basis->eval(j, x) == doctest::Approx(basis->eval_phi(j, x)).epsilon(1e-9));
            CHECK(basis->eval_residual(j, x) ==
                  doctest::Approx(basis->eval_phi_residual(j, x)).epsilon(1e-9).scale(1.0));
        }
        for (int k = 1; k <= basis->target_dim(); ++k) {
            CHECK(basis->eval_c(k, x) ==
                  doctest::Approx(basis->eval_b(k, x)).epsilon(1e-9).scale(1.0));
            CHECK(basis->eval_a(k, x) ==
                  doctest::Approx(basis->eval_b(k, x)).epsilon(1e-9).scale(1.0));
        }
    }
    const auto d = basis->diagnostics();
    CHECK(d.max_residual() < 1e-12);
}

TEST_CASE("operator identities on the mixture-study configurations") {
    const auto reference = ref_truncnormal();
    for (const auto& target : {g1(), g2(), g3()}) {
        CAPTURE(target->family());
        const auto basis = build(target, reference, 6);
        const K2Diagnostics d = basis->diagnostics();
        CHECK(d.k_maps_l_to_one < 1e-8);
        CHECK(d.k_maps_one_to_l < 1e-8);
        CHECK(d.k_fixes_orthogonal < 1e-8);
        CHECK(d.k_involution < 1e-9);
        CHECK(d.k_unitary < 1e-9);
        CHECK(d.k_self_adjoint < 1e-9);
        CHECK(d.c_gram < 1e-8);
        CHECK(d.c_mean < 1e-8);
        CHECK(d.ctilde_mean < 1e-8);
        CHECK(d.ctilde_orth < 1e-8);
        CHECK(d.step_involution < 1e-9);
        CHECK(d.up_maps_c_to_b < 1e-8);
        CHECK(d.up_fixes_one < 1e-9);
        CHECK(d.up_unitary < 1e-8);
        CHECK(d.basis_gram < 1e-8);
        CHECK(d.score_transfer < 1e-8);
        CHECK(d.residual_mean < 1e-8);
        CHECK(d.covariance_transfer < 1e-8);
        CHECK(d.residual_image < 1e-9);
    }
}

TEST_CASE("covariance transfer holds entrywise against direct quadrature") {
    const auto reference = ref_truncnormal();
    const auto target = g2();
    const ModelPtr both[2] = {target, reference};
    const QuadratureRule rule = shared_rule(both, 32, 16);
    const auto basis = std::make_shared<const K2Basis>(target, reference, 6, rule);

    // Both sides recomputed from pointwise evaluations, independently of the
    // coefficient algebra.
    for (int i = 1; i <= 6; ++i)
        for (int j = i; j <= 6; ++j) {
            const double lhs = rule.integrate([&](double x) {
                return basis->eval_residual(i, x) * basis->eval_residual(j, x) * target->pdf(x);
            });
            const double rhs = rule.integrate([&](double x) {
                return basis->eval_phi_residual(i, x) * basis->eval_phi_residual(j, x) *
                       reference->pdf(x);
            });
            CHECK(std::abs(lhs - rhs) < 1e-8);
            CHECK(basis->gram().at(i - 1, j - 1) ==
                  doctest::Approx(lhs).epsilon(1e-9).scale(1.0));
            CHECK(basis->reference_gram().at(i - 1, j - 1) ==
                  doctest::Approx(rhs).epsilon(1e-9).scale(1.0));
        }
    // Means vanish under the target.
    for (int j = 1; j <= 6; ++j) CHECK(std::abs(basis->residual_means()[j - 1]) < 1e-8);
}

TEST_CASE("score-set extension from donor basis functions") {
    SUBCASE("no extension needed when dimensions match") {
        const auto reference = ref_truncnormal();
        const QuadratureRule rule = default_rule(*reference);
        CHECK(extend_score(reference, 2, 6, rule).empty());
    }
    SUBCASE("uniform reference extended to two synthetic directions") {
        const auto reference = uniform_model(-10.0, 10.0);
        const QuadratureRule rule = default_rule(*reference);
        const auto ext = extend_score(reference, 2, 6, rule);
        REQUIRE(ext.size() == 2);
        const auto one = [](double) { return 1.0; };
        for (int a = 0; a < 2; ++a) {
            CHECK(std::abs(inner_product(ext[a], one, *reference, rule)) < 1e-8);
            for (int b = 0; b < 2; ++b) {
                const double ip = inner_product(ext[a], ext[b], *reference, rule);
                CHECK(std::abs(ip - (a == b ? 1.0 : 0.0)) < 1e-8);
            }
        }
    }
    SUBCASE("reference with more parameters than requested is rejected") {
        const auto reference = ref_truncnormal();
        const QuadratureRule rule = default_rule(*reference);
        CHECK_THROWS_AS(extend_score(reference, 1, 6, rule), parameter_error);
    }
}

TEST_CASE("k2 basis with an extended score set (q < p)") {
    // Uniform reference (q = 0) against the two-parameter mixture target.
    const auto reference = uniform_model(-10.0, 10.0);
    const auto target = g1();
    const auto basis = build(target, reference, 6);
    CHECK(basis->reference_dim() == 0);
    CHECK(basis->target_dim() == 2);
    const K2Diagnostics d = basis->diagnostics();
    CHECK(d.max_residual() < 1e-7);
    // Extension functions are mean-zero and orthonormal under the reference.
    const QuadratureRule rule = default_rule(*reference);
    for (int a = 1; a <= 2; ++a) {
        const auto ea = [&](double x) { return basis->eval_a(a, x); };
        const auto one = [](double) { return 1.0; };
        CHECK(std::abs(inner_product(ea, one, *reference, rule)) < 1e-8);
        for (int b = 1; b <= 2; ++b) {
            const auto eb = [&](double x) { return basis->eval_a(b, x); };
            CHECK(std::abs(inner_product(ea, eb, *reference, rule) - (a == b ? 1.0 : 0.0)) <
                  1e-8);
        }
    }
}

TEST_CASE("single-parameter chain keeps c-tilde equal to c") {
    const auto target = mixture_model(
        {trunc_normal_model(-4.0, 1.5, -10.0, 10.0), uniform_model(-10.0, 10.0)}, {0.35, 0.65},
        true);
    REQUIRE(target->param_dim() == 1);
    const auto reference = uniform_model(-10.0, 10.0);
    const auto basis = build(target, reference, 5);
    REQUIRE(basis->chain().size() == 1);
    for (double x : {-9.0, -4.0, 0.0, 5.0})
        CHECK(basis->eval_c_tilde(1, x) == doctest::Approx(basis->eval_c(1, x)).epsilon(1e-12));
    CHECK(basis->diagnostics().max_residual() < 1e-7);
}

TEST_CASE("spectral-model chain orthogonality (three parameters)") {
    const double lo = 1.65, hi = 2.05;
    const double mus[3] = {1.78499, 1.85247, 1.94365};
    std::vector<ModelPtr> gcomps, fcomps;
    for (double mu : mus) {
        gcomps.push_back(convolved_line_model(mu, 0.0025, 0.05, 2.5, lo, hi));
        fcomps.push_back(trunc_normal_model(mu, 0.05, lo, hi));
    }
    gcomps.push_back(uniform_model(lo, hi));
    fcomps.push_back(uniform_model(lo, hi));
    const auto target = mixture_model(gcomps, {0.2, 0.3, 0.25, 0.25}, true);
    const auto reference = mixture_model(fcomps, {0.25, 0.25, 0.25, 0.25}, true);
    REQUIRE(target->param_dim() == 3);
    REQUIRE(reference->param_dim() == 3);

    const auto basis = build(target, reference, 6, 64);
    const K2Diagnostics d = basis->diagnostics();
    CHECK(d.ctilde_orth < 1e-8);
    CHECK(d.ctilde_mean < 1e-8);
    CHECK(d.up_maps_c_to_b < 1e-8);
    CHECK(d.covariance_transfer < 1e-8);
    CHECK(d.max_residual() < 1e-7);
}

TEST_CASE("k2 basis interface details") {
    const auto reference = ref_truncnormal();
    const auto target = g3();
    const auto basis = build(target, reference, 6);

    SUBCASE("batch residual evaluation matches per-index calls") {
        double out[6];
        for (double x : {-9.9, -4.0, 0.0, 4.0, 9.9}) {
            basis->eval_residual_all(x, out);
            for (int j = 1; j <= 6; ++j)
                CHECK(out[j - 1] == doctest::Approx(basis->eval_residual(j, x)).epsilon(1e-13));
        }
    }
    SUBCASE("memoized construction returns the shared instance") {
        const ModelPtr both[2] = {target, reference};
        const QuadratureRule rule = shared_rule(both, 32, 16);
        const auto a = k2_basis_full(target, reference, 6, rule);
        const auto b = k2_basis_full(target, reference, 6, rule);
        CHECK(a.get() == b.get());
        const auto c = k2_basis_full(target, reference, 5, rule);
        CHECK(a.get() != c.get());
    }
    SUBCASE("reference with more parameters than the target is rejected") {
        const auto small = mixture_model(
            {trunc_normal_model(-4.0, 1.5, -10.0, 10.0), uniform_model(-10.0, 10.0)},
            {0.35, 0.65}, true);
        CHECK_THROWS_AS(build(small, reference, 6), parameter_error);
    }
    SUBCASE("disjoint supports are rejected") {
        const auto narrow = trunc_normal_model(0.5, 0.2, 0.0, 1.0, true);
        CHECK_THROWS_AS(std::make_shared<const K2Basis>(narrow, reference, 6,
                                                        default_rule(*reference)),
                        support_mismatch_error);
    }
}
