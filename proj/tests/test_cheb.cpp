#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pefl/ckks/chebyshev.hpp"
#include "pefl/util/rng.hpp"

using namespace pefl;
using namespace pefl::ckks;

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}

TEST_CASE("fit reproduces low-degree polynomials exactly") {
    auto id = chebyshev_fit([](double x) { return x; }, -1, 1, 1);
    CHECK(id[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(id[1] == doctest::Approx(1.0).epsilon(1e-12));

    auto cst = chebyshev_fit([](double) { return 4.5; }, -3, 7, 2);
    CHECK(cst[0] == doctest::Approx(9.0));  // c0/2 convention
    CHECK(std::abs(cst[1]) < 1e-12);
    CHECK(std::abs(cst[2]) < 1e-12);

    // cubic on an asymmetric interval, fit with headroom
    auto f = [](double x) { return 2 * x * x * x - x + 0.25; };
    auto c = chebyshev_fit(f, -2, 5, 5);
    for (double x = -2; x <= 5; x += 0.31)
        CHECK(clenshaw_eval(c, -2, 5, x) == doctest::Approx(f(x)).epsilon(1e-10));
}

TEST_CASE("degree-13 sigmoid fit on [-10,10] meets grid tolerance") {
    auto c = chebyshev_fit(sigmoid, -10, 10, 13);
    double worst = 0;
    for (int i = 0; i <= 2000; ++i) {
        double x = -10 + 20.0 * i / 2000;
        worst = std::max(worst, std::abs(clenshaw_eval(c, -10, 10, x) -
                                         sigmoid(x)));
    }
    CHECK(worst < 1e-2);

    // odd symmetry of sigmoid - 1/2: even-index coefficients vanish (k >= 2)
    for (size_t kk = 2; kk < c.size(); kk += 2)
        CHECK(std::abs(c[kk]) < 1e-13 * std::abs(c[1]));
}

TEST_CASE("monomial conversion agrees with Clenshaw") {
    rng::Stream rs(31);
    std::vector<double> c(14);
    for (double& x : c) x = rs.uniform(-1, 1);
    auto m = chebyshev_to_monomial(c);
    REQUIRE(m.size() == c.size());
    for (double t = -1; t <= 1; t += 0.0625) {
        double horner = 0;
        for (size_t i = m.size(); i-- > 0;) horner = horner * t + m[i];
        CHECK(horner == doctest::Approx(clenshaw_eval(c, -1, 1, t))
                            .epsilon(1e-9));
    }
}

TEST_CASE("encrypted evaluation tracks the plaintext oracle") {
    rng::Stream rs(71);

    auto run = [&](const ContextPtr& cx, const std::vector<double>& coeffs,
                   double a, double b, int expect_depth) {
        Evaluator ev(cx);
        auto km = ev.keygen(13, {});
        const size_t k = cx->slots();
        std::vector<double> xs(k);
        for (auto& x : xs) x = rs.uniform(a, b);
        auto ct = ev.encrypt(encode(*cx, xs, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto out = eval_chebyshev(ev, ct, coeffs, a, b, km.rlk);
        CHECK(out.level() == cx->top_level() - expect_depth);
        // prime spacing leaves ~1e-9 relative scale drift per consumed level
        CHECK(out.scale == doctest::Approx(ct.scale).epsilon(1e-6));
        auto got = ev.decrypt_values(out, km.sk);
        double worst = 0;
        for (size_t i = 0; i < k; ++i)
            worst = std::max(worst,
                             std::abs(got[i] - clenshaw_eval(coeffs, a, b, xs[i])));
        return worst;
    };

    // desk-scale run also guards the encoder against oversized plaintext
    // constants (steep fits have bounded Chebyshev but huge monomial coeffs)
    SUBCASE("degree 13 sigmoid, normalization plus depth-5 ladder") {
        auto c = chebyshev_fit(sigmoid, -10, 10, 13);
        CHECK(run(Context::desk(), c, -10, 10, 6) < 1e-3);
    }
    SUBCASE("degree 7, depth 5") {
        auto c = chebyshev_fit([](double x) { return std::tanh(x); }, -4, 4, 7);
        CHECK(run(Context::tiny(), c, -4, 4, 5) < 1e-3);
    }
    SUBCASE("degree 3, depth 4") {
        auto c = chebyshev_fit([](double x) { return x * x * x; }, -1.5, 1.5, 3);
        CHECK(run(Context::tiny(), c, -1.5, 1.5, 4) < 1e-3);
    }
    SUBCASE("degree 1 affine") {
        auto c = chebyshev_fit([](double x) { return 3 * x - 2; }, -5, 5, 1);
        CHECK(run(Context::tiny(), c, -5, 5, 2) < 1e-4);
    }
}

TEST_CASE("normalized entry point matches when scaling folded upstream") {
    auto cx = Context::tiny();
    Evaluator ev(cx);
    auto km = ev.keygen(14, {});
    rng::Stream rs(72);
    const size_t k = cx->slots();

    auto c = chebyshev_fit(sigmoid, -10, 10, 13);
    std::vector<double> xs(k), ts(k);
    for (size_t i = 0; i < k; ++i) {
        xs[i] = rs.uniform(-10, 10);
        ts[i] = xs[i] / 10.0;  // upstream fold of the affine map
    }
    auto ct = ev.encrypt(encode(*cx, ts, cx->delta(), cx->top_level()), km.pk,
                         rs);
    auto out = eval_chebyshev_normalized(ev, ct, c, km.rlk);
    auto got = ev.decrypt_values(out, km.sk);
    double vs_oracle = 0, vs_true = 0;
    for (size_t i = 0; i < k; ++i) {
        vs_oracle = std::max(
            vs_oracle, std::abs(got[i] - clenshaw_eval(c, -10, 10, xs[i])));
        vs_true = std::max(vs_true, std::abs(got[i] - sigmoid(xs[i])));
    }
    CHECK(vs_oracle < 1e-3);  // evaluation error only
    CHECK(vs_true < 1e-2);    // evaluation + interpolation error

    // midpoint sanity: sigmoid(0) = 1/2
    std::vector<double> zero(k, 0.0);
    auto cz = ev.encrypt(encode(*cx, zero, cx->delta(), cx->top_level()),
                         km.pk, rs);
    auto oz = ev.decrypt_values(eval_chebyshev_normalized(ev, cz, c, km.rlk),
                                km.sk);
    CHECK(oz[0] == doctest::Approx(0.5).epsilon(2e-2));
}
