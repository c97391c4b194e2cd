#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pefl/dp/dp.hpp"

using namespace pefl;

namespace {

nn::ModelArch arch_64_30_20_10() {
    return nn::ModelArch::mlp({64, 30, 20, 10});
}

fed::LayerPartition part(std::set<size_t> s) {
    fed::LayerPartition p;
    p.secret = std::move(s);
    return p;
}

nn::GradientSet grads_for(const nn::ModelArch& a, double fill) {
    nn::GradientSet g;
    g.dw.resize(a.depth() + 1);
    g.db.resize(a.depth() + 1);
    g.e.resize(a.depth() + 1);
    for (size_t j = 1; j <= a.depth(); ++j) {
        g.dw[j] = nn::Mat(a.widths[j - 1], a.widths[j]);
        std::fill(g.dw[j].a.begin(), g.dw[j].a.end(), fill);
        g.db[j].assign(a.widths[j], fill);
    }
    return g;
}

// maximum-likelihood Laplace scale: mean absolute deviation about the median
double mle_scale(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double med = v[v.size() / 2];
    double s = 0;
    for (double x : v) s += std::abs(x - med);
    return s / double(v.size());
}

}  // namespace

TEST_CASE("exposed parameter counts") {
    const auto a = arch_64_30_20_10();
    CHECK(dp::count_exposed(part({1, 2, 3}), a) == 0);
    CHECK(dp::count_exposed(part({3}), a) == 64 * 30 + 30 + 30 * 20 + 20);
    CHECK(dp::count_exposed(part({}), a) ==
          64 * 30 + 30 + 30 * 20 + 20 + 20 * 10 + 10);
}

TEST_CASE("noise scale formula") {
    CHECK(dp::laplace_scale(100, 0.1, 1.0) == doctest::Approx(20.0));
    CHECK(dp::laplace_scale(2600, 0.05, 2.0) == doctest::Approx(130.0));
}

TEST_CASE("clip bound estimation takes per-tensor medians") {
    const auto a = nn::ModelArch::mlp({1, 5, 1});
    std::vector<nn::GradientSet> history;
    const double vals[] = {1, -2, 3, -4, 100};
    for (double v : vals) history.push_back(grads_for(a, v));
    const dp::ClipBounds cb = dp::estimate_clip_bounds(history, a);
    CHECK(cb.w[1] == doctest::Approx(3.0));  // |.| -> {1,2,3,4,100}
    CHECK(cb.b[2] == doctest::Approx(3.0));

    // reproducible: the estimate is a pure function of the history
    const dp::ClipBounds cb2 = dp::estimate_clip_bounds(history, a);
    CHECK(cb.w[1] == cb2.w[1]);
    CHECK_THROWS_AS(dp::estimate_clip_bounds({}, a), std::invalid_argument);

    std::vector<nn::GradientSet> even = {grads_for(a, 1.0),
                                         grads_for(a, -3.0)};
    CHECK(dp::estimate_clip_bounds(even, a).w[1] == doctest::Approx(2.0));
}

TEST_CASE("secret layers pass through bit-identically") {
    const auto a = arch_64_30_20_10();
    nn::GradientSet g = grads_for(a, 0.25);
    const nn::GradientSet before = g;
    dp::DpConfig cfg;
    cfg.enabled = true;
    cfg.epsilon = 1.0;
    cfg.gamma = 0.1;
    rng::Stream rs(7);
    dp::perturb_exposed_gradients(g, part({2, 3}), a, cfg, rs);

    CHECK(g.dw[2].a == before.dw[2].a);
    CHECK(g.dw[3].a == before.dw[3].a);
    CHECK(g.db[2] == before.db[2]);
    CHECK(g.dw[1].a != before.dw[1].a);  // exposed layer was perturbed

    // disabled config is a no-op everywhere
    nn::GradientSet g2 = grads_for(a, 0.25);
    dp::DpConfig off;
    rng::Stream rs2(7);
    dp::perturb_exposed_gradients(g2, part({}), a, off, rs2);
    CHECK(g2.dw[1].a == before.dw[1].a);
}

TEST_CASE("huge epsilon reduces to exact clipping") {
    const auto a = nn::ModelArch::mlp({4, 4, 2});
    nn::GradientSet g = grads_for(a, 0.25);
    g.dw[1](0, 0) = 5.0;
    g.dw[1](0, 1) = -7.0;
    dp::DpConfig cfg;
    cfg.enabled = true;
    cfg.epsilon = 1e12;
    cfg.gamma = 0.1;
    rng::Stream rs(3);
    dp::perturb_exposed_gradients(g, part({}), a, cfg, rs);
    CHECK(g.dw[1](0, 0) == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(g.dw[1](0, 1) == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(g.dw[1](1, 0) == doctest::Approx(0.1).epsilon(1e-6));  // 0.25 clips
    for (double x : g.db[2])
        CHECK(std::abs(x) <= 0.1 + 1e-6);  // post-clip bound holds
}

TEST_CASE("empirical noise scale matches the formula") {
    // zero gradients isolate the additive noise
    const auto a = nn::ModelArch::mlp({100, 500, 100});
    nn::GradientSet g = grads_for(a, 0.0);
    dp::DpConfig cfg;
    cfg.enabled = true;
    cfg.epsilon = 1e4;  // keeps b small enough to avoid float blowups
    cfg.gamma = 0.1;
    rng::Stream rs(11);
    const fed::LayerPartition p = part({});
    const size_t c = dp::count_exposed(p, a);
    REQUIRE(c == 100 * 500 + 500 + 500 * 100 + 100);
    dp::perturb_exposed_gradients(g, p, a, cfg, rs);

    std::vector<double> draws;
    draws.insert(draws.end(), g.dw[1].a.begin(), g.dw[1].a.end());
    draws.insert(draws.end(), g.dw[2].a.begin(), g.dw[2].a.end());
    REQUIRE(draws.size() == 100000);
    const double want = dp::laplace_scale(c, cfg.gamma, cfg.epsilon);
    CHECK(mle_scale(draws) == doctest::Approx(want).epsilon(0.05));

    // Kolmogorov-Smirnov against Laplace(0, b), alpha = 0.01
    std::sort(draws.begin(), draws.end());
    auto cdf = [&](double x) {
        return x < 0 ? 0.5 * std::exp(x / want)
                     : 1.0 - 0.5 * std::exp(-x / want);
    };
    double dmax = 0;
    const double n = double(draws.size());
    for (size_t i = 0; i < draws.size(); ++i) {
        const double f = cdf(draws[i]);
        dmax = std::max(dmax, std::abs(f - double(i) / n));
        dmax = std::max(dmax, std::abs(f - double(i + 1) / n));
    }
    const double crit = 1.628 / std::sqrt(n);
    CHECK(dmax < crit);
}

TEST_CASE("config validation") {
    dp::DpConfig cfg;
    cfg.enabled = true;
    cfg.epsilon = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.epsilon = 1;
    cfg.gamma = -0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.gamma = 0.1;
    cfg.gamma_w[2] = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.gamma_w[2] = 0.2;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.clip_w(2) == 0.2);
    CHECK(cfg.clip_w(1) == 0.1);
    CHECK(cfg.clip_b(2) == 0.1);

    // disabled configs skip validation so partial configs can sit in files
    dp::DpConfig off;
    off.epsilon = -1;
    CHECK_NOTHROW(off.validate());
}
