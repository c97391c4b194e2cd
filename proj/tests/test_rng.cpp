#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pefl/util/rng.hpp"

using namespace pefl;

TEST_CASE("streams are deterministic and tag-separated") {
    rng::Stream a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.u64() == b.u64());

    rng::Stream c(123, {1, 2}), d(123, {1, 3});
    int same = 0;
    for (int i = 0; i < 64; ++i) same += c.u64() == d.u64();
    CHECK(same == 0);

    CHECK(rng::derive(5, {1, 2}) != rng::derive(5, {2, 1}));
}

TEST_CASE("uniform and below stay in range") {
    rng::Stream r(7);
    for (int i = 0; i < 1000; ++i) {
        double u = r.unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        uint64_t k = r.below(17);
        CHECK(k < 17);
        double v = r.uniform(-3, 5);
        CHECK(v >= -3.0);
        CHECK(v <= 5.0);
    }
}

TEST_CASE("normal moments") {
    rng::Stream r(8);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double x = r.normal(0, 1);
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("laplace moments") {
    rng::Stream r(9);
    const int n = 200000;
    const double b = 2.5;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double x = r.laplace(0, b);
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.05);
    CHECK(std::abs(s2 / n - 2 * b * b) / (2 * b * b) < 0.05);
}

TEST_CASE("signed_uniform_pow2 covers the closed range") {
    rng::Stream r(10);
    int64_t lo = 0, hi = 0;
    for (int i = 0; i < 100000; ++i) {
        int64_t x = r.signed_uniform_pow2(4);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        CHECK(x >= -16);
        CHECK(x <= 16);
    }
    CHECK(lo == -16);
    CHECK(hi == 16);
}

TEST_CASE("shuffle is a deterministic permutation") {
    rng::Stream r1(11), r2(11);
    auto p1 = r1.permutation(50);
    auto p2 = r2.permutation(50);
    CHECK(p1 == p2);
    std::vector<bool> seen(50, false);
    for (size_t v : p1) {
        CHECK(v < 50);
        CHECK(!seen[v]);
        seen[v] = true;
    }
}

TEST_CASE("ternary takes all three values") {
    rng::Stream r(12);
    int cnt[3] = {0, 0, 0};
    for (int i = 0; i < 3000; ++i) cnt[r.ternary() + 1]++;
    for (int c : cnt) CHECK(c > 800);
}
