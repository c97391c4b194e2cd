#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "pefl/nn/checkpoint.hpp"
#include "pefl/nn/model.hpp"
#include "pefl/util/rng.hpp"

using namespace pefl;
using nn::Act;
using nn::Mat;
using nn::Vec;

namespace {

// Independent straight-line forward pass, iteration order deliberately
// different from the library (row-major outer loop).
Vec oracle_forward(const nn::ModelArch& arch, const nn::Params& p, Vec x) {
    for (size_t j = 1; j <= arch.depth(); ++j) {
        Vec u = p[j].b;
        for (size_t r = 0; r < p[j].w.rows; ++r)
            for (size_t c = 0; c < p[j].w.cols; ++c)
                u[c] += x[r] * p[j].w(r, c);
        for (double& v : u) v = nn::act_eval(arch.acts[j - 1], v);
        x = u;
    }
    return x;
}

double loss_at(const nn::ModelArch& arch, const nn::Params& p, const Vec& x,
               const Vec& y) {
    auto t = nn::feedforward(arch, p, x);
    return nn::mse_loss(t.l[arch.depth()], y);
}

}  // namespace

TEST_CASE("init_model determinism and shapes") {
    auto arch = nn::ModelArch::mlp({64, 30, 20, 10});
    auto p1 = nn::init_model(arch, nn::InitScheme::XavierUniform, 7);
    auto p2 = nn::init_model(arch, nn::InitScheme::XavierUniform, 7);
    REQUIRE(p1.size() == 4);
    CHECK(p1[1].w.rows == 64);
    CHECK(p1[1].w.cols == 30);
    CHECK(p1[2].w.rows == 30);
    CHECK(p1[2].w.cols == 20);
    CHECK(p1[3].w.rows == 20);
    CHECK(p1[3].w.cols == 10);
    for (size_t j = 1; j <= 3; ++j) {
        CHECK(p1[j].w.a == p2[j].w.a);
        for (double b : p1[j].b) CHECK(b == 0.0);
    }
    double bound = std::sqrt(6.0 / 94.0);
    for (double v : p1[1].w.a) CHECK(std::abs(v) <= bound);
}

TEST_CASE("feedforward basics") {
    auto arch = nn::ModelArch::mlp({3, 2, 2});
    auto p = nn::init_model(arch, nn::InitScheme::XavierUniform, 1);

    SUBCASE("zero params, sigmoid -> 0.5 everywhere") {
        for (size_t j = 1; j <= 2; ++j)
            for (double& v : p[j].w.a) v = 0.0;
        auto t = nn::feedforward(arch, p, {0.3, -0.7, 1.1});
        for (double v : t.l[1]) CHECK(v == 0.5);
        for (double v : t.l[2]) CHECK(v == 0.5);
    }

    SUBCASE("identity activations, identity weights pass input through") {
        auto id = nn::ModelArch::mlp({2, 2, 2}, Act::Identity);
        auto q = nn::init_model(id, nn::InitScheme::XavierUniform, 1);
        for (size_t j = 1; j <= 2; ++j) {
            for (double& v : q[j].w.a) v = 0.0;
            q[j].w(0, 0) = 1.0;
            q[j].w(1, 1) = 1.0;
        }
        auto t = nn::feedforward(id, q, {0.25, -4.0});
        CHECK(t.l[2][0] == 0.25);
        CHECK(t.l[2][1] == -4.0);
    }

    SUBCASE("matches straight-line oracle") {
        rng::Stream rs(99);
        Vec x(3);
        for (double& v : x) v = rs.uniform(-1, 1);
        auto t = nn::feedforward(arch, p, x);
        Vec ref = oracle_forward(arch, p, x);
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(t.l[2][i] - ref[i]) < 1e-12);
    }

    SUBCASE("dimension mismatch throws") {
        CHECK_THROWS(nn::feedforward(arch, p, {1.0}));
    }
}

TEST_CASE("backprop matches central finite differences") {
    rng::Stream rs(2024);
    for (int trial = 0; trial < 6; ++trial) {
        size_t L = 1 + rs.below(3);
        std::vector<size_t> widths;
        for (size_t j = 0; j <= L; ++j) widths.push_back(2 + rs.below(7));
        auto arch = nn::ModelArch::mlp(widths);
        auto p = nn::init_model(arch, nn::InitScheme::XavierUniform, rs.u64());
        Vec x(widths[0]), y(widths[L]);
        for (double& v : x) v = rs.uniform(-1, 1);
        y = nn::one_hot(rs.below(widths[L]), widths[L]);

        auto t = nn::feedforward(arch, p, x);
        auto g = nn::backprop(arch, p, t, y);

        const double h = 1e-5;
        for (size_t j = 1; j <= L; ++j) {
            for (size_t i = 0; i < p[j].w.a.size(); i += 1 + i / 3) {
                double save = p[j].w.a[i];
                p[j].w.a[i] = save + h;
                double fp = loss_at(arch, p, x, y);
                p[j].w.a[i] = save - h;
                double fm = loss_at(arch, p, x, y);
                p[j].w.a[i] = save;
                double fd = (fp - fm) / (2 * h);
                double an = g.dw[j].a[i];
                double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
                CHECK(std::abs(fd - an) / denom < 1e-4);
            }
            for (size_t i = 0; i < p[j].b.size(); ++i) {
                double save = p[j].b[i];
                p[j].b[i] = save + h;
                double fp = loss_at(arch, p, x, y);
                p[j].b[i] = save - h;
                double fm = loss_at(arch, p, x, y);
                p[j].b[i] = save;
                double fd = (fp - fm) / (2 * h);
                double an = g.db[j][i];
                double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
                CHECK(std::abs(fd - an) / denom < 1e-4);
            }
        }
    }
}

TEST_CASE("backprop edge cases") {
    SUBCASE("l_L == y gives zero gradients") {
        auto arch = nn::ModelArch::mlp({2, 2}, Act::Identity);
        auto p = nn::init_model(arch, nn::InitScheme::XavierUniform, 3);
        Vec x = {0.5, -0.5};
        auto t = nn::feedforward(arch, p, x);
        auto g = nn::backprop(arch, p, t, t.l[1]);
        for (double v : g.dw[1].a) CHECK(v == 0.0);
        for (double v : g.db[1]) CHECK(v == 0.0);
    }
    SUBCASE("single identity layer = linear regression gradient") {
        auto arch = nn::ModelArch::mlp({3, 2}, Act::Identity);
        auto p = nn::init_model(arch, nn::InitScheme::XavierUniform, 4);
        Vec x = {1.0, -2.0, 0.5};
        Vec y = {0.0, 1.0};
        auto t = nn::feedforward(arch, p, x);
        auto g = nn::backprop(arch, p, t, y);
        for (size_t r = 0; r < 3; ++r)
            for (size_t c = 0; c < 2; ++c)
                CHECK(g.dw[1](r, c) ==
                      doctest::Approx(x[r] * (t.l[1][c] - y[c])).epsilon(1e-12));
    }
}

TEST_CASE("mse_loss") {
    CHECK(nn::mse_loss({1, 0}, {1, 0}) == 0.0);
    CHECK(nn::mse_loss({1, 0}, {0, 1}) == 1.0);
    rng::Stream rs(5);
    Vec a(9), b(9);
    for (size_t i = 0; i < 9; ++i) {
        a[i] = rs.uniform(-2, 2);
        b[i] = rs.uniform(-2, 2);
    }
    double s = 0;
    for (size_t i = 0; i < 9; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(nn::mse_loss(a, b) == doctest::Approx(0.5 * s).epsilon(1e-15));
    CHECK_THROWS(nn::mse_loss({1.0}, {1.0, 2.0}));
}

TEST_CASE("sgd_update") {
    auto arch = nn::ModelArch::mlp({2, 2});
    auto p = nn::init_model(arch, nn::InitScheme::XavierUniform, 6);
    auto orig = p;

    nn::SgdConfig cfg;
    cfg.eta = 0.0;
    auto g = nn::zero_grads(arch);
    nn::sgd_update(p, g, cfg);
    CHECK(p[1].w.a == orig[1].w.a);

    cfg.eta = 1.0;
    cfg.lambda = 0.0;
    g.dw[1].a = p[1].w.a;  // gradient equal to weights zeroes them
    nn::sgd_update(p, g, cfg);
    for (double v : p[1].w.a) CHECK(v == 0.0);
}

TEST_CASE("training on separable 2-D data decreases loss") {
    auto arch = nn::ModelArch::mlp({2, 4, 2});
    auto p = nn::init_model(arch, nn::InitScheme::XavierUniform, 11);
    rng::Stream rs(12);
    std::vector<Vec> xs;
    std::vector<Vec> ys;
    for (int i = 0; i < 40; ++i) {
        int cls = i % 2;
        double cx = cls == 0 ? -1.5 : 1.5;
        xs.push_back({cx + rs.normal(0, 0.3), rs.normal(0, 0.3)});
        ys.push_back(nn::one_hot(cls, 2));
    }
    nn::SgdConfig cfg;
    cfg.eta = 0.8;
    cfg.batch = 1;
    auto epoch_loss = [&] {
        double s = 0;
        for (size_t i = 0; i < xs.size(); ++i)
            s += nn::mse_loss(nn::feedforward(arch, p, xs[i]).l[2], ys[i]);
        return s / double(xs.size());
    };
    double first = epoch_loss();
    std::vector<double> trace;
    for (int epoch = 0; epoch < 200; ++epoch) {
        for (size_t i = 0; i < xs.size(); ++i) {
            auto t = nn::feedforward(arch, p, xs[i]);
            auto g = nn::backprop(arch, p, t, ys[i]);
            nn::sgd_update(p, g, cfg);
        }
        trace.push_back(epoch_loss());
    }
    CHECK(trace.back() < 0.25 * first);
    double early = 0, late = 0;
    for (int i = 0; i < 20; ++i) early += trace[i];
    for (int i = 0; i < 20; ++i) late += trace[trace.size() - 1 - i];
    CHECK(late < early);
}

TEST_CASE("sigmoid values") {
    CHECK(nn::sigmoid(0.0) == 0.5);
    CHECK(nn::sigmoid_prime(0.0) == 0.25);
    CHECK(nn::sigmoid(10.0) == doctest::Approx(0.9999546021312976).epsilon(1e-12));
    for (double x = -8; x <= 8; x += 0.37)
        CHECK(nn::sigmoid(-x) == doctest::Approx(1.0 - nn::sigmoid(x)).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    auto arch = nn::ModelArch::mlp({5, 4, 3});
    auto p = nn::init_model(arch, nn::InitScheme::XavierUniform, 42);
    p[1].b[0] = 0x1.fffffffffffffp-3;
    const char* path = "ckpt_test.bin";
    nn::save_checkpoint(path, arch, p);
    auto c = nn::load_checkpoint(path);
    REQUIRE(c.arch.widths == arch.widths);
    for (size_t j = 1; j <= 2; ++j) {
        CHECK(c.params[j].w.a == p[j].w.a);
        CHECK(c.params[j].b == p[j].b);
    }
    std::remove(path);
}
