#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pefl/fed/select.hpp"
#include "pefl/util/rng.hpp"

using namespace pefl;
using namespace pefl::fed;

namespace {

// rising logistic per layer: deeper layers climb higher and earlier, the
// shape the epoch-sweep attacks produce on the overfit preset
AttackCurve shaped_curve(size_t depth, size_t last_epoch, size_t cadence,
                         const std::vector<double>& ceiling,
                         const std::vector<double>& midpoint) {
    AttackCurve c;
    for (size_t g = 0; g <= last_epoch; g += cadence) {
        c.epochs.push_back(g);
        std::vector<double> row(depth);
        for (size_t j = 0; j < depth; ++j) {
            double z = (double(g) - midpoint[j]) / 12.0;
            row[j] = 0.5 + (ceiling[j] - 0.5) / (1.0 + std::exp(-z));
        }
        c.acc.push_back(row);
    }
    return c;
}

bool is_suffix(const std::set<size_t>& s, size_t depth) {
    if (s.empty()) return true;
    for (size_t j = *s.begin(); j <= depth; ++j)
        if (s.count(j) == 0) return false;
    return true;
}

}  // namespace

TEST_CASE("minimal suffix covers the shallowest offender") {
    CHECK(minimal_suffix({0.52, 0.55, 0.58}, 0.6).empty());
    CHECK(minimal_suffix({0.52, 0.55, 0.72}, 0.6) == std::set<size_t>{3});
    CHECK(minimal_suffix({0.52, 0.65, 0.72}, 0.6) ==
          std::set<size_t>{2, 3});
    // a shallow offender drags every deeper layer in, tolerable or not
    CHECK(minimal_suffix({0.7, 0.55, 0.58}, 0.6) ==
          std::set<size_t>{1, 2, 3});
    // exactly at the tolerance is still tolerable
    CHECK(minimal_suffix({0.6, 0.6, 0.6}, 0.6).empty());
}

TEST_CASE("tolerance one never encrypts") {
    auto c = shaped_curve(3, 120, 10, {0.8, 0.9, 0.99}, {40.0, 30.0, 20.0});
    auto r = select_secret_layers({c}, {1.0}, 120);
    CHECK_FALSE(r.infeasible);
    for (const auto& s : r.schedule.schedule) CHECK(s.empty());
    CHECK(r.schedule.secret.empty());
}

TEST_CASE("last layer crosses the threshold at epoch 90") {
    // ceilings keep layers 1 and 2 under 0.6 forever; layer 3 crosses it
    // between the epoch-80 and epoch-90 checkpoints
    auto c = shaped_curve(3, 120, 10, {0.55, 0.58, 0.70}, {40.0, 40.0, 88.0});
    REQUIRE(c.acc[8][2] < 0.6);   // epoch 80
    REQUIRE(c.acc[9][2] > 0.6);   // epoch 90
    auto r = select_secret_layers({c}, {0.6}, 120);
    CHECK_FALSE(r.infeasible);
    for (size_t g = 1; g <= 120; ++g) {
        const auto& s = r.schedule.schedule[g - 1];
        if (g < 90)
            CHECK(s.empty());
        else
            CHECK(s == std::set<size_t>{3});
    }
    CHECK(r.schedule.secret == std::set<size_t>{3});
    CHECK(r.schedule.secret_at(89).empty());
    CHECK(r.schedule.secret_at(90) == std::set<size_t>{3});
}

TEST_CASE("epoch monotone even when the curve dips back down") {
    AttackCurve c;
    c.epochs = {10, 20, 30};
    c.acc = {{0.5, 0.7}, {0.5, 0.55}, {0.5, 0.55}};
    auto r = select_secret_layers({c}, {0.6}, 30);
    CHECK(r.schedule.schedule[9] == std::set<size_t>{2});
    CHECK(r.schedule.schedule[29] == std::set<size_t>{2});
}

TEST_CASE("multi-party schedule is the per-epoch union") {
    AttackCurve a;  // picks {3}
    a.epochs = {10};
    a.acc = {{0.5, 0.5, 0.8}};
    AttackCurve b;  // picks {2,3}
    b.epochs = {10};
    b.acc = {{0.5, 0.75, 0.5}};
    auto r = select_secret_layers({a, b}, {0.6, 0.6}, 20);
    CHECK(r.schedule.schedule[4].empty());  // before either checkpoint
    CHECK(r.schedule.schedule[19] == std::set<size_t>{2, 3});
    CHECK(r.schedule.secret == std::set<size_t>{2, 3});
}

TEST_CASE("per-party tolerances apply individually") {
    AttackCurve c;
    c.epochs = {1};
    c.acc = {{0.5, 0.65, 0.65}};
    auto strict = select_secret_layers({c, c}, {0.6, 0.9}, 5);
    CHECK(strict.schedule.secret == std::set<size_t>{2, 3});
    auto lax = select_secret_layers({c, c}, {0.9, 0.9}, 5);
    CHECK(lax.schedule.secret.empty());
}

TEST_CASE("infeasible tolerance flags and encrypts everything") {
    auto c = shaped_curve(3, 50, 10, {0.7, 0.8, 0.9}, {20.0, 20.0, 20.0});
    auto r = select_secret_layers({c}, {0.6}, 50, /*baseline=*/0.65);
    CHECK(r.infeasible);
    CHECK(r.schedule.secret == std::set<size_t>{1, 2, 3});
    for (const auto& s : r.schedule.schedule)
        CHECK(s == std::set<size_t>{1, 2, 3});
}

TEST_CASE("random curves always yield suffix-closed monotone schedules") {
    rng::Stream rs(97);
    for (int trial = 0; trial < 50; ++trial) {
        size_t depth = 2 + size_t(rs.uniform(0.0, 3.0));
        std::vector<AttackCurve> curves(2);
        for (auto& c : curves) {
            for (size_t g = 0; g <= 40; g += 10) {
                c.epochs.push_back(g);
                std::vector<double> row(depth);
                for (double& v : row) v = rs.uniform(0.45, 0.95);
                c.acc.push_back(row);
            }
        }
        auto r = select_secret_layers(curves, {0.7, 0.7}, 40);
        std::set<size_t> prev;
        for (const auto& s : r.schedule.schedule) {
            CHECK(is_suffix(s, depth));
            CHECK(std::includes(s.begin(), s.end(), prev.begin(),
                                prev.end()));
            prev = s;
        }
        // final set equals the union of each party's own final pick
        std::set<size_t> want;
        for (const auto& c : curves) {
            auto solo = select_secret_layers({c}, {0.7}, 40);
            want.insert(solo.schedule.secret.begin(),
                        solo.schedule.secret.end());
        }
        CHECK(r.schedule.secret == want);
    }
}

TEST_CASE("malformed inputs are rejected") {
    AttackCurve c;
    c.epochs = {10};
    c.acc = {{0.5, 0.5}};
    CHECK_THROWS(select_secret_layers({}, {}, 10));
    CHECK_THROWS(select_secret_layers({c}, {0.6, 0.6}, 10));
    CHECK_THROWS(select_secret_layers({c}, {0.4}, 10));
    CHECK_THROWS(select_secret_layers({c}, {1.1}, 10));
    CHECK_THROWS(select_secret_layers({c}, {0.6}, 0));
    AttackCurve ragged;
    ragged.epochs = {10, 20};
    ragged.acc = {{0.5, 0.5}, {0.5}};
    CHECK_THROWS(select_secret_layers({ragged}, {0.6}, 10));
    AttackCurve unsorted;
    unsorted.epochs = {20, 10};
    unsorted.acc = {{0.5, 0.5}, {0.5, 0.5}};
    CHECK_THROWS(select_secret_layers({unsorted}, {0.6}, 10));
}
