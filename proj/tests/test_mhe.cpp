#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pefl/ckks/chebyshev.hpp"
#include "pefl/mhe/threshold.hpp"
#include "pefl/util/rng.hpp"

using namespace pefl;
using namespace pefl::ckks;
using namespace pefl::mhe;

namespace {

std::vector<double> random_slots(rng::Stream& rs, size_t k, double lo,
                                 double hi) {
    std::vector<double> v(k);
    for (double& x : v) x = rs.uniform(lo, hi);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b,
                    size_t k) {
    double m = 0;
    for (size_t i = 0; i < k; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Ciphertext enc(const Evaluator& ev, const PublicKey& pk,
               const std::vector<double>& v, rng::Stream& rs) {
    const Context& cx = ev.ctx();
    return ev.encrypt(encode(cx, v, cx.delta(), cx.top_level()), pk, rs);
}

bool poly_equal(const RnsPoly& a, const RnsPoly& b) {
    if (a.limb.size() != b.limb.size()) return false;
    for (size_t i = 0; i < a.limb.size(); ++i)
        if (a.limb[i] != b.limb[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("share arithmetic and collective secret") {
    auto cx = Context::tiny();
    auto shares = make_shares(*cx, 3, 7);
    REQUIRE(shares.size() == 3);
    CHECK(shares[0].party == 0);
    CHECK(shares[2].party == 2);

    // sum of shares equals the dealer's view of the secret, limb by limb
    SecretKey sk = collective_secret(*cx, shares);
    RnsPoly acc = shares[0].s_coeff;
    poly_add(*cx, acc, shares[1].s_coeff);
    poly_add(*cx, acc, shares[2].s_coeff);
    CHECK(poly_equal(acc, sk.s_coeff));

    CHECK_THROWS(make_shares(*cx, 0, 7));
}

TEST_CASE("one party reduces to single-key behavior") {
    auto cx = Context::tiny();
    Evaluator ev(cx);
    auto shares = make_shares(*cx, 1, 3);
    auto kr = distributed_keygen(*cx, shares, 5, {1});
    SecretKey sk = collective_secret(*cx, shares);
    rng::Stream rs(9);

    auto v = random_slots(rs, cx->slots(), -1.0, 1.0);
    auto ct = enc(ev, kr.pk, v, rs);
    CHECK(max_abs_diff(ev.decrypt_values(ct, sk), v, cx->slots()) <
          cx->eps_enc());

    // relin key built from one share switches s^2 like the dealer path
    auto ca = enc(ev, kr.pk, v, rs);
    auto prod = ev.mult(ct, ca, kr.rlk);
    auto got = ev.decrypt_values(prod, sk);
    for (size_t i = 0; i < 8; ++i)
        CHECK(got[i] == doctest::Approx(v[i] * v[i]).epsilon(1e-3));
}

TEST_CASE("collective keys round-trip and reject share subsets") {
    auto cx = Context::tiny();
    Evaluator ev(cx);
    auto shares = make_shares(*cx, 3, 11);
    auto kr = distributed_keygen(*cx, shares, 13, {});
    SecretKey sk = collective_secret(*cx, shares);
    rng::Stream rs(17);

    auto v = random_slots(rs, cx->slots(), -1.0, 1.0);
    auto ct = enc(ev, kr.pk, v, rs);

    SUBCASE("all shares decrypt") {
        CHECK(max_abs_diff(ev.decrypt_values(ct, sk), v, cx->slots()) <
              cx->eps_enc());
    }

    SUBCASE("any strict subset leaves garbage") {
        for (int drop = 0; drop < 3; ++drop) {
            SecretKey partial;
            bool first = true;
            for (int i = 0; i < 3; ++i) {
                if (i == drop) continue;
                if (first) {
                    partial.s_coeff = shares[i].s_coeff;
                    partial.s_ntt = shares[i].s_ntt;
                    first = false;
                } else {
                    poly_add(*cx, partial.s_coeff, shares[i].s_coeff);
                    poly_add(*cx, partial.s_ntt, shares[i].s_ntt);
                }
            }
            auto got = ev.decrypt_values(ct, partial);
            CHECK(max_abs_diff(got, v, cx->slots()) > 1e3 * cx->eps_enc());
        }
    }

    SUBCASE("same seed reproduces the keys, fresh seed does not") {
        auto kr2 = distributed_keygen(*cx, shares, 13, {});
        CHECK(poly_equal(kr2.pk.a, kr.pk.a));
        CHECK(poly_equal(kr2.pk.b, kr.pk.b));
        CHECK(poly_equal(kr2.rlk.kb[0], kr.rlk.kb[0]));
        auto kr3 = distributed_keygen(*cx, shares, 14, {});
        CHECK_FALSE(poly_equal(kr3.pk.b, kr.pk.b));
    }
}

TEST_CASE("collective rotation keys match plaintext shift") {
    auto cx = Context::tiny();
    Evaluator ev(cx);
    auto shares = make_shares(*cx, 3, 19);
    auto kr = distributed_keygen(*cx, shares, 23, {1, 4});
    SecretKey sk = collective_secret(*cx, shares);
    rng::Stream rs(29);

    auto v = random_slots(rs, cx->slots(), -1.0, 1.0);
    auto ct = enc(ev, kr.pk, v, rs);
    for (int k : {1, 4}) {
        auto got = ev.decrypt_values(ev.rotate(ct, k, kr.rot), sk);
        std::vector<double> want(cx->slots());
        for (size_t i = 0; i < cx->slots(); ++i)
            want[i] = v[(i + size_t(k)) % cx->slots()];
        CHECK(max_abs_diff(got, want, cx->slots()) < 1e-6);
    }
    CHECK_THROWS(ev.rotate(ct, 2, kr.rot));
}

TEST_CASE("dealer and distributed relin keys are interchangeable") {
    auto cx = Context::tiny();
    Evaluator ev(cx);
    auto shares = make_shares(*cx, 3, 31);
    auto dist = distributed_keygen(*cx, shares, 37, {});
    auto deal = dealer_keygen(*cx, shares, 41, {});
    SecretKey sk = collective_secret(*cx, shares);
    rng::Stream rs(43);

    auto x = random_slots(rs, cx->slots(), -1.0, 1.0);
    auto y = random_slots(rs, cx->slots(), -1.0, 1.0);
    auto cx1 = enc(ev, dist.pk, x, rs);
    auto cy1 = enc(ev, dist.pk, y, rs);
    std::vector<double> want(cx->slots());
    for (size_t i = 0; i < cx->slots(); ++i) want[i] = x[i] * y[i];

    // same ciphertext pair through either key provider
    for (const KswitchKey* rlk : {&dist.rlk, &deal.rlk}) {
        auto got = ev.decrypt_values(ev.mult(cx1, cy1, *rlk), sk);
        CHECK(max_abs_diff(got, want, cx->slots()) < 1e-3);
    }

    // dealer pk encrypts for the same collective secret
    auto ct = enc(ev, deal.pk, x, rs);
    CHECK(max_abs_diff(ev.decrypt_values(ct, sk), x, cx->slots()) <
          cx->eps_enc());
}

TEST_CASE("partial decryption combine") {
    auto cx = Context::desk();
    Evaluator ev(cx);
    auto shares = make_shares(*cx, 3, 47);
    auto kr = dealer_keygen(*cx, shares, 53, {});
    rng::Stream rs(59);

    std::vector<double> v = {1.0, 2.0, 3.0};
    auto ct = enc(ev, kr.pk, v, rs);

    SUBCASE("all three partials recover the values") {
        std::vector<PartialDecryption> parts;
        for (const auto& sh : shares)
            parts.push_back(partial_decrypt(*cx, sh, ct, FloodConfig{}, rs));
        auto got = combine_partials(*cx, ct, parts, 3);
        CHECK(max_abs_diff(got, v, 3) < 1e-3);
        CHECK(got[3] == doctest::Approx(0.0).epsilon(1e-3));
    }

    SUBCASE("flood magnitude sweep at scale 2^55") {
        auto run = [&](int kappa) {
            std::vector<PartialDecryption> parts;
            for (const auto& sh : shares)
                parts.push_back(
                    partial_decrypt(*cx, sh, ct, FloodConfig{kappa}, rs));
            return max_abs_diff(combine_partials(*cx, ct, parts, 3), v, 3);
        };
        // error tracks 2^kappa; the default keeps it well under 1e-3, and
        // even 2^40 flooding leaves the values recognizable
        double e28 = run(28), e34 = run(34), e40 = run(40);
        CHECK(e28 < 1e-4);
        CHECK(e34 < 1e-3);
        CHECK(e40 < 5e-2);
        CHECK(e34 > e28);
        CHECK(e40 > e34);
    }

    SUBCASE("missing partial is flagged") {
        std::vector<PartialDecryption> parts;
        for (const auto& sh : shares)
            parts.push_back(partial_decrypt(*cx, sh, ct, FloodConfig{}, rs));
        parts.pop_back();
        CHECK_THROWS(combine_partials(*cx, ct, parts, 3));
        parts.push_back(parts[0]);  // duplicate party id
        CHECK_THROWS(combine_partials(*cx, ct, parts, 3));
    }

    SUBCASE("two colluding parties only see noise") {
        std::vector<PartialDecryption> parts;
        parts.push_back(partial_decrypt(*cx, shares[0], ct, FloodConfig{}, rs));
        parts.push_back(partial_decrypt(*cx, shares[2], ct, FloodConfig{}, rs));
        parts[1].party = 1;  // colluders can relabel, it does not help
        auto got = combine_partials(*cx, ct, parts, 2);
        CHECK(max_abs_diff(got, v, 3) > 1e3 * cx->eps_enc());
    }

    SUBCASE("partial from another ciphertext is rejected") {
        auto other = enc(ev, kr.pk, v, rs);
        ev.rescale(other);  // level now differs
        std::vector<PartialDecryption> parts;
        for (const auto& sh : shares)
            parts.push_back(partial_decrypt(*cx, sh, other, FloodConfig{}, rs));
        CHECK_THROWS(combine_partials(*cx, ct, parts, 3));
    }
}

TEST_CASE("collective bootstrap refreshes level and value") {
    auto cx = Context::desk();
    Evaluator ev(cx);
    auto shares = make_shares(*cx, 3, 61);
    auto kr = dealer_keygen(*cx, shares, 67, {});
    SecretKey sk = collective_secret(*cx, shares);
    rng::Stream rs(71);

    auto v = random_slots(rs, cx->slots(), -1.0, 1.0);
    auto ct = enc(ev, kr.pk, v, rs);
    ev.mod_down_to(ct, 2);

    BootstrapConfig bc;
    auto fresh = collective_bootstrap(ev, ct, shares, kr.pk, bc, rs);
    CHECK(fresh.level() == cx->top_level());
    CHECK(fresh.scale == ct.scale);
    CHECK(max_abs_diff(ev.decrypt_values(fresh, sk), v, cx->slots()) < 1e-3);

    SUBCASE("idempotent in level") {
        auto again = collective_bootstrap(ev, fresh, shares, kr.pk, bc, rs);
        CHECK(again.level() == cx->top_level());
        CHECK(max_abs_diff(ev.decrypt_values(again, sk), v, cx->slots()) <
              2e-3);
    }

    SUBCASE("missing participant is flagged") {
        std::vector<BootstrapShare> bss;
        for (int i = 0; i < 2; ++i)
            bss.push_back(
                bootstrap_share(ev, shares[i], ct, kr.pk, 3, bc, rs));
        CHECK_THROWS(combine_bootstrap(ev, ct, bss, 3));
        // share built for a different level is rejected too
        auto bad = bootstrap_share(ev, shares[2], fresh, kr.pk, 3, bc, rs);
        bss.push_back(bad);
        CHECK_THROWS(combine_bootstrap(ev, ct, bss, 3));
    }

    SUBCASE("share payloads have plausible sizes") {
        auto bs = bootstrap_share(ev, shares[0], ct, kr.pk, 3, bc, rs);
        // one masked partial (ct-level polys) plus one top-level ciphertext
        CHECK(bs.size_bytes() > bs.enc_neg_mask.size_bytes());
        CHECK(bs.size_bytes() <
              bs.enc_neg_mask.size_bytes() + serialize(ct).size());
    }
}

TEST_CASE("mult chains across a bootstrap stay accurate") {
    auto cx = Context::desk();
    Evaluator ev(cx);
    auto shares = make_shares(*cx, 3, 73);
    auto kr = dealer_keygen(*cx, shares, 79, {});
    SecretKey sk = collective_secret(*cx, shares);
    rng::Stream rs(83);

    auto v = random_slots(rs, cx->slots(), -1.0, 1.0);
    auto ct = enc(ev, kr.pk, v, rs);
    std::vector<double> want = v;

    // total multiplicative depth 6: three squarings, refresh, three more
    auto square_thrice = [&](Ciphertext c) {
        for (int i = 0; i < 3; ++i) c = ev.mult(c, c, kr.rlk);
        return c;
    };
    ct = square_thrice(ct);
    ct = collective_bootstrap(ev, ct, shares, kr.pk, BootstrapConfig{}, rs);
    CHECK(ct.level() == cx->top_level());
    ct = square_thrice(ct);
    for (double& x : want)
        for (int i = 0; i < 6; ++i) x = x * x;

    auto got = ev.decrypt_values(ct, sk);
    double worst = 0;
    for (size_t i = 0; i < cx->slots(); ++i) {
        double denom = std::max(1.0, std::abs(want[i]));
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    CHECK(worst < 1e-2);
}
