#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pefl/ckks/chebyshev.hpp"
#include "pefl/ckks/evaluator.hpp"
#include "pefl/util/rng.hpp"

using namespace pefl;
using namespace pefl::ckks;

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

}  // namespace

TEST_CASE("negacyclic NTT matches schoolbook") {
    const size_t n = 16;
    Modulus q(97);  // 97 = 1 + 32*3
    NttTables ntt(n, q, 7);
    rng::Stream rs(1);
    std::vector<uint64_t> a(n), b(n);
    for (auto& x : a) x = rs.below(97);
    for (auto& x : b) x = rs.below(97);

    // schoolbook negacyclic
    std::vector<uint64_t> ref(n, 0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            uint64_t p = q.mul(a[i], b[j]);
            size_t k = i + j;
            if (k >= n) ref[k - n] = q.sub(ref[k - n], p);
            else ref[k] = q.add(ref[k], p);
        }

    auto fa = a, fb = b;
    ntt.forward(fa.data());
    ntt.forward(fb.data());
    for (size_t i = 0; i < n; ++i) fa[i] = q.mul(fa[i], fb[i]);
    ntt.inverse(fa.data());
    CHECK(fa == ref);

    auto rt = a;
    ntt.forward(rt.data());
    ntt.inverse(rt.data());
    CHECK(rt == a);
}

TEST_CASE("prime generation properties") {
    auto ps = generate_ntt_primes(1 << 12, 55, 8, {});
    REQUIRE(ps.size() == 8);
    for (uint64_t p : ps) {
        CHECK(is_prime_u64(p));
        CHECK((p - 1) % (2 * (1 << 12)) == 0);
        double bits = std::log2(double(p));
        CHECK(bits > 54.9);
        CHECK(bits < 55.1);
    }
    // distinct
    for (size_t i = 0; i < ps.size(); ++i)
        for (size_t j = i + 1; j < ps.size(); ++j) CHECK(ps[i] != ps[j]);
}

TEST_CASE("encode/decode roundtrip") {
    auto cx = Context::desk();
    rng::Stream rs(42);

    SUBCASE("zero vector decodes to zero") {
        std::vector<double> v(cx->slots(), 0.0);
        auto pt = encode(*cx, v, cx->delta(), cx->top_level());
        auto out = decode(*cx, pt);
        for (size_t i = 0; i < 8; ++i) CHECK(out[i] == 0.0);
    }

    SUBCASE("random vectors in [-10,10]") {
        double worst = 0;
        for (int it = 0; it < 3; ++it) {
            auto v = random_slots(rs, cx->slots(), -10, 10);
            auto pt = encode(*cx, v, cx->delta(), 4);
            auto out = decode(*cx, pt);
            worst = std::max(worst, max_abs_diff(v, out, cx->slots()));
        }
        CHECK(worst < 1e-6);
    }

    SUBCASE("constant embedding") {
        auto pt = encode_constant(*cx, 3.25, cx->delta(), 2);
        auto out = decode(*cx, pt);
        for (size_t i = 0; i < cx->slots(); i += 97)
            CHECK(out[i] == doctest::Approx(3.25).epsilon(1e-12));
    }

    SUBCASE("exact coefficient roundtrip") {
        std::vector<__int128> c(cx->n(), 0);
        for (size_t i = 0; i < c.size(); ++i) {
            c[i] = __int128(int64_t(rs.u64() >> 4)) - (__int128(1) << 59);
            if (i % 7 == 0) c[i] <<= 40;  // exercise ~2^100 magnitudes
        }
        auto p = encode_exact(*cx, c, cx->top_level());
        auto back = decode_exact(*cx, p);
        bool same = true;
        for (size_t i = 0; i < c.size(); ++i) same = same && back[i] == c[i];
        CHECK(same);
    }
}

TEST_CASE("encrypt/decrypt and homomorphic ops") {
    auto cx = Context::tiny();
    Evaluator ev(cx);
    auto km = ev.keygen(2024, {1, 2, int(cx->slots()) - 1});
    rng::Stream rs(5);
    const size_t k = cx->slots();

    SUBCASE("fresh roundtrip within eps_enc") {
        auto v = random_slots(rs, k, -10, 10);
        auto ct = ev.encrypt(encode(*cx, v, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto out = ev.decrypt_values(ct, km.sk);
        CHECK(max_abs_diff(v, out, k) < cx->eps_enc());
    }

    SUBCASE("keygen determinism and ciphertext randomness") {
        auto km2 = ev.keygen(2024, {});
        CHECK(km.sk.s_coeff.limb == km2.sk.s_coeff.limb);
        CHECK(km.pk.a.limb == km2.pk.a.limb);
        auto pt = encode(*cx, {1, 2, 3}, cx->delta(), cx->top_level());
        rng::Stream r1(7), r2(8);
        auto c1 = ev.encrypt(pt, km.pk, r1);
        auto c2 = ev.encrypt(pt, km.pk, r2);
        CHECK(c1.c[0].limb != c2.c[0].limb);
    }

    SUBCASE("wrong key decrypts to noise") {
        auto v = random_slots(rs, k, -4, 4);
        auto ct = ev.encrypt(encode(*cx, v, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto km2 = ev.keygen(999, {});
        auto out = ev.decrypt_values(ct, km2.sk);
        CHECK(max_abs_diff(v, out, k) > 1e3 * cx->eps_enc());
    }

    SUBCASE("add and plain ops") {
        auto va = random_slots(rs, k, -4, 4);
        auto vb = random_slots(rs, k, -4, 4);
        auto ca = ev.encrypt(encode(*cx, va, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto cb = ev.encrypt(encode(*cx, vb, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto sum = ev.decrypt_values(ev.add(ca, cb), km.sk);
        auto neg = ev.decrypt_values(ev.add(ca, ev.negate(ca)), km.sk);
        double worst = 0;
        for (size_t i = 0; i < k; ++i) {
            worst = std::max(worst, std::abs(sum[i] - va[i] - vb[i]));
            worst = std::max(worst, std::abs(neg[i]));
        }
        CHECK(worst < 2 * cx->eps_enc());
        auto pd = ev.decrypt_values(
            ev.add_plain(ca, encode(*cx, vb, ca.scale, ca.level())), km.sk);
        for (size_t i = 0; i < 5; ++i)
            CHECK(pd[i] == doctest::Approx(va[i] + vb[i]).epsilon(1e-7));
    }

    SUBCASE("mult with relin and auto-rescale") {
        std::vector<double> va = {1, 2, 0.5}, vb = {3, 4, -2};
        auto ca = ev.encrypt(encode(*cx, va, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto cb = ev.encrypt(encode(*cx, vb, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto prod = ev.mult(ca, cb, km.rlk);
        CHECK(prod.level() == cx->top_level() - 1);
        auto out = ev.decrypt_values(prod, km.sk);
        CHECK(out[0] == doctest::Approx(3.0).epsilon(1e-6));
        CHECK(out[1] == doctest::Approx(8.0).epsilon(1e-6));
        CHECK(out[2] == doctest::Approx(-1.0).epsilon(1e-6));
    }

    SUBCASE("mult_plain and mult_scalar") {
        auto va = random_slots(rs, k, -3, 3);
        auto vb = random_slots(rs, k, -3, 3);
        auto ca = ev.encrypt(encode(*cx, va, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto mp = ev.mult_plain(ca, encode(*cx, vb, cx->delta(), ca.level()));
        ev.rescale(mp);
        auto out = ev.decrypt_values(mp, km.sk);
        double worst = 0;
        for (size_t i = 0; i < k; ++i)
            worst = std::max(worst, std::abs(out[i] - va[i] * vb[i]));
        CHECK(worst < 1e-6);
        auto sc = ev.decrypt_values(ev.mult_scalar(ca, -1.75), km.sk);
        for (size_t i = 0; i < 5; ++i)
            CHECK(sc[i] == doctest::Approx(-1.75 * va[i]).epsilon(1e-7));
    }

    SUBCASE("rotation shifts slots left") {
        auto v = random_slots(rs, k, -2, 2);
        auto ct = ev.encrypt(encode(*cx, v, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto r1 = ev.decrypt_values(ev.rotate(ct, 1, km.rot), km.sk);
        for (size_t i = 0; i < 20; ++i)
            CHECK(r1[i] == doctest::Approx(v[(i + 1) % k]).epsilon(1e-6));
        auto r0 = ev.decrypt_values(ev.rotate(ct, 0, km.rot), km.sk);
        CHECK(r0[0] == doctest::Approx(v[0]).epsilon(1e-7));
        // rotate by k then slots-k is identity
        auto rr = ev.rotate(ev.rotate(ct, 1, km.rot), int(k) - 1, km.rot);
        auto rv = ev.decrypt_values(rr, km.sk);
        for (size_t i = 0; i < 10; ++i)
            CHECK(rv[i] == doctest::Approx(v[i]).epsilon(1e-6));
        CHECK_THROWS(ev.rotate(ct, 5, km.rot));  // no key for 5
    }

    SUBCASE("rescale bookkeeping") {
        auto v = random_slots(rs, k, -2, 2);
        auto ca = ev.encrypt(encode(*cx, v, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto prod = ev.mult(ca, ca, km.rlk);  // auto-rescaled
        double expected_scale =
            cx->delta() * cx->delta() / double(cx->prime(cx->top_level()).q);
        CHECK(prod.scale == expected_scale);
        Ciphertext low = ca;
        ev.mod_down_to(low, 0);
        CHECK_THROWS(ev.rescale(low));
        CHECK_THROWS(ev.mult(low, low, km.rlk));
    }

    SUBCASE("serialization round-trips byte-exactly") {
        auto v = random_slots(rs, k, -2, 2);
        auto ct = ev.encrypt(encode(*cx, v, cx->delta(), cx->top_level()),
                             km.pk, rs);
        auto bytes = serialize(ct);
        CHECK(bytes.size() == ct.size_bytes());
        auto back = deserialize_ciphertext(bytes);
        CHECK(back.scale == ct.scale);
        CHECK(back.fp == ct.fp);
        CHECK(back.c[0].limb == ct.c[0].limb);
        CHECK(back.c[1].limb == ct.c[1].limb);
        CHECK(serialize(back) == bytes);
    }

    SUBCASE("trivial encryption decrypts to payload") {
        std::vector<double> v = {0.5, -7.25};
        auto ct = ev.encrypt_trivial(encode(*cx, v, cx->delta(), 3));
        auto out = ev.decrypt_values(ct, km.sk);
        CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(-7.25).epsilon(1e-12));
    }
}

TEST_CASE("random depth-3 circuits match plaintext mirror") {
    auto cx = Context::tiny();
    Evaluator ev(cx);
    auto km = ev.keygen(77, {1, 3});
    rng::Stream rs(99);
    const size_t k = cx->slots();

    for (int trial = 0; trial < 8; ++trial) {
        auto va = random_slots(rs, k, -2, 2);
        auto ca = ev.encrypt(encode(*cx, va, cx->delta(), cx->top_level()),
                             km.pk, rs);
        std::vector<double> pa = va;
        for (int depth = 0; depth < 3; ++depth) {
            // binary ops take a fresh operand matched to ca's scale/level
            auto vb = random_slots(rs, k, -2, 2);
            auto cb = ev.encrypt(encode(*cx, vb, ca.scale, ca.level()), km.pk,
                                 rs);
            switch (rs.below(4)) {
                case 0:
                    ca = ev.add(ca, cb);
                    for (size_t i = 0; i < k; ++i) pa[i] += vb[i];
                    break;
                case 1:
                    ca = ev.mult(ca, cb, km.rlk);
                    for (size_t i = 0; i < k; ++i) pa[i] *= vb[i];
                    break;
                case 2: {
                    ca = ev.rotate(ca, 1, km.rot);
                    std::vector<double> t(k);
                    for (size_t i = 0; i < k; ++i) t[i] = pa[(i + 1) % k];
                    pa = t;
                    break;
                }
                case 3:
                    ca = ev.sub(ca, cb);
                    for (size_t i = 0; i < k; ++i) pa[i] -= vb[i];
                    break;
            }
        }
        auto out = ev.decrypt_values(ca, km.sk);
        double worst = 0, ref = 1;
        for (size_t i = 0; i < k; ++i) {
            worst = std::max(worst, std::abs(out[i] - pa[i]));
            ref = std::max(ref, std::abs(pa[i]));
        }
        CHECK(worst / ref < 1e-3);
    }
}
