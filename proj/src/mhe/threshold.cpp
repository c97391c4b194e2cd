#include "pefl/mhe/threshold.hpp"

#include <cmath>
#include <stdexcept>

namespace pefl::mhe {

using namespace ckks;

namespace {

constexpr uint64_t kTagShare = 0x7368617265ULL;    // per-party secrets
constexpr uint64_t kTagCrp = 0x637270ULL;          // common random polys
constexpr uint64_t kTagNoise = 0x646b676eULL;      // per-party keygen noise

uint64_t from_signed128(const Modulus& m, __int128 v) {
    if (v >= 0) {
        unsigned __int128 u = static_cast<unsigned __int128>(v);
        return m.reduce128_full(u);
    }
    unsigned __int128 u = static_cast<unsigned __int128>(-v);
    uint64_t r = m.reduce128_full(u);
    return r == 0 ? 0 : m.q - r;
}

__int128 signed_uniform_128(rng::Stream& rs, int bits) {
    // uniform in [-2^bits, 2^bits)
    if (bits <= 0) return 0;
    unsigned __int128 x = 0;
    int got = 0;
    while (got < bits + 1) {
        x = (x << 64) | rs.u64();
        got += 64;
    }
    x &= ((static_cast<unsigned __int128>(1) << (bits + 1)) - 1);
    return static_cast<__int128>(x) -
           (static_cast<__int128>(1) << bits);
}

// per-limb pointwise ops over the first `limbs` rows, NTT form assumed equal
void acc_add(const Context& cx, RnsPoly& acc, const RnsPoly& x) {
    for (size_t i = 0; i < acc.limb.size(); ++i)
        for (size_t k = 0; k < cx.n(); ++k)
            acc.limb[i][k] = cx.prime(i).add(acc.limb[i][k], x.limb[i][k]);
}

double q_bits_at(const Context& cx, int level) {
    double b = 0;
    for (int i = 0; i <= level; ++i)
        b += std::log2(double(cx.prime(size_t(i)).q));
    return b;
}

// c1 * s over the limbs c1 carries, coefficient domain in and out
RnsPoly mul_share(const Context& cx, const RnsPoly& c1_coeff,
                  const RnsPoly& s_ntt) {
    RnsPoly t = c1_coeff;
    poly_to_ntt(cx, t);
    for (size_t i = 0; i < t.limb.size(); ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < cx.n(); ++k)
            t.limb[i][k] = m.mul(t.limb[i][k], s_ntt.limb[i][k]);
    }
    poly_from_ntt(cx, t);
    return t;
}

}  // namespace

size_t BootstrapShare::size_bytes() const {
    size_t poly = 0;
    for (const auto& l : h.limb) poly += l.size() * 8;
    return 16 + poly + enc_neg_mask.size_bytes();
}

std::vector<SecretShare> make_shares(const Context& cx, int n_parties,
                                     uint64_t seed) {
    if (n_parties < 1) throw std::invalid_argument("need at least one party");
    std::vector<SecretShare> out(n_parties);
    const size_t full = cx.num_q() + 1;
    for (int i = 0; i < n_parties; ++i) {
        rng::Stream rs(seed, {kTagShare, uint64_t(i)});
        out[i].party = i;
        out[i].s_coeff = sample_ternary(cx, full, rs);
        out[i].s_ntt = out[i].s_coeff;
        poly_to_ntt(cx, out[i].s_ntt);
    }
    return out;
}

SecretKey collective_secret(const Context& cx,
                            const std::vector<SecretShare>& shares) {
    if (shares.empty()) throw std::invalid_argument("no shares");
    SecretKey sk;
    sk.s_coeff = shares[0].s_coeff;
    sk.s_ntt = shares[0].s_ntt;
    for (size_t i = 1; i < shares.size(); ++i) {
        acc_add(cx, sk.s_coeff, shares[i].s_coeff);
        acc_add(cx, sk.s_ntt, shares[i].s_ntt);
    }
    return sk;
}

PublicKey dkg_public_key(const Context& cx,
                         const std::vector<SecretShare>& shares,
                         uint64_t crp_seed) {
    if (shares.empty()) throw std::invalid_argument("no shares");
    const size_t nq = cx.num_q();
    rng::Stream crp(crp_seed, {kTagCrp, 0x706bULL});
    PublicKey pk;
    pk.a = sample_uniform(cx, nq, crp);
    pk.b = RnsPoly(cx.n(), nq, true);
    for (const auto& sh : shares) {
        rng::Stream rs(crp_seed, {kTagNoise, 0x706bULL, uint64_t(sh.party)});
        RnsPoly e = sample_gaussian(cx, nq, rs);
        poly_to_ntt(cx, e);
        for (size_t i = 0; i < nq; ++i) {
            const Modulus& m = cx.prime(i);
            for (size_t k = 0; k < cx.n(); ++k) {
                uint64_t as = m.mul(pk.a.limb[i][k], sh.s_ntt.limb[i][k]);
                pk.b.limb[i][k] = m.add(pk.b.limb[i][k],
                                        m.add(m.neg(as), e.limb[i][k]));
            }
        }
    }
    return pk;
}

RotationKeys dkg_rotation_keys(const Context& cx,
                               const std::vector<SecretShare>& shares,
                               uint64_t crp_seed,
                               const std::vector<int>& rotations) {
    if (shares.empty()) throw std::invalid_argument("no shares");
    const size_t nq = cx.num_q();
    const size_t full = nq + 1;
    RotationKeys keys;
    for (int r : rotations) {
        const uint64_t g = galois_for_rotation(cx, r);
        KswitchKey key;
        key.kb.assign(nq, RnsPoly(cx.n(), full, true));
        key.ka.clear();
        rng::Stream crp(crp_seed, {kTagCrp, 0x726f74ULL, g});
        for (size_t j = 0; j < nq; ++j)
            key.ka.push_back(sample_uniform(cx, full, crp));
        for (const auto& sh : shares) {
            RnsPoly sg = poly_galois(cx, sh.s_coeff, g);
            poly_to_ntt(cx, sg);
            rng::Stream rs(crp_seed,
                           {kTagNoise, 0x726f74ULL, g, uint64_t(sh.party)});
            for (size_t j = 0; j < nq; ++j) {
                RnsPoly e = sample_gaussian(cx, full, rs);
                poly_to_ntt(cx, e);
                for (size_t i = 0; i < full; ++i) {
                    const Modulus& m = cx.prime(i);
                    const uint64_t gd = cx.gadget(j, i);
                    for (size_t k = 0; k < cx.n(); ++k) {
                        uint64_t as = m.mul(key.ka[j].limb[i][k],
                                            sh.s_ntt.limb[i][k]);
                        uint64_t t = m.add(m.neg(as), e.limb[i][k]);
                        t = m.add(t, m.mul(gd, sg.limb[i][k]));
                        key.kb[j].limb[i][k] = m.add(key.kb[j].limb[i][k], t);
                    }
                }
            }
        }
        keys.by_amount[r] = std::move(key);
    }
    return keys;
}

// Two-round protocol. Round 1 builds, under a shared ephemeral u = sum u_i,
//   h0 = -u*a + s*g + e,   h1 = s*a + e.
// Round 2 re-encrypts under s:
//   kb = sum_i [ s_i*h0 + (u_i - s_i)*h1 ] = g*s^2 - s*(s*a) + noise,
// so (kb, h1) switches s^2 down to s exactly like a dealer key.
KswitchKey dkg_relin_key(const Context& cx,
                         const std::vector<SecretShare>& shares,
                         uint64_t crp_seed) {
    if (shares.empty()) throw std::invalid_argument("no shares");
    const size_t nq = cx.num_q();
    const size_t full = nq + 1;
    const size_t n = cx.n();

    std::vector<RnsPoly> a;
    rng::Stream crp(crp_seed, {kTagCrp, 0x726c6bULL});
    for (size_t j = 0; j < nq; ++j) a.push_back(sample_uniform(cx, full, crp));

    // per-party ephemerals
    std::vector<RnsPoly> u_ntt;
    for (const auto& sh : shares) {
        rng::Stream rs(crp_seed, {kTagNoise, 0x726c6b31ULL,
                                  uint64_t(sh.party)});
        RnsPoly u = sample_ternary(cx, full, rs);
        poly_to_ntt(cx, u);
        u_ntt.push_back(std::move(u));
    }

    // round 1 aggregates
    std::vector<RnsPoly> h0(nq, RnsPoly(n, full, true));
    std::vector<RnsPoly> h1(nq, RnsPoly(n, full, true));
    for (size_t pi = 0; pi < shares.size(); ++pi) {
        const auto& sh = shares[pi];
        rng::Stream rs(crp_seed, {kTagNoise, 0x726c6b32ULL,
                                  uint64_t(sh.party)});
        for (size_t j = 0; j < nq; ++j) {
            RnsPoly e0 = sample_gaussian(cx, full, rs);
            RnsPoly e1 = sample_gaussian(cx, full, rs);
            poly_to_ntt(cx, e0);
            poly_to_ntt(cx, e1);
            for (size_t i = 0; i < full; ++i) {
                const Modulus& m = cx.prime(i);
                const uint64_t gd = cx.gadget(j, i);
                for (size_t k = 0; k < n; ++k) {
                    uint64_t ua = m.mul(u_ntt[pi].limb[i][k], a[j].limb[i][k]);
                    uint64_t t = m.add(m.neg(ua),
                                       m.mul(gd, sh.s_ntt.limb[i][k]));
                    h0[j].limb[i][k] = m.add(h0[j].limb[i][k],
                                             m.add(t, e0.limb[i][k]));
                    uint64_t sa = m.mul(sh.s_ntt.limb[i][k], a[j].limb[i][k]);
                    h1[j].limb[i][k] = m.add(h1[j].limb[i][k],
                                             m.add(sa, e1.limb[i][k]));
                }
            }
        }
    }

    // round 2
    KswitchKey key;
    key.kb.assign(nq, RnsPoly(n, full, true));
    key.ka = h1;
    for (size_t pi = 0; pi < shares.size(); ++pi) {
        const auto& sh = shares[pi];
        rng::Stream rs(crp_seed, {kTagNoise, 0x726c6b33ULL,
                                  uint64_t(sh.party)});
        for (size_t j = 0; j < nq; ++j) {
            RnsPoly e2 = sample_gaussian(cx, full, rs);
            RnsPoly e3 = sample_gaussian(cx, full, rs);
            poly_to_ntt(cx, e2);
            poly_to_ntt(cx, e3);
            for (size_t i = 0; i < full; ++i) {
                const Modulus& m = cx.prime(i);
                for (size_t k = 0; k < n; ++k) {
                    uint64_t sh0 = m.mul(sh.s_ntt.limb[i][k],
                                         h0[j].limb[i][k]);
                    uint64_t us = m.sub(u_ntt[pi].limb[i][k],
                                        sh.s_ntt.limb[i][k]);
                    uint64_t uh1 = m.mul(us, h1[j].limb[i][k]);
                    uint64_t t = m.add(m.add(sh0, e2.limb[i][k]),
                                       m.add(uh1, e3.limb[i][k]));
                    key.kb[j].limb[i][k] = m.add(key.kb[j].limb[i][k], t);
                }
            }
        }
    }
    return key;
}

KeyRing distributed_keygen(const Context& cx,
                           const std::vector<SecretShare>& shares,
                           uint64_t crp_seed,
                           const std::vector<int>& rotations) {
    KeyRing kr;
    kr.pk = dkg_public_key(cx, shares, crp_seed);
    kr.rlk = dkg_relin_key(cx, shares, crp_seed);
    kr.rot = dkg_rotation_keys(cx, shares, crp_seed, rotations);
    return kr;
}

KeyRing dealer_keygen(const Context& cx,
                      const std::vector<SecretShare>& shares, uint64_t seed,
                      const std::vector<int>& rotations) {
    // non-owning alias: the evaluator only lives for this call
    Evaluator ev(ContextPtr(&cx, [](const Context*) {}));
    SecretKey sk = collective_secret(cx, shares);
    rng::Stream rs(seed, {kTagNoise, 0x64656cULL});

    KeyRing kr;
    const size_t nq = cx.num_q();
    RnsPoly a = sample_uniform(cx, nq, rs);
    RnsPoly e = sample_gaussian(cx, nq, rs);
    poly_to_ntt(cx, e);
    RnsPoly b(cx.n(), nq, true);
    for (size_t i = 0; i < nq; ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < cx.n(); ++k)
            b.limb[i][k] =
                m.add(m.neg(m.mul(a.limb[i][k], sk.s_ntt.limb[i][k])),
                      e.limb[i][k]);
    }
    kr.pk.a = std::move(a);
    kr.pk.b = std::move(b);

    const size_t full = nq + 1;
    RnsPoly s2(cx.n(), full, true);
    for (size_t i = 0; i < full; ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < cx.n(); ++k)
            s2.limb[i][k] = m.mul(sk.s_ntt.limb[i][k], sk.s_ntt.limb[i][k]);
    }
    kr.rlk = ev.make_kswitch_key(s2, sk, rs);
    for (int r : rotations) {
        uint64_t g = galois_for_rotation(cx, r);
        RnsPoly sg = poly_galois(cx, sk.s_coeff, g);
        poly_to_ntt(cx, sg);
        kr.rot.by_amount[r] = ev.make_kswitch_key(sg, sk, rs);
    }
    return kr;
}

PartialDecryption partial_decrypt(const Context& cx, const SecretShare& share,
                                  const Ciphertext& ct, const FloodConfig& cfg,
                                  rng::Stream& rs) {
    if (ct.c.size() != 2)
        throw std::invalid_argument("partial decryption needs a 2-part ct");
    PartialDecryption pd;
    pd.party = share.party;
    pd.p = mul_share(cx, ct.c[1], share.s_ntt);
    pd.flood_magnitude = std::ldexp(1.0, cfg.kappa);
    pd.fp = ct.fp;
    pd.level = ct.level();
    pd.scale = ct.scale;
    const size_t limbs = pd.p.limb.size();
    for (size_t k = 0; k < cx.n(); ++k) {
        int64_t f = rs.signed_uniform_pow2(cfg.kappa);
        for (size_t i = 0; i < limbs; ++i)
            pd.p.limb[i][k] =
                cx.prime(i).add(pd.p.limb[i][k], cx.prime(i).from_signed(f));
    }
    return pd;
}

std::vector<double> combine_partials(
    const Context& cx, const Ciphertext& ct,
    const std::vector<PartialDecryption>& partials, int n_parties) {
    if (int(partials.size()) != n_parties)
        throw std::invalid_argument("missing partial decryptions");
    std::vector<bool> seen(n_parties, false);
    for (const auto& pd : partials) {
        if (pd.fp != ct.fp || pd.level != ct.level() || pd.scale != ct.scale)
            throw std::invalid_argument("partial/ciphertext mismatch");
        if (pd.party < 0 || pd.party >= n_parties || seen[pd.party])
            throw std::invalid_argument("bad party id in partials");
        seen[pd.party] = true;
    }
    RnsPoly m = ct.c[0];
    if (m.ntt_form) poly_from_ntt(cx, m);
    for (const auto& pd : partials) poly_add(cx, m, pd.p);
    Plaintext pt;
    pt.p = std::move(m);
    pt.scale = ct.scale;
    return decode(cx, pt);
}

BootstrapShare bootstrap_share(const Evaluator& ev, const SecretShare& share,
                               const Ciphertext& ct, const PublicKey& pk,
                               int n_parties, const BootstrapConfig& cfg,
                               rng::Stream& rs) {
    const Context& cx = ev.ctx();
    if (ct.c.size() != 2)
        throw std::invalid_argument("bootstrap needs a 2-part ct");
    BootstrapShare bs;
    bs.party = share.party;
    bs.level = ct.level();
    bs.h = ev.mul_secret(ct.c[1], share.s_ntt);

    const int logn = int(std::ceil(std::log2(double(std::max(2, n_parties)))));
    int mask_bits = int(q_bits_at(cx, ct.level())) - cfg.mask_margin_bits -
                    logn - 1;
    mask_bits = std::max(0, std::min(100, mask_bits));

    std::vector<__int128> neg_mask(cx.n());
    const size_t limbs = bs.h.limb.size();
    for (size_t k = 0; k < cx.n(); ++k) {
        int64_t f = rs.signed_uniform_pow2(cfg.flood.kappa);
        __int128 mask = signed_uniform_128(rs, mask_bits);
        neg_mask[k] = -mask;
        for (size_t i = 0; i < limbs; ++i) {
            const Modulus& m = cx.prime(i);
            uint64_t add = m.add(m.from_signed(f), from_signed128(m, mask));
            bs.h.limb[i][k] = m.add(bs.h.limb[i][k], add);
        }
    }

    Plaintext ptm;
    ptm.p = encode_exact(cx, neg_mask, cx.top_level());
    ptm.scale = ct.scale;
    bs.enc_neg_mask = ev.encrypt(ptm, pk, rs);
    return bs;
}

Ciphertext combine_bootstrap(const Evaluator& ev, const Ciphertext& ct,
                             const std::vector<BootstrapShare>& shares,
                             int n_parties) {
    const Context& cx = ev.ctx();
    if (int(shares.size()) != n_parties)
        throw std::invalid_argument("missing bootstrap shares");
    std::vector<bool> seen(n_parties, false);
    for (const auto& bs : shares) {
        if (bs.level != ct.level())
            throw std::invalid_argument("bootstrap share level mismatch");
        if (bs.party < 0 || bs.party >= n_parties || seen[bs.party])
            throw std::invalid_argument("bad party id in bootstrap shares");
        seen[bs.party] = true;
    }

    RnsPoly acc = ct.c[0];
    if (acc.ntt_form) poly_from_ntt(cx, acc);
    for (const auto& bs : shares) poly_add(cx, acc, bs.h);

    // exact centered lift, then re-embed at the top of the chain; the masks
    // cancel against the encrypted negations, leaving only flooding noise
    std::vector<__int128> lifted = decode_exact(cx, acc);
    Plaintext top;
    top.p = encode_exact(cx, lifted, cx.top_level());
    top.scale = ct.scale;
    Ciphertext out = ev.encrypt_trivial(top);
    for (const auto& bs : shares) out = ev.add(out, bs.enc_neg_mask);
    return out;
}

Ciphertext collective_bootstrap(const Evaluator& ev, const Ciphertext& ct,
                                const std::vector<SecretShare>& shares,
                                const PublicKey& pk, const BootstrapConfig& cfg,
                                rng::Stream& rs) {
    std::vector<BootstrapShare> bss;
    bss.reserve(shares.size());
    for (const auto& sh : shares)
        bss.push_back(bootstrap_share(ev, sh, ct, pk, int(shares.size()), cfg,
                                      rs));
    return combine_bootstrap(ev, ct, bss, int(shares.size()));
}

}  // namespace pefl::mhe
