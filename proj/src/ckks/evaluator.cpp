#include "pefl/ckks/evaluator.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pefl::ckks {

// ---------- sampling ----------

RnsPoly sample_uniform(const Context& cx, size_t limbs, rng::Stream& rs) {
    RnsPoly p(cx.n(), limbs, true);  // uniform in NTT domain is uniform
    for (size_t i = 0; i < limbs; ++i)
        for (size_t k = 0; k < cx.n(); ++k)
            p.limb[i][k] = rs.below(cx.prime(i).q);
    return p;
}

RnsPoly sample_ternary(const Context& cx, size_t limbs, rng::Stream& rs) {
    RnsPoly p(cx.n(), limbs, false);
    for (size_t k = 0; k < cx.n(); ++k) {
        int64_t v = rs.ternary();
        for (size_t i = 0; i < limbs; ++i)
            p.limb[i][k] = cx.prime(i).from_signed(v);
    }
    return p;
}

RnsPoly sample_gaussian(const Context& cx, size_t limbs, rng::Stream& rs) {
    RnsPoly p(cx.n(), limbs, false);
    const double sigma = cx.params().sigma;
    for (size_t k = 0; k < cx.n(); ++k) {
        int64_t v = llround(rs.normal(0.0, sigma));
        for (size_t i = 0; i < limbs; ++i)
            p.limb[i][k] = cx.prime(i).from_signed(v);
    }
    return p;
}

uint64_t galois_for_rotation(const Context& cx, int k) {
    const uint64_t m2 = 2 * cx.n();
    const size_t slots = cx.slots();
    int64_t kk = k % int64_t(slots);
    if (kk < 0) kk += int64_t(slots);
    uint64_t g = 1;
    for (int64_t i = 0; i < kk; ++i) g = (g * 5) % m2;
    return g;
}

// ---------- serialization ----------

namespace {
void put64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}
uint64_t get64(const std::vector<uint8_t>& in, size_t& pos) {
    if (pos + 8 > in.size()) throw std::runtime_error("ciphertext truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(in[pos + i]) << (8 * i);
    pos += 8;
    return v;
}
constexpr uint64_t kCtMagic = 0x3130544346455250ull;  // "PEFCT01"
}  // namespace

size_t Ciphertext::size_bytes() const {
    size_t polys = c.size();
    size_t limbs = c.empty() ? 0 : c[0].limb.size();
    size_t n = c.empty() ? 0 : c[0].n;
    return 8 + 32 + 8 + 8 + 8 + 8 + polys * limbs * n * 8;
}

std::vector<uint8_t> serialize(const Ciphertext& ct) {
    std::vector<uint8_t> out;
    out.reserve(ct.size_bytes());
    put64(out, kCtMagic);
    out.insert(out.end(), ct.fp.begin(), ct.fp.end());
    uint64_t scale_bits;
    std::memcpy(&scale_bits, &ct.scale, 8);
    put64(out, scale_bits);
    put64(out, ct.c.size());
    put64(out, ct.c.empty() ? 0 : ct.c[0].limb.size());
    put64(out, ct.c.empty() ? 0 : ct.c[0].n);
    for (const RnsPoly& p : ct.c)
        for (const auto& limb : p.limb)
            for (uint64_t v : limb) put64(out, v);
    return out;
}

Ciphertext deserialize_ciphertext(const std::vector<uint8_t>& bytes) {
    size_t pos = 0;
    if (get64(bytes, pos) != kCtMagic)
        throw std::runtime_error("bad ciphertext magic");
    Ciphertext ct;
    if (pos + 32 > bytes.size()) throw std::runtime_error("ciphertext truncated");
    std::copy(bytes.begin() + pos, bytes.begin() + pos + 32, ct.fp.begin());
    pos += 32;
    uint64_t scale_bits = get64(bytes, pos);
    std::memcpy(&ct.scale, &scale_bits, 8);
    uint64_t polys = get64(bytes, pos);
    uint64_t limbs = get64(bytes, pos);
    uint64_t n = get64(bytes, pos);
    if (polys > 3 || limbs > 64 || n > (1u << 20))
        throw std::runtime_error("ciphertext header out of range");
    ct.c.assign(polys, RnsPoly(n, limbs, false));
    for (uint64_t p = 0; p < polys; ++p)
        for (uint64_t l = 0; l < limbs; ++l)
            for (uint64_t k = 0; k < n; ++k)
                ct.c[p].limb[l][k] = get64(bytes, pos);
    if (pos != bytes.size()) throw std::runtime_error("trailing bytes");
    return ct;
}

// ---------- key generation ----------

KswitchKey Evaluator::make_kswitch_key(const RnsPoly& w_ntt,
                                       const SecretKey& sk,
                                       rng::Stream& rs) const {
    const Context& cx = *cx_;
    const size_t nq = cx.num_q();
    const size_t full = nq + 1;
    KswitchKey key;
    key.kb.reserve(nq);
    key.ka.reserve(nq);
    for (size_t j = 0; j < nq; ++j) {
        RnsPoly a = sample_uniform(cx, full, rs);
        RnsPoly e = sample_gaussian(cx, full, rs);
        poly_to_ntt(cx, e);
        RnsPoly b(cx.n(), full, true);
        for (size_t i = 0; i < full; ++i) {
            const Modulus& m = cx.prime(i);
            const uint64_t g = cx.gadget(j, i);
            for (size_t k = 0; k < cx.n(); ++k) {
                uint64_t as = m.mul(a.limb[i][k], sk.s_ntt.limb[i][k]);
                uint64_t t = m.add(m.neg(as), e.limb[i][k]);
                b.limb[i][k] = m.add(t, m.mul(g, w_ntt.limb[i][k]));
            }
        }
        key.kb.push_back(std::move(b));
        key.ka.push_back(std::move(a));
    }
    return key;
}

KeyMaterial Evaluator::keygen(uint64_t seed, const std::vector<int>& rotations) {
    const Context& cx = *cx_;
    const size_t nq = cx.num_q();
    const size_t full = nq + 1;
    rng::Stream rs(seed, {0x6b657967656eULL});

    KeyMaterial km;
    km.sk.s_coeff = sample_ternary(cx, full, rs);
    km.sk.s_ntt = km.sk.s_coeff;
    poly_to_ntt(cx, km.sk.s_ntt);

    // pk over the q-basis at top level
    RnsPoly a = sample_uniform(cx, nq, rs);
    RnsPoly e = sample_gaussian(cx, nq, rs);
    poly_to_ntt(cx, e);
    RnsPoly b(cx.n(), nq, true);
    for (size_t i = 0; i < nq; ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < cx.n(); ++k)
            b.limb[i][k] = m.add(
                m.neg(m.mul(a.limb[i][k], km.sk.s_ntt.limb[i][k])),
                e.limb[i][k]);
    }
    km.pk.a = std::move(a);
    km.pk.b = std::move(b);

    // relin key on w = s^2
    RnsPoly s2(cx.n(), full, true);
    for (size_t i = 0; i < full; ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < cx.n(); ++k)
            s2.limb[i][k] =
                m.mul(km.sk.s_ntt.limb[i][k], km.sk.s_ntt.limb[i][k]);
    }
    km.rlk = make_kswitch_key(s2, km.sk, rs);

    for (int r : rotations) {
        uint64_t g = galois_for_rotation(cx, r);
        RnsPoly sg = poly_galois(cx, km.sk.s_coeff, g);
        poly_to_ntt(cx, sg);
        km.rot.by_amount[r] = make_kswitch_key(sg, km.sk, rs);
    }
    return km;
}

// ---------- encryption ----------

Ciphertext Evaluator::encrypt(const Plaintext& pt, const PublicKey& pk,
                              rng::Stream& rs) const {
    const Context& cx = *cx_;
    const size_t lv = pt.p.limb.size();
    RnsPoly u = sample_ternary(cx, lv, rs);
    poly_to_ntt(cx, u);
    RnsPoly e0 = sample_gaussian(cx, lv, rs);
    RnsPoly e1 = sample_gaussian(cx, lv, rs);

    Ciphertext ct;
    ct.fp = cx.fingerprint();
    ct.scale = pt.scale;
    ct.c.assign(2, RnsPoly(cx.n(), lv, true));
    for (size_t i = 0; i < lv; ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < cx.n(); ++k) {
            ct.c[0].limb[i][k] = m.mul(pk.b.limb[i][k], u.limb[i][k]);
            ct.c[1].limb[i][k] = m.mul(pk.a.limb[i][k], u.limb[i][k]);
        }
    }
    poly_from_ntt(cx, ct.c[0]);
    poly_from_ntt(cx, ct.c[1]);
    poly_add(cx, ct.c[0], e0);
    poly_add(cx, ct.c[1], e1);
    poly_add(cx, ct.c[0], pt.p);
    return ct;
}

Ciphertext Evaluator::encrypt_trivial(const Plaintext& pt) const {
    Ciphertext ct;
    ct.fp = cx_->fingerprint();
    ct.scale = pt.scale;
    ct.c.assign(2, RnsPoly(cx_->n(), pt.p.limb.size(), false));
    ct.c[0] = pt.p;
    return ct;
}

RnsPoly Evaluator::mul_secret(const RnsPoly& c1_coeff,
                              const RnsPoly& s_ntt) const {
    const Context& cx = *cx_;
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

Plaintext Evaluator::decrypt(const Ciphertext& ct, const SecretKey& sk) const {
    check(ct);
    if (ct.c.size() != 2) throw std::runtime_error("relinearize first");
    Plaintext pt;
    pt.scale = ct.scale;
    pt.p = mul_secret(ct.c[1], sk.s_ntt);
    poly_add(*cx_, pt.p, ct.c[0]);
    return pt;
}

std::vector<double> Evaluator::decrypt_values(const Ciphertext& ct,
                                              const SecretKey& sk) const {
    return decode(*cx_, decrypt(ct, sk));
}

// ---------- add / sub ----------

void Evaluator::check(const Ciphertext& a) const {
    if (a.fp != cx_->fingerprint())
        throw std::runtime_error("ciphertext/params fingerprint mismatch");
}

void Evaluator::mod_down_to(Ciphertext& a, int level) const {
    if (level > a.level()) throw std::runtime_error("cannot raise level");
    for (RnsPoly& p : a.c) p.drop_to(size_t(level) + 1);
}

void Evaluator::align(Ciphertext& a, Ciphertext& b) const {
    int lv = std::min(a.level(), b.level());
    mod_down_to(a, lv);
    mod_down_to(b, lv);
    double rel = std::abs(a.scale - b.scale) / a.scale;
    if (rel > 1e-9) throw std::runtime_error("scale mismatch in add");
}

Ciphertext Evaluator::add(const Ciphertext& a, const Ciphertext& b) const {
    check(a);
    check(b);
    Ciphertext x = a, y = b;
    align(x, y);
    for (size_t i = 0; i < x.c.size(); ++i) poly_add(*cx_, x.c[i], y.c[i]);
    return x;
}

Ciphertext Evaluator::sub(const Ciphertext& a, const Ciphertext& b) const {
    check(a);
    check(b);
    Ciphertext x = a, y = b;
    align(x, y);
    for (size_t i = 0; i < x.c.size(); ++i) poly_sub(*cx_, x.c[i], y.c[i]);
    return x;
}

Ciphertext Evaluator::negate(const Ciphertext& a) const {
    Ciphertext x = a;
    for (RnsPoly& p : x.c) poly_neg(*cx_, p);
    return x;
}

namespace {
void match_plain(const Ciphertext& a, const Plaintext& pt) {
    if (int(pt.p.limb.size()) != a.level() + 1)
        throw std::runtime_error("plaintext level mismatch");
    if (std::abs(pt.scale - a.scale) / a.scale > 1e-9)
        throw std::runtime_error("plaintext scale mismatch");
}
}  // namespace

Ciphertext Evaluator::add_plain(const Ciphertext& a, const Plaintext& pt) const {
    check(a);
    match_plain(a, pt);
    Ciphertext x = a;
    poly_add(*cx_, x.c[0], pt.p);
    return x;
}

Ciphertext Evaluator::sub_plain(const Ciphertext& a, const Plaintext& pt) const {
    check(a);
    match_plain(a, pt);
    Ciphertext x = a;
    poly_sub(*cx_, x.c[0], pt.p);
    return x;
}

Ciphertext Evaluator::plain_sub(const Plaintext& pt, const Ciphertext& a) const {
    check(a);
    match_plain(a, pt);
    Ciphertext x = negate(a);
    poly_add(*cx_, x.c[0], pt.p);
    return x;
}

// ---------- multiplication ----------

std::pair<RnsPoly, RnsPoly> Evaluator::keyswitch(const RnsPoly& d,
                                                 const KswitchKey& key) const {
    const Context& cx = *cx_;
    if (d.ntt_form) throw std::runtime_error("keyswitch input must be coeff");
    if (key.empty()) throw std::runtime_error("missing key-switch key");
    const size_t n = cx.n();
    const size_t lv = d.limb.size();       // digits = lv
    const size_t ext = lv + 1;             // + special prime
    const size_t spec_idx = cx.num_q();    // index of special in chain

    // limb index map: 0..lv-1 -> q_i, lv -> special
    auto chain_idx = [&](size_t i) { return i < lv ? i : spec_idx; };

    std::vector<std::vector<unsigned __int128>> acc0(ext), acc1(ext);
    for (size_t i = 0; i < ext; ++i) {
        acc0[i].assign(n, 0);
        acc1[i].assign(n, 0);
    }
    std::vector<uint64_t> tmp(n);
    for (size_t j = 0; j < lv; ++j) {
        const std::vector<uint64_t>& dj = d.limb[j];
        const uint64_t qj = cx.prime(j).q;
        for (size_t i = 0; i < ext; ++i) {
            const size_t ci = chain_idx(i);
            const Modulus& m = cx.prime(ci);
            if (ci == j) {
                std::memcpy(tmp.data(), dj.data(), n * 8);
            } else if (qj >= 4 * m.q) {
                for (size_t k = 0; k < n; ++k) tmp[k] = m.reduce(dj[k]);
            } else {
                std::memcpy(tmp.data(), dj.data(), n * 8);
            }
            cx.ntt(ci).forward(tmp.data());
            const uint64_t* kb = key.kb[j].limb[ci].data();
            const uint64_t* ka = key.ka[j].limb[ci].data();
            unsigned __int128* a0 = acc0[i].data();
            unsigned __int128* a1 = acc1[i].data();
            for (size_t k = 0; k < n; ++k) {
                a0[k] += static_cast<unsigned __int128>(tmp[k]) * kb[k];
                a1[k] += static_cast<unsigned __int128>(tmp[k]) * ka[k];
            }
        }
    }

    RnsPoly r0(n, ext, true), r1(n, ext, true);
    for (size_t i = 0; i < ext; ++i) {
        const Modulus& m = cx.prime(chain_idx(i));
        for (size_t k = 0; k < n; ++k) {
            r0.limb[i][k] = m.reduce128_full(acc0[i][k]);
            r1.limb[i][k] = m.reduce128_full(acc1[i][k]);
        }
    }
    for (size_t i = 0; i < ext; ++i) {
        cx.ntt(chain_idx(i)).inverse(r0.limb[i].data());
        cx.ntt(chain_idx(i)).inverse(r1.limb[i].data());
    }
    r0.ntt_form = r1.ntt_form = false;

    // mod-down: divide by the special prime with centered correction
    const Modulus& sp = cx.special();
    RnsPoly o0(n, lv, false), o1(n, lv, false);
    for (size_t i = 0; i < lv; ++i) {
        const Modulus& m = cx.prime(i);
        const uint64_t pinv = cx.pinv(i);
        for (size_t k = 0; k < n; ++k) {
            int64_t r = sp.centered(r0.limb[lv][k]);
            uint64_t t = m.sub(r0.limb[i][k], m.from_signed(r));
            o0.limb[i][k] = m.mul(t, pinv);
            r = sp.centered(r1.limb[lv][k]);
            t = m.sub(r1.limb[i][k], m.from_signed(r));
            o1.limb[i][k] = m.mul(t, pinv);
        }
    }
    return {std::move(o0), std::move(o1)};
}

Ciphertext Evaluator::mult(const Ciphertext& a, const Ciphertext& b,
                           const KswitchKey& rlk) const {
    check(a);
    check(b);
    if (a.c.size() != 2 || b.c.size() != 2)
        throw std::runtime_error("mult needs relinearized inputs");
    Ciphertext x = a, y = b;
    int lv = std::min(x.level(), y.level());
    if (lv < 1)
        throw std::runtime_error("level exhausted: cannot rescale after mult");
    mod_down_to(x, lv);
    mod_down_to(y, lv);

    const Context& cx = *cx_;
    for (RnsPoly& p : x.c) poly_to_ntt(cx, p);
    for (RnsPoly& p : y.c) poly_to_ntt(cx, p);

    const size_t n = cx.n(), limbs = size_t(lv) + 1;
    RnsPoly d0(n, limbs, true), d1(n, limbs, true), d2(n, limbs, true);
    for (size_t i = 0; i < limbs; ++i) {
        const Modulus& m = cx.prime(i);
        const uint64_t *a0 = x.c[0].limb[i].data(), *a1 = x.c[1].limb[i].data();
        const uint64_t *b0 = y.c[0].limb[i].data(), *b1 = y.c[1].limb[i].data();
        for (size_t k = 0; k < n; ++k) {
            d0.limb[i][k] = m.mul(a0[k], b0[k]);
            unsigned __int128 cross =
                static_cast<unsigned __int128>(a0[k]) * b1[k] +
                static_cast<unsigned __int128>(a1[k]) * b0[k];
            d1.limb[i][k] = m.reduce128_full(cross);
            d2.limb[i][k] = m.mul(a1[k], b1[k]);
        }
    }
    poly_from_ntt(cx, d0);
    poly_from_ntt(cx, d1);
    poly_from_ntt(cx, d2);

    auto [e0, e1] = keyswitch(d2, rlk);
    poly_add(cx, d0, e0);
    poly_add(cx, d1, e1);

    Ciphertext out;
    out.fp = a.fp;
    out.scale = x.scale * y.scale;
    out.c = {std::move(d0), std::move(d1)};
    rescale(out);
    return out;
}

Ciphertext Evaluator::mult_plain(const Ciphertext& a, const Plaintext& pt) const {
    check(a);
    if (int(pt.p.limb.size()) < a.level() + 1)
        throw std::runtime_error("plaintext level below ciphertext");
    const Context& cx = *cx_;
    Ciphertext x = a;
    RnsPoly m = pt.p;
    m.drop_to(x.c[0].limb.size());
    poly_to_ntt(cx, m);
    for (RnsPoly& p : x.c) {
        poly_to_ntt(cx, p);
        poly_mul_ntt(cx, p, m);
        poly_from_ntt(cx, p);
    }
    x.scale = a.scale * pt.scale;
    return x;
}

Ciphertext Evaluator::mult_scalar(const Ciphertext& a, double v) const {
    const Context& cx = *cx_;
    if (a.level() < 1) throw std::runtime_error("level exhausted");
    // encode at scale q_level: rescale restores the input scale exactly
    double s = double(cx.prime(a.level()).q);
    Plaintext pt = encode_constant(cx, v, s, a.level());
    Ciphertext x = mult_plain(a, pt);
    rescale(x);
    return x;
}

void Evaluator::rescale(Ciphertext& a) const {
    check(a);
    const int lv = a.level();
    if (lv < 1)
        throw std::runtime_error("level exhausted: bootstrapping required");
    const Context& cx = *cx_;
    const Modulus& ql = cx.prime(lv);
    const size_t n = cx.n();
    for (RnsPoly& p : a.c) {
        if (p.ntt_form) throw std::runtime_error("rescale needs coeff domain");
        for (size_t i = 0; i < size_t(lv); ++i) {
            const Modulus& m = cx.prime(i);
            const uint64_t qinv = cx.rescale_qinv(lv, i);
            for (size_t k = 0; k < n; ++k) {
                int64_t r = ql.centered(p.limb[lv][k]);
                uint64_t t = m.sub(p.limb[i][k], m.from_signed(r));
                p.limb[i][k] = m.mul(t, qinv);
            }
        }
        p.drop_to(size_t(lv));
    }
    a.scale /= double(ql.q);
}

Ciphertext Evaluator::rotate(const Ciphertext& a, int k,
                             const RotationKeys& keys) const {
    check(a);
    const Context& cx = *cx_;
    const size_t slots = cx.slots();
    int kk = k % int(slots);
    if (kk < 0) kk += int(slots);
    if (kk == 0) return a;
    auto it = keys.by_amount.find(kk);
    if (it == keys.by_amount.end()) {
        // also accept the caller's signed convention
        it = keys.by_amount.find(kk - int(slots));
        if (it == keys.by_amount.end())
            throw std::runtime_error("missing rotation key for amount " +
                                     std::to_string(k));
    }
    uint64_t g = galois_for_rotation(cx, kk);
    RnsPoly c0 = poly_galois(cx, a.c[0], g);
    RnsPoly c1 = poly_galois(cx, a.c[1], g);
    auto [e0, e1] = keyswitch(c1, it->second);
    poly_add(cx, c0, e0);
    Ciphertext out;
    out.fp = a.fp;
    out.scale = a.scale;
    out.c = {std::move(c0), std::move(e1)};
    return out;
}

}  // namespace pefl::ckks
