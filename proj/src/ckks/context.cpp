#include "pefl/ckks/context.hpp"

#include <cmath>
#include <stdexcept>

#include "pefl/util/sha256.hpp"

namespace pefl::ckks {

std::vector<uint64_t> generate_ntt_primes(size_t n, int bits, size_t count,
                                          const std::vector<uint64_t>& exclude) {
    const uint64_t step = 2 * uint64_t(n);
    const uint64_t center = uint64_t(1) << bits;
    auto taken = [&](uint64_t q) {
        for (uint64_t e : exclude)
            if (e == q) return true;
        return false;
    };
    std::vector<uint64_t> out;
    // candidates center +- k*step + 1, nearest first
    uint64_t up = center + 1, down = center + 1;
    // align to 1 mod 2n
    up += (step - (up - 1) % step) % step;
    down -= (down - 1) % step;
    while (out.size() < count) {
        bool take_up = (up - center) <= (center - down);
        uint64_t cand = take_up ? up : down;
        if (take_up) up += step; else down -= step;
        if (cand < (uint64_t(1) << (bits - 1))) throw std::runtime_error("prime scan underflow");
        if (!taken(cand) && is_prime_u64(cand)) out.push_back(cand);
    }
    return out;
}

Context::Context(const CkksParams& par) : par_(par) {
    if (par.n < 8 || (par.n & (par.n - 1)) != 0)
        throw std::invalid_argument("n must be a power of two >= 8");
    if (par.levels < 1) throw std::invalid_argument("need >= 1 level");
    if (par.scale_bits >= par.q0_bits)
        throw std::invalid_argument("delta must be < q0");
    delta_ = std::ldexp(1.0, par.scale_bits);

    // q0 (base), q1..qL (scale primes), special (key switching).
    auto q0v = generate_ntt_primes(par.n, par.q0_bits, 1, {});
    auto qsv = generate_ntt_primes(par.n, par.scale_bits, par.levels, q0v);
    std::vector<uint64_t> excl = q0v;
    excl.insert(excl.end(), qsv.begin(), qsv.end());
    auto pv = generate_ntt_primes(par.n, par.special_bits, 1, excl);

    std::vector<uint64_t> chain;
    chain.push_back(q0v[0]);
    chain.insert(chain.end(), qsv.begin(), qsv.end());
    chain.push_back(pv[0]);
    for (uint64_t q : chain) {
        mods_.emplace_back(q);
        ntts_.push_back(std::make_unique<NttTables>(par.n, mods_.back(),
                                                    par.prime_seed));
    }

    const size_t nq = num_q();  // q_0..q_levels

    // rescale inverses
    qinv_.resize(nq);
    for (size_t l = 1; l < nq; ++l) {
        qinv_[l].resize(l);
        for (size_t i = 0; i < l; ++i)
            qinv_[l][i] = mods_[i].inv(mods_[i].reduce(mods_[l].q));
    }

    // key-switch gadget over the full chain
    gadget_.assign(nq * (nq + 1), 0);
    for (size_t j = 0; j < nq; ++j) {
        // t_j = (Qhat_j)^{-1} mod q_j with Qhat_j = prod_{k != j} q_k
        uint64_t qhat_mod_qj = 1;
        for (size_t k = 0; k < nq; ++k)
            if (k != j)
                qhat_mod_qj = mods_[j].mul(qhat_mod_qj,
                                           mods_[j].reduce(mods_[k].q));
        uint64_t tj = mods_[j].inv(qhat_mod_qj);
        for (size_t i = 0; i < nq; ++i) {
            const Modulus& m = mods_[i];
            uint64_t acc = m.reduce(special().q);
            for (size_t k = 0; k < nq; ++k)
                if (k != j) acc = m.mul(acc, m.reduce(mods_[k].q));
            acc = m.mul(acc, m.reduce(tj));
            gadget_[j * (nq + 1) + i] = acc;
        }
        gadget_[j * (nq + 1) + nq] = 0;  // P*Qhat_j*t_j = 0 mod P
    }
    pinv_.resize(nq);
    for (size_t i = 0; i < nq; ++i)
        pinv_[i] = mods_[i].inv(mods_[i].reduce(special().q));

    // decode precomp per level
    qhat128_.resize(nq);
    qhatinv_.resize(nq);
    bigq128_.resize(nq);
    for (size_t lvl = 0; lvl < nq; ++lvl) {
        size_t k = lvl + 1;
        qhat128_[lvl].resize(k);
        qhatinv_[lvl].resize(k);
        unsigned __int128 bigq = 1;
        for (size_t j = 0; j < k; ++j) bigq *= mods_[j].q;  // mod 2^128
        bigq128_[lvl] = bigq;
        for (size_t j = 0; j < k; ++j) {
            unsigned __int128 qh = 1;
            uint64_t qh_mod = 1;
            for (size_t i = 0; i < k; ++i) {
                if (i == j) continue;
                qh *= mods_[i].q;  // mod 2^128 wraparound intended
                qh_mod = mods_[j].mul(qh_mod, mods_[j].reduce(mods_[i].q));
            }
            qhat128_[lvl][j] = qh;
            qhatinv_[lvl][j] = mods_[j].inv(qh_mod);
        }
    }

    // canonical embedding tables: ksi^k = exp(2*pi*i*k / 2n), rot group 5^j
    size_t m2 = 2 * par.n;
    ksi_re_.resize(m2 + 1);
    ksi_im_.resize(m2 + 1);
    for (size_t k = 0; k <= m2; ++k) {
        double a = 2.0 * M_PI * double(k) / double(m2);
        ksi_re_[k] = std::cos(a);
        ksi_im_[k] = std::sin(a);
    }
    rot_group_.resize(par.n / 2);
    uint64_t five = 1;
    for (size_t j = 0; j < par.n / 2; ++j) {
        rot_group_[j] = uint32_t(five);
        five = (five * 5) % m2;
    }

    util::Sha256 h;
    uint64_t nn = par.n;
    h.update(&nn, sizeof nn);
    for (const Modulus& m : mods_) h.update(&m.q, sizeof m.q);
    h.update(&par.scale_bits, sizeof par.scale_bits);
    fp_ = h.digest();
}

double Context::eps_enc() const {
    // Fresh error poly is e*u + e1*s + e0 with coefficient std about
    // sigma*sqrt(4n/3); the embedding spreads that over slots with another
    // sqrt(n/2) factor. 24*n*sigma comfortably covers max-over-slot tails
    // while staying orders of magnitude below wrong-key garbage.
    return 24.0 * double(par_.n) * par_.sigma / delta_;
}

std::shared_ptr<const Context> Context::make(const CkksParams& par) {
    return std::make_shared<const Context>(par);
}

std::shared_ptr<const Context> Context::desk() {
    static std::shared_ptr<const Context> c = make(CkksParams{});
    return c;
}

std::shared_ptr<const Context> Context::tiny() {
    static std::shared_ptr<const Context> c = [] {
        CkksParams p;
        p.n = size_t(1) << 11;
        p.levels = 6;
        p.scale_bits = 45;
        p.q0_bits = 55;
        p.special_bits = 56;
        p.msg_bound = 32.0;
        return make(p);
    }();
    return c;
}

std::shared_ptr<const Context> Context::paper() {
    static std::shared_ptr<const Context> c = [] {
        CkksParams p;
        p.n = size_t(1) << 15;
        return make(p);
    }();
    return c;
}

}  // namespace pefl::ckks
