#include "pefl/ckks/ntt.hpp"

#include <stdexcept>

#include "pefl/util/rng.hpp"

namespace pefl::ckks {

namespace {

uint64_t bitrev(uint64_t v, int bits) {
    uint64_t r = 0;
    for (int i = 0; i < bits; ++i) {
        r = (r << 1) | (v & 1);
        v >>= 1;
    }
    return r;
}

// Primitive 2n-th root of unity: psi with psi^n = -1.
uint64_t find_psi(size_t n, const Modulus& m, uint64_t seed) {
    uint64_t cof = (m.q - 1) / (2 * n);
    rng::Stream rs(seed, {m.q});
    for (int tries = 0; tries < 4096; ++tries) {
        uint64_t x = rs.below(m.q - 2) + 2;
        uint64_t psi = m.pow(x, cof);
        if (m.pow(psi, n) == m.q - 1) return psi;
    }
    throw std::runtime_error("no 2n-th root found; modulus not NTT-friendly");
}

}  // namespace

NttTables::NttTables(size_t n, const Modulus& mod, uint64_t seed)
    : n_(n), mod_(mod) {
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("ring degree must be a power of two");
    if ((mod.q - 1) % (2 * n) != 0)
        throw std::invalid_argument("q != 1 mod 2n");
    logn_ = 0;
    while ((size_t(1) << logn_) < n) ++logn_;

    uint64_t psi = find_psi(n, mod, seed);
    uint64_t ipsi = mod.inv(psi);

    roots_.resize(n);
    roots_shoup_.resize(n);
    iroots_.resize(n);
    iroots_shoup_.resize(n);
    uint64_t acc = 1, iacc = 1;
    for (size_t i = 0; i < n; ++i) {
        size_t r = bitrev(i, logn_);
        roots_[r] = acc;
        iroots_[r] = iacc;
        acc = mod.mul(acc, psi);
        iacc = mod.mul(iacc, ipsi);
    }
    for (size_t i = 0; i < n; ++i) {
        roots_shoup_[i] = shoup_precompute(roots_[i], mod.q);
        iroots_shoup_[i] = shoup_precompute(iroots_[i], mod.q);
    }
    ninv_ = mod.inv(n);
    ninv_shoup_ = shoup_precompute(ninv_, mod.q);
}

void NttTables::forward(uint64_t* a) const {
    const uint64_t q = mod_.q, two_q = 2 * q;
    size_t t = n_;
    for (size_t m = 1; m < n_; m <<= 1) {
        t >>= 1;
        for (size_t i = 0; i < m; ++i) {
            const uint64_t w = roots_[m + i];
            const uint64_t ws = roots_shoup_[m + i];
            uint64_t* X = a + 2 * i * t;
            uint64_t* Y = X + t;
            for (size_t j = 0; j < t; ++j) {
                uint64_t x = X[j];
                if (x >= two_q) x -= two_q;
                uint64_t v = mul_shoup_lazy(Y[j], w, ws, q);  // [0,2q)
                X[j] = x + v;
                Y[j] = x + two_q - v;
            }
        }
    }
    for (size_t j = 0; j < n_; ++j) {
        uint64_t x = a[j];
        if (x >= two_q) x -= two_q;
        if (x >= q) x -= q;
        a[j] = x;
    }
}

void NttTables::inverse(uint64_t* a) const {
    const uint64_t q = mod_.q, two_q = 2 * q;
    size_t t = 1;
    for (size_t m = n_ >> 1; m >= 1; m >>= 1) {
        for (size_t i = 0; i < m; ++i) {
            const uint64_t w = iroots_[m + i];
            const uint64_t ws = iroots_shoup_[m + i];
            uint64_t* X = a + 2 * i * t;
            uint64_t* Y = X + t;
            for (size_t j = 0; j < t; ++j) {
                uint64_t x = X[j];
                uint64_t y = Y[j];
                uint64_t s = x + y;  // < 8q, keep reduced to [0,2q)
                if (s >= two_q) s -= two_q;
                if (s >= two_q) s -= two_q;
                X[j] = s;
                Y[j] = mul_shoup_lazy(x + two_q - y, w, ws, q);
            }
        }
        t <<= 1;
    }
    for (size_t j = 0; j < n_; ++j) {
        uint64_t x = mul_shoup_lazy(a[j], ninv_, ninv_shoup_, q);
        if (x >= q) x -= q;
        a[j] = x;
    }
}

}  // namespace pefl::ckks
