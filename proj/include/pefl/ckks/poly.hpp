#pragma once

// RNS polynomial: one uint64 row per prime limb. A poly at level l carries
// limbs q_0..q_l. Values are kept fully reduced ([0, q)) outside the NTT
// kernels.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pefl/ckks/context.hpp"

namespace pefl::ckks {

struct RnsPoly {
    size_t n = 0;
    bool ntt_form = false;
    std::vector<std::vector<uint64_t>> limb;  // limb[i][coeff]

    RnsPoly() = default;
    RnsPoly(size_t nn, size_t limbs, bool ntt = false)
        : n(nn), ntt_form(ntt), limb(limbs, std::vector<uint64_t>(nn, 0)) {}

    size_t levels() const { return limb.size(); }  // limb count = level+1

    void drop_to(size_t limbs) {
        if (limbs > limb.size()) throw std::runtime_error("cannot raise level");
        limb.resize(limbs);
    }
};

inline void poly_add(const Context& cx, RnsPoly& a, const RnsPoly& b) {
    for (size_t i = 0; i < a.limb.size(); ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < a.n; ++k)
            a.limb[i][k] = m.add(a.limb[i][k], b.limb[i][k]);
    }
}

inline void poly_sub(const Context& cx, RnsPoly& a, const RnsPoly& b) {
    for (size_t i = 0; i < a.limb.size(); ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < a.n; ++k)
            a.limb[i][k] = m.sub(a.limb[i][k], b.limb[i][k]);
    }
}

inline void poly_neg(const Context& cx, RnsPoly& a) {
    for (size_t i = 0; i < a.limb.size(); ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < a.n; ++k) a.limb[i][k] = m.neg(a.limb[i][k]);
    }
}

inline void poly_to_ntt(const Context& cx, RnsPoly& a) {
    if (a.ntt_form) return;
    for (size_t i = 0; i < a.limb.size(); ++i)
        cx.ntt(i).forward(a.limb[i].data());
    a.ntt_form = true;
}

inline void poly_from_ntt(const Context& cx, RnsPoly& a) {
    if (!a.ntt_form) return;
    for (size_t i = 0; i < a.limb.size(); ++i)
        cx.ntt(i).inverse(a.limb[i].data());
    a.ntt_form = false;
}

// a *= b, both NTT form.
inline void poly_mul_ntt(const Context& cx, RnsPoly& a, const RnsPoly& b) {
    if (!a.ntt_form || !b.ntt_form)
        throw std::runtime_error("pointwise product needs NTT form");
    for (size_t i = 0; i < a.limb.size(); ++i) {
        const Modulus& m = cx.prime(i);
        for (size_t k = 0; k < a.n; ++k)
            a.limb[i][k] = m.mul(a.limb[i][k], b.limb[i][k]);
    }
}

// Negacyclic automorphism x -> x^g in coefficient domain.
inline RnsPoly poly_galois(const Context& cx, const RnsPoly& a, uint64_t g) {
    if (a.ntt_form) throw std::runtime_error("galois needs coeff domain");
    RnsPoly out(a.n, a.limb.size(), false);
    const uint64_t m2 = 2 * a.n;
    for (size_t k = 0; k < a.n; ++k) {
        uint64_t j = (k * g) % m2;
        bool flip = j >= a.n;
        size_t idx = flip ? j - a.n : j;
        for (size_t i = 0; i < a.limb.size(); ++i) {
            uint64_t v = a.limb[i][k];
            out.limb[i][idx] = flip ? cx.prime(i).neg(v) : v;
        }
    }
    return out;
}

}  // namespace pefl::ckks
