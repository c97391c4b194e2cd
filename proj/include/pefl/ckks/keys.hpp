#pragma once

// Key material and sampling helpers. Key-switch keys use per-limb digit
// decomposition with one special prime; key polys live over the full chain
// (q_0..q_L, special) in NTT form.

#include <map>

#include "pefl/ckks/encoder.hpp"
#include "pefl/ckks/poly.hpp"
#include "pefl/util/rng.hpp"

namespace pefl::ckks {

struct SecretKey {
    RnsPoly s_coeff;  // ternary, full basis, coeff domain
    RnsPoly s_ntt;    // same, NTT domain
};

struct PublicKey {
    RnsPoly b, a;  // q-basis, top level, NTT form
};

struct KswitchKey {
    std::vector<RnsPoly> kb, ka;  // per digit, full basis, NTT form
    bool empty() const { return kb.empty(); }
};

struct RotationKeys {
    std::map<int, KswitchKey> by_amount;  // left-rotation steps
};

struct KeyMaterial {
    SecretKey sk;
    PublicKey pk;
    KswitchKey rlk;
    RotationKeys rot;
};

// Sampling over the first `limbs` rows of the chain (limbs = nq+1 for the
// full basis). Small polys are sampled once as integers, then reduced per
// limb, so every limb carries the same underlying polynomial.
RnsPoly sample_uniform(const Context& cx, size_t limbs, rng::Stream& rs);
RnsPoly sample_ternary(const Context& cx, size_t limbs, rng::Stream& rs);
RnsPoly sample_gaussian(const Context& cx, size_t limbs, rng::Stream& rs);

// Galois element for a left rotation by k slots.
uint64_t galois_for_rotation(const Context& cx, int k);

}  // namespace pefl::ckks
