#pragma once

// Negacyclic NTT over Z_q[x]/(x^n+1), Harvey-style lazy butterflies with
// Shoup-precomputed twiddles. Forward accepts inputs in [0, 4q) and returns
// values in [0, q); inverse likewise.

#include <cstdint>
#include <vector>

#include "pefl/ckks/modarith.hpp"

namespace pefl::ckks {

class NttTables {
public:
    NttTables(size_t n, const Modulus& mod, uint64_t seed);

    void forward(uint64_t* a) const;   // coeff -> eval (bit-reversed order)
    void inverse(uint64_t* a) const;   // eval -> coeff

    const Modulus& modulus() const { return mod_; }
    size_t n() const { return n_; }

private:
    size_t n_;
    int logn_;
    Modulus mod_;
    // psi powers in bit-reversed order, with Shoup companions.
    std::vector<uint64_t> roots_, roots_shoup_;
    std::vector<uint64_t> iroots_, iroots_shoup_;
    uint64_t ninv_, ninv_shoup_;
};

}  // namespace pefl::ckks
