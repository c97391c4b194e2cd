#pragma once

// Canonical-embedding encoder. Slot vectors of length n/2 map to real
// negacyclic polynomials through the special FFT over the index group
// generated by 5 mod 2n. decode_exact gives centered big-integer
// coefficients (used by the collective bootstrap, which must re-encrypt
// masked values without a float round trip).

#include <complex>
#include <vector>

#include "pefl/ckks/poly.hpp"

namespace pefl::ckks {

struct Plaintext {
    RnsPoly p;
    double scale = 1.0;
    int level() const { return int(p.limb.size()) - 1; }
};

// In-place special FFT over the rotation group (values length = slots).
void special_fft(const Context& cx, std::vector<std::complex<double>>& v);
void special_ifft(const Context& cx, std::vector<std::complex<double>>& v);

// v.size() <= slots; remaining slots encode as zero.
Plaintext encode(const Context& cx, const std::vector<double>& v,
                 double scale, int level);
// Constant value in every slot: constant polynomial, no FFT.
Plaintext encode_constant(const Context& cx, double c, double scale,
                          int level);
std::vector<double> decode(const Context& cx, const Plaintext& pt);

// Exact centered coefficients; requires |coeff| < 2^126.
std::vector<__int128> decode_exact(const Context& cx, const RnsPoly& p);
RnsPoly encode_exact(const Context& cx, const std::vector<__int128>& coeffs,
                     int level);

}  // namespace pefl::ckks
