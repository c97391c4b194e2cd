#pragma once

// 64-bit modular arithmetic for NTT-friendly primes. Barrett reduction for
// variable-operand products, Shoup precomputation for constant-operand
// products (twiddle factors). All primes are < 2^62 so lazy [0,4q) values fit
// in uint64_t.

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pefl::ckks {

struct Modulus {
    uint64_t q = 0;
    uint64_t ratio_lo = 0, ratio_hi = 0;  // floor(2^128 / q)
    uint64_t two64 = 0;                   // 2^64 mod q

    Modulus() = default;
    explicit Modulus(uint64_t qq) : q(qq) {
        if (q < 2) throw std::invalid_argument("modulus too small");
        // floor(2^128 / q) via 128-bit long division.
        unsigned __int128 num = ~static_cast<unsigned __int128>(0);
        unsigned __int128 r = num / q;
        ratio_lo = static_cast<uint64_t>(r);
        ratio_hi = static_cast<uint64_t>(r >> 64);
        // (2^128 - 1)/q == floor(2^128/q) unless q divides 2^128, impossible
        // for odd q > 1; NTT primes are odd.
        two64 = (~uint64_t(0) % q + 1) % q;
    }

    uint64_t reduce(uint64_t x) const {
        uint64_t t = static_cast<uint64_t>(
            (static_cast<unsigned __int128>(x) * ratio_hi) >> 64);
        uint64_t r = x - t * q;
        if (r >= q) r -= q;
        if (r >= q) r -= q;
        return r;
    }

    // x < q * 2^64 required; always true for x = a*b with a,b < 2^64, a < q.
    uint64_t reduce128(unsigned __int128 x) const {
        uint64_t xlo = static_cast<uint64_t>(x);
        uint64_t xhi = static_cast<uint64_t>(x >> 64);
        unsigned __int128 a = (static_cast<unsigned __int128>(xlo) * ratio_lo);
        unsigned __int128 b =
            (static_cast<unsigned __int128>(xlo) * ratio_hi) + (a >> 64);
        unsigned __int128 c =
            (static_cast<unsigned __int128>(xhi) * ratio_lo) +
            static_cast<uint64_t>(b);
        uint64_t carry = static_cast<uint64_t>(b >> 64) +
                         static_cast<uint64_t>(c >> 64);
        uint64_t t = static_cast<uint64_t>(
            static_cast<unsigned __int128>(xhi) * ratio_hi + carry);
        uint64_t r = xlo - t * q;
        if (r >= q) r -= q;
        if (r >= q) r -= q;
        return r;
    }

    uint64_t mul(uint64_t a, uint64_t b) const {
        return reduce128(static_cast<unsigned __int128>(a) * b);
    }

    // Any 128-bit value (no x < q*2^64 precondition).
    uint64_t reduce128_full(unsigned __int128 x) const {
        uint64_t hi = static_cast<uint64_t>(x >> 64);
        uint64_t lo = static_cast<uint64_t>(x);
        return add(mul(reduce(hi), two64), reduce(lo));
    }

    uint64_t add(uint64_t a, uint64_t b) const {
        uint64_t s = a + b;
        return s >= q ? s - q : s;
    }

    uint64_t sub(uint64_t a, uint64_t b) const {
        return a >= b ? a - b : a + q - b;
    }

    uint64_t neg(uint64_t a) const { return a == 0 ? 0 : q - a; }

    uint64_t pow(uint64_t base, uint64_t e) const {
        uint64_t r = 1;
        base = reduce(base);
        while (e) {
            if (e & 1) r = mul(r, base);
            base = mul(base, base);
            e >>= 1;
        }
        return r;
    }

    uint64_t inv(uint64_t a) const { return pow(a, q - 2); }  // q prime

    // Centered lift to (-q/2, q/2].
    int64_t centered(uint64_t a) const {
        return a > q / 2 ? static_cast<int64_t>(a) - static_cast<int64_t>(q)
                         : static_cast<int64_t>(a);
    }

    uint64_t from_signed(int64_t v) const {
        int64_t m = v % static_cast<int64_t>(q);
        if (m < 0) m += static_cast<int64_t>(q);
        return static_cast<uint64_t>(m);
    }
};

// Shoup companion for multiplying by the fixed constant w mod q.
inline uint64_t shoup_precompute(uint64_t w, uint64_t q) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(w) << 64) / q);
}

// Result in [0, 2q); x may be any uint64_t.
inline uint64_t mul_shoup_lazy(uint64_t x, uint64_t w, uint64_t wshoup,
                               uint64_t q) {
    uint64_t hi = static_cast<uint64_t>(
        (static_cast<unsigned __int128>(x) * wshoup) >> 64);
    return x * w - hi * q;
}

inline bool is_prime_u64(uint64_t n) {
    if (n < 2) return false;
    for (uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull,
                       23ull, 29ull, 31ull, 37ull}) {
        if (n % p == 0) return n == p;
    }
    uint64_t d = n - 1;
    int r = 0;
    while ((d & 1) == 0) {
        d >>= 1;
        ++r;
    }
    Modulus m(n);
    for (uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull,
                       23ull, 29ull, 31ull, 37ull}) {
        uint64_t x = m.pow(a, d);
        if (x == 1 || x == n - 1) continue;
        bool witness = true;
        for (int i = 1; i < r; ++i) {
            x = m.mul(x, x);
            if (x == n - 1) {
                witness = false;
                break;
            }
        }
        if (witness) return false;
    }
    return true;
}

// Primes ~= 2^bits with q = 1 (mod 2n), chosen nearest to 2^bits and
// alternating above/below so rescale keeps the scale close to 2^bits.
std::vector<uint64_t> generate_ntt_primes(size_t n, int bits, size_t count,
                                          const std::vector<uint64_t>& exclude);

}  // namespace pefl::ckks
