#include "pefl/ckks/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace pefl::ckks {

namespace {

void bit_reverse(std::vector<std::complex<double>>& v) {
    size_t n = v.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(v[i], v[j]);
    }
}

}  // namespace

void special_fft(const Context& cx, std::vector<std::complex<double>>& v) {
    const size_t size = v.size();
    const size_t M = 2 * cx.n();
    const auto& rot = cx.rot_group();
    bit_reverse(v);
    for (size_t len = 2; len <= size; len <<= 1) {
        size_t lenh = len >> 1, lenq = len << 2;
        size_t gap = M / lenq;
        for (size_t i = 0; i < size; i += len) {
            for (size_t j = 0; j < lenh; ++j) {
                size_t idx = (rot[j] % lenq) * gap;
                std::complex<double> w(cx.ksi_re()[idx], cx.ksi_im()[idx]);
                std::complex<double> u = v[i + j];
                std::complex<double> t = v[i + j + lenh] * w;
                v[i + j] = u + t;
                v[i + j + lenh] = u - t;
            }
        }
    }
}

void special_ifft(const Context& cx, std::vector<std::complex<double>>& v) {
    const size_t size = v.size();
    const size_t M = 2 * cx.n();
    const auto& rot = cx.rot_group();
    for (size_t len = size; len >= 2; len >>= 1) {
        size_t lenh = len >> 1, lenq = len << 2;
        size_t gap = M / lenq;
        for (size_t i = 0; i < size; i += len) {
            for (size_t j = 0; j < lenh; ++j) {
                size_t idx = (lenq - (rot[j] % lenq)) * gap;
                std::complex<double> w(cx.ksi_re()[idx], cx.ksi_im()[idx]);
                std::complex<double> u = v[i + j] + v[i + j + lenh];
                std::complex<double> t = v[i + j] - v[i + j + lenh];
                v[i + j] = u;
                v[i + j + lenh] = t * w;
            }
        }
    }
    bit_reverse(v);
    double inv = 1.0 / double(size);
    for (auto& z : v) z *= inv;
}

Plaintext encode(const Context& cx, const std::vector<double>& vals,
                 double scale, int level) {
    const size_t slots = cx.slots();
    if (vals.size() > slots) throw std::invalid_argument("vector too long");
    if (level < 0 || level > cx.top_level())
        throw std::invalid_argument("bad level");
    std::vector<std::complex<double>> v(slots, {0.0, 0.0});
    for (size_t i = 0; i < vals.size(); ++i) v[i] = {vals[i], 0.0};
    special_ifft(cx, v);

    Plaintext pt;
    pt.scale = scale;
    pt.p = RnsPoly(cx.n(), size_t(level) + 1, false);
    for (size_t i = 0; i < slots; ++i) {
        double re = v[i].real() * scale;
        double im = v[i].imag() * scale;
        if (std::abs(re) > 0x1.0p62 || std::abs(im) > 0x1.0p62)
            throw std::runtime_error("encode overflow: value*scale too large");
        int64_t cre = llround(re);
        int64_t cim = llround(im);
        for (size_t l = 0; l <= size_t(level); ++l) {
            const Modulus& m = cx.prime(l);
            pt.p.limb[l][i] = m.from_signed(cre);
            pt.p.limb[l][i + slots] = m.from_signed(cim);
        }
    }
    return pt;
}

Plaintext encode_constant(const Context& cx, double c, double scale,
                          int level) {
    Plaintext pt;
    pt.scale = scale;
    pt.p = RnsPoly(cx.n(), size_t(level) + 1, false);
    double v = c * scale;
    if (std::abs(v) > 0x1.0p62)
        throw std::runtime_error("encode overflow: value*scale too large");
    int64_t cv = llround(v);
    for (size_t l = 0; l <= size_t(level); ++l)
        pt.p.limb[l][0] = cx.prime(l).from_signed(cv);
    return pt;
}

std::vector<__int128> decode_exact(const Context& cx, const RnsPoly& p) {
    if (p.ntt_form) throw std::runtime_error("decode needs coeff domain");
    const int lvl = int(p.limb.size()) - 1;
    const size_t k = p.limb.size();
    std::vector<__int128> out(p.n);
    const unsigned __int128 bigq = cx.bigq128(lvl);
    for (size_t c = 0; c < p.n; ++c) {
        unsigned __int128 acc = 0;
        long double alpha = 0.0L;
        for (size_t j = 0; j < k; ++j) {
            const Modulus& m = cx.prime(j);
            uint64_t dj = m.mul(p.limb[j][c], cx.qhat_inv(lvl, j));
            acc += cx.qhat128(lvl, j) * dj;
            alpha += static_cast<long double>(dj) / static_cast<long double>(m.q);
        }
        uint64_t a = static_cast<uint64_t>(alpha + 0.5L);
        acc -= bigq * a;
        out[c] = static_cast<__int128>(acc);  // two's-complement centering
    }
    return out;
}

RnsPoly encode_exact(const Context& cx, const std::vector<__int128>& coeffs,
                     int level) {
    RnsPoly p(cx.n(), size_t(level) + 1, false);
    for (size_t l = 0; l <= size_t(level); ++l) {
        const Modulus& m = cx.prime(l);
        for (size_t c = 0; c < cx.n(); ++c) {
            __int128 v = coeffs[c];
            bool negv = v < 0;
            unsigned __int128 u = negv ? static_cast<unsigned __int128>(-v)
                                       : static_cast<unsigned __int128>(v);
            uint64_t r = m.reduce128_full(u);
            p.limb[l][c] = negv ? m.neg(r) : r;
        }
    }
    return p;
}

std::vector<double> decode(const Context& cx, const Plaintext& pt) {
    auto coeffs = decode_exact(cx, pt.p);
    const size_t slots = cx.slots();
    std::vector<std::complex<double>> v(slots);
    const double inv = 1.0 / pt.scale;
    for (size_t i = 0; i < slots; ++i) {
        v[i] = {static_cast<double>(coeffs[i]) * inv,
                static_cast<double>(coeffs[i + slots]) * inv};
    }
    special_fft(cx, v);
    std::vector<double> out(slots);
    for (size_t i = 0; i < slots; ++i) out[i] = v[i].real();
    return out;
}

}  // namespace pefl::ckks
