#pragma once

// Parameter context: modulus chain, NTT tables, rescale / key-switch /
// decode precomputations. One immutable Context is shared by every object
// derived from the same parameters; the fingerprint guards cross-context
// mixups.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pefl/ckks/modarith.hpp"
#include "pefl/ckks/ntt.hpp"

namespace pefl::ckks {

struct CkksParams {
    size_t n = size_t(1) << 12;
    int levels = 8;          // number of rescale levels (scale primes)
    int scale_bits = 55;     // log2(delta)
    int q0_bits = 61;        // base prime size
    int special_bits = 62;   // key-switch special prime
    double sigma = 3.2;      // error stddev
    double msg_bound = 32.0; // 5-bit integral precision: |value| <= 2^5
    uint64_t prime_seed = 0x70efc0de;
    std::string security_note =
        "Conservative desk-scale preset; no formal security estimate.";
};

class Context {
public:
    explicit Context(const CkksParams& par);

    const CkksParams& params() const { return par_; }
    size_t n() const { return par_.n; }
    size_t slots() const { return par_.n / 2; }
    int top_level() const { return par_.levels; }
    double delta() const { return delta_; }

    // q_0 .. q_levels, then the special prime at index levels+1.
    const Modulus& prime(size_t i) const { return mods_[i]; }
    const Modulus& special() const { return mods_.back(); }
    size_t num_q() const { return mods_.size() - 1; }
    const NttTables& ntt(size_t i) const { return *ntts_[i]; }
    const NttTables& ntt_special() const { return *ntts_.back(); }

    // Max abs slot error of decrypt(encrypt(encode(v))) for in-range v.
    double eps_enc() const;

    const std::array<uint8_t, 32>& fingerprint() const { return fp_; }

    // --- rescale: drop prime `lvl`, divide value by q_lvl ---
    // qinv_[lvl][i] = q_lvl^{-1} mod q_i for i < lvl.
    uint64_t rescale_qinv(int lvl, size_t i) const { return qinv_[lvl][i]; }

    // --- key switching (per-limb digits, one special prime) ---
    // gadget(j, i) = [P * Qhat_j * (Qhat_j^{-1} mod q_j)] mod m_i where m_i
    // runs over q_0..q_levels, special. Qhat_j taken at the full chain.
    uint64_t gadget(size_t j, size_t i) const {
        return gadget_[j * (num_q() + 1) + i];
    }
    // P^{-1} mod q_i for the mod-down step.
    uint64_t pinv(size_t i) const { return pinv_[i]; }

    // --- decode: exact centered CRT lift, valid while |coeff| < 2^126 ---
    // For level lvl: qhat_mod_2k128[lvl][j], qhat_inv[lvl][j], bigq_mod_2k128.
    unsigned __int128 qhat128(int lvl, size_t j) const {
        return qhat128_[lvl][j];
    }
    uint64_t qhat_inv(int lvl, size_t j) const { return qhatinv_[lvl][j]; }
    unsigned __int128 bigq128(int lvl) const { return bigq128_[lvl]; }

    // Canonical-embedding tables (powers of the primitive 2n-th root).
    const std::vector<double>& ksi_re() const { return ksi_re_; }
    const std::vector<double>& ksi_im() const { return ksi_im_; }
    const std::vector<uint32_t>& rot_group() const { return rot_group_; }

    static std::shared_ptr<const Context> make(const CkksParams& par);
    static std::shared_ptr<const Context> desk();    // n = 2^12
    static std::shared_ptr<const Context> tiny();    // n = 2^11, fast tests
    static std::shared_ptr<const Context> paper();   // n = 2^15

private:
    CkksParams par_;
    double delta_;
    std::vector<Modulus> mods_;  // q_0..q_levels, special
    std::vector<std::unique_ptr<NttTables>> ntts_;
    std::vector<std::vector<uint64_t>> qinv_;
    std::vector<uint64_t> gadget_;
    std::vector<uint64_t> pinv_;
    std::vector<std::vector<unsigned __int128>> qhat128_;
    std::vector<std::vector<uint64_t>> qhatinv_;
    std::vector<unsigned __int128> bigq128_;
    std::vector<double> ksi_re_, ksi_im_;
    std::vector<uint32_t> rot_group_;
    std::array<uint8_t, 32> fp_;
};

using ContextPtr = std::shared_ptr<const Context>;

}  // namespace pefl::ckks
