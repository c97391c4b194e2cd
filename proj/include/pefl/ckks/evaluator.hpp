#pragma once

// Homomorphic evaluator. Ciphertexts are coefficient-domain RNS polys over
// q_0..q_level. Scale is tracked exactly as a double; ops assert matching
// fingerprints and scales. One Evaluator per thread (it reuses scratch
// buffers); all state outside the scratch is immutable.

#include <array>
#include <cstdint>
#include <optional>

#include "pefl/ckks/keys.hpp"

namespace pefl::ckks {

struct Ciphertext {
    std::vector<RnsPoly> c;  // 2 polys (3 transiently before relin)
    double scale = 1.0;
    std::array<uint8_t, 32> fp{};

    int level() const { return int(c.at(0).limb.size()) - 1; }
    size_t size_bytes() const;  // matches serialize().size()
};

std::vector<uint8_t> serialize(const Ciphertext& ct);
Ciphertext deserialize_ciphertext(const std::vector<uint8_t>& bytes);

class Evaluator {
public:
    explicit Evaluator(ContextPtr cx) : cx_(std::move(cx)) {}
    const Context& ctx() const { return *cx_; }

    // Single-key (dealer) path; the multiparty path lives in mhe.
    KeyMaterial keygen(uint64_t seed, const std::vector<int>& rotations = {});
    KswitchKey make_kswitch_key(const RnsPoly& w_ntt, const SecretKey& sk,
                                rng::Stream& rs) const;

    Ciphertext encrypt(const Plaintext& pt, const PublicKey& pk,
                       rng::Stream& rs) const;
    Ciphertext encrypt_trivial(const Plaintext& pt) const;  // public payloads
    Plaintext decrypt(const Ciphertext& ct, const SecretKey& sk) const;
    std::vector<double> decrypt_values(const Ciphertext& ct,
                                       const SecretKey& sk) const;

    Ciphertext add(const Ciphertext& a, const Ciphertext& b) const;
    Ciphertext sub(const Ciphertext& a, const Ciphertext& b) const;
    Ciphertext negate(const Ciphertext& a) const;
    Ciphertext add_plain(const Ciphertext& a, const Plaintext& pt) const;
    Ciphertext sub_plain(const Ciphertext& a, const Plaintext& pt) const;
    // plain - ct, used for (1 - l) terms.
    Ciphertext plain_sub(const Plaintext& pt, const Ciphertext& a) const;

    // ct*ct with relinearization and auto-rescale.
    Ciphertext mult(const Ciphertext& a, const Ciphertext& b,
                    const KswitchKey& rlk) const;
    // ct*pt; caller rescales (masks are encoded at scale q_level so a
    // following rescale restores the original scale exactly).
    Ciphertext mult_plain(const Ciphertext& a, const Plaintext& pt) const;
    Ciphertext mult_scalar(const Ciphertext& a, double v) const;  // rescales

    Ciphertext rotate(const Ciphertext& a, int k,
                      const RotationKeys& keys) const;

    void rescale(Ciphertext& a) const;
    void mod_down_to(Ciphertext& a, int level) const;
    // Align both operands to min level; scales must already agree.
    void align(Ciphertext& a, Ciphertext& b) const;

    // Exposed for the threshold module.
    std::pair<RnsPoly, RnsPoly> keyswitch(const RnsPoly& d_coeff,
                                          const KswitchKey& key) const;
    RnsPoly mul_secret(const RnsPoly& c1_coeff, const RnsPoly& s_ntt) const;

    double fresh_scale() const { return cx_->delta(); }

private:
    void check(const Ciphertext& a) const;
    ContextPtr cx_;
};

}  // namespace pefl::ckks
