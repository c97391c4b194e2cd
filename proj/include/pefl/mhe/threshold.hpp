#pragma once

// N-of-N threshold layer over the CKKS core: additive secret sharing,
// one-round collective public/rotation keys from a common random polynomial,
// a two-round relinearization key, partial decryption with flooding noise,
// and one-round collective bootstrapping via masked partial decryptions.
//
// Dealer mode (generate keys directly from the summed secret) and distributed
// mode produce interchangeable key material; protocol runs use distributed
// mode, unit tests may use either.

#include <array>
#include <cstdint>
#include <vector>

#include "pefl/ckks/evaluator.hpp"

namespace pefl::mhe {

struct SecretShare {
    int party = 0;
    ckks::RnsPoly s_coeff;  // ternary share, full basis, coeff domain
    ckks::RnsPoly s_ntt;
};

struct FloodConfig {
    // Partial decryptions carry uniform coefficient noise in [-2^kappa,
    // 2^kappa]. The embedding spreads it by about sqrt(n/2), so at scale
    // 2^55 the default keeps the combined decryption error near 1e-4; it is
    // a knob, not a calibrated statistical-security level.
    int kappa = 34;
};

struct BootstrapConfig {
    FloodConfig flood;
    // the additive mask stays this many bits (plus log2 N) below the current
    // modulus; hiding degrades as the ciphertext nears level 0, which the
    // training protocol avoids by refreshing early
    int mask_margin_bits = 8;
};

struct PartialDecryption {
    int party = 0;
    ckks::RnsPoly p;  // c1*s_i + flood, q-basis at ct level, coeff domain
    double flood_magnitude = 0.0;
    std::array<uint8_t, 32> fp{};  // params fingerprint of the source ct
    int level = 0;
    double scale = 1.0;
};

// One party's bootstrap contribution: a masked partial decryption plus a
// fresh top-level encryption of the negated mask.
struct BootstrapShare {
    int party = 0;
    ckks::RnsPoly h;
    ckks::Ciphertext enc_neg_mask;
    int level = 0;
    size_t size_bytes() const;
};

struct KeyRing {
    ckks::PublicKey pk;
    ckks::KswitchKey rlk;
    ckks::RotationKeys rot;
};

std::vector<SecretShare> make_shares(const ckks::Context& cx, int n_parties,
                                     uint64_t seed);
// Dealer/test only: the summed secret. Never leaves the process in runs.
ckks::SecretKey collective_secret(const ckks::Context& cx,
                                  const std::vector<SecretShare>& shares);

ckks::PublicKey dkg_public_key(const ckks::Context& cx,
                               const std::vector<SecretShare>& shares,
                               uint64_t crp_seed);
ckks::RotationKeys dkg_rotation_keys(const ckks::Context& cx,
                                     const std::vector<SecretShare>& shares,
                                     uint64_t crp_seed,
                                     const std::vector<int>& rotations);
ckks::KswitchKey dkg_relin_key(const ckks::Context& cx,
                               const std::vector<SecretShare>& shares,
                               uint64_t crp_seed);

KeyRing distributed_keygen(const ckks::Context& cx,
                           const std::vector<SecretShare>& shares,
                           uint64_t crp_seed,
                           const std::vector<int>& rotations);
KeyRing dealer_keygen(const ckks::Context& cx,
                      const std::vector<SecretShare>& shares, uint64_t seed,
                      const std::vector<int>& rotations);

PartialDecryption partial_decrypt(const ckks::Context& cx,
                                  const SecretShare& share,
                                  const ckks::Ciphertext& ct,
                                  const FloodConfig& cfg, rng::Stream& rs);
std::vector<double> combine_partials(
    const ckks::Context& cx, const ckks::Ciphertext& ct,
    const std::vector<PartialDecryption>& partials, int n_parties);

BootstrapShare bootstrap_share(const ckks::Evaluator& ev,
                               const SecretShare& share,
                               const ckks::Ciphertext& ct,
                               const ckks::PublicKey& pk, int n_parties,
                               const BootstrapConfig& cfg, rng::Stream& rs);
ckks::Ciphertext combine_bootstrap(const ckks::Evaluator& ev,
                                   const ckks::Ciphertext& ct,
                                   const std::vector<BootstrapShare>& shares,
                                   int n_parties);
// All parties in-process: one round-trip, returns the refreshed ciphertext.
ckks::Ciphertext collective_bootstrap(const ckks::Evaluator& ev,
                                      const ckks::Ciphertext& ct,
                                      const std::vector<SecretShare>& shares,
                                      const ckks::PublicKey& pk,
                                      const BootstrapConfig& cfg,
                                      rng::Stream& rs);

}  // namespace pefl::mhe
