#pragma once

// Layer partition into secret and exposed sets, optional per-epoch
// schedules, and the encryption-status map that pins down where every
// quantity of a training pass lives (plaintext, ciphertext, or opened at a
// sanctioned boundary decryption).

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace pefl::fed {

struct LayerPartition {
    std::set<size_t> secret;  // L_S, layer ids in 1..depth

    // optional delayed-encryption schedule, entry g-1 = secret set during
    // global epoch g (1-based); empty means `secret` applies throughout
    std::vector<std::set<size_t>> schedule;

    bool is_secret(size_t layer) const { return secret.count(layer) != 0; }
    std::set<size_t> secret_at(size_t epoch) const;  // 1-based
    std::set<size_t> exposed(size_t depth) const;
    void validate(size_t depth) const;
};

// L_S^g = {} before epoch g0, = base from g0 on.
LayerPartition delayed_schedule(const LayerPartition& base, size_t g0,
                                size_t epochs);

enum class Status : uint8_t {
    plaintext,  // never touches a ciphertext
    encrypted,  // produced and kept under encryption
    decrypted,  // produced under encryption, opened at a boundary line
};
const char* status_name(Status s);

struct QuantityStatus {
    Status u = Status::plaintext;   // pre-activation
    Status l = Status::plaintext;   // activation output
    Status e = Status::plaintext;   // backprop error
    Status dw = Status::plaintext;
    Status db = Status::plaintext;
    bool w_encrypted = false;       // layer parameters w_j, b_j
};

struct EncStatusMap {
    std::vector<QuantityStatus> layer;  // [0] unused, indexed by layer
    Status loss = Status::plaintext;
    size_t depth() const { return layer.empty() ? 0 : layer.size() - 1; }
    // boundary decryptions one full pass performs
    size_t forward_decrypts() const;
    size_t backward_decrypts() const;
    size_t decrypts() const { return forward_decrypts() + backward_decrypts(); }
};

EncStatusMap enc_status_map(const LayerPartition& part, size_t depth);

// Flags encrypted interior layers whose output boundary and gradients end
// up exposed anyway (single encrypted layer below an exposed one).
std::vector<std::string> partition_warnings(const LayerPartition& part,
                                            size_t depth);

}  // namespace pefl::fed
