#include "pefl/fed/status.hpp"

#include <algorithm>
#include <stdexcept>

namespace pefl::fed {

std::set<size_t> LayerPartition::secret_at(size_t epoch) const {
    if (schedule.empty()) return secret;
    if (epoch == 0) throw std::invalid_argument("epochs are 1-based");
    if (epoch > schedule.size()) return schedule.back();
    return schedule[epoch - 1];
}

std::set<size_t> LayerPartition::exposed(size_t depth) const {
    std::set<size_t> out;
    for (size_t j = 1; j <= depth; ++j)
        if (!is_secret(j)) out.insert(j);
    return out;
}

void LayerPartition::validate(size_t depth) const {
    auto check_set = [&](const std::set<size_t>& s) {
        for (size_t j : s)
            if (j == 0 || j > depth)
                throw std::invalid_argument("layer id outside 1..depth");
    };
    check_set(secret);
    for (size_t g = 0; g < schedule.size(); ++g) {
        check_set(schedule[g]);
        // once a layer enters the secret set it must stay
        if (g > 0 &&
            !std::includes(schedule[g].begin(), schedule[g].end(),
                           schedule[g - 1].begin(), schedule[g - 1].end()))
            throw std::invalid_argument(
                "schedule not monotone at epoch " + std::to_string(g + 1));
    }
    if (!schedule.empty() && schedule.back() != secret)
        throw std::invalid_argument("schedule must end at the base set");
}

LayerPartition delayed_schedule(const LayerPartition& base, size_t g0,
                                size_t epochs) {
    if (g0 == 0) throw std::invalid_argument("start epoch is 1-based");
    LayerPartition out;
    out.secret = g0 <= epochs ? base.secret : std::set<size_t>{};
    out.schedule.resize(epochs);
    for (size_t g = 1; g <= epochs; ++g)
        out.schedule[g - 1] = g < g0 ? std::set<size_t>{} : base.secret;
    return out;
}

const char* status_name(Status s) {
    switch (s) {
        case Status::plaintext: return "plaintext";
        case Status::encrypted: return "encrypted";
        case Status::decrypted: return "decrypted";
    }
    return "?";
}

size_t EncStatusMap::forward_decrypts() const {
    size_t n = 0;
    for (size_t j = 1; j < layer.size(); ++j)
        n += layer[j].u == Status::decrypted ? 1 : 0;
    return n;
}

size_t EncStatusMap::backward_decrypts() const {
    size_t n = 0;
    for (size_t j = 1; j < layer.size(); ++j)
        n += layer[j].e == Status::decrypted ? 1 : 0;
    return n;
}

EncStatusMap enc_status_map(const LayerPartition& part, size_t depth) {
    part.validate(depth);
    const size_t L = depth;
    auto in_s = [&](size_t j) { return j >= 1 && j <= L && part.is_secret(j); };

    EncStatusMap map;
    map.layer.resize(L + 1);
    for (size_t j = 1; j <= L; ++j) {
        QuantityStatus& q = map.layer[j];
        q.w_encrypted = in_s(j);

        // u_j needs w_j; it is opened right after the product when the next
        // layer runs in plaintext
        if (in_s(j))
            q.u = (j < L && !in_s(j + 1)) ? Status::decrypted
                                          : Status::encrypted;

        // the activation is HE-evaluated only when u_j stays closed
        q.l = q.u == Status::encrypted ? Status::encrypted : Status::plaintext;

        // e_j needs w_{j+1} (or l_L for the output layer); it is opened at
        // the backward boundary when layer j itself is exposed
        const bool e_enc = j == L ? in_s(L) : in_s(j + 1);
        if (e_enc) q.e = in_s(j) ? Status::encrypted : Status::decrypted;

        // gradients inherit from the factors still encrypted when formed
        q.db = q.e == Status::encrypted ? Status::encrypted : Status::plaintext;
        const bool prev_l_enc =
            j > 1 && in_s(j - 1) && in_s(j);  // l_{j-1} stayed closed
        q.dw = (q.e == Status::encrypted || prev_l_enc) ? Status::encrypted
                                                        : Status::plaintext;
    }
    map.loss = in_s(L) ? Status::encrypted : Status::plaintext;
    return map;
}

std::vector<std::string> partition_warnings(const LayerPartition& part,
                                            size_t depth) {
    std::vector<std::string> out;
    const EncStatusMap map = enc_status_map(part, depth);
    for (size_t j = 1; j <= depth; ++j) {
        if (!part.is_secret(j)) continue;
        const QuantityStatus& q = map.layer[j];
        if (q.u == Status::decrypted && q.dw == Status::plaintext)
            out.push_back("layer " + std::to_string(j) +
                          " is encrypted in isolation: its output is opened "
                          "at the forward boundary and its gradients stay "
                          "plaintext, so the layer is not protected");
    }
    return out;
}

}  // namespace pefl::fed
