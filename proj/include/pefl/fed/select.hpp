#pragma once

// Data-driven layer selection: given per-party curves of measured attack
// accuracy per layer and epoch, emit the smallest suffix-closed secret set
// per epoch that keeps every exposed layer's accuracy at or below the
// party's tolerance, monotone over epochs, unioned across parties.

#include <cstddef>
#include <set>
#include <vector>

#include "pefl/fed/status.hpp"

namespace pefl::fed {

// One party's attack-sweep output: acc[e][j-1] is the attack accuracy
// against layer j measured at checkpoint epoch epochs[e]. Epochs ascend;
// between checkpoints the latest measurement carries forward.
struct AttackCurve {
    std::vector<size_t> epochs;
    std::vector<std::vector<double>> acc;

    size_t depth() const { return acc.empty() ? 0 : acc[0].size(); }
    void validate() const;
};

// Smallest suffix {j*..L} whose exposed complement stays at or below tau;
// deeper layers ride along even when individually tolerable.
std::set<size_t> minimal_suffix(const std::vector<double>& layer_acc,
                                double tau);

struct SelectResult {
    LayerPartition schedule;  // entry g-1 = secret set during epoch g
    bool infeasible = false;  // tau below the full-encryption floor
};

// tau[i] is party i's tolerance, each in [0.5, 1]. baseline is the residual
// attack accuracy with every layer encrypted; tolerances below it cannot be
// met, so the result is flagged and fully encrypted.
SelectResult select_secret_layers(const std::vector<AttackCurve>& party_curves,
                                  const std::vector<double>& tau,
                                  size_t global_rounds,
                                  double baseline = 0.5);

}  // namespace pefl::fed
