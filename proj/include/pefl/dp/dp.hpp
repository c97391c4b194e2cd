#pragma once

// Laplace perturbation of exposed-layer gradients before upload. Secret
// layers are never touched; the noise scale spreads the per-epoch budget
// uniformly over every exposed parameter.

#include <cstdint>
#include <map>
#include <vector>

#include "pefl/fed/status.hpp"
#include "pefl/nn/model.hpp"
#include "pefl/util/rng.hpp"

namespace pefl::dp {

struct DpConfig {
    bool enabled = false;
    double epsilon = 1.0;               // per-epoch budget
    double gamma = 0.1;                 // default clip bound
    std::map<size_t, double> gamma_w;   // optional per-tensor overrides
    std::map<size_t, double> gamma_b;

    double clip_w(size_t layer) const;
    double clip_b(size_t layer) const;
    void validate() const;
};

// Exposed parameter count c = sum over exposed layers of |dw| + |db|.
size_t count_exposed(const fed::LayerPartition& part,
                     const nn::ModelArch& arch);

// Per-tensor median of |gradient| over a pilot history; history holds one
// GradientSet per recorded step.
struct ClipBounds {
    std::vector<double> w;  // [0] unused, indexed by layer
    std::vector<double> b;
};
ClipBounds estimate_clip_bounds(const std::vector<nn::GradientSet>& history,
                                const nn::ModelArch& arch);

// Clip exposed gradients to [-gamma, gamma], add Lap(2*c*gamma/eps) noise.
// Secret-layer tensors pass through bit-identically.
void perturb_exposed_gradients(nn::GradientSet& grads,
                               const fed::LayerPartition& part,
                               const nn::ModelArch& arch, const DpConfig& cfg,
                               rng::Stream& rs);

// Noise scale for one tensor's clip bound given the exposed count.
double laplace_scale(size_t exposed_count, double gamma, double epsilon);

}  // namespace pefl::dp
