#pragma once

// Versioned binary model checkpoint. Doubles are stored as raw IEEE-754
// little-endian bits so plaintext layers round-trip exactly.

#include <string>

#include "pefl/nn/model.hpp"

namespace pefl::nn {

struct Checkpoint {
    ModelArch arch;
    Params params;
};

void save_checkpoint(const std::string& path, const ModelArch& arch,
                     const Params& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pefl::nn
