#pragma once

// Dataset ingestion: IDX image files, tabular CSV, synthetic blob
// generators, and deterministic subsampling/partitioning for multi-party
// runs.

#include <cstdint>
#include <string>
#include <vector>

#include "pefl/nn/model.hpp"

namespace pefl::data {

struct Dataset {
    nn::Mat x;                  // rows = examples
    nn::Mat y;                  // one-hot labels, rows match x
    size_t classes = 0;
    std::string provenance;
    std::vector<uint8_t> prop;  // planted-property flag per row (may be empty)

    size_t size() const { return x.rows; }
    size_t label(size_t i) const;
    void validate() const;
};

// ---------- IDX (big-endian dims, ubyte payload) ----------

struct IdxTensor {
    std::vector<size_t> dims;
    std::vector<uint8_t> data;
};

// Accepts the image (0x00000803) and label (0x00000801) magics only.
IdxTensor parse_idx(const std::vector<uint8_t>& bytes);

// Exact area-weighted 28x28 -> 8x8 downsample, output scaled to [0,1].
std::vector<double> resize_to_8x8(const std::vector<uint8_t>& img28);

// Images resized to 8x8 paired with one-hot labels (10 classes).
Dataset images_from_idx(const IdxTensor& images, const IdxTensor& labels);

// ---------- sampling ----------

Dataset slice(const Dataset& ds, size_t begin, size_t end);
Dataset subsample(const Dataset& ds, size_t k, uint64_t seed);
// Deterministic shuffle dealt into n near-equal disjoint parts.
std::vector<Dataset> partition(const Dataset& ds, size_t n, uint64_t seed);

// ---------- synthetic blobs ----------

struct SynthSpec {
    size_t classes = 2;
    size_t dims = 2;
    size_t size = 100;
    double separation = 1.0;  // prototype_k = separation * e_k
    double noise = 0.1;
    uint64_t seed = 0;
    // optional planted property: flagged rows get prop_delta added to the
    // chosen coordinates; roughly prop_fraction of rows are flagged
    std::vector<size_t> prop_coords;
    double prop_delta = 0.0;
    double prop_fraction = 0.5;
};

// Gaussian blobs around orthogonal prototypes; rows cycle through classes.
Dataset synth_dataset(const SynthSpec& spec);

// ---------- tabular CSV ----------

struct CsvSchema {
    std::vector<std::string> features;
    std::string label;  // non-negative integer class ids
};

Dataset load_tabular_csv(const std::string& path, const CsvSchema& schema);

}  // namespace pefl::data
