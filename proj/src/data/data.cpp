#include "pefl/data/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pefl/util/rng.hpp"

namespace pefl::data {

namespace {

constexpr uint32_t kIdxImages = 0x00000803;
constexpr uint32_t kIdxLabels = 0x00000801;
constexpr uint64_t kTagFeatures = 0x64617461;
constexpr uint64_t kTagFlags = 0x666c6167;

uint32_t read_be32(const std::vector<uint8_t>& bytes, size_t off) {
    return (uint32_t(bytes[off]) << 24) | (uint32_t(bytes[off + 1]) << 16) |
           (uint32_t(bytes[off + 2]) << 8) | uint32_t(bytes[off + 3]);
}

Dataset from_indices(const Dataset& ds, const std::vector<size_t>& idx) {
    Dataset out;
    out.x = nn::Mat(idx.size(), ds.x.cols);
    out.y = nn::Mat(idx.size(), ds.y.cols);
    out.classes = ds.classes;
    out.provenance = ds.provenance;
    if (!ds.prop.empty()) out.prop.resize(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) {
        const size_t s = idx[r];
        if (s >= ds.size()) throw std::out_of_range("row index out of range");
        for (size_t c = 0; c < ds.x.cols; ++c) out.x(r, c) = ds.x(s, c);
        for (size_t c = 0; c < ds.y.cols; ++c) out.y(r, c) = ds.y(s, c);
        if (!ds.prop.empty()) out.prop[r] = ds.prop[s];
    }
    return out;
}

// Strict field-to-double parse; rejects trailing junk and empty fields.
double parse_field(const std::string& tok, size_t row) {
    size_t used = 0;
    double v = 0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("csv row " + std::to_string(row) +
                                 ": bad number '" + tok + "'");
    }
    while (used < tok.size() &&
           (tok[used] == ' ' || tok[used] == '\t' || tok[used] == '\r'))
        ++used;
    if (used != tok.size())
        throw std::runtime_error("csv row " + std::to_string(row) +
                                 ": bad number '" + tok + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    for (auto& tok : out) {
        size_t b = tok.find_first_not_of(" \t");
        size_t e = tok.find_last_not_of(" \t");
        tok = b == std::string::npos ? "" : tok.substr(b, e - b + 1);
    }
    return out;
}

}  // namespace

size_t Dataset::label(size_t i) const {
    size_t best = 0;
    for (size_t c = 1; c < y.cols; ++c)
        if (y(i, c) > y(i, best)) best = c;
    return best;
}

void Dataset::validate() const {
    if (x.rows != y.rows) throw std::invalid_argument("x/y row mismatch");
    if (y.cols != classes) throw std::invalid_argument("label width mismatch");
    if (!prop.empty() && prop.size() != x.rows)
        throw std::invalid_argument("property flag count mismatch");
}

IdxTensor parse_idx(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 4) throw std::runtime_error("idx: truncated header");
    const uint32_t magic = read_be32(bytes, 0);
    size_t ndims = 0;
    if (magic == kIdxImages)
        ndims = 3;
    else if (magic == kIdxLabels)
        ndims = 1;
    else
        throw std::runtime_error("idx: unrecognized magic");

    if (bytes.size() < 4 + 4 * ndims)
        throw std::runtime_error("idx: truncated dimension list");

    IdxTensor t;
    uint64_t total = 1;
    for (size_t d = 0; d < ndims; ++d) {
        const uint32_t v = read_be32(bytes, 4 + 4 * d);
        t.dims.push_back(v);
        total *= v;
        // dims are attacker-controlled in the fuzz tests; bound the product
        // before it can wrap or trigger a giant allocation
        if (total > (uint64_t(1) << 32))
            throw std::runtime_error("idx: implausible dimensions");
    }
    const size_t payload = 4 + 4 * ndims;
    if (bytes.size() != payload + total)
        throw std::runtime_error("idx: payload size mismatch");
    t.data.assign(bytes.begin() + static_cast<ptrdiff_t>(payload),
                  bytes.end());
    return t;
}

std::vector<double> resize_to_8x8(const std::vector<uint8_t>& img28) {
    if (img28.size() != 28 * 28)
        throw std::invalid_argument("resize_to_8x8 expects a 28x28 image");
    // 28/8 = 3.5, so every source pixel overlap is a multiple of 0.5 and the
    // block averages are exact in double arithmetic
    constexpr double ratio = 3.5;
    std::vector<double> out(64, 0.0);
    for (size_t orow = 0; orow < 8; ++orow) {
        const double r0 = static_cast<double>(orow) * ratio;
        const double r1 = r0 + ratio;
        for (size_t ocol = 0; ocol < 8; ++ocol) {
            const double c0 = static_cast<double>(ocol) * ratio;
            const double c1 = c0 + ratio;
            double acc = 0.0;
            for (size_t ir = static_cast<size_t>(r0); ir < 28 && ir < r1;
                 ++ir) {
                const double wr = std::min(r1, double(ir) + 1.0) -
                                  std::max(r0, double(ir));
                for (size_t ic = static_cast<size_t>(c0); ic < 28 && ic < c1;
                     ++ic) {
                    const double wc = std::min(c1, double(ic) + 1.0) -
                                      std::max(c0, double(ic));
                    acc += wr * wc * double(img28[ir * 28 + ic]);
                }
            }
            out[orow * 8 + ocol] = acc / (ratio * ratio * 255.0);
        }
    }
    return out;
}

Dataset images_from_idx(const IdxTensor& images, const IdxTensor& labels) {
    if (images.dims.size() != 3 || images.dims[1] != 28 ||
        images.dims[2] != 28)
        throw std::invalid_argument("expected n x 28 x 28 image tensor");
    if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0])
        throw std::invalid_argument("label count does not match image count");

    const size_t n = images.dims[0];
    Dataset ds;
    ds.classes = 10;
    ds.provenance = "idx";
    ds.x = nn::Mat(n, 64);
    ds.y = nn::Mat(n, 10);
    std::vector<uint8_t> img(28 * 28);
    for (size_t i = 0; i < n; ++i) {
        std::copy_n(images.data.begin() + static_cast<ptrdiff_t>(i * 784),
                    784, img.begin());
        const std::vector<double> small = resize_to_8x8(img);
        for (size_t c = 0; c < 64; ++c) ds.x(i, c) = small[c];
        const uint8_t lab = labels.data[i];
        if (lab >= 10) throw std::runtime_error("label out of range");
        ds.y(i, lab) = 1.0;
    }
    return ds;
}

Dataset slice(const Dataset& ds, size_t begin, size_t end) {
    if (begin > end || end > ds.size())
        throw std::out_of_range("slice range out of bounds");
    std::vector<size_t> idx(end - begin);
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    return from_indices(ds, idx);
}

Dataset subsample(const Dataset& ds, size_t k, uint64_t seed) {
    if (k > ds.size())
        throw std::invalid_argument("subsample larger than dataset");
    rng::Stream rs(seed);
    std::vector<size_t> perm = rs.permutation(ds.size());
    perm.resize(k);
    return from_indices(ds, perm);
}

std::vector<Dataset> partition(const Dataset& ds, size_t n, uint64_t seed) {
    if (n == 0) throw std::invalid_argument("partition into zero parts");
    rng::Stream rs(seed);
    const std::vector<size_t> perm = rs.permutation(ds.size());
    std::vector<Dataset> parts;
    parts.reserve(n);
    for (size_t p = 0; p < n; ++p) {
        const size_t b = ds.size() * p / n;
        const size_t e = ds.size() * (p + 1) / n;
        parts.push_back(from_indices(
            ds, std::vector<size_t>(perm.begin() + static_cast<ptrdiff_t>(b),
                                    perm.begin() + static_cast<ptrdiff_t>(e))));
    }
    return parts;
}

Dataset synth_dataset(const SynthSpec& spec) {
    if (spec.classes == 0 || spec.size == 0)
        throw std::invalid_argument("empty synthetic dataset");
    if (spec.dims < spec.classes)
        throw std::invalid_argument(
            "need at least as many dimensions as classes for orthogonal "
            "prototypes");
    for (size_t c : spec.prop_coords)
        if (c >= spec.dims)
            throw std::invalid_argument("property coordinate out of range");

    rng::Stream feat(spec.seed, {kTagFeatures});
    rng::Stream flags(spec.seed, {kTagFlags});

    Dataset ds;
    ds.classes = spec.classes;
    ds.provenance = "synthetic";
    ds.x = nn::Mat(spec.size, spec.dims);
    ds.y = nn::Mat(spec.size, spec.classes);
    if (!spec.prop_coords.empty()) ds.prop.resize(spec.size, 0);

    for (size_t i = 0; i < spec.size; ++i) {
        const size_t k = i % spec.classes;
        ds.y(i, k) = 1.0;
        for (size_t d = 0; d < spec.dims; ++d)
            ds.x(i, d) = (d == k ? spec.separation : 0.0) +
                         feat.normal(0.0, spec.noise);
        if (!spec.prop_coords.empty() && flags.unit() < spec.prop_fraction) {
            ds.prop[i] = 1;
            for (size_t c : spec.prop_coords) ds.x(i, c) += spec.prop_delta;
        }
    }
    return ds;
}

Dataset load_tabular_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) ==
                                       std::vector<std::string>{""})
        throw std::runtime_error("csv: empty file");

    const std::vector<std::string> header = split_csv_line(line);
    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw std::runtime_error("csv: missing column '" + name + "'");
        return static_cast<size_t>(it - header.begin());
    };
    std::vector<size_t> fcols;
    fcols.reserve(schema.features.size());
    for (const std::string& f : schema.features) fcols.push_back(column(f));
    const size_t lcol = column(schema.label);

    std::vector<std::vector<double>> rows;
    std::vector<size_t> labels;
    size_t rowno = 0;
    size_t max_label = 0;
    while (std::getline(in, line)) {
        ++rowno;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size())
            throw std::runtime_error(
                "csv row " + std::to_string(rowno) + ": expected " +
                std::to_string(header.size()) + " fields, got " +
                std::to_string(f.size()));
        std::vector<double> feats(fcols.size());
        for (size_t i = 0; i < fcols.size(); ++i)
            feats[i] = parse_field(f[fcols[i]], rowno);
        const double lv = parse_field(f[lcol], rowno);
        if (lv < 0 || lv != std::floor(lv))
            throw std::runtime_error("csv row " + std::to_string(rowno) +
                                     ": label must be a non-negative integer");
        labels.push_back(static_cast<size_t>(lv));
        max_label = std::max(max_label, labels.back());
        rows.push_back(std::move(feats));
    }
    if (rows.empty()) throw std::runtime_error("csv: no data rows");

    Dataset ds;
    ds.classes = max_label + 1;
    ds.provenance = "csv:" + path;
    ds.x = nn::Mat(rows.size(), fcols.size());
    ds.y = nn::Mat(rows.size(), ds.classes);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (size_t c = 0; c < fcols.size(); ++c) ds.x(r, c) = rows[r][c];
        ds.y(r, labels[r]) = 1.0;
    }
    return ds;
}

}  // namespace pefl::data
