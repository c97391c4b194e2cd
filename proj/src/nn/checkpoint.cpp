#include "pefl/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace pefl::nn {

namespace {

constexpr char kMagic[8] = {'P', 'E', 'F', 'L', 'M', 'D', 'L', '1'};

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
    os.write(reinterpret_cast<char*>(b), 8);
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<uint64_t>(d)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

void save_checkpoint(const std::string& path, const ModelArch& arch,
                     const Params& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os.write(kMagic, 8);
    put_u64(os, arch.widths.size());
    for (size_t w : arch.widths) put_u64(os, w);
    for (Act a : arch.acts) put_u64(os, uint64_t(a));
    for (size_t j = 1; j < params.size(); ++j) {
        for (double v : params[j].w.a) put_f64(os, v);
        for (double v : params[j].b) put_f64(os, v);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic");
    Checkpoint c;
    size_t nw = get_u64(is);
    if (nw < 2 || nw > 64) throw std::runtime_error("bad checkpoint arch");
    c.arch.widths.resize(nw);
    for (size_t& w : c.arch.widths) w = get_u64(is);
    c.arch.acts.resize(nw - 1);
    for (Act& a : c.arch.acts) a = Act(get_u64(is));
    c.arch.validate();
    const size_t L = c.arch.depth();
    c.params.resize(L + 1);
    for (size_t j = 1; j <= L; ++j) {
        c.params[j].w = Mat(c.arch.widths[j - 1], c.arch.widths[j]);
        for (double& v : c.params[j].w.a) v = get_f64(is);
        c.params[j].b.resize(c.arch.widths[j]);
        for (double& v : c.params[j].b) v = get_f64(is);
    }
    return c;
}

}  // namespace pefl::nn
