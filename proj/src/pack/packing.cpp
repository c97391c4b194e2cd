#include "pefl/pack/packing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pefl::pack {

using namespace ckks;

size_t next_pow2(size_t x) {
    size_t p = 1;
    while (p < x) p <<= 1;
    return p;
}

namespace {

bool is_pow2(size_t x) { return x != 0 && (x & (x - 1)) == 0; }

// Zero the fold residue between strided entries: multiply by a 0/1 mask
// encoded at the prime about to drop, so the rescale restores the scale.
Ciphertext mask_stride(const Evaluator& ev, const Ciphertext& ct,
                       size_t stride, size_t count) {
    const Context& cx = ev.ctx();
    auto m = stride_mask(stride, count, cx.slots());
    double ql = double(cx.prime(size_t(ct.level())).q);
    Ciphertext out = ev.mult_plain(ct, encode(cx, m, ql, ct.level()));
    ev.rescale(out);
    return out;
}

// Fan each entry at slot i*block out over [i*block, (i+1)*block); assumes
// the slots in between are zero.
Ciphertext fan_out(const Evaluator& ev, Ciphertext ct, size_t block,
                   const RotationKeys& rot) {
    for (size_t t = 1; t < block; t <<= 1)
        ct = ev.add(ct, ev.rotate(ct, -int(t), rot));
    return ct;
}

// One ciphertext of a broadcast vector against one ciphertext of a row-major
// matrix: slotwise product, then fold the `blocks` row blocks onto the first.
Ciphertext row_block_product(const Evaluator& ev, const Ciphertext& v,
                             const Ciphertext& m, size_t row_len,
                             size_t blocks, const KswitchKey& rlk,
                             const RotationKeys& rot) {
    Ciphertext prod = ev.mult(v, m, rlk);
    for (size_t t = row_len; t < row_len * blocks; t <<= 1)
        prod = ev.add(prod, ev.rotate(prod, int(t), rot));
    return prod;
}

// Broadcast form of pv aligned with a row-major split: one ciphertext per
// matrix ciphertext, entry i of group b filling block i.
std::vector<Ciphertext> as_broadcast(const Evaluator& ev,
                                     const PackedVector& pv, size_t block,
                                     size_t groups, size_t per_group,
                                     const RotationKeys& rot) {
    if (pv.ct.size() != groups)
        throw std::invalid_argument("vector/matrix split mismatch");
    if (pv.layout == Layout::broadcast) {
        if (pv.block != block)
            throw std::invalid_argument("broadcast block mismatch");
        return pv.ct;
    }
    if (pv.layout != Layout::strided_sums || pv.block != block)
        throw std::invalid_argument(
            "row-based product needs a broadcast or stride-aligned vector");
    std::vector<Ciphertext> out;
    out.reserve(groups);
    for (size_t b = 0; b < groups; ++b) {
        size_t cnt = std::min(per_group, pv.len - b * per_group);
        Ciphertext c = pv.garbage ? mask_stride(ev, pv.ct[b], block, cnt)
                                  : pv.ct[b];
        out.push_back(fan_out(ev, std::move(c), block, rot));
    }
    return out;
}

}  // namespace

size_t PackedMatrix::size_bytes() const {
    size_t s = 0;
    for (const auto& c : ct) s += c.size_bytes();
    return s;
}

// ---------- slot-pattern builders ----------

std::vector<std::vector<double>> matrix_slots(
    const std::vector<std::vector<double>>& m, Orientation orient,
    size_t slots, size_t min_block) {
    const size_t r = m.size(), c = m.at(0).size();
    size_t r2 = next_pow2(r), c2 = next_pow2(c);
    if (orient == Orientation::column)
        r2 = std::max(r2, next_pow2(min_block));
    else
        c2 = std::max(c2, next_pow2(min_block));
    const size_t block = orient == Orientation::column ? r2 : c2;
    const size_t major = orient == Orientation::column ? c : r;
    if (block > slots) throw std::invalid_argument("matrix block too large");
    const size_t per_ct = std::min(orient == Orientation::column ? c2 : r2,
                                   slots / block);

    std::vector<std::vector<double>> out((major + per_ct - 1) / per_ct,
                                         std::vector<double>(slots, 0.0));
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) {
            size_t maj = orient == Orientation::column ? j : i;
            size_t min = orient == Orientation::column ? i : j;
            out[maj / per_ct][(maj % per_ct) * block + min] = m[i][j];
        }
    return out;
}

std::vector<double> tiled_slots(const std::vector<double>& v, size_t block,
                                size_t copies) {
    if (v.size() > block) throw std::invalid_argument("tile too small");
    std::vector<double> out(block * copies, 0.0);
    for (size_t t = 0; t < copies; ++t)
        for (size_t i = 0; i < v.size(); ++i) out[t * block + i] = v[i];
    return out;
}

std::vector<double> broadcast_slots(const std::vector<double>& v, size_t block,
                                    size_t copies) {
    (void)copies;
    std::vector<double> out(block * v.size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i)
        for (size_t f = 0; f < block; ++f) out[i * block + f] = v[i];
    return out;
}

std::vector<double> stride_mask(size_t stride, size_t count, size_t slots) {
    std::vector<double> m(slots, 0.0);
    for (size_t i = 0; i < count && i * stride < slots; ++i)
        m[i * stride] = 1.0;
    return m;
}

// ---------- encrypt / decrypt ----------

PackedMatrix encode_matrix(const Evaluator& ev,
                           const std::vector<std::vector<double>>& m,
                           Orientation orient, const PublicKey& pk,
                           rng::Stream& rs, size_t min_block) {
    const Context& cx = ev.ctx();
    PackedMatrix pm;
    pm.orient = orient;
    pm.r = m.size();
    pm.c = m.at(0).size();
    pm.r2 = next_pow2(pm.r);
    pm.c2 = next_pow2(pm.c);
    if (orient == Orientation::column)
        pm.r2 = std::max(pm.r2, next_pow2(min_block));
    else
        pm.c2 = std::max(pm.c2, next_pow2(min_block));
    const size_t block = orient == Orientation::column ? pm.r2 : pm.c2;
    pm.per_ct = std::min(orient == Orientation::column ? pm.c2 : pm.r2,
                         cx.slots() / block);
    for (const auto& s : matrix_slots(m, orient, cx.slots(), min_block))
        pm.ct.push_back(
            ev.encrypt(encode(cx, s, cx.delta(), cx.top_level()), pk, rs));
    return pm;
}

PackedVector encode_vector(const Evaluator& ev, const std::vector<double>& v,
                           const PublicKey& pk, rng::Stream& rs,
                           size_t min_pad) {
    const Context& cx = ev.ctx();
    if (v.size() > cx.slots()) throw std::invalid_argument("vector too long");
    PackedVector pv;
    pv.len = v.size();
    pv.pad = std::max(next_pow2(v.size()), next_pow2(min_pad));
    pv.per_ct = pv.len;
    pv.ct.push_back(
        ev.encrypt(encode(cx, v, cx.delta(), cx.top_level()), pk, rs));
    return pv;
}

std::vector<std::vector<double>> decrypt_matrix(const Evaluator& ev,
                                                const PackedMatrix& pm,
                                                const SecretKey& sk) {
    std::vector<std::vector<double>> vals;
    vals.reserve(pm.ct.size());
    for (const auto& c : pm.ct) vals.push_back(ev.decrypt_values(c, sk));
    const size_t block = pm.orient == Orientation::column ? pm.r2 : pm.c2;
    std::vector<std::vector<double>> m(pm.r, std::vector<double>(pm.c));
    for (size_t i = 0; i < pm.r; ++i)
        for (size_t j = 0; j < pm.c; ++j) {
            size_t maj = pm.orient == Orientation::column ? j : i;
            size_t min = pm.orient == Orientation::column ? i : j;
            m[i][j] = vals[maj / pm.per_ct][(maj % pm.per_ct) * block + min];
        }
    return m;
}

std::vector<double> decrypt_vector(const Evaluator& ev, const PackedVector& pv,
                                   const SecretKey& sk) {
    std::vector<std::vector<double>> vals;
    vals.reserve(pv.ct.size());
    for (const auto& c : pv.ct) vals.push_back(ev.decrypt_values(c, sk));
    std::vector<double> v(pv.len);
    for (size_t i = 0; i < pv.len; ++i) {
        switch (pv.layout) {
            case Layout::contiguous:
            case Layout::replicated:
                v[i] = vals[0][i];
                break;
            case Layout::broadcast:
                v[i] = vals[i / pv.per_ct][(i % pv.per_ct) * pv.block];
                break;
            case Layout::strided_sums:
                v[i] = vals[i / pv.per_ct][(i % pv.per_ct) * pv.block];
                break;
        }
    }
    return v;
}

// ---------- layout ops ----------

PackedVector vec_replicate(const Evaluator& ev, const PackedVector& pv,
                           size_t copies, const RotationKeys& rot) {
    const Context& cx = ev.ctx();
    if (!is_pow2(copies)) throw std::invalid_argument("copies not a power of 2");
    if (pv.layout != Layout::contiguous || pv.ct.size() != 1)
        throw std::invalid_argument("replicate takes one contiguous vector");
    if (pv.pad * copies > cx.slots())
        throw std::invalid_argument("replicate exceeds slot capacity");

    PackedVector out = pv;
    if (pv.garbage) {
        // lazy cleanup: keep [0, len), zero the fold residue above
        out.ct[0] = mask_stride(ev, out.ct[0], 1, pv.len);
        out.garbage = false;
    }
    for (size_t t = pv.pad; t < pv.pad * copies; t <<= 1)
        out.ct[0] = ev.add(out.ct[0], ev.rotate(out.ct[0], -int(t), rot));
    out.layout = Layout::replicated;
    out.block = pv.pad;
    out.copies = copies;
    return out;
}

PackedVector cumulative_add(const Evaluator& ev, const PackedVector& pv,
                            size_t block, const RotationKeys& rot) {
    if (!is_pow2(block)) throw std::invalid_argument("block not a power of 2");
    if (pv.ct.size() != 1)
        throw std::invalid_argument("cumulative_add takes one ciphertext");
    if (pv.pad % block != 0)
        throw std::invalid_argument("block must divide padded length");

    PackedVector out = pv;
    for (size_t t = 1; t < block; t <<= 1)
        out.ct[0] = ev.add(out.ct[0], ev.rotate(out.ct[0], int(t), rot));
    out.layout = Layout::strided_sums;
    out.block = block;
    out.len = (pv.len + block - 1) / block;
    out.pad = next_pow2(out.len);
    out.per_ct = out.len;
    out.garbage = block > 1;
    return out;
}

PackedVector spread_sums(const Evaluator& ev, const PackedVector& pv,
                         const RotationKeys& rot) {
    if (pv.layout != Layout::strided_sums)
        throw std::invalid_argument("spread_sums takes strided sums");
    PackedVector out = pv;
    for (size_t b = 0; b < pv.ct.size(); ++b) {
        size_t cnt = std::min(pv.per_ct, pv.len - b * pv.per_ct);
        Ciphertext c = pv.garbage ? mask_stride(ev, pv.ct[b], pv.block, cnt)
                                  : pv.ct[b];
        out.ct[b] = fan_out(ev, std::move(c), pv.block, rot);
    }
    out.layout = Layout::broadcast;
    out.copies = pv.block;
    out.garbage = false;
    return out;
}

// ---------- products ----------

namespace {

// v tiled against column blocks: one product per split, fold within blocks.
PackedVector col_product(const Evaluator& ev, const PackedVector& pv,
                         const std::vector<Ciphertext>& mct, size_t block,
                         size_t out_len, size_t per_ct, const KswitchKey& rlk,
                         const RotationKeys& rot) {
    if (pv.layout != Layout::replicated || pv.ct.size() != 1)
        throw std::invalid_argument(
            "column-based product needs a replicated vector");
    if (pv.block != block || pv.copies < std::min(per_ct, next_pow2(out_len)))
        throw std::invalid_argument("replication does not cover the matrix");

    PackedVector out;
    for (const Ciphertext& m : mct) {
        Ciphertext prod = ev.mult(pv.ct[0], m, rlk);
        for (size_t t = 1; t < block; t <<= 1)
            prod = ev.add(prod, ev.rotate(prod, int(t), rot));
        out.ct.push_back(std::move(prod));
    }
    out.len = out_len;
    out.pad = next_pow2(out_len);
    out.layout = Layout::strided_sums;
    out.block = block;
    out.per_ct = per_ct;
    out.garbage = block > 1;
    return out;
}

// v broadcast against row blocks: per-split product and fold across blocks,
// then the split partials sum into one contiguous vector.
PackedVector row_product(const Evaluator& ev, const PackedVector& pv,
                         const std::vector<Ciphertext>& mct, size_t row_len,
                         size_t rows, size_t out_len, size_t per_ct,
                         const KswitchKey& rlk, const RotationKeys& rot) {
    auto bc = as_broadcast(ev, pv, row_len, mct.size(), per_ct, rot);
    Ciphertext acc;
    for (size_t b = 0; b < mct.size(); ++b) {
        size_t blocks = std::min(per_ct, next_pow2(rows));
        Ciphertext part =
            row_block_product(ev, bc[b], mct[b], row_len, blocks, rlk, rot);
        acc = b == 0 ? std::move(part) : ev.add(acc, part);
    }
    PackedVector out;
    out.ct.push_back(std::move(acc));
    out.len = out_len;
    out.pad = row_len;  // slots [len, row_len) are zero-padding, clean
    out.layout = Layout::contiguous;
    out.per_ct = out_len;
    out.garbage = true;  // fold residue beyond the row length
    return out;
}

}  // namespace

PackedVector vm_mult(const Evaluator& ev, const PackedVector& pv,
                     const PackedMatrix& pm, const KswitchKey& rlk,
                     const RotationKeys& rot) {
    if (pv.len != pm.r) throw std::invalid_argument("dimension mismatch");
    if (pm.orient == Orientation::column)
        return col_product(ev, pv, pm.ct, pm.r2, pm.c, pm.per_ct, rlk, rot);
    return row_product(ev, pv, pm.ct, pm.c2, pm.r, pm.c, pm.per_ct, rlk, rot);
}

PackedVector vm_mult_transpose(const Evaluator& ev, const PackedVector& pv,
                               const PackedMatrix& pm, const KswitchKey& rlk,
                               const RotationKeys& rot) {
    if (pv.len != pm.c) throw std::invalid_argument("dimension mismatch");
    // the same slots read in the opposite orientation hold the transpose
    if (pm.orient == Orientation::column)
        return row_product(ev, pv, pm.ct, pm.r2, pm.c, pm.r, pm.per_ct, rlk,
                           rot);
    return col_product(ev, pv, pm.ct, pm.c2, pm.r, pm.per_ct, rlk, rot);
}

PackedMatrix outer_product(const Evaluator& ev, const PackedVector& rows,
                           const PackedVector& cols, Orientation orient,
                           const KswitchKey& rlk) {
    const PackedVector& tiled = orient == Orientation::column ? rows : cols;
    const PackedVector& bcast = orient == Orientation::column ? cols : rows;
    // both factors must agree on the block, which may exceed the minor
    // dimension's own padding when layers share a stride
    const size_t block = tiled.block;
    if (tiled.layout != Layout::replicated ||
        block < next_pow2(tiled.len))
        throw std::invalid_argument("outer product needs a tiled factor");
    if (bcast.layout != Layout::broadcast || bcast.block != block)
        throw std::invalid_argument("outer product needs a broadcast factor");
    if (tiled.ct.size() != 1 || bcast.ct.size() != 1)
        throw std::invalid_argument("outer product takes single ciphertexts");

    PackedMatrix pm;
    pm.orient = orient;
    pm.r = rows.len;
    pm.c = cols.len;
    pm.r2 = orient == Orientation::column ? block : next_pow2(rows.len);
    pm.c2 = orient == Orientation::column ? next_pow2(cols.len) : block;
    pm.per_ct = orient == Orientation::column ? pm.c2 : pm.r2;
    pm.ct.push_back(ev.mult(tiled.ct[0], bcast.ct[0], rlk));
    return pm;
}

std::vector<int> rotations_for(size_t slots) {
    std::vector<int> r;
    for (size_t t = 1; t < slots; t <<= 1) {
        r.push_back(int(t));
        r.push_back(-int(t));
    }
    return r;
}

}  // namespace pefl::pack
