#pragma once

// Matrix packings and encrypted linear algebra. A column-based matrix
// concatenates zero-padded columns (block = padded row count r2); a
// row-based one concatenates zero-padded rows (block = padded column count
// c2). One slotwise multiplication plus a log-depth rotate-add fold gives a
// vector-matrix product; the strided output of a column-based product feeds
// a row-based product directly, so consecutive encrypted layers alternate
// orientations. Multiplying by the transpose is the same ciphertext read in
// the opposite orientation.

#include <vector>

#include "pefl/ckks/evaluator.hpp"

namespace pefl::pack {

enum class Orientation { column, row };

// Slot patterns a vector can be in:
//   contiguous   v_i at slot i
//   replicated   tiled whole-vector copies, v_i at slots {t*block + i}
//   broadcast    elementwise, v_i filling block i: slots [i*block, (i+1)*block)
//   strided_sums v_i at slot i*stride, fold residue between (see `garbage`)
enum class Layout { contiguous, replicated, broadcast, strided_sums };

struct PackedVector {
    std::vector<ckks::Ciphertext> ct;  // split into equal column/row groups
    size_t len = 0;                    // logical length
    size_t pad = 0;                    // next_pow2(len)
    Layout layout = Layout::contiguous;
    size_t block = 0;      // tile length / broadcast block / stride
    size_t copies = 1;     // replicated and broadcast only
    size_t per_ct = 0;     // entries per ciphertext when split (= len if not)
    bool garbage = false;  // slots outside the pattern hold fold residue

    int level() const { return ct.at(0).level(); }
    double scale() const { return ct.at(0).scale; }
};

struct PackedMatrix {
    std::vector<ckks::Ciphertext> ct;  // split by major blocks when needed
    Orientation orient = Orientation::column;
    size_t r = 0, c = 0;    // logical dims (v*m takes v of length r)
    size_t r2 = 0, c2 = 0;  // padded dims, powers of two
    size_t per_ct = 0;      // major blocks (columns or rows) per ciphertext

    int level() const { return ct.at(0).level(); }
    size_t size_bytes() const;
};

size_t next_pow2(size_t x);

// ---------- slot-pattern builders (plaintext side) ----------

// Matrix slots in the given orientation, one vector per ciphertext split.
// min_block inflates the block dimension so consecutive layers of different
// widths can share one stride.
std::vector<std::vector<double>> matrix_slots(
    const std::vector<std::vector<double>>& m, Orientation orient,
    size_t slots, size_t min_block = 0);
std::vector<double> tiled_slots(const std::vector<double>& v, size_t block,
                                size_t copies);
std::vector<double> broadcast_slots(const std::vector<double>& v, size_t block,
                                    size_t copies);
// 1.0 at slots {i*stride : i < count}, 0 elsewhere.
std::vector<double> stride_mask(size_t stride, size_t count, size_t slots);

// ---------- encrypt / decrypt ----------

PackedMatrix encode_matrix(const ckks::Evaluator& ev,
                           const std::vector<std::vector<double>>& m,
                           Orientation orient, const ckks::PublicKey& pk,
                           rng::Stream& rs, size_t min_block = 0);
PackedVector encode_vector(const ckks::Evaluator& ev,
                           const std::vector<double>& v,
                           const ckks::PublicKey& pk, rng::Stream& rs,
                           size_t min_pad = 0);

std::vector<std::vector<double>> decrypt_matrix(const ckks::Evaluator& ev,
                                                const PackedMatrix& pm,
                                                const ckks::SecretKey& sk);
std::vector<double> decrypt_vector(const ckks::Evaluator& ev,
                                   const PackedVector& pv,
                                   const ckks::SecretKey& sk);

// ---------- layout ops ----------

// contiguous -> replicated (tiled), log2(copies) rotate-adds.
PackedVector vec_replicate(const ckks::Evaluator& ev, const PackedVector& pv,
                           size_t copies, const ckks::RotationKeys& rot);

// Rotate-add fold within blocks: slot k*block ends up holding the sum of
// block k; the other slots hold shifted partial sums (garbage).
PackedVector cumulative_add(const ckks::Evaluator& ev, const PackedVector& pv,
                            size_t block, const ckks::RotationKeys& rot);

// strided_sums -> broadcast over the same block: zeroes the fold residue
// (one masking level) and fans each entry out over its block.
PackedVector spread_sums(const ckks::Evaluator& ev, const PackedVector& pv,
                         const ckks::RotationKeys& rot);

// ---------- products ----------

// v*m. Column-based matrices take a replicated (tiled) vector and yield
// strided sums; row-based ones take a broadcast vector (strided input is
// spread first) and yield a contiguous vector. Either way one ct-ct
// multiplication, plus one masking level when a strided input is cleaned.
PackedVector vm_mult(const ckks::Evaluator& ev, const PackedVector& pv,
                     const PackedMatrix& pm, const ckks::KswitchKey& rlk,
                     const ckks::RotationKeys& rot);

// v*m^T: the same ciphertext read in the opposite orientation.
PackedVector vm_mult_transpose(const ckks::Evaluator& ev,
                               const PackedVector& pv, const PackedMatrix& pm,
                               const ckks::KswitchKey& rlk,
                               const ckks::RotationKeys& rot);

// rows_i * cols_j at entry (i, j); operands must already be laid out for the
// requested orientation (tiled + broadcast), one multiplication.
PackedMatrix outer_product(const ckks::Evaluator& ev, const PackedVector& rows,
                           const PackedVector& cols, Orientation orient,
                           const ckks::KswitchKey& rlk);

// Every rotation these ops request is a power of two in either direction;
// feed to keygen once per run.
std::vector<int> rotations_for(size_t slots);

}  // namespace pefl::pack
