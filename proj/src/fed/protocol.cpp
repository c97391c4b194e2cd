#include "pefl/fed/protocol.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "pefl/nn/checkpoint.hpp"

namespace pefl::fed {

using ckks::Ciphertext;
using ckks::Plaintext;
using pack::Layout;
using pack::Orientation;
using pack::PackedMatrix;
using pack::PackedVector;

namespace {

constexpr uint16_t kServer = 0;

// odd layers column-packed, even layers row-packed
Orientation orient_of(size_t j) {
    return j % 2 ? Orientation::column : Orientation::row;
}

// sigmoid layers work on u/bound in [-1,1]; identity layers need no scaling
double layer_norm(const nn::ModelArch& arch, size_t j, const ActApprox& act) {
    return arch.acts[j - 1] == nn::Act::Sigmoid ? act.bound : 1.0;
}

size_t ct_bytes(int level, size_t n) {
    return 72 + 2 * size_t(level + 1) * n * 8;
}

// party + level + scale + flood magnitude + fingerprint + one poly
size_t partial_bytes(int level, size_t n) {
    return 56 + size_t(level + 1) * n * 8;
}

size_t share_bytes(int level, int top, size_t n) {
    return 16 + size_t(level + 1) * n * 8 + ct_bytes(top, n);
}

size_t poly_bytes(const ckks::RnsPoly& p) {
    size_t s = 16;
    for (const auto& l : p.limb) s += 8 * l.size();
    return s;
}

size_t kswitch_bytes(const ckks::KswitchKey& k) {
    size_t s = 0;
    for (const auto& p : k.kb) s += poly_bytes(p);
    for (const auto& p : k.ka) s += poly_bytes(p);
    return s;
}

size_t key_ring_bytes(const mhe::KeyRing& keys) {
    size_t s = poly_bytes(keys.pk.a) + poly_bytes(keys.pk.b);
    s += kswitch_bytes(keys.rlk);
    for (const auto& [amt, k] : keys.rot.by_amount) {
        (void)amt;
        s += kswitch_bytes(k);
    }
    return s;
}

void charge(Cohort& c, net::Category cat, uint16_t from, uint16_t to,
            size_t bytes, const net::SendMeta& meta) {
    if (!c.router) return;
    net::Envelope e;
    e.tag = cat;
    e.round = c.round;
    e.sender = from;
    e.receiver = to;
    c.router->send_sized(e, bytes, meta);
}

// Hub-relayed collective flow: the holder ships the ciphertext to every
// other party and each answers with a share/partial of reply_b bytes.
void charge_collective(Cohort& c, net::Category cat, size_t ct_b,
                       size_t reply_b, double reply_comp) {
    if (!c.router) return;
    const net::SendMeta cipher{false, true, false, 0.0};
    const net::SendMeta reply{false, true, false, reply_comp};
    const uint16_t holder = c.self;
    if (holder == kServer) {
        for (int p = 1; p <= c.parties; ++p) {
            charge(c, cat, kServer, uint16_t(p), ct_b, cipher);
            charge(c, cat, uint16_t(p), kServer, reply_b, reply);
        }
        return;
    }
    charge(c, cat, holder, kServer, ct_b, cipher);
    for (int p = 1; p <= c.parties; ++p) {
        if (uint16_t(p) == holder) continue;
        charge(c, cat, kServer, uint16_t(p), ct_b, cipher);
        charge(c, cat, uint16_t(p), kServer, reply_b, reply);
        charge(c, cat, kServer, holder, reply_b, {false, true, false, 0.0});
    }
}

std::vector<std::vector<double>> mat_rows(const nn::Mat& m) {
    std::vector<std::vector<double>> r(m.rows, std::vector<double>(m.cols));
    for (size_t i = 0; i < m.rows; ++i)
        for (size_t j = 0; j < m.cols; ++j) r[i][j] = m(i, j);
    return r;
}

nn::Vec row_of(const nn::Mat& m, size_t i) {
    return nn::Vec(m.a.begin() + i * m.cols, m.a.begin() + (i + 1) * m.cols);
}

std::vector<double> prefix_mask(size_t count, size_t slots) {
    std::vector<double> m(slots, 0.0);
    for (size_t i = 0; i < count && i < slots; ++i) m[i] = 1.0;
    return m;
}

// Multiply by mask*factor encoded at delta*q_l/scale, then rescale: output
// holds masked value*factor at scale exactly delta, one level down. Keeps
// repeated layers from drifting away from the fresh scale.
Ciphertext mask_to_delta(Cohort& c, const Ciphertext& a,
                         const std::vector<double>& mask, double factor) {
    const ckks::Context& cx = *c.cx;
    std::vector<double> s(mask);
    for (double& v : s) v *= factor;
    const double ql = double(cx.prime(size_t(a.level())).q);
    Ciphertext out =
        c.ev.mult_plain(a, ckks::encode(cx, s, cx.delta() * ql / a.scale,
                                        a.level()));
    c.ev.rescale(out);
    return out;
}

Ciphertext const_to_delta(Cohort& c, const Ciphertext& a, double factor) {
    const ckks::Context& cx = *c.cx;
    const double ql = double(cx.prime(size_t(a.level())).q);
    Ciphertext out = c.ev.mult_plain(
        a, ckks::encode_constant(cx, factor, cx.delta() * ql / a.scale,
                                 a.level()));
    c.ev.rescale(out);
    return out;
}

// Public (trivial) encryptions of plaintext-side factors so the packed
// product kernels need no plaintext special cases.
PackedVector trivial_tiled(Cohort& c, const std::vector<double>& v,
                           size_t block) {
    const ckks::Context& cx = *c.cx;
    const size_t copies = cx.slots() / block;
    PackedVector pv;
    pv.ct.push_back(c.ev.encrypt_trivial(
        ckks::encode(cx, pack::tiled_slots(v, block, copies), cx.delta(),
                     cx.top_level())));
    pv.len = v.size();
    pv.pad = block;
    pv.layout = Layout::replicated;
    pv.block = block;
    pv.copies = copies;
    pv.per_ct = v.size();
    return pv;
}

PackedVector trivial_broadcast(Cohort& c, const std::vector<double>& v,
                               size_t block) {
    const ckks::Context& cx = *c.cx;
    PackedVector pv;
    pv.ct.push_back(c.ev.encrypt_trivial(
        ckks::encode(cx, pack::broadcast_slots(v, block, block), cx.delta(),
                     cx.top_level())));
    pv.len = v.size();
    pv.pad = pack::next_pow2(v.size());
    pv.layout = Layout::broadcast;
    pv.block = block;
    pv.copies = block;
    pv.per_ct = v.size();
    return pv;
}

PackedMatrix trivial_matrix(Cohort& c, const nn::Mat& m, Orientation o,
                            size_t min_block) {
    const ckks::Context& cx = *c.cx;
    PackedMatrix pm;
    pm.orient = o;
    pm.r = m.rows;
    pm.c = m.cols;
    pm.r2 = pack::next_pow2(pm.r);
    pm.c2 = pack::next_pow2(pm.c);
    if (o == Orientation::column)
        pm.r2 = std::max(pm.r2, pack::next_pow2(min_block));
    else
        pm.c2 = std::max(pm.c2, pack::next_pow2(min_block));
    const size_t block = o == Orientation::column ? pm.r2 : pm.c2;
    pm.per_ct = std::min(o == Orientation::column ? pm.c2 : pm.r2,
                         cx.slots() / block);
    for (const auto& s : pack::matrix_slots(mat_rows(m), o, cx.slots(),
                                            min_block))
        pm.ct.push_back(c.ev.encrypt_trivial(
            ckks::encode(cx, s, cx.delta(), cx.top_level())));
    return pm;
}

std::vector<double> pattern_slots(const std::vector<double>& v, bool strided,
                                  size_t block, size_t slots) {
    std::vector<double> s(slots, 0.0);
    for (size_t i = 0; i < v.size(); ++i) s[strided ? i * block : i] = v[i];
    return s;
}

// read a vector back from opened slots, by layout
nn::Vec pattern_read(const std::vector<double>& vals, size_t len, bool strided,
                     size_t block) {
    nn::Vec v(len);
    for (size_t i = 0; i < len; ++i) v[i] = vals[strided ? i * block : i];
    return v;
}

// sigma' = l (1 - l) from the activation ciphertext
Ciphertext sigma_prime_ct(Cohort& c, const Ciphertext& l) {
    Plaintext one = ckks::encode_constant(*c.cx, 1.0, l.scale, l.level());
    return c.ev.mult(l, c.ev.plain_sub(one, l), c.keys.rlk);
}

PackedVector encrypt_bias(Cohort& c, const nn::Vec& b, size_t block,
                          bool strided, double norm) {
    const ckks::Context& cx = *c.cx;
    nn::Vec scaled(b);
    for (double& v : scaled) v /= norm;
    PackedVector pv;
    pv.ct.push_back(c.ev.encrypt(
        ckks::encode(cx, pattern_slots(scaled, strided, block, cx.slots()),
                     cx.delta(), cx.top_level()),
        c.keys.pk, c.rng));
    pv.len = b.size();
    pv.pad = strided ? pack::next_pow2(b.size()) : block;
    pv.layout = strided ? Layout::strided_sums : Layout::contiguous;
    pv.block = strided ? block : 0;
    pv.per_ct = b.size();
    return pv;
}

nn::Mat matrix_from_open(Cohort& c, const PackedMatrix& pm) {
    std::vector<std::vector<double>> vals;
    vals.reserve(pm.ct.size());
    for (const auto& ct : pm.ct) vals.push_back(c.open(ct));
    const size_t block = pm.orient == Orientation::column ? pm.r2 : pm.c2;
    nn::Mat m(pm.r, pm.c);
    for (size_t i = 0; i < pm.r; ++i)
        for (size_t j = 0; j < pm.c; ++j) {
            size_t maj = pm.orient == Orientation::column ? j : i;
            size_t min = pm.orient == Orientation::column ? i : j;
            m(i, j) = vals[maj / pm.per_ct][(maj % pm.per_ct) * block + min];
        }
    return m;
}

nn::Params plain_params(const FedModel& m) {
    nn::Params p(m.arch.depth() + 1);
    for (size_t j = 1; j <= m.arch.depth(); ++j) {
        if (m.layer[j].encrypted)
            throw std::logic_error("model holds ciphertext layers");
        p[j].w = m.layer[j].w;
        p[j].b = m.layer[j].b;
    }
    return p;
}

bool any_encrypted(const FedModel& m) {
    for (size_t j = 1; j <= m.arch.depth(); ++j)
        if (m.layer[j].encrypted) return true;
    return false;
}

}  // namespace

// ---------- activation approximation ----------

std::vector<double> ActApprox::sigmoid_coeffs() const {
    return ckks::chebyshev_fit([](double x) { return nn::sigmoid(x); }, -bound,
                               bound, degree);
}

int ActApprox::ladder_levels(nn::Act act) const {
    if (act == nn::Act::Identity) return 0;
    if (degree <= 3) return degree;
    if (degree <= 11) return 4;
    if (degree <= 15) return 5;
    return 6;
}

// ---------- cohort ----------

double Cohort::cost_scale() const {
    const double n = double(2 * cx->slots());
    return n * std::log2(n) / (4096.0 * 12.0);
}

Ciphertext Cohort::refresh(const Ciphertext& ct) {
    if (shares.empty()) throw std::runtime_error("cohort holds no key shares");
    std::vector<mhe::BootstrapShare> bs;
    bs.reserve(shares.size());
    for (const auto& sh : shares)
        bs.push_back(
            mhe::bootstrap_share(ev, sh, ct, keys.pk, parties, boot, rng));
    Ciphertext out = mhe::combine_bootstrap(ev, ct, bs, parties);
    counters.bootstraps++;
    charge_collective(*this, net::Category::bootstrap, ct.size_bytes(),
                      bs[0].size_bytes(), cost.boot_share_s * cost_scale());
    return out;
}

Ciphertext Cohort::ensure(const Ciphertext& ct, int need) {
    if (need > cx->top_level())
        throw std::runtime_error("context too shallow for the pass");
    if (ct.level() < need) return refresh(ct);
    return ct;
}

std::vector<double> Cohort::open(const Ciphertext& ct) {
    if (shares.empty()) throw std::runtime_error("cohort holds no key shares");
    std::vector<mhe::PartialDecryption> parts;
    parts.reserve(shares.size());
    for (const auto& sh : shares)
        parts.push_back(mhe::partial_decrypt(*cx, sh, ct, boot.flood, rng));
    auto vals = mhe::combine_partials(*cx, ct, parts, parties);
    counters.decrypts++;
    charge_collective(*this, net::Category::partial_decryption, ct.size_bytes(),
                      partial_bytes(ct.level(), 2 * cx->slots()),
                      cost.partial_s * cost_scale());
    return vals;
}

Cohort make_cohort(ckks::ContextPtr cx, int parties, uint64_t seed) {
    if (parties < 1) throw std::invalid_argument("need at least one party");
    Cohort c(cx);
    c.parties = parties;
    c.rng = rng::Stream(seed, {0x636f6874ULL});
    c.shares = mhe::make_shares(*cx, parties, rng::derive(seed, {0x73687273ULL}));
    c.keys = mhe::distributed_keygen(*cx, c.shares,
                                     rng::derive(seed, {0x63727073ULL}),
                                     pack::rotations_for(cx->slots()));
    return c;
}

// ---------- model under partition ----------

size_t uniform_block(const nn::ModelArch& arch) {
    size_t w = 0;
    for (size_t x : arch.widths) w = std::max(w, x);
    return pack::next_pow2(w);
}

size_t FedModel::encrypted_bytes() const {
    size_t s = 0;
    for (size_t j = 1; j <= arch.depth(); ++j) {
        const FedLayer& lay = layer[j];
        if (!lay.encrypted) continue;
        s += lay.w_ct->size_bytes();
        if (lay.b_ct) s += lay.b_ct->ct[0].size_bytes();
    }
    return s;
}

size_t FedModel::plaintext_bytes() const {
    size_t s = 0;
    for (size_t j = 1; j <= arch.depth(); ++j) {
        const FedLayer& lay = layer[j];
        if (lay.encrypted) continue;
        s += 8 * (lay.w.a.size() + lay.b.size());
    }
    return s;
}

namespace {

void encrypt_layer(Cohort& c, FedModel& m, size_t j, const ActApprox& act,
                   bool omit_interior_bias) {
    FedLayer& lay = m.layer[j];
    const Orientation o = orient_of(j);
    const double norm = layer_norm(m.arch, j, act);
    lay.w_ct = pack::encode_matrix(c.ev, mat_rows(lay.w), o, c.keys.pk, c.rng,
                                   m.block);
    lay.bias_omitted = omit_interior_bias && j < m.arch.depth() &&
                       !m.part.is_secret(j + 1);
    lay.bias_norm = norm;
    if (lay.bias_omitted) {
        lay.b_ct.reset();
    } else {
        lay.b_ct = encrypt_bias(c, lay.b, m.block,
                                o == Orientation::column, norm);
    }
    lay.encrypted = true;
    if (lay.w_ct->ct.size() != 1)
        throw std::invalid_argument("layer exceeds single-ciphertext packing");
    lay.w = nn::Mat();
    lay.b.clear();
}

}  // namespace

FedModel encrypt_model(Cohort& c, const nn::ModelArch& arch,
                       const nn::Params& p, const LayerPartition& part,
                       const ActApprox& act, bool omit_interior_bias) {
    arch.validate();
    part.validate(arch.depth());
    if (p.size() != arch.depth() + 1)
        throw std::invalid_argument("params do not match the architecture");
    FedModel m;
    m.arch = arch;
    m.part.secret = part.secret;
    m.block = uniform_block(arch);
    m.layer.resize(arch.depth() + 1);
    for (size_t j = 1; j <= arch.depth(); ++j) {
        m.layer[j].w = p[j].w;
        m.layer[j].b = p[j].b;
        if (!part.is_secret(j)) continue;
        if (m.block > c.cx->slots())
            throw std::invalid_argument("model too wide for the ring");
        encrypt_layer(c, m, j, act, omit_interior_bias);
    }
    return m;
}

nn::Params decrypt_model(Cohort& c, const FedModel& m) {
    nn::Params p(m.arch.depth() + 1);
    for (size_t j = 1; j <= m.arch.depth(); ++j) {
        const FedLayer& lay = m.layer[j];
        if (!lay.encrypted) {
            p[j].w = lay.w;
            p[j].b = lay.b;
            continue;
        }
        p[j].w = matrix_from_open(c, *lay.w_ct);
        if (lay.bias_omitted) {
            p[j].b.assign(m.arch.widths[j], 0.0);
        } else {
            auto vals = c.open(lay.b_ct->ct[0]);
            p[j].b = pattern_read(vals, m.arch.widths[j],
                                  orient_of(j) == Orientation::column,
                                  m.block);
            for (double& v : p[j].b) v *= lay.bias_norm;
        }
    }
    return p;
}

// ---------- one training pass ----------

namespace {

struct LayerRec {
    nn::Vec u, l;               // plaintext side, valid when plain
    bool plain = false;
    std::optional<PackedVector> l_ct;
    std::optional<PackedVector> relay;  // form the next layer imported
};

struct ForwardState {
    std::vector<LayerRec> rec;  // [0] = input
};

ForwardState run_forward(Cohort& c, const FedModel& m, const nn::Vec& x,
                         const std::vector<double>& coeffs,
                         const ActApprox& act, bool external) {
    const nn::ModelArch& arch = m.arch;
    const size_t L = arch.depth();
    const size_t P = m.block;
    const ckks::Context& cx = *c.cx;
    if (x.size() != arch.widths[0])
        throw std::invalid_argument("input width mismatch");

    ForwardState f;
    f.rec.resize(L + 1);
    if (external) {
        // querier-encrypted input, tiled for the first column product
        PackedVector pv;
        pv.ct.push_back(c.ev.encrypt(
            ckks::encode(cx, pack::tiled_slots(x, P, cx.slots() / P),
                         cx.delta(), cx.top_level()),
            c.keys.pk, c.rng));
        pv.len = x.size();
        pv.pad = P;
        pv.layout = Layout::replicated;
        pv.block = P;
        pv.copies = cx.slots() / P;
        pv.per_ct = x.size();
        f.rec[0].l_ct = std::move(pv);
    } else {
        f.rec[0].l = x;
        f.rec[0].plain = true;
    }

    for (size_t j = 1; j <= L; ++j) {
        const FedLayer& lay = m.layer[j];
        LayerRec& r = f.rec[j];
        LayerRec& prev = f.rec[j - 1];
        const nn::Act a = arch.acts[j - 1];
        const size_t width = arch.widths[j];

        if (!lay.encrypted && !external) {
            // exact plaintext layer, same accumulation order as the
            // reference engine
            r.u.assign(width, 0.0);
            r.l.resize(width);
            for (size_t col = 0; col < width; ++col) {
                double s = 0.0;
                for (size_t row = 0; row < arch.widths[j - 1]; ++row)
                    s += prev.l[row] * lay.w(row, col);
                r.u[col] = s + lay.b[col];
                r.l[col] = nn::act_eval(a, r.u[col]);
            }
            r.plain = true;
            continue;
        }

        const Orientation ori = orient_of(j);
        const bool strided_out = ori == Orientation::column;
        const double norm = layer_norm(arch, j, act);
        const bool boundary = !external && j < L && !m.part.is_secret(j + 1);
        const int lad = boundary ? 0 : act.ladder_levels(a);

        PackedMatrix wtriv;
        const PackedMatrix* W;
        if (lay.encrypted) {
            W = &*lay.w_ct;
        } else {
            wtriv = trivial_matrix(c, lay.w, ori, P);
            W = &wtriv;
        }

        PackedVector in;
        if (prev.plain) {
            in = strided_out ? trivial_tiled(c, prev.l, P)
                             : trivial_broadcast(c, prev.l, P);
        } else {
            PackedVector src = *prev.l_ct;
            const int need = (src.garbage ? 1 : 0) + 2 + lad;
            src.ct[0] = c.ensure(src.ct[0], need);
            if ((strided_out && src.layout == Layout::replicated) ||
                (!strided_out && src.layout == Layout::broadcast)) {
                in = src;  // querier input arrives pre-tiled
            } else {
                in = strided_out
                         ? pack::vec_replicate(c.ev, src,
                                               cx.slots() / src.pad,
                                               c.keys.rot)
                         : pack::spread_sums(c.ev, src, c.keys.rot);
                c.counters.relayouts++;
            }
            prev.relay = in;
        }

        PackedVector u = pack::vm_mult(c.ev, in, *W, c.keys.rlk, c.keys.rot);
        c.counters.products++;
        // clear fold residue and divide by the ladder bound in one level
        auto mask = strided_out ? pack::stride_mask(P, width, cx.slots())
                                : prefix_mask(width, cx.slots());
        u.ct[0] = mask_to_delta(c, u.ct[0], mask, 1.0 / norm);
        u.garbage = false;
        if (lay.encrypted) {
            if (!lay.bias_omitted)
                u.ct[0] = c.ev.add(u.ct[0], lay.b_ct->ct[0]);
        } else if (!lay.b.empty()) {
            nn::Vec nb(lay.b);
            for (double& v : nb) v /= norm;
            u.ct[0] = c.ev.add_plain(
                u.ct[0], ckks::encode(cx,
                                      pattern_slots(nb, strided_out, P,
                                                    cx.slots()),
                                      u.ct[0].scale, u.ct[0].level()));
        }

        if (boundary) {
            // sanctioned opening: the next layer is exposed
            auto vals = c.open(u.ct[0]);
            r.u = pattern_read(vals, width, strided_out, P);
            for (double& v : r.u) v *= norm;
            r.l.resize(width);
            for (size_t i = 0; i < width; ++i)
                r.l[i] = nn::act_eval(a, r.u[i]);
            r.plain = true;
        } else if (a == nn::Act::Sigmoid) {
            PackedVector lv = u;
            lv.ct[0] = ckks::eval_chebyshev_normalized(c.ev, u.ct[0], coeffs,
                                                       c.keys.rlk);
            lv.garbage = true;  // the ladder's constant term fills every slot
            c.counters.ladders++;
            r.l_ct = std::move(lv);
        } else {
            r.l_ct = std::move(u);
        }
    }
    return f;
}

void check_statuses(const FedModel& m, const FedGradients& g, size_t opens) {
    EncStatusMap map = enc_status_map(m.part, m.arch.depth());
    for (size_t j = 1; j <= m.arch.depth(); ++j) {
        if ((map.layer[j].dw == Status::encrypted) != g.dw[j].has_value())
            throw std::runtime_error("status mismatch: dw");
        if ((map.layer[j].db == Status::encrypted) != g.db[j].has_value())
            throw std::runtime_error("status mismatch: db");
    }
    if (opens != map.decrypts())
        throw std::runtime_error("status mismatch: boundary decryptions");
}

}  // namespace

FedGradients training_pass(Cohort& c, const FedModel& m, const nn::Vec& x,
                           const nn::Vec& y, const ActApprox& act) {
    const nn::ModelArch& arch = m.arch;
    const size_t L = arch.depth();
    const size_t P = m.block;
    const ckks::Context* cxp = c.cx.get();
    if (y.size() != arch.widths[L])
        throw std::invalid_argument("label width mismatch");

    FedGradients g;
    g.dw.resize(L + 1);
    g.db.resize(L + 1);
    if (!any_encrypted(m)) {
        auto p = plain_params(m);
        auto t = nn::feedforward(arch, p, x);
        g.plain = nn::backprop(arch, p, t, y);
        return g;
    }

    const size_t d0 = c.counters.decrypts;
    const size_t b0 = c.counters.bootstraps;
    const auto coeffs = act.sigmoid_coeffs();
    ForwardState f = run_forward(c, m, x, coeffs, act, false);
    g.plain = nn::zero_grads(arch);

    bool e_enc = false;
    PackedVector e_ct;
    nn::Vec e_pl;

    if (m.layer[L].encrypted) {
        PackedVector l = *f.rec[L].l_ct;
        l.ct[0] = c.ensure(
            l.ct[0], arch.acts[L - 1] == nn::Act::Sigmoid ? 5 : 3);
        f.rec[L].l_ct = l;  // keep the refreshed copy for sigma'
        const bool strided = orient_of(L) == Orientation::column;
        e_ct = l;
        e_ct.ct[0] = c.ev.sub_plain(
            l.ct[0], ckks::encode(*cxp,
                                  pattern_slots(y, strided, P, cxp->slots()),
                                  l.ct[0].scale, l.ct[0].level()));
        e_enc = true;
    } else {
        const nn::Vec& lL = f.rec[L].l;
        e_pl.resize(lL.size());
        for (size_t i = 0; i < lL.size(); ++i) e_pl[i] = lL[i] - y[i];
    }

    for (size_t j = L; j >= 1; --j) {
        const FedLayer& lay = m.layer[j];
        const bool sec = lay.encrypted;
        const size_t width = arch.widths[j];
        const nn::Act a = arch.acts[j - 1];
        const Orientation ori = orient_of(j);

        if (e_enc && !sec) {
            // sanctioned opening: this layer is exposed
            auto vals = c.open(e_ct.ct[0]);
            e_pl = pattern_read(vals, width,
                                e_ct.layout == Layout::strided_sums,
                                e_ct.block);
            e_enc = false;
        }

        if (e_enc) {
            PackedVector dv = e_ct;
            if (a == nn::Act::Sigmoid) {
                e_ct.ct[0] = c.ensure(e_ct.ct[0], 4);
                Ciphertext lsrc = j == L ? f.rec[L].l_ct->ct[0]
                                         : f.rec[j].relay->ct[0];
                lsrc = c.ensure(lsrc, 5);
                dv.ct[0] = c.ev.mult(e_ct.ct[0], sigma_prime_ct(c, lsrc),
                                     c.keys.rlk);
                dv.garbage = true;
            } else {
                dv.ct[0] = c.ensure(e_ct.ct[0], 3);
            }
            g.db[j] = dv;

            // matrix-layout form of d feeds the outer product and the
            // transpose product
            PackedVector dmat =
                ori == Orientation::column
                    ? pack::spread_sums(c.ev, dv, c.keys.rot)
                    : pack::vec_replicate(c.ev, dv,
                                          cxp->slots() / dv.pad, c.keys.rot);
            c.counters.relayouts++;

            PackedVector rows =
                f.rec[j - 1].plain
                    ? (ori == Orientation::column
                           ? trivial_tiled(c, f.rec[j - 1].l, P)
                           : trivial_broadcast(c, f.rec[j - 1].l, P))
                    : *f.rec[j - 1].relay;
            g.dw[j] = pack::outer_product(c.ev, rows, dmat, ori, c.keys.rlk);
            c.counters.products++;

            if (j > 1) {
                e_ct = pack::vm_mult_transpose(c.ev, dmat, *lay.w_ct,
                                               c.keys.rlk, c.keys.rot);
                c.counters.products++;
            }
        } else {
            // plaintext d, exact reference arithmetic
            nn::Vec d(width);
            for (size_t k = 0; k < width; ++k)
                d[k] = e_pl[k] * nn::act_prime(a, f.rec[j].u[k]);
            g.plain.db[j] = d;

            const bool dw_enc = sec && j > 1 && m.layer[j - 1].encrypted;
            if (dw_enc) {
                // encrypted input activations against the plaintext d
                PackedVector dfac = ori == Orientation::column
                                        ? trivial_broadcast(c, d, P)
                                        : trivial_tiled(c, d, P);
                g.dw[j] = pack::outer_product(c.ev, *f.rec[j - 1].relay, dfac,
                                              ori, c.keys.rlk);
                c.counters.products++;
            } else {
                const nn::Vec& in = f.rec[j - 1].l;
                nn::Mat& dw = g.plain.dw[j];
                for (size_t r = 0; r < in.size(); ++r)
                    for (size_t col = 0; col < width; ++col)
                        dw(r, col) = in[r] * d[col];
            }

            if (j > 1) {
                if (sec) {
                    // error propagates through the encrypted weights
                    PackedVector dfac = ori == Orientation::column
                                            ? trivial_broadcast(c, d, P)
                                            : trivial_tiled(c, d, P);
                    e_ct = pack::vm_mult_transpose(c.ev, dfac, *lay.w_ct,
                                                   c.keys.rlk, c.keys.rot);
                    c.counters.products++;
                    e_enc = true;
                } else {
                    const nn::Mat& w = lay.w;
                    nn::Vec eprev(arch.widths[j - 1], 0.0);
                    for (size_t r = 0; r < eprev.size(); ++r) {
                        double s = 0.0;
                        for (size_t col = 0; col < width; ++col)
                            s += d[col] * w(r, col);
                        eprev[r] = s;
                    }
                    e_pl = std::move(eprev);
                }
            }
        }
    }

    g.pass_decrypts = c.counters.decrypts - d0;
    g.pass_bootstraps = c.counters.bootstraps - b0;
    check_statuses(m, g, g.pass_decrypts);
    return g;
}

void accumulate_gradients(Cohort& c, FedGradients& acc,
                          const FedGradients& g) {
    if (acc.dw.empty()) {
        acc.dw.resize(g.dw.size());
        acc.db.resize(g.db.size());
        acc.plain = g.plain;
    } else {
        nn::accumulate(acc.plain, g.plain);
    }
    for (size_t j = 1; j < g.dw.size(); ++j) {
        if (g.dw[j]) {
            if (acc.dw[j])
                acc.dw[j]->ct[0] = c.ev.add(acc.dw[j]->ct[0], g.dw[j]->ct[0]);
            else
                acc.dw[j] = g.dw[j];
        }
        if (g.db[j]) {
            if (acc.db[j])
                acc.db[j]->ct[0] = c.ev.add(acc.db[j]->ct[0], g.db[j]->ct[0]);
            else
                acc.db[j] = g.db[j];
        }
    }
    acc.pass_decrypts += g.pass_decrypts;
    acc.pass_bootstraps += g.pass_bootstraps;
}

void apply_update(Cohort& c, FedModel& m, const FedGradients& sum,
                  const nn::SgdConfig& cfg, const ActApprox& act) {
    const size_t L = m.arch.depth();
    const size_t P = m.block;
    const ckks::Context& cx = *c.cx;
    const double B = double(cfg.batch);
    const double shrink = 1.0 - cfg.eta * cfg.lambda / B;

    nn::GradientSet avg = sum.plain;
    nn::scale(avg, 1.0 / B);

    for (size_t j = 1; j <= L; ++j) {
        FedLayer& lay = m.layer[j];
        const size_t width = m.arch.widths[j];
        if (!lay.encrypted) {
            for (size_t i = 0; i < lay.w.a.size(); ++i)
                lay.w.a[i] = shrink * lay.w.a[i] - cfg.eta * avg.dw[j].a[i];
            for (size_t i = 0; i < lay.b.size(); ++i)
                lay.b[i] -= cfg.eta * avg.db[j][i];
            continue;
        }

        const Orientation ori = orient_of(j);
        const bool strided = ori == Orientation::column;
        const double norm = lay.bias_norm;
        (void)act;

        if (cfg.lambda != 0.0)
            lay.w_ct->ct[0] = c.refresh(c.ev.mult_scalar(lay.w_ct->ct[0],
                                                         shrink));
        if (sum.dw[j]) {
            Ciphertext step = const_to_delta(c, sum.dw[j]->ct[0],
                                             -cfg.eta / B);
            lay.w_ct->ct[0] = c.ev.add(lay.w_ct->ct[0], c.refresh(step));
        } else {
            // plaintext gradient applied to the encrypted weights
            nn::Mat step(avg.dw[j].rows, avg.dw[j].cols);
            for (size_t i = 0; i < step.a.size(); ++i)
                step.a[i] = -cfg.eta * avg.dw[j].a[i];
            auto slots = pack::matrix_slots(mat_rows(step), ori, cx.slots(),
                                            P);
            lay.w_ct->ct[0] = c.ev.add_plain(
                lay.w_ct->ct[0],
                ckks::encode(cx, slots[0], lay.w_ct->ct[0].scale,
                             lay.w_ct->ct[0].level()));
        }
        c.counters.updates++;

        if (lay.bias_omitted) continue;
        if (sum.db[j]) {
            // the 0/1 validity pattern rides in the update constant, so the
            // bias ciphertext's garbage slots stay exactly zero
            auto mask = strided ? pack::stride_mask(P, width, cx.slots())
                                : prefix_mask(width, cx.slots());
            Ciphertext step = mask_to_delta(c, sum.db[j]->ct[0], mask,
                                            -cfg.eta / (B * norm));
            lay.b_ct->ct[0] = c.ev.add(lay.b_ct->ct[0], c.refresh(step));
        } else {
            nn::Vec step(width);
            for (size_t i = 0; i < width; ++i)
                step[i] = -cfg.eta * avg.db[j][i] / norm;
            lay.b_ct->ct[0] = c.ev.add_plain(
                lay.b_ct->ct[0],
                ckks::encode(cx, pattern_slots(step, strided, P, cx.slots()),
                             lay.b_ct->ct[0].scale, lay.b_ct->ct[0].level()));
        }
        c.counters.updates++;
    }
}

void local_training(Cohort& c, FedModel& m, const data::Dataset& local,
                    const nn::SgdConfig& cfg, const ActApprox& act,
                    const dp::DpConfig& dpc, uint64_t seed, int party,
                    size_t round) {
    if (local.size() == 0) throw std::invalid_argument("empty local dataset");
    if (cfg.batch == 0 || cfg.batch > local.size())
        throw std::invalid_argument("batch exceeds the local dataset");

    for (size_t upd = 0; upd < cfg.local_epochs; ++upd) {
        rng::Stream bs(seed, {0x62617463ULL, uint64_t(party), uint64_t(round),
                              uint64_t(upd)});
        auto perm = bs.permutation(local.size());
        FedGradients acc;
        acc.plain = nn::zero_grads(m.arch);
        acc.dw.resize(m.arch.depth() + 1);
        acc.db.resize(m.arch.depth() + 1);
        for (size_t b = 0; b < cfg.batch; ++b) {
            const size_t i = perm[b];
            FedGradients g = training_pass(c, m, row_of(local.x, i),
                                           row_of(local.y, i), act);
            accumulate_gradients(c, acc, g);
        }
        if (dpc.enabled) {
            nn::GradientSet noisy = acc.plain;
            nn::scale(noisy, 1.0 / double(cfg.batch));
            rng::Stream ds(seed, {0x6470ULL, uint64_t(party), uint64_t(round),
                                  uint64_t(upd)});
            dp::perturb_exposed_gradients(noisy, m.part, m.arch, dpc, ds);
            nn::scale(noisy, double(cfg.batch));
            acc.plain = std::move(noisy);
        }
        apply_update(c, m, acc, cfg, act);
    }
}

void aggregate(Cohort& c, FedModel& global,
               const std::vector<FedModel>& locals) {
    if (int(locals.size()) != c.parties)
        throw std::invalid_argument("missing party model");
    for (const auto& lm : locals)
        if (lm.part.secret != global.part.secret)
            throw std::invalid_argument("partition mismatch");
    const double invN = 1.0 / double(locals.size());
    const size_t L = global.arch.depth();

    for (size_t j = 1; j <= L; ++j) {
        FedLayer& lay = global.layer[j];
        if (!lay.encrypted) {
            for (size_t i = 0; i < lay.w.a.size(); ++i) {
                double s = locals[0].layer[j].w.a[i];
                for (size_t p = 1; p < locals.size(); ++p)
                    s += locals[p].layer[j].w.a[i];
                lay.w.a[i] = s * invN;
            }
            for (size_t i = 0; i < lay.b.size(); ++i) {
                double s = locals[0].layer[j].b[i];
                for (size_t p = 1; p < locals.size(); ++p)
                    s += locals[p].layer[j].b[i];
                lay.b[i] = s * invN;
            }
            continue;
        }
        Ciphertext ws = locals[0].layer[j].w_ct->ct[0];
        for (size_t p = 1; p < locals.size(); ++p)
            ws = c.ev.add(ws, locals[p].layer[j].w_ct->ct[0]);
        lay.w_ct->ct[0] = c.refresh(c.ev.mult_scalar(ws, invN));
        if (!lay.bias_omitted) {
            Ciphertext bsum = locals[0].layer[j].b_ct->ct[0];
            for (size_t p = 1; p < locals.size(); ++p)
                bsum = c.ev.add(bsum, locals[p].layer[j].b_ct->ct[0]);
            lay.b_ct->ct[0] = c.refresh(c.ev.mult_scalar(bsum, invN));
        }
    }
}

// ---------- prediction ----------

nn::Vec predict_internal(Cohort& c, const FedModel& m, const nn::Vec& x,
                         const ActApprox& act) {
    if (!any_encrypted(m)) {
        auto t = nn::feedforward(m.arch, plain_params(m), x);
        return t.l.back();
    }
    const auto coeffs = act.sigmoid_coeffs();
    ForwardState f = run_forward(c, m, x, coeffs, act, false);
    const size_t L = m.arch.depth();
    if (f.rec[L].plain) return f.rec[L].l;
    const PackedVector& out = *f.rec[L].l_ct;
    auto vals = c.open(out.ct[0]);
    return pattern_read(vals, m.arch.widths[L],
                        out.layout == Layout::strided_sums, out.block);
}

nn::Vec predict_external(Cohort& c, const FedModel& m, const nn::Vec& x,
                         const ActApprox& act) {
    const auto coeffs = act.sigmoid_coeffs();
    ForwardState f = run_forward(c, m, x, coeffs, act, true);
    const size_t L = m.arch.depth();
    const PackedVector& out = *f.rec[L].l_ct;
    auto vals = c.open(out.ct[0]);
    return pattern_read(vals, m.arch.widths[L],
                        out.layout == Layout::strided_sums, out.block);
}

// ---------- global orchestration ----------

namespace {

ckks::ContextPtr context_for(const std::string& preset) {
    if (preset == "desk") return ckks::Context::desk();
    if (preset == "tiny") return ckks::Context::tiny();
    if (preset == "paper") return ckks::Context::paper();
    throw std::invalid_argument("unknown context preset: " + preset);
}

struct EvalResult {
    double accuracy = 0;
    double loss = 0;
};

EvalResult eval_params(const nn::ModelArch& arch, const nn::Params& p,
                       const data::Dataset& ds) {
    EvalResult r;
    if (ds.size() == 0) return r;
    size_t hit = 0;
    double loss = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
        auto t = nn::feedforward(arch, p, row_of(ds.x, i));
        const nn::Vec& out = t.l.back();
        if (nn::argmax(out) == ds.label(i)) hit++;
        loss += nn::mse_loss(out, row_of(ds.y, i));
    }
    r.accuracy = double(hit) / double(ds.size());
    r.loss = loss / double(ds.size());
    return r;
}

// metrics/checkpoint openings run outside the protocol: no traffic, and the
// operation counters are rolled back, with the opening tally kept separately
nn::Params eval_open(Cohort& c, const FedModel& m, size_t& eval_decrypts) {
    if (!any_encrypted(m)) return plain_params(m);
    net::Router* save = c.router;
    c.router = nullptr;
    PassCounters snap = c.counters;
    nn::Params p = decrypt_model(c, m);
    eval_decrypts += c.counters.decrypts - snap.decrypts;
    c.counters = snap;
    c.router = save;
    return p;
}

// schedule step: newly secret layers are encrypted from their plaintext
// state (validated schedules only ever grow, layers never leave mid-run)
void transition_model(Cohort& c, FedModel& m, const std::set<size_t>& now,
                      const ActApprox& act, bool omit_interior_bias) {
    for (size_t j = 1; j <= m.arch.depth(); ++j)
        if (m.layer[j].encrypted && now.count(j) == 0)
            throw std::logic_error("schedule releases a secret layer");
    m.part.secret = now;
    for (size_t j = 1; j <= m.arch.depth(); ++j)
        if (!m.layer[j].encrypted && now.count(j) != 0)
            encrypt_layer(c, m, j, act, omit_interior_bias);
}

double pass_compute_seconds(const Cohort& c, const PassCounters& delta,
                            size_t plain_passes) {
    const CostModel& cm = c.cost;
    const double s = c.cost_scale();
    return s * (double(delta.products) * cm.product_s +
                double(delta.ladders) * cm.ladder_s +
                double(delta.relayouts) * cm.relayout_s +
                double(delta.updates) * cm.update_s +
                double(delta.bootstraps) * cm.boot_share_s +
                double(delta.decrypts) * cm.partial_s) +
           double(plain_passes) * cm.plain_pass_s;
}

PassCounters counters_delta(const PassCounters& now, const PassCounters& then) {
    PassCounters d;
    d.products = now.products - then.products;
    d.ladders = now.ladders - then.ladders;
    d.relayouts = now.relayouts - then.relayouts;
    d.updates = now.updates - then.updates;
    d.bootstraps = now.bootstraps - then.bootstraps;
    d.decrypts = now.decrypts - then.decrypts;
    return d;
}

}  // namespace

RunOutput global_training(const GlobalRunConfig& cfg) {
    cfg.arch.validate();
    cfg.partition.validate(cfg.arch.depth());
    cfg.link.validate();
    cfg.train.validate();
    if (cfg.test.size()) cfg.test.validate();
    if (cfg.dp.enabled) cfg.dp.validate();
    if (cfg.parties < 1) throw std::invalid_argument("need at least one party");
    if (cfg.sgd.global_rounds < 1)
        throw std::invalid_argument("need at least one round");

    // does any round of the schedule encrypt anything?
    bool ever_secret = false;
    for (size_t g = 1; g <= cfg.sgd.global_rounds; ++g)
        if (!cfg.partition.secret_at(g).empty()) ever_secret = true;

    RunOutput out;
    {
        std::set<std::set<size_t>> seen;
        for (size_t g = 1; g <= cfg.sgd.global_rounds; ++g) {
            auto s = cfg.partition.secret_at(g);
            if (!seen.insert(s).second) continue;
            LayerPartition p;
            p.secret = s;
            for (auto& w : partition_warnings(p, cfg.arch.depth()))
                if (std::find(out.warnings.begin(), out.warnings.end(), w) ==
                    out.warnings.end())
                    out.warnings.push_back(w);
        }
    }

    ckks::ContextPtr cx = context_for(cfg.preset);
    net::Router router(kServer, cfg.link);
    for (int p = 0; p <= cfg.parties; ++p)
        router.register_endpoint(uint16_t(p));

    Cohort c(cx);
    c.parties = cfg.parties;
    if (ever_secret) {
        c = make_cohort(cx, cfg.parties, cfg.seed);
        c.router = &router;
        c.round = 0;
        // interactive keygen: every party contributes common-reference sums
        // of the same shape as the finished key ring
        const size_t kb = key_ring_bytes(c.keys);
        for (int p = 1; p <= cfg.parties; ++p) {
            charge(c, net::Category::keygen, uint16_t(p), kServer, kb,
                   {false, false, false, 0.0});
            charge(c, net::Category::keygen, kServer, uint16_t(p), kb,
                   {false, false, false, 0.0});
        }
    } else {
        c.router = &router;
    }

    auto parts = data::partition(cfg.train, size_t(cfg.parties),
                                 rng::derive(cfg.seed, {0x64617461ULL}));
    nn::Params p0 = nn::init_model(cfg.arch, nn::InitScheme::XavierUniform,
                                   rng::derive(cfg.seed, {0x696e6974ULL}));
    out.checkpoints.emplace_back(0, p0);

    LayerPartition round1;
    round1.secret = cfg.partition.secret_at(1);
    c.self = kServer;
    c.round = 1;
    FedModel global = encrypt_model(c, cfg.arch, p0, round1, cfg.act,
                                    cfg.omit_interior_bias);

    if (!cfg.out_dir.empty())
        std::filesystem::create_directories(cfg.out_dir);

    std::array<uint64_t, net::kCategories> prev_cat{};
    double prev_seconds = 0.0;
    nn::Params current = p0;

    for (size_t g = 1; g <= cfg.sgd.global_rounds; ++g) {
        c.round = uint32_t(g);
        c.self = kServer;
        auto now_secret = cfg.partition.secret_at(g);
        if (now_secret != global.part.secret)
            transition_model(c, global, now_secret, cfg.act,
                             cfg.omit_interior_bias);

        const size_t enc_b = global.encrypted_bytes();
        const size_t plain_b = global.plaintext_bytes();
        for (int p = 1; p <= cfg.parties; ++p) {
            if (plain_b)
                charge(c, net::Category::model_broadcast, kServer, uint16_t(p),
                       plain_b, {true, false, false, 0.0});
            if (enc_b)
                charge(c, net::Category::model_broadcast, kServer, uint16_t(p),
                       enc_b, {false, false, false, 0.0});
        }

        std::vector<FedModel> locals;
        locals.reserve(size_t(cfg.parties));
        for (int p = 1; p <= cfg.parties; ++p) {
            c.self = uint16_t(p);
            PassCounters snap = c.counters;
            FedModel local = global;
            local_training(c, local, parts[size_t(p - 1)], cfg.sgd, cfg.act,
                           cfg.dp, cfg.seed, p, g);
            const double comp = pass_compute_seconds(
                c, counters_delta(c.counters, snap),
                cfg.sgd.local_epochs * cfg.sgd.batch);
            const size_t up_plain = local.plaintext_bytes();
            const size_t up_enc = local.encrypted_bytes();
            if (up_plain)
                charge(c, net::Category::local_update, uint16_t(p), kServer,
                       up_plain, {true, false, false, comp});
            if (up_enc)
                charge(c, net::Category::local_update, uint16_t(p), kServer,
                       up_enc, {false, false, false, up_plain ? 0.0 : comp});
            locals.push_back(std::move(local));
        }

        if (cfg.inject_taint_fault && g == 1) {
            // deliberately mislabeled plaintext upload of secret-derived data
            size_t fb = 1024;
            for (size_t j = 1; j <= cfg.arch.depth(); ++j)
                if (global.part.is_secret(j)) {
                    fb = 8 * cfg.arch.widths[j - 1] * cfg.arch.widths[j];
                    break;
                }
            charge(c, net::Category::local_update, 1, kServer, fb,
                   {true, true, false, 0.0});
        }

        c.self = kServer;
        aggregate(c, global, locals);

        current = eval_open(c, global, out.eval_decrypts);
        EvalResult test_r = eval_params(cfg.arch, current, cfg.test);
        EvalResult train_r = eval_params(cfg.arch, current, cfg.train);

        auto cat = router.log().category_totals();
        double seconds = net::simulated_time(router.transcript(), cfg.link);
        nlohmann::json jm;
        jm["round"] = g;
        jm["test_accuracy"] = test_r.accuracy;
        jm["test_loss"] = test_r.loss;
        jm["train_accuracy"] = train_r.accuracy;
        jm["train_loss"] = train_r.loss;
        nlohmann::json jb;
        for (size_t k = 0; k < net::kCategories; ++k)
            jb[net::category_name(net::Category(k))] = cat[k] - prev_cat[k];
        jm["bytes"] = jb;
        jm["seconds"] = seconds - prev_seconds;
        jm["bootstraps"] = c.counters.bootstraps;
        jm["decrypts"] = c.counters.decrypts;
        jm["secret_layers"] = std::vector<size_t>(now_secret.begin(),
                                                  now_secret.end());
        out.metrics.push_back(jm.dump());
        prev_cat = cat;
        prev_seconds = seconds;

        if ((cfg.checkpoint_every && g % cfg.checkpoint_every == 0) ||
            g == cfg.sgd.global_rounds) {
            out.checkpoints.emplace_back(g, current);
            if (!cfg.out_dir.empty()) {
                char name[64];
                std::snprintf(name, sizeof name, "checkpoint_%04zu.bin", g);
                nn::save_checkpoint(cfg.out_dir + "/" + name, cfg.arch,
                                    current);
            }
        }
    }

    if (!cfg.out_dir.empty()) {
        FILE* f = std::fopen((cfg.out_dir + "/metrics.jsonl").c_str(), "w");
        if (f) {
            for (const auto& line : out.metrics)
                std::fprintf(f, "%s\n", line.c_str());
            std::fclose(f);
        }
    }

    out.params = current;
    out.traffic = router.log();
    out.transcript = router.transcript();
    out.bootstraps = c.counters.bootstraps;
    out.decrypts = c.counters.decrypts;
    out.simulated_seconds = net::simulated_time(out.transcript, cfg.link);
    return out;
}

// ---------- analytic traffic model ----------

PassPlan plan_pass(const nn::ModelArch& arch, const LayerPartition& part,
                   const ActApprox& act, int top_level) {
    const size_t L = arch.depth();
    PassPlan pl;
    auto refresh = [&](int& lv, int need) {
        if (need > top_level)
            throw std::runtime_error("context too shallow for the pass");
        if (lv < need) {
            pl.refresh_levels.push_back(lv);
            pl.ops.bootstraps++;
            lv = top_level;
        }
    };

    std::vector<int> l_lv(L + 1, -1), relay_lv(L + 1, -1);
    std::vector<bool> l_garb(L + 1, false), l_plain(L + 1, false);
    std::vector<int> dw_lv(L + 1, -1), db_lv(L + 1, -1);
    l_plain[0] = true;

    for (size_t j = 1; j <= L; ++j) {
        if (!part.is_secret(j)) {
            l_plain[j] = true;
            continue;
        }
        const bool sig = arch.acts[j - 1] == nn::Act::Sigmoid;
        const bool boundary = j < L && !part.is_secret(j + 1);
        const int lad = boundary ? 0 : act.ladder_levels(arch.acts[j - 1]);
        int u;
        if (l_plain[j - 1]) {
            u = top_level - 1;
        } else {
            refresh(l_lv[j - 1], (l_garb[j - 1] ? 1 : 0) + 2 + lad);
            relay_lv[j - 1] = l_lv[j - 1] - (l_garb[j - 1] ? 1 : 0);
            pl.ops.relayouts++;
            u = relay_lv[j - 1] - 1;
        }
        pl.ops.products++;
        u -= 1;  // residue mask / ladder normalization
        if (boundary) {
            pl.ops.decrypts++;
            pl.open_levels.push_back(u);
            l_plain[j] = true;
        } else if (sig) {
            pl.ops.ladders++;
            l_lv[j] = u - lad;
            l_garb[j] = true;
        } else {
            l_lv[j] = u;
        }
    }

    bool e_enc = false, e_garb = false;
    int e_lv = -1;
    if (part.is_secret(L)) {
        refresh(l_lv[L], arch.acts[L - 1] == nn::Act::Sigmoid ? 5 : 3);
        e_enc = true;
        e_lv = l_lv[L];
        e_garb = l_garb[L];
    }

    for (size_t j = L; j >= 1; --j) {
        const bool sec = part.is_secret(j);
        const bool sig = arch.acts[j - 1] == nn::Act::Sigmoid;
        if (e_enc && !sec) {
            pl.ops.decrypts++;
            pl.open_levels.push_back(e_lv);
            e_enc = false;
        }
        if (e_enc) {
            int d;
            bool d_garb;
            if (sig) {
                refresh(e_lv, 4);
                int& ls = j == L ? l_lv[L] : relay_lv[j];
                refresh(ls, 5);
                d = std::min(e_lv, ls - 1) - 1;
                d_garb = true;
            } else {
                refresh(e_lv, 3);
                d = e_lv;
                d_garb = e_garb;
            }
            db_lv[j] = d;
            pl.ops.relayouts++;
            const int dmat = d - (d_garb ? 1 : 0);
            const int rows = l_plain[j - 1] ? top_level : relay_lv[j - 1];
            pl.ops.products++;
            dw_lv[j] = std::min(rows, dmat) - 1;
            if (j > 1) {
                pl.ops.products++;
                e_lv = dmat - 1;
                e_garb = true;
            }
        } else if (sec) {
            if (j > 1 && part.is_secret(j - 1)) {
                pl.ops.products++;
                dw_lv[j] = relay_lv[j - 1] - 1;
            }
            if (j > 1) {
                pl.ops.products++;
                e_lv = top_level - 1;
                e_garb = true;
                e_enc = true;
            }
        }
    }

    for (size_t j = 1; j <= L; ++j) {
        if (dw_lv[j] >= 0) pl.update_levels.push_back(dw_lv[j] - 1);
        if (db_lv[j] >= 0) pl.update_levels.push_back(db_lv[j] - 1);
    }
    return pl;
}

TrafficEstimate estimate_round_bytes(const nn::ModelArch& arch,
                                     const LayerPartition& part,
                                     const ckks::Context& cx, int parties,
                                     const nn::SgdConfig& cfg,
                                     const ActApprox& act) {
    const size_t n = 2 * cx.slots();
    const int top = cx.top_level();
    const size_t H = net::Envelope::kHeaderBytes;
    const size_t L = arch.depth();
    const size_t P = uniform_block(arch);
    const double N = double(parties);

    // model payloads, mirroring the per-party broadcast/upload envelopes
    size_t enc_b = 0, plain_b = 0, enc_tensors = 0;
    for (size_t j = 1; j <= L; ++j) {
        const size_t r = arch.widths[j - 1], cdim = arch.widths[j];
        if (!part.is_secret(j)) {
            plain_b += 8 * (r * cdim + cdim);
            continue;
        }
        const bool col = orient_of(j) == Orientation::column;
        const size_t major = col ? cdim : r;
        const size_t minor2 = pack::next_pow2(col ? cdim : r);
        const size_t per_ct = std::min(minor2, cx.slots() / P);
        const size_t cts = (major + per_ct - 1) / per_ct;
        enc_b += (cts + 1) * ct_bytes(top, n);  // weights + bias
        enc_tensors += 2;
    }
    TrafficEstimate t;
    double per_party = 0;
    if (plain_b) per_party += double(H + plain_b);
    if (enc_b) per_party += double(H + enc_b);
    t.broadcast = N * per_party;
    t.upload = N * per_party;

    if (part.secret.empty()) return t;

    // collective flows as charged: a party-held ciphertext transits the hub
    // to N endpoints, every other party answers through the hub
    auto boot_flow = [&](int lv, bool server) {
        const double ctb = double(ct_bytes(lv, n) + H);
        const double shb = double(share_bytes(lv, top, n) + H);
        return server ? N * (ctb + shb) : N * ctb + 2.0 * (N - 1.0) * shb;
    };
    auto open_flow = [&](int lv) {
        const double ctb = double(ct_bytes(lv, n) + H);
        const double pb = double(partial_bytes(lv, n) + H);
        return N * ctb + 2.0 * (N - 1.0) * pb;
    };

    PassPlan pl = plan_pass(arch, part, act, top);
    const double passes = N * double(cfg.local_epochs) * double(cfg.batch);
    for (int lv : pl.refresh_levels) t.bootstrap += passes * boot_flow(lv, false);
    for (int lv : pl.open_levels) t.decrypt += passes * open_flow(lv);

    const double updates = N * double(cfg.local_epochs);
    for (int lv : pl.update_levels)
        t.bootstrap += updates * boot_flow(lv, false);
    if (cfg.lambda != 0.0)
        t.bootstrap += updates * double(enc_tensors / 2) *
                       boot_flow(top - 1, false);

    // aggregation refresh per encrypted tensor, held by the server
    t.bootstrap += double(enc_tensors) * boot_flow(top - 1, true);
    return t;
}

}  // namespace pefl::fed
