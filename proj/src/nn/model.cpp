#include "pefl/nn/model.hpp"

#include <cmath>

#include "pefl/util/rng.hpp"

namespace pefl::nn {

void ModelArch::validate() const {
    if (widths.size() < 2) throw std::invalid_argument("arch needs >= 1 layer");
    for (size_t w : widths)
        if (w == 0) throw std::invalid_argument("zero layer width");
    if (acts.size() != widths.size() - 1)
        throw std::invalid_argument("activation list length != depth");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double sigmoid_prime(double x) {
    double s = sigmoid(x);
    return s * (1.0 - s);
}

double act_eval(Act a, double x) {
    return a == Act::Sigmoid ? sigmoid(x) : x;
}

double act_prime(Act a, double x) {
    return a == Act::Sigmoid ? sigmoid_prime(x) : 1.0;
}

Params init_model(const ModelArch& arch, InitScheme scheme, uint64_t seed) {
    arch.validate();
    if (scheme != InitScheme::XavierUniform)
        throw std::invalid_argument("unknown init scheme");
    const size_t L = arch.depth();
    Params p(L + 1);
    rng::Stream rs(seed, {0x696e6974ULL});  // init substream
    for (size_t j = 1; j <= L; ++j) {
        size_t fan_in = arch.widths[j - 1], fan_out = arch.widths[j];
        double bound = std::sqrt(6.0 / double(fan_in + fan_out));
        p[j].w = Mat(fan_in, fan_out);
        for (double& v : p[j].w.a) v = rs.uniform(-bound, bound);
        p[j].b.assign(fan_out, 0.0);
    }
    return p;
}

ForwardTrace feedforward(const ModelArch& arch, const Params& p, const Vec& x) {
    const size_t L = arch.depth();
    if (x.size() != arch.widths[0])
        throw std::invalid_argument("input dim mismatch");
    ForwardTrace t;
    t.u.resize(L + 1);
    t.l.resize(L + 1);
    t.l[0] = x;
    for (size_t j = 1; j <= L; ++j) {
        const Mat& w = p[j].w;
        const Vec& in = t.l[j - 1];
        if (in.size() != w.rows || p[j].b.size() != w.cols)
            throw std::invalid_argument("layer shape mismatch");
        Vec u(w.cols);
        for (size_t c = 0; c < w.cols; ++c) {
            double s = 0.0;
            for (size_t r = 0; r < w.rows; ++r) s += in[r] * w(r, c);
            u[c] = s + p[j].b[c];
        }
        Vec l(w.cols);
        for (size_t c = 0; c < w.cols; ++c)
            l[c] = act_eval(arch.acts[j - 1], u[c]);
        t.u[j] = std::move(u);
        t.l[j] = std::move(l);
    }
    return t;
}

GradientSet backprop(const ModelArch& arch, const Params& p,
                     const ForwardTrace& t, const Vec& y) {
    const size_t L = arch.depth();
    if (y.size() != arch.widths[L])
        throw std::invalid_argument("label dim mismatch");
    GradientSet g;
    g.dw.resize(L + 1);
    g.db.resize(L + 1);
    g.e.resize(L + 1);

    // e_L = l_L - y under the 1/2-MSE convention; sgd_update subtracts.
    g.e[L].resize(y.size());
    for (size_t i = 0; i < y.size(); ++i) g.e[L][i] = t.l[L][i] - y[i];

    for (size_t j = L; j >= 1; --j) {
        const Mat& w = p[j].w;
        const Vec& e = g.e[j];
        Vec d(w.cols);  // e_j ⊙ φ'_j(u_j)
        for (size_t c = 0; c < w.cols; ++c)
            d[c] = e[c] * act_prime(arch.acts[j - 1], t.u[j][c]);
        g.db[j] = d;
        g.dw[j] = Mat(w.rows, w.cols);
        const Vec& in = t.l[j - 1];
        for (size_t r = 0; r < w.rows; ++r)
            for (size_t c = 0; c < w.cols; ++c) g.dw[j](r, c) = in[r] * d[c];
        if (j > 1) {
            Vec eprev(w.rows);
            for (size_t r = 0; r < w.rows; ++r) {
                double s = 0.0;
                for (size_t c = 0; c < w.cols; ++c) s += d[c] * w(r, c);
                eprev[r] = s;
            }
            g.e[j - 1] = std::move(eprev);
        }
    }
    return g;
}

double mse_loss(const Vec& pred, const Vec& y) {
    if (pred.size() != y.size())
        throw std::invalid_argument("loss length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - y[i];
        s += d * d;
    }
    return 0.5 * s;
}

void sgd_update(Params& p, const GradientSet& avg, const SgdConfig& cfg) {
    const double shrink = 1.0 - cfg.eta * cfg.lambda / double(cfg.batch);
    for (size_t j = 1; j < p.size(); ++j) {
        Mat& w = p[j].w;
        const Mat& dw = avg.dw[j];
        if (dw.rows != w.rows || dw.cols != w.cols)
            throw std::invalid_argument("gradient shape mismatch");
        for (size_t i = 0; i < w.a.size(); ++i)
            w.a[i] = shrink * w.a[i] - cfg.eta * dw.a[i];
        for (size_t i = 0; i < p[j].b.size(); ++i)
            p[j].b[i] -= cfg.eta * avg.db[j][i];
    }
}

GradientSet zero_grads(const ModelArch& arch) {
    const size_t L = arch.depth();
    GradientSet g;
    g.dw.resize(L + 1);
    g.db.resize(L + 1);
    g.e.resize(L + 1);
    for (size_t j = 1; j <= L; ++j) {
        g.dw[j] = Mat(arch.widths[j - 1], arch.widths[j]);
        g.db[j].assign(arch.widths[j], 0.0);
        g.e[j].assign(arch.widths[j], 0.0);
    }
    return g;
}

void accumulate(GradientSet& acc, const GradientSet& g) {
    for (size_t j = 1; j < acc.dw.size(); ++j) {
        for (size_t i = 0; i < acc.dw[j].a.size(); ++i)
            acc.dw[j].a[i] += g.dw[j].a[i];
        for (size_t i = 0; i < acc.db[j].size(); ++i)
            acc.db[j][i] += g.db[j][i];
        for (size_t i = 0; i < acc.e[j].size(); ++i) acc.e[j][i] += g.e[j][i];
    }
}

void scale(GradientSet& g, double s) {
    for (size_t j = 1; j < g.dw.size(); ++j) {
        for (double& v : g.dw[j].a) v *= s;
        for (double& v : g.db[j]) v *= s;
        for (double& v : g.e[j]) v *= s;
    }
}

size_t argmax(const Vec& v) {
    size_t k = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[k]) k = i;
    return k;
}

Vec one_hot(size_t k, size_t n) {
    Vec y(n, 0.0);
    y[k] = 1.0;
    return y;
}

}  // namespace pefl::nn
