#pragma once

// Plaintext dense-network engine. Every encrypted computation in the rest of
// the library is checked against this module, so evaluation order is fixed:
// dot products accumulate in index order and nothing here may reorder
// floating-point operations.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pefl::nn {

using Vec = std::vector<double>;

struct Mat {
    size_t rows = 0, cols = 0;
    std::vector<double> a;  // row-major

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    double& operator()(size_t r, size_t c) { return a[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return a[r * cols + c]; }
};

enum class Act : uint8_t { Sigmoid = 0, Identity = 1 };

struct ModelArch {
    // widths[0] = input dim, widths[L] = class count.
    std::vector<size_t> widths;
    std::vector<Act> acts;  // one per layer, acts[j-1] for layer j

    size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
    void validate() const;

    static ModelArch mlp(std::vector<size_t> w, Act act = Act::Sigmoid) {
        ModelArch m;
        m.widths = std::move(w);
        m.acts.assign(m.widths.size() - 1, act);
        m.validate();
        return m;
    }
};

struct LayerParams {
    Mat w;  // d_{j-1} x d_j
    Vec b;  // d_j
};

using Params = std::vector<LayerParams>;  // [0] unused; params[j] = layer j

// u[0]/l[0]: l[0] is the input, u[0] unused. Indices match layer numbers.
struct ForwardTrace {
    std::vector<Vec> u;
    std::vector<Vec> l;
};

struct GradientSet {
    std::vector<Mat> dw;  // [0] unused
    std::vector<Vec> db;
    std::vector<Vec> e;
};

struct SgdConfig {
    double eta = 0.1;       // learning rate
    size_t batch = 1;       // B
    double lambda = 0.0;    // L2 weight decay
    size_t local_epochs = 1;
    size_t global_rounds = 1;
    uint64_t seed = 0;
};

enum class InitScheme { XavierUniform };

double sigmoid(double x);
double sigmoid_prime(double x);
double act_eval(Act a, double x);
double act_prime(Act a, double x);

Params init_model(const ModelArch& arch, InitScheme scheme, uint64_t seed);
ForwardTrace feedforward(const ModelArch& arch, const Params& p, const Vec& x);
GradientSet backprop(const ModelArch& arch, const Params& p,
                     const ForwardTrace& t, const Vec& y);
double mse_loss(const Vec& pred, const Vec& y);

// w <- (1 - eta*lambda/B) w - eta*dw ; b <- b - eta*db. grads batch-averaged.
void sgd_update(Params& p, const GradientSet& avg, const SgdConfig& cfg);

// Gradient accumulation helpers for minibatching.
GradientSet zero_grads(const ModelArch& arch);
void accumulate(GradientSet& acc, const GradientSet& g);
void scale(GradientSet& g, double s);

size_t argmax(const Vec& v);
Vec one_hot(size_t k, size_t n);

}  // namespace pefl::nn
