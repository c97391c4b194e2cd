#include "pefl/dp/dp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pefl::dp {

namespace {

double median_abs(std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("empty gradient history");
    for (double& x : v) x = std::abs(x);
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + ptrdiff_t(mid), v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double hi = v[mid];
    std::nth_element(v.begin(), v.begin() + ptrdiff_t(mid) - 1,
                     v.begin() + ptrdiff_t(mid));
    return 0.5 * (v[mid - 1] + hi);
}

double clip(double x, double g) { return std::clamp(x, -g, g); }

}  // namespace

double DpConfig::clip_w(size_t layer) const {
    auto it = gamma_w.find(layer);
    return it == gamma_w.end() ? gamma : it->second;
}

double DpConfig::clip_b(size_t layer) const {
    auto it = gamma_b.find(layer);
    return it == gamma_b.end() ? gamma : it->second;
}

void DpConfig::validate() const {
    if (!enabled) return;
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be > 0");
    auto check = [](double g) {
        if (!(g > 0) || !std::isfinite(g))
            throw std::invalid_argument("clip bound must be finite positive");
    };
    check(gamma);
    for (const auto& [l, g] : gamma_w) check(g);
    for (const auto& [l, g] : gamma_b) check(g);
}

size_t count_exposed(const fed::LayerPartition& part,
                     const nn::ModelArch& arch) {
    size_t c = 0;
    for (size_t j = 1; j <= arch.depth(); ++j)
        if (!part.is_secret(j))
            c += arch.widths[j - 1] * arch.widths[j] + arch.widths[j];
    return c;
}

ClipBounds estimate_clip_bounds(const std::vector<nn::GradientSet>& history,
                                const nn::ModelArch& arch) {
    if (history.empty()) throw std::invalid_argument("empty gradient history");
    const size_t L = arch.depth();
    ClipBounds out;
    out.w.assign(L + 1, 0.0);
    out.b.assign(L + 1, 0.0);
    for (size_t j = 1; j <= L; ++j) {
        std::vector<double> ws, bs;
        for (const nn::GradientSet& g : history) {
            ws.insert(ws.end(), g.dw[j].a.begin(), g.dw[j].a.end());
            bs.insert(bs.end(), g.db[j].begin(), g.db[j].end());
        }
        out.w[j] = median_abs(ws);
        out.b[j] = median_abs(bs);
    }
    return out;
}

double laplace_scale(size_t exposed_count, double gamma, double epsilon) {
    return 2.0 * double(exposed_count) * gamma / epsilon;
}

void perturb_exposed_gradients(nn::GradientSet& grads,
                               const fed::LayerPartition& part,
                               const nn::ModelArch& arch, const DpConfig& cfg,
                               rng::Stream& rs) {
    if (!cfg.enabled) return;
    cfg.validate();
    const size_t c = count_exposed(part, arch);
    if (c == 0) return;
    for (size_t j = 1; j <= arch.depth(); ++j) {
        if (part.is_secret(j)) continue;  // secret layers pass untouched
        const double gw = cfg.clip_w(j), gb = cfg.clip_b(j);
        const double bw = laplace_scale(c, gw, cfg.epsilon);
        const double bb = laplace_scale(c, gb, cfg.epsilon);
        for (double& x : grads.dw[j].a)
            x = clip(x, gw) + rs.laplace(0.0, bw);
        for (double& x : grads.db[j])
            x = clip(x, gb) + rs.laplace(0.0, bb);
    }
}

}  // namespace pefl::dp
