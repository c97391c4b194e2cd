#include "pefl/ckks/chebyshev.hpp"

#include <cmath>
#include <stdexcept>

namespace pefl::ckks {

std::vector<double> chebyshev_fit(const std::function<double(double)>& f,
                                  double a, double b, int degree) {
    if (!(a < b) || degree < 0) throw std::invalid_argument("bad fit range");
    const int m = degree + 1;
    std::vector<double> fv(m);
    for (int k = 0; k < m; ++k) {
        double t = std::cos(M_PI * (k + 0.5) / m);
        double x = 0.5 * (b - a) * (t + 1.0) + a;
        fv[k] = f(x);
    }
    std::vector<double> c(m);
    for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int k = 0; k < m; ++k)
            s += fv[k] * std::cos(M_PI * j * (k + 0.5) / m);
        c[j] = 2.0 * s / m;
    }
    return c;
}

double clenshaw_eval(const std::vector<double>& coeffs, double a, double b,
                     double x) {
    const double t = (2.0 * x - a - b) / (b - a);
    const double t2 = 2.0 * t;
    double d1 = 0.0, d2 = 0.0;
    for (size_t j = coeffs.size() - 1; j >= 1; --j) {
        double sv = d1;
        d1 = t2 * d1 - d2 + coeffs[j];
        d2 = sv;
    }
    return t * d1 - d2 + 0.5 * coeffs[0];
}

std::vector<double> chebyshev_to_monomial(const std::vector<double>& coeffs) {
    const int m = int(coeffs.size());
    std::vector<std::vector<double>> T(m);
    T[0] = {1.0};
    if (m > 1) T[1] = {0.0, 1.0};
    for (int k = 2; k < m; ++k) {
        T[k].assign(k + 1, 0.0);
        for (int i = 0; i <= k - 1; ++i) T[k][i + 1] += 2.0 * T[k - 1][i];
        for (int i = 0; i < k - 1; ++i) T[k][i] -= T[k - 2][i];
    }
    std::vector<double> mono(m, 0.0);
    for (int k = 0; k < m; ++k) {
        double w = (k == 0) ? 0.5 * coeffs[0] : coeffs[k];
        for (int i = 0; i <= k; ++i) mono[i] += w * T[k][i];
    }
    return mono;
}

namespace {

// coef * power brought to (target_scale, target_level) exactly: one plain
// mult at target_level+1 with the constant's scale chosen so the following
// rescale lands on target_scale.
Ciphertext scaled_term(const Evaluator& ev, const Ciphertext& power,
                       double coef, double target_scale, int target_level) {
    const Context& cx = ev.ctx();
    Ciphertext u = power;
    ev.mod_down_to(u, target_level + 1);
    double q = double(cx.prime(target_level + 1).q);
    Plaintext c = encode_constant(cx, coef, q * target_scale / u.scale,
                                  target_level + 1);
    Ciphertext r = ev.mult_plain(u, c);
    ev.rescale(r);
    r.scale = target_scale;  // equal to within 2^-52; pin against drift
    return r;
}

// Chebyshev-basis division: rewrites p as the remainder of p / T_m and
// returns the quotient, using T_i*T_m = (T_{i+m} + T_{|i-m|})/2. Needs
// deg p <= 2m so every cross term lands in the remainder.
std::vector<double> cheb_divmod(std::vector<double>& p, int m) {
    const int d = int(p.size()) - 1;
    std::vector<double> q(d - m + 1, 0.0);
    for (int i = d; i > m; --i) {
        q[i - m] = 2.0 * p[i];
        p[2 * m - i] -= p[i];
        p[i] = 0.0;
    }
    q[0] = p[m];
    p.resize(m);
    return q;
}

}  // namespace

// Baby-step/giant-step ladder in the Chebyshev basis itself: blocks of
// degree <= 3 over {T1,T2,T3} are combined with the giants T4 and T8.
// Staying in this basis keeps every plaintext constant at the size of the
// interpolation coefficients (the monomial basis blows them up by 4096x for
// steep targets, overflowing the encoder at large scales). Degree 13 costs
// 5 levels; every intermediate is pinned to the input scale, absorbing the
// ~2^-42 relative slack between the scale and the rescaling primes.
Ciphertext eval_chebyshev_normalized(const Evaluator& ev,
                                     const Ciphertext& ct_t,
                                     const std::vector<double>& coeffs,
                                     const KswitchKey& rlk) {
    const Context& cx = ev.ctx();
    std::vector<double> p(coeffs);
    if (!p.empty()) p[0] *= 0.5;  // fold the c0/2 convention
    double cmax = 0.0;
    for (double v : p) cmax = std::max(cmax, std::abs(v));
    while (p.size() > 2 && std::abs(p.back()) < 1e-13 * cmax) p.pop_back();
    const int d = int(p.size()) - 1;
    if (d > 15)
        throw std::invalid_argument("quartic ladder supports degree <= 15");
    if (d < 1) throw std::invalid_argument("degree too small");
    const int need = d <= 3 ? d : (d <= 11 ? 4 : 5);
    if (ct_t.level() < need)
        throw std::invalid_argument("insufficient levels for this degree");

    const double S = ct_t.scale;
    auto snap = [&](double v) { return std::abs(v) < 1e-13 * cmax ? 0.0 : v; };

    const Ciphertext& T1 = ct_t;
    Ciphertext T2, T3, T4, T8;
    auto double_step = [&](const Ciphertext& x) {  // T_{2k} = 2*T_k^2 - 1
        Ciphertext m = ev.mult(x, x, rlk);
        m = ev.add(m, m);
        m.scale = S;
        return ev.sub_plain(m, encode_constant(cx, 1.0, S, m.level()));
    };
    if (d >= 2) T2 = double_step(T1);
    if (d >= 3) {  // T3 = 2*T2*T1 - T1
        Ciphertext m = ev.mult(T2, T1, rlk);
        m = ev.add(m, m);
        m.scale = S;
        Ciphertext t1d = T1;
        ev.mod_down_to(t1d, m.level());
        T3 = ev.sub(m, t1d);
    }
    if (d >= 4) T4 = double_step(T2);
    if (d >= 8) T8 = double_step(T4);

    const Ciphertext* basis[3] = {&T1, d >= 2 ? &T2 : nullptr,
                                  d >= 3 ? &T3 : nullptr};
    const int lb =
        (d >= 3 ? T3.level() : (d >= 2 ? T2.level() : T1.level())) - 1;

    // a0 + a1*T1 + a2*T2 + a3*T3 at (lb, S)
    auto block = [&](const std::vector<double>& a) {
        Ciphertext acc;
        bool have = false;
        for (size_t k = 1; k < a.size() && k <= 3; ++k) {
            double cf = snap(a[k]);
            if (cf == 0.0) continue;
            Ciphertext term = scaled_term(ev, *basis[k - 1], cf, S, lb);
            acc = have ? ev.add(acc, term) : std::move(term);
            have = true;
        }
        if (!have) acc = scaled_term(ev, T1, 0.0, S, lb);
        return ev.add_plain(acc, encode_constant(cx, a.empty() ? 0.0 : a[0],
                                                 S, acc.level()));
    };
    auto mult_pin = [&](const Ciphertext& x, const Ciphertext& y) {
        Ciphertext r = ev.mult(x, y, rlk);
        r.scale = S;
        return r;
    };

    if (d <= 3) return block(p);
    if (d <= 7) {
        auto q4 = cheb_divmod(p, 4);
        return ev.add(mult_pin(T4, block(q4)), block(p));
    }
    auto q8 = cheb_divmod(p, 8);  // p becomes the degree <= 7 remainder
    auto q4 = cheb_divmod(p, 4);
    Ciphertext hi;
    if (q8.size() <= 4) {
        hi = block(q8);
    } else {
        auto q84 = cheb_divmod(q8, 4);
        hi = ev.add(mult_pin(T4, block(q84)), block(q8));
    }
    Ciphertext w = mult_pin(T8, hi);
    Ciphertext lo = ev.add(mult_pin(T4, block(q4)), block(p));
    return ev.add(w, lo);
}

Ciphertext eval_chebyshev(const Evaluator& ev, const Ciphertext& ct,
                          const std::vector<double>& coeffs, double a, double b,
                          const KswitchKey& rlk) {
    const Context& cx = ev.ctx();
    Ciphertext t = ev.mult_scalar(ct, 2.0 / (b - a));
    if (a + b != 0.0) {
        Plaintext off =
            encode_constant(cx, -(a + b) / (b - a), t.scale, t.level());
        t = ev.add_plain(t, off);
    }
    return eval_chebyshev_normalized(ev, t, coeffs, rlk);
}

}  // namespace pefl::ckks
