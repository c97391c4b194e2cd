#pragma once

// Chebyshev interpolation and its encrypted evaluation. Convention: the
// interpolant is p(t) = c_0/2 + sum_{k>=1} c_k T_k(t) on t in [-1,1], with
// t = (2x - a - b)/(b - a). Encrypted evaluation runs baby-step/giant-step
// in the Chebyshev basis itself (degree d costs d levels for d <= 3, 4 for
// d <= 11, 5 for d <= 15; +1 when the affine normalization is homomorphic).

#include <functional>

#include "pefl/ckks/evaluator.hpp"

namespace pefl::ckks {

std::vector<double> chebyshev_fit(const std::function<double(double)>& f,
                                  double a, double b, int degree);

// Plaintext Clenshaw recurrence (reference oracle for the encrypted path).
double clenshaw_eval(const std::vector<double>& coeffs, double a, double b,
                     double x);

// Monomial coefficients in t of c_0/2 + sum c_k T_k.
std::vector<double> chebyshev_to_monomial(const std::vector<double>& coeffs);

// Input ct holds x in [a,b]; performs the affine normalization homomorphically.
Ciphertext eval_chebyshev(const Evaluator& eval, const Ciphertext& ct,
                          const std::vector<double>& coeffs, double a, double b,
                          const KswitchKey& rlk);

// Input ct already holds t in [-1,1] (normalization folded upstream).
Ciphertext eval_chebyshev_normalized(const Evaluator& eval,
                                     const Ciphertext& ct_t,
                                     const std::vector<double>& coeffs,
                                     const KswitchKey& rlk);

}  // namespace pefl::ckks
