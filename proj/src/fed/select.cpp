#include "pefl/fed/select.hpp"

#include <algorithm>
#include <stdexcept>

namespace pefl::fed {

void AttackCurve::validate() const {
    if (epochs.size() != acc.size())
        throw std::invalid_argument("curve epochs and rows disagree");
    if (acc.empty()) throw std::invalid_argument("empty attack curve");
    const size_t d = acc[0].size();
    if (d == 0) throw std::invalid_argument("attack curve has no layers");
    for (const auto& row : acc)
        if (row.size() != d)
            throw std::invalid_argument("ragged attack curve");
    for (size_t e = 1; e < epochs.size(); ++e)
        if (epochs[e] <= epochs[e - 1])
            throw std::invalid_argument("curve epochs not ascending");
}

std::set<size_t> minimal_suffix(const std::vector<double>& layer_acc,
                                double tau) {
    size_t first = 0;  // 1-based shallowest offender, 0 = none
    for (size_t j = 1; j <= layer_acc.size(); ++j)
        if (layer_acc[j - 1] > tau) {
            first = j;
            break;
        }
    std::set<size_t> s;
    if (first == 0) return s;
    // everything from the shallowest offender to the output rides along
    for (size_t j = first; j <= layer_acc.size(); ++j) s.insert(j);
    return s;
}

SelectResult select_secret_layers(const std::vector<AttackCurve>& party_curves,
                                  const std::vector<double>& tau,
                                  size_t global_rounds, double baseline) {
    if (party_curves.empty())
        throw std::invalid_argument("no attack curves");
    if (tau.size() != party_curves.size())
        throw std::invalid_argument("one tolerance per party required");
    for (double t : tau)
        if (t < 0.5 || t > 1.0)
            throw std::invalid_argument("tolerance outside [0.5, 1]");
    if (global_rounds == 0)
        throw std::invalid_argument("need at least one epoch");
    const size_t depth = party_curves[0].depth();
    for (const auto& c : party_curves) {
        c.validate();
        if (c.depth() != depth)
            throw std::invalid_argument("curve depths disagree");
    }

    SelectResult out;
    const double tmin = *std::min_element(tau.begin(), tau.end());
    if (baseline > tmin) {
        // even a fully encrypted model leaks above the tolerance
        out.infeasible = true;
        std::set<size_t> all;
        for (size_t j = 1; j <= depth; ++j) all.insert(j);
        out.schedule.secret = all;
        out.schedule.schedule.assign(global_rounds, all);
        return out;
    }

    out.schedule.schedule.assign(global_rounds, {});
    for (size_t p = 0; p < party_curves.size(); ++p) {
        const AttackCurve& c = party_curves[p];
        std::set<size_t> held;  // monotone: layers never leave
        size_t e = 0;
        for (size_t g = 1; g <= global_rounds; ++g) {
            while (e + 1 < c.epochs.size() && c.epochs[e + 1] <= g) ++e;
            if (c.epochs[e] <= g) {
                auto s = minimal_suffix(c.acc[e], tau[p]);
                held.insert(s.begin(), s.end());
            }
            out.schedule.schedule[g - 1].insert(held.begin(), held.end());
        }
    }
    out.schedule.secret = out.schedule.schedule.back();
    out.schedule.validate(depth);
    return out;
}

}  // namespace pefl::fed
