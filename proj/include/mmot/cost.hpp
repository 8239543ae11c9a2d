#pragma once

// Cost-function catalog.  All families evaluate lazily at tuples of grid
// points; values are extended reals (+inf at Coulomb/log coincidences, never
// NaN).  Minimization convention throughout: the determinant-radial family is
// the negated product, so every solver path minimizes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mmot/grid.hpp"

namespace mmot {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class CostFamily {
    coulomb,             // sum_{i<j} 1/|xi-xj|^s
    log_repulsive,       // sum_{i<j} -log|xi-xj|
    harmonic_sum,        // |sum_i xi|^2
    harmonic_pairwise,   // sum_{i<j} -|xi-xj|^2
    penalized_harmonic,  // |sum_i xi|^2 + tau/|x1-x2|
    carlier_oscillation, // sum_{i<j} (xi^2-xj^2)^2
    det_radial_product,  // -prod_i xi   (radial determinant, negated)
};

struct CostSpec {
    CostFamily family = CostFamily::coulomb;
    std::size_t n = 2;    // marginal count
    double s = 1.0;       // coulomb exponent, s >= 1
    double tau = 0.1;     // penalty coefficient (penalized_harmonic)
};

// True when the family decomposes as a sum of two-point terms.
inline bool pair_decomposable(CostFamily f) {
    switch (f) {
        case CostFamily::coulomb:
        case CostFamily::log_repulsive:
        case CostFamily::harmonic_pairwise:
        case CostFamily::carlier_oscillation:
            return true;
        default:
            return false;
    }
}

// Symmetric under permutation of the arguments?  (The penalty couples the
// first two arguments only.)
inline bool permutation_symmetric(CostFamily f) {
    return f != CostFamily::penalized_harmonic;
}

inline double pair_term(const CostSpec& spec, double x, double y) {
    const double d = std::abs(x - y);
    switch (spec.family) {
        case CostFamily::coulomb:
            if (d == 0.0) return kInf;
            return spec.s == 1.0 ? 1.0 / d : 1.0 / std::pow(d, spec.s);
        case CostFamily::log_repulsive:
            if (d == 0.0) return kInf;
            return -std::log(d);
        case CostFamily::harmonic_pairwise:
            return -d * d;
        case CostFamily::carlier_oscillation: {
            const double t = x * x - y * y;
            return t * t;
        }
        default:
            throw std::logic_error("pair_term: family is not pair-decomposable");
    }
}

// Reference evaluator.  Symmetric families are folded in sorted-argument
// order so permutations of the input are bit-identical.
inline double eval_cost(const CostSpec& spec, std::span<const double> pts) {
    if (pts.size() != spec.n)
        throw std::invalid_argument("eval_cost: wrong arity");
    std::array<double, 8> buf;
    std::vector<double> big;
    std::span<double> x;
    if (spec.n <= buf.size()) {
        std::copy(pts.begin(), pts.end(), buf.begin());
        x = std::span<double>(buf.data(), spec.n);
    } else {
        big.assign(pts.begin(), pts.end());
        x = big;
    }
    if (permutation_symmetric(spec.family))
        std::sort(x.begin(), x.end());

    switch (spec.family) {
        case CostFamily::harmonic_sum:
        case CostFamily::penalized_harmonic: {
            double s = 0.0;
            for (double v : x) s += v;
            double c = s * s;
            if (spec.family == CostFamily::penalized_harmonic) {
                const double d = std::abs(pts[0] - pts[1]);
                c += (d == 0.0) ? kInf : spec.tau / d;
            }
            return c;
        }
        case CostFamily::det_radial_product: {
            double p = 1.0;
            for (double v : x) p *= v;
            return -p;
        }
        default: {
            double c = 0.0;
            for (std::size_t i = 0; i < spec.n; ++i)
                for (std::size_t j = i + 1; j < spec.n; ++j)
                    c += pair_term(spec, x[i], x[j]);
            return c;
        }
    }
}

// Offset K relating the two repulsive-harmonic forms: for every coupling
// with the given marginals,
//   integral of sum_{i<j} -|xi-xj|^2  =  integral of |sum xi|^2  -  K,
// with K = n * sum_i (second moment of mu_i).
inline double pairwise_sum_offset(const std::vector<DiscreteMeasure>& marginals) {
    double k = 0.0;
    for (const auto& mu : marginals) k += mu.second_moment();
    return static_cast<double>(marginals.size()) * k;
}

// Max finite |cost| over a coarse subsample of the grid's multi-indices.
// The subsample takes up to nine evenly spaced cell edges per axis
// (endpoints included), so coarse grids are enumerated exactly.
inline double cost_scale(const CostSpec& spec, const Grid1D& grid) {
    const std::size_t q = std::min<std::size_t>(grid.m, 8);
    std::vector<double> pts(q + 1);
    for (std::size_t i = 0; i <= q; ++i)
        pts[i] = grid.lo + (grid.hi - grid.lo) * static_cast<double>(i) / static_cast<double>(q);
    std::vector<std::size_t> idx(spec.n, 0);
    std::vector<double> x(spec.n);
    double best = 0.0;
    for (;;) {
        for (std::size_t i = 0; i < spec.n; ++i) x[i] = pts[idx[i]];
        const double c = std::abs(eval_cost(spec, x));
        if (std::isfinite(c) && c > best) best = c;
        std::size_t l = 0;
        while (l < spec.n && ++idx[l] > q) idx[l++] = 0;
        if (l == spec.n) break;
    }
    return best;
}

}  // namespace mmot
