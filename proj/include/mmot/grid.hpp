#pragma once

// Uniform 1D grids, discrete probability measures on them, and the
// CDF/quantile machinery used by the closed-form transport maps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmot {

struct Grid1D {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t m = 0;
    double width = 0.0;            // (hi - lo) / m
    std::vector<double> centers;   // centers[j] = lo + (j + 1/2) * width
};

inline Grid1D build_grid(double lo, double hi, std::size_t m) {
    if (!std::isfinite(lo) || !std::isfinite(hi))
        throw std::invalid_argument("build_grid: non-finite bounds");
    if (!(hi > lo))
        throw std::invalid_argument("build_grid: hi must exceed lo");
    if (m == 0)
        throw std::invalid_argument("build_grid: zero cells");
    Grid1D g;
    g.lo = lo;
    g.hi = hi;
    g.m = m;
    g.width = (hi - lo) / static_cast<double>(m);
    g.centers.resize(m);
    for (std::size_t j = 0; j < m; ++j)
        g.centers[j] = lo + (static_cast<double>(j) + 0.5) * g.width;
    return g;
}

// Nonnegative weights summing to 1 (renormalized at construction).
struct DiscreteMeasure {
    Grid1D grid;
    std::vector<double> weights;

    double barycenter() const {
        double s = 0.0;
        for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * grid.centers[j];
        return s;
    }
    double second_moment() const {
        double s = 0.0;
        for (std::size_t j = 0; j < weights.size(); ++j)
            s += weights[j] * grid.centers[j] * grid.centers[j];
        return s;
    }
};

inline DiscreteMeasure measure_from_weights(const Grid1D& grid, std::vector<double> w) {
    if (w.size() != grid.m)
        throw std::invalid_argument("measure: weight count != grid size");
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0))
            throw std::invalid_argument("measure: negative or NaN weight");
        total += v;
    }
    if (!(total > 0.0))
        throw std::invalid_argument("measure: density vanishes on the whole grid");
    for (double& v : w) v /= total;
    return DiscreteMeasure{grid, std::move(w)};
}

// Marginal-density catalog.  Weights are density(center) * width, renormalized
// to total mass 1 (probability convention regardless of the density's own mass).
//
//   uniform                          constant
//   half-lebesgue                    constant (the Lebesgue half on [-1,1])
//   cosine        [a]                1 + cos(pi x / a); a defaults to grid.hi
//   gauss         [mean, sigma]      exp(-(x-mean)^2 / (2 sigma^2))
//   ball          [R]                3 r^2 / R^3 (uniform ball of radius R, radial)
//   radial-exp    [beta]             4 pi r^2 exp(-beta r); beta defaults to 4
inline DiscreteMeasure make_density(const std::string& name,
                                    const std::vector<double>& params,
                                    const Grid1D& grid) {
    std::vector<double> w(grid.m);
    auto param = [&](std::size_t i, double dflt) {
        return i < params.size() ? params[i] : dflt;
    };
    if (name == "uniform" || name == "half-lebesgue") {
        std::fill(w.begin(), w.end(), 1.0);
    } else if (name == "cosine") {
        const double a = param(0, grid.hi);
        for (std::size_t j = 0; j < grid.m; ++j)
            w[j] = 1.0 + std::cos(M_PI * grid.centers[j] / a);
    } else if (name == "gauss") {
        const double mean = param(0, 0.0), sigma = param(1, 1.0);
        for (std::size_t j = 0; j < grid.m; ++j) {
            const double t = (grid.centers[j] - mean) / sigma;
            w[j] = std::exp(-0.5 * t * t);
        }
    } else if (name == "ball") {
        const double R = param(0, 0.5);
        for (std::size_t j = 0; j < grid.m; ++j) {
            const double r = grid.centers[j];
            w[j] = (r >= 0.0 && r <= R) ? 3.0 * r * r / (R * R * R) : 0.0;
        }
    } else if (name == "radial-exp") {
        const double beta = param(0, 4.0);
        for (std::size_t j = 0; j < grid.m; ++j) {
            const double r = grid.centers[j];
            w[j] = (r >= 0.0) ? 4.0 * M_PI * r * r * std::exp(-beta * r) : 0.0;
        }
    } else {
        throw std::invalid_argument("make_density: unknown catalog id '" + name + "'");
    }
    for (std::size_t j = 0; j < grid.m; ++j) {
        w[j] *= grid.width;
        if (!(w[j] >= 0.0))
            throw std::invalid_argument("make_density: density negative at a grid center");
    }
    return measure_from_weights(grid, std::move(w));
}

/// Right-closed cumulative sums and the lower semicontinuous left inverse:
// quantile(t) = smallest center x with cdf(x) >= t.
struct CdfTable {
    Grid1D grid;
    std::vector<double> cdf;

    std::size_t quantile_index(double t) const {
        // Ties broken toward the smallest admissible center.  A small slack
        // keeps chained quantile(cdf(x) + k/n) lookups stable when t lands on
        // a cumulative-sum boundary up to rounding.
        const double slack = 1e-12;
        if (t <= 0.0) {
            for (std::size_t j = 0; j < cdf.size(); ++j)
                if (cdf[j] > 0.0) return j;
            return 0;
        }
        auto it = std::lower_bound(cdf.begin(), cdf.end(), t - slack);
        if (it == cdf.end()) return cdf.size() - 1;
        return static_cast<std::size_t>(it - cdf.begin());
    }
    double quantile(double t) const { return grid.centers[quantile_index(t)]; }
    double cdf_at_index(std::size_t j) const { return cdf[j]; }
};

inline CdfTable cdf_quantile(const DiscreteMeasure& mu) {
    CdfTable t;
    t.grid = mu.grid;
    t.cdf.resize(mu.weights.size());
    double run = 0.0;
    for (std::size_t j = 0; j < mu.weights.size(); ++j) {
        run += mu.weights[j];
        t.cdf[j] = run;
    }
    t.cdf.back() = 1.0;   // exact by renormalization; clamp rounding residue
    return t;
}

}  // namespace mmot
