#pragma once

// Closed-form optimal maps and plan values used as independent references:
// cyclic quantile maps for pairwise-repulsive costs, digit-shift maps with
// exact integer orbit sums, explicit three-body harmonic maps, a diffuse
// plane-supported plan with an analytic marginal identity, radial branch
// maps, and monotone radial rearrangements for the product family.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mmot/cost.hpp"
#include "mmot/grid.hpp"

namespace mmot {

// A transport map sampled on the cells of a source grid.  Targets are grid
// centers, so compositions stay exact at the index level.
struct GridMap {
    Grid1D source;
    std::vector<std::size_t> cell;   // target cell index per source cell
    std::vector<double> values;      // target center per source cell

    double at_cell(std::size_t j) const { return values[j]; }
    double operator()(double x) const {
        const double hw = source.width;
        double fj = (x - source.lo) / hw - 0.5;
        long j = std::lround(fj);
        if (j < 0) j = 0;
        if (j >= static_cast<long>(source.m)) j = static_cast<long>(source.m) - 1;
        return values[static_cast<std::size_t>(j)];
    }
};

// T(x) = F^{-1}(F(x) + i/n mod 1): the i-th iterate of the cyclic quantile
// shift.  Pushes mu to itself and T^n = identity (exactly at index level for
// uniform weights with n | m).
inline GridMap cyclic_monge_map(const DiscreteMeasure& mu, unsigned n_marginals,
                                unsigned iterate = 1) {
    if (n_marginals < 2) throw std::invalid_argument("cyclic map: need n >= 2");
    const CdfTable F = cdf_quantile(mu);
    const double shift = static_cast<double>(iterate % n_marginals) / n_marginals;
    GridMap map;
    map.source = mu.grid;
    map.cell.resize(mu.grid.m);
    map.values.resize(mu.grid.m);
    for (std::size_t j = 0; j < mu.grid.m; ++j) {
        double t = F.cdf[j] + shift;
        // an exact seam (t == 1 up to rounding) is the last cell, not a wrap
        if (t > 1.0 + 1e-9) t -= 1.0;
        const std::size_t i = F.quantile_index(t);
        map.cell[j] = i;
        map.values[j] = mu.grid.centers[i];
    }
    return map;
}

// Cost of the deterministic plan (x, T(x), T^2(x), ..., T^{n-1}(x)).
inline double cyclic_plan_cost(const CostSpec& spec, const DiscreteMeasure& mu) {
    std::vector<GridMap> its;
    for (unsigned i = 1; i < spec.n; ++i)
        its.push_back(cyclic_monge_map(mu, static_cast<unsigned>(spec.n), i));
    double total = 0.0;
    std::vector<double> pts(spec.n);
    for (std::size_t j = 0; j < mu.grid.m; ++j) {
        if (mu.weights[j] == 0.0) continue;
        pts[0] = mu.grid.centers[j];
        for (unsigned i = 1; i < spec.n; ++i) pts[i] = its[i - 1].values[j];
        total += mu.weights[j] * eval_cost(spec, pts);
    }
    return total;
}

// Cost of the deterministic plan (x, H_2(x), ..., H_n(x)) under base measure.
inline double map_plan_cost(const CostSpec& spec, const DiscreteMeasure& base,
                            const std::vector<GridMap>& maps) {
    if (maps.size() + 1 != spec.n)
        throw std::invalid_argument("map_plan_cost: need n-1 maps");
    double total = 0.0;
    std::vector<double> pts(spec.n);
    for (std::size_t j = 0; j < base.grid.m; ++j) {
        if (base.weights[j] == 0.0) continue;
        pts[0] = base.grid.centers[j];
        for (std::size_t i = 0; i < maps.size(); ++i) pts[i + 1] = maps[i].values[j];
        total += base.weights[j] * eval_cost(spec, pts);
    }
    return total;
}

// Base-n digit-shift map on n^depth cells of [0,1): every base-n digit of
// the cell index advances by one, modulo n.  The orbit {j, S j, ..., S^{n-1} j}
// has center sum exactly n/2; the integer identity below certifies it
// without any floating point.
struct FractalShiftMap {
    unsigned base = 2;
    unsigned depth = 1;
    std::size_t cells = 2;  // base^depth

    std::size_t step(std::size_t j) const {
        std::size_t out = 0, p = 1;
        for (unsigned t = 0; t < depth; ++t) {
            const std::size_t d = (j / p) % base;
            out += ((d + 1) % base) * p;
            p *= base;
        }
        return out;
    }
    std::size_t iterate(std::size_t j, unsigned k) const {
        for (unsigned i = 0; i < k; ++i) j = step(j);
        return j;
    }
    // Sum of cell indices over the orbit of j.  The orbit center sum is
    // (orbit_index_sum + base/2) / cells; it equals base/2 exactly iff
    // 2 * orbit_index_sum == base * (cells - 1), an all-integer check.
    long long orbit_index_sum(std::size_t j) const {
        long long s = 0;
        std::size_t cur = j;
        for (unsigned i = 0; i < base; ++i) {
            s += static_cast<long long>(cur);
            cur = step(cur);
        }
        return s;
    }
    double center(std::size_t j) const {
        return (static_cast<double>(j) + 0.5) / static_cast<double>(cells);
    }
};

inline FractalShiftMap fractal_shift_map(unsigned base, unsigned depth) {
    if (base < 2 || depth == 0) throw std::invalid_argument("fractal map: base>=2, depth>=1");
    FractalShiftMap f;
    f.base = base;
    f.depth = depth;
    f.cells = 1;
    for (unsigned t = 0; t < depth; ++t) {
        if (f.cells > (std::size_t{1} << 50) / base)
            throw std::invalid_argument("fractal map: too many cells");
        f.cells *= base;
    }
    return f;
}

// Explicit optimal three-body map pair for the |x+y+z|^2 cost with the
// uniform measure on [-1,1]: x + T(x) + S(x) = 0 pointwise and both maps
// push the measure to itself.
inline std::pair<std::function<double(double)>, std::function<double(double)>>
harmonic_pair_maps() {
    auto T = [](double x) { return x <= 0.0 ? x + 1.0 : x - 1.0; };
    auto S = [](double x) { return x <= 0.0 ? -1.0 - 2.0 * x : 1.0 - 2.0 * x; };
    return {T, S};
}

namespace detail {
// Composite Simpson on [a,b]; integrand assumed smooth.
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      int panels = 512) {
    if (b <= a) return 0.0;
    const double h = (b - a) / (2 * panels);
    double s = f(a) + f(b);
    for (int i = 1; i < 2 * panels; ++i)
        s += f(a + i * h) * ((i & 1) ? 4.0 : 2.0);
    return s * h / 3.0;
}
}  // namespace detail

// Diffuse competitor for the three-body |x+y+z|^2 cost: a plan supported on
// the plane x+y+z=0 with surface density f(max |coordinate|).  Its first
// marginal has density sqrt(3) * (2 int_{|x|}^1 f(t) dt + |x| f(|x|)).
inline double diffuse_plane_marginal(const std::function<double(double)>& f,
                                     double x) {
    const double r = std::abs(x);
    const double tail = detail::simpson(f, r, 1.0);
    return std::sqrt(3.0) * (2.0 * tail + r * f(r));
}

// Inverse of the identity above: the surface density producing marginal
// density h (h even, defined on [-1,1] through |x|).
inline double diffuse_density_from_marginal(const std::function<double(double)>& h,
                                            double x) {
    if (x <= 0.0 || x > 1.0)
        throw std::invalid_argument("diffuse density: need 0 < x <= 1");
    auto g = [&h](double t) { return h(t) / (t * t * t); };
    const double integral = detail::simpson(g, x, 1.0);
    return (h(x) / x - 2.0 * x * integral) / std::sqrt(3.0);
}

// Surface density of the uniform-marginal case h = 1/2: f(s) = sqrt(3) s / 6.
inline double diffuse_plane_density(double s) { return std::sqrt(3.0) * s / 6.0; }

// Radial branch map for pairwise repulsion with radially symmetric marginals.
// With A_i = [F^{-1}(i/n), F^{-1}((i+1)/n)): on A_{i-1} (i = 1..n-1) the map
// reflects, S(r) = F^{-1}(2i/n - F(r)); on the last interval it wraps,
// S(r) = F^{-1}(F(r) - (n-1)/n) for even n and F^{-1}(1 - F(r)) for odd n.
inline GridMap seidl_radial_map(const DiscreteMeasure& mu, unsigned n_marginals) {
    if (n_marginals < 2) throw std::invalid_argument("radial map: need n >= 2");
    const CdfTable F = cdf_quantile(mu);
    const double inv_n = 1.0 / n_marginals;
    GridMap map;
    map.source = mu.grid;
    map.cell.resize(mu.grid.m);
    map.values.resize(mu.grid.m);
    for (std::size_t j = 0; j < mu.grid.m; ++j) {
        // evaluate at the cell's mass midpoint: reflected (antitone) branches
        // then land on exact cell centers instead of straddling a boundary
        const double Fr = F.cdf[j] - 0.5 * mu.weights[j];
        // branch index: r in A_{i-1} when (i-1)/n < F(r) <= i/n
        unsigned i = static_cast<unsigned>(std::ceil(Fr * n_marginals - 1e-12));
        if (i == 0) i = 1;
        double t;
        if (i <= n_marginals - 1) {
            t = 2.0 * i * inv_n - Fr;
        } else if (n_marginals % 2 == 0) {
            t = Fr - (n_marginals - 1) * inv_n;
        } else {
            t = 1.0 - Fr;
        }
        if (t < 0.0) t = 0.0;
        if (t > 1.0) t = 1.0;
        const std::size_t cell = F.quantile_index(t);
        map.cell[j] = cell;
        map.values[j] = mu.grid.centers[cell];
    }
    return map;
}

// Measure-level pushforward checks.  A map on quantiles t in (0,1] is given
// as affine pieces t -> a + b*t; cumulative mass IS the t coordinate, so a
// source sub-interval of length L lands on a target interval of length
// |b|*L carrying mass L.  Correct measure-preserving maps tile (0,1] and
// reproduce the weights exactly; a wrong branch shows up as O(1) TV.
struct QuantilePiece {
    double t_lo = 0.0, t_hi = 1.0;  // source interval in cumulative mass
    double a = 0.0, b = 1.0;        // image t' = a + b t, b != 0
};

inline std::vector<double> quantile_pushforward(
    const DiscreteMeasure& mu, const std::vector<QuantilePiece>& pieces) {
    const CdfTable F = cdf_quantile(mu);
    const std::size_t m = mu.grid.m;
    std::vector<double> out(m, 0.0);
    for (const auto& p : pieces) {
        if (p.t_hi <= p.t_lo || p.b == 0.0)
            throw std::invalid_argument("quantile piece: empty interval or b = 0");
        const double i0 = p.a + p.b * p.t_lo, i1 = p.a + p.b * p.t_hi;
        const double lo = std::min(i0, i1), hi = std::max(i0, i1);
        const double density = 1.0 / std::abs(p.b);  // mass per unit image length
        double prev = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double cur = F.cdf[j];
            const double ov = std::min(hi, cur) - std::max(lo, prev);
            if (ov > 0.0) out[j] += ov * density;
            prev = cur;
        }
    }
    return out;
}

inline double pushforward_tv(const DiscreteMeasure& mu,
                             const std::vector<QuantilePiece>& pieces) {
    const auto pushed = quantile_pushforward(mu, pieces);
    double s = 0.0;
    for (std::size_t j = 0; j < mu.grid.m; ++j)
        s += std::abs(pushed[j] - mu.weights[j]);
    return 0.5 * s;
}

// Quantile-space descriptions of the closed-form maps above.
inline std::vector<QuantilePiece> cyclic_map_pieces(unsigned n_marginals,
                                                    unsigned iterate = 1) {
    const double s = static_cast<double>(iterate % n_marginals) / n_marginals;
    if (s == 0.0) return {{0.0, 1.0, 0.0, 1.0}};
    return {{0.0, 1.0 - s, s, 1.0}, {1.0 - s, 1.0, s - 1.0, 1.0}};
}

inline std::vector<QuantilePiece> antitone_map_pieces() {
    return {{0.0, 1.0, 1.0, -1.0}};
}

inline std::vector<QuantilePiece> seidl_map_pieces(unsigned n) {
    std::vector<QuantilePiece> out;
    for (unsigned i = 1; i <= n - 1; ++i)
        out.push_back({(i - 1.0) / n, static_cast<double>(i) / n, 2.0 * i / n, -1.0});
    if (n % 2 == 0)
        out.push_back({(n - 1.0) / n, 1.0, -(n - 1.0) / n, 1.0});
    else
        out.push_back({(n - 1.0) / n, 1.0, 1.0, -1.0});
    return out;
}

// T and S of harmonic_pair_maps on uniform [-1,1], in quantile space.
inline std::vector<QuantilePiece> harmonic_T_pieces() {
    return {{0.0, 0.5, 0.5, 1.0}, {0.5, 1.0, -0.5, 1.0}};
}
inline std::vector<QuantilePiece> harmonic_S_pieces() {
    return {{0.0, 0.5, 1.0, -2.0}, {0.5, 1.0, 2.0, -2.0}};
}

// Jensen lower bound attained by hyperplane-supported plans: any coupling of
// measures with barycenters b_i pays at least (sum_i b_i)^2 under the
// squared-sum cost.
inline double flat_plan_value(const std::vector<DiscreteMeasure>& mus) {
    double b = 0.0;
    for (const auto& mu : mus) b += mu.barycenter();
    return b * b;
}

// Monotone radial rearrangements H_i = F_i^{-1} o F_1 aligning every
// marginal with the first; the product-family optimum rides their graph.
struct RadialSolution {
    std::vector<GridMap> maps;  // H_2..H_n on the grid of marginal 1
    double value = 0.0;         // integral of prod_i H_i(r) d mu_1 (max convention)
};

inline RadialSolution det_radial_solution(const std::vector<DiscreteMeasure>& mus) {
    if (mus.size() < 2) throw std::invalid_argument("radial solution: need n >= 2");
    const CdfTable F1 = cdf_quantile(mus[0]);
    RadialSolution sol;
    for (std::size_t i = 1; i < mus.size(); ++i) {
        const CdfTable Fi = cdf_quantile(mus[i]);
        GridMap H;
        H.source = mus[0].grid;
        H.cell.resize(H.source.m);
        H.values.resize(H.source.m);
        for (std::size_t j = 0; j < H.source.m; ++j) {
            const std::size_t cell = Fi.quantile_index(F1.cdf[j]);
            H.cell[j] = cell;
            H.values[j] = mus[i].grid.centers[cell];
        }
        sol.maps.push_back(std::move(H));
    }
    for (std::size_t j = 0; j < mus[0].grid.m; ++j) {
        double prod = mus[0].grid.centers[j];
        for (const auto& H : sol.maps) prod *= H.values[j];
        sol.value += mus[0].weights[j] * prod;
    }
    return sol;
}

}  // namespace mmot
