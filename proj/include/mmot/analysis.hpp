#pragma once

// Post-solve diagnostics on the implicit coupling: pair projections, sparse
// support extraction, cyclical monotonicity checks, diagonal gaps, and
// concentration against closed-form transport maps.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mmot/solver.hpp"

namespace mmot {

struct PairProjection {
    std::size_t ci = 0, cj = 0;  // projected coordinates
    Grid1D row_grid, col_grid;
    std::vector<double> mass;  // row-major, rows = ci cells, cols = cj cells
    std::size_t rows = 0, cols = 0;
    double at(std::size_t i, std::size_t j) const { return mass[i * cols + j]; }
};

inline PairProjection project_pair(const ScalingState& st, std::size_t ci,
                                   std::size_t cj) {
    detail::Engine eng(st.spec, st.marginals, st.epsilon, st.budget, st.threads);
    PairProjection p;
    p.ci = ci;
    p.cj = cj;
    p.row_grid = st.marginals.at(ci).grid;
    p.col_grid = st.marginals.at(cj).grid;
    p.rows = p.row_grid.m;
    p.cols = p.col_grid.m;
    p.mass = eng.project(st.log_scalings, ci, cj, st.log_domain);
    return p;
}

struct SupportEntry {
    std::array<std::uint32_t, detail::kMaxN> idx{};
    double mass = 0.0;
};

struct SupportSet {
    std::size_t n = 0;       // marginal count
    double eta = 0.0;        // relative threshold
    double max_mass = 0.0;   // largest plan entry
    std::vector<SupportEntry> entries;
    double total_mass = 0.0;
};

// Entries of the coupling with mass >= eta * max entry mass, in index order.
inline SupportSet threshold_support(const ScalingState& st, double eta) {
    if (!(eta > 0.0) || eta > 1.0)
        throw std::invalid_argument("threshold_support: need 0 < eta <= 1");
    detail::Engine eng(st.spec, st.marginals, st.epsilon, st.budget, st.threads);
    const auto fm = eng.moments(st.log_scalings);
    SupportSet s;
    s.n = st.marginals.size();
    s.eta = eta;
    s.max_mass = fm.max_t == detail::kNegInf ? 0.0 : std::exp(fm.max_t);
    const auto raw = eng.support(st.log_scalings, eta, fm.max_t);
    s.entries.reserve(raw.size());
    for (const auto& e : raw) {
        SupportEntry out;
        out.idx = e.idx;
        out.mass = e.mass;
        s.total_mass += e.mass;
        s.entries.push_back(out);
    }
    return s;
}

inline std::vector<double> support_point(const ScalingState& st,
                                         const SupportEntry& e) {
    std::vector<double> pts(st.marginals.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        pts[i] = st.marginals[i].grid.centers[e.idx[i]];
    return pts;
}

struct MonotonicityReport {
    std::size_t pairs_checked = 0;
    std::size_t partitions_per_pair = 0;  // 2^n - 2 proper coordinate swaps
    std::size_t violation_count = 0;
    double worst_violation = 0.0;  // max over pairs of best-swap improvement
    double slack = 0.0;
};

// Cyclical monotonicity on the thresholded support: for support points x, y
// and every proper coordinate subset A, the A-swapped pair must not beat the
// original by more than slack: c(x)+c(y) <= c(x_A y) + c(y_A x) + slack.
// All unordered pairs are checked when they fit in max_pairs; otherwise a
// fixed-seed uniform sample of max_pairs pairs is used.
inline MonotonicityReport check_c_monotone(const ScalingState& st,
                                           const SupportSet& support,
                                           double slack,
                                           std::size_t max_pairs = 10000) {
    const std::size_t n = st.marginals.size();
    if (n > 16) throw std::invalid_argument("check_c_monotone: n too large");
    MonotonicityReport rep;
    rep.slack = slack;
    rep.partitions_per_pair = (std::size_t{1} << n) - 2;
    const std::size_t cnt = support.entries.size();
    if (cnt < 2) return rep;

    std::vector<double> xp(n), yp(n), z1(n), z2(n);
    auto check_pair = [&](std::size_t a, std::size_t b) {
        const auto& ea = support.entries[a];
        const auto& eb = support.entries[b];
        for (std::size_t i = 0; i < n; ++i) {
            xp[i] = st.marginals[i].grid.centers[ea.idx[i]];
            yp[i] = st.marginals[i].grid.centers[eb.idx[i]];
        }
        const double base = eval_cost(st.spec, xp) + eval_cost(st.spec, yp);
        if (base == kInf) return;  // nothing to beat
        double worst = 0.0;
        for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
            for (std::size_t i = 0; i < n; ++i) {
                const bool sw = (mask >> i) & 1;
                z1[i] = sw ? yp[i] : xp[i];
                z2[i] = sw ? xp[i] : yp[i];
            }
            const double swapped = eval_cost(st.spec, z1) + eval_cost(st.spec, z2);
            const double gain = base - swapped;  // positive: swap is cheaper
            if (gain > worst) worst = gain;
        }
        ++rep.pairs_checked;
        if (worst > slack) ++rep.violation_count;
        if (worst > rep.worst_violation) rep.worst_violation = worst;
    };

    const std::size_t total = cnt * (cnt - 1) / 2;
    if (total <= max_pairs) {
        for (std::size_t a = 0; a < cnt; ++a)
            for (std::size_t b = a + 1; b < cnt; ++b) check_pair(a, b);
    } else {
        std::mt19937_64 rng(0xC0FFEE);  // fixed seed: deterministic sampling
        std::uniform_int_distribution<std::size_t> pick(0, cnt - 1);
        std::size_t done = 0;
        while (done < max_pairs) {
            const std::size_t a = pick(rng), b = pick(rng);
            if (a == b) continue;
            check_pair(std::min(a, b), std::max(a, b));
            ++done;
        }
    }
    return rep;
}

// Smallest pairwise coordinate distance attained on the support.  Repulsive
// plans keep this bounded away from zero; it grows as epsilon shrinks.
inline double diagonal_gap(const ScalingState& st, const SupportSet& support) {
    double gap = std::numeric_limits<double>::infinity();
    const std::size_t n = st.marginals.size();
    for (const auto& e : support.entries) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = std::abs(st.marginals[i].grid.centers[e.idx[i]] -
                                          st.marginals[j].grid.centers[e.idx[j]]);
                if (d < gap) gap = d;
            }
    }
    return gap;
}

// Fraction of projected mass within radius_cells column cells of the graph
// {(x, T(x))}: |y_j - T(x_i)| <= radius_cells * column cell width.
inline double graph_concentration(const PairProjection& p,
                                  const std::function<double(double)>& map,
                                  double radius_cells) {
    const double tol = radius_cells * p.col_grid.width;
    double close = 0.0, total = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        const double target = map(p.row_grid.centers[i]);
        for (std::size_t j = 0; j < p.cols; ++j) {
            const double v = p.at(i, j);
            total += v;
            if (std::abs(p.col_grid.centers[j] - target) <= tol) close += v;
        }
    }
    return total > 0.0 ? close / total : 0.0;
}

// Total variation distance between two equally shaped pair projections.
inline double tv_distance(const PairProjection& a, const PairProjection& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("tv_distance: shape mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.mass.size(); ++k)
        s += std::abs(a.mass[k] - b.mass[k]);
    return 0.5 * s;
}

// Widest row span (in column cells) of entries above eta * max entry.
inline std::size_t support_width(const PairProjection& p, double eta) {
    double mx = 0.0;
    for (const double v : p.mass) mx = std::max(mx, v);
    const double cut = eta * mx;
    std::size_t width = 0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        std::size_t first = p.cols, last = 0;
        for (std::size_t j = 0; j < p.cols; ++j)
            if (p.at(i, j) >= cut) {
                if (first == p.cols) first = j;
                last = j;
            }
        if (first < p.cols) width = std::max(width, last - first + 1);
    }
    return width;
}

// Mass fraction of a pair projection within band_cells of either diagonal
// y = x or antidiagonal branch y = -x (used for two-branch map supports).
inline double branch_mass(const PairProjection& p,
                          const std::function<double(double)>& branch_a,
                          const std::function<double(double)>& branch_b,
                          double radius_cells) {
    const double tol = radius_cells * p.col_grid.width;
    double close = 0.0, total = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        const double xa = branch_a(p.row_grid.centers[i]);
        const double xb = branch_b(p.row_grid.centers[i]);
        for (std::size_t j = 0; j < p.cols; ++j) {
            const double v = p.at(i, j);
            total += v;
            const double y = p.col_grid.centers[j];
            if (std::abs(y - xa) <= tol || std::abs(y - xb) <= tol) close += v;
        }
    }
    return total > 0.0 ? close / total : 0.0;
}

}  // namespace mmot
