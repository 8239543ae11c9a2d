#pragma once

// Artifact writers: delimited-text matrices, text portable graymaps, and
// key/value run reports.  All formats are plain text so artifacts diff
// cleanly and need no plotting dependencies.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmot/analysis.hpp"

namespace mmot {

namespace detail {
inline std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}
}  // namespace detail

// First row: 0 then column centers.  Each data row: row center then masses.
// 9 significant digits throughout.
inline void write_matrix(const std::string& path, const PairProjection& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << '0';
    for (std::size_t j = 0; j < p.cols; ++j)
        out << ' ' << detail::fmt_g9(p.col_grid.centers[j]);
    out << '\n';
    for (std::size_t i = 0; i < p.rows; ++i) {
        out << detail::fmt_g9(p.row_grid.centers[i]);
        for (std::size_t j = 0; j < p.cols; ++j)
            out << ' ' << detail::fmt_g9(p.at(i, j));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Text graymap (P2), max-normalized: 255 = largest entry, 0 = zero mass.
inline void write_heatmap(const std::string& path, const PairProjection& p) {
    double mx = 0.0;
    for (const double v : p.mass) mx = std::max(mx, v);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P2\n" << p.cols << ' ' << p.rows << "\n255\n";
    for (std::size_t i = 0; i < p.rows; ++i) {
        for (std::size_t j = 0; j < p.cols; ++j) {
            const int px = mx > 0.0
                               ? static_cast<int>(std::lround(255.0 * p.at(i, j) / mx))
                               : 0;
            out << px << (j + 1 == p.cols ? '\n' : ' ');
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Binary support mask at relative threshold eta: 255 on-support, 0 off.
inline void write_support_mask(const std::string& path, const PairProjection& p,
                               double eta) {
    double mx = 0.0;
    for (const double v : p.mass) mx = std::max(mx, v);
    const double cut = eta * mx;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P2\n" << p.cols << ' ' << p.rows << "\n255\n";
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j)
            out << (p.at(i, j) >= cut && mx > 0.0 ? 255 : 0)
                << (j + 1 == p.cols ? '\n' : ' ');
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Key/value report in fixed key order; extra lines may follow runtime_ms.
inline void write_report(const std::string& path, const SolveReport& rep,
                         double epsilon, long runtime_ms,
                         const std::vector<std::pair<std::string, std::string>>&
                             extra = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "cost: " << detail::fmt_g9(rep.primal_cost) << '\n';
    out << "dual: " << detail::fmt_g9(rep.dual_value) << '\n';
    out << "gap: " << detail::fmt_g9(rep.duality_gap) << '\n';
    out << "sweeps: " << rep.sweeps << '\n';
    out << "marginal_errors:";
    for (const double e : rep.marginal_errors) out << ' ' << detail::fmt_g9(e);
    out << '\n';
    out << "epsilon: " << detail::fmt_g9(epsilon) << '\n';
    out << "runtime_ms: " << runtime_ms << '\n';
    for (const auto& [k, v] : extra) out << k << ": " << v << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mmot
