#pragma once

// Experiment layer: key/value config files, the bundled run catalog, and the
// runner that solves an instance and writes its artifacts (report, matrices,
// heatmaps, support masks, oracle comparisons).

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mmot/analysis.hpp"
#include "mmot/io.hpp"
#include "mmot/oracles.hpp"
#include "mmot/solver.hpp"

namespace mmot {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline CostFamily family_from_string(const std::string& s) {
    if (s == "coulomb") return CostFamily::coulomb;
    if (s == "log") return CostFamily::log_repulsive;
    if (s == "harmonic-sum") return CostFamily::harmonic_sum;
    if (s == "harmonic-pairwise") return CostFamily::harmonic_pairwise;
    if (s == "penalized-harmonic") return CostFamily::penalized_harmonic;
    if (s == "oscillation") return CostFamily::carlier_oscillation;
    if (s == "product") return CostFamily::det_radial_product;
    throw ConfigError("unknown cost family: " + s);
}

inline std::string family_to_string(CostFamily f) {
    switch (f) {
        case CostFamily::coulomb: return "coulomb";
        case CostFamily::log_repulsive: return "log";
        case CostFamily::harmonic_sum: return "harmonic-sum";
        case CostFamily::harmonic_pairwise: return "harmonic-pairwise";
        case CostFamily::penalized_harmonic: return "penalized-harmonic";
        case CostFamily::carlier_oscillation: return "oscillation";
        case CostFamily::det_radial_product: return "product";
    }
    return "?";
}

struct MarginalSpec {
    double lo = 0.0, hi = 1.0;
    std::size_t m = 100;
    std::string density = "uniform";
    std::vector<double> params;
};

struct OutputSpec {
    enum class Kind { report, pair_projection, support, oracle_compare };
    Kind kind = Kind::report;
    std::size_t i = 1, j = 2;  // 1-based coordinates as written in configs
    double eta = 1e-3;
    std::string oracle_id;
};

struct ExperimentConfig {
    std::string name;
    std::string label;
    CostSpec spec;
    MarginalSpec shared;
    std::map<std::size_t, MarginalSpec> overrides;  // 1-based marginal index
    double epsilon = 0.1;
    std::vector<double> anneal;
    std::vector<double> sweep;  // run per-epsilon stages, artifacts per stage
    double tol = 1e-8;
    long max_sweeps = 10000;
    long long budget = 2'000'000'000;
    unsigned threads = 0;
    std::vector<OutputSpec> outputs;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline double to_real(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + s);
    }
}

inline long long to_int(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + s);
    }
}

inline MarginalSpec parse_marginal(const std::vector<std::string>& toks,
                                   const std::string& key) {
    if (toks.size() < 4) throw ConfigError(key + ": need <lo> <hi> <m> <density> [params]");
    MarginalSpec ms;
    ms.lo = to_real(toks[0], key);
    ms.hi = to_real(toks[1], key);
    ms.m = static_cast<std::size_t>(to_int(toks[2], key));
    ms.density = toks[3];
    for (std::size_t t = 4; t < toks.size(); ++t)
        ms.params.push_back(to_real(toks[t], key));
    return ms;
}

}  // namespace detail

// Line format: `key = value`, `#` starts a comment, blank lines ignored.
// Keys: name, label, family, n, s, tau, epsilon, anneal, sweep, tol,
// max_sweeps, budget, threads, grid (lo hi m), density (name [params]),
// marginal_<k> (lo hi m density [params], k 1-based), output (repeatable).
inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    bool saw_grid = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const auto toks = detail::split_ws(val);
        if (key == "name") {
            cfg.name = val;
        } else if (key == "label") {
            cfg.label = val;
        } else if (key == "family") {
            cfg.spec.family = family_from_string(val);
        } else if (key == "n") {
            cfg.spec.n = static_cast<std::size_t>(detail::to_int(val, key));
        } else if (key == "s") {
            cfg.spec.s = detail::to_real(val, key);
        } else if (key == "tau") {
            cfg.spec.tau = detail::to_real(val, key);
        } else if (key == "epsilon") {
            cfg.epsilon = detail::to_real(val, key);
        } else if (key == "anneal" || key == "sweep") {
            std::vector<double> v;
            for (const auto& t : toks) v.push_back(detail::to_real(t, key));
            (key == "anneal" ? cfg.anneal : cfg.sweep) = std::move(v);
        } else if (key == "tol") {
            cfg.tol = detail::to_real(val, key);
        } else if (key == "max_sweeps") {
            cfg.max_sweeps = static_cast<long>(detail::to_int(val, key));
        } else if (key == "budget") {
            cfg.budget = detail::to_int(val, key);
        } else if (key == "threads") {
            cfg.threads = static_cast<unsigned>(detail::to_int(val, key));
        } else if (key == "grid") {
            if (toks.size() != 3) throw ConfigError("grid: need <lo> <hi> <m>");
            cfg.shared.lo = detail::to_real(toks[0], key);
            cfg.shared.hi = detail::to_real(toks[1], key);
            cfg.shared.m = static_cast<std::size_t>(detail::to_int(toks[2], key));
            saw_grid = true;
        } else if (key == "density") {
            if (toks.empty()) throw ConfigError("density: need a catalog name");
            cfg.shared.density = toks[0];
            cfg.shared.params.clear();
            for (std::size_t t = 1; t < toks.size(); ++t)
                cfg.shared.params.push_back(detail::to_real(toks[t], key));
        } else if (key.rfind("marginal_", 0) == 0) {
            const std::size_t k =
                static_cast<std::size_t>(detail::to_int(key.substr(9), key));
            if (k == 0) throw ConfigError("marginal indices are 1-based");
            cfg.overrides[k] = detail::parse_marginal(toks, key);
        } else if (key == "output") {
            if (toks.empty()) throw ConfigError("output: empty directive");
            OutputSpec os;
            if (toks[0] == "report") {
                os.kind = OutputSpec::Kind::report;
            } else if (toks[0] == "pair_projection") {
                if (toks.size() != 3) throw ConfigError("output pair_projection: need i j");
                os.kind = OutputSpec::Kind::pair_projection;
                os.i = static_cast<std::size_t>(detail::to_int(toks[1], key));
                os.j = static_cast<std::size_t>(detail::to_int(toks[2], key));
            } else if (toks[0] == "support") {
                if (toks.size() != 4) throw ConfigError("output support: need eta i j");
                os.kind = OutputSpec::Kind::support;
                os.eta = detail::to_real(toks[1], key);
                os.i = static_cast<std::size_t>(detail::to_int(toks[2], key));
                os.j = static_cast<std::size_t>(detail::to_int(toks[3], key));
            } else if (toks[0] == "oracle_compare") {
                if (toks.size() != 2) throw ConfigError("output oracle_compare: need id");
                os.kind = OutputSpec::Kind::oracle_compare;
                os.oracle_id = toks[1];
            } else {
                throw ConfigError("unknown output kind: " + toks[0]);
            }
            cfg.outputs.push_back(os);
        } else {
            throw ConfigError("unknown key: " + key);
        }
    }
    if (cfg.name.empty()) throw ConfigError("config needs a name");
    if (cfg.spec.n < 2) throw ConfigError("config needs n >= 2");
    if (!saw_grid && cfg.overrides.size() != cfg.spec.n)
        throw ConfigError("config needs a grid or per-marginal overrides");
    for (const auto& [k, ms] : cfg.overrides)
        if (k > cfg.spec.n) throw ConfigError("marginal index out of range");
    if (cfg.outputs.empty()) cfg.outputs.push_back(OutputSpec{});
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    return parse_config(in);
}

inline std::vector<DiscreteMeasure> build_marginals(const ExperimentConfig& cfg) {
    std::vector<DiscreteMeasure> out;
    for (std::size_t k = 1; k <= cfg.spec.n; ++k) {
        const auto it = cfg.overrides.find(k);
        const MarginalSpec& ms = it == cfg.overrides.end() ? cfg.shared : it->second;
        const Grid1D g = build_grid(ms.lo, ms.hi, ms.m);
        out.push_back(make_density(ms.density, ms.params, g));
    }
    return out;
}

struct RunArtifacts {
    std::string report_path;
    std::vector<std::string> matrix_paths;
    std::vector<std::string> heatmap_paths;
    SolveReport report;
    bool converged = true;
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> oracle_extras(
    const std::string& id, const ExperimentConfig& cfg,
    const std::vector<DiscreteMeasure>& marginals, const ScalingState& st,
    const SolveReport& rep) {
    std::vector<std::pair<std::string, std::string>> ex;
    auto put = [&](const std::string& k, double v) {
        ex.emplace_back(k, fmt_g9(v));
    };
    if (id == "cyclic") {
        if (!pair_decomposable(cfg.spec.family))
            throw ConfigError("oracle cyclic: needs a pairwise cost");
        if (!cfg.overrides.empty())
            throw ConfigError("oracle cyclic: needs identical marginals");
        const double oc = cyclic_plan_cost(cfg.spec, marginals[0]);
        put("oracle_cost", oc);
        put("oracle_rel_gap", std::abs(rep.primal_cost - oc) / std::abs(oc));
        const GridMap t = cyclic_monge_map(marginals[0],
                                           static_cast<unsigned>(cfg.spec.n), 1);
        const PairProjection p = project_pair(st, 0, 1);
        put("oracle_concentration_2cells",
            graph_concentration(p, [&t](double x) { return t(x); }, 2.0));
    } else if (id == "antitone_pair") {
        if (cfg.spec.n != 2) throw ConfigError("oracle antitone_pair: needs n = 2");
        const CdfTable f1 = cdf_quantile(marginals[0]);
        const CdfTable f2 = cdf_quantile(marginals[1]);
        GridMap t;
        t.source = marginals[0].grid;
        t.cell.resize(t.source.m);
        t.values.resize(t.source.m);
        for (std::size_t j = 0; j < t.source.m; ++j) {
            // antitone pairing: cell j meets the (1 - F(x_j^-)) quantile
            const double q = 1.0 - f1.cdf[j] + marginals[0].weights[j];
            t.cell[j] = f2.quantile_index(q);
            t.values[j] = marginals[1].grid.centers[t.cell[j]];
        }
        const double oc = map_plan_cost(cfg.spec, marginals[0], {t});
        put("oracle_cost", oc);
        put("oracle_rel_gap", std::abs(rep.primal_cost - oc) / std::abs(oc));
        const PairProjection p = project_pair(st, 0, 1);
        put("oracle_concentration_2cells",
            graph_concentration(p, [&t](double x) { return t(x); }, 2.0));
    } else if (id == "harmonic_triple") {
        if (cfg.spec.n != 3) throw ConfigError("oracle harmonic_triple: needs n = 3");
        auto [T, S] = harmonic_pair_maps();
        double oc = 0.0;
        std::vector<double> pts(3);
        for (std::size_t j = 0; j < marginals[0].grid.m; ++j) {
            pts[0] = marginals[0].grid.centers[j];
            pts[1] = T(pts[0]);
            pts[2] = S(pts[0]);
            oc += marginals[0].weights[j] * eval_cost(cfg.spec, pts);
        }
        put("oracle_cost", oc);
        const PairProjection p12 = project_pair(st, 0, 1);
        const PairProjection p13 = project_pair(st, 0, 2);
        put("oracle_concentration_12_2cells", graph_concentration(p12, T, 2.0));
        put("oracle_concentration_13_2cells", graph_concentration(p13, S, 2.0));
    } else if (id == "radial_product") {
        if (cfg.spec.family != CostFamily::det_radial_product)
            throw ConfigError("oracle radial_product: needs the product family");
        const RadialSolution sol = det_radial_solution(marginals);
        put("oracle_value", sol.value);  // max convention: solver cost = -value
        put("oracle_rel_gap",
            std::abs(-rep.primal_cost - sol.value) / std::abs(sol.value));
        const PairProjection p = project_pair(st, 0, 1);
        const GridMap& h2 = sol.maps[0];
        put("oracle_concentration_2cells",
            graph_concentration(p, [&h2](double x) { return h2(x); }, 2.0));
    } else {
        throw ConfigError("unknown oracle id: " + id);
    }
    return ex;
}

inline void write_stage_artifacts(const ExperimentConfig& cfg,
                                  const std::vector<DiscreteMeasure>& marginals,
                                  const ScalingState& st, const SolveReport& rep,
                                  long runtime_ms, const std::string& dir,
                                  RunArtifacts& arts) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::pair<std::string, std::string>> extras;
    bool want_report = false;
    for (const auto& os : cfg.outputs) {
        switch (os.kind) {
            case OutputSpec::Kind::report:
                want_report = true;
                break;
            case OutputSpec::Kind::pair_projection: {
                const PairProjection p = project_pair(st, os.i - 1, os.j - 1);
                const std::string stem = dir + "/pair_" + std::to_string(os.i) +
                                         std::to_string(os.j);
                write_matrix(stem + ".txt", p);
                write_heatmap(stem + ".pgm", p);
                arts.matrix_paths.push_back(stem + ".txt");
                arts.heatmap_paths.push_back(stem + ".pgm");
                break;
            }
            case OutputSpec::Kind::support: {
                const PairProjection p = project_pair(st, os.i - 1, os.j - 1);
                const std::string path = dir + "/support_" + std::to_string(os.i) +
                                         std::to_string(os.j) + ".pgm";
                write_support_mask(path, p, os.eta);
                arts.heatmap_paths.push_back(path);
                break;
            }
            case OutputSpec::Kind::oracle_compare: {
                auto ex = oracle_extras(os.oracle_id, cfg, marginals, st, rep);
                extras.insert(extras.end(), ex.begin(), ex.end());
                break;
            }
        }
    }
    if (want_report || !extras.empty()) {
        const std::string path = dir + "/report.txt";
        write_report(path, rep, st.epsilon, runtime_ms, extras);
        arts.report_path = path;
    }
}

}  // namespace detail

// Solves the configured instance and writes every requested artifact under
// out_dir/<name>/; sweep configs write one stage directory per epsilon plus
// a sweep summary.  Throws BudgetError/ConfigError; non-convergence is
// reported through RunArtifacts::converged.
inline RunArtifacts run_experiment(const ExperimentConfig& cfg,
                                   const std::string& out_dir) {
    const auto marginals = build_marginals(cfg);
    const std::string base = out_dir + "/" + cfg.name;
    RunArtifacts arts;

    SolveOptions opts;
    opts.tol = cfg.tol;
    opts.max_sweeps = cfg.max_sweeps;
    opts.budget = cfg.budget;
    opts.threads = cfg.threads;

    if (!cfg.sweep.empty()) {
        std::ofstream summary;
        std::filesystem::create_directories(base);
        summary.open(base + "/sweep_summary.txt");
        summary << "epsilon cost gap support_width sweeps\n";
        for (std::size_t s = 0; s < cfg.sweep.size(); ++s) {
            opts.epsilon = cfg.sweep[s];
            opts.anneal.assign(cfg.sweep.begin(), cfg.sweep.begin() + s);
            const auto t0 = std::chrono::steady_clock::now();
            auto [st, rep] = ipfp_solve(cfg.spec, marginals, opts);
            const auto t1 = std::chrono::steady_clock::now();
            const long ms = static_cast<long>(
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count());
            const std::string dir = base + "/eps_" + detail::fmt_g9(opts.epsilon);
            detail::write_stage_artifacts(cfg, marginals, st, rep, ms, dir, arts);
            const PairProjection p = project_pair(st, 0, 1);
            summary << detail::fmt_g9(opts.epsilon) << ' '
                    << detail::fmt_g9(rep.primal_cost) << ' '
                    << detail::fmt_g9(rep.duality_gap) << ' '
                    << support_width(p, 1e-3) << ' ' << rep.sweeps << '\n';
            arts.report = rep;
            arts.converged = arts.converged && rep.converged;
        }
        return arts;
    }

    opts.epsilon = cfg.epsilon;
    opts.anneal = cfg.anneal;
    const auto t0 = std::chrono::steady_clock::now();
    auto [st, rep] = ipfp_solve(cfg.spec, marginals, opts);
    const auto t1 = std::chrono::steady_clock::now();
    const long ms = static_cast<long>(
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count());
    detail::write_stage_artifacts(cfg, marginals, st, rep, ms, base, arts);
    arts.report = rep;
    arts.converged = rep.converged;
    return arts;
}

// ---------------------------------------------------------------------------
// Bundled catalog.  One entry per reproduced experiment; each config is a
// complete config file and can be dumped, edited, and re-run from disk.

struct CatalogEntry {
    const char* name;
    const char* text;
};

inline const std::vector<CatalogEntry>& experiment_catalog() {
    static const std::vector<CatalogEntry> entries = {
        {"reg_sweep_coulomb", R"(name = reg_sweep_coulomb
label = regularization sweep: pair repulsive coupling as epsilon shrinks
family = coulomb
n = 2
epsilon = 0.006
sweep = 0.2 0.1 0.05 0.025 0.0125 0.006
grid = -2 2 200
density = cosine
tol = 1e-8
max_sweeps = 30000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
)"},
        {"carlier_oscillation", R"(name = carlier_oscillation
label = oscillation cost, uniform marginals on mismatched intervals: two-branch coupling
family = oscillation
n = 2
epsilon = 0.01
anneal = 0.1 0.05 0.02
grid = -1 1 200
density = uniform
marginal_1 = 0 1 200 uniform
tol = 1e-8
max_sweeps = 4000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
)"},
        {"coulomb_n3_cosine", R"(name = coulomb_n3_cosine
label = 3-marginal Coulomb repulsion on a cosine profile
family = coulomb
n = 3
epsilon = 0.02
anneal = 0.2 0.1 0.05
grid = -5 5 200
density = cosine
tol = 1e-6
max_sweeps = 8000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
output = oracle_compare cyclic
)"},
        {"coulomb_n4_cosine", R"(name = coulomb_n4_cosine
label = 4-marginal Coulomb repulsion on a cosine profile (reduced grid)
family = coulomb
n = 4
epsilon = 0.02
anneal = 0.2 0.1 0.05
grid = -5 5 60
density = cosine
tol = 1e-6
max_sweeps = 8000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
output = oracle_compare cyclic
)"},
        {"coulomb_n5_cosine", R"(name = coulomb_n5_cosine
label = 5-marginal Coulomb repulsion on a cosine profile (reduced grid)
family = coulomb
n = 5
epsilon = 0.02
anneal = 0.2 0.1 0.05
grid = -5 5 30
density = cosine
tol = 1e-6
max_sweeps = 8000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
output = oracle_compare cyclic
)"},
        {"log_n3_cosine", R"(name = log_n3_cosine
label = 3-marginal logarithmic repulsion on a cosine profile
family = log
n = 3
epsilon = 0.01
anneal = 0.2 0.1 0.05 0.02
grid = -5 5 200
density = cosine
tol = 1e-6
max_sweeps = 8000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
)"},
        {"harmonic_pair", R"(name = harmonic_pair
label = 2-marginal quadratic sum cost: antitone optimal map
family = harmonic-sum
n = 2
epsilon = 0.005
grid = 0 1 1000
density = uniform
tol = 1e-8
max_sweeps = 4000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
output = oracle_compare antitone_pair
)"},
        {"harmonic_penalized", R"(name = harmonic_penalized
label = 3-marginal quadratic sum cost with a contact penalty selecting maps
family = penalized-harmonic
n = 3
tau = 0.1
epsilon = 5e-05
anneal = 0.05 0.02 0.01 0.005 0.002 0.001 0.0005 0.0002 0.0001
grid = -1 1 120
density = uniform
tol = 1e-5
max_sweeps = 8000
output = report
output = pair_projection 1 2
output = pair_projection 1 3
output = support 0.001 1 2
output = oracle_compare harmonic_triple
)"},
        {"harmonic_diffuse", R"(name = harmonic_diffuse
label = 3-marginal quadratic sum cost without penalty: diffuse coupling
family = harmonic-sum
n = 3
epsilon = 0.0005
anneal = 0.05 0.02 0.01 0.005 0.002 0.001
grid = -1 1 120
density = uniform
tol = 1e-8
max_sweeps = 6000
output = report
output = pair_projection 1 2
)"},
        {"det_radial_uniform", R"(name = det_radial_uniform
label = radial product cost, three uniform-ball marginals
family = product
n = 3
epsilon = 0.01
anneal = 0.1 0.05 0.02
grid = 0 0.5 100
density = ball 0.5
tol = 1e-8
max_sweeps = 4000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
output = oracle_compare radial_product
)"},
        {"det_radial_exponential", R"(name = det_radial_exponential
label = radial product cost, three identical exponential-type marginals
family = product
n = 3
epsilon = 0.05
grid = 0 3 300
density = radial-exp 4
tol = 1e-8
max_sweeps = 4000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
output = oracle_compare radial_product
)"},
        {"det_radial_mixed", R"(name = det_radial_mixed
label = radial product cost, three exponential-type marginals, mixed rates
family = product
n = 3
epsilon = 0.001
anneal = 0.5 0.2 0.1 0.05 0.02 0.01 0.005 0.002
marginal_1 = 0 4 120 radial-exp 4
marginal_2 = 0 4 120 radial-exp 2
marginal_3 = 0 4 120 radial-exp 1.5
tol = 1e-5
max_sweeps = 8000
output = report
output = pair_projection 1 2
output = support 0.001 1 2
output = oracle_compare radial_product
)"},
    };
    return entries;
}

inline ExperimentConfig load_bundled(const std::string& name) {
    for (const auto& e : experiment_catalog())
        if (name == e.name) {
            std::istringstream in(e.text);
            return parse_config(in);
        }
    throw ConfigError("no bundled config named " + name);
}

}  // namespace mmot
