#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <random>
#include <vector>

#include "mmot/solver.hpp"

using namespace mmot;

namespace {

// Grid whose two cell centers sit exactly at 0 and 1.
Grid1D two_point_grid() { return build_grid(-0.5, 1.5, 2); }

std::vector<DiscreteMeasure> uniform_marginals(const Grid1D& g, std::size_t n) {
    std::vector<DiscreteMeasure> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_density("uniform", {}, g));
    return out;
}

// Everything the engine streams, recomputed from eval_cost by enumeration.
struct Brute {
    double mass = 0.0, cost = 0.0, entropy = 0.0, kl = 0.0;
    double max_t = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> S;     // S[k][j]: contraction without a_k
    std::vector<std::vector<double>> proj;  // proj[ci*n+cj], row-major
    std::map<std::vector<std::size_t>, double> plan;
};

Brute brute_force(const CostSpec& spec, const std::vector<DiscreteMeasure>& mus,
                  const std::vector<std::vector<double>>& u, double eps) {
    const std::size_t n = mus.size();
    Brute b;
    b.S.resize(n);
    for (std::size_t k = 0; k < n; ++k) b.S[k].assign(mus[k].grid.m, 0.0);
    b.proj.resize(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) b.proj[i * n + j].assign(mus[i].grid.m * mus[j].grid.m, 0.0);

    std::vector<std::size_t> idx(n, 0);
    std::vector<double> x(n);
    for (;;) {
        for (std::size_t i = 0; i < n; ++i) x[i] = mus[i].grid.centers[idx[i]];
        const double c = eval_cost(spec, x);
        double usum = 0.0;
        bool dead = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (u[i][idx[i]] == -std::numeric_limits<double>::infinity()) dead = true;
            usum += u[i][idx[i]];
        }
        if (c != kInf && !dead) {
            const double t = (usum - c) / eps;
            if (t > b.max_t) b.max_t = t;
            const double g = std::exp(t);
            b.mass += g;
            b.cost += g * c;
            b.entropy += g * t;
            b.kl += g * (usum / eps);
            b.plan[idx] = g;
            for (std::size_t k = 0; k < n; ++k)
                b.S[k][idx[k]] += std::exp(t - u[k][idx[k]] / eps);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (i != j)
                        b.proj[i * n + j][idx[i] * mus[j].grid.m + idx[j]] += g;
        }
        std::size_t l = 0;
        while (l < n && ++idx[l] >= mus[l].grid.m) idx[l++] = 0;
        if (l == n) break;
    }
    return b;
}

}  // namespace

TEST_CASE("three-body contraction on the two-point grid") {
    const Grid1D g = two_point_grid();
    REQUIRE(g.centers[0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(g.centers[1] == Catch::Approx(1.0).margin(1e-15));

    CostSpec spec{CostFamily::harmonic_sum, 3};
    SolveOptions opts;
    opts.epsilon = 1.0;
    auto st = init_scaling_state(spec, uniform_marginals(g, 3), opts);

    // with unit scalings, S_0[0] sums exp(-|0 + y + z|^2) over y, z in {0, 1}
    const auto s0 = contract(st, 0);
    REQUIRE(s0[0] == Catch::Approx(1.0 + 2.0 * std::exp(-1.0) + std::exp(-4.0))
                         .epsilon(1e-12));
    REQUIRE(s0[1] == Catch::Approx(std::exp(-1.0) + 2.0 * std::exp(-4.0) +
                                   std::exp(-9.0))
                         .epsilon(1e-12));

    // the contraction integrates every scaling except a_k
    st.log_scalings[0][0] = 3.0;
    st.log_scalings[0][1] = -2.0;
    const auto s0_again = contract(st, 0);
    REQUIRE(s0_again[0] == s0[0]);
    REQUIRE(s0_again[1] == s0[1]);
    st.log_scalings[1][0] = 1.0;
    const auto s0_moved = contract(st, 0);
    REQUIRE(s0_moved[0] > s0[0]);
}

TEST_CASE("two-marginal contraction equals Gibbs row sums") {
    const Grid1D g = build_grid(0.0, 1.0, 6);
    CostSpec spec{CostFamily::coulomb, 2};
    SolveOptions opts;
    opts.epsilon = 0.5;
    auto st = init_scaling_state(spec, uniform_marginals(g, 2), opts);
    const auto s0 = contract(st, 0);
    for (std::size_t i = 0; i < g.m; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < g.m; ++j) {
            const std::array<double, 2> x{g.centers[i], g.centers[j]};
            row += gibbs_weight(spec, opts.epsilon, x);
        }
        REQUIRE(s0[i] == Catch::Approx(row).epsilon(1e-12));
    }
}

TEST_CASE("gibbs weight vanishes at coincidences") {
    CostSpec spec{CostFamily::coulomb, 2};
    REQUIRE(gibbs_weight(spec, 0.1, std::array<double, 2>{0.3, 0.3}) == 0.0);
    REQUIRE(gibbs_weight(spec, 0.1, std::array<double, 2>{0.3, 0.5}) ==
            Catch::Approx(std::exp(-5.0 / 0.1)));
}

TEST_CASE("block update pins the targeted marginal") {
    const Grid1D g = build_grid(0.0, 1.0, 8);
    CostSpec spec{CostFamily::coulomb, 3};
    SolveOptions opts;
    opts.epsilon = 0.8;
    const Grid1D h = g;
    std::vector<DiscreteMeasure> mus{
        make_density("uniform", {}, g), make_density("cosine", {}, h),
        measure_from_weights(g, {1, 2, 3, 4, 4, 3, 2, 1})};
    auto st = init_scaling_state(spec, mus, opts);

    const double first = block_update(st, 1);
    REQUIRE(first > 0.0);
    // marginal 1 now matches exactly: a second update is a no-op
    const double second = block_update(st, 1);
    REQUIRE(second <= 1e-12);

    // explicit check: exp(u_1/eps) * S_1 reproduces mu_1
    const auto s1 = contract(st, 1);
    for (std::size_t j = 0; j < g.m; ++j) {
        const double m1 = std::exp(st.log_scalings[1][j] / st.epsilon) * s1[j];
        REQUIRE(m1 == Catch::Approx(mus[1].weights[j]).epsilon(1e-10));
    }
}

TEST_CASE("streaming engine matches brute force on every family") {
    const Grid1D g = build_grid(0.1, 1.3, 4);
    const std::size_t n = 3;
    std::vector<DiscreteMeasure> mus{
        make_density("uniform", {}, g),
        measure_from_weights(g, {0.4, 0.3, 0.2, 0.1}),
        measure_from_weights(g, {0.1, 0.4, 0.4, 0.1})};

    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unif(-0.3, 0.2);
    std::vector<std::vector<double>> u(n);
    for (auto& ui : u) {
        ui.resize(g.m);
        for (double& v : ui) v = unif(rng);
    }

    const double eps = 0.7;
    for (const CostFamily f :
         {CostFamily::coulomb, CostFamily::log_repulsive, CostFamily::harmonic_sum,
          CostFamily::harmonic_pairwise, CostFamily::penalized_harmonic,
          CostFamily::carlier_oscillation, CostFamily::det_radial_product}) {
        CAPTURE(static_cast<int>(f));
        CostSpec spec{f, n, 1.0, 0.15};
        const Brute b = brute_force(spec, mus, u, eps);
        detail::Engine eng(spec, mus, eps, 1'000'000, 1);

        for (const bool shifted : {true, false}) {
            CAPTURE(shifted);
            for (std::size_t k = 0; k < n; ++k) {
                const auto ls = eng.contract_log(u, k, shifted);
                for (std::size_t j = 0; j < g.m; ++j)
                    REQUIRE(std::exp(ls[j]) ==
                            Catch::Approx(b.S[k][j]).epsilon(1e-10).margin(1e-300));
            }
            for (std::size_t ci = 0; ci < n; ++ci)
                for (std::size_t cj = 0; cj < n; ++cj) {
                    if (ci == cj) continue;
                    const auto p = eng.project(u, ci, cj, shifted);
                    const auto& q = b.proj[ci * n + cj];
                    for (std::size_t t = 0; t < p.size(); ++t)
                        REQUIRE(p[t] == Catch::Approx(q[t]).epsilon(1e-10).margin(1e-300));
                }
        }

        const auto fm = eng.moments(u);
        REQUIRE(fm.mass == Catch::Approx(b.mass).epsilon(1e-10));
        REQUIRE(fm.cost == Catch::Approx(b.cost).epsilon(1e-9).margin(1e-12));
        REQUIRE(fm.entropy == Catch::Approx(b.entropy).epsilon(1e-9).margin(1e-12));
        REQUIRE(fm.kl == Catch::Approx(b.kl).epsilon(1e-9).margin(1e-12));
        REQUIRE(fm.max_t == Catch::Approx(b.max_t).epsilon(1e-12).margin(1e-12));

        // support extraction returns exactly the entries above the cut
        const double eta = 1e-3;
        const auto sup = eng.support(u, eta, fm.max_t);
        std::size_t expected = 0;
        for (const auto& [idx, gmass] : b.plan)
            if (std::log(gmass) >= b.max_t + std::log(eta) - 1e-9) ++expected;
        REQUIRE(sup.size() + 2 >= expected);
        REQUIRE(sup.size() <= b.plan.size());
        for (const auto& e : sup) {
            const std::vector<std::size_t> key{e.idx[0], e.idx[1], e.idx[2]};
            REQUIRE(b.plan.count(key) == 1);
            REQUIRE(e.mass == Catch::Approx(b.plan.at(key)).epsilon(1e-9));
        }
    }
}

TEST_CASE("budget guard refuses oversized contractions") {
    const Grid1D g = build_grid(0.0, 1.0, 200);
    CostSpec spec{CostFamily::coulomb, 3};
    SolveOptions opts;
    opts.budget = 1'000'000;
    try {
        auto st = init_scaling_state(spec, uniform_marginals(g, 3), opts);
        contract(st, 0);
        FAIL("expected BudgetError");
    } catch (const BudgetError& e) {
        REQUIRE(e.required == Catch::Approx(8e6));
        REQUIRE(std::string(e.what()).find("budget") != std::string::npos);
    }
}

TEST_CASE("annealing schedule validation") {
    const Grid1D g = build_grid(0.0, 1.0, 4);
    CostSpec spec{CostFamily::coulomb, 2};
    const auto mus = uniform_marginals(g, 2);

    SolveOptions bad;
    bad.epsilon = 0.01;
    bad.anneal = {0.1, 0.2};  // not decreasing
    REQUIRE_THROWS_AS(ipfp_solve(spec, mus, bad), std::invalid_argument);

    SolveOptions below;
    below.epsilon = 0.01;
    below.anneal = {0.1, 0.001};  // overshoots the target
    REQUIRE_THROWS_AS(ipfp_solve(spec, mus, below), std::invalid_argument);

    SolveOptions ok;
    ok.epsilon = 0.05;
    ok.anneal = {0.2, 0.05};  // already ends at the target
    const auto [st, rep] = ipfp_solve(spec, mus, ok);
    REQUIRE(rep.converged);
}

TEST_CASE("solver determinism across thread counts") {
    const Grid1D g = build_grid(0.0, 1.0, 12);
    CostSpec spec{CostFamily::coulomb, 3};
    const auto mus = uniform_marginals(g, 3);

    SolveOptions o1;
    o1.epsilon = 0.3;
    o1.threads = 1;
    SolveOptions o4 = o1;
    o4.threads = 4;

    const auto [st1, rep1] = ipfp_solve(spec, mus, o1);
    const auto [st4, rep4] = ipfp_solve(spec, mus, o4);
    REQUIRE(rep1.sweeps == rep4.sweeps);
    REQUIRE(rep1.primal_cost == rep4.primal_cost);  // bit-identical
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < g.m; ++j)
            REQUIRE(st1.log_scalings[i][j] == st4.log_scalings[i][j]);

    // the MMOT_THREADS fallback picks the same deterministic path
    setenv("MMOT_THREADS", "3", 1);
    SolveOptions oe = o1;
    oe.threads = 0;
    const auto [ste, repe] = ipfp_solve(spec, mus, oe);
    unsetenv("MMOT_THREADS");
    REQUIRE(repe.primal_cost == rep1.primal_cost);
}

TEST_CASE("log and direct scaling agree at moderate epsilon") {
    const Grid1D g = build_grid(0.0, 1.0, 10);
    CostSpec spec{CostFamily::log_repulsive, 3};
    const auto mus = uniform_marginals(g, 3);

    SolveOptions lg;
    lg.epsilon = 0.2;
    lg.log_domain = true;
    SolveOptions dr = lg;
    dr.log_domain = false;

    const auto [stl, repl] = ipfp_solve(spec, mus, lg);
    const auto [stdir, repd] = ipfp_solve(spec, mus, dr);
    REQUIRE(repl.converged);
    REQUIRE(repd.converged);
    REQUIRE(repl.primal_cost == Catch::Approx(repd.primal_cost).epsilon(1e-8));
    REQUIRE(repl.dual_value == Catch::Approx(repd.dual_value).epsilon(1e-6));
}

TEST_CASE("infeasible instances surface as errors") {
    const Grid1D g = build_grid(0.0, 1.0, 2);
    CostSpec spec{CostFamily::coulomb, 2};
    // both marginals charge only the same cell: the kernel row is all zero
    std::vector<DiscreteMeasure> mus{measure_from_weights(g, {1.0, 0.0}),
                                     measure_from_weights(g, {1.0, 0.0})};
    SolveOptions opts;
    opts.epsilon = 0.5;
    REQUIRE_THROWS_AS(ipfp_solve(spec, mus, opts), InfeasibleError);
}

TEST_CASE("converged runs satisfy weak duality and tolerance") {
    const Grid1D g = build_grid(0.0, 1.0, 16);
    CostSpec spec{CostFamily::coulomb, 3};
    const auto mus = uniform_marginals(g, 3);
    SolveOptions opts;
    opts.epsilon = 0.25;
    opts.tol = 1e-9;
    const auto [st, rep] = ipfp_solve(spec, mus, opts);
    REQUIRE(rep.converged);
    for (const double e : rep.marginal_errors) REQUIRE(e < opts.tol);
    REQUIRE(rep.dual_value <= rep.primal_cost + 1e-12);
    REQUIRE(rep.duality_gap >= -1e-12);
    REQUIRE(rep.dual_feasibility_violation >= 0.0);
    REQUIRE(std::isfinite(rep.entropy));
    REQUIRE(std::isfinite(rep.kl_objective));
}

TEST_CASE("entropic bias shrinks along an annealing schedule") {
    const Grid1D g = build_grid(0.0, 1.0, 24);
    CostSpec spec{CostFamily::harmonic_sum, 2};
    const auto mus = uniform_marginals(g, 2);

    double prev = std::numeric_limits<double>::infinity();
    for (const double eps : {0.1, 0.02, 0.004}) {
        SolveOptions opts;
        opts.epsilon = eps;
        opts.anneal = {0.1, 0.02};
        std::erase_if(opts.anneal, [eps](double a) { return a <= eps; });
        const auto [st, rep] = ipfp_solve(spec, mus, opts);
        REQUIRE(rep.converged);
        REQUIRE(rep.primal_cost < prev);
        prev = rep.primal_cost;
    }
    // the antitone map on uniform [0,1] pairs x with 1-x: cost 1 in the limit
    REQUIRE(prev == Catch::Approx(1.0).margin(0.02));
}
