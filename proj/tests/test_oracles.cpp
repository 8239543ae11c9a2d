#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "mmot/oracles.hpp"

using namespace mmot;

TEST_CASE("cyclic map on a uniform grid is an exact index shift") {
    const Grid1D g = build_grid(0.0, 1.0, 90);
    const auto mu = make_density("uniform", {}, g);

    const GridMap t1 = cyclic_monge_map(mu, 3, 1);
    const GridMap t2 = cyclic_monge_map(mu, 3, 2);
    for (std::size_t j = 0; j < g.m; ++j) {
        REQUIRE(t1.cell[j] == (j + 30) % 90);
        REQUIRE(t2.cell[j] == (j + 60) % 90);
    }

    // the third iterate closes the cycle
    for (std::size_t j = 0; j < g.m; ++j)
        REQUIRE(t1.cell[t1.cell[t1.cell[j]]] == j);

    // point evaluation snaps to the source cell then maps
    REQUIRE(t1(g.centers[5]) == Catch::Approx(g.centers[35]));
    REQUIRE(t1(-10.0) == Catch::Approx(g.centers[30]));  // clamps to cell 0
}

TEST_CASE("cyclic map pushes any marginal to itself in quantile space") {
    const Grid1D g = build_grid(0.0, 1.0, 200);
    for (const char* density : {"uniform", "cosine"}) {
        const auto mu = make_density(density, {}, g);
        for (unsigned n : {2u, 3u, 5u})
            for (unsigned it = 1; it < n; ++it)
                REQUIRE(pushforward_tv(mu, cyclic_map_pieces(n, it)) < 1e-12);
    }
}

TEST_CASE("cyclic plan cost sums the orbit") {
    const Grid1D g = build_grid(0.0, 1.0, 90);
    const auto mu = make_density("uniform", {}, g);
    CostSpec spec{CostFamily::coulomb, 3};
    const double total = cyclic_plan_cost(spec, mu);

    // manual: each source cell pays c(x, x+30 cells, x+60 cells) with wrap
    double manual = 0.0;
    for (std::size_t j = 0; j < g.m; ++j) {
        const std::array<double, 3> x{g.centers[j], g.centers[(j + 30) % 90],
                                      g.centers[(j + 60) % 90]};
        manual += mu.weights[j] * eval_cost(spec, x);
    }
    REQUIRE(total == Catch::Approx(manual).epsilon(1e-12));

    // map_plan_cost agrees when handed the same iterates
    const std::vector<GridMap> maps{cyclic_monge_map(mu, 3, 1),
                                    cyclic_monge_map(mu, 3, 2)};
    REQUIRE(map_plan_cost(spec, mu, maps) == Catch::Approx(total).epsilon(1e-12));
    REQUIRE_THROWS_AS(map_plan_cost(spec, mu, {maps[0]}), std::invalid_argument);
}

TEST_CASE("digit-shift maps are permutations with exact orbit sums") {
    for (unsigned base : {2u, 3u, 4u, 5u}) {
        for (unsigned depth : {1u, 2u, 3u}) {
            const FractalShiftMap f = fractal_shift_map(base, depth);
            CAPTURE(base, depth);

            // bijectivity: the image is a permutation of all cells
            std::vector<std::size_t> image(f.cells);
            for (std::size_t j = 0; j < f.cells; ++j) image[j] = f.step(j);
            std::sort(image.begin(), image.end());
            for (std::size_t j = 0; j < f.cells; ++j) REQUIRE(image[j] == j);

            for (std::size_t j = 0; j < f.cells; ++j) {
                // the base-th iterate closes every orbit
                REQUIRE(f.iterate(j, base) == j);
                // orbit center sum is exactly base/2, certified in integers
                REQUIRE(2 * f.orbit_index_sum(j) ==
                        static_cast<long long>(base) *
                            static_cast<long long>(f.cells - 1));
            }
        }
    }
}

TEST_CASE("the binary digit shift is the reflection 1 - x") {
    for (unsigned depth : {1u, 4u, 9u}) {
        const FractalShiftMap f = fractal_shift_map(2, depth);
        for (std::size_t j = 0; j < f.cells; ++j) {
            REQUIRE(f.step(j) == f.cells - 1 - j);
            REQUIRE(f.center(j) + f.center(f.step(j)) == Catch::Approx(1.0));
        }
    }
}

TEST_CASE("fractal map guards its inputs") {
    REQUIRE_THROWS_AS(fractal_shift_map(1, 3), std::invalid_argument);
    REQUIRE_THROWS_AS(fractal_shift_map(2, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(fractal_shift_map(2, 60), std::invalid_argument);
}

TEST_CASE("three-body harmonic maps cancel the coordinate sum") {
    auto [T, S] = harmonic_pair_maps();
    for (double x = -1.0; x <= 1.0; x += 0.01) {
        REQUIRE(x + T(x) + S(x) == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(T(x) >= -1.0);
        REQUIRE(T(x) <= 1.0);
        REQUIRE(S(x) >= -1.0);
        REQUIRE(S(x) <= 1.0);
    }
    // both maps preserve the uniform measure on [-1,1]
    const Grid1D g = build_grid(-1.0, 1.0, 500);
    const auto mu = make_density("half-lebesgue", {}, g);
    REQUIRE(pushforward_tv(mu, harmonic_T_pieces()) < 1e-12);
    REQUIRE(pushforward_tv(mu, harmonic_S_pieces()) < 1e-12);
}

TEST_CASE("quantile pushforward rejects degenerate pieces") {
    const Grid1D g = build_grid(0.0, 1.0, 4);
    const auto mu = make_density("uniform", {}, g);
    REQUIRE_THROWS_AS(quantile_pushforward(mu, {{0.5, 0.5, 0.0, 1.0}}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(quantile_pushforward(mu, {{0.0, 1.0, 0.0, 0.0}}),
                      std::invalid_argument);
    // a genuinely wrong map is loudly wrong: half the mass lands twice
    const double tv = pushforward_tv(mu, {{0.0, 1.0, 0.0, 0.5}, {0.0, 1.0, 0.0, 0.5}});
    REQUIRE(tv > 0.2);
}

TEST_CASE("plane-supported plan reproduces the flat marginal") {
    // surface density sqrt(3) s / 6 yields marginal density exactly 1/2
    for (double x = 0.02; x <= 1.0; x += 0.02)
        REQUIRE(diffuse_plane_marginal(diffuse_plane_density, x) ==
                Catch::Approx(0.5).margin(1e-12));
    // even in x
    REQUIRE(diffuse_plane_marginal(diffuse_plane_density, -0.4) ==
            Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("surface density is recovered from the marginal") {
    const auto flat = [](double) { return 0.5; };
    for (double x = 0.1; x <= 1.0; x += 0.05)
        REQUIRE(diffuse_density_from_marginal(flat, x) ==
                Catch::Approx(diffuse_plane_density(x)).margin(1e-4));
    REQUIRE_THROWS_AS(diffuse_density_from_marginal(flat, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(diffuse_density_from_marginal(flat, 1.5), std::invalid_argument);
}

TEST_CASE("radial branch map tiles the quantile interval") {
    const Grid1D g = build_grid(0.0, 1.0, 300);
    for (const char* density : {"uniform", "ball"}) {
        const auto mu = make_density(density, density == std::string("ball")
                                                  ? std::vector<double>{1.0}
                                                  : std::vector<double>{},
                                     g);
        for (unsigned n : {2u, 3u, 4u, 5u}) {
            CAPTURE(density, n);
            REQUIRE(pushforward_tv(mu, seidl_map_pieces(n)) < 1e-12);
        }
    }
}

TEST_CASE("radial branch map is an index bijection on divisible uniform grids") {
    const Grid1D g = build_grid(0.0, 1.0, 120);
    const auto mu = make_density("uniform", {}, g);
    for (unsigned n : {2u, 3u, 4u, 5u}) {
        const GridMap s = seidl_radial_map(mu, n);
        std::vector<std::size_t> image = s.cell;
        std::sort(image.begin(), image.end());
        for (std::size_t j = 0; j < g.m; ++j) REQUIRE(image[j] == j);
    }

    // n = 2 lower branch is the antitone reflection
    const GridMap s2 = seidl_radial_map(mu, 2);
    for (std::size_t j = 0; j < 60; ++j) REQUIRE(s2.cell[j] == g.m - 1 - j);
}

TEST_CASE("monotone rearrangements solve the product family") {
    SECTION("identical ball marginals give the identity and value R^3/2") {
        const Grid1D g = build_grid(0.0, 0.5, 400);
        const auto mu = make_density("ball", {0.5}, g);
        const std::vector<DiscreteMeasure> mus{mu, mu, mu};
        const RadialSolution sol = det_radial_solution(mus);
        REQUIRE(sol.maps.size() == 2);
        for (std::size_t j = 0; j < g.m; ++j) {
            REQUIRE(sol.maps[0].cell[j] == j);
            REQUIRE(sol.maps[1].cell[j] == j);
        }
        // E r^3 under 3 r^2 / R^3 on [0, R] is R^3 / 2 = 0.0625
        REQUIRE(sol.value == Catch::Approx(0.0625).margin(5e-4));
    }

    SECTION("mixed rates give monotone maps consistent with the plan cost") {
        const Grid1D g = build_grid(0.0, 4.0, 200);
        const std::vector<DiscreteMeasure> mus{
            make_density("radial-exp", {4.0}, g), make_density("radial-exp", {2.0}, g),
            make_density("radial-exp", {1.5}, g)};
        const RadialSolution sol = det_radial_solution(mus);
        for (const auto& h : sol.maps)
            for (std::size_t j = 1; j < g.m; ++j)
                REQUIRE(h.cell[j] >= h.cell[j - 1]);

        CostSpec spec{CostFamily::det_radial_product, 3};
        REQUIRE(map_plan_cost(spec, mus[0], sol.maps) ==
                Catch::Approx(-sol.value).epsilon(1e-12));
    }
}

TEST_CASE("hyperplane value bounds every coupling from below") {
    const Grid1D g = build_grid(-1.0, 1.0, 5);
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    auto random_measure = [&] {
        std::vector<double> w(g.m);
        for (double& v : w) v = unif(rng);
        return measure_from_weights(g, std::move(w));
    };
    const std::vector<DiscreteMeasure> mus{random_measure(), random_measure(),
                                           random_measure()};
    const double floor = flat_plan_value(mus);

    CostSpec spec{CostFamily::harmonic_sum, 3};
    const std::size_t m = g.m;
    std::vector<double> plan(m * m * m);
    auto at = [m](std::size_t a, std::size_t b, std::size_t c) {
        return (a * m + b) * m + c;
    };
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
            for (std::size_t c = 0; c < m; ++c)
                plan[at(a, b, c)] =
                    mus[0].weights[a] * mus[1].weights[b] * mus[2].weights[c];

    std::uniform_int_distribution<std::size_t> cell(0, m - 1);
    std::uniform_int_distribution<int> maskd(1, 6);  // proper coordinate subsets
    for (int trial = 0; trial < 100; ++trial) {
        // marginal-preserving perturbation: move mass delta between the
        // corners of a coordinate-swap rectangle
        for (int move = 0; move < 10; ++move) {
            const std::size_t a[3] = {cell(rng), cell(rng), cell(rng)};
            const std::size_t b[3] = {cell(rng), cell(rng), cell(rng)};
            const int mask = maskd(rng);
            std::size_t sa[3], sb[3];
            for (int i = 0; i < 3; ++i) {
                const bool sw = (mask >> i) & 1;
                sa[i] = sw ? b[i] : a[i];
                sb[i] = sw ? a[i] : b[i];
            }
            const double delta =
                0.5 * std::min(plan[at(a[0], a[1], a[2])], plan[at(b[0], b[1], b[2])]);
            plan[at(a[0], a[1], a[2])] -= delta;
            plan[at(b[0], b[1], b[2])] -= delta;
            plan[at(sa[0], sa[1], sa[2])] += delta;
            plan[at(sb[0], sb[1], sb[2])] += delta;
        }
        double cost = 0.0;
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b)
                for (std::size_t c = 0; c < m; ++c) {
                    const std::array<double, 3> x{g.centers[a], g.centers[b],
                                                  g.centers[c]};
                    cost += plan[at(a, b, c)] * eval_cost(spec, x);
                }
        REQUIRE(cost >= floor - 1e-12);
    }
}
