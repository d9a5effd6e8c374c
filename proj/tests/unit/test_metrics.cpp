#include "doctest.h"

#include <cmath>
#include <vector>

#include "esm/error.hpp"
#include "esm/metrics.hpp"
#include "esm/world.hpp"

using namespace esm;

namespace {

constexpr int kCells = 100000;

std::vector<double> uniform_cells(Rng& rng, int n = kCells)
{
    std::vector<double> v(n);
    for (double& x : v)
        x = rng.uniform01();
    return v;
}

std::vector<double> binary_cells(Rng& rng, int n = kCells)
{
    std::vector<double> v(n);
    for (double& x : v)
        x = rng.index(2) ? 1.0 : 0.0;
    return v;
}

// Two-pass Pearson coefficient.
double pearson(const std::vector<double>& a, const std::vector<double>& b)
{
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Shannon entropy (bits) of the values' 16-bin histogram.
double entropy16(const std::vector<double>& v)
{
    std::vector<double> count(16, 0.0);
    for (double x : v)
        count[std::min(15, static_cast<int>(x * 16))] += 1.0;
    double h = 0.0;
    for (double c : count)
        if (c > 0)
            h -= c / v.size() * std::log2(c / v.size());
    return h;
}

}  // namespace

TEST_CASE("map_mse")
{
    Rng rng(1);
    const std::vector<double> a = uniform_cells(rng, 100);
    CHECK(map_mse(a, a) == 0.0);
    CHECK(map_mse(Grid(4, 4, 1.0), Grid(4, 4, 0.0)) == 1.0);
    CHECK_THROWS_AS(map_mse(Grid(4, 4), Grid(4, 5)), Error);

    const auto u = uniform_cells(rng);
    const auto b = binary_cells(rng);
    CHECK(std::abs(map_mse(u, b) - 1.0 / 3.0) <= 0.01);

    std::vector<double> mask(a.size(), 0.0);
    mask[3] = 1.0;
    std::vector<double> other = a;
    other[3] += 0.5;
    other[7] += 0.25;
    CHECK(map_mse(a, other, mask) == doctest::Approx(0.25));
}

TEST_CASE("map_correlation")
{
    Rng rng(2);
    const auto gt = binary_cells(rng, 1000);
    CHECK(map_correlation(gt, gt).value == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> inv(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i)
        inv[i] = 1.0 - gt[i];
    CHECK(map_correlation(inv, gt).value == doctest::Approx(-1.0).epsilon(1e-12));

    const auto u = uniform_cells(rng);
    const auto g = binary_cells(rng);
    const Correlation c = map_correlation(u, g);
    CHECK(std::abs(c.value) < 0.02);
    CHECK(c.value == doctest::Approx(pearson(u, g)).epsilon(1e-9));
    CHECK(map_correlation(g, u).value == doctest::Approx(c.value).epsilon(1e-12));

    const std::vector<double> constant(1000, 0.5);
    const Correlation d = map_correlation(gt, constant);
    CHECK(d.degenerate);
    CHECK(d.value == 0.0);
}

TEST_CASE("map_mutual_information")
{
    Rng rng(3);
    const auto gt = binary_cells(rng, 5000);
    CHECK(map_mutual_information(gt, gt) == doctest::Approx(entropy16(gt)).epsilon(1e-12));
    const auto u = uniform_cells(rng, 5000);
    CHECK(map_mutual_information(u, u) == doctest::Approx(entropy16(u)).epsilon(1e-12));

    const auto a = uniform_cells(rng);
    const auto b = uniform_cells(rng);
    const double mi = map_mutual_information(a, b);
    CHECK(mi >= 0.0);
    CHECK(mi < 0.01);
    CHECK(map_mutual_information(b, a) == doctest::Approx(mi).epsilon(1e-12));

    CHECK(map_mutual_information(a, std::vector<double>(a.size(), 1.0)) == 0.0);
    CHECK_THROWS_AS(map_mutual_information(a, b, 1), Error);
    CHECK_THROWS_AS(map_mutual_information(a, gt), Error);
}

TEST_CASE("metric ranges hold on random maps")
{
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const auto a = uniform_cells(rng, 500);
        const auto b = rng.index(2) ? binary_cells(rng, 500) : uniform_cells(rng, 500);
        const double mse = map_mse(a, b);
        CHECK(mse >= 0.0);
        CHECK(mse <= 1.0);
        const double c = map_correlation(a, b).value;
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);
        CHECK(map_mutual_information(a, b) >= 0.0);
    }
}

TEST_CASE("normalization and observed region")
{
    Grid b(1, 3);
    b(0, 0) = -1.0;
    b(0, 1) = 0.0;
    b(0, 2) = 1.0;
    const Grid n = normalize_belief(b);
    CHECK(n(0, 0) == 0.0);
    CHECK(n(0, 1) == 0.5);
    CHECK(n(0, 2) == 1.0);

    Grid gt(5, 5);
    gt(2, 2) = 1.0;
    const Grid region = observed_region(gt);
    double count = 0.0;
    for (double v : region.values())
        count += v;
    CHECK(count == 9.0);
    CHECK(region(1, 1) == 1.0);
    CHECK(region(0, 0) == 0.0);
}

TEST_CASE("baselines")
{
    Rng a(5);
    Rng b(5);
    const Grid ga = baseline_chance(316, 317, a);
    CHECK(ga == baseline_chance(316, 317, b));
    double mean = 0.0;
    for (double v : ga.values())
        mean += v;
    mean /= static_cast<double>(ga.size());
    CHECK(std::abs(mean - 0.5) <= 0.005);

    Rng rng(6);
    Grid gt(316, 317);
    for (double& v : gt.values())
        v = static_cast<double>(rng.index(2));
    CHECK(std::abs(map_mse(ga, gt) - 1.0 / 3.0) <= 0.01);

    Grid view(8, 8);
    for (double& v : view.values())
        v = rng.uniform(-1, 1);
    CHECK(baseline_pixelwise_matcher(view, view) == 0.0);
    Grid neg = view;
    double expect = 0.0;
    for (std::size_t k = 0; k < neg.size(); ++k) {
        neg.values()[k] = -view.values()[k];
        expect += 4.0 * view.values()[k] * view.values()[k];
    }
    CHECK(baseline_pixelwise_matcher(view, neg) ==
          doctest::Approx(-expect / static_cast<double>(view.size())).epsilon(1e-12));
    CHECK_THROWS_AS(baseline_pixelwise_matcher(view, Grid(8, 9)), Error);
}

TEST_CASE("ground-truth closures")
{
    std::vector<Pose> poses;
    for (int k = 0; k < 10; ++k)
        poses.push_back({0.1 * k, 0.0, 0.0});
    for (int k = 0; k < 10; ++k)
        poses.push_back({0.9 - 0.1 * k, 0.0, 0.0});
    const auto pairs = ground_truth_closures(poses, 0.05, 3);
    for (const auto& [t, u] : pairs) {
        CHECK(t - u > 3);
        CHECK(norm(poses[t].position() - poses[u].position()) <= 0.05);
    }
    // Step 10 sits on step 9 but is too recent; step 19 returns to step 0.
    bool has_19_0 = false;
    for (const auto& [t, u] : pairs) {
        CHECK_FALSE((t == 10 && u == 9));
        has_19_0 = has_19_0 || (t == 19 && u == 0);
    }
    CHECK(has_19_0);
}

TEST_CASE("pr_curve examples")
{
    const std::vector<std::pair<long, long>> gt{{20, 2}, {21, 3}, {30, 10}};
    std::vector<ClosureCandidate> oracle{{20, 2, 0.1}, {21, 4, 0.2}, {30, 11, 0.3}};
    const PRCurve perfect = pr_curve(oracle, gt, 2);
    CHECK(perfect.positives == 3);
    for (const PRPoint& p : perfect.points)
        CHECK(p.precision == 1.0);
    CHECK(perfect.points.back().recall == 1.0);
    CHECK(perfect.auc == doctest::Approx(1.0));

    const double alphas[] = {0.1, 0.5};
    const PRCurve nothing = pr_curve(std::vector<ClosureCandidate>{}, gt, 2, alphas);
    for (const PRPoint& p : nothing.points) {
        CHECK(p.recall == 0.0);
        CHECK(p.precision == 1.0);
        CHECK(p.no_detections);
    }

    // Slack: a match 3 steps off is a false positive with slack 2.
    std::vector<ClosureCandidate> mixed{{20, 5, 0.1}, {21, 3, 0.2}, {25, 1, 0.3}, {30, 10, 0.4}};
    const PRCurve c = pr_curve(mixed, gt, 2);
    REQUIRE(c.points.size() == 4);
    CHECK(c.points[0].precision == 0.0);
    CHECK(c.points[1].precision == doctest::Approx(0.5));
    CHECK(c.points[1].recall == doctest::Approx(1.0 / 3));
    CHECK(c.points[2].precision == doctest::Approx(1.0 / 3));
    CHECK(c.points[3].precision == doctest::Approx(0.5));
    CHECK(c.points[3].recall == doctest::Approx(2.0 / 3));

    CHECK_THROWS_AS(pr_curve(mixed, std::vector<std::pair<long, long>>{}, 2), Error);
}

TEST_CASE("recall is non-decreasing in the threshold")
{
    Rng rng(7);
    std::vector<std::pair<long, long>> gt;
    for (long t = 50; t < 200; t += 3)
        gt.emplace_back(t, t - 40);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ClosureCandidate> cands;
        for (long t = 0; t < 200; ++t)
            cands.push_back({t, t - 40 + static_cast<long>(rng.index(7)) - 3, rng.uniform01()});
        const PRCurve c = pr_curve(cands, gt, 2);
        for (std::size_t i = 1; i < c.points.size(); ++i) {
            CHECK(c.points[i].alpha > c.points[i - 1].alpha);
            CHECK(c.points[i].recall >= c.points[i - 1].recall);
        }
        for (const PRPoint& p : c.points) {
            CHECK(p.precision >= 0.0);
            CHECK(p.precision <= 1.0);
        }
        CHECK(c.auc >= 0.0);
        CHECK(c.auc <= 1.0);
    }
}

TEST_CASE("random detector on the figure-eight fixture")
{
    const MazeMap maze = load_maze(ESM_FIXTURES "/figure8.maze");
    const Trajectory traj = load_trajectory_file(ESM_FIXTURES "/figure8.csv", maze);
    const auto poses = rollout(maze.start(), traj.steps);
    const auto gt = ground_truth_closures(poses, 2 * kLocalCell, 64);
    REQUIRE_FALSE(gt.empty());

    std::vector<ClosureCandidate> queries;
    for (long t = 1; t < static_cast<long>(poses.size()); ++t)
        queries.push_back({t, 0, 0.0});
    std::size_t positive_steps = 0;
    {
        std::vector<long> seen;
        for (const auto& [t, u] : gt)
            if (seen.empty() || seen.back() != t)
                seen.push_back(t);
        positive_steps = seen.size();
    }
    const double rate = static_cast<double>(positive_steps) / static_cast<double>(queries.size());

    double mean_auc = 0.0;
    const int runs = 20;
    for (int s = 0; s < runs; ++s) {
        Rng rng(100 + s);
        const auto cands = random_detector(queries, gt, rng);
        mean_auc += pr_curve(cands, gt, 2).auc;
    }
    mean_auc /= runs;
    MESSAGE("random detector AUC " << mean_auc << ", positive rate " << rate);
    CHECK(std::abs(mean_auc - rate) <= 0.05);
}
