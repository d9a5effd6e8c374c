#include "doctest.h"

#include <cmath>
#include <string>

#include "esm/bvu.hpp"
#include "esm/error.hpp"
#include "esm/world.hpp"

using namespace esm;

namespace {

double tanh_closed_form(double z)
{
    const double e = std::exp(2.0 * z);
    return (e - 1.0) / (e + 1.0);
}

}  // namespace

TEST_CASE("merge_maps matches the closed form on random cells")
{
    Rng rng(1);
    for (double lambda : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        Grid warped(25, 40);
        Grid obs(25, 40);
        for (double& v : warped.values())
            v = rng.uniform(-1.0, 1.0);
        for (double& v : obs.values())
            v = static_cast<double>(static_cast<int>(rng.index(3))) - 1.0;
        const Grid out = merge_maps(warped, obs, {lambda});
        for (std::size_t k = 0; k < out.size(); ++k) {
            const double z = lambda * obs.values()[k] + (1.0 - lambda) * warped.values()[k];
            CHECK(std::abs(out.values()[k] - tanh_closed_form(z)) <= 1e-12);
        }
    }
}

TEST_CASE("merge_maps examples")
{
    const Grid zeros(32, 32);
    CHECK(merge_maps(zeros, zeros, {0.5}) == zeros);

    Grid one(1, 1, 1.0);
    CHECK(merge_maps(one, one, {0.5})(0, 0) == doctest::Approx(0.761594).epsilon(1e-6));

    Rng rng(2);
    Grid obs(8, 8);
    Grid a(8, 8);
    Grid b(8, 8);
    for (std::size_t k = 0; k < obs.size(); ++k) {
        obs.values()[k] = rng.uniform(-1, 1);
        a.values()[k] = rng.uniform(-1, 1);
        b.values()[k] = rng.uniform(-1, 1);
    }
    const Grid out_a = merge_maps(a, obs, {1.0});
    CHECK(out_a == merge_maps(b, obs, {1.0}));
    for (std::size_t k = 0; k < obs.size(); ++k)
        CHECK(std::abs(out_a.values()[k] - std::tanh(obs.values()[k])) <= 1e-12);

    CHECK_THROWS_AS(merge_maps(Grid(2, 2), Grid(3, 3), {0.5}), Error);
    CHECK_THROWS_AS(merge_maps(Grid(2, 2), Grid(2, 2), {1.5}), Error);
}

TEST_CASE("merge output stays strictly inside (-1, 1) and is bounded by its inputs")
{
    Rng rng(3);
    Grid warped(32, 32);
    Grid obs(32, 32);
    for (int round = 0; round < 20; ++round) {
        for (std::size_t k = 0; k < warped.size(); ++k) {
            warped.values()[k] = rng.uniform(-0.999, 0.999);
            obs.values()[k] = static_cast<double>(static_cast<int>(rng.index(3))) - 1.0;
        }
        const Grid out = merge_maps(warped, obs, {rng.uniform01()});
        for (std::size_t k = 0; k < out.size(); ++k) {
            const double v = out.values()[k];
            CHECK(v > -1.0);
            CHECK(v < 1.0);
            const double bound =
                std::tanh(std::max(std::abs(obs.values()[k]), std::abs(warped.values()[k])));
            CHECK(std::abs(v) <= bound + 1e-15);
        }
    }
}

TEST_CASE("bvu_step examples")
{
    const Grid zeros(kLocalSize, kLocalSize);
    CHECK(bvu_step(zeros, {}, zeros, {0.5}) == zeros);

    const MazeMap m = parse_maze("cell 0.24\n###\n#S#\n###\n");
    SensorConfig s;
    s.fov = 2 * kPi;
    const Grid obs = observe_local(m, m.start(), s);
    const Grid out = bvu_step(zeros, {}, obs, {0.5});
    for (std::size_t k = 0; k < out.size(); ++k)
        CHECK(out.values()[k] == doctest::Approx(std::tanh(0.5 * obs.values()[k])).epsilon(1e-12));

    LocalMapper mapper;
    CHECK(mapper.step({}, obs) == out);
    mapper.reset();
    CHECK(mapper.map() == zeros);
}

TEST_CASE("rollouts keep free space and agree with ground truth")
{
    const SensorConfig sensor;
    for (const char* name : {"corridor", "room", "lshape", "tjunction", "rooms"}) {
        CAPTURE(name);
        const std::string base = std::string(ESM_FIXTURES "/") + name;
        const MazeMap m = load_maze(base + ".maze");
        const Trajectory traj = load_trajectory_file(base + "_32.csv", m);
        const auto poses = rollout(m.start(), traj.steps);
        REQUIRE(traj.steps.size() == 32);

        LocalMapper mapper;
        int agree = 0;
        int checked = 0;
        for (std::size_t t = 1; t < poses.size(); ++t) {
            const Grid obs = observe_local(m, poses[t], sensor);
            const Grid& map = mapper.step(traj.steps[t - 1], obs);
            for (std::size_t k = 0; k < map.size(); ++k) {
                const double o = obs.values()[k];
                if (o == 0.0)
                    continue;
                ++checked;
                agree += (o > 0.0) == (map.values()[k] > 0.0);
            }
        }
        const std::span<const Pose> window(poses.data() + 1, poses.size() - 1);
        const Grid gt = gt_accumulated_local(m, window, sensor);
        int free_kept = 0;
        int free_total = 0;
        for (std::size_t k = 0; k < gt.size(); ++k) {
            if (gt.values()[k] != 1.0)
                continue;
            ++free_total;
            free_kept += mapper.map().values()[k] > 0.0;
        }
        CHECK(agree >= 0.99 * checked);
        MESSAGE(name << ": window free cells with positive belief " << free_kept << "/" << free_total);
    }
}

// Expected to fail: unobserved cells decay toward zero under the merge and
// bilinear resampling mixes them with negative wall cells, which flips some of
// them negative. Kept so a behaviour change is noticed.
TEST_CASE("corridor rollout never loses positive belief" * doctest::should_fail())
{
    const MazeMap m = load_maze(ESM_FIXTURES "/corridor.maze");
    const Trajectory traj = load_trajectory_file(ESM_FIXTURES "/corridor_32.csv", m);
    const auto poses = rollout(m.start(), traj.steps);
    LocalMapper mapper;
    long prev = 0;
    for (std::size_t t = 1; t < poses.size(); ++t) {
        const Grid& map = mapper.step(traj.steps[t - 1], observe_local(m, poses[t], {}));
        long positive = 0;
        for (double v : map.values())
            positive += v > 0.0;
        CHECK(positive >= prev);
        prev = positive;
    }
}
