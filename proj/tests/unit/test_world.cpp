#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "esm/error.hpp"
#include "esm/world.hpp"

using namespace esm;

namespace {

std::string slurp(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ErrorCode code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an esm::Error");
    return ErrorCode::InvalidArgument;
}

// True when the open segment a-b passes through the interior of the square
// [x0, x0+s) x [y0, y0+s) (Liang-Barsky clipping).
bool segment_enters_square(Vec2 a, Vec2 b, double x0, double y0, double s)
{
    const double eps = 1e-9;
    double t0 = 0.0;
    double t1 = 1.0;
    const double d[2] = {b.x - a.x, b.y - a.y};
    const double lo[2] = {x0 + eps, y0 + eps};
    const double hi[2] = {x0 + s - eps, y0 + s - eps};
    const double p[2] = {a.x, a.y};
    for (int k = 0; k < 2; ++k) {
        if (d[k] == 0.0) {
            if (p[k] <= lo[k] || p[k] >= hi[k])
                return false;
            continue;
        }
        double ta = (lo[k] - p[k]) / d[k];
        double tb = (hi[k] - p[k]) / d[k];
        if (ta > tb)
            std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 >= t1)
            return false;
    }
    return true;
}

// Exhaustive line-of-sight oracle over every wall cell of the maze; points on
// a wall boundary count as visible.
bool line_of_sight(const MazeMap& m, Vec2 a, Vec2 b)
{
    const double s = m.cell_size();
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (m.is_wall(r, c) && segment_enters_square(a, b, c * s, r * s, s))
                return false;
    return true;
}

Vec2 sample_point(const Pose& p, int i, int j)
{
    const double f = (i - kLocalSize / 2) * kLocalCell;
    const double l = (j - kLocalSize / 2) * kLocalCell;
    return {p.x + f * std::cos(p.theta) - l * std::sin(p.theta),
            p.y + f * std::sin(p.theta) + l * std::cos(p.theta)};
}

Pose random_free_pose(const MazeMap& m, Rng& rng)
{
    while (true) {
        const Pose p{rng.uniform(0, m.width_m()), rng.uniform(0, m.height_m()), rng.uniform(-kPi, kPi)};
        if (!m.is_wall_at(p.position()))
            return p;
    }
}

int count_free(const Grid& g)
{
    int n = 0;
    for (double v : g.values())
        n += v > 0.5;
    return n;
}

}  // namespace

TEST_CASE("parse_maze examples")
{
    const MazeMap one = parse_maze("cell 0.5\n###\n#S#\n###\n");
    CHECK(one.free_cell_count() == 1);
    CHECK(one.start().x == doctest::Approx(0.75));
    CHECK(one.start().y == doctest::Approx(0.75));
    CHECK(one.start().theta == 0.0);

    CHECK(code_of([] { parse_maze("cell 0.5\n####\n#SS#\n####\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_maze("cell 0.5\n###\n#S\n###\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_maze("cell 0.5\n###\n#Sx\n###\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_maze("###\n#S#\n###\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_maze("cell 0.5\n###\n#S.\n###\n"); }) == ErrorCode::InvalidMaze);
    CHECK(code_of([] { parse_maze("cell 0.5\n###\n#.#\n###\n"); }) == ErrorCode::InvalidMaze);
    CHECK_NOTHROW(parse_maze("# comment\ncell 0.5\n#\n###\n#S#\n###\n"));
}

TEST_CASE("corridor fixture free-cell count matches a character count")
{
    const std::string text = slurp(ESM_FIXTURES "/corridor.maze");
    int expected = 0;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.rfind("#", 0) == 0 && line.find_first_not_of('#') != std::string::npos &&
            line.find_first_of(".S") == std::string::npos)
            continue;  // comment
        if (line.rfind("cell", 0) == 0)
            continue;
        for (char ch : line)
            expected += ch == '.' || ch == 'S';
    }
    CHECK(expected == 34);
    CHECK(parse_maze(text).free_cell_count() == expected);
}

TEST_CASE("raycast geometry")
{
    // Open 9 x 9 room of 0.5 m cells; interior spans [0.5, 4.0].
    std::string text = "cell 0.5\n#########\n";
    for (int r = 1; r < 8; ++r)
        text += r == 4 ? "#...S...#\n" : "#.......#\n";
    text += "#########\n";
    const MazeMap room = parse_maze(text);

    SUBCASE("half a meter from a flat wall")
    {
        const Pose p{3.5, 2.25, 0.0};
        const DepthScan scan = raycast(room, p, 0.0, 1, 5.0);
        CHECK(scan.ranges.empty());
        const RayHit hit = cast_ray(room, p.position(), {1.0, 0.0}, 5.0);
        CHECK(hit.hit);
        CHECK(hit.range == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("45 degrees into a corner")
    {
        const Vec2 o{3.5, 3.5};
        const double s = std::sqrt(0.5);
        const RayHit hit = cast_ray(room, o, {s, s}, 5.0);
        CHECK(hit.hit);
        CHECK(hit.range == doctest::Approx(std::sqrt(2.0) * 0.5).epsilon(1e-12));
    }
    SUBCASE("long corridor returns max range")
    {
        std::string row = "#S";
        row += std::string(40, '.');
        row += "#";
        const std::string wall(row.size(), '#');
        const MazeMap corridor = parse_maze("cell 0.5\n" + wall + "\n" + row + "\n" + wall + "\n");
        const DepthScan scan = raycast(corridor, corridor.start(), 0.01, 1, 3.84);
        REQUIRE(scan.ranges.size() == 1);
        CHECK(scan.ranges[0] == 3.84);
    }
    SUBCASE("scan angles are symmetric and increasing")
    {
        const DepthScan scan = raycast(room, room.start(), deg_to_rad(90), 64, 3.84);
        REQUIRE(scan.angles.size() == 64);
        for (std::size_t k = 1; k < 64; ++k)
            CHECK(scan.angles[k] > scan.angles[k - 1]);
        CHECK(scan.angles.front() == doctest::Approx(-scan.angles.back()));
        for (double r : scan.ranges) {
            CHECK(r > 0.0);
            CHECK(r <= 3.84);
        }
    }
    SUBCASE("pose in a wall")
    {
        CHECK(code_of([&] { raycast(room, {0.2, 0.2, 0.0}, 1.0, 8, 3.0); }) == ErrorCode::OutsideWorld);
        CHECK(code_of([&] { observe_local(room, {-3.0, 1.0, 0.0}, {}); }) == ErrorCode::OutsideWorld);
    }
}

TEST_CASE("raycast is invariant under translating maze and pose together")
{
    const MazeMap base = load_maze(ESM_FIXTURES "/rooms.maze");
    // Shift by two cells right and three cells down by padding with walls.
    const std::string text = slurp(ESM_FIXTURES "/rooms.maze");
    std::istringstream lines(text);
    std::string line;
    std::string shifted = "cell " + std::to_string(base.cell_size()) + "\n";
    const std::string pad(static_cast<std::size_t>(base.cols() + 2), '#');
    shifted += pad + "\n" + pad + "\n" + pad + "\n";
    while (std::getline(lines, line)) {
        if (line.empty() || line.rfind("cell", 0) == 0 || line.rfind("# ", 0) == 0)
            continue;
        shifted += "##" + line + "\n";
    }
    const MazeMap moved = parse_maze(shifted);
    REQUIRE(moved.rows() == base.rows() + 3);
    Rng rng(4);
    for (int k = 0; k < 50; ++k) {
        const Pose p = random_free_pose(base, rng);
        const Pose q{p.x + 2 * base.cell_size(), p.y + 3 * base.cell_size(), p.theta};
        const DepthScan a = raycast(base, p, deg_to_rad(120), 32, 3.84);
        const DepthScan b = raycast(moved, q, deg_to_rad(120), 32, 3.84);
        for (std::size_t i = 0; i < a.ranges.size(); ++i)
            CHECK(std::abs(a.ranges[i] - b.ranges[i]) <= 1e-9);
    }
}

TEST_CASE("sealed one-cell room with a full-circle sensor")
{
    const MazeMap m = parse_maze("cell 0.24\n###\n#S#\n###\n");
    SensorConfig s;
    s.fov = 2 * kPi;
    const Grid v = observe_local(m, m.start(), s);
    for (int i = 0; i < kLocalSize; ++i) {
        for (int j = 0; j < kLocalSize; ++j) {
            const int di = std::abs(i - 16);
            const int dj = std::abs(j - 16);
            const double expect = (di == 0 && dj == 0) ? 1.0 : (di <= 1 && dj <= 1 ? -1.0 : 0.0);
            CHECK(v(i, j) == expect);
        }
    }
}

TEST_CASE("zero field of view sees only the agent cell")
{
    const MazeMap m = load_maze(ESM_FIXTURES "/room.maze");
    SensorConfig s;
    s.fov = 0.0;
    const Grid v = observe_local(m, m.start(), s);
    for (int i = 0; i < kLocalSize; ++i)
        for (int j = 0; j < kLocalSize; ++j)
            CHECK(v(i, j) == ((i == 16 && j == 16) ? 1.0 : 0.0));
}

TEST_CASE("observe_local agrees with an exhaustive line-of-sight oracle")
{
    Rng rng(5);
    for (const char* name : {"room", "rooms", "figure8", "tworoom_b"}) {
        const MazeMap m = load_maze(std::string(ESM_FIXTURES "/") + name + ".maze");
        for (double fov_deg : {90.0, 360.0}) {
            SensorConfig s;
            s.fov = deg_to_rad(fov_deg);
            int clear_cells = 0;
            int missed = 0;
            for (int k = 0; k < 6; ++k) {
                const Pose p = random_free_pose(m, rng);
                const Grid v = observe_local(m, p, s);
                for (int i = 0; i < kLocalSize; ++i) {
                    for (int j = 0; j < kLocalSize; ++j) {
                        if (i == 16 && j == 16)
                            continue;
                        const Vec2 q = sample_point(p, i, j);
                        const bool los = line_of_sight(m, p.position(), q);
                        if (v(i, j) == 1.0)
                            CHECK(los);
                        const double f = (i - 16) * kLocalCell;
                        const double l = (j - 16) * kLocalCell;
                        const bool in_fov = fov_deg >= 360.0 || std::abs(std::atan2(l, f)) < s.fov / 2 - 1e-6;
                        if (los && in_fov && std::hypot(f, l) < s.max_range - 1e-6) {
                            ++clear_cells;
                            missed += v(i, j) != 1.0;
                        }
                    }
                }
            }
            // Rays grazing a wall corner count as blocked; nothing else is missed.
            CHECK(missed <= clear_cells / 100);
        }
    }
}

TEST_CASE("rotating the pose by a quarter turn permutes the view")
{
    const MazeMap m = load_maze(ESM_FIXTURES "/rooms.maze");
    SensorConfig s;
    s.fov = 2 * kPi;
    Rng rng(6);
    for (int k = 0; k < 10; ++k) {
        const Pose p = random_free_pose(m, rng);
        const Pose q{p.x, p.y, wrap_angle(p.theta + kPi / 2)};
        const Grid a = observe_local(m, p, s);
        const Grid b = observe_local(m, q, s);
        // Cell (i, j) of b samples the point of a at offset (-(j-16), i-16).
        for (int i = 0; i < kLocalSize; ++i) {
            for (int j = 0; j < kLocalSize; ++j) {
                const int ai = 16 - (j - 16);
                const int aj = 16 + (i - 16);
                if (a.contains(ai, aj))
                    CHECK((b(i, j) == 1.0) == (a(ai, aj) == 1.0));
            }
        }
    }
}

TEST_CASE("observations are deterministic")
{
    const MazeMap m = load_maze(ESM_FIXTURES "/figure8.maze");
    const Pose p = m.start();
    CHECK(observe_local(m, p, {}) == observe_local(m, p, {}));
    SensorConfig s;
    s.corrupt_prob = 0.3;
    Rng a(9);
    Rng b(9);
    const Grid ca = observe_local(m, p, s, &a);
    CHECK(ca == observe_local(m, p, s, &b));
    CHECK(ca != observe_local(m, p, s));
    for (double v : ca.values()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("accumulated ground truth")
{
    const MazeMap m = load_maze(ESM_FIXTURES "/room.maze");
    const SensorConfig s;

    SUBCASE("single pose equals the binarized observation")
    {
        const Pose p = m.start();
        const Grid gt = gt_accumulated_local(m, std::span<const Pose>(&p, 1), s);
        const Grid v = observe_local(m, p, s);
        for (std::size_t k = 0; k < gt.size(); ++k)
            CHECK(gt.values()[k] == (v.values()[k] == 1.0 ? 1.0 : 0.0));
    }
    SUBCASE("a full spin sees the whole visibility disk")
    {
        std::vector<Pose> poses;
        Pose p = m.start();
        for (int k = 0; k < 36; ++k) {
            p = compose_pose(p, {deg_to_rad(10.0), 0.0, 0.0});
            poses.push_back(p);
        }
        const Grid gt = gt_accumulated_local(m, poses, s);
        for (int i = 0; i < kLocalSize; ++i) {
            for (int j = 0; j < kLocalSize; ++j) {
                const Vec2 q = sample_point(poses.back(), i, j);
                const double d = norm(q - p.position());
                if (d < s.max_range - 1e-6 && line_of_sight(m, p.position(), q))
                    CHECK(gt(i, j) == 1.0);
                if (gt(i, j) == 1.0) {
                    CHECK(d <= s.max_range + 1e-9);
                    CHECK(line_of_sight(m, p.position(), q));
                }
            }
        }
    }
    SUBCASE("disjoint poses add up")
    {
        const MazeMap two = parse_maze("cell 0.24\n#######\n#S#####\n#######\n#####.#\n#######\n");
        const Pose a = two.start();
        const Pose b{5.5 * 0.24, 3.5 * 0.24, 0.0};
        SensorConfig full;
        full.fov = 2 * kPi;
        const WorldRaster raster = raster_for(two);
        const Pose both[2] = {a, b};
        const int na = count_free(gt_world_free(two, std::span<const Pose>(&a, 1), full, raster));
        const int nb = count_free(gt_world_free(two, std::span<const Pose>(&b, 1), full, raster));
        CHECK(na == 1);
        CHECK(nb == 1);
        CHECK(count_free(gt_world_free(two, both, full, raster)) == na + nb);
    }
    SUBCASE("the world-frame free set only grows")
    {
        const Trajectory traj = load_trajectory_file(ESM_FIXTURES "/room_32.csv", m);
        const auto poses = rollout(m.start(), traj.steps);
        const WorldRaster raster = raster_for(m);
        Grid prev = gt_world_free(m, std::span<const Pose>(poses.data(), 1), s, raster);
        for (std::size_t t = 2; t <= poses.size(); ++t) {
            const Grid cur = gt_world_free(m, std::span<const Pose>(poses.data(), t), s, raster);
            for (std::size_t k = 0; k < cur.size(); ++k)
                if (prev.values()[k] == 1.0)
                    CHECK(cur.values()[k] == 1.0);
            prev = cur;
        }
    }
}

TEST_CASE("trajectory loading")
{
    const MazeMap m = load_maze(ESM_FIXTURES "/corridor.maze");
    CHECK(load_trajectory("", m).steps.empty());
    const Trajectory one = load_trajectory("# name: demo\n# seed: 4\n10, 0, 0.1\n", m);
    REQUIRE(one.steps.size() == 1);
    CHECK(one.name == "demo");
    CHECK(one.seed == 4);
    CHECK(one.steps[0].dtheta == doctest::Approx(deg_to_rad(10.0)));
    CHECK(one.steps[0].distance == 0.1);

    CHECK(code_of([&] { load_trajectory("11, 0, 0\n", m); }) == ErrorCode::LimitExceeded);
    CHECK(code_of([&] { load_trajectory("1, 0\n", m); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { load_trajectory("a, 0, 0\n", m); }) == ErrorCode::ParseError);

    // The corridor start faces a wall after a quarter turn to the left.
    std::string into_wall;
    for (int k = 0; k < 9; ++k)
        into_wall += "10, 0, 0\n";
    for (int k = 0; k < 5; ++k)
        into_wall += "0, 0, 0.1\n";
    try {
        load_trajectory(into_wall, m);
        FAIL("expected CollisionOnRollout");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CollisionOnRollout);
        CHECK(e.step() >= 10);
        CHECK(e.step() <= 14);
    }
}
