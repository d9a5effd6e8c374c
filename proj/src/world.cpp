#include "esm/world.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "esm/error.hpp"

namespace esm {

namespace {

constexpr double kNudge = 1e-9;
constexpr double kAngleSlack = 1e-12;

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(std::string_view text)
{
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            if (pos < text.size())
                lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, end - pos));
        pos = end + 1;
    }
    return lines;
}

bool parse_double(std::string_view s, double& out)
{
    s = trim(s);
    if (s.empty())
        return false;
    // from_chars rejects a leading '+'.
    if (s.front() == '+')
        s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool is_maze_comment(std::string_view line)
{
    return line == "#" || (line.size() >= 2 && line[0] == '#' && (line[1] == ' ' || line[1] == '\t'));
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Egocentric (forward, left) offset of local cell (i, j).
Vec2 local_cell_offset(int i, int j)
{
    return {(i - kLocalSize / 2) * kLocalCell, (j - kLocalSize / 2) * kLocalCell};
}

int local_index(double coord)
{
    return static_cast<int>(std::floor(coord / kLocalCell + kLocalSize / 2 + 0.5));
}

void require_inside(const MazeMap& maze, const Pose& pose)
{
    if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || maze.is_wall_at(pose.position())) {
        std::ostringstream msg;
        msg << "pose (" << pose.x << ", " << pose.y << ") is not inside a free cell";
        throw Error(ErrorCode::OutsideWorld, msg.str());
    }
}

}  // namespace

MazeMap::MazeMap(int rows, int cols, double cell_size, std::vector<std::uint8_t> walls, Pose start)
    : rows_(rows), cols_(cols), cell_size_(cell_size), walls_(std::move(walls)), start_(start)
{
    if (!(cell_size > 0.0))
        throw Error(ErrorCode::InvalidMaze, "cell size must be positive");
    if (walls_.size() != static_cast<std::size_t>(rows) * cols)
        throw Error(ErrorCode::InvalidMaze, "wall grid size mismatch");
}

bool MazeMap::is_wall(int r, int c) const
{
    if (r < 0 || c < 0 || r >= rows_ || c >= cols_)
        return true;
    return walls_[static_cast<std::size_t>(r) * cols_ + c] != 0;
}

bool MazeMap::is_wall_at(Vec2 world) const
{
    const double gx = std::floor(world.x / cell_size_);
    const double gy = std::floor(world.y / cell_size_);
    if (gx < 0 || gy < 0 || gx >= cols_ || gy >= rows_)
        return true;
    return is_wall(static_cast<int>(gy), static_cast<int>(gx));
}

int MazeMap::free_cell_count() const
{
    return static_cast<int>(std::count(walls_.begin(), walls_.end(), std::uint8_t{0}));
}

MazeMap parse_maze(std::string_view text)
{
    double cell_size = 0.0;
    bool have_header = false;
    std::vector<std::string_view> rows;
    long line_no = 0;
    for (std::string_view raw : split_lines(text)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty() || is_maze_comment(line))
            continue;
        if (!have_header) {
            if (line.substr(0, 4) != "cell" || line.size() < 5 || (line[4] != ' ' && line[4] != '\t'))
                throw Error(ErrorCode::ParseError, "expected header 'cell <meters>'", line_no);
            if (!parse_double(line.substr(5), cell_size) || cell_size <= 0.0)
                throw Error(ErrorCode::ParseError, "bad cell size in header", line_no);
            have_header = true;
            continue;
        }
        for (char ch : line) {
            if (ch != '#' && ch != '.' && ch != 'S')
                throw Error(ErrorCode::ParseError,
                            std::string("unexpected character '") + ch + "' in maze", line_no);
        }
        if (!rows.empty() && line.size() != rows.front().size())
            throw Error(ErrorCode::ParseError, "ragged maze rows", line_no);
        rows.push_back(line);
    }
    if (!have_header)
        throw Error(ErrorCode::ParseError, "missing 'cell <meters>' header");
    if (rows.empty())
        throw Error(ErrorCode::ParseError, "maze has no rows");

    const int n_rows = static_cast<int>(rows.size());
    const int n_cols = static_cast<int>(rows.front().size());
    std::vector<std::uint8_t> walls(static_cast<std::size_t>(n_rows) * n_cols, 0);
    std::optional<std::pair<int, int>> start;
    for (int r = 0; r < n_rows; ++r) {
        for (int c = 0; c < n_cols; ++c) {
            const char ch = rows[r][c];
            walls[static_cast<std::size_t>(r) * n_cols + c] = ch == '#' ? 1 : 0;
            if (ch == 'S') {
                if (start)
                    throw Error(ErrorCode::ParseError, "more than one start cell 'S'");
                start = std::make_pair(r, c);
            }
        }
    }
    for (int r = 0; r < n_rows; ++r) {
        for (int c = 0; c < n_cols; ++c) {
            const bool boundary = r == 0 || c == 0 || r == n_rows - 1 || c == n_cols - 1;
            if (boundary && walls[static_cast<std::size_t>(r) * n_cols + c] == 0)
                throw Error(ErrorCode::InvalidMaze, "maze boundary is not fully walled");
        }
    }
    if (!start)
        throw Error(ErrorCode::InvalidMaze, "maze has no start cell 'S'");

    const Pose start_pose{(start->second + 0.5) * cell_size, (start->first + 0.5) * cell_size, 0.0};
    return MazeMap(n_rows, n_cols, cell_size, std::move(walls), start_pose);
}

MazeMap load_maze(const std::string& path) { return parse_maze(read_file(path)); }

RayHit cast_ray(const MazeMap& maze, Vec2 origin, Vec2 direction, double max_range)
{
    const double cs = maze.cell_size();
    const double gx = origin.x / cs;
    const double gy = origin.y / cs;
    int col = static_cast<int>(std::floor(gx));
    int row = static_cast<int>(std::floor(gy));
    if (maze.is_wall(row, col))
        return {0.0, true};

    constexpr double inf = std::numeric_limits<double>::infinity();
    const int step_c = direction.x > 0.0 ? 1 : -1;
    const int step_r = direction.y > 0.0 ? 1 : -1;
    double t_max_c = inf;
    double t_max_r = inf;
    double t_delta_c = inf;
    double t_delta_r = inf;
    if (direction.x != 0.0) {
        const double boundary = step_c > 0 ? col + 1.0 : static_cast<double>(col);
        t_max_c = (boundary - gx) * cs / direction.x;
        t_delta_c = cs / std::abs(direction.x);
    }
    if (direction.y != 0.0) {
        const double boundary = step_r > 0 ? row + 1.0 : static_cast<double>(row);
        t_max_r = (boundary - gy) * cs / direction.y;
        t_delta_r = cs / std::abs(direction.y);
    }

    while (true) {
        const double t = std::min(t_max_c, t_max_r);
        if (t > max_range)
            return {max_range, false};
        if (t_max_c < t_max_r) {
            col += step_c;
            t_max_c += t_delta_c;
        } else if (t_max_r < t_max_c) {
            row += step_r;
            t_max_r += t_delta_r;
        } else {
            // Exactly through a corner: blocked if any of the three cells is a wall.
            if (maze.is_wall(row, col + step_c) || maze.is_wall(row + step_r, col))
                return {t, true};
            col += step_c;
            row += step_r;
            t_max_c += t_delta_c;
            t_max_r += t_delta_r;
        }
        if (maze.is_wall(row, col))
            return {t, true};
    }
}

DepthScan raycast(const MazeMap& maze, const Pose& pose, double fov, int n_rays, double max_range)
{
    require_inside(maze, pose);
    if (n_rays < 0 || fov < 0.0 || !(max_range > 0.0))
        throw Error(ErrorCode::InvalidArgument, "invalid sensor configuration");
    DepthScan scan;
    scan.fov = fov;
    scan.max_range = max_range;
    if (fov == 0.0 || n_rays == 0)
        return scan;
    const double span = std::min(fov, 2.0 * kPi);
    scan.angles.reserve(n_rays);
    scan.ranges.reserve(n_rays);
    for (int k = 0; k < n_rays; ++k) {
        const double angle = -span / 2.0 + (k + 0.5) * span / n_rays;
        const double world = pose.theta + angle;
        const RayHit hit =
            cast_ray(maze, pose.position(), {std::cos(world), std::sin(world)}, max_range);
        scan.angles.push_back(angle);
        scan.ranges.push_back(hit.range);
    }
    return scan;
}

bool point_observed_free(const MazeMap& maze, const Pose& pose, Vec2 point,
                         const SensorConfig& sensor)
{
    const Vec2 delta = point - pose.position();
    const double dist = norm(delta);
    if (dist == 0.0)
        return !maze.is_wall_at(point);
    if (dist > sensor.max_range || !(sensor.fov > 0.0))
        return false;
    if (sensor.fov < 2.0 * kPi) {
        const double bearing = wrap_angle(std::atan2(delta.y, delta.x) - pose.theta);
        if (std::abs(bearing) > sensor.fov / 2.0 + kAngleSlack)
            return false;
    }
    const Vec2 dir = {delta.x / dist, delta.y / dist};
    const RayHit hit = cast_ray(maze, pose.position(), dir, dist);
    return !hit.hit || hit.range >= dist - kNudge;
}

Grid observe_local(const MazeMap& maze, const Pose& pose, const SensorConfig& sensor,
                   Rng* corrupt_rng)
{
    require_inside(maze, pose);
    Grid view(kLocalSize, kLocalSize, 0.0);
    const Vec2 origin = pose.position();
    const int center = kLocalSize / 2;

    for (int i = 0; i < kLocalSize; ++i) {
        for (int j = 0; j < kLocalSize; ++j) {
            const Vec2 offset = local_cell_offset(i, j);
            const Vec2 target = origin + rotate(offset, pose.theta);
            if (i == center && j == center) {
                view(i, j) = 1.0;
                continue;
            }
            if (point_observed_free(maze, pose, target, sensor)) {
                view(i, j) = 1.0;
                continue;
            }
            // Occupied when the ray toward this cell stops inside the cell itself.
            const double dist = norm(offset);
            if (dist > sensor.max_range || !(sensor.fov > 0.0))
                continue;
            if (sensor.fov < 2.0 * kPi &&
                std::abs(std::atan2(offset.y, offset.x)) > sensor.fov / 2.0 + kAngleSlack)
                continue;
            const Vec2 dir = {(target.x - origin.x) / dist, (target.y - origin.y) / dist};
            const RayHit hit = cast_ray(maze, origin, dir, dist);
            if (!hit.hit)
                continue;
            const Vec2 local = rotate(dir, -pose.theta);
            const Vec2 inside = (hit.range + kNudge) * local;
            if (local_index(inside.x) == i && local_index(inside.y) == j)
                view(i, j) = -1.0;
        }
    }

    // Wall returns of the scan fill in occupied cells the per-cell rays missed.
    const DepthScan scan = raycast(maze, pose, sensor.fov, sensor.n_rays, sensor.max_range);
    for (std::size_t k = 0; k < scan.angles.size(); ++k) {
        if (scan.ranges[k] >= scan.max_range)
            continue;
        const double reach = scan.ranges[k] + kNudge;
        const Vec2 inside = {reach * std::cos(scan.angles[k]), reach * std::sin(scan.angles[k])};
        const int i = local_index(inside.x);
        const int j = local_index(inside.y);
        if (view.contains(i, j) && view(i, j) == 0.0)
            view(i, j) = -1.0;
    }

    if (corrupt_rng != nullptr && sensor.corrupt_prob > 0.0) {
        for (double& v : view.values()) {
            const double u = corrupt_rng->uniform01();
            const double scale = corrupt_rng->uniform01();
            if (v == 0.0)
                continue;
            if (u < sensor.corrupt_prob / 2.0)
                v = -v;
            else if (u < sensor.corrupt_prob)
                v *= scale;
        }
    }
    return view;
}

Grid gt_accumulated_local(const MazeMap& maze, std::span<const Pose> poses,
                          const SensorConfig& sensor, const Pose& frame)
{
    for (const Pose& p : poses)
        require_inside(maze, p);
    Grid gt(kLocalSize, kLocalSize, 0.0);
    for (int i = 0; i < kLocalSize; ++i) {
        for (int j = 0; j < kLocalSize; ++j) {
            const Vec2 target = frame.position() + rotate(local_cell_offset(i, j), frame.theta);
            for (const Pose& p : poses) {
                if (point_observed_free(maze, p, target, sensor)) {
                    gt(i, j) = 1.0;
                    break;
                }
            }
        }
    }
    return gt;
}

Grid gt_accumulated_local(const MazeMap& maze, std::span<const Pose> poses,
                          const SensorConfig& sensor)
{
    if (poses.empty())
        throw Error(ErrorCode::InvalidArgument, "gt_accumulated_local needs at least one pose");
    return gt_accumulated_local(maze, poses, sensor, poses.back());
}

WorldRaster raster_for(const MazeMap& maze, double cell_size)
{
    WorldRaster raster;
    raster.cell_size = cell_size;
    raster.cols = static_cast<int>(std::ceil(maze.width_m() / cell_size - 1e-9));
    raster.rows = static_cast<int>(std::ceil(maze.height_m() / cell_size - 1e-9));
    return raster;
}

Grid gt_world_free(const MazeMap& maze, std::span<const Pose> poses, const SensorConfig& sensor,
                   const WorldRaster& raster)
{
    Grid gt(raster.rows, raster.cols, 0.0);
    const double reach = sensor.max_range + raster.cell_size;
    for (const Pose& p : poses) {
        require_inside(maze, p);
        const int c_lo = std::max(0, static_cast<int>(std::floor((p.x - reach - raster.origin.x) / raster.cell_size)));
        const int c_hi = std::min(raster.cols - 1, static_cast<int>(std::ceil((p.x + reach - raster.origin.x) / raster.cell_size)));
        const int r_lo = std::max(0, static_cast<int>(std::floor((p.y - reach - raster.origin.y) / raster.cell_size)));
        const int r_hi = std::min(raster.rows - 1, static_cast<int>(std::ceil((p.y + reach - raster.origin.y) / raster.cell_size)));
        for (int r = r_lo; r <= r_hi; ++r) {
            for (int c = c_lo; c <= c_hi; ++c) {
                if (gt(r, c) == 0.0 && point_observed_free(maze, p, raster.cell_center(r, c), sensor))
                    gt(r, c) = 1.0;
            }
        }
    }
    return gt;
}

Trajectory load_trajectory(std::string_view text, const MazeMap& maze, const ActionLimits& limits)
{
    Trajectory traj;
    Pose pose = maze.start();
    long line_no = 0;
    for (std::string_view raw : split_lines(text)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty())
            continue;
        if (line.front() == '#') {
            const std::string_view body = trim(line.substr(1));
            if (body.substr(0, 5) == "name:")
                traj.name = std::string(trim(body.substr(5)));
            else if (body.substr(0, 5) == "seed:") {
                double seed = 0.0;
                if (!parse_double(body.substr(5), seed) || seed < 0.0)
                    throw Error(ErrorCode::ParseError, "bad seed comment", line_no);
                traj.seed = static_cast<std::uint64_t>(seed);
            }
            continue;
        }
        double fields[3];
        std::size_t start = 0;
        for (int k = 0; k < 3; ++k) {
            const auto comma = line.find(',', start);
            const bool last = k == 2;
            if (last != (comma == std::string_view::npos))
                throw Error(ErrorCode::ParseError, "expected 3 comma-separated fields", line_no);
            const auto field = line.substr(start, last ? std::string_view::npos : comma - start);
            if (!parse_double(field, fields[k]))
                throw Error(ErrorCode::ParseError, "bad number '" + std::string(trim(field)) + "'",
                            line_no);
            start = comma + 1;
        }
        const long index = static_cast<long>(traj.steps.size());
        const Egomotion step{deg_to_rad(fields[0]), deg_to_rad(fields[1]), fields[2]};
        try {
            validate_egomotion(step, limits);
        } catch (const Error& e) {
            throw Error(ErrorCode::LimitExceeded,
                        "step " + std::to_string(index) + ": " + e.what(), index);
        }
        const Pose next = compose_pose(pose, step);
        bool blocked = maze.is_wall_at(next.position());
        if (!blocked && step.distance > 0.0) {
            const double direction = next.theta + step.heading;
            const RayHit hit = cast_ray(maze, pose.position(),
                                        {std::cos(direction), std::sin(direction)}, step.distance);
            blocked = hit.hit && hit.range < step.distance;
        }
        if (blocked)
            throw Error(ErrorCode::CollisionOnRollout,
                        "step " + std::to_string(index) + " drives into a wall", index);
        traj.steps.push_back(step);
        pose = next;
    }
    return traj;
}

Trajectory load_trajectory_file(const std::string& path, const MazeMap& maze,
                                const ActionLimits& limits)
{
    return load_trajectory(read_file(path), maze, limits);
}

std::vector<Pose> rollout(const Pose& start, std::span<const Egomotion> steps)
{
    std::vector<Pose> poses;
    poses.reserve(steps.size());
    Pose pose = start;
    for (const Egomotion& e : steps) {
        pose = compose_pose(pose, e);
        poses.push_back(pose);
    }
    return poses;
}

}  // namespace esm
