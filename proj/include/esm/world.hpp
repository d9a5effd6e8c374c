#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esm/geometry.hpp"
#include "esm/grid.hpp"

namespace esm {

// Static maze: boolean wall grid with square cells. Cell (r, c) spans
// x in [c, c+1) * cell_size and y in [r, r+1) * cell_size; the start pose sits
// at the center of the 'S' cell facing +x.
class MazeMap {
public:
    MazeMap(int rows, int cols, double cell_size, std::vector<std::uint8_t> walls, Pose start);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double cell_size() const { return cell_size_; }
    const Pose& start() const { return start_; }

    // Out-of-bounds cells count as walls.
    bool is_wall(int r, int c) const;
    bool is_wall_at(Vec2 world) const;
    int free_cell_count() const;

    double width_m() const { return cols_ * cell_size_; }
    double height_m() const { return rows_ * cell_size_; }

private:
    int rows_;
    int cols_;
    double cell_size_;
    std::vector<std::uint8_t> walls_;
    Pose start_;
};

// ASCII maze: header "cell <meters>", then rows of '#', '.', 'S'. Lines
// starting with "# " (or a lone "#") are comments.
MazeMap parse_maze(std::string_view text);
MazeMap load_maze(const std::string& path);

struct SensorConfig {
    double fov = deg_to_rad(90.0);
    int n_rays = 64;
    double max_range = kLocalExtent / 2.0;
    // Probability of corrupting an observed cell (sign flip or attenuation).
    double corrupt_prob = 0.0;
};

struct DepthScan {
    std::vector<double> angles;  // egocentric, strictly increasing
    std::vector<double> ranges;
    double max_range = 0.0;
    double fov = 0.0;
};

struct RayHit {
    double range = 0.0;
    bool hit = false;
};

// Exact grid traversal from `origin` along unit `direction`.
RayHit cast_ray(const MazeMap& maze, Vec2 origin, Vec2 direction, double max_range);

DepthScan raycast(const MazeMap& maze, const Pose& pose, double fov, int n_rays, double max_range);

// True when `point` lies within the sensor's field of view and range from
// `pose` with an unobstructed line of sight.
bool point_observed_free(const MazeMap& maze, const Pose& pose, Vec2 point,
                         const SensorConfig& sensor);

// Egocentric 32x32 view: +1 observed free, -1 observed wall, 0 unknown.
// Corruption is applied only when `corrupt_rng` is given.
Grid observe_local(const MazeMap& maze, const Pose& pose, const SensorConfig& sensor,
                   Rng* corrupt_rng = nullptr);

// Binary union of the free space seen from `poses`, sampled on the egocentric
// grid of `frame` (1 = free, 0 otherwise).
Grid gt_accumulated_local(const MazeMap& maze, std::span<const Pose> poses,
                          const SensorConfig& sensor, const Pose& frame);
// Same, in the frame of the last pose.
Grid gt_accumulated_local(const MazeMap& maze, std::span<const Pose> poses,
                          const SensorConfig& sensor);

// Axis-aligned world raster used for global maps and rendering. Cell (r, c)
// has its center at origin + ((c + 0.5), (r + 0.5)) * cell_size.
struct WorldRaster {
    Vec2 origin{};
    double cell_size = kLocalCell;
    int rows = 0;
    int cols = 0;

    Vec2 cell_center(int r, int c) const
    {
        return {origin.x + (c + 0.5) * cell_size, origin.y + (r + 0.5) * cell_size};
    }
};

WorldRaster raster_for(const MazeMap& maze, double cell_size = kLocalCell);

// Binary world-frame ground truth of everything seen from `poses`.
Grid gt_world_free(const MazeMap& maze, std::span<const Pose> poses, const SensorConfig& sensor,
                   const WorldRaster& raster);

struct Trajectory {
    std::vector<Egomotion> steps;
    std::string name;
    std::uint64_t seed = 0;
};

// CSV "dtheta_deg, heading_deg, distance_m" per line; '#' comment lines may
// carry "name: ..." and "seed: ..." metadata. Validates limits and that the
// rollout from the maze start never enters a wall.
Trajectory load_trajectory(std::string_view text, const MazeMap& maze,
                           const ActionLimits& limits = {});
Trajectory load_trajectory_file(const std::string& path, const MazeMap& maze,
                                const ActionLimits& limits = {});

std::vector<Pose> rollout(const Pose& start, std::span<const Egomotion> steps);

}  // namespace esm
