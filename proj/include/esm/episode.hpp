#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "esm/bvu.hpp"
#include "esm/geometry.hpp"
#include "esm/global_memory.hpp"
#include "esm/metrics.hpp"
#include "esm/place_encoder.hpp"
#include "esm/world.hpp"

namespace esm {

struct RunConfig {
    std::string maze_path;
    std::string trajectory_path;
    std::string output_dir;
    std::string encoder_path;  // empty: untrained encoder seeded from `seed`
    EncoderShape encoder_shape;

    SensorConfig sensor;
    MergeParams merge;
    ActionLimits limits;
    NoiseModel noise;
    MemoryConfig memory;

    bool loop_closure = true;
    bool correction = true;
    LoopClosureParams closure{0.02, 16.0, 64};
    // Corrections with a smaller residual are skipped.
    double min_correction_m = 0.12;
    double min_correction_rad = deg_to_rad(1.0);
    // Corrections whose heading residual exceeds what the odometry noise can
    // produce since the matched step are rejected as false matches.
    bool heading_gate = true;

    std::uint64_t seed = 0;
    int eval_interval = 32;
    int trend_stride = 4;
    int mi_bins = 16;
    double gt_eps_pos = 0.5;
    long match_slack = 2;
};

struct TrainSource {
    std::string maze_path;
    std::string trajectory_path;
};

struct TrainPuConfig {
    std::vector<TrainSource> sources;
    std::string output_path;
    std::string loss_csv_path;  // optional
    SensorConfig sensor;
    ActionLimits limits;
    EncoderShape shape;
    TrainConfig train;
    double eps_pos = 0.3;
    double eps_neg = 1.0;
    long gap = 8;
    std::size_t max_triplets = 0;
    int mining_rounds = 1;
    std::uint64_t seed = 0;
};

// JSON parsing; relative paths resolve against `base_dir`. ESM_SEED in the
// environment replaces the seed when `apply_env` is set.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir,
                           bool apply_env = true);
RunConfig load_run_config(const std::string& path, bool apply_env = true);
TrainPuConfig parse_train_config(const std::string& json_text, const std::string& base_dir,
                                 bool apply_env = true);
TrainPuConfig load_train_config(const std::string& path, bool apply_env = true);

// Metrics for one evaluation checkpoint; `window_end` is the step closing the
// evaluation window the checkpoint belongs to.
struct EpisodeMetric {
    long window_end = 0;
    MetricsReport report;
};

struct CandidateRecord {
    long t_now = 0;
    std::optional<ClosureCandidate> embedding;
    std::optional<ClosureCandidate> pixelwise;
};

struct ClosureRecord {
    LoopClosureEvent event;
    bool corrected = false;
};

struct PrResult {
    bool empty_ground_truth = false;
    std::size_t positives = 0;
    PRCurve embedding;
    PRCurve pixelwise;
    PRCurve random;
};

struct EpisodeResult {
    std::string name;
    long steps = 0;
    std::vector<Pose> true_poses;       // index 0 is the start
    std::vector<Pose> estimated_poses;  // after all corrections
    std::vector<EpisodeMetric> metrics;
    std::vector<CandidateRecord> candidates;
    std::vector<ClosureRecord> closures;
    std::vector<PlaceRecord> places;  // coord is the estimated world position (meters)
    Grid final_local;
    Grid global_map;
    Grid global_gt;
    WorldRaster raster;
    std::optional<PrResult> pr;
};

EpisodeResult run_episode(const RunConfig& cfg);
EpisodeResult run_episode(const RunConfig& cfg, const MazeMap& maze, const Trajectory& trajectory,
                          const EncoderParams& encoder);

PrResult compute_pr(const std::vector<CandidateRecord>& candidates, std::span<const Pose> true_poses,
                    double eps_pos, long recency_window, long match_slack, std::uint64_t seed);

// Artifact bundle: config.json, maze.txt, trajectory.csv, summary.json,
// metrics.csv, poses.csv, places.csv, embeddings.bin, closures.csv,
// candidates.csv, local_map.{pgm,csv}, global_map.{pgm,csv,json},
// overlay.csv, and pr.{csv,json} when loop closure is enabled.
void write_bundle(const EpisodeResult& result, const RunConfig& cfg, const std::string& dir);

// Runs the episode and writes the bundle to cfg.output_dir.
EpisodeResult run_to_directory(const RunConfig& cfg);

// Recomputes the final global-map metrics from a bundle; writes eval.json and
// returns the full-frame report.
MetricsReport eval_run_dir(const std::string& dir);
// Recomputes the PR curves from candidates.csv; writes pr.csv and pr.json.
PrResult pr_run_dir(const std::string& dir);
// Rewrites global_map.pgm and overlay.csv from global_map.csv and poses.csv.
void render_run_dir(const std::string& dir);

struct TrainPuResult {
    TrainResult training;
    std::size_t triplets = 0;
};

TrainPuResult train_pu(const TrainPuConfig& cfg);

}  // namespace esm
