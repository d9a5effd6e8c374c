#pragma once

#include <optional>
#include <span>
#include <vector>

#include "esm/geometry.hpp"
#include "esm/grid.hpp"
#include "esm/place_encoder.hpp"
#include "esm/world.hpp"

namespace esm {

enum class MemoryBackend {
    // Belief plane lives in the agent frame and is resampled every step.
    EgocentricWarp,
    // Belief plane is fixed to the frame the memory was created in; only the
    // tracked pose moves and reads/writes resample on demand.
    WorldAnchored,
};

struct MemoryConfig {
    int rows = 500;
    int cols = 500;
    int window = kLocalSize;
    double cell_size = kLocalCell;
    MemoryBackend backend = MemoryBackend::EgocentricWarp;
};

// A place written at the memory center. `coord` is the continuous
// (row, col) index in the current egocentric memory frame.
struct PlaceRecord {
    Vec2 coord;
    Embedding embedding;
    long t = 0;
};

struct LoopClosureParams {
    double alpha = 0.0;
    double close_radius = 16.0;  // cells
    long recency_window = 64;    // steps
};

struct LoopClosureEvent {
    long t_now = 0;
    long t_matched = 0;
    double embed_dist = 0.0;
    double cell_dist = 0.0;
};

// External spatial memory: a belief plane addressed by fixed heads at its
// center, plus a ledger of place embeddings.
class GlobalMemory {
public:
    explicit GlobalMemory(const MemoryConfig& config = {});

    const MemoryConfig& config() const { return config_; }

    // Re-express all stored content in the frame after egomotion `e`.
    void warp(const Egomotion& e);
    // Replace the centered window with `local` (masked write).
    void write_local(const Grid& local);
    // Copy of the centered window.
    Grid read_local() const;
    void write_place(const Embedding& embedding, long t);

    // Best ledger record passing the closeness and recency masks, regardless
    // of any embedding threshold.
    std::optional<LoopClosureEvent> best_candidate(const Embedding& now, long t_now,
                                                   double close_radius, long recency_window) const;
    std::optional<LoopClosureEvent> detect_loop_closure(const Embedding& now, long t_now,
                                                        const LoopClosureParams& params) const;

    // Place records with coordinates in the current egocentric frame.
    std::vector<PlaceRecord> places() const;
    std::size_t place_count() const { return places_.size(); }

    // Binary write mask R: ones on the centered window.
    Grid attention_mask() const;

    // Full belief plane expressed in the current egocentric frame.
    Grid egocentric_belief() const;
    // Raw stored plane (egocentric or anchored, depending on the backend).
    const Grid& stored_belief() const { return belief_; }

    // Belief at continuous egocentric memory index (row, col).
    double sample_egocentric(double row, double col) const;

    // World-frame rendering given the agent's current world pose.
    Grid render_world(const WorldRaster& raster, const Pose& current_world_pose) const;

private:
    Vec2 center() const;
    // Map between current egocentric index and anchored-frame index.
    Vec2 anchored_from_egocentric(Vec2 index) const;
    Vec2 egocentric_from_anchored(Vec2 index) const;

    MemoryConfig config_;
    Grid belief_;
    // World-anchored backend only: agent pose (meters) in the anchored frame.
    Pose tracked_{};
    // Egocentric backend: current egocentric indices. Anchored backend:
    // anchored-frame indices.
    std::vector<PlaceRecord> places_;
};

// Everything needed to rebuild the global map under corrected poses.
// poses[0] is the start; poses[k], local_maps[k] and embeddings[k] belong to
// step k (index 0 of the maps/embeddings is unused).
struct EpisodeLog {
    std::vector<Pose> poses;
    std::vector<Grid> local_maps;
    std::vector<Embedding> embeddings;
};

struct DriftCorrection {
    std::vector<Pose> poses;
    GlobalMemory memory;
    double residual_rotation = 0.0;   // radians
    Vec2 residual_translation{};      // meters
};

// Rigid residual that brings pose(t_now) onto pose(t_matched), spread
// linearly over the steps in between (rotation about the pose at t_now);
// the memory is rebuilt by replaying the stored local maps and places.
DriftCorrection correct_drift(const EpisodeLog& log, const LoopClosureEvent& event,
                              const GlobalMemory& current);

// Applies the interpolated residual for a fraction f in [0, 1].
Pose apply_partial_residual(const Pose& pose, double fraction, double rotation, Vec2 translation,
                            Vec2 pivot);

}  // namespace esm
