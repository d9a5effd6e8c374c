#include "esm/global_memory.hpp"

#include <algorithm>
#include <cmath>

#include "esm/error.hpp"

namespace esm {

GlobalMemory::GlobalMemory(const MemoryConfig& config) : config_(config)
{
    if (config.rows < config.window || config.cols < config.window || config.window <= 0)
        throw Error(ErrorCode::InvalidArgument, "memory must be at least as large as its window");
    if (!(config.cell_size > 0.0))
        throw Error(ErrorCode::InvalidArgument, "memory cell size must be positive");
    belief_ = Grid(config.rows, config.cols, 0.0);
}

Vec2 GlobalMemory::center() const
{
    return {static_cast<double>(belief_.center_row()), static_cast<double>(belief_.center_col())};
}

Vec2 GlobalMemory::anchored_from_egocentric(Vec2 index) const
{
    const Vec2 c = center();
    const Vec2 offset = config_.cell_size * (index - c);
    const Vec2 meters = tracked_.position() + rotate(offset, tracked_.theta);
    return c + (1.0 / config_.cell_size) * meters;
}

Vec2 GlobalMemory::egocentric_from_anchored(Vec2 index) const
{
    const Vec2 c = center();
    const Vec2 meters = config_.cell_size * (index - c);
    const Vec2 offset = rotate(meters - tracked_.position(), -tracked_.theta);
    return c + (1.0 / config_.cell_size) * offset;
}

void GlobalMemory::warp(const Egomotion& e)
{
    if (config_.backend == MemoryBackend::WorldAnchored) {
        tracked_ = compose_pose(tracked_, e);
        return;
    }
    if (e.dtheta == 0.0 && e.distance == 0.0)
        return;
    const Affine2 a = egomotion_to_affine(e, config_.cell_size);
    belief_ = warp_map(belief_, a, 0.0);
    // Ledger coordinates move exactly; embeddings are never resampled.
    const Vec2 c = center();
    for (PlaceRecord& rec : places_)
        rec.coord = c + a.apply(rec.coord - c);
}

void GlobalMemory::write_local(const Grid& local)
{
    const int w = config_.window;
    if (local.rows() != w || local.cols() != w)
        throw Error(ErrorCode::ShapeMismatch, "write_local: local map does not match memory window");
    const int top = belief_.center_row() - w / 2;
    const int left = belief_.center_col() - w / 2;

    if (config_.backend == MemoryBackend::EgocentricWarp) {
        for (int i = 0; i < w; ++i)
            for (int j = 0; j < w; ++j)
                belief_(top + i, left + j) = local(i, j);
        return;
    }

    // Anchored: every stored cell whose nearest egocentric cell lies in the
    // window takes the local map's value there.
    const Vec2 at = anchored_from_egocentric(center());
    const double reach = w * 0.75 + 2.0;
    const int r_lo = std::max(0, static_cast<int>(std::floor(at.x - reach)));
    const int r_hi = std::min(belief_.rows() - 1, static_cast<int>(std::ceil(at.x + reach)));
    const int c_lo = std::max(0, static_cast<int>(std::floor(at.y - reach)));
    const int c_hi = std::min(belief_.cols() - 1, static_cast<int>(std::ceil(at.y + reach)));
    for (int r = r_lo; r <= r_hi; ++r) {
        for (int c = c_lo; c <= c_hi; ++c) {
            const Vec2 q = egocentric_from_anchored({static_cast<double>(r), static_cast<double>(c)});
            const double wi = q.x - top;
            const double wj = q.y - left;
            const double ri = std::round(wi);
            const double rj = std::round(wj);
            if (ri < 0 || rj < 0 || ri > w - 1 || rj > w - 1)
                continue;
            belief_(r, c) = bilinear_sample(local, std::clamp(wi, 0.0, w - 1.0),
                                            std::clamp(wj, 0.0, w - 1.0), 0.0);
        }
    }
}

Grid GlobalMemory::read_local() const
{
    const int w = config_.window;
    const int top = belief_.center_row() - w / 2;
    const int left = belief_.center_col() - w / 2;
    Grid out(w, w);
    for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j)
            out(i, j) = config_.backend == MemoryBackend::EgocentricWarp
                            ? belief_(top + i, left + j)
                            : sample_egocentric(top + i, left + j);
    return out;
}

void GlobalMemory::write_place(const Embedding& embedding, long t)
{
    if (!places_.empty() && t <= places_.back().t)
        throw Error(ErrorCode::NonMonotonicTime,
                    "write_place: time " + std::to_string(t) + " not after " +
                        std::to_string(places_.back().t),
                    t);
    const Vec2 coord = config_.backend == MemoryBackend::EgocentricWarp
                           ? center()
                           : anchored_from_egocentric(center());
    places_.push_back({coord, embedding, t});
}

std::vector<PlaceRecord> GlobalMemory::places() const
{
    std::vector<PlaceRecord> out = places_;
    if (config_.backend == MemoryBackend::WorldAnchored)
        for (PlaceRecord& rec : out)
            rec.coord = egocentric_from_anchored(rec.coord);
    return out;
}

std::optional<LoopClosureEvent> GlobalMemory::best_candidate(const Embedding& now, long t_now,
                                                             double close_radius,
                                                             long recency_window) const
{
    const Vec2 c = center();
    std::optional<LoopClosureEvent> best;
    for (const PlaceRecord& rec : places_) {
        if (t_now - rec.t <= recency_window)
            continue;
        const Vec2 coord = config_.backend == MemoryBackend::EgocentricWarp
                               ? rec.coord
                               : egocentric_from_anchored(rec.coord);
        const double cell_dist = norm(coord - c);
        if (cell_dist > close_radius)
            continue;
        const double d = embedding_distance(now, rec.embedding);
        if (!best || d < best->embed_dist ||
            (d == best->embed_dist && cell_dist < best->cell_dist))
            best = LoopClosureEvent{t_now, rec.t, d, cell_dist};
    }
    return best;
}

std::optional<LoopClosureEvent> GlobalMemory::detect_loop_closure(const Embedding& now, long t_now,
                                                                  const LoopClosureParams& params) const
{
    auto best = best_candidate(now, t_now, params.close_radius, params.recency_window);
    if (best && best->embed_dist <= params.alpha)
        return best;
    return std::nullopt;
}

Grid GlobalMemory::attention_mask() const
{
    Grid mask(belief_.rows(), belief_.cols(), 0.0);
    const int w = config_.window;
    const int top = belief_.center_row() - w / 2;
    const int left = belief_.center_col() - w / 2;
    for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j)
            mask(top + i, left + j) = 1.0;
    return mask;
}

double GlobalMemory::sample_egocentric(double row, double col) const
{
    if (config_.backend == MemoryBackend::EgocentricWarp)
        return bilinear_sample(belief_, row, col, 0.0);
    const Vec2 a = anchored_from_egocentric({row, col});
    return bilinear_sample(belief_, a.x, a.y, 0.0);
}

Grid GlobalMemory::egocentric_belief() const
{
    if (config_.backend == MemoryBackend::EgocentricWarp)
        return belief_;
    Grid out(belief_.rows(), belief_.cols());
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c)
            out(r, c) = sample_egocentric(r, c);
    return out;
}

Grid GlobalMemory::render_world(const WorldRaster& raster, const Pose& current_world_pose) const
{
    Grid out(raster.rows, raster.cols);
    const Vec2 c = center();
    for (int r = 0; r < raster.rows; ++r) {
        for (int col = 0; col < raster.cols; ++col) {
            const Vec2 offset = rotate(raster.cell_center(r, col) - current_world_pose.position(),
                                       -current_world_pose.theta);
            const Vec2 index = c + (1.0 / config_.cell_size) * offset;
            out(r, col) = sample_egocentric(index.x, index.y);
        }
    }
    return out;
}

Pose apply_partial_residual(const Pose& pose, double fraction, double rotation, Vec2 translation,
                            Vec2 pivot)
{
    const double angle = fraction * rotation;
    const Vec2 moved = pivot + rotate(pose.position() - pivot, angle) + fraction * translation;
    return {moved.x, moved.y, wrap_angle(pose.theta + angle)};
}

DriftCorrection correct_drift(const EpisodeLog& log, const LoopClosureEvent& event,
                              const GlobalMemory& current)
{
    const long last = static_cast<long>(log.poses.size()) - 1;
    if (event.t_matched < 0 || event.t_now <= event.t_matched || event.t_now > last)
        throw Error(ErrorCode::MissingHistory, "pose log does not cover the loop-closure interval",
                    event.t_now);
    if (log.local_maps.size() != log.poses.size() || log.embeddings.size() != log.poses.size())
        throw Error(ErrorCode::MissingHistory, "episode log is missing local maps or embeddings",
                    event.t_now);

    const Pose& now = log.poses[static_cast<std::size_t>(event.t_now)];
    const Pose& matched = log.poses[static_cast<std::size_t>(event.t_matched)];
    DriftCorrection result{log.poses, current, wrap_angle(matched.theta - now.theta),
                           matched.position() - now.position()};
    if (result.residual_rotation == 0.0 && result.residual_translation.x == 0.0 &&
        result.residual_translation.y == 0.0)
        return result;

    const double span = static_cast<double>(event.t_now - event.t_matched);
    for (long k = event.t_matched + 1; k <= last; ++k) {
        const double f = std::min(1.0, static_cast<double>(k - event.t_matched) / span);
        result.poses[static_cast<std::size_t>(k)] =
            apply_partial_residual(log.poses[static_cast<std::size_t>(k)], f,
                                   result.residual_rotation, result.residual_translation,
                                   now.position());
    }

    GlobalMemory rebuilt(current.config());
    for (long k = 1; k <= last; ++k) {
        const auto i = static_cast<std::size_t>(k);
        rebuilt.warp(relative_egomotion(result.poses[i - 1], result.poses[i]));
        if (!log.local_maps[i].empty())
            rebuilt.write_local(log.local_maps[i]);
        if (log.embeddings[i].size() > 0)
            rebuilt.write_place(log.embeddings[i], k);
    }
    result.memory = std::move(rebuilt);
    return result;
}

}  // namespace esm
