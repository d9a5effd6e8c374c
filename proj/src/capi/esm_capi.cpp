#include "esm/esm.h"

#include <exception>
#include <new>
#include <span>
#include <string>

#include "esm/bvu.hpp"
#include "esm/episode.hpp"
#include "esm/error.hpp"
#include "esm/global_memory.hpp"
#include "esm/grid.hpp"
#include "esm/metrics.hpp"
#include "esm/place_encoder.hpp"
#include "esm/world.hpp"

struct esm_maze {
    esm::MazeMap maze;
};

struct esm_mapper {
    esm::LocalMapper mapper;
};

struct esm_memory {
    esm::GlobalMemory memory;
};

struct esm_encoder {
    esm::EncoderParams params;
};

namespace {

thread_local std::string g_last_error;
thread_local long g_last_step = -1;

esm_status status_of(esm::ErrorCode code)
{
    using esm::ErrorCode;
    switch (code) {
    case ErrorCode::InvalidArgument: return ESM_ERR_INVALID_ARGUMENT;
    case ErrorCode::ParseError: return ESM_ERR_PARSE;
    case ErrorCode::InvalidMaze: return ESM_ERR_INVALID_MAZE;
    case ErrorCode::LimitExceeded: return ESM_ERR_LIMIT_EXCEEDED;
    case ErrorCode::CollisionOnRollout: return ESM_ERR_COLLISION;
    case ErrorCode::OutsideWorld: return ESM_ERR_OUTSIDE_WORLD;
    case ErrorCode::ShapeMismatch: return ESM_ERR_SHAPE_MISMATCH;
    case ErrorCode::NonMonotonicTime: return ESM_ERR_NON_MONOTONIC_TIME;
    case ErrorCode::EmptyResult: return ESM_ERR_EMPTY_RESULT;
    case ErrorCode::MissingHistory: return ESM_ERR_MISSING_HISTORY;
    case ErrorCode::DegenerateInput: return ESM_ERR_DEGENERATE_INPUT;
    case ErrorCode::EmptyGroundTruth: return ESM_ERR_EMPTY_GROUND_TRUTH;
    case ErrorCode::ConfigError: return ESM_ERR_CONFIG;
    case ErrorCode::IoError: return ESM_ERR_IO;
    }
    return ESM_ERR_INTERNAL;
}

esm_status fail(esm_status s, const std::string& msg, long step = -1)
{
    g_last_error = msg;
    g_last_step = step;
    return s;
}

template <typename F>
esm_status guarded(F&& body)
{
    try {
        body();
        g_last_error.clear();
        g_last_step = -1;
        return ESM_OK;
    } catch (const esm::Error& e) {
        return fail(status_of(e.code()), e.what(), e.step());
    } catch (const std::bad_alloc&) {
        return fail(ESM_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(ESM_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(ESM_ERR_INTERNAL, "unknown failure");
    }
}

void require(bool ok, const char* what)
{
    if (!ok)
        throw esm::Error(esm::ErrorCode::InvalidArgument, what);
}

constexpr std::size_t kLocalCells = static_cast<std::size_t>(ESM_LOCAL_SIZE) * ESM_LOCAL_SIZE;

esm::Grid local_from(const double* data)
{
    esm::Grid g(ESM_LOCAL_SIZE, ESM_LOCAL_SIZE);
    std::copy(data, data + kLocalCells, g.values().begin());
    return g;
}

void copy_out(const esm::Grid& g, double* out) { std::copy(g.values().begin(), g.values().end(), out); }

esm::Egomotion ego(const esm_egomotion* e) { return {e->dtheta, e->heading, e->distance}; }
esm::Pose pose_of(const esm_pose* p) { return {p->x, p->y, p->theta}; }

esm::SensorConfig sensor_of(const esm_sensor* s)
{
    esm::SensorConfig c;
    c.fov = s->fov;
    c.n_rays = s->n_rays;
    c.max_range = s->max_range;
    c.corrupt_prob = s->corrupt_prob;
    return c;
}

}  // namespace

extern "C" {

const char* esm_version(void) { return "1.0.0"; }

const char* esm_status_string(esm_status status)
{
    switch (status) {
    case ESM_OK: return "ok";
    case ESM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ESM_ERR_PARSE: return "parse error";
    case ESM_ERR_INVALID_MAZE: return "invalid maze";
    case ESM_ERR_LIMIT_EXCEEDED: return "limit exceeded";
    case ESM_ERR_COLLISION: return "collision on rollout";
    case ESM_ERR_OUTSIDE_WORLD: return "outside world";
    case ESM_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case ESM_ERR_NON_MONOTONIC_TIME: return "non-monotonic time";
    case ESM_ERR_EMPTY_RESULT: return "empty result";
    case ESM_ERR_MISSING_HISTORY: return "missing history";
    case ESM_ERR_DEGENERATE_INPUT: return "degenerate input";
    case ESM_ERR_EMPTY_GROUND_TRUTH: return "empty ground truth";
    case ESM_ERR_CONFIG: return "config error";
    case ESM_ERR_IO: return "i/o error";
    case ESM_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* esm_last_error(void) { return g_last_error.c_str(); }
long esm_last_error_step(void) { return g_last_step; }

esm_status esm_compose_pose(const esm_pose* pose, const esm_egomotion* e, esm_pose* out)
{
    return guarded([&] {
        require(pose && e && out, "null argument");
        const esm::Pose p = esm::compose_pose(pose_of(pose), ego(e));
        *out = {p.x, p.y, p.theta};
    });
}

esm_status esm_egomotion_to_affine(const esm_egomotion* e, double cell_size, double out[6])
{
    return guarded([&] {
        require(e && out, "null argument");
        const esm::Affine2 a = esm::egomotion_to_affine(ego(e), cell_size);
        for (int k = 0; k < 4; ++k)
            out[k] = a.linear[k];
        out[4] = a.translation.x;
        out[5] = a.translation.y;
    });
}

esm_status esm_warp_map(const double* input, int rows, int cols, const double affine[6], double fill,
                        double* out)
{
    return guarded([&] {
        require(input && affine && out && rows > 0 && cols > 0, "bad warp arguments");
        esm::Grid g(rows, cols);
        std::copy(input, input + g.size(), g.values().begin());
        esm::Affine2 a;
        for (int k = 0; k < 4; ++k)
            a.linear[k] = affine[k];
        a.translation = {affine[4], affine[5]};
        copy_out(esm::warp_map(g, a, fill), out);
    });
}

esm_status esm_maze_parse(const char* text, esm_maze** out)
{
    return guarded([&] {
        require(text && out, "null argument");
        *out = new esm_maze{esm::parse_maze(text)};
    });
}

esm_status esm_maze_load(const char* path, esm_maze** out)
{
    return guarded([&] {
        require(path && out, "null argument");
        *out = new esm_maze{esm::load_maze(path)};
    });
}

void esm_maze_free(esm_maze* maze) { delete maze; }

esm_status esm_maze_info(const esm_maze* maze, int* rows, int* cols, double* cell_size, esm_pose* start)
{
    return guarded([&] {
        require(maze != nullptr, "null maze");
        if (rows)
            *rows = maze->maze.rows();
        if (cols)
            *cols = maze->maze.cols();
        if (cell_size)
            *cell_size = maze->maze.cell_size();
        if (start) {
            const esm::Pose& s = maze->maze.start();
            *start = {s.x, s.y, s.theta};
        }
    });
}

int esm_maze_free_cells(const esm_maze* maze) { return maze ? maze->maze.free_cell_count() : -1; }

void esm_sensor_default(esm_sensor* sensor)
{
    if (!sensor)
        return;
    const esm::SensorConfig d;
    *sensor = {d.fov, d.n_rays, d.max_range, d.corrupt_prob};
}

esm_status esm_observe_local(const esm_maze* maze, const esm_pose* pose, const esm_sensor* sensor, double* out)
{
    return guarded([&] {
        require(maze && pose && sensor && out, "null argument");
        copy_out(esm::observe_local(maze->maze, pose_of(pose), sensor_of(sensor)), out);
    });
}

esm_status esm_raycast(const esm_maze* maze, const esm_pose* pose, double fov, int n_rays, double max_range,
                       double* angles, double* ranges)
{
    return guarded([&] {
        require(maze && pose && (n_rays == 0 || (angles && ranges)), "null argument");
        const esm::DepthScan scan = esm::raycast(maze->maze, pose_of(pose), fov, n_rays, max_range);
        std::copy(scan.angles.begin(), scan.angles.end(), angles);
        std::copy(scan.ranges.begin(), scan.ranges.end(), ranges);
    });
}

esm_status esm_mapper_create(double lambda, esm_mapper** out)
{
    return guarded([&] {
        require(out != nullptr, "null argument");
        require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
        *out = new esm_mapper{esm::LocalMapper(esm::MergeParams{lambda})};
    });
}

void esm_mapper_free(esm_mapper* mapper) { delete mapper; }

esm_status esm_mapper_step(esm_mapper* mapper, const esm_egomotion* e, const double* obs, double* out)
{
    return guarded([&] {
        require(mapper && e && obs, "null argument");
        const esm::Grid& m = mapper->mapper.step(ego(e), local_from(obs));
        if (out)
            copy_out(m, out);
    });
}

esm_status esm_memory_create(int rows, int cols, int backend, esm_memory** out)
{
    return guarded([&] {
        require(out != nullptr, "null argument");
        require(backend == 0 || backend == 1, "backend must be 0 or 1");
        esm::MemoryConfig cfg;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.backend = backend == 0 ? esm::MemoryBackend::EgocentricWarp : esm::MemoryBackend::WorldAnchored;
        *out = new esm_memory{esm::GlobalMemory(cfg)};
    });
}

void esm_memory_free(esm_memory* memory) { delete memory; }

esm_status esm_memory_warp(esm_memory* memory, const esm_egomotion* e)
{
    return guarded([&] {
        require(memory && e, "null argument");
        memory->memory.warp(ego(e));
    });
}

esm_status esm_memory_write_local(esm_memory* memory, const double* local)
{
    return guarded([&] {
        require(memory && local, "null argument");
        memory->memory.write_local(local_from(local));
    });
}

esm_status esm_memory_read_local(const esm_memory* memory, double* out)
{
    return guarded([&] {
        require(memory && out, "null argument");
        copy_out(memory->memory.read_local(), out);
    });
}

esm_status esm_memory_write_place(esm_memory* memory, const double* embedding, int dim, long t)
{
    return guarded([&] {
        require(memory && embedding && dim > 0, "bad embedding");
        memory->memory.write_place(Eigen::Map<const Eigen::VectorXd>(embedding, dim), t);
    });
}

esm_status esm_memory_detect(const esm_memory* memory, const double* embedding, int dim, long t_now,
                             double alpha, double close_radius, long recency_window, int* found,
                             esm_closure* out)
{
    return guarded([&] {
        require(memory && embedding && dim > 0 && found, "bad arguments");
        const esm::LoopClosureParams params{alpha, close_radius, recency_window};
        const auto event = memory->memory.detect_loop_closure(
            Eigen::Map<const Eigen::VectorXd>(embedding, dim), t_now, params);
        *found = event ? 1 : 0;
        if (event && out)
            *out = {event->t_now, event->t_matched, event->embed_dist, event->cell_dist};
    });
}

esm_status esm_memory_belief(const esm_memory* memory, double* out)
{
    return guarded([&] {
        require(memory && out, "null argument");
        copy_out(memory->memory.egocentric_belief(), out);
    });
}

esm_status esm_encoder_load(const char* path, esm_encoder** out)
{
    return guarded([&] {
        require(path && out, "null argument");
        *out = new esm_encoder{esm::load_encoder(path)};
    });
}

void esm_encoder_free(esm_encoder* encoder) { delete encoder; }

int esm_encoder_output_dim(const esm_encoder* encoder) { return encoder ? encoder->params.output_dim() : -1; }

esm_status esm_encode_place(const esm_encoder* encoder, const double* view, double* out)
{
    return guarded([&] {
        require(encoder && view && out, "null argument");
        const esm::Embedding e = esm::encode_place(encoder->params, local_from(view));
        std::copy(e.data(), e.data() + e.size(), out);
    });
}

esm_status esm_map_mse(const double* pred, const double* gt, size_t n, double* out)
{
    return guarded([&] {
        require(pred && gt && out, "null argument");
        *out = esm::map_mse(std::span<const double>(pred, n), std::span<const double>(gt, n));
    });
}

esm_status esm_map_correlation(const double* pred, const double* gt, size_t n, double* out, int* degenerate)
{
    return guarded([&] {
        require(pred && gt && out, "null argument");
        const esm::Correlation c = esm::map_correlation(std::span<const double>(pred, n),
                                                        std::span<const double>(gt, n));
        *out = c.value;
        if (degenerate)
            *degenerate = c.degenerate ? 1 : 0;
    });
}

esm_status esm_map_mutual_information(const double* pred, const double* gt, size_t n, int bins, double* out)
{
    return guarded([&] {
        require(pred && gt && out, "null argument");
        *out = esm::map_mutual_information(std::span<const double>(pred, n), std::span<const double>(gt, n),
                                           bins);
    });
}

esm_status esm_run(const char* config_path)
{
    return guarded([&] {
        require(config_path != nullptr, "null config path");
        esm::run_to_directory(esm::load_run_config(config_path));
    });
}

esm_status esm_eval(const char* run_dir, esm_metrics* out)
{
    return guarded([&] {
        require(run_dir != nullptr, "null run directory");
        const esm::MetricsReport r = esm::eval_run_dir(run_dir);
        if (out)
            *out = {r.t, r.mse, r.correlation, r.mutual_information, r.degenerate ? 1 : 0};
    });
}

esm_status esm_pr(const char* run_dir, double aucs[3], int* empty_ground_truth)
{
    return guarded([&] {
        require(run_dir != nullptr, "null run directory");
        const esm::PrResult pr = esm::pr_run_dir(run_dir);
        if (aucs) {
            aucs[0] = pr.embedding.auc;
            aucs[1] = pr.pixelwise.auc;
            aucs[2] = pr.random.auc;
        }
        if (empty_ground_truth)
            *empty_ground_truth = pr.empty_ground_truth ? 1 : 0;
    });
}

esm_status esm_render(const char* run_dir)
{
    return guarded([&] {
        require(run_dir != nullptr, "null run directory");
        esm::render_run_dir(run_dir);
    });
}

esm_status esm_train_pu(const char* config_path, double* initial_loss, double* final_loss)
{
    return guarded([&] {
        require(config_path != nullptr, "null config path");
        const esm::TrainPuResult r = esm::train_pu(esm::load_train_config(config_path));
        if (initial_loss)
            *initial_loss = r.training.initial_loss;
        if (final_loss)
            *final_loss = r.training.epoch_loss.empty() ? r.training.initial_loss : r.training.epoch_loss.back();
    });
}

}  // extern "C"
