#ifndef ESM_ESM_H
#define ESM_ESM_H

#include <stddef.h>

#if defined(_WIN32)
#if defined(ESM_BUILDING_CAPI)
#define ESM_API __declspec(dllexport)
#else
#define ESM_API __declspec(dllimport)
#endif
#else
#define ESM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum esm_status {
    ESM_OK = 0,
    ESM_ERR_INVALID_ARGUMENT = 1,
    ESM_ERR_PARSE = 2,
    ESM_ERR_INVALID_MAZE = 3,
    ESM_ERR_LIMIT_EXCEEDED = 4,
    ESM_ERR_COLLISION = 5,
    ESM_ERR_OUTSIDE_WORLD = 6,
    ESM_ERR_SHAPE_MISMATCH = 7,
    ESM_ERR_NON_MONOTONIC_TIME = 8,
    ESM_ERR_EMPTY_RESULT = 9,
    ESM_ERR_MISSING_HISTORY = 10,
    ESM_ERR_DEGENERATE_INPUT = 11,
    ESM_ERR_EMPTY_GROUND_TRUTH = 12,
    ESM_ERR_CONFIG = 13,
    ESM_ERR_IO = 14,
    ESM_ERR_INTERNAL = 15
} esm_status;

/* Side length of the egocentric local map; local buffers hold
   ESM_LOCAL_SIZE * ESM_LOCAL_SIZE doubles, row-major. */
#define ESM_LOCAL_SIZE 32

typedef struct esm_pose {
    double x;
    double y;
    double theta;
} esm_pose;

typedef struct esm_egomotion {
    double dtheta;
    double heading;
    double distance;
} esm_egomotion;

typedef struct esm_sensor {
    double fov; /* radians */
    int n_rays;
    double max_range;
    double corrupt_prob;
} esm_sensor;

typedef struct esm_closure {
    long t_now;
    long t_matched;
    double embed_dist;
    double cell_dist;
} esm_closure;

typedef struct esm_metrics {
    long t;
    double mse;
    double correlation;
    double mutual_information;
    int degenerate;
} esm_metrics;

typedef struct esm_maze esm_maze;
typedef struct esm_mapper esm_mapper;
typedef struct esm_memory esm_memory;
typedef struct esm_encoder esm_encoder;

ESM_API const char* esm_version(void);
ESM_API const char* esm_status_string(esm_status status);
/* Message and step index of the last failure on the calling thread. */
ESM_API const char* esm_last_error(void);
ESM_API long esm_last_error_step(void);

/* Geometry */
ESM_API esm_status esm_compose_pose(const esm_pose* pose, const esm_egomotion* e, esm_pose* out);
/* out = {l00, l01, l10, l11, t0, t1}; acts on (forward, left) cell offsets. */
ESM_API esm_status esm_egomotion_to_affine(const esm_egomotion* e, double cell_size, double out[6]);
ESM_API esm_status esm_warp_map(const double* input, int rows, int cols, const double affine[6],
                                double fill, double* out);

/* World */
ESM_API esm_status esm_maze_parse(const char* text, esm_maze** out);
ESM_API esm_status esm_maze_load(const char* path, esm_maze** out);
ESM_API void esm_maze_free(esm_maze* maze);
ESM_API esm_status esm_maze_info(const esm_maze* maze, int* rows, int* cols, double* cell_size,
                                 esm_pose* start);
ESM_API int esm_maze_free_cells(const esm_maze* maze);
ESM_API void esm_sensor_default(esm_sensor* sensor);
ESM_API esm_status esm_observe_local(const esm_maze* maze, const esm_pose* pose, const esm_sensor* sensor,
                                     double* out);
/* angles and ranges must each hold n_rays doubles. */
ESM_API esm_status esm_raycast(const esm_maze* maze, const esm_pose* pose, double fov, int n_rays,
                               double max_range, double* angles, double* ranges);

/* Local mapper */
ESM_API esm_status esm_mapper_create(double lambda, esm_mapper** out);
ESM_API void esm_mapper_free(esm_mapper* mapper);
ESM_API esm_status esm_mapper_step(esm_mapper* mapper, const esm_egomotion* e, const double* obs,
                                   double* out);

/* Global memory; backend 0 = egocentric warp, 1 = world anchored. */
ESM_API esm_status esm_memory_create(int rows, int cols, int backend, esm_memory** out);
ESM_API void esm_memory_free(esm_memory* memory);
ESM_API esm_status esm_memory_warp(esm_memory* memory, const esm_egomotion* e);
ESM_API esm_status esm_memory_write_local(esm_memory* memory, const double* local);
ESM_API esm_status esm_memory_read_local(const esm_memory* memory, double* out);
ESM_API esm_status esm_memory_write_place(esm_memory* memory, const double* embedding, int dim, long t);
/* *found is set to 1 when a candidate within alpha exists. */
ESM_API esm_status esm_memory_detect(const esm_memory* memory, const double* embedding, int dim, long t_now,
                                     double alpha, double close_radius, long recency_window, int* found,
                                     esm_closure* out);
/* out holds rows * cols doubles in the current egocentric frame. */
ESM_API esm_status esm_memory_belief(const esm_memory* memory, double* out);

/* Place encoder */
ESM_API esm_status esm_encoder_load(const char* path, esm_encoder** out);
ESM_API void esm_encoder_free(esm_encoder* encoder);
ESM_API int esm_encoder_output_dim(const esm_encoder* encoder);
ESM_API esm_status esm_encode_place(const esm_encoder* encoder, const double* view, double* out);

/* Metrics on n cells with values in [0, 1]. */
ESM_API esm_status esm_map_mse(const double* pred, const double* gt, size_t n, double* out);
ESM_API esm_status esm_map_correlation(const double* pred, const double* gt, size_t n, double* out,
                                       int* degenerate);
ESM_API esm_status esm_map_mutual_information(const double* pred, const double* gt, size_t n, int bins,
                                              double* out);

/* Episode harness */
ESM_API esm_status esm_run(const char* config_path);
ESM_API esm_status esm_eval(const char* run_dir, esm_metrics* out);
/* aucs = {embedding, pixelwise, random}; *empty_ground_truth set when the
   trajectory never revisits a place. */
ESM_API esm_status esm_pr(const char* run_dir, double aucs[3], int* empty_ground_truth);
ESM_API esm_status esm_render(const char* run_dir);
ESM_API esm_status esm_train_pu(const char* config_path, double* initial_loss, double* final_loss);

#ifdef __cplusplus
}
#endif

#endif
