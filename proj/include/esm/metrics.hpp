#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "esm/geometry.hpp"
#include "esm/grid.hpp"

namespace esm {

// Belief values in [-1, 1] mapped to [0, 1].
Grid normalize_belief(const Grid& belief);

// Inputs are cell values in [0, 1]; `mask`, when non-empty, selects the
// cells that take part (nonzero = included).
double map_mse(std::span<const double> pred, std::span<const double> gt,
               std::span<const double> mask = {});
double map_mse(const Grid& pred, const Grid& gt);

struct Correlation {
    double value = 0.0;
    bool degenerate = false;  // either input constant; value is then 0
};

Correlation map_correlation(std::span<const double> pred, std::span<const double> gt,
                            std::span<const double> mask = {});
Correlation map_correlation(const Grid& pred, const Grid& gt);

// Mutual information (bits) of the joint histogram of the two maps.
double map_mutual_information(std::span<const double> pred, std::span<const double> gt,
                              int bins = 16, std::span<const double> mask = {});
double map_mutual_information(const Grid& pred, const Grid& gt, int bins = 16);

struct MetricsReport {
    long t = 0;
    std::string area_tag;
    double mse = 0.0;
    double correlation = 0.0;
    double mutual_information = 0.0;
    bool degenerate = false;
};

MetricsReport evaluate_map(const Grid& pred_normalized, const Grid& gt, const Grid& mask,
                           int bins = 16);

// Ones on the free cells of `gt` and their 8-neighbourhood.
Grid observed_region(const Grid& gt);

// i.i.d. uniform [0, 1] belief.
Grid baseline_chance(int rows, int cols, Rng& rng);

// Negative mean squared difference; higher means more similar.
double baseline_pixelwise_matcher(const Grid& a, const Grid& b);

// Best loop-closure proposal for one query step; `distance` is
// lower-is-more-similar (embedding distance, pixel MSE, random score).
struct ClosureCandidate {
    long t_now = 0;
    long t_matched = 0;
    double distance = 0.0;
};

// Simulator truth: pairs (t, t') with world distance <= eps_pos and
// t - t' > recency_window. poses[k] is the pose at step k.
std::vector<std::pair<long, long>> ground_truth_closures(std::span<const Pose> poses,
                                                         double eps_pos, long recency_window);

struct PRPoint {
    double alpha = 0.0;
    double precision = 1.0;
    double recall = 0.0;
    bool no_detections = true;
};

struct PRCurve {
    std::vector<PRPoint> points;
    double auc = 0.0;
    std::size_t positives = 0;  // query steps with at least one true revisit
};

// Detections at threshold alpha are the candidates with distance <= alpha.
// A detection is a true positive when (t_now, t') is a ground-truth pair for
// some |t' - t_matched| <= match_slack. With empty `alphas` every distinct
// candidate distance is used.
PRCurve pr_curve(std::span<const ClosureCandidate> candidates,
                 std::span<const std::pair<long, long>> gt_pairs, long match_slack,
                 std::span<const double> alphas = {});

// Chance classifier: uniform random score per query step, proposing the
// true match whenever one exists.
std::vector<ClosureCandidate> random_detector(std::span<const ClosureCandidate> queries,
                                              std::span<const std::pair<long, long>> gt_pairs,
                                              Rng& rng);

}  // namespace esm
