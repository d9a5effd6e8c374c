#include "esm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "esm/error.hpp"

namespace esm {

namespace {

void check_inputs(std::span<const double> pred, std::span<const double> gt,
                  std::span<const double> mask)
{
    if (pred.size() != gt.size() || (!mask.empty() && mask.size() != pred.size()))
        throw Error(ErrorCode::ShapeMismatch, "metric inputs differ in size");
}

bool included(std::span<const double> mask, std::size_t k) { return mask.empty() || mask[k] != 0.0; }

int bin_of(double v, int bins)
{
    const int b = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * bins));
    return std::min(b, bins - 1);
}

void check_grids(const Grid& a, const Grid& b)
{
    if (!a.same_shape(b))
        throw Error(ErrorCode::ShapeMismatch, "maps differ in shape");
}

}  // namespace

Grid normalize_belief(const Grid& belief)
{
    Grid out = belief;
    for (double& v : out.values())
        v = (v + 1.0) / 2.0;
    return out;
}

double map_mse(std::span<const double> pred, std::span<const double> gt, std::span<const double> mask)
{
    check_inputs(pred, gt, mask);
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!included(mask, k))
            continue;
        const double d = pred[k] - gt[k];
        total += d * d;
        ++n;
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

double map_mse(const Grid& pred, const Grid& gt)
{
    check_grids(pred, gt);
    return map_mse(pred.values(), gt.values());
}

Correlation map_correlation(std::span<const double> pred, std::span<const double> gt,
                            std::span<const double> mask)
{
    check_inputs(pred, gt, mask);
    double n = 0.0;
    double mean_p = 0.0;
    double mean_g = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!included(mask, k))
            continue;
        n += 1.0;
        mean_p += pred[k];
        mean_g += gt[k];
    }
    if (n == 0.0)
        return {0.0, true};
    mean_p /= n;
    mean_g /= n;
    double cov = 0.0;
    double var_p = 0.0;
    double var_g = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!included(mask, k))
            continue;
        const double dp = pred[k] - mean_p;
        const double dg = gt[k] - mean_g;
        cov += dp * dg;
        var_p += dp * dp;
        var_g += dg * dg;
    }
    if (var_p <= 0.0 || var_g <= 0.0)
        return {0.0, true};
    return {std::clamp(cov / std::sqrt(var_p * var_g), -1.0, 1.0), false};
}

Correlation map_correlation(const Grid& pred, const Grid& gt)
{
    check_grids(pred, gt);
    return map_correlation(pred.values(), gt.values());
}

double map_mutual_information(std::span<const double> pred, std::span<const double> gt, int bins,
                              std::span<const double> mask)
{
    check_inputs(pred, gt, mask);
    if (bins < 2)
        throw Error(ErrorCode::InvalidArgument, "mutual information needs at least 2 bins");
    std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
    std::vector<double> marg_p(bins, 0.0);
    std::vector<double> marg_g(bins, 0.0);
    double n = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!included(mask, k))
            continue;
        const int bp = bin_of(pred[k], bins);
        const int bg = bin_of(gt[k], bins);
        joint[static_cast<std::size_t>(bp) * bins + bg] += 1.0;
        marg_p[bp] += 1.0;
        marg_g[bg] += 1.0;
        n += 1.0;
    }
    if (n == 0.0)
        return 0.0;
    double mi = 0.0;
    for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) {
            const double c = joint[static_cast<std::size_t>(i) * bins + j];
            if (c == 0.0)
                continue;
            mi += (c / n) * std::log2(c * n / (marg_p[i] * marg_g[j]));
        }
    }
    return std::max(0.0, mi);
}

double map_mutual_information(const Grid& pred, const Grid& gt, int bins)
{
    check_grids(pred, gt);
    return map_mutual_information(pred.values(), gt.values(), bins);
}

MetricsReport evaluate_map(const Grid& pred_normalized, const Grid& gt, const Grid& mask, int bins)
{
    check_grids(pred_normalized, gt);
    if (!mask.empty())
        check_grids(pred_normalized, mask);
    const auto m = mask.values();
    MetricsReport report;
    report.mse = map_mse(pred_normalized.values(), gt.values(), m);
    const Correlation cor = map_correlation(pred_normalized.values(), gt.values(), m);
    report.correlation = cor.value;
    report.degenerate = cor.degenerate;
    report.mutual_information = map_mutual_information(pred_normalized.values(), gt.values(), bins, m);
    return report;
}

Grid observed_region(const Grid& gt)
{
    Grid region(gt.rows(), gt.cols(), 0.0);
    for (int r = 0; r < gt.rows(); ++r) {
        for (int c = 0; c < gt.cols(); ++c) {
            if (gt(r, c) == 0.0)
                continue;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc)
                    if (region.contains(r + dr, c + dc))
                        region(r + dr, c + dc) = 1.0;
        }
    }
    return region;
}

Grid baseline_chance(int rows, int cols, Rng& rng)
{
    Grid out(rows, cols);
    for (double& v : out.values())
        v = rng.uniform01();
    return out;
}

double baseline_pixelwise_matcher(const Grid& a, const Grid& b)
{
    check_grids(a, b);
    return -map_mse(a.values(), b.values());
}

std::vector<std::pair<long, long>> ground_truth_closures(std::span<const Pose> poses,
                                                         double eps_pos, long recency_window)
{
    std::vector<std::pair<long, long>> pairs;
    const long n = static_cast<long>(poses.size());
    for (long t = 0; t < n; ++t)
        for (long u = 0; t - u > recency_window; ++u)
            if (norm(poses[t].position() - poses[u].position()) <= eps_pos)
                pairs.emplace_back(t, u);
    return pairs;
}

PRCurve pr_curve(std::span<const ClosureCandidate> candidates,
                 std::span<const std::pair<long, long>> gt_pairs, long match_slack,
                 std::span<const double> alphas)
{
    std::map<long, std::set<long>> truth;
    for (const auto& [t, u] : gt_pairs)
        truth[t].insert(u);
    if (truth.empty())
        throw Error(ErrorCode::EmptyGroundTruth, "trajectory has no ground-truth revisits");

    auto is_true_positive = [&](const ClosureCandidate& c) {
        const auto it = truth.find(c.t_now);
        if (it == truth.end())
            return false;
        const auto lo = it->second.lower_bound(c.t_matched - match_slack);
        return lo != it->second.end() && *lo <= c.t_matched + match_slack;
    };

    std::vector<double> sweep(alphas.begin(), alphas.end());
    if (sweep.empty())
        for (const ClosureCandidate& c : candidates)
            sweep.push_back(c.distance);
    std::sort(sweep.begin(), sweep.end());
    sweep.erase(std::unique(sweep.begin(), sweep.end()), sweep.end());

    // Sort once by distance so each threshold is a prefix.
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(candidates.size());
    for (const ClosureCandidate& c : candidates)
        scored.emplace_back(c.distance, is_true_positive(c));
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    PRCurve curve;
    curve.positives = truth.size();
    std::size_t idx = 0;
    std::size_t tp = 0;
    for (double alpha : sweep) {
        while (idx < scored.size() && scored[idx].first <= alpha) {
            tp += scored[idx].second ? 1 : 0;
            ++idx;
        }
        PRPoint p;
        p.alpha = alpha;
        p.no_detections = idx == 0;
        p.precision = idx == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(idx);
        p.recall = static_cast<double>(tp) / static_cast<double>(curve.positives);
        curve.points.push_back(p);
    }

    bool started = false;
    double prev_r = 0.0;
    double prev_p = 0.0;
    for (const PRPoint& p : curve.points) {
        if (p.no_detections)
            continue;
        if (!started) {
            prev_p = p.precision;
            started = true;
        }
        curve.auc += (p.recall - prev_r) * (p.precision + prev_p) / 2.0;
        prev_r = p.recall;
        prev_p = p.precision;
    }
    return curve;
}

std::vector<ClosureCandidate> random_detector(std::span<const ClosureCandidate> queries,
                                              std::span<const std::pair<long, long>> gt_pairs,
                                              Rng& rng)
{
    std::map<long, long> first_match;
    for (const auto& [t, u] : gt_pairs)
        first_match.try_emplace(t, u);
    std::vector<ClosureCandidate> out;
    out.reserve(queries.size());
    for (const ClosureCandidate& q : queries) {
        ClosureCandidate c = q;
        const auto it = first_match.find(q.t_now);
        if (it != first_match.end())
            c.t_matched = it->second;
        c.distance = rng.uniform01();
        out.push_back(c);
    }
    return out;
}

}  // namespace esm
