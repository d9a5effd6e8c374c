#include "esm/episode.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <set>

#include "json.hpp"

#include "esm/error.hpp"
#include "esm/io.hpp"

namespace esm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kCrlf = "\r\n";

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

enum Stream : std::uint64_t {
    kNoiseStream = 1,
    kCorruptStream,
    kChanceStream,
    kRandomDetectorStream,
    kEncoderInitStream,
    kTrainStream,
    kEvalChanceStream,
    kMiningStream = 100,
};

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    if (!obj.is_object())
        config_error(where + " must be an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            config_error("unknown key '" + item.key() + "' in " + where);
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback)
{
    const auto it = obj.find(key);
    if (it == obj.end())
        return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        config_error(std::string("bad value for '") + key + "'");
    }
}

std::string resolve_path(const std::string& base_dir, const std::string& p, bool must_exist)
{
    fs::path path(p);
    if (path.is_relative())
        path = fs::path(base_dir) / path;
    path = path.lexically_normal();
    if (must_exist && !fs::exists(path))
        config_error("referenced file does not exist: " + path.string());
    return path.string();
}

std::string require_path(const json& obj, const char* key, const std::string& base_dir)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        config_error(std::string("missing path '") + key + "'");
    return resolve_path(base_dir, it->get<std::string>(), true);
}

void check_schema(const json& j)
{
    const auto it = j.find("schema");
    if (it == j.end())
        config_error("missing 'schema'");
    if (!it->is_number_integer() || it->get<int>() != 1)
        config_error("unsupported schema version");
}

json parse_json(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        config_error(std::string("invalid JSON: ") + e.what());
    }
}

std::uint64_t parse_seed(const json& j)
{
    const auto it = j.find("seed");
    if (it == j.end())
        return 0;
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0))
        config_error("seed must be a non-negative integer");
    return it->get<std::uint64_t>();
}

void apply_env_seed(std::uint64_t& seed)
{
    const char* env = std::getenv("ESM_SEED");
    if (env == nullptr || *env == '\0')
        return;
    const std::string s(env);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        config_error("ESM_SEED is not a non-negative integer");
    seed = v;
}

SensorConfig parse_sensor(const json& j)
{
    SensorConfig s;
    if (!j.contains("sensor"))
        return s;
    const json& o = j.at("sensor");
    check_keys(o, {"fov_deg", "n_rays", "max_range", "corrupt_prob"}, "sensor");
    s.fov = deg_to_rad(get_or(o, "fov_deg", rad_to_deg(s.fov)));
    s.n_rays = get_or(o, "n_rays", s.n_rays);
    s.max_range = get_or(o, "max_range", s.max_range);
    s.corrupt_prob = get_or(o, "corrupt_prob", s.corrupt_prob);
    if (s.fov < 0.0 || s.fov > 2.0 * kPi + 1e-12 || s.n_rays < 0 || !(s.max_range > 0.0) ||
        s.corrupt_prob < 0.0 || s.corrupt_prob > 1.0)
        config_error("sensor parameters out of range");
    return s;
}

ActionLimits parse_limits(const json& j)
{
    ActionLimits l;
    if (!j.contains("limits"))
        return l;
    const json& o = j.at("limits");
    check_keys(o, {"rot_deg", "trans_m", "step_period"}, "limits");
    l.rot_limit = deg_to_rad(get_or(o, "rot_deg", rad_to_deg(l.rot_limit)));
    l.trans_limit = get_or(o, "trans_m", l.trans_limit);
    l.step_period = get_or(o, "step_period", l.step_period);
    if (!(l.rot_limit > 0.0) || !(l.trans_limit > 0.0))
        config_error("limits must be positive");
    return l;
}

EncoderShape parse_shape(const json& o, EncoderShape shape)
{
    check_keys(o, {"hidden", "output"}, "encoder");
    shape.hidden = get_or(o, "hidden", shape.hidden);
    shape.output_dim = get_or(o, "output", shape.output_dim);
    if (shape.output_dim <= 0 || std::any_of(shape.hidden.begin(), shape.hidden.end(),
                                             [](int h) { return h <= 0; }))
        config_error("encoder sizes must be positive");
    return shape;
}

std::string backend_name(MemoryBackend b)
{
    return b == MemoryBackend::EgocentricWarp ? "egocentric" : "anchored";
}

json sensor_json(const SensorConfig& s)
{
    return {{"fov_deg", rad_to_deg(s.fov)},
            {"n_rays", s.n_rays},
            {"max_range", s.max_range},
            {"corrupt_prob", s.corrupt_prob}};
}

json run_config_json(const RunConfig& cfg, bool has_encoder)
{
    json j;
    j["schema"] = 1;
    j["maze"] = "maze.txt";
    j["trajectory"] = "trajectory.csv";
    if (has_encoder)
        j["encoder"] = "encoder.json";
    else
        j["encoder"] = {{"hidden", cfg.encoder_shape.hidden}, {"output", cfg.encoder_shape.output_dim}};
    j["seed"] = cfg.seed;
    j["sensor"] = sensor_json(cfg.sensor);
    j["lambda"] = cfg.merge.lambda;
    j["limits"] = {{"rot_deg", rad_to_deg(cfg.limits.rot_limit)},
                   {"trans_m", cfg.limits.trans_limit},
                   {"step_period", cfg.limits.step_period}};
    j["noise"] = {{"level", cfg.noise.relative_level},
                  {"distribution", cfg.noise.distribution == NoiseDistribution::Uniform ? "uniform"
                                                                                        : "gaussian"}};
    j["memory"] = {{"rows", cfg.memory.rows},
                   {"cols", cfg.memory.cols},
                   {"backend", backend_name(cfg.memory.backend)}};
    j["loop_closure"] = {{"enabled", cfg.loop_closure},
                         {"correct", cfg.correction},
                         {"alpha", cfg.closure.alpha},
                         {"close_radius", cfg.closure.close_radius},
                         {"recency_window", cfg.closure.recency_window},
                         {"min_correction_m", cfg.min_correction_m},
                         {"min_correction_deg", rad_to_deg(cfg.min_correction_rad)},
                         {"heading_gate", cfg.heading_gate}};
    j["eval"] = {{"interval", cfg.eval_interval},
                 {"trend_stride", cfg.trend_stride},
                 {"mi_bins", cfg.mi_bins},
                 {"gt_eps_pos", cfg.gt_eps_pos},
                 {"match_slack", cfg.match_slack}};
    return j;
}

std::string base_dir_of(const std::string& path)
{
    const fs::path parent = fs::path(path).parent_path();
    return parent.empty() ? std::string(".") : parent.string();
}

void validate(const RunConfig& cfg)
{
    if (cfg.eval_interval < 1)
        config_error("eval interval must be at least 1");
    if (cfg.trend_stride < 1)
        config_error("trend stride must be at least 1");
    if (cfg.mi_bins < 2)
        config_error("mi_bins must be at least 2");
    if (cfg.merge.lambda < 0.0 || cfg.merge.lambda > 1.0)
        config_error("lambda must lie in [0, 1]");
    if (cfg.noise.relative_level < 0.0)
        config_error("noise level must be non-negative");
    if (cfg.memory.window != kLocalSize)
        config_error("memory window must match the local map size");
}

Grid normalized(const Grid& g) { return normalize_belief(g); }

MetricsReport tagged(MetricsReport r, long t, const char* tag)
{
    r.t = t;
    r.area_tag = tag;
    return r;
}

double pixel_distance(const Grid& a, const Grid& b) { return -baseline_pixelwise_matcher(a, b); }

Pose pose_from_row(const std::vector<std::string>& row, std::size_t offset)
{
    auto num = [&](std::size_t k) {
        double v = 0.0;
        const std::string& s = row.at(offset + k);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw Error(ErrorCode::ParseError, "bad number '" + s + "' in pose log");
        return v;
    };
    return {num(0), num(1), num(2)};
}

long parse_long(const std::string& s)
{
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "bad integer '" + s + "'");
    return v;
}

double parse_double(const std::string& s)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "bad number '" + s + "'");
    return v;
}

struct PoseLog {
    std::vector<Pose> true_poses;
    std::vector<Pose> estimated;
};

PoseLog read_pose_log(const std::string& path)
{
    const auto rows = read_csv(path);
    PoseLog log;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 7)
            throw Error(ErrorCode::ParseError, path + ": expected 7 fields", static_cast<long>(i));
        log.true_poses.push_back(pose_from_row(rows[i], 1));
        log.estimated.push_back(pose_from_row(rows[i], 4));
    }
    return log;
}

json report_json(const MetricsReport& r)
{
    return {{"t", r.t},
            {"area", r.area_tag},
            {"mse", r.mse},
            {"correlation", r.correlation},
            {"mutual_information", r.mutual_information},
            {"degenerate", r.degenerate}};
}

void write_pr_files(const PrResult& pr, const std::string& dir)
{
    json j;
    if (pr.empty_ground_truth) {
        j["status"] = "empty_ground_truth";
        write_text_file((fs::path(dir) / "pr.json").string(), j.dump(2) + "\n");
        write_text_file((fs::path(dir) / "pr.csv").string(),
                        std::string("method,alpha,precision,recall,no_detections") + kCrlf);
        return;
    }
    std::string csv = std::string("method,alpha,precision,recall,no_detections") + kCrlf;
    j["status"] = "ok";
    j["positives"] = pr.positives;
    const std::pair<const char*, const PRCurve*> curves[] = {
        {"embedding", &pr.embedding}, {"pixelwise", &pr.pixelwise}, {"random", &pr.random}};
    for (const auto& [name, curve] : curves) {
        j["auc"][name] = curve->auc;
        for (const PRPoint& p : curve->points)
            csv += std::string(name) + "," + format_double(p.alpha) + "," + format_double(p.precision) +
                   "," + format_double(p.recall) + "," + (p.no_detections ? "1" : "0") + kCrlf;
    }
    write_text_file((fs::path(dir) / "pr.csv").string(), csv);
    write_text_file((fs::path(dir) / "pr.json").string(), j.dump(2) + "\n");
}

Vec2 raster_index(const WorldRaster& raster, Vec2 world)
{
    return {(world.y - raster.origin.y) / raster.cell_size - 0.5,
            (world.x - raster.origin.x) / raster.cell_size - 0.5};
}

std::string overlay_csv(const WorldRaster& raster, const std::vector<Pose>& true_poses,
                        const std::vector<Pose>& estimated,
                        const std::vector<std::pair<long, long>>& closures)
{
    std::string csv = std::string("kind,t,row,col,theta") + kCrlf;
    auto emit = [&](const char* kind, long t, const Pose& p) {
        const Vec2 idx = raster_index(raster, p.position());
        csv += std::string(kind) + "," + std::to_string(t) + "," + format_double(idx.x) + "," +
               format_double(idx.y) + "," + format_double(p.theta) + kCrlf;
    };
    for (std::size_t k = 0; k < true_poses.size(); ++k)
        emit("true_pose", static_cast<long>(k), true_poses[k]);
    for (std::size_t k = 0; k < estimated.size(); ++k)
        emit("estimated_pose", static_cast<long>(k), estimated[k]);
    for (const auto& [t_now, t_matched] : closures) {
        if (t_now < static_cast<long>(estimated.size()))
            emit("closure_now", t_now, estimated[static_cast<std::size_t>(t_now)]);
        if (t_matched < static_cast<long>(estimated.size()))
            emit("closure_matched", t_now, estimated[static_cast<std::size_t>(t_matched)]);
    }
    return csv;
}

std::vector<std::pair<long, long>> read_closure_pairs(const std::string& path)
{
    std::vector<std::pair<long, long>> pairs;
    if (!fs::exists(path))
        return pairs;
    const auto rows = read_csv(path);
    for (std::size_t i = 1; i < rows.size(); ++i)
        pairs.emplace_back(parse_long(rows[i].at(0)), parse_long(rows[i].at(1)));
    return pairs;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir, bool apply_env)
{
    const json j = parse_json(json_text);
    check_keys(j,
               {"schema", "maze", "trajectory", "output_dir", "encoder", "seed", "sensor", "lambda",
                "limits", "noise", "memory", "loop_closure", "eval", "name"},
               "config");
    check_schema(j);

    RunConfig cfg;
    cfg.maze_path = require_path(j, "maze", base_dir);
    cfg.trajectory_path = require_path(j, "trajectory", base_dir);
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string())
            config_error("output_dir must be a string");
        cfg.output_dir = resolve_path(base_dir, j.at("output_dir").get<std::string>(), false);
    }
    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        if (e.is_string())
            cfg.encoder_path = require_path(j, "encoder", base_dir);
        else
            cfg.encoder_shape = parse_shape(e, cfg.encoder_shape);
    }
    cfg.seed = parse_seed(j);
    if (apply_env)
        apply_env_seed(cfg.seed);
    cfg.sensor = parse_sensor(j);
    cfg.merge.lambda = get_or(j, "lambda", cfg.merge.lambda);
    cfg.limits = parse_limits(j);

    if (j.contains("noise")) {
        const json& o = j.at("noise");
        check_keys(o, {"level", "distribution"}, "noise");
        cfg.noise.relative_level = get_or(o, "level", 0.0);
        const std::string dist = get_or<std::string>(o, "distribution", "uniform");
        if (dist == "uniform")
            cfg.noise.distribution = NoiseDistribution::Uniform;
        else if (dist == "gaussian")
            cfg.noise.distribution = NoiseDistribution::Gaussian;
        else
            config_error("noise distribution must be 'uniform' or 'gaussian'");
    }
    if (j.contains("memory")) {
        const json& o = j.at("memory");
        check_keys(o, {"rows", "cols", "backend"}, "memory");
        cfg.memory.rows = get_or(o, "rows", cfg.memory.rows);
        cfg.memory.cols = get_or(o, "cols", cfg.memory.cols);
        const std::string backend = get_or<std::string>(o, "backend", "egocentric");
        if (backend == "egocentric")
            cfg.memory.backend = MemoryBackend::EgocentricWarp;
        else if (backend == "anchored")
            cfg.memory.backend = MemoryBackend::WorldAnchored;
        else
            config_error("memory backend must be 'egocentric' or 'anchored'");
        if (cfg.memory.rows < kLocalSize || cfg.memory.cols < kLocalSize)
            config_error("memory must be at least as large as the local map");
    }
    if (j.contains("loop_closure")) {
        const json& o = j.at("loop_closure");
        check_keys(o,
                   {"enabled", "correct", "alpha", "close_radius", "recency_window", "min_correction_m",
                    "min_correction_deg", "heading_gate"},
                   "loop_closure");
        cfg.loop_closure = get_or(o, "enabled", cfg.loop_closure);
        cfg.correction = get_or(o, "correct", cfg.correction);
        cfg.closure.alpha = get_or(o, "alpha", cfg.closure.alpha);
        cfg.closure.close_radius = get_or(o, "close_radius", cfg.closure.close_radius);
        cfg.closure.recency_window = get_or(o, "recency_window", cfg.closure.recency_window);
        cfg.min_correction_m = get_or(o, "min_correction_m", cfg.min_correction_m);
        cfg.min_correction_rad =
            deg_to_rad(get_or(o, "min_correction_deg", rad_to_deg(cfg.min_correction_rad)));
        cfg.heading_gate = get_or(o, "heading_gate", cfg.heading_gate);
        if (cfg.closure.recency_window < 0 || cfg.closure.close_radius < 0.0)
            config_error("loop-closure masks must be non-negative");
    }
    if (j.contains("eval")) {
        const json& o = j.at("eval");
        check_keys(o, {"interval", "trend_stride", "mi_bins", "gt_eps_pos", "match_slack"}, "eval");
        cfg.eval_interval = get_or(o, "interval", cfg.eval_interval);
        cfg.trend_stride = get_or(o, "trend_stride", cfg.trend_stride);
        cfg.mi_bins = get_or(o, "mi_bins", cfg.mi_bins);
        cfg.gt_eps_pos = get_or(o, "gt_eps_pos", cfg.gt_eps_pos);
        cfg.match_slack = get_or(o, "match_slack", cfg.match_slack);
    }
    cfg.noise.seed = derive_seed(cfg.seed, kNoiseStream);
    validate(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path, bool apply_env)
{
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        config_error(e.what());
    }
    return parse_run_config(text, base_dir_of(path), apply_env);
}

TrainPuConfig parse_train_config(const std::string& json_text, const std::string& base_dir,
                                 bool apply_env)
{
    const json j = parse_json(json_text);
    check_keys(j,
               {"schema", "sources", "output", "loss_csv", "seed", "sensor", "limits", "encoder",
                "mining", "train", "name"},
               "config");
    check_schema(j);

    TrainPuConfig cfg;
    const auto sources = j.find("sources");
    if (sources == j.end() || !sources->is_array() || sources->empty())
        config_error("'sources' must be a non-empty array");
    for (const json& s : *sources) {
        check_keys(s, {"maze", "trajectory"}, "source");
        cfg.sources.push_back({require_path(s, "maze", base_dir), require_path(s, "trajectory", base_dir)});
    }
    if (!j.contains("output") || !j.at("output").is_string())
        config_error("missing 'output'");
    cfg.output_path = resolve_path(base_dir, j.at("output").get<std::string>(), false);
    if (j.contains("loss_csv")) {
        if (!j.at("loss_csv").is_string())
            config_error("loss_csv must be a string");
        cfg.loss_csv_path = resolve_path(base_dir, j.at("loss_csv").get<std::string>(), false);
    }
    cfg.seed = parse_seed(j);
    if (apply_env)
        apply_env_seed(cfg.seed);
    cfg.sensor = parse_sensor(j);
    cfg.limits = parse_limits(j);
    if (j.contains("encoder"))
        cfg.shape = parse_shape(j.at("encoder"), cfg.shape);
    if (j.contains("mining")) {
        const json& o = j.at("mining");
        check_keys(o, {"eps_pos", "eps_neg", "gap", "max_triplets", "rounds"}, "mining");
        cfg.eps_pos = get_or(o, "eps_pos", cfg.eps_pos);
        cfg.eps_neg = get_or(o, "eps_neg", cfg.eps_neg);
        cfg.gap = get_or(o, "gap", cfg.gap);
        cfg.max_triplets = get_or(o, "max_triplets", cfg.max_triplets);
        cfg.mining_rounds = get_or(o, "rounds", cfg.mining_rounds);
        if (!(cfg.eps_pos < cfg.eps_neg) || cfg.eps_pos < 0.0 || cfg.mining_rounds < 1 || cfg.gap < 0)
            config_error("mining parameters out of range");
    }
    if (j.contains("train")) {
        const json& o = j.at("train");
        check_keys(o, {"lr", "optimizer", "momentum", "beta2", "epsilon", "batch", "epochs", "loss_form"},
                   "train");
        TrainConfig& t = cfg.train;
        t.learning_rate = get_or(o, "lr", t.learning_rate);
        t.momentum = get_or(o, "momentum", t.momentum);
        t.beta2 = get_or(o, "beta2", t.beta2);
        t.epsilon = get_or(o, "epsilon", t.epsilon);
        t.batch_size = get_or(o, "batch", t.batch_size);
        t.epochs = get_or(o, "epochs", t.epochs);
        const std::string opt = get_or<std::string>(o, "optimizer", "adam");
        if (opt == "adam")
            t.optimizer = Optimizer::Adam;
        else if (opt == "momentum")
            t.optimizer = Optimizer::Momentum;
        else
            config_error("optimizer must be 'adam' or 'momentum'");
        const std::string form = get_or<std::string>(o, "loss_form", "corrected");
        if (form == "corrected")
            t.loss_form = LossForm::Corrected;
        else if (form == "literal")
            t.loss_form = LossForm::Literal;
        else
            config_error("loss_form must be 'corrected' or 'literal'");
        if (!(t.learning_rate > 0.0) || t.batch_size == 0 || t.epochs < 0)
            config_error("training parameters out of range");
    }
    cfg.train.seed = derive_seed(cfg.seed, kTrainStream);
    return cfg;
}

TrainPuConfig load_train_config(const std::string& path, bool apply_env)
{
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        config_error(e.what());
    }
    return parse_train_config(text, base_dir_of(path), apply_env);
}

PrResult compute_pr(const std::vector<CandidateRecord>& candidates, std::span<const Pose> true_poses,
                    double eps_pos, long recency_window, long match_slack, std::uint64_t seed)
{
    PrResult pr;
    const auto gt = ground_truth_closures(true_poses, eps_pos, recency_window);
    if (gt.empty()) {
        pr.empty_ground_truth = true;
        return pr;
    }
    std::vector<ClosureCandidate> emb;
    std::vector<ClosureCandidate> pix;
    std::vector<ClosureCandidate> queries;
    for (const CandidateRecord& c : candidates) {
        if (c.embedding)
            emb.push_back(*c.embedding);
        if (c.pixelwise)
            pix.push_back(*c.pixelwise);
        queries.push_back({c.t_now, c.t_now, 0.0});
    }
    Rng rng(derive_seed(seed, kRandomDetectorStream));
    const auto random = random_detector(queries, gt, rng);
    pr.embedding = pr_curve(emb, gt, match_slack);
    pr.pixelwise = pr_curve(pix, gt, match_slack);
    pr.random = pr_curve(random, gt, match_slack);
    pr.positives = pr.embedding.positives;
    return pr;
}

EpisodeResult run_episode(const RunConfig& cfg, const MazeMap& maze, const Trajectory& trajectory,
                          const EncoderParams& encoder)
{
    validate(cfg);
    if (cfg.loop_closure && encoder.input_dim() != pooled_feature_dim())
        throw Error(ErrorCode::ConfigError, "encoder input size does not match the pooled view");

    EpisodeResult res;
    res.name = trajectory.name;
    res.steps = static_cast<long>(trajectory.steps.size());
    res.raster = raster_for(maze, cfg.memory.cell_size);
    res.global_gt = Grid(res.raster.rows, res.raster.cols, 0.0);

    NoiseModel noise = cfg.noise;
    noise.seed = derive_seed(cfg.seed, kNoiseStream);
    Rng noise_rng(noise.seed);
    Rng corrupt_rng(derive_seed(cfg.seed, kCorruptStream));
    Rng chance_rng(derive_seed(cfg.seed, kChanceStream));

    GlobalMemory memory(cfg.memory);
    EpisodeLog log;
    log.poses.push_back(maze.start());
    log.local_maps.emplace_back();
    log.embeddings.emplace_back();
    std::vector<Grid> views{Grid()};
    res.true_poses.push_back(maze.start());

    const Vec2 mem_center{static_cast<double>(cfg.memory.rows / 2), static_cast<double>(cfg.memory.cols / 2)};

    auto eval_global = [&](long t) {
        const Grid rendered = memory.render_world(res.raster, log.poses.back());
        const Grid empty;
        res.metrics.push_back(
            {t, tagged(evaluate_map(normalized(rendered), res.global_gt, empty, cfg.mi_bins), t, "global")});
        const Grid chance = baseline_chance(res.raster.rows, res.raster.cols, chance_rng);
        res.metrics.push_back(
            {t, tagged(evaluate_map(chance, res.global_gt, empty, cfg.mi_bins), t, "global_chance")});
    };

    auto eval_window = [&](long t_end) {
        const long w = cfg.eval_interval;
        const long first = t_end - w + 1;
        const std::span<const Pose> window(res.true_poses.data() + first, static_cast<std::size_t>(w));
        std::vector<long> checkpoints;
        for (long c = t_end; c >= first; c -= cfg.trend_stride)
            checkpoints.insert(checkpoints.begin(), c);
        const Pose& end_pose = res.true_poses[static_cast<std::size_t>(t_end)];
        const Grid gt = gt_accumulated_local(maze, window, cfg.sensor, end_pose);
        const Grid region = observed_region(gt);
        // Every checkpoint map is re-expressed in the frame of the window end
        // and scored against the ground truth accumulated over the window.
        for (long c : checkpoints) {
            const auto ci = static_cast<std::size_t>(c);
            const Affine2 to_end =
                egomotion_to_affine(relative_egomotion(res.true_poses[ci], end_pose), cfg.memory.cell_size);
            const Grid pred = c == t_end ? log.local_maps[ci] : warp_map(log.local_maps[ci], to_end, 0.0);
            res.metrics.push_back(
                {t_end, tagged(evaluate_map(normalized(pred), gt, region, cfg.mi_bins), c, "local")});
        }
        const Grid chance = baseline_chance(gt.rows(), gt.cols(), chance_rng);
        res.metrics.push_back(
            {t_end, tagged(evaluate_map(chance, gt, region, cfg.mi_bins), t_end, "local_chance")});
        eval_global(t_end);
    };

    // Running sum of measured |dtheta|, indexed by step.
    std::vector<double> turned{0.0};
    // Largest heading error the odometry noise can produce per radian turned.
    const double turn_error =
        noise.distribution == NoiseDistribution::Uniform ? noise.relative_level : 3.0 * noise.relative_level;

    const long steps = res.steps;
    for (long t = 1; t <= steps; ++t) {
        try {
            const Egomotion& e = trajectory.steps[static_cast<std::size_t>(t - 1)];
            validate_egomotion(e, cfg.limits);
            const Pose true_pose = compose_pose(res.true_poses.back(), e);
            const Egomotion measured =
                noise.relative_level > 0.0 ? perturb_egomotion(e, noise, cfg.limits, noise_rng) : e;
            const Pose est_pose = compose_pose(log.poses.back(), measured);

            const Grid obs = observe_local(maze, true_pose, cfg.sensor,
                                           cfg.sensor.corrupt_prob > 0.0 ? &corrupt_rng : nullptr);
            const Grid prev = memory.read_local();
            const Grid local = bvu_step(prev, measured, obs, cfg.merge);
            memory.warp(measured);
            memory.write_local(local);

            Embedding emb;
            if (cfg.loop_closure)
                emb = encode_place(encoder, obs);

            res.true_poses.push_back(true_pose);
            log.poses.push_back(est_pose);
            log.local_maps.push_back(local);
            log.embeddings.push_back(emb);
            views.push_back(obs);
            turned.push_back(turned.back() + std::abs(measured.dtheta));

            if (cfg.loop_closure) {
                CandidateRecord cand;
                cand.t_now = t;
                const auto best = memory.best_candidate(emb, t, cfg.closure.close_radius,
                                                        cfg.closure.recency_window);
                if (best)
                    cand.embedding = ClosureCandidate{t, best->t_matched, best->embed_dist};
                // Same masks and tie-break (nearer place wins) as the embedding search.
                double pixel_cell_dist = 0.0;
                for (const PlaceRecord& rec : memory.places()) {
                    if (t - rec.t <= cfg.closure.recency_window)
                        continue;
                    const double cell_dist = norm(rec.coord - mem_center);
                    if (cell_dist > cfg.closure.close_radius)
                        continue;
                    const double d = pixel_distance(obs, views[static_cast<std::size_t>(rec.t)]);
                    if (!cand.pixelwise || d < cand.pixelwise->distance ||
                        (d == cand.pixelwise->distance && cell_dist < pixel_cell_dist)) {
                        cand.pixelwise = ClosureCandidate{t, rec.t, d};
                        pixel_cell_dist = cell_dist;
                    }
                }
                if (cand.embedding || cand.pixelwise)
                    res.candidates.push_back(cand);

                memory.write_place(emb, t);

                if (best && best->embed_dist <= cfg.closure.alpha) {
                    ClosureRecord record{*best, false};
                    if (cfg.correction) {
                        const Pose& now = log.poses.back();
                        const Pose& then = log.poses[static_cast<std::size_t>(best->t_matched)];
                        const double rot = std::abs(wrap_angle(then.theta - now.theta));
                        const double trans = norm(then.position() - now.position());
                        const double max_rot =
                            turn_error * (turned[static_cast<std::size_t>(t)] -
                                          turned[static_cast<std::size_t>(best->t_matched)]) +
                            cfg.min_correction_rad;
                        const bool plausible = !cfg.heading_gate || rot <= max_rot;
                        if (plausible && (rot >= cfg.min_correction_rad || trans >= cfg.min_correction_m)) {
                            DriftCorrection dc = correct_drift(log, *best, memory);
                            memory = std::move(dc.memory);
                            log.poses = std::move(dc.poses);
                            record.corrected = true;
                        }
                    }
                    res.closures.push_back(record);
                }
            }

            const std::array<Pose, 1> seen{true_pose};
            const Grid seen_now = gt_world_free(maze, seen, cfg.sensor, res.raster);
            for (std::size_t k = 0; k < seen_now.size(); ++k)
                if (seen_now.values()[k] != 0.0)
                    res.global_gt.values()[k] = 1.0;

            if (t % cfg.eval_interval == 0)
                eval_window(t);
            else if (t == steps)
                eval_global(t);
        } catch (const Error& err) {
            if (err.step() >= 0)
                throw;
            throw Error(err.code(), "step " + std::to_string(t) + ": " + err.what(), t);
        }
    }

    res.estimated_poses = log.poses;
    res.final_local = memory.read_local();
    res.global_map = memory.render_world(res.raster, log.poses.back());
    for (long t = 1; t <= steps; ++t) {
        const auto k = static_cast<std::size_t>(t);
        if (log.embeddings[k].size() > 0)
            res.places.push_back({log.poses[k].position(), log.embeddings[k], t});
    }
    if (cfg.loop_closure)
        res.pr = compute_pr(res.candidates, res.true_poses, cfg.gt_eps_pos, cfg.closure.recency_window,
                            cfg.match_slack, cfg.seed);
    return res;
}

EpisodeResult run_episode(const RunConfig& cfg)
{
    const MazeMap maze = load_maze(cfg.maze_path);
    const Trajectory traj = load_trajectory_file(cfg.trajectory_path, maze, cfg.limits);
    EncoderParams encoder;
    if (cfg.loop_closure) {
        if (!cfg.encoder_path.empty()) {
            encoder = load_encoder(cfg.encoder_path);
        } else {
            EncoderShape shape = cfg.encoder_shape;
            shape.input_dim = pooled_feature_dim();
            encoder = make_encoder(shape, derive_seed(cfg.seed, kEncoderInitStream));
        }
    }
    return run_episode(cfg, maze, traj, encoder);
}

void write_bundle(const EpisodeResult& res, const RunConfig& cfg, const std::string& dir)
{
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec)
        throw Error(ErrorCode::IoError, "cannot create " + dir + ": " + ec.message());
    auto path = [&](const char* name) { return (root / name).string(); };

    const bool has_encoder = !cfg.encoder_path.empty();
    write_text_file(path("config.json"), run_config_json(cfg, has_encoder).dump(2) + "\n");
    write_text_file(path("maze.txt"), read_text_file(cfg.maze_path));
    write_text_file(path("trajectory.csv"), read_text_file(cfg.trajectory_path));
    if (has_encoder)
        write_text_file(path("encoder.json"), read_text_file(cfg.encoder_path));

    std::string metrics = std::string("window_end,t,area,mse,correlation,mutual_information,degenerate") + kCrlf;
    for (const EpisodeMetric& m : res.metrics)
        metrics += std::to_string(m.window_end) + "," + std::to_string(m.report.t) + "," +
                   csv_field(m.report.area_tag) + "," + format_double(m.report.mse) + "," +
                   format_double(m.report.correlation) + "," + format_double(m.report.mutual_information) +
                   "," + (m.report.degenerate ? "1" : "0") + kCrlf;
    write_text_file(path("metrics.csv"), metrics);

    std::string poses = std::string("t,true_x,true_y,true_theta,est_x,est_y,est_theta") + kCrlf;
    for (std::size_t k = 0; k < res.true_poses.size(); ++k) {
        const Pose& a = res.true_poses[k];
        const Pose& b = res.estimated_poses[k];
        poses += std::to_string(k) + "," + format_double(a.x) + "," + format_double(a.y) + "," +
                 format_double(a.theta) + "," + format_double(b.x) + "," + format_double(b.y) + "," +
                 format_double(b.theta) + kCrlf;
    }
    write_text_file(path("poses.csv"), poses);

    std::string places = std::string("t,x,y,embedding_index,dim") + kCrlf;
    std::string blob;
    for (std::size_t i = 0; i < res.places.size(); ++i) {
        const PlaceRecord& p = res.places[i];
        places += std::to_string(p.t) + "," + format_double(p.coord.x) + "," + format_double(p.coord.y) + "," +
                  std::to_string(i) + "," + std::to_string(p.embedding.size()) + kCrlf;
        for (Eigen::Index d = 0; d < p.embedding.size(); ++d) {
            const double v = p.embedding[d];
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            if constexpr (std::endian::native == std::endian::big)
                std::reverse(std::begin(bytes), std::end(bytes));
            blob.append(reinterpret_cast<const char*>(bytes), sizeof(double));
        }
    }
    write_text_file(path("places.csv"), places);
    write_text_file(path("embeddings.bin"), blob);

    std::string closures = std::string("t_now,t_matched,embed_distance,cell_distance,corrected") + kCrlf;
    for (const ClosureRecord& c : res.closures)
        closures += std::to_string(c.event.t_now) + "," + std::to_string(c.event.t_matched) + "," +
                    format_double(c.event.embed_dist) + "," + format_double(c.event.cell_dist) + "," +
                    (c.corrected ? "1" : "0") + kCrlf;
    write_text_file(path("closures.csv"), closures);

    std::string cands = std::string("t_now,embed_t_matched,embed_distance,pixel_t_matched,pixel_distance") + kCrlf;
    for (const CandidateRecord& c : res.candidates) {
        cands += std::to_string(c.t_now) + ",";
        cands += c.embedding ? std::to_string(c.embedding->t_matched) + "," + format_double(c.embedding->distance)
                             : std::string(",");
        cands += ",";
        cands += c.pixelwise ? std::to_string(c.pixelwise->t_matched) + "," + format_double(c.pixelwise->distance)
                             : std::string(",");
        cands += kCrlf;
    }
    write_text_file(path("candidates.csv"), cands);

    const Grid local = res.final_local.empty() ? Grid(kLocalSize, kLocalSize, 0.0) : res.final_local;
    write_pgm(path("local_map.pgm"), local);
    write_grid_csv(path("local_map.csv"), local);
    write_pgm(path("global_map.pgm"), res.global_map);
    write_grid_csv(path("global_map.csv"), res.global_map);
    const json map_meta = {{"rows", res.raster.rows},
                           {"cols", res.raster.cols},
                           {"cell_size", res.raster.cell_size},
                           {"origin", {res.raster.origin.x, res.raster.origin.y}},
                           {"frame", "world"},
                           {"pixel", "round(255 * (v + 1) / 2)"},
                           {"backend", backend_name(cfg.memory.backend)},
                           {"pose_log", "poses.csv"}};
    write_text_file(path("global_map.json"), map_meta.dump(2) + "\n");

    std::vector<std::pair<long, long>> closure_pairs;
    for (const ClosureRecord& c : res.closures)
        closure_pairs.emplace_back(c.event.t_now, c.event.t_matched);
    write_text_file(path("overlay.csv"),
                    overlay_csv(res.raster, res.true_poses, res.estimated_poses, closure_pairs));

    if (res.pr)
        write_pr_files(*res.pr, dir);

    json summary;
    summary["name"] = res.name;
    summary["steps"] = res.steps;
    summary["seed"] = cfg.seed;
    summary["places"] = res.places.size();
    summary["closures"] = res.closures.size();
    summary["corrections"] = std::count_if(res.closures.begin(), res.closures.end(),
                                           [](const ClosureRecord& c) { return c.corrected; });
    json final_metrics = json::object();
    for (const EpisodeMetric& m : res.metrics)
        final_metrics[m.report.area_tag] = report_json(m.report);
    summary["final_metrics"] = final_metrics;
    if (res.pr) {
        if (res.pr->empty_ground_truth) {
            summary["pr"] = {{"status", "empty_ground_truth"}};
        } else {
            summary["pr"] = {{"status", "ok"},
                             {"positives", res.pr->positives},
                             {"auc_embedding", res.pr->embedding.auc},
                             {"auc_pixelwise", res.pr->pixelwise.auc},
                             {"auc_random", res.pr->random.auc}};
        }
    }
    write_text_file(path("summary.json"), summary.dump(2) + "\n");
}

EpisodeResult run_to_directory(const RunConfig& cfg)
{
    if (cfg.output_dir.empty())
        config_error("missing 'output_dir'");
    EpisodeResult res = run_episode(cfg);
    write_bundle(res, cfg, cfg.output_dir);
    return res;
}

MetricsReport eval_run_dir(const std::string& dir)
{
    const RunConfig cfg = parse_run_config(read_text_file((fs::path(dir) / "config.json").string()), dir, false);
    const MazeMap maze = load_maze(cfg.maze_path);
    const PoseLog log = read_pose_log((fs::path(dir) / "poses.csv").string());
    const Grid map = read_grid_csv((fs::path(dir) / "global_map.csv").string());
    const WorldRaster raster = raster_for(maze, cfg.memory.cell_size);
    if (map.rows() != raster.rows || map.cols() != raster.cols)
        throw Error(ErrorCode::ShapeMismatch, "global map does not match the maze raster");
    const std::span<const Pose> observed =
        log.true_poses.empty() ? std::span<const Pose>() : std::span<const Pose>(log.true_poses).subspan(1);
    const Grid gt = gt_world_free(maze, observed, cfg.sensor, raster);

    const Grid empty;
    const long t = log.true_poses.empty() ? 0 : static_cast<long>(log.true_poses.size()) - 1;
    MetricsReport report = tagged(evaluate_map(normalize_belief(map), gt, empty, cfg.mi_bins), t, "global");
    Rng rng(derive_seed(cfg.seed, kEvalChanceStream));
    const MetricsReport chance =
        tagged(evaluate_map(baseline_chance(raster.rows, raster.cols, rng), gt, empty, cfg.mi_bins), t,
               "global_chance");
    const json out = {{"global", report_json(report)}, {"global_chance", report_json(chance)}};
    write_text_file((fs::path(dir) / "eval.json").string(), out.dump(2) + "\n");
    return report;
}

PrResult pr_run_dir(const std::string& dir)
{
    const RunConfig cfg = parse_run_config(read_text_file((fs::path(dir) / "config.json").string()), dir, false);
    const PoseLog log = read_pose_log((fs::path(dir) / "poses.csv").string());
    const auto rows = read_csv((fs::path(dir) / "candidates.csv").string());
    std::vector<CandidateRecord> cands;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 5)
            throw Error(ErrorCode::ParseError, "candidates.csv: expected 5 fields", static_cast<long>(i));
        CandidateRecord c;
        c.t_now = parse_long(r[0]);
        if (!r[1].empty())
            c.embedding = ClosureCandidate{c.t_now, parse_long(r[1]), parse_double(r[2])};
        if (!r[3].empty())
            c.pixelwise = ClosureCandidate{c.t_now, parse_long(r[3]), parse_double(r[4])};
        cands.push_back(c);
    }
    const PrResult pr = compute_pr(cands, log.true_poses, cfg.gt_eps_pos, cfg.closure.recency_window,
                                   cfg.match_slack, cfg.seed);
    write_pr_files(pr, dir);
    return pr;
}

void render_run_dir(const std::string& dir)
{
    const json meta = parse_json(read_text_file((fs::path(dir) / "global_map.json").string()));
    WorldRaster raster;
    try {
        raster.rows = meta.at("rows").get<int>();
        raster.cols = meta.at("cols").get<int>();
        raster.cell_size = meta.at("cell_size").get<double>();
        raster.origin = {meta.at("origin").at(0).get<double>(), meta.at("origin").at(1).get<double>()};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("global_map.json: ") + e.what());
    }
    const Grid map = read_grid_csv((fs::path(dir) / "global_map.csv").string());
    if (map.rows() != raster.rows || map.cols() != raster.cols)
        throw Error(ErrorCode::ShapeMismatch, "global_map.csv does not match global_map.json");
    write_pgm((fs::path(dir) / "global_map.pgm").string(), map);
    const PoseLog log = read_pose_log((fs::path(dir) / "poses.csv").string());
    const auto closures = read_closure_pairs((fs::path(dir) / "closures.csv").string());
    write_text_file((fs::path(dir) / "overlay.csv").string(),
                    overlay_csv(raster, log.true_poses, log.estimated, closures));
}

TrainPuResult train_pu(const TrainPuConfig& cfg)
{
    std::vector<Triplet> dataset;
    for (std::size_t i = 0; i < cfg.sources.size(); ++i) {
        const TrainSource& src = cfg.sources[i];
        const MazeMap maze = load_maze(src.maze_path);
        const Trajectory traj = load_trajectory_file(src.trajectory_path, maze, cfg.limits);
        const std::vector<Pose> poses = rollout(maze.start(), traj.steps);
        std::vector<HistoryEntry> history;
        for (std::size_t k = 1; k < poses.size(); ++k)
            history.push_back({poses[k], observe_local(maze, poses[k], cfg.sensor), static_cast<long>(k)});
        Rng rng(derive_seed(cfg.seed, kMiningStream + i));
        for (int round = 0; round < cfg.mining_rounds; ++round) {
            try {
                auto mined = mine_triplets(history, cfg.eps_pos, cfg.eps_neg, cfg.gap, rng, cfg.max_triplets);
                dataset.insert(dataset.end(), std::make_move_iterator(mined.begin()),
                               std::make_move_iterator(mined.end()));
            } catch (const Error& e) {
                if (e.code() != ErrorCode::EmptyResult)
                    throw;
            }
        }
    }
    if (dataset.empty())
        throw Error(ErrorCode::EmptyResult, "no triplets could be mined from the training sources");

    EncoderShape shape = cfg.shape;
    shape.input_dim = pooled_feature_dim();
    const EncoderParams init = make_encoder(shape, derive_seed(cfg.seed, kEncoderInitStream));
    TrainPuResult out;
    out.triplets = dataset.size();
    out.training = train_encoder(init, dataset, cfg.train);

    save_encoder(out.training.params, cfg.output_path);
    if (!cfg.loss_csv_path.empty()) {
        std::string csv = std::string("epoch,loss") + kCrlf + "0," + format_double(out.training.initial_loss) + kCrlf;
        for (std::size_t e = 0; e < out.training.epoch_loss.size(); ++e)
            csv += std::to_string(e + 1) + "," + format_double(out.training.epoch_loss[e]) + kCrlf;
        write_text_file(cfg.loss_csv_path, csv);
    }
    return out;
}

}  // namespace esm
