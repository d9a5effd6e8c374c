#include "esm/place_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "esm/error.hpp"

namespace esm {

namespace {

using json = nlohmann::json;

// Offsets (a, b) from the agent cell with |a|, |b| <= 15 form a square closed
// under quarter turns; the fundamental domain is the origin plus a >= 1, b >= 0.
constexpr int kPoolRadius = kLocalSize / 2 - 1;

struct Offset {
    int a;
    int b;
};

const std::vector<Offset>& pool_domain()
{
    static const std::vector<Offset> domain = [] {
        std::vector<Offset> d{{0, 0}};
        for (int a = 1; a <= kPoolRadius; ++a)
            for (int b = 0; b <= kPoolRadius; ++b)
                d.push_back({a, b});
        return d;
    }();
    return domain;
}

double sigmoid(double z)
{
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_dims(const Embedding& a, const Embedding& b)
{
    if (a.size() != b.size())
        throw Error(ErrorCode::ShapeMismatch, "embedding dimensions differ");
}

// Forward pass over a batch of column vectors, keeping every activation.
std::vector<Eigen::MatrixXd> forward_all(const EncoderParams& params, const Eigen::MatrixXd& input)
{
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(params.layers.size() + 1);
    acts.push_back(input);
    for (const DenseLayer& layer : params.layers) {
        Eigen::MatrixXd z = layer.weights * acts.back();
        z.colwise() += layer.bias;
        acts.push_back(z.array().tanh().matrix());
    }
    return acts;
}

// dL/dD(a,p) and dL/dD(a,n) for one triplet.
std::pair<double, double> loss_sensitivities(double d_pos, double d_neg, LossForm form, double& loss)
{
    if (form == LossForm::Corrected) {
        loss = sigmoid(d_pos - d_neg);
        const double s = loss * (1.0 - loss);
        return {s, -s};
    }
    loss = sigmoid(d_neg - d_pos);
    const double s = loss * (1.0 - loss);
    return {-s, s};
}

void check_batch(const EncoderParams& params, std::span<const Triplet> batch)
{
    if (batch.empty())
        throw Error(ErrorCode::InvalidArgument, "triplet batch is empty");
    const auto dim = static_cast<Eigen::Index>(params.input_dim());
    for (const Triplet& t : batch) {
        if (t.anchor.size() != dim || t.positive.size() != dim || t.negative.size() != dim)
            throw Error(ErrorCode::ShapeMismatch, "triplet feature size does not match encoder input");
    }
}

}  // namespace

bool EncoderParams::all_finite() const
{
    return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
        return l.weights.allFinite() && l.bias.allFinite();
    });
}

EncoderParams make_encoder(const EncoderShape& shape, std::uint64_t seed)
{
    EncoderParams params = zero_encoder(shape);
    Rng rng(seed);
    for (DenseLayer& layer : params.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                layer.weights(r, c) = rng.uniform(-limit, limit);
    }
    return params;
}

EncoderParams zero_encoder(const EncoderShape& shape)
{
    if (shape.input_dim <= 0 || shape.output_dim <= 0)
        throw Error(ErrorCode::InvalidArgument, "encoder dimensions must be positive");
    EncoderParams params;
    int in = shape.input_dim;
    std::vector<int> outs = shape.hidden;
    outs.push_back(shape.output_dim);
    for (int out : outs) {
        if (out <= 0)
            throw Error(ErrorCode::InvalidArgument, "encoder layer sizes must be positive");
        params.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
        in = out;
    }
    return params;
}

int pooled_feature_dim() { return static_cast<int>(pool_domain().size()); }

Eigen::VectorXd pooled_features(const Grid& view)
{
    if (view.rows() != kLocalSize || view.cols() != kLocalSize)
        throw Error(ErrorCode::ShapeMismatch, "place encoder expects a 32x32 view");
    const int center = kLocalSize / 2;
    const auto& domain = pool_domain();
    Eigen::VectorXd features(static_cast<Eigen::Index>(domain.size()));
    for (std::size_t k = 0; k < domain.size(); ++k) {
        int a = domain[k].a;
        int b = domain[k].b;
        double best = view(center + a, center + b);
        for (int turn = 1; turn < 4; ++turn) {
            const int t = a;
            a = -b;
            b = t;
            best = std::max(best, view(center + a, center + b));
        }
        features[static_cast<Eigen::Index>(k)] = best;
    }
    return features;
}

Embedding forward(const EncoderParams& params, const Eigen::VectorXd& features)
{
    if (features.size() != params.input_dim())
        throw Error(ErrorCode::ShapeMismatch, "feature size does not match encoder input");
    Eigen::VectorXd h = features;
    for (const DenseLayer& layer : params.layers)
        h = (layer.weights * h + layer.bias).array().tanh().matrix();
    return h;
}

Embedding encode_place(const EncoderParams& params, const Grid& view)
{
    return forward(params, pooled_features(view));
}

double embedding_distance(const Embedding& a, const Embedding& b)
{
    check_dims(a, b);
    if (a.size() == 0)
        return 0.0;
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double triplet_loss(const Embedding& anchor, const Embedding& positive, const Embedding& negative,
                    LossForm form)
{
    const double d_pos = embedding_distance(anchor, positive);
    const double d_neg = embedding_distance(anchor, negative);
    return form == LossForm::Corrected ? sigmoid(d_pos - d_neg) : sigmoid(d_neg - d_pos);
}

double loss_gradients(const EncoderParams& params, std::span<const Triplet> batch, LossForm form,
                      Gradients& grads)
{
    check_batch(params, batch);
    const auto n = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index dim_in = params.input_dim();

    // Columns [0, n) anchors, [n, 2n) positives, [2n, 3n) negatives.
    Eigen::MatrixXd input(dim_in, 3 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        input.col(i) = batch[i].anchor;
        input.col(n + i) = batch[i].positive;
        input.col(2 * n + i) = batch[i].negative;
    }
    const std::vector<Eigen::MatrixXd> acts = forward_all(params, input);
    const Eigen::MatrixXd& out = acts.back();
    const double k = static_cast<double>(out.rows());

    Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(out.rows(), 3 * n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd diff_p = out.col(i) - out.col(n + i);
        const Eigen::VectorXd diff_n = out.col(i) - out.col(2 * n + i);
        double loss = 0.0;
        const auto [s_pos, s_neg] =
            loss_sensitivities(diff_p.squaredNorm() / k, diff_n.squaredNorm() / k, form, loss);
        total += loss;
        const double scale = 2.0 / (k * static_cast<double>(n));
        grad_out.col(i) = scale * (s_pos * diff_p + s_neg * diff_n);
        grad_out.col(n + i) = -scale * s_pos * diff_p;
        grad_out.col(2 * n + i) = -scale * s_neg * diff_n;
    }

    grads.layers.resize(params.layers.size());
    // delta holds dL/dz for the current layer.
    Eigen::MatrixXd delta =
        grad_out.array() * (1.0 - acts.back().array().square());
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        // Per-triplet sums with the positive and negative terms paired, so
        // mirrored branches cancel exactly.
        const Eigen::MatrixXd& x = acts[l];
        Eigen::MatrixXd& gw = grads.layers[l].weights;
        Eigen::VectorXd& gb = grads.layers[l].bias;
        gw.setZero(delta.rows(), x.rows());
        gb.setZero(delta.rows());
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto da = delta.col(i);
            const auto dp = delta.col(n + i);
            const auto dn = delta.col(2 * n + i);
            for (Eigen::Index c = 0; c < x.rows(); ++c) {
                const double xa = x(c, i);
                const double xp = x(c, n + i);
                const double xn = x(c, 2 * n + i);
                auto col = gw.col(c);
                for (Eigen::Index r = 0; r < gw.rows(); ++r)
                    col[r] += da[r] * xa + (dp[r] * xp + dn[r] * xn);
            }
            for (Eigen::Index r = 0; r < gb.size(); ++r)
                gb[r] += da[r] + (dp[r] + dn[r]);
        }
        if (l > 0) {
            delta = (params.layers[l].weights.transpose() * delta).array() *
                    (1.0 - acts[l].array().square());
        }
    }
    return total / static_cast<double>(n);
}

double mean_triplet_loss(const EncoderParams& params, std::span<const Triplet> batch, LossForm form)
{
    check_batch(params, batch);
    double total = 0.0;
    for (const Triplet& t : batch)
        total += triplet_loss(forward(params, t.anchor), forward(params, t.positive),
                              forward(params, t.negative), form);
    return total / static_cast<double>(batch.size());
}

std::vector<Triplet> mine_triplets(std::span<const HistoryEntry> history, double eps_pos,
                                   double eps_neg, long gap, Rng& rng, std::size_t max_triplets)
{
    if (!(eps_pos < eps_neg))
        throw Error(ErrorCode::InvalidArgument, "mine_triplets requires eps_pos < eps_neg");
    const std::size_t n = history.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.index(i)]);

    std::vector<Eigen::VectorXd> features;
    features.reserve(n);
    for (const HistoryEntry& h : history)
        features.push_back(pooled_features(h.view));

    std::vector<Triplet> triplets;
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
    for (std::size_t a : order) {
        positives.clear();
        negatives.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a)
                continue;
            const double dist = norm(history[j].pose.position() - history[a].pose.position());
            if (dist <= eps_pos && std::abs(history[j].t - history[a].t) >= std::max(gap, 1L))
                positives.push_back(j);
            else if (dist > eps_neg)
                negatives.push_back(j);
        }
        if (positives.empty() || negatives.empty())
            continue;
        const std::size_t p = positives[rng.index(positives.size())];
        const std::size_t q = negatives[rng.index(negatives.size())];
        triplets.push_back({features[a], features[p], features[q], history[a].t, history[p].t,
                            history[q].t});
        if (max_triplets != 0 && triplets.size() >= max_triplets)
            break;
    }
    if (triplets.empty())
        throw Error(ErrorCode::EmptyResult, "no valid triplet in history (no revisits?)");
    return triplets;
}

TrainResult train_encoder(const EncoderParams& init, std::span<const Triplet> dataset,
                          const TrainConfig& cfg)
{
    if (dataset.empty())
        throw Error(ErrorCode::EmptyResult, "training dataset has no triplets");
    if (!(cfg.learning_rate >= 0.0) || cfg.batch_size == 0 || cfg.epochs < 0)
        throw Error(ErrorCode::InvalidArgument, "invalid training configuration");

    TrainResult result;
    result.params = init;
    result.initial_loss = mean_triplet_loss(init, dataset, cfg.loss_form);

    EncoderParams& params = result.params;
    std::vector<DenseLayer> first(params.layers.size());
    std::vector<DenseLayer> second(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        first[l] = {Eigen::MatrixXd::Zero(params.layers[l].weights.rows(), params.layers[l].weights.cols()),
                    Eigen::VectorXd::Zero(params.layers[l].bias.size())};
        second[l] = first[l];
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Triplet> batch;
    Gradients grads;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.index(i)]);
        double epoch_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            batch.clear();
            for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
                batch.push_back(dataset[order[k]]);
            epoch_total += loss_gradients(params, batch, cfg.loss_form, grads);
            ++batches;
            ++step;

            for (std::size_t l = 0; l < params.layers.size(); ++l) {
                DenseLayer& p = params.layers[l];
                const DenseLayer& g = grads.layers[l];
                if (cfg.optimizer == Optimizer::Adam) {
                    const double b1 = cfg.momentum;
                    const double b2 = cfg.beta2;
                    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
                    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
                    auto adam = [&](auto& param, const auto& grad, auto& m, auto& v) {
                        m = b1 * m + (1.0 - b1) * grad;
                        v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
                        param.array() -= cfg.learning_rate * (m.array() / c1) /
                                         ((v.array() / c2).sqrt() + cfg.epsilon);
                    };
                    adam(p.weights, g.weights, first[l].weights, second[l].weights);
                    adam(p.bias, g.bias, first[l].bias, second[l].bias);
                } else {
                    first[l].weights = cfg.momentum * first[l].weights - cfg.learning_rate * g.weights;
                    first[l].bias = cfg.momentum * first[l].bias - cfg.learning_rate * g.bias;
                    p.weights += first[l].weights;
                    p.bias += first[l].bias;
                }
            }
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
    }
    return result;
}

std::string encoder_to_json(const EncoderParams& params)
{
    json doc;
    doc["format"] = "esm-place-encoder";
    doc["version"] = 1;
    doc["activation"] = "tanh";
    doc["input_dim"] = params.input_dim();
    json layers = json::array();
    for (const DenseLayer& layer : params.layers) {
        json entry;
        entry["in"] = layer.weights.cols();
        entry["out"] = layer.weights.rows();
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                w.push_back(layer.weights(r, c));
        entry["weights"] = w;
        entry["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
        layers.push_back(std::move(entry));
    }
    doc["layers"] = std::move(layers);
    return doc.dump();
}

EncoderParams encoder_from_json(const std::string& text)
{
    EncoderParams params;
    try {
        const json doc = json::parse(text);
        if (doc.at("format") != "esm-place-encoder" || doc.at("version") != 1)
            throw Error(ErrorCode::ParseError, "not an esm place encoder (format/version)");
        long expected_in = doc.at("input_dim").get<long>();
        for (const json& entry : doc.at("layers")) {
            const long in = entry.at("in").get<long>();
            const long out = entry.at("out").get<long>();
            const auto w = entry.at("weights").get<std::vector<double>>();
            const auto b = entry.at("bias").get<std::vector<double>>();
            if (in != expected_in || in <= 0 || out <= 0 ||
                w.size() != static_cast<std::size_t>(in * out) ||
                b.size() != static_cast<std::size_t>(out))
                throw Error(ErrorCode::ShapeMismatch, "inconsistent layer shapes in encoder file");
            DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
            for (long r = 0; r < out; ++r)
                for (long c = 0; c < in; ++c)
                    layer.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
            for (long r = 0; r < out; ++r)
                layer.bias[r] = b[static_cast<std::size_t>(r)];
            params.layers.push_back(std::move(layer));
            expected_in = out;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("encoder file: ") + e.what());
    }
    if (params.layers.empty())
        throw Error(ErrorCode::ParseError, "encoder file has no layers");
    if (!params.all_finite())
        throw Error(ErrorCode::ParseError, "encoder file has non-finite parameters");
    return params;
}

void save_encoder(const EncoderParams& params, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot write " + path);
    out << encoder_to_json(params) << '\n';
}

EncoderParams load_encoder(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return encoder_from_json(ss.str());
}

}  // namespace esm
