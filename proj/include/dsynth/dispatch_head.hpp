#ifndef DSYNTH_DISPATCH_HEAD_HPP
#define DSYNTH_DISPATCH_HEAD_HPP

#include "dsynth/loss.hpp"
#include "dsynth/rng.hpp"
#include "dsynth/types.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <vector>

namespace dsynth {

/// Single fully connected layer mapping (standardized) features to one logit
/// per dispatch target. Standardization is part of the head so that the same
/// shift/scale learned on the training split is applied at evaluation.
template <typename Scalar = Real>
struct DispatchHead {
    MatrixX<Scalar> weights;  // K x D
    VectorX<Scalar> bias;     // K
    VectorX<Scalar> feature_mean;
    VectorX<Scalar> feature_scale;

    std::size_t feature_dim() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t num_models() const { return static_cast<std::size_t>(weights.rows()); }

    MatrixX<Scalar> standardize(const Eigen::Ref<const Matrix>& features) const {
        if (static_cast<std::size_t>(features.cols()) != feature_dim())
            throw ValidationError("feature dimension " + std::to_string(features.cols()) +
                                  " does not match head dimension " + std::to_string(feature_dim()));
        MatrixX<Scalar> x = features.template cast<Scalar>();
        x.rowwise() -= feature_mean.transpose();
        x.array().rowwise() *= feature_scale.transpose().array();
        return x;
    }

    // Logits of already standardized rows.
    MatrixX<Scalar> logits_standardized(const MatrixX<Scalar>& x) const {
        MatrixX<Scalar> z = x * weights.transpose();
        z.rowwise() += bias.transpose();
        return z;
    }

    MatrixX<Scalar> logits(const Eigen::Ref<const Matrix>& features) const {
        return logits_standardized(standardize(features));
    }

    bool all_finite() const {
        return weights.allFinite() && bias.allFinite() && feature_mean.allFinite() && feature_scale.allFinite();
    }

    bool operator==(const DispatchHead&) const = default;
};

// Weights uniform in [-1/sqrt(D), 1/sqrt(D)], zero bias, identity standardization.
template <typename Scalar = Real>
DispatchHead<Scalar> init_head(std::size_t feature_dim, std::size_t num_models, std::uint64_t seed) {
    if (feature_dim < 1) throw ValidationError("init_head: feature_dim must be >= 1");
    if (num_models < 2) throw ValidationError("init_head: need at least 2 models");
    const auto d = static_cast<Eigen::Index>(feature_dim);
    const auto k = static_cast<Eigen::Index>(num_models);
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(feature_dim));
    Rng rng(seed);
    DispatchHead<Scalar> head;
    head.weights.resize(k, d);
    for (Eigen::Index i = 0; i < head.weights.size(); ++i)
        head.weights.data()[i] = static_cast<Scalar>(uniform(rng, -bound, bound));
    head.bias = VectorX<Scalar>::Zero(k);
    head.feature_mean = VectorX<Scalar>::Zero(d);
    head.feature_scale = VectorX<Scalar>::Ones(d);
    return head;
}

template <typename Scalar>
LabelVector predict_standardized(const DispatchHead<Scalar>& head, const MatrixX<Scalar>& x) {
    const MatrixX<Scalar> z = head.logits_standardized(x);
    LabelVector out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index n = 0; n < z.rows(); ++n) out[static_cast<std::size_t>(n)] = static_cast<int>(argmax_row(z.row(n)));
    return out;
}

// Per-row argmax of the logits, lowest index on ties.
template <typename Scalar>
LabelVector predict(const DispatchHead<Scalar>& head, const Eigen::Ref<const Matrix>& features) {
    return predict_standardized(head, head.standardize(features));
}

// MFLOPs per image of the head: one multiply-add (2 FLOPs) per weight plus the bias adds.
inline Real head_cost_mflops(std::size_t feature_dim, std::size_t num_models) {
    return (2.0 * static_cast<Real>(feature_dim) * static_cast<Real>(num_models) +
            static_cast<Real>(num_models)) / 1e6;
}

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    Real learning_rate = 0.01;
    Real momentum = 0.9;
    // Leading epochs in which correctly classified samples also contribute
    // (see LossConfig::always_ce); 0 trains on the literal penalized loss throughout.
    std::size_t warmup_epochs = 1;
    bool standardize = true;
    // Keep a copy of the parameters at the start of every epoch.
    bool record_snapshots = false;
    std::uint64_t seed = 0;
};

template <typename Scalar = Real>
struct TrainHistory {
    std::vector<Scalar> loss;      // sample-weighted mean batch loss per epoch
    std::vector<Real> accuracy;    // train accuracy after each epoch
    std::vector<DispatchHead<Scalar>> snapshots;
};

template <typename Scalar = Real>
struct TrainResult {
    DispatchHead<Scalar> head;
    TrainHistory<Scalar> history;
};

/// Mini-batch gradient descent with momentum on the penalized loss. Batches
/// come from a shuffle re-drawn each epoch from `cfg.seed`; the result depends
/// only on (seed, data).
template <typename Scalar>
TrainResult<Scalar> train_head(DispatchHead<Scalar> head, const Eigen::Ref<const Matrix>& features,
                               std::span<const int> labels, const LossConfig& loss_cfg,
                               const TrainConfig& cfg) {
    const auto rows = static_cast<std::size_t>(features.rows());
    if (rows == 0) throw ValidationError("empty training data");
    if (labels.size() != rows) throw ValidationError("feature rows and label count differ");
    if (static_cast<std::size_t>(features.cols()) != head.feature_dim())
        throw ValidationError("feature dimension does not match head");
    if (loss_cfg.penalties.size() != head.num_models())
        throw ValidationError("penalty matrix size does not match head");
    if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(cfg.learning_rate > 0)) throw ValidationError("learning_rate must be positive");
    if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw ValidationError("momentum must lie in [0,1)");

    const auto dim = static_cast<Eigen::Index>(head.feature_dim());
    if (cfg.standardize) {
        const Vector mean = features.colwise().mean().transpose();
        Vector scale(dim);
        for (Eigen::Index d = 0; d < dim; ++d) {
            const Real var = (features.col(d).array() - mean(d)).square().mean();
            scale(d) = var > 0 ? 1.0 / std::sqrt(var) : 1.0;
        }
        head.feature_mean = mean.cast<Scalar>();
        head.feature_scale = scale.cast<Scalar>();
    }
    const MatrixX<Scalar> x = head.standardize(features);

    MatrixX<Scalar> velocity_w = MatrixX<Scalar>::Zero(head.weights.rows(), head.weights.cols());
    VectorX<Scalar> velocity_b = VectorX<Scalar>::Zero(head.bias.size());
    const auto lr = static_cast<Scalar>(cfg.learning_rate);
    const auto mu = static_cast<Scalar>(cfg.momentum);

    TrainResult<Scalar> result;
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    MatrixX<Scalar> batch_x;
    std::vector<int> batch_labels;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.record_snapshots) result.history.snapshots.push_back(head);
        std::shuffle(order.begin(), order.end(), rng);
        const bool warmup = epoch < cfg.warmup_epochs;
        Scalar epoch_loss = 0;

        for (std::size_t start = 0; start < rows; start += cfg.batch_size) {
            const std::size_t stop = std::min(rows, start + cfg.batch_size);
            const auto count = static_cast<Eigen::Index>(stop - start);
            batch_x.resize(count, dim);
            batch_labels.resize(static_cast<std::size_t>(count));
            for (Eigen::Index i = 0; i < count; ++i) {
                const auto src = order[start + static_cast<std::size_t>(i)];
                batch_x.row(i) = x.row(static_cast<Eigen::Index>(src));
                batch_labels[static_cast<std::size_t>(i)] = labels[src];
            }

            const MatrixX<Scalar> z = head.logits_standardized(batch_x);
            if (!z.allFinite())
                throw RuntimeError("training diverged: non-finite logits in epoch " + std::to_string(epoch + 1));
            const auto step = penalized_loss<Scalar>(z, batch_labels, loss_cfg, warmup);
            if (!std::isfinite(step.loss))
                throw RuntimeError("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1));
            epoch_loss += step.loss * static_cast<Scalar>(count);

            velocity_w = mu * velocity_w + step.gradient.transpose() * batch_x;
            velocity_b = mu * velocity_b + step.gradient.colwise().sum().transpose();
            head.weights -= lr * velocity_w;
            head.bias -= lr * velocity_b;
            if (!head.weights.allFinite() || !head.bias.allFinite())
                throw RuntimeError("training diverged: non-finite parameters in epoch " + std::to_string(epoch + 1));
        }

        result.history.loss.push_back(epoch_loss / static_cast<Scalar>(rows));
        const auto predicted = predict_standardized(head, x);
        std::size_t hits = 0;
        for (std::size_t n = 0; n < rows; ++n) hits += predicted[n] == labels[n];
        result.history.accuracy.push_back(static_cast<Real>(hits) / static_cast<Real>(rows));
    }
    result.head = std::move(head);
    return result;
}

// JSON checkpoint: dimensions, row-major weights, bias and standardization vectors.
void save_head(const DispatchHead<Real>& head, const std::filesystem::path& path);
DispatchHead<Real> load_head(const std::filesystem::path& path);

}  // namespace dsynth

#endif  // DSYNTH_DISPATCH_HEAD_HPP
