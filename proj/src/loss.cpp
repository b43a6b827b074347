#include "dsynth/loss.hpp"

#include <algorithm>
#include <numeric>

namespace dsynth {

std::string to_string(WeightingScheme scheme) {
    switch (scheme) {
        case WeightingScheme::INS: return "INS";
        case WeightingScheme::ISNS: return "ISNS";
        case WeightingScheme::ENS: return "ENS";
    }
    return "?";
}

WeightingScheme parse_weighting_scheme(const std::string& text) {
    std::string upper = text;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "INS") return WeightingScheme::INS;
    if (upper == "ISNS") return WeightingScheme::ISNS;
    if (upper == "ENS") return WeightingScheme::ENS;
    throw ValidationError("unknown weighting scheme \"" + text + "\" (expected INS, ISNS or ENS)");
}

PenaltyMatrix::PenaltyMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() != values_.cols() || values_.rows() < 2)
        throw ValidationError("penalty matrix must be square with K >= 2");
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        if (values_(i, i) != 0) throw ValidationError("penalty matrix diagonal must be 0");
        for (Eigen::Index j = 0; j < values_.cols(); ++j) {
            const Real p = values_(i, j);
            if (!(p >= 0 && p <= kMaxPenalty))
                throw ValidationError("penalty " + std::to_string(p) + " out of range [0,100]");
        }
    }
}

PenaltyMatrix PenaltyMatrix::uniform(std::size_t num_models, Real off_diagonal) {
    const auto k = static_cast<Eigen::Index>(num_models);
    Matrix values = Matrix::Constant(k, k, off_diagonal);
    values.diagonal().setZero();
    return PenaltyMatrix(std::move(values));
}

PenaltyMatrix PenaltyMatrix::from_list(std::span<const Real> values, std::size_t num_models) {
    const auto k = static_cast<Eigen::Index>(num_models);
    Matrix m = Matrix::Zero(k, k);
    if (values.size() == num_models * num_models) {
        for (std::size_t i = 0; i < values.size(); ++i) m.data()[i] = values[i];
    } else if (values.size() == num_models * (num_models - 1)) {
        std::size_t next = 0;
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j)
                if (i != j) m(i, j) = values[next++];
    } else {
        throw ValidationError("penalty count mismatch: got " + std::to_string(values.size()) + ", expected " +
                              std::to_string(num_models * (num_models - 1)) + " or " +
                              std::to_string(num_models * num_models));
    }
    return PenaltyMatrix(std::move(m));
}

std::vector<Real> PenaltyMatrix::row_major() const {
    return {values_.data(), values_.data() + values_.size()};
}

Real PenaltyMatrix::row_mean(std::size_t truth) const {
    const auto k = values_.cols();
    return values_.row(static_cast<Eigen::Index>(truth)).sum() / static_cast<Real>(k - 1);
}

std::vector<Real> class_weights(std::span<const std::size_t> counts, const WeightingSpec& spec) {
    if (counts.empty()) throw ValidationError("class_weights needs at least one class");
    if (spec.scheme == WeightingScheme::ENS && !(spec.beta > 0 && spec.beta < 1))
        throw ValidationError("ENS beta must lie in (0,1)");
    std::vector<Real> weights;
    weights.reserve(counts.size());
    for (auto n : counts) {
        if (n == 0) throw ValidationError("class_weights: zero count");
        const auto count = static_cast<Real>(n);
        switch (spec.scheme) {
            case WeightingScheme::INS: weights.push_back(1.0 / count); break;
            case WeightingScheme::ISNS: weights.push_back(1.0 / std::sqrt(count)); break;
            case WeightingScheme::ENS:
                // -expm1(n log beta) = 1 - beta^n without cancellation for beta near 1.
                weights.push_back((1.0 - spec.beta) / -std::expm1(count * std::log(spec.beta)));
                break;
        }
    }
    const Real mean = std::accumulate(weights.begin(), weights.end(), 0.0) / static_cast<Real>(weights.size());
    for (auto& w : weights) w /= mean;
    return weights;
}

LossConfig make_loss_config(PenaltyMatrix penalties, WeightingSpec weighting,
                            std::span<const std::size_t> counts, bool always_ce) {
    if (counts.size() != penalties.size())
        throw ValidationError("class count vector does not match penalty matrix size");
    std::vector<std::size_t> clamped(counts.begin(), counts.end());
    for (auto& c : clamped) c = std::max<std::size_t>(c, 1);
    const auto weights = class_weights(clamped, weighting);
    LossConfig cfg;
    cfg.penalties = std::move(penalties);
    cfg.weighting = weighting;
    cfg.class_weights = Eigen::Map<const Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    cfg.always_ce = always_ce;
    return cfg;
}

}  // namespace dsynth
