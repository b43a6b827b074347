#ifndef DSYNTH_LOSS_HPP
#define DSYNTH_LOSS_HPP

#include "dsynth/types.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dsynth {

enum class WeightingScheme { INS, ISNS, ENS };

std::string to_string(WeightingScheme scheme);
WeightingScheme parse_weighting_scheme(const std::string& text);

struct WeightingSpec {
    WeightingScheme scheme = WeightingScheme::INS;
    Real beta = 0.999;  // ENS only
};

inline constexpr Real kMaxPenalty = 100.0;

/// K x K misclassification penalties, rows indexed by the true label and
/// columns by the predicted one. The diagonal is always zero and every entry
/// lies in [0, kMaxPenalty].
class PenaltyMatrix {
public:
    PenaltyMatrix() = default;
    // Throws ValidationError when the invariants do not hold.
    explicit PenaltyMatrix(Matrix values);

    static PenaltyMatrix uniform(std::size_t num_models, Real off_diagonal);
    // Accepts K(K-1) off-diagonal values or K*K values with a zero diagonal, row-major.
    static PenaltyMatrix from_list(std::span<const Real> values, std::size_t num_models);

    std::size_t size() const { return static_cast<std::size_t>(values_.rows()); }
    const Matrix& values() const { return values_; }
    Real operator()(std::size_t truth, std::size_t predicted) const {
        return values_(static_cast<Eigen::Index>(truth), static_cast<Eigen::Index>(predicted));
    }
    // Row-major K*K list, diagonal included as 0.
    std::vector<Real> row_major() const;
    // Mean off-diagonal penalty of one row.
    Real row_mean(std::size_t truth) const;

private:
    Matrix values_;
};

// Raw weights (INS 1/n, ISNS 1/sqrt(n), ENS (1-beta)/(1-beta^n)) rescaled to mean 1.
std::vector<Real> class_weights(std::span<const std::size_t> counts, const WeightingSpec& spec);

struct LossConfig {
    PenaltyMatrix penalties;
    WeightingSpec weighting;
    Vector class_weights;
    // When set, correctly classified samples contribute their class weight times
    // the mean off-diagonal penalty of their row times the cross-entropy.
    bool always_ce = false;
};

// Class counts of zero are treated as one so that absent classes keep a finite weight.
LossConfig make_loss_config(PenaltyMatrix penalties, WeightingSpec weighting,
                            std::span<const std::size_t> counts, bool always_ce = false);

template <typename Scalar>
struct LossResult {
    Scalar loss = 0;
    MatrixX<Scalar> gradient;  // d loss / d logits, same shape as the logits
};

// Lowest index wins ties.
template <typename Derived>
Eigen::Index argmax_row(const Eigen::MatrixBase<Derived>& row) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < row.size(); ++k)
        if (row(k) > row(best)) best = k;
    return best;
}

/// Mean over samples of class_weight[y] * P[y, argmax] * CE(softmax(logits), y);
/// correctly classified samples contribute nothing unless `correct_contribute`
/// (or cfg.always_ce) is set. The multiplier is held constant when
/// differentiating, so the gradient is that of the scaled cross-entropy.
template <typename Scalar>
LossResult<Scalar> penalized_loss(const MatrixX<Scalar>& logits, std::span<const int> labels,
                                  const LossConfig& cfg, bool correct_contribute = false) {
    const auto rows = logits.rows();
    const auto num_models = logits.cols();
    if (rows < 1) throw ValidationError("penalized_loss needs at least one sample");
    if (static_cast<std::size_t>(rows) != labels.size())
        throw ValidationError("logit rows and label count differ");
    if (static_cast<std::size_t>(num_models) != cfg.penalties.size() ||
        cfg.class_weights.size() != num_models)
        throw ValidationError("logit columns do not match the loss configuration");
    if (!logits.allFinite()) throw RuntimeError("non-finite logit");

    correct_contribute = correct_contribute || cfg.always_ce;
    LossResult<Scalar> result;
    result.gradient = MatrixX<Scalar>::Zero(rows, num_models);
    const Scalar inv_rows = Scalar(1) / static_cast<Scalar>(rows);

    VectorX<Scalar> prob(num_models);
    for (Eigen::Index n = 0; n < rows; ++n) {
        const int truth = labels[static_cast<std::size_t>(n)];
        if (truth < 0 || truth >= num_models) throw ValidationError("label out of range");
        const auto predicted = argmax_row(logits.row(n));
        Scalar multiplier;
        if (predicted == truth) {
            if (!correct_contribute) continue;
            multiplier = static_cast<Scalar>(cfg.class_weights(truth) * cfg.penalties.row_mean(static_cast<std::size_t>(truth)));
        } else {
            multiplier = static_cast<Scalar>(cfg.class_weights(truth) *
                                             cfg.penalties(static_cast<std::size_t>(truth), static_cast<std::size_t>(predicted)));
        }
        if (multiplier == Scalar(0)) continue;

        const Scalar top = logits.row(n).maxCoeff();
        prob = (logits.row(n).array() - top).exp().transpose();
        const Scalar denom = prob.sum();
        const Scalar cross_entropy = std::log(denom) - (logits(n, truth) - top);
        prob /= denom;

        result.loss += multiplier * cross_entropy;
        prob(truth) -= Scalar(1);
        result.gradient.row(n) = (multiplier * inv_rows) * prob.transpose();
    }
    result.loss *= inv_rows;
    return result;
}

/// Largest relative error between the analytic gradient and central
/// differences, over entries whose analytic magnitude exceeds 1e-8. Probe
/// points must stay clear of argmax ties.
template <typename Scalar>
Scalar finite_difference_check(const MatrixX<Scalar>& logits, std::span<const int> labels,
                               const LossConfig& cfg, Scalar epsilon) {
    if (!(epsilon > 0)) throw ValidationError("epsilon must be positive");
    const auto analytic = penalized_loss(logits, labels, cfg).gradient;
    MatrixX<Scalar> probe = logits;
    Scalar worst = 0;
    for (Eigen::Index n = 0; n < logits.rows(); ++n) {
        for (Eigen::Index k = 0; k < logits.cols(); ++k) {
            const Scalar saved = probe(n, k);
            probe(n, k) = saved + epsilon;
            const Scalar up = penalized_loss(probe, labels, cfg).loss;
            probe(n, k) = saved - epsilon;
            const Scalar down = penalized_loss(probe, labels, cfg).loss;
            probe(n, k) = saved;
            const Scalar numeric = (up - down) / (Scalar(2) * epsilon);
            const Scalar a = analytic(n, k);
            if (std::abs(a) > Scalar(1e-8)) worst = std::max(worst, std::abs(numeric - a) / std::abs(a));
        }
    }
    return worst;
}

}  // namespace dsynth

#endif  // DSYNTH_LOSS_HPP
