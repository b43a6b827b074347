#include "dsynth/oracle.hpp"

#include <stdexcept>

namespace dsynth {

CombinationHistogram combination_histogram(const BitMatrix& correctness) {
    CombinationHistogram hist;
    std::string pattern(static_cast<std::size_t>(correctness.cols()), '0');
    for (Eigen::Index n = 0; n < correctness.rows(); ++n) {
        for (Eigen::Index k = 0; k < correctness.cols(); ++k)
            pattern[static_cast<std::size_t>(k)] = correctness(n, k) ? '1' : '0';
        ++hist[pattern];
    }
    return hist;
}

LabelVector oracle_relabel(const BitMatrix& correctness) {
    LabelVector labels(static_cast<std::size_t>(correctness.rows()), 0);
    for (Eigen::Index n = 0; n < correctness.rows(); ++n) {
        for (Eigen::Index k = 0; k < correctness.cols(); ++k) {
            if (correctness(n, k)) {
                labels[static_cast<std::size_t>(n)] = static_cast<int>(k);
                break;
            }
        }
    }
    return labels;
}

std::vector<std::size_t> label_counts(std::span<const int> labels, std::size_t num_models) {
    std::vector<std::size_t> counts(num_models, 0);
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= num_models)
            throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(num_models) + ")");
        ++counts[static_cast<std::size_t>(label)];
    }
    return counts;
}

std::vector<Real> label_distribution(std::span<const int> labels, std::size_t num_models) {
    const auto counts = label_counts(labels, num_models);
    std::vector<Real> fractions(num_models, 0.0);
    if (labels.empty()) return fractions;
    for (std::size_t k = 0; k < num_models; ++k)
        fractions[k] = static_cast<Real>(counts[k]) / static_cast<Real>(labels.size());
    return fractions;
}

IdealMetrics ideal_metrics(const BitMatrix& correctness, std::span<const Real> costs) {
    const auto num_models = static_cast<std::size_t>(correctness.cols());
    if (costs.size() != num_models)
        throw ValidationError("cost vector length does not match model count");
    const auto rows = correctness.rows();
    if (rows == 0) throw ValidationError("empty correctness matrix");

    IdealMetrics m;
    const LabelVector labels = oracle_relabel(correctness);
    std::size_t any_correct = 0;
    Real total_cost = 0;
    for (Eigen::Index n = 0; n < rows; ++n) {
        if ((correctness.row(n).array() != 0).any()) ++any_correct;
        total_cost += costs[static_cast<std::size_t>(labels[static_cast<std::size_t>(n)])];
    }
    const auto count = static_cast<Real>(rows);
    m.ideal_accuracy = static_cast<Real>(any_correct) / count;
    m.ideal_mflops_per_image = total_cost / count;

    for (std::size_t k = 0; k < num_models; ++k) {
        const auto correct = correctness.col(static_cast<Eigen::Index>(k)).cast<std::size_t>().sum();
        const Real acc = static_cast<Real>(correct) / count;
        m.model_accuracy.push_back(acc);
        m.reduction_vs_each_model.push_back(1.0 - m.ideal_mflops_per_image / costs[k]);
        m.accuracy_delta_vs_each_model.push_back(100.0 * (m.ideal_accuracy - acc));
    }
    return m;
}

}  // namespace dsynth
