#ifndef DSYNTH_ORACLE_HPP
#define DSYNTH_ORACLE_HPP

#include "dsynth/types.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace dsynth {

// Correctness pattern (one '0'/'1' character per model, model order) -> count.
using CombinationHistogram = std::map<std::string, std::size_t>;

CombinationHistogram combination_histogram(const BitMatrix& correctness);

// Cheapest correct model per row; rows nobody gets right go to model 0.
// Requires models sorted by ascending cost.
LabelVector oracle_relabel(const BitMatrix& correctness);

std::vector<Real> label_distribution(std::span<const int> labels, std::size_t num_models);

// Per-class sample counts.
std::vector<std::size_t> label_counts(std::span<const int> labels, std::size_t num_models);

struct IdealMetrics {
    Real ideal_accuracy = 0;
    Real ideal_mflops_per_image = 0;
    std::vector<Real> model_accuracy;
    // 1 - ideal_cost / cost_k, as a fraction.
    std::vector<Real> reduction_vs_each_model;
    // (ideal_accuracy - accuracy_k) in percentage points.
    std::vector<Real> accuracy_delta_vs_each_model;
};

/// Upper bound reached by a free, perfect dispatcher: every sample goes to its
/// oracle label. The dispatcher itself is costed at zero.
IdealMetrics ideal_metrics(const BitMatrix& correctness, std::span<const Real> costs);

}  // namespace dsynth

#endif  // DSYNTH_ORACLE_HPP
