#ifndef DSYNTH_SYSTEM_EVAL_HPP
#define DSYNTH_SYSTEM_EVAL_HPP

#include "dsynth/dispatch_head.hpp"
#include "dsynth/scenario.hpp"
#include "dsynth/types.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dsynth {

// One system configuration in objective space: accuracy up, MFLOPs down.
struct EvalPoint {
    Real accuracy = 0;
    Real mflops_per_image = 0;
    std::string tag;

    bool operator==(const EvalPoint&) const = default;
};

struct CostModel {
    Real extractor_mflops = 0;
    Real head_mflops = 0;
    std::vector<Real> model_mflops;
    // Per model: cost of the part after the shared backbone, when known.
    std::vector<std::optional<Real>> residual_mflops;
    std::optional<std::size_t> backbone;
    bool reuse_backbone = false;

    // Cost of one sample dispatched to `model`, dispatcher overhead included.
    Real sample_cost(std::size_t model) const;
};

CostModel cost_model_for(const Scenario& s, bool reuse_backbone = false);

// Accuracy and mean cost of the given per-row dispatch decisions over `rows`.
EvalPoint evaluate_predictions(std::span<const int> predictions, const BitMatrix& correctness,
                               std::span<const std::size_t> rows, const CostModel& cost);

EvalPoint evaluate_system(const DispatchHead<Real>& head, const Scenario& s,
                          const std::string& split, const CostModel& cost);

bool dominates(const EvalPoint& a, const EvalPoint& b);

// Indices of the non-dominated points, in input order.
std::vector<std::size_t> pareto_indices(std::span<const EvalPoint> points);
std::vector<EvalPoint> pareto_front(std::span<const EvalPoint> points);

struct HypervolumeReference {
    Real accuracy_floor = 0;
    Real mflops_ceiling = 0;
};

/// Area dominated by `points` and bounded by the reference corner. Points on
/// the wrong side of the reference in one objective add nothing; a point the
/// reference strictly dominates is rejected.
Real hypervolume_2d(std::span<const EvalPoint> points, const HypervolumeReference& reference);

// CSV with header "tag,accuracy,mflops_per_image"; numbers in shortest round-trip form.
void write_eval_csv(std::ostream& out, std::span<const EvalPoint> points);
std::vector<EvalPoint> read_eval_csv(std::istream& in);

std::string format_real(Real value);

}  // namespace dsynth

#endif  // DSYNTH_SYSTEM_EVAL_HPP
