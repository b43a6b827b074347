#include "dsynth/system_eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace dsynth {

Real CostModel::sample_cost(std::size_t model) const {
    Real dnn = model_mflops.at(model);
    if (reuse_backbone && backbone && *backbone == model && model < residual_mflops.size() &&
        residual_mflops[model])
        dnn = *residual_mflops[model];
    return extractor_mflops + head_mflops + dnn;
}

CostModel cost_model_for(const Scenario& s, bool reuse_backbone) {
    CostModel cost;
    cost.extractor_mflops = s.extractor.cost_mflops;
    cost.head_mflops = head_cost_mflops(s.feature_dim(), s.num_models());
    cost.model_mflops = s.model_costs();
    for (const auto& m : s.models) cost.residual_mflops.push_back(m.residual_mflops);
    cost.backbone = s.backbone_index();
    cost.reuse_backbone = reuse_backbone;
    if (reuse_backbone && (!cost.backbone || !cost.residual_mflops[*cost.backbone]))
        throw ValidationError("backbone reuse requested but no backbone residual cost is declared");
    return cost;
}

EvalPoint evaluate_predictions(std::span<const int> predictions, const BitMatrix& correctness,
                               std::span<const std::size_t> rows, const CostModel& cost) {
    if (predictions.size() != rows.size()) throw ValidationError("prediction count does not match rows");
    if (rows.empty()) throw ValidationError("cannot evaluate an empty split");
    std::size_t hits = 0;
    Real total = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto model = static_cast<std::size_t>(predictions[i]);
        if (model >= cost.model_mflops.size()) throw ValidationError("prediction outside model range");
        hits += correctness(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(model));
        total += cost.sample_cost(model);
    }
    const auto count = static_cast<Real>(rows.size());
    return {static_cast<Real>(hits) / count, total / count, {}};
}

EvalPoint evaluate_system(const DispatchHead<Real>& head, const Scenario& s,
                          const std::string& split, const CostModel& cost) {
    const auto& rows = s.split(split);
    Matrix subset(static_cast<Eigen::Index>(rows.size()), s.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        subset.row(static_cast<Eigen::Index>(i)) = s.features.row(static_cast<Eigen::Index>(rows[i]));
    const auto predictions = predict(head, subset);
    return evaluate_predictions(predictions, s.correctness, rows, cost);
}

bool dominates(const EvalPoint& a, const EvalPoint& b) {
    return a.accuracy >= b.accuracy && a.mflops_per_image <= b.mflops_per_image &&
           (a.accuracy > b.accuracy || a.mflops_per_image < b.mflops_per_image);
}

std::vector<std::size_t> pareto_indices(std::span<const EvalPoint> points) {
    // Sweep by cost ascending (accuracy descending on ties): a point survives iff
    // no earlier point has at least its accuracy while being strictly better somewhere.
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        if (points[a].mflops_per_image != points[b].mflops_per_image)
            return points[a].mflops_per_image < points[b].mflops_per_image;
        return points[a].accuracy > points[b].accuracy;
    });
    std::vector<char> keep(points.size(), 0);
    Real best_accuracy = -std::numeric_limits<Real>::infinity();
    Real best_cost = std::numeric_limits<Real>::quiet_NaN();
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& p = points[order[i]];
        // Equal points tie with the current best and are kept together.
        const bool equal_to_best = p.accuracy == best_accuracy && p.mflops_per_image == best_cost;
        if (p.accuracy > best_accuracy || equal_to_best) {
            keep[order[i]] = 1;
            best_accuracy = p.accuracy;
            best_cost = p.mflops_per_image;
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (keep[i]) out.push_back(i);
    return out;
}

std::vector<EvalPoint> pareto_front(std::span<const EvalPoint> points) {
    std::vector<EvalPoint> out;
    for (auto i : pareto_indices(points)) out.push_back(points[i]);
    return out;
}

Real hypervolume_2d(std::span<const EvalPoint> points, const HypervolumeReference& reference) {
    if (!std::isfinite(reference.accuracy_floor) || !std::isfinite(reference.mflops_ceiling))
        throw ValidationError("hypervolume reference must be finite");
    std::vector<EvalPoint> inside;
    for (const auto& p : points) {
        if (p.accuracy < reference.accuracy_floor && p.mflops_per_image > reference.mflops_ceiling)
            throw ValidationError("hypervolume reference lies inside the front region");
        if (p.accuracy > reference.accuracy_floor && p.mflops_per_image < reference.mflops_ceiling)
            inside.push_back(p);
    }
    const auto front = pareto_front(inside);
    std::vector<EvalPoint> sorted(front.begin(), front.end());
    std::sort(sorted.begin(), sorted.end(), [](const EvalPoint& a, const EvalPoint& b) {
        return a.mflops_per_image < b.mflops_per_image;
    });
    // Along a front sorted by cost, accuracy increases; each point owns the slab up to the next cost.
    Real area = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const Real next = i + 1 < sorted.size() ? sorted[i + 1].mflops_per_image : reference.mflops_ceiling;
        area += (sorted[i].accuracy - reference.accuracy_floor) * (next - sorted[i].mflops_per_image);
    }
    return area;
}

std::string format_real(Real value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return {buf, res.ptr};
}

void write_eval_csv(std::ostream& out, std::span<const EvalPoint> points) {
    out << "tag,accuracy,mflops_per_image\n";
    for (const auto& p : points) {
        if (p.tag.find_first_of(",\n") != std::string::npos)
            throw ValidationError("EvalPoint tag may not contain commas or newlines: " + p.tag);
        out << p.tag << ',' << format_real(p.accuracy) << ',' << format_real(p.mflops_per_image) << '\n';
    }
}

std::vector<EvalPoint> read_eval_csv(std::istream& in) {
    std::vector<EvalPoint> points;
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    auto parse = [&](const std::string& text) {
        Real value = 0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
        if (res.ec != std::errc() || res.ptr != text.data() + text.size())
            throw ValidationError("line " + std::to_string(line_no) + ": bad number \"" + text + "\"");
        return value;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line != "tag,accuracy,mflops_per_image")
                throw ValidationError("expected header \"tag,accuracy,mflops_per_image\"");
            continue;
        }
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
            throw ValidationError("line " + std::to_string(line_no) + ": expected 3 fields");
        points.push_back({parse(line.substr(c1 + 1, c2 - c1 - 1)), parse(line.substr(c2 + 1)), line.substr(0, c1)});
    }
    if (header) throw ValidationError("missing CSV header");
    return points;
}

}  // namespace dsynth
