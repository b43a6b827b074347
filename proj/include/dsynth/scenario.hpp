#ifndef DSYNTH_SCENARIO_HPP
#define DSYNTH_SCENARIO_HPP

#include "dsynth/types.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dsynth {

struct ModelProfile {
    std::string name;
    Real cost_mflops = 0;
    bool is_extractor_backbone = false;
    // Cost of running only the part of the model after the shared backbone.
    // Used when the dispatcher's features are reused (CostModel::reuse_backbone).
    std::optional<Real> residual_mflops;
};

struct ExtractorProfile {
    std::string name;
    Real cost_mflops = 0;
    std::size_t feature_dim = 0;
};

enum class FeatureFormat { F32LE, CSV };

/// A self-contained dispatch problem: per-sample features, per-model
/// correctness and cost profiles. Models are kept in ascending cost order;
/// `original_order[k]` is the manifest position of model k.
struct Scenario {
    std::string name;
    Matrix features;        // N x D
    BitMatrix correctness;  // N x K
    std::vector<ModelProfile> models;
    std::vector<std::size_t> original_order;
    ExtractorProfile extractor;
    std::map<std::string, IndexList> splits;

    std::size_t num_samples() const { return static_cast<std::size_t>(correctness.rows()); }
    std::size_t num_models() const { return models.size(); }
    std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }

    std::vector<Real> model_costs() const;
    // Index of the model flagged as the extractor's backbone, if any.
    std::optional<std::size_t> backbone_index() const;
    // Rows of a named split; throws ValidationError for an unknown split.
    const IndexList& split(const std::string& split_name) const;
};

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<std::string> warnings;

    bool ok() const { return violations.empty(); }
};

ValidationReport validate_scenario(const Scenario& s);

// Reads a JSON manifest and its data files. Throws ValidationError when the
// files are unreadable, inconsistent, or the scenario fails validation.
Scenario load_scenario(const std::filesystem::path& manifest_path);

// Writes manifest.json, features.f32 (or features.csv) and correctness.csv
// into `dir`; returns the manifest path.
std::filesystem::path write_scenario(const Scenario& s, const std::filesystem::path& dir,
                                     FeatureFormat format = FeatureFormat::F32LE);

struct SyntheticSpec {
    std::size_t num_samples = 1000;
    std::size_t num_models = 3;
    std::size_t feature_dim = 16;
    std::vector<Real> costs{5.0, 15.0, 40.0};
    Real cluster_separation = 6.0;
    Real noise_rate = 0.0;
    std::uint64_t seed = 0;
    // Fraction of samples whose cheapest correct model is tier k. Anything left
    // over is "hopeless" (no model correct). Empty selects a long tail
    // proportional to 3^-k with no hopeless samples.
    std::vector<Real> tier_fractions;
    Real extractor_mflops = 1.0;
};

Scenario generate_synthetic(const SyntheticSpec& spec);

inline constexpr std::array<Real, 3> kDefaultSplitFractions{0.8, 0.1, 0.1};

// Seeded shuffle partition into "train", "val" and "test".
Scenario split_scenario(Scenario s, std::array<Real, 3> fractions, std::uint64_t seed);

}  // namespace dsynth

#endif  // DSYNTH_SCENARIO_HPP
