#ifndef DSYNTH_MOEA_HPP
#define DSYNTH_MOEA_HPP

#include "dsynth/dispatch_head.hpp"
#include "dsynth/loss.hpp"
#include "dsynth/rng.hpp"
#include "dsynth/scenario.hpp"
#include "dsynth/system_eval.hpp"

#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dsynth {

/// K*K penalty genes (row-major, range [0,100]) followed by one weighting
/// selector gene in [0,3). Diagonal genes are carried but ignored at decode.
struct Genome {
    Vector genes;

    bool operator==(const Genome& other) const {
        return genes.size() == other.genes.size() && genes == other.genes;
    }
};

inline std::size_t genome_length(std::size_t num_models) { return num_models * num_models + 1; }

struct GeneBounds {
    Vector lower;
    Vector upper;
};

GeneBounds gene_bounds(std::size_t num_models);

struct MoeaConfig {
    std::size_t population = 50;
    std::size_t generations = 50;
    Real sbx_eta = 20.0;
    Real crossover_prob = 0.9;
    Real mutation_eta = 25.0;
    // Defaults to 1 / genome length.
    std::optional<Real> mutation_prob;
    Real penalty_step = 0.5;
    Real ens_beta = 0.999;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string train_split = "train";
    std::string fitness_split = "test";
    // Keep the non-dominated set of every evaluation so far; when false the
    // archive is the first front of the final population only.
    bool cumulative_archive = true;
    bool reuse_backbone = false;

    Real mutation_probability(std::size_t num_models) const {
        return mutation_prob.value_or(1.0 / static_cast<Real>(genome_length(num_models)));
    }
};

struct DecodedGenome {
    PenaltyMatrix penalties;
    WeightingSpec weighting;
};

// Penalties snap to the nearest multiple of `penalty_step`; selector floor() picks INS/ISNS/ENS.
DecodedGenome decode_genome(const Genome& g, std::size_t num_models, Real penalty_step = 0.5,
                            Real ens_beta = 0.999);
Genome encode_genome(const DecodedGenome& decoded);

// SBX spread factor for a uniform draw u in [0,1).
Real sbx_spread(Real u, Real eta);
// Unclamped SBX children of one gene pair; their mean equals the parents' mean.
std::pair<Real, Real> sbx_children(Real x1, Real x2, Real spread);

std::pair<Genome, Genome> sbx_crossover(const Genome& p1, const Genome& p2, const MoeaConfig& cfg,
                                        const GeneBounds& bounds, Rng& rng);

// Bounded polynomial mutation of one gene for a uniform draw u in [0,1).
Real polynomial_mutate_gene(Real value, Real lower, Real upper, Real eta, Real u);
Genome polynomial_mutation(const Genome& g, Real mutation_prob, Real eta, const GeneBounds& bounds, Rng& rng);

// Fronts of index lists; front 0 is non-dominated.
std::vector<std::vector<std::size_t>> fast_nondominated_sort(std::span<const EvalPoint> points);

// Crowding distance of each member of one front.
std::vector<Real> crowding_distance(std::span<const EvalPoint> front);

struct Individual {
    Genome genome;
    EvalPoint fitness;
    std::size_t rank = 0;
    Real crowding = 0;
    bool failed = false;
    std::string failure;
};

struct TranscriptRow {
    std::size_t generation = 0;
    std::size_t individual = 0;
    Genome genome;
    EvalPoint fitness;
    std::size_t rank = 0;
    Real crowding = 0;
};

struct ArchiveEntry {
    EvalPoint point;
    Genome genome;
};

struct MoeaResult {
    std::vector<Individual> population;
    std::vector<ArchiveEntry> archive;
    std::vector<Real> hypervolume;  // one entry per generation, generation 0 included
    std::vector<TranscriptRow> transcript;
    HypervolumeReference reference;
    std::size_t failures = 0;
};

/// Shared, read-only inputs of every fitness evaluation: the training rows and
/// their oracle labels, the fitness rows and the cost model.
class FitnessProblem {
public:
    FitnessProblem(const Scenario& s, const MoeaConfig& cfg, const TrainConfig& train_cfg);

    std::size_t num_models() const { return num_models_; }
    const CostModel& cost() const { return cost_; }
    const std::vector<std::size_t>& class_counts() const { return counts_; }

    // Decode, train a head with `seed`, evaluate. Throws RuntimeError on divergence.
    EvalPoint evaluate(const Genome& g, std::uint64_t seed) const;
    TrainResult<Real> train(const DecodedGenome& decoded, std::uint64_t seed) const;
    EvalPoint worst_fitness() const;

private:
    const Scenario& scenario_;
    MoeaConfig cfg_;
    TrainConfig train_cfg_;
    std::size_t num_models_;
    Matrix train_features_;
    LabelVector train_labels_;
    std::vector<std::size_t> counts_;
    CostModel cost_;
};

MoeaResult run_nsga2(const Scenario& s, const MoeaConfig& cfg, const TrainConfig& train_cfg);

void write_transcript_csv(std::ostream& out, std::span<const TranscriptRow> rows);

}  // namespace dsynth

#endif  // DSYNTH_MOEA_HPP
