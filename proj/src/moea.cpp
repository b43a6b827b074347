#include "dsynth/moea.hpp"

#include "dsynth/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace dsynth {

GeneBounds gene_bounds(std::size_t num_models) {
    const auto n = static_cast<Eigen::Index>(genome_length(num_models));
    GeneBounds b{Vector::Zero(n), Vector::Constant(n, kMaxPenalty)};
    b.upper(n - 1) = std::nextafter(3.0, 0.0);
    return b;
}

DecodedGenome decode_genome(const Genome& g, std::size_t num_models, Real penalty_step, Real ens_beta) {
    if (static_cast<std::size_t>(g.genes.size()) != genome_length(num_models))
        throw ValidationError("genome length " + std::to_string(g.genes.size()) + " does not match " +
                              std::to_string(genome_length(num_models)) + " for K=" + std::to_string(num_models));
    if (!(penalty_step > 0)) throw ValidationError("penalty_step must be positive");
    const auto k = static_cast<Eigen::Index>(num_models);
    Matrix p(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const Real gene = std::clamp(g.genes(i * k + j), 0.0, kMaxPenalty);
            p(i, j) = i == j ? 0.0 : std::min(kMaxPenalty, std::round(gene / penalty_step) * penalty_step);
        }
    }
    const Real selector = std::clamp(g.genes(k * k), 0.0, 3.0);
    const auto scheme_index = std::min(2, static_cast<int>(std::floor(selector)));
    DecodedGenome out{PenaltyMatrix(std::move(p)), {static_cast<WeightingScheme>(scheme_index), ens_beta}};
    return out;
}

Genome encode_genome(const DecodedGenome& decoded) {
    const auto k = static_cast<Eigen::Index>(decoded.penalties.size());
    Genome g{Vector(k * k + 1)};
    const auto values = decoded.penalties.row_major();
    for (Eigen::Index i = 0; i < k * k; ++i) g.genes(i) = values[static_cast<std::size_t>(i)];
    g.genes(k * k) = static_cast<Real>(static_cast<int>(decoded.weighting.scheme));
    return g;
}

Real sbx_spread(Real u, Real eta) {
    const Real exponent = 1.0 / (eta + 1.0);
    if (u <= 0.5) return std::pow(2.0 * u, exponent);
    return std::pow(1.0 / (2.0 * (1.0 - u)), exponent);
}

std::pair<Real, Real> sbx_children(Real x1, Real x2, Real spread) {
    return {0.5 * ((1.0 + spread) * x1 + (1.0 - spread) * x2),
            0.5 * ((1.0 - spread) * x1 + (1.0 + spread) * x2)};
}

std::pair<Genome, Genome> sbx_crossover(const Genome& p1, const Genome& p2, const MoeaConfig& cfg,
                                        const GeneBounds& bounds, Rng& rng) {
    if (p1.genes.size() != p2.genes.size()) throw ValidationError("sbx_crossover: parent lengths differ");
    Genome c1 = p1;
    Genome c2 = p2;
    if (uniform01(rng) >= cfg.crossover_prob) return {c1, c2};
    for (Eigen::Index i = 0; i < p1.genes.size(); ++i) {
        if (uniform01(rng) >= 0.5) continue;
        const Real x1 = p1.genes(i);
        const Real x2 = p2.genes(i);
        if (std::abs(x1 - x2) <= 1e-14) continue;
        auto [a, b] = sbx_children(x1, x2, sbx_spread(uniform01(rng), cfg.sbx_eta));
        if (uniform01(rng) < 0.5) std::swap(a, b);
        c1.genes(i) = std::clamp(a, bounds.lower(i), bounds.upper(i));
        c2.genes(i) = std::clamp(b, bounds.lower(i), bounds.upper(i));
    }
    return {c1, c2};
}

Real polynomial_mutate_gene(Real value, Real lower, Real upper, Real eta, Real u) {
    const Real range = upper - lower;
    if (!(range > 0)) return value;
    const Real delta1 = (value - lower) / range;
    const Real delta2 = (upper - value) / range;
    const Real power = 1.0 / (eta + 1.0);
    Real deltaq;
    if (u <= 0.5) {
        const Real val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - delta1, eta + 1.0);
        deltaq = std::pow(val, power) - 1.0;
    } else {
        const Real val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - delta2, eta + 1.0);
        deltaq = 1.0 - std::pow(val, power);
    }
    return std::clamp(value + deltaq * range, lower, upper);
}

Genome polynomial_mutation(const Genome& g, Real mutation_prob, Real eta, const GeneBounds& bounds, Rng& rng) {
    Genome out = g;
    for (Eigen::Index i = 0; i < g.genes.size(); ++i) {
        if (uniform01(rng) >= mutation_prob) continue;
        out.genes(i) = polynomial_mutate_gene(g.genes(i), bounds.lower(i), bounds.upper(i), eta, uniform01(rng));
    }
    return out;
}

std::vector<std::vector<std::size_t>> fast_nondominated_sort(std::span<const EvalPoint> points) {
    const auto n = points.size();
    std::vector<std::vector<std::size_t>> dominated_by(n);
    std::vector<std::size_t> domination_count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) continue;
            if (dominates(points[p], points[q]))
                dominated_by[p].push_back(q);
            else if (dominates(points[q], points[p]))
                ++domination_count[p];
        }
        if (domination_count[p] == 0) fronts[0].push_back(p);
    }
    if (n == 0) return {};
    for (std::size_t i = 0; !fronts[i].empty(); ++i) {
        std::vector<std::size_t> next;
        for (auto p : fronts[i])
            for (auto q : dominated_by[p])
                if (--domination_count[q] == 0) next.push_back(q);
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

std::vector<Real> crowding_distance(std::span<const EvalPoint> front) {
    const auto n = front.size();
    if (n == 0) throw ValidationError("crowding_distance of an empty front");
    constexpr Real inf = std::numeric_limits<Real>::infinity();
    std::vector<Real> distance(n, 0.0);
    if (n <= 2) {
        std::fill(distance.begin(), distance.end(), inf);
        return distance;
    }
    auto accumulate = [&](auto objective) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](auto a, auto b) { return objective(front[a]) < objective(front[b]); });
        distance[order.front()] = inf;
        distance[order.back()] = inf;
        const Real range = objective(front[order.back()]) - objective(front[order.front()]);
        if (!(range > 0)) return;
        for (std::size_t i = 1; i + 1 < n; ++i)
            distance[order[i]] += (objective(front[order[i + 1]]) - objective(front[order[i - 1]])) / range;
    };
    accumulate([](const EvalPoint& p) { return p.accuracy; });
    accumulate([](const EvalPoint& p) { return p.mflops_per_image; });
    return distance;
}

FitnessProblem::FitnessProblem(const Scenario& s, const MoeaConfig& cfg, const TrainConfig& train_cfg)
    : scenario_(s), cfg_(cfg), train_cfg_(train_cfg), num_models_(s.num_models()) {
    const auto& train_rows = s.split(cfg.train_split);
    s.split(cfg.fitness_split);
    if (train_rows.empty()) throw ValidationError("empty training data");
    const LabelVector all_labels = oracle_relabel(s.correctness);
    train_features_.resize(static_cast<Eigen::Index>(train_rows.size()), s.features.cols());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
        train_features_.row(static_cast<Eigen::Index>(i)) = s.features.row(static_cast<Eigen::Index>(train_rows[i]));
        train_labels_.push_back(all_labels[train_rows[i]]);
    }
    counts_ = label_counts(train_labels_, num_models_);
    cost_ = cost_model_for(s, cfg.reuse_backbone);
}

TrainResult<Real> FitnessProblem::train(const DecodedGenome& decoded, std::uint64_t seed) const {
    const LossConfig loss = make_loss_config(decoded.penalties, decoded.weighting, counts_);
    TrainConfig tc = train_cfg_;
    tc.seed = splitmix64(seed ^ 0x747261696EULL);
    auto head = init_head<Real>(scenario_.feature_dim(), num_models_, seed);
    return train_head(std::move(head), train_features_, train_labels_, loss, tc);
}

EvalPoint FitnessProblem::evaluate(const Genome& g, std::uint64_t seed) const {
    const auto decoded = decode_genome(g, num_models_, cfg_.penalty_step, cfg_.ens_beta);
    const auto trained = train(decoded, seed);
    return evaluate_system(trained.head, scenario_, cfg_.fitness_split, cost_);
}

EvalPoint FitnessProblem::worst_fitness() const {
    return {0.0, *std::max_element(cost_.model_mflops.begin(), cost_.model_mflops.end()), {}};
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads; results must be written by index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

std::string individual_tag(std::size_t generation, std::size_t index) {
    return "g" + std::to_string(generation) + "-i" + std::to_string(index);
}

void evaluate_all(const FitnessProblem& problem, std::vector<Individual>& individuals,
                  std::size_t generation, const MoeaConfig& cfg) {
    parallel_for(individuals.size(), cfg.workers, [&](std::size_t i) {
        auto& ind = individuals[i];
        try {
            ind.fitness = problem.evaluate(ind.genome, derive_seed(cfg.seed, generation, i));
        } catch (const RuntimeError& e) {
            ind.fitness = problem.worst_fitness();
            ind.failed = true;
            ind.failure = e.what();
        }
        ind.fitness.tag = individual_tag(generation, i);
    });
}

std::vector<EvalPoint> fitness_of(const std::vector<Individual>& pop) {
    std::vector<EvalPoint> out;
    out.reserve(pop.size());
    for (const auto& ind : pop) out.push_back(ind.fitness);
    return out;
}

// Assigns rank and crowding to every member; returns the fronts.
std::vector<std::vector<std::size_t>> rank_population(std::vector<Individual>& pop) {
    const auto points = fitness_of(pop);
    auto fronts = fast_nondominated_sort(points);
    for (std::size_t r = 0; r < fronts.size(); ++r) {
        std::vector<EvalPoint> members;
        for (auto i : fronts[r]) members.push_back(points[i]);
        const auto crowd = crowding_distance(members);
        for (std::size_t j = 0; j < fronts[r].size(); ++j) {
            pop[fronts[r][j]].rank = r;
            pop[fronts[r][j]].crowding = crowd[j];
        }
    }
    return fronts;
}

// Crowded-comparison: lower rank, then larger crowding; ties keep the first.
bool better(const Individual& a, const Individual& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.crowding > b.crowding;
}

std::size_t tournament(const std::vector<Individual>& pop, Rng& rng) {
    const auto n = pop.size();
    const auto a = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<Real>(n)));
    const auto b = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<Real>(n)));
    return better(pop[b], pop[a]) ? b : a;
}

void update_archive(std::vector<ArchiveEntry>& archive, const std::vector<Individual>& evaluated) {
    for (const auto& ind : evaluated) archive.push_back({ind.fitness, ind.genome});
    std::vector<EvalPoint> points;
    for (const auto& e : archive) points.push_back(e.point);
    std::vector<ArchiveEntry> kept;
    for (auto i : pareto_indices(points)) kept.push_back(archive[i]);
    archive = std::move(kept);
}

Real archive_hypervolume(const std::vector<ArchiveEntry>& archive, const HypervolumeReference& ref) {
    std::vector<EvalPoint> points;
    for (const auto& e : archive) points.push_back(e.point);
    return hypervolume_2d(points, ref);
}

void append_transcript(std::vector<TranscriptRow>& transcript, const std::vector<Individual>& individuals,
                       std::size_t generation) {
    for (std::size_t i = 0; i < individuals.size(); ++i) {
        const auto& ind = individuals[i];
        transcript.push_back({generation, i, ind.genome, ind.fitness, ind.rank, ind.crowding});
    }
}

}  // namespace

MoeaResult run_nsga2(const Scenario& s, const MoeaConfig& cfg, const TrainConfig& train_cfg) {
    if (cfg.population < 2) throw ValidationError("population must be >= 2");
    if (!(cfg.crossover_prob >= 0 && cfg.crossover_prob <= 1)) throw ValidationError("crossover_prob must lie in [0,1]");
    const auto num_models = s.num_models();
    const Real mutation_prob = cfg.mutation_probability(num_models);
    if (!(mutation_prob >= 0 && mutation_prob <= 1)) throw ValidationError("mutation_prob must lie in [0,1]");
    if (!(cfg.penalty_step >= 0.5 && cfg.penalty_step <= 1.0))
        throw ValidationError("penalty_step must lie in [0.5,1]");

    const FitnessProblem problem(s, cfg, train_cfg);
    const GeneBounds bounds = gene_bounds(num_models);
    Rng rng(cfg.seed);

    MoeaResult result;
    const auto& cost = problem.cost();
    result.reference = {0.0, cost.extractor_mflops + cost.head_mflops +
                                 *std::max_element(cost.model_mflops.begin(), cost.model_mflops.end())};

    std::vector<Individual> population(cfg.population);
    for (auto& ind : population) {
        ind.genome.genes.resize(bounds.lower.size());
        for (Eigen::Index i = 0; i < bounds.lower.size(); ++i)
            ind.genome.genes(i) = uniform(rng, bounds.lower(i), bounds.upper(i));
    }
    evaluate_all(problem, population, 0, cfg);
    rank_population(population);
    append_transcript(result.transcript, population, 0);
    for (const auto& ind : population) result.failures += ind.failed;
    update_archive(result.archive, population);
    result.hypervolume.push_back(archive_hypervolume(result.archive, result.reference));

    for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
        std::vector<Individual> offspring;
        offspring.reserve(cfg.population);
        while (offspring.size() < cfg.population) {
            const auto& a = population[tournament(population, rng)];
            const auto& b = population[tournament(population, rng)];
            auto [c1, c2] = sbx_crossover(a.genome, b.genome, cfg, bounds, rng);
            offspring.push_back({polynomial_mutation(c1, mutation_prob, cfg.mutation_eta, bounds, rng), {}, 0, 0, false, {}});
            if (offspring.size() < cfg.population)
                offspring.push_back({polynomial_mutation(c2, mutation_prob, cfg.mutation_eta, bounds, rng), {}, 0, 0, false, {}});
        }
        evaluate_all(problem, offspring, gen, cfg);
        for (const auto& ind : offspring) result.failures += ind.failed;

        // Elitist (mu + lambda) truncation over parents and offspring.
        std::vector<Individual> pool = population;
        pool.insert(pool.end(), offspring.begin(), offspring.end());
        const auto fronts = rank_population(pool);
        for (std::size_t i = 0; i < offspring.size(); ++i) {
            offspring[i].rank = pool[population.size() + i].rank;
            offspring[i].crowding = pool[population.size() + i].crowding;
        }
        append_transcript(result.transcript, offspring, gen);

        std::vector<Individual> next;
        next.reserve(cfg.population);
        for (const auto& front : fronts) {
            if (next.size() + front.size() <= cfg.population) {
                for (auto i : front) next.push_back(pool[i]);
                continue;
            }
            std::vector<std::size_t> last(front.begin(), front.end());
            std::stable_sort(last.begin(), last.end(),
                             [&](auto a, auto b) { return pool[a].crowding > pool[b].crowding; });
            for (std::size_t j = 0; next.size() < cfg.population; ++j) next.push_back(pool[last[j]]);
            break;
        }
        population = std::move(next);
        rank_population(population);

        update_archive(result.archive, offspring);
        result.hypervolume.push_back(archive_hypervolume(result.archive, result.reference));
    }

    if (!cfg.cumulative_archive) {
        result.archive.clear();
        update_archive(result.archive, population);
    }
    result.population = std::move(population);
    return result;
}

void write_transcript_csv(std::ostream& out, std::span<const TranscriptRow> rows) {
    out << "generation,individual";
    if (!rows.empty())
        for (Eigen::Index i = 0; i < rows.front().genome.genes.size(); ++i) out << ",gene" << i;
    out << ",accuracy,mflops,rank,crowding\n";
    for (const auto& r : rows) {
        out << r.generation << ',' << r.individual;
        for (Eigen::Index i = 0; i < r.genome.genes.size(); ++i) out << ',' << format_real(r.genome.genes(i));
        out << ',' << format_real(r.fitness.accuracy) << ',' << format_real(r.fitness.mflops_per_image) << ','
            << r.rank << ',' << format_real(r.crowding) << '\n';
    }
}

}  // namespace dsynth
