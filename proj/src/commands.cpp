#include "dsynth/commands.hpp"

#include "dsynth/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace dsynth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write " + path.string());
    return out;
}

std::string fixed2(Real value) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << value;
    return os.str();
}

json train_config_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},           {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate}, {"momentum", t.momentum},
            {"warmup_epochs", t.warmup_epochs}, {"standardize", t.standardize}};
}

// Each model run alone on the given rows, without a dispatcher.
std::vector<EvalPoint> baseline_points(const Scenario& s, const IndexList& rows) {
    std::vector<EvalPoint> points;
    for (std::size_t k = 0; k < s.num_models(); ++k) {
        std::size_t hits = 0;
        for (auto r : rows) hits += s.correctness(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        points.push_back({static_cast<Real>(hits) / static_cast<Real>(rows.size()), s.models[k].cost_mflops,
                          s.models[k].name});
    }
    return points;
}

}  // namespace

json RunManifest::to_json() const {
    return {{"tool", "dsynth"},         {"version", kToolVersion},   {"command", command},
            {"scenario", scenario.string()}, {"seed", seed},           {"parameters", parameters},
            {"started_at", started_at}, {"finished_at", finished_at}};
}

void RunManifest::write(const fs::path& out_dir) const {
    auto out = open_output(out_dir / "run_manifest.json");
    out << to_json().dump(2) << '\n';
}

Scenario prepare_scenario(const fs::path& manifest, std::uint64_t seed) {
    Scenario s = load_scenario(manifest);
    if (s.splits.empty()) s = split_scenario(std::move(s), kDefaultSplitFractions, seed);
    return s;
}

json cmd_analyze(const AnalyzeOptions& opts, std::ostream& log) {
    RunManifest manifest{"analyze", opts.scenario, json::object(), 0, utc_now(), {}};
    const Scenario s = load_scenario(opts.scenario);
    const auto validation = validate_scenario(s);
    const auto hist = combination_histogram(s.correctness);
    const auto labels = oracle_relabel(s.correctness);
    const auto dist = label_distribution(labels, s.num_models());
    const auto counts = label_counts(labels, s.num_models());
    const auto costs = s.model_costs();
    const auto ideal = ideal_metrics(s.correctness, costs);

    json report;
    report["scenario"] = s.name;
    report["num_samples"] = s.num_samples();
    report["models"] = json::array();
    for (std::size_t k = 0; k < s.num_models(); ++k)
        report["models"].push_back({{"name", s.models[k].name},
                                    {"mflops_per_image", costs[k]},
                                    {"accuracy", ideal.model_accuracy[k]},
                                    {"oracle_label_count", counts[k]},
                                    {"oracle_label_fraction", dist[k]},
                                    {"ideal_mflops_reduction", ideal.reduction_vs_each_model[k]},
                                    {"ideal_accuracy_delta_pp", ideal.accuracy_delta_vs_each_model[k]}});
    report["histogram"] = json::object();
    for (const auto& [pattern, count] : hist) report["histogram"][pattern] = count;
    report["label_distribution"] = dist;
    report["ideal"] = {{"accuracy", ideal.ideal_accuracy},
                       {"mflops_per_image", ideal.ideal_mflops_per_image},
                       {"reduction_vs_each_model", ideal.reduction_vs_each_model},
                       {"accuracy_delta_pp_vs_each_model", ideal.accuracy_delta_vs_each_model}};
    report["warnings"] = validation.warnings;

    fs::create_directories(opts.out_dir);
    open_output(opts.out_dir / "analysis.json") << report.dump(2) << '\n';

    log << "scenario " << s.name << ": " << s.num_samples() << " samples, " << s.num_models() << " models\n";
    log << "model                 MFLOPs   acc%   oracle%  ideal-reduction%  ideal-delta-pp\n";
    for (std::size_t k = 0; k < s.num_models(); ++k) {
        log << std::left << std::setw(20) << s.models[k].name << std::right << std::setw(9) << fixed2(costs[k])
            << std::setw(7) << fixed2(100 * ideal.model_accuracy[k]) << std::setw(10) << fixed2(100 * dist[k])
            << std::setw(18) << fixed2(100 * ideal.reduction_vs_each_model[k]) << std::setw(16)
            << fixed2(ideal.accuracy_delta_vs_each_model[k]) << '\n';
    }
    log << "ideal dispatcher: accuracy " << fixed2(100 * ideal.ideal_accuracy) << "%, "
        << fixed2(ideal.ideal_mflops_per_image) << " MFLOPs/image\n";
    for (const auto& w : validation.warnings) log << "warning: " << w << '\n';

    manifest.finished_at = utc_now();
    manifest.write(opts.out_dir);
    return report;
}

TrainOutcome cmd_train(const TrainOptions& opts, std::ostream& log) {
    RunManifest manifest{"train", opts.scenario, json::object(), opts.seed, utc_now(), {}};
    const Scenario s = prepare_scenario(opts.scenario, opts.seed);
    const auto num_models = s.num_models();
    const auto penalties = PenaltyMatrix::from_list(opts.penalties, num_models);
    const WeightingSpec weighting{parse_weighting_scheme(opts.scheme), opts.ens_beta};

    MoeaConfig moea;
    moea.fitness_split = opts.fitness_split;
    moea.ens_beta = opts.ens_beta;
    const FitnessProblem problem(s, moea, opts.train);

    TrainOutcome outcome;
    outcome.initial_head = init_head<Real>(s.feature_dim(), num_models, opts.seed);
    const auto trained = problem.train({penalties, weighting}, opts.seed);
    outcome.head = trained.head;
    outcome.history = trained.history;
    outcome.point = evaluate_system(outcome.head, s, opts.fitness_split, problem.cost());
    outcome.point.tag = "trained";

    fs::create_directories(opts.out_dir);
    save_head(outcome.head, opts.out_dir / "head.json");
    {
        auto out = open_output(opts.out_dir / "eval.csv");
        write_eval_csv(out, std::span(&outcome.point, 1));
    }
    {
        auto out = open_output(opts.out_dir / "history.csv");
        out << "epoch,loss,train_accuracy\n";
        for (std::size_t e = 0; e < outcome.history.loss.size(); ++e)
            out << e + 1 << ',' << format_real(outcome.history.loss[e]) << ','
                << format_real(outcome.history.accuracy[e]) << '\n';
    }

    log << "trained head: accuracy " << fixed2(100 * outcome.point.accuracy) << "%, "
        << fixed2(outcome.point.mflops_per_image) << " MFLOPs/image on split \"" << opts.fitness_split << "\"\n";

    manifest.parameters = {{"penalties", penalties.row_major()},
                           {"scheme", to_string(weighting.scheme)},
                           {"ens_beta", opts.ens_beta},
                           {"fitness_split", opts.fitness_split},
                           {"train", train_config_json(opts.train)}};
    manifest.finished_at = utc_now();
    manifest.write(opts.out_dir);
    return outcome;
}

MoeaResult cmd_explore(const ExploreOptions& opts, std::ostream& log) {
    const auto& cfg = opts.moea;
    RunManifest manifest{"explore", opts.scenario, json::object(), cfg.seed, utc_now(), {}};
    const Scenario s = prepare_scenario(opts.scenario, cfg.seed);
    const auto num_models = s.num_models();

    MoeaResult result = run_nsga2(s, cfg, opts.train);

    fs::create_directories(opts.out_dir);
    std::vector<EvalPoint> archive_points;
    for (const auto& e : result.archive) archive_points.push_back(e.point);
    {
        auto out = open_output(opts.out_dir / "archive.csv");
        write_eval_csv(out, archive_points);
    }
    {
        json entries = json::array();
        for (const auto& e : result.archive) {
            const auto decoded = decode_genome(e.genome, num_models, cfg.penalty_step, cfg.ens_beta);
            entries.push_back({{"tag", e.point.tag},
                               {"accuracy", e.point.accuracy},
                               {"mflops_per_image", e.point.mflops_per_image},
                               {"penalties", decoded.penalties.row_major()},
                               {"scheme", to_string(decoded.weighting.scheme)}});
        }
        open_output(opts.out_dir / "archive_penalties.json") << entries.dump(2) << '\n';
    }
    {
        auto out = open_output(opts.out_dir / "transcript.csv");
        write_transcript_csv(out, result.transcript);
    }
    {
        auto out = open_output(opts.out_dir / "hypervolume.csv");
        out << "generation,hypervolume\n";
        for (std::size_t g = 0; g < result.hypervolume.size(); ++g)
            out << g << ',' << format_real(result.hypervolume[g]) << '\n';
    }
    {
        std::vector<EvalPoint> explored;
        for (const auto& row : result.transcript) explored.push_back(row.fitness);
        auto out = open_output(opts.out_dir / "front.gnuplot");
        write_gnuplot_series(out, "baselines", baseline_points(s, s.split(cfg.fitness_split)));
        out << "\n\n";
        write_gnuplot_series(out, "explored", explored);
        out << "\n\n";
        write_gnuplot_series(out, "archive", archive_points);
    }

    log << "explored " << result.transcript.size() << " configurations over " << cfg.generations
        << " generations; archive holds " << result.archive.size() << " points";
    if (result.failures) log << "; " << result.failures << " trainings diverged";
    log << '\n';
    for (const auto& p : archive_points)
        log << "  " << p.tag << ": " << fixed2(100 * p.accuracy) << "% at " << fixed2(p.mflops_per_image)
            << " MFLOPs/image\n";

    manifest.parameters = {{"population", cfg.population},
                           {"generations", cfg.generations},
                           {"sbx_eta", cfg.sbx_eta},
                           {"crossover_prob", cfg.crossover_prob},
                           {"mutation_eta", cfg.mutation_eta},
                           {"mutation_prob", cfg.mutation_probability(num_models)},
                           {"penalty_step", cfg.penalty_step},
                           {"ens_beta", cfg.ens_beta},
                           {"workers", cfg.workers},
                           {"train_split", cfg.train_split},
                           {"fitness_split", cfg.fitness_split},
                           {"reuse_backbone", cfg.reuse_backbone},
                           {"train", train_config_json(opts.train)}};
    manifest.finished_at = utc_now();
    manifest.write(opts.out_dir);
    return result;
}

ReportFormat parse_report_format(const std::string& text) {
    if (text == "csv") return ReportFormat::CSV;
    if (text == "json") return ReportFormat::JSON;
    if (text == "gnuplot") return ReportFormat::Gnuplot;
    throw ValidationError("unknown report format \"" + text + "\" (expected csv, json or gnuplot)");
}

json eval_points_to_json(std::span<const EvalPoint> points) {
    json arr = json::array();
    for (const auto& p : points)
        arr.push_back({{"tag", p.tag}, {"accuracy", p.accuracy}, {"mflops_per_image", p.mflops_per_image}});
    return {{"points", arr}};
}

std::vector<EvalPoint> eval_points_from_json(const json& j) {
    std::vector<EvalPoint> points;
    try {
        for (const auto& p : j.at("points"))
            points.push_back({p.at("accuracy").get<Real>(), p.at("mflops_per_image").get<Real>(),
                              p.value("tag", std::string())});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed EvalPoint JSON: ") + e.what());
    }
    return points;
}

std::vector<EvalPoint> read_eval_points(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
        try {
            return eval_points_from_json(json::parse(text));
        } catch (const json::parse_error& e) {
            throw ValidationError("parse failure in " + path.string() + ": " + e.what());
        }
    }
    std::istringstream csv(text);
    return read_eval_csv(csv);
}

void write_gnuplot_series(std::ostream& out, const std::string& title, std::vector<EvalPoint> points) {
    std::stable_sort(points.begin(), points.end(), [](const EvalPoint& a, const EvalPoint& b) {
        return a.mflops_per_image < b.mflops_per_image;
    });
    out << "# " << title << "\n# mflops_per_image accuracy tag\n";
    for (const auto& p : points)
        out << format_real(p.mflops_per_image) << ' ' << format_real(p.accuracy) << ' '
            << (p.tag.empty() ? "-" : p.tag) << '\n';
}

void cmd_report(const fs::path& input, ReportFormat format, std::ostream& out) {
    const auto points = read_eval_points(input);
    switch (format) {
        case ReportFormat::CSV: write_eval_csv(out, points); break;
        case ReportFormat::JSON: out << eval_points_to_json(points).dump(2) << '\n'; break;
        case ReportFormat::Gnuplot: write_gnuplot_series(out, input.filename().string(), points); break;
    }
}

fs::path cmd_synth(const SynthOptions& opts, std::ostream& log) {
    Scenario s = generate_synthetic(opts.spec);
    if (opts.with_splits) s = split_scenario(std::move(s), kDefaultSplitFractions, opts.spec.seed);
    const auto manifest = write_scenario(s, opts.out_dir, opts.format);
    log << "wrote " << s.num_samples() << "-sample scenario to " << manifest.string() << '\n';
    return manifest;
}

std::vector<Real> parse_real_list(const std::string& text) {
    std::vector<Real> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("not a number: \"" + item + "\"");
        }
    }
    return values;
}

}  // namespace dsynth
