// dsynth: dispatcher synthesis command line.
//
//   dsynth analyze  --scenario m.json [--out-dir d]
//   dsynth validate --scenario m.json
//   dsynth train    --scenario m.json --penalties 10,0.001 [--scheme INS] [--seed s]
//   dsynth explore  --scenario m.json [--pop 50] [--gens 50] [--seed s] [--workers n]
//   dsynth report   --input archive.csv --format csv|json|gnuplot
//   dsynth synth    --out-dir d [--samples n] [--models k] [--dim d] [--costs ...]

#include "dsynth/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_train_flags(CLI::App* cmd, dsynth::TrainConfig& train) {
    cmd->add_option("--epochs", train.epochs, "Training epochs per head")->capture_default_str();
    cmd->add_option("--batch-size", train.batch_size, "Mini-batch size")->capture_default_str();
    cmd->add_option("--lr", train.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--momentum", train.momentum, "Momentum")->capture_default_str();
    cmd->add_option("--warmup-epochs", train.warmup_epochs,
                    "Leading epochs where correctly dispatched samples also contribute")
        ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    using namespace dsynth;

    CLI::App app{"Dispatcher synthesis: train input dispatchers over pre-trained models and "
                 "explore accuracy/MFLOPs trade-offs with NSGA-II"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string scenario;
    std::string out_dir = ".";

    auto* analyze = app.add_subcommand("analyze", "Ideal-dispatcher analysis of a scenario");
    analyze->add_option("--scenario", scenario, "Scenario manifest (JSON)")->required();
    analyze->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

    auto* validate = app.add_subcommand("validate", "Validate a scenario and print findings");
    validate->add_option("--scenario", scenario, "Scenario manifest (JSON)")->required();

    TrainOptions train_opts;
    std::string penalties;
    auto* train = app.add_subcommand("train", "Train and evaluate one dispatcher head");
    train->add_option("--scenario", scenario, "Scenario manifest (JSON)")->required();
    train->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    train->add_option("--penalties", penalties, "Comma-separated off-diagonal (K(K-1)) or full (K*K) penalties")
        ->required();
    train->add_option("--scheme", train_opts.scheme, "Class weighting: INS, ISNS or ENS")->capture_default_str();
    train->add_option("--ens-beta", train_opts.ens_beta, "ENS beta")->capture_default_str();
    train->add_option("--seed", train_opts.seed, "Seed")->capture_default_str();
    train->add_option("--fitness-split", train_opts.fitness_split, "Evaluation split")
        ->check(CLI::IsMember({"test", "val"}))
        ->capture_default_str();
    add_train_flags(train, train_opts.train);

    ExploreOptions explore_opts;
    auto& moea = explore_opts.moea;
    Real mutation_prob = -1;
    auto* explore = app.add_subcommand("explore", "NSGA-II exploration over penalties and weighting schemes");
    explore->add_option("--scenario", scenario, "Scenario manifest (JSON)")->required();
    explore->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    explore->add_option("--seed", moea.seed, "Master seed")->capture_default_str();
    explore->add_option("--pop", moea.population, "Population size")->capture_default_str();
    explore->add_option("--gens", moea.generations, "Generations")->capture_default_str();
    explore->add_option("--workers", moea.workers, "Parallel fitness evaluations")->capture_default_str();
    explore->add_option("--fitness-split", moea.fitness_split, "Split used for fitness")
        ->check(CLI::IsMember({"test", "val"}))
        ->capture_default_str();
    explore->add_option("--penalty-step", moea.penalty_step, "Penalty quantization step in [0.5,1]")
        ->capture_default_str();
    explore->add_option("--ens-beta", moea.ens_beta, "ENS beta")->capture_default_str();
    explore->add_option("--sbx-eta", moea.sbx_eta, "SBX distribution index")->capture_default_str();
    explore->add_option("--crossover-prob", moea.crossover_prob, "Crossover probability")->capture_default_str();
    explore->add_option("--mutation-eta", moea.mutation_eta, "Polynomial mutation index")->capture_default_str();
    explore->add_option("--mutation-prob", mutation_prob, "Per-gene mutation probability (default 1/(K^2+1))");
    explore->add_flag("--reuse-backbone", moea.reuse_backbone, "Cost the backbone model by its residual only");
    add_train_flags(explore, explore_opts.train);

    std::string report_input;
    std::string report_format = "csv";
    auto* report = app.add_subcommand("report", "Convert an EvalPoint file between csv, json and gnuplot");
    report->add_option("--input", report_input, "EvalPoint CSV or JSON file")->required();
    report->add_option("--format", report_format, "Output format")
        ->check(CLI::IsMember({"csv", "json", "gnuplot"}))
        ->capture_default_str();

    SynthOptions synth_opts;
    auto& spec = synth_opts.spec;
    std::string feature_format = "f32le";
    auto* synth = app.add_subcommand("synth", "Write a synthetic scenario");
    synth->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    synth->add_option("--samples", spec.num_samples)->capture_default_str();
    synth->add_option("--models", spec.num_models)->capture_default_str();
    synth->add_option("--dim", spec.feature_dim)->capture_default_str();
    synth->add_option("--costs", spec.costs, "Ascending model costs (MFLOPs)")->delimiter(',');
    synth->add_option("--tiers", spec.tier_fractions, "Fraction of samples needing each model")->delimiter(',');
    synth->add_option("--separation", spec.cluster_separation)->capture_default_str();
    synth->add_option("--noise", spec.noise_rate, "Correctness flip probability")->capture_default_str();
    synth->add_option("--extractor-mflops", spec.extractor_mflops)->capture_default_str();
    synth->add_option("--seed", spec.seed)->capture_default_str();
    synth->add_option("--feature-format", feature_format)->check(CLI::IsMember({"f32le", "csv"}))->capture_default_str();
    synth->add_flag("!--no-splits", synth_opts.with_splits, "Do not write train/val/test splits");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (analyze->parsed()) {
            cmd_analyze({scenario, out_dir}, std::cout);
        } else if (validate->parsed()) {
            const auto s = load_scenario(scenario);
            const auto findings = validate_scenario(s);
            std::cout << "scenario " << s.name << " is valid: " << s.num_samples() << " samples, "
                      << s.num_models() << " models, " << s.feature_dim() << " features\n";
            for (const auto& w : findings.warnings) std::cout << "warning: " << w << '\n';
        } else if (train->parsed()) {
            train_opts.scenario = scenario;
            train_opts.out_dir = out_dir;
            train_opts.penalties = parse_real_list(penalties);
            cmd_train(train_opts, std::cout);
        } else if (explore->parsed()) {
            explore_opts.scenario = scenario;
            explore_opts.out_dir = out_dir;
            if (mutation_prob >= 0) moea.mutation_prob = mutation_prob;
            cmd_explore(explore_opts, std::cout);
        } else if (report->parsed()) {
            cmd_report(report_input, parse_report_format(report_format), std::cout);
        } else if (synth->parsed()) {
            if (spec.costs.size() != spec.num_models) {
                if (synth->count("--costs"))
                    throw ValidationError("--costs needs exactly --models values");
                spec.costs.clear();
                for (std::size_t k = 0; k < spec.num_models; ++k) spec.costs.push_back(5.0 * static_cast<Real>(1u << k));
            }
            synth_opts.out_dir = out_dir;
            synth_opts.format = feature_format == "csv" ? FeatureFormat::CSV : FeatureFormat::F32LE;
            cmd_synth(synth_opts, std::cout);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
