#ifndef DSYNTH_COMMANDS_HPP
#define DSYNTH_COMMANDS_HPP

#include "dsynth/dispatch_head.hpp"
#include "dsynth/moea.hpp"
#include "dsynth/scenario.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dsynth {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitStatus : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Everything needed to re-run a command; written next to its outputs.
struct RunManifest {
    std::string command;
    std::filesystem::path scenario;
    nlohmann::json parameters = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::string started_at;
    std::string finished_at;

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& out_dir) const;
};

// Loads a scenario; one without splits gets the default 0.8/0.1/0.1 partition from `seed`.
Scenario prepare_scenario(const std::filesystem::path& manifest, std::uint64_t seed);

struct AnalyzeOptions {
    std::filesystem::path scenario;
    std::filesystem::path out_dir = ".";
};

// Writes analysis.json (histogram, label distribution, ideal metrics, baselines)
// and prints a rounded summary table to `log`. Returns the report.
nlohmann::json cmd_analyze(const AnalyzeOptions& opts, std::ostream& log);

struct TrainOptions {
    std::filesystem::path scenario;
    std::filesystem::path out_dir = ".";
    std::vector<Real> penalties;  // K(K-1) off-diagonal or K*K, row-major
    std::string scheme = "INS";
    Real ens_beta = 0.999;
    std::string fitness_split = "test";
    std::uint64_t seed = 0;
    TrainConfig train;
};

struct TrainOutcome {
    DispatchHead<Real> initial_head;
    DispatchHead<Real> head;
    TrainHistory<Real> history;
    EvalPoint point;
};

// Trains one head; writes head.json, eval.csv and history.csv.
TrainOutcome cmd_train(const TrainOptions& opts, std::ostream& log);

struct ExploreOptions {
    std::filesystem::path scenario;
    std::filesystem::path out_dir = ".";
    MoeaConfig moea;
    TrainConfig train;
};

// Runs NSGA-II; writes archive.csv, archive_penalties.json, transcript.csv,
// hypervolume.csv and front.gnuplot.
MoeaResult cmd_explore(const ExploreOptions& opts, std::ostream& log);

enum class ReportFormat { CSV, JSON, Gnuplot };
ReportFormat parse_report_format(const std::string& text);

// Reads an EvalPoint file (CSV or JSON, detected from content) and writes it in `format`.
void cmd_report(const std::filesystem::path& input, ReportFormat format, std::ostream& out);

std::vector<EvalPoint> read_eval_points(const std::filesystem::path& path);
nlohmann::json eval_points_to_json(std::span<const EvalPoint> points);
std::vector<EvalPoint> eval_points_from_json(const nlohmann::json& j);
// Rows "mflops accuracy tag", sorted by mflops ascending.
void write_gnuplot_series(std::ostream& out, const std::string& title, std::vector<EvalPoint> points);

struct SynthOptions {
    SyntheticSpec spec;
    std::filesystem::path out_dir = ".";
    bool with_splits = true;
    FeatureFormat format = FeatureFormat::F32LE;
};

std::filesystem::path cmd_synth(const SynthOptions& opts, std::ostream& log);

std::vector<Real> parse_real_list(const std::string& text);

}  // namespace dsynth

#endif  // DSYNTH_COMMANDS_HPP
