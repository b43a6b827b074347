// Scenario builders shared by the command-level tests and the acceptance suite.
#ifndef DSYNTH_TESTS_FIXTURES_HPP
#define DSYNTH_TESTS_FIXTURES_HPP

#include "dsynth/scenario.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace fixture {

// The correctness-combination table with costs 5.9/13.57/21.83 and noise features.
inline dsynth::Scenario resnet_scenario() {
    dsynth::Scenario s;
    s.name = "resnet-cifar10";
    s.correctness = oracle::resnet_combination_matrix();
    s.features.resize(s.correctness.rows(), 4);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (Eigen::Index i = 0; i < s.features.size(); ++i) s.features.data()[i] = g(rng);
    s.models = {{"resnet8", 5.9, false, {}}, {"resnet14", 13.57, false, {}}, {"resnet20", 21.83, false, {}}};
    s.original_order = {0, 1, 2};
    s.extractor = {"resnet8-features", 0.0, 4};
    return s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("dsynth-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixture

#endif  // DSYNTH_TESTS_FIXTURES_HPP
