#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dsynth/oracle.hpp"
#include "dsynth/scenario.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dsynth;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("dsynth_test_scenario_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Writes a manifest for N=4, D=2 features (csv) and the given correctness text.
fs::path write_small(const fs::path& dir, const std::string& correctness, const nlohmann::json& models) {
    std::ofstream(dir / "features.csv") << "0.5,1\n-1,2\n3,0.25\n4,4\n";
    std::ofstream(dir / "correctness.csv") << correctness;
    nlohmann::json m;
    m["name"] = "small";
    m["extractor"] = {{"name", "ext"}, {"mflops_per_image", 1.0}, {"feature_dim", 2}};
    m["models"] = models;
    m["features"] = {{"path", "features.csv"}, {"format", "csv"}, {"rows", 4}, {"dim", 2}};
    m["correctness"] = {{"path", "correctness.csv"}, {"format", "csv"}};
    std::ofstream(dir / "manifest.json") << m.dump(2);
    return dir / "manifest.json";
}

const nlohmann::json kTwoModels = nlohmann::json::array({{{"name", "a"}, {"mflops_per_image", 1.0}},
                                                         {{"name", "b"}, {"mflops_per_image", 2.0}}});

}  // namespace

TEST_CASE("load_scenario: minimal consistent input") {
    const auto dir = scratch_dir("minimal");
    const auto s = load_scenario(write_small(dir, "1,0\n0,1\n1,1\n0,0\n", kTwoModels));
    CHECK(s.num_samples() == 4);
    CHECK(s.feature_dim() == 2);
    CHECK(s.num_models() == 2);
    CHECK(s.features(1, 0) == -1.0);
    CHECK(s.correctness(2, 1) == 1);
}

TEST_CASE("load_scenario: non-binary correctness is rejected") {
    const auto dir = scratch_dir("nonbinary");
    const auto path = write_small(dir, "1,0\n0,2\n1,1\n0,0\n", kTwoModels);
    CHECK_THROWS_WITH_AS(load_scenario(path), doctest::Contains("non-binary correctness"), ValidationError);
}

TEST_CASE("load_scenario: models are re-sorted by cost and columns follow") {
    const auto dir = scratch_dir("sorted");
    const nlohmann::json models = nlohmann::json::array({{{"name", "resnet20"}, {"mflops_per_image", 21.83}},
                                                         {{"name", "resnet8"}, {"mflops_per_image", 5.9}},
                                                         {{"name", "resnet14"}, {"mflops_per_image", 13.57}}});
    // Column order in the file: resnet20, resnet8, resnet14.
    const auto s = load_scenario(write_small(dir, "1,0,0\n1,0,0\n1,0,1\n0,1,0\n", models));
    REQUIRE(s.num_models() == 3);
    CHECK(s.models[0].cost_mflops == 5.9);
    CHECK(s.models[1].cost_mflops == 13.57);
    CHECK(s.models[2].cost_mflops == 21.83);
    CHECK(s.original_order == std::vector<std::size_t>{1, 2, 0});
    CHECK(s.correctness(0, 2) == 1);  // resnet20 column moved last
    CHECK(s.correctness(3, 0) == 1);  // resnet8 column moved first
    CHECK(s.correctness(2, 1) == 1);
}

TEST_CASE("load_scenario: contract violations") {
    const auto dir = scratch_dir("errors");
    SUBCASE("missing manifest") { CHECK_THROWS_AS(load_scenario(dir / "nope.json"), ValidationError); }
    SUBCASE("row mismatch") {
        CHECK_THROWS_WITH_AS(load_scenario(write_small(dir, "1,0\n0,1\n1,1\n", kTwoModels)),
                             doctest::Contains("dimension mismatch"), ValidationError);
    }
    SUBCASE("duplicate name") {
        const nlohmann::json models = nlohmann::json::array({{{"name", "a"}, {"mflops_per_image", 1.0}},
                                                             {{"name", "a"}, {"mflops_per_image", 2.0}}});
        CHECK_THROWS_WITH_AS(load_scenario(write_small(dir, "1,0\n0,1\n1,1\n0,0\n", models)),
                             doctest::Contains("duplicate model name"), ValidationError);
    }
    SUBCASE("single model") {
        const nlohmann::json models = nlohmann::json::array({{{"name", "a"}, {"mflops_per_image", 1.0}}});
        CHECK_THROWS_WITH_AS(load_scenario(write_small(dir, "1\n0\n1\n0\n", models)), doctest::Contains("K < 2"),
                             ValidationError);
    }
    SUBCASE("non-finite feature") {
        const auto path = write_small(dir, "1,0\n0,1\n1,1\n0,0\n", kTwoModels);
        std::ofstream(dir / "features.csv") << "0.5,1\n-1,nan\n3,0.25\n4,4\n";
        CHECK_THROWS_WITH_AS(load_scenario(path), doctest::Contains("non-finite"), ValidationError);
    }
    SUBCASE("malformed json") {
        std::ofstream(dir / "bad.json") << "{ not json";
        CHECK_THROWS_AS(load_scenario(dir / "bad.json"), ValidationError);
    }
}

TEST_CASE("validate_scenario: well-formed scenario has no violations") {
    SyntheticSpec spec;
    spec.num_samples = 200;
    auto s = split_scenario(generate_synthetic(spec), kDefaultSplitFractions, 1);
    const auto report = validate_scenario(s);
    CHECK(report.violations.empty());
}

TEST_CASE("validate_scenario: weaker-than-backbone model triggers advisory") {
    Scenario s;
    s.features = Matrix::Zero(20, 2);
    s.extractor = {"ext", 1.0, 2};
    s.correctness = BitMatrix::Zero(20, 2);
    // model 0: 12/20 = 60% correct; model 1 (the backbone): 17/20 = 85%.
    for (int r = 0; r < 12; ++r) s.correctness(r, 0) = 1;
    for (int r = 3; r < 20; ++r) s.correctness(r, 1) = 1;
    s.models = {{"small", 1.0, false, std::nullopt}, {"backbone", 2.0, true, std::nullopt}};
    const auto report = validate_scenario(s);
    CHECK(report.violations.empty());
    REQUIRE_FALSE(report.warnings.empty());
    CHECK(report.warnings.front().find("below extractor backbone") != std::string::npos);
}

TEST_CASE("validate_scenario: overlapping splits and imbalance") {
    Scenario s;
    s.features = Matrix::Zero(10, 1);
    s.extractor = {"ext", 0.0, 1};
    s.correctness = BitMatrix::Ones(10, 2);
    s.models = {{"a", 1.0, false, std::nullopt}, {"b", 2.0, false, std::nullopt}};
    s.splits["train"] = {0, 1, 2, 3};
    s.splits["test"] = {3, 4};
    auto report = validate_scenario(s);
    CHECK(std::find(report.violations.begin(), report.violations.end(), "splits not disjoint") !=
          report.violations.end());

    s.splits["test"] = {4, 5};
    report = validate_scenario(s);
    CHECK(report.ok());
    // Every row has oracle label 0: 100% majority.
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("imbalance") != std::string::npos);
}

TEST_CASE("generate_synthetic: noiseless correctness is nested") {
    SyntheticSpec spec;
    spec.num_samples = 500;
    spec.num_models = 4;
    spec.costs = {1, 2, 3, 4};
    spec.tier_fractions = {0.5, 0.2, 0.1, 0.1};
    const auto s = generate_synthetic(spec);
    for (Eigen::Index r = 0; r < s.correctness.rows(); ++r)
        for (Eigen::Index k = 0; k + 1 < s.correctness.cols(); ++k)
            CHECK(s.correctness(r, k + 1) >= s.correctness(r, k));
    // Tier fractions are realized exactly; 10% are hopeless.
    const auto labels = oracle_relabel(s.correctness);
    CHECK((s.correctness.rowwise().maxCoeff().array() == 0).count() == 50);
    CHECK(s.correctness.col(0).cast<int>().sum() == 250);
    CHECK(s.correctness.col(3).cast<int>().sum() == 450);
}

TEST_CASE("generate_synthetic: determinism and full flip") {
    SyntheticSpec spec;
    spec.num_samples = 100;
    spec.seed = 99;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.features == b.features);
    CHECK(a.correctness == b.correctness);

    auto flipped_spec = spec;
    flipped_spec.noise_rate = 1.0;
    const auto f = generate_synthetic(flipped_spec);
    CHECK(f.features == a.features);
    CHECK(((f.correctness.array() + a.correctness.array()) == 1).all());

    spec.seed = 100;
    CHECK_FALSE(generate_synthetic(spec).features == a.features);
}

TEST_CASE("generate_synthetic: rejects bad specs") {
    SyntheticSpec spec;
    spec.costs = {5, 5, 40};
    CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
    spec.costs = {5, 15, 40};
    spec.noise_rate = 1.5;
    CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
}

TEST_CASE("split_scenario") {
    SyntheticSpec spec;
    spec.num_samples = 10;
    const auto base = generate_synthetic(spec);
    const auto s = split_scenario(base, {0.8, 0.1, 0.1}, 3);
    CHECK(s.split("train").size() == 8);
    CHECK(s.split("val").size() == 1);
    CHECK(s.split("test").size() == 1);
    CHECK(validate_scenario(s).ok());

    const auto again = split_scenario(base, {0.8, 0.1, 0.1}, 3);
    CHECK(again.splits == s.splits);

    CHECK_THROWS_AS(split_scenario(base, {0.5, 0.5, 0.5}, 3), ValidationError);
    CHECK_THROWS_AS(split_scenario(base, {1.0, 0.0, 0.0}, 3), ValidationError);
    CHECK_THROWS_WITH_AS(s.split("holdout"), doctest::Contains("unknown split"), ValidationError);
}

TEST_CASE("write_scenario/load_scenario round trip keeps feature and correctness bytes") {
    SyntheticSpec spec;
    spec.num_samples = 64;
    spec.seed = 5;
    auto s = split_scenario(generate_synthetic(spec), kDefaultSplitFractions, 5);
    const auto dir1 = scratch_dir("roundtrip1");
    const auto dir2 = scratch_dir("roundtrip2");
    const auto loaded = load_scenario(write_scenario(s, dir1));
    write_scenario(loaded, dir2);
    CHECK(slurp(dir1 / "features.f32") == slurp(dir2 / "features.f32"));
    CHECK(slurp(dir1 / "correctness.csv") == slurp(dir2 / "correctness.csv"));
    CHECK(slurp(dir1 / "features.f32").size() == 64 * 16 * 4);
    CHECK(loaded.splits == s.splits);
    CHECK(loaded.correctness == s.correctness);

    const auto dir3 = scratch_dir("roundtrip_csv");
    const auto from_csv = load_scenario(write_scenario(s, dir3, FeatureFormat::CSV));
    CHECK(from_csv.features == s.features);
}

TEST_CASE("load_scenario: truncated f32 payload") {
    SyntheticSpec spec;
    spec.num_samples = 8;
    const auto dir = scratch_dir("truncated");
    const auto manifest = write_scenario(generate_synthetic(spec), dir);
    fs::resize_file(dir / "features.f32", 8 * 16 * 4 - 4);
    CHECK_THROWS_WITH_AS(load_scenario(manifest), doctest::Contains("dimension mismatch"), ValidationError);
}
