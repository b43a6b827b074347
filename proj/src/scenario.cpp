#include "dsynth/scenario.hpp"

#include "dsynth/oracle.hpp"
#include "dsynth/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace dsynth {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Real> Scenario::model_costs() const {
    std::vector<Real> costs;
    costs.reserve(models.size());
    for (const auto& m : models) costs.push_back(m.cost_mflops);
    return costs;
}

std::optional<std::size_t> Scenario::backbone_index() const {
    for (std::size_t k = 0; k < models.size(); ++k)
        if (models[k].is_extractor_backbone) return k;
    return std::nullopt;
}

const IndexList& Scenario::split(const std::string& split_name) const {
    auto it = splits.find(split_name);
    if (it == splits.end()) throw ValidationError("unknown split \"" + split_name + "\"");
    return it->second;
}

namespace {

void check_splits(const Scenario& s, ValidationReport& report) {
    const auto n = s.num_samples();
    std::vector<int> owner(n, -1);
    bool overlap = false;
    int split_id = 0;
    for (const auto& [split_name, indices] : s.splits) {
        for (auto idx : indices) {
            if (idx >= n) {
                report.violations.push_back("split \"" + split_name + "\" index " +
                                            std::to_string(idx) + " out of range");
                continue;
            }
            if (owner[idx] != -1) overlap = true;
            owner[idx] = split_id;
        }
        ++split_id;
    }
    if (overlap) report.violations.emplace_back("splits not disjoint");
}

// Rows used for the accuracy advisory: the test split when present, all rows otherwise.
IndexList advisory_rows(const Scenario& s) {
    if (auto it = s.splits.find("test"); it != s.splits.end() && !it->second.empty()) {
        IndexList rows;
        for (auto idx : it->second)
            if (idx < s.num_samples()) rows.push_back(idx);
        if (!rows.empty()) return rows;
    }
    IndexList rows(s.num_samples());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace

ValidationReport validate_scenario(const Scenario& s) {
    ValidationReport report;
    auto& v = report.violations;

    const auto num_models = s.models.size();
    if (num_models < 2) v.emplace_back("at least 2 models required (K < 2)");
    if (static_cast<std::size_t>(s.correctness.cols()) != num_models)
        v.emplace_back("correctness has " + std::to_string(s.correctness.cols()) +
                       " columns but " + std::to_string(num_models) + " models are declared");
    if (s.features.rows() != s.correctness.rows())
        v.emplace_back("dimension mismatch: " + std::to_string(s.features.rows()) +
                       " feature rows vs " + std::to_string(s.correctness.rows()) +
                       " correctness rows");
    if (s.extractor.feature_dim < 1) v.emplace_back("extractor feature_dim must be >= 1");
    if (static_cast<std::size_t>(s.features.cols()) != s.extractor.feature_dim)
        v.emplace_back("dimension mismatch: features have " + std::to_string(s.features.cols()) +
                       " columns, extractor declares " + std::to_string(s.extractor.feature_dim));
    if (!(s.extractor.cost_mflops >= 0) || !std::isfinite(s.extractor.cost_mflops))
        v.emplace_back("extractor cost must be a finite nonnegative number");

    if (!s.features.allFinite()) v.emplace_back("non-finite feature value");
    if ((s.correctness.array() > 1).any()) v.emplace_back("non-binary correctness entry");

    std::set<std::string> names;
    for (std::size_t k = 0; k < num_models; ++k) {
        const auto& m = s.models[k];
        if (!names.insert(m.name).second) v.push_back("duplicate model name \"" + m.name + "\"");
        if (!(m.cost_mflops > 0) || !std::isfinite(m.cost_mflops))
            v.push_back("model \"" + m.name + "\" cost must be positive");
        if (k > 0 && m.cost_mflops < s.models[k - 1].cost_mflops)
            v.emplace_back("models not sorted by ascending cost");
        if (k > 0 && m.cost_mflops == s.models[k - 1].cost_mflops)
            report.warnings.push_back("models \"" + s.models[k - 1].name + "\" and \"" + m.name +
                                      "\" have equal cost; the first one wins oracle ties");
    }
    check_splits(s, report);

    if (!report.ok()) return report;

    // Advisory (a): dispatch targets less accurate than the extractor's own backbone.
    if (auto backbone = s.backbone_index(); backbone && s.num_samples() > 0) {
        const auto rows = advisory_rows(s);
        auto rate = [&](std::size_t k) {
            std::size_t hits = 0;
            for (auto r : rows) hits += s.correctness(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
            return static_cast<Real>(hits) / static_cast<Real>(rows.size());
        };
        const Real backbone_rate = rate(*backbone);
        for (std::size_t k = 0; k < num_models; ++k) {
            if (k == *backbone) continue;
            const Real r = rate(k);
            if (r < backbone_rate) {
                std::ostringstream os;
                os << "model \"" << s.models[k].name << "\" accuracy " << r
                   << " is below extractor backbone \"" << s.models[*backbone].name << "\" accuracy "
                   << backbone_rate << "; dispatching to it is never useful";
                report.warnings.push_back(os.str());
            }
        }
    }

    // Advisory (b): severe imbalance of oracle labels.
    if (s.num_samples() > 0) {
        const auto labels = oracle_relabel(s.correctness);
        const auto dist = label_distribution(labels, num_models);
        const auto majority = std::max_element(dist.begin(), dist.end());
        if (*majority > 0.9) {
            std::ostringstream os;
            os << "severe oracle-label imbalance: class " << (majority - dist.begin()) << " holds "
               << *majority * 100.0 << "% of samples";
            report.warnings.push_back(os.str());
        }
    }
    return report;
}

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    return cells;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        rows.push_back(split_line(line));
    }
    return rows;
}

Matrix read_features_f32(const fs::path& path, std::size_t rows, std::size_t dim) {
    const std::string bytes = read_text(path);
    const std::size_t expected = rows * dim * sizeof(float);
    if (bytes.size() != expected)
        throw ValidationError("dimension mismatch: " + path.string() + " holds " +
                              std::to_string(bytes.size()) + " bytes, manifest implies " +
                              std::to_string(expected));
    Matrix features(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows * dim; ++i) {
        std::uint32_t word;
        std::memcpy(&word, bytes.data() + i * sizeof(float), sizeof(word));
        if constexpr (std::endian::native == std::endian::big) word = __builtin_bswap32(word);
        features.data()[i] = static_cast<Real>(std::bit_cast<float>(word));
    }
    return features;
}

Matrix read_features_csv(const fs::path& path, std::size_t rows, std::size_t dim) {
    const auto cells = read_csv(path);
    if (cells.size() != rows)
        throw ValidationError("dimension mismatch: " + path.string() + " has " +
                              std::to_string(cells.size()) + " rows, manifest declares " +
                              std::to_string(rows));
    Matrix features(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows; ++r) {
        if (cells[r].size() != dim)
            throw ValidationError("dimension mismatch: feature row " + std::to_string(r) + " has " +
                                  std::to_string(cells[r].size()) + " values, expected " +
                                  std::to_string(dim));
        for (std::size_t c = 0; c < dim; ++c) {
            try {
                features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    std::stod(cells[r][c]);
            } catch (const std::exception&) {
                throw ValidationError("unparsable feature value \"" + cells[r][c] + "\" at row " +
                                      std::to_string(r));
            }
        }
    }
    return features;
}

BitMatrix read_correctness(const fs::path& path, std::size_t num_models) {
    const auto cells = read_csv(path);
    BitMatrix c(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(num_models));
    for (std::size_t r = 0; r < cells.size(); ++r) {
        if (cells[r].size() != num_models)
            throw ValidationError("dimension mismatch: correctness row " + std::to_string(r) +
                                  " has " + std::to_string(cells[r].size()) + " columns, expected " +
                                  std::to_string(num_models));
        for (std::size_t k = 0; k < num_models; ++k) {
            const auto& cell = cells[r][k];
            if (cell != "0" && cell != "1")
                throw ValidationError("non-binary correctness entry \"" + cell + "\" at row " +
                                      std::to_string(r));
            c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = cell == "1" ? 1 : 0;
        }
    }
    return c;
}

template <typename T>
T require(const json& j, const char* key, const char* context) {
    if (!j.contains(key))
        throw ValidationError(std::string("manifest ") + context + " is missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest ") + context + "." + key + ": " + e.what());
    }
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) out += (out.empty() ? "" : "; ") + item;
    return out;
}

}  // namespace

namespace {

Scenario load_scenario_unchecked(const fs::path& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(read_text(manifest_path));
    } catch (const json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const fs::path base = manifest_path.parent_path();

    Scenario s;
    s.name = manifest.value("name", manifest_path.stem().string());

    const auto& ext = manifest.at("extractor");
    s.extractor.name = require<std::string>(ext, "name", "extractor");
    s.extractor.cost_mflops = require<Real>(ext, "mflops_per_image", "extractor");
    s.extractor.feature_dim = require<std::size_t>(ext, "feature_dim", "extractor");

    if (!manifest.contains("models") || !manifest["models"].is_array())
        throw ValidationError("manifest is missing the \"models\" list");
    std::vector<ModelProfile> declared;
    for (const auto& m : manifest["models"]) {
        ModelProfile p;
        p.name = require<std::string>(m, "name", "model");
        p.cost_mflops = require<Real>(m, "mflops_per_image", "model");
        p.is_extractor_backbone = m.value("extractor_backbone", p.name == s.extractor.name);
        if (m.contains("residual_mflops_per_image"))
            p.residual_mflops = m["residual_mflops_per_image"].get<Real>();
        declared.push_back(std::move(p));
    }

    const auto& feat = manifest.at("features");
    const auto rows = require<std::size_t>(feat, "rows", "features");
    const auto dim = require<std::size_t>(feat, "dim", "features");
    if (dim != s.extractor.feature_dim)
        throw ValidationError("dimension mismatch: features.dim " + std::to_string(dim) +
                              " vs extractor.feature_dim " + std::to_string(s.extractor.feature_dim));
    const auto feat_format = feat.value("format", std::string("f32le"));
    const fs::path feat_path = base / require<std::string>(feat, "path", "features");
    if (feat_format == "f32le")
        s.features = read_features_f32(feat_path, rows, dim);
    else if (feat_format == "csv")
        s.features = read_features_csv(feat_path, rows, dim);
    else
        throw ValidationError("unknown feature format \"" + feat_format + "\"");

    const auto& corr = manifest.at("correctness");
    const auto corr_format = corr.value("format", std::string("csv"));
    if (corr_format != "csv") throw ValidationError("unknown correctness format \"" + corr_format + "\"");
    const BitMatrix declared_correctness =
        read_correctness(base / require<std::string>(corr, "path", "correctness"), declared.size());
    if (static_cast<std::size_t>(declared_correctness.rows()) != rows)
        throw ValidationError("dimension mismatch: correctness has " +
                              std::to_string(declared_correctness.rows()) + " rows, manifest declares " +
                              std::to_string(rows));

    // Stable ascending cost order; columns follow their models.
    s.original_order.resize(declared.size());
    std::iota(s.original_order.begin(), s.original_order.end(), std::size_t{0});
    std::stable_sort(s.original_order.begin(), s.original_order.end(), [&](auto a, auto b) {
        return declared[a].cost_mflops < declared[b].cost_mflops;
    });
    s.correctness.resize(declared_correctness.rows(), declared_correctness.cols());
    for (std::size_t k = 0; k < declared.size(); ++k) {
        s.models.push_back(declared[s.original_order[k]]);
        s.correctness.col(static_cast<Eigen::Index>(k)) =
            declared_correctness.col(static_cast<Eigen::Index>(s.original_order[k]));
    }

    if (manifest.contains("splits")) {
        for (const auto& [split_name, indices] : manifest["splits"].items())
            s.splits[split_name] = indices.get<IndexList>();
    }

    return s;
}

}  // namespace

Scenario load_scenario(const fs::path& manifest_path) {
    Scenario s;
    try {
        s = load_scenario_unchecked(manifest_path);
    } catch (const json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const auto report = validate_scenario(s);
    if (!report.ok()) throw ValidationError("invalid scenario: " + join(report.violations));
    return s;
}

fs::path write_scenario(const Scenario& s, const fs::path& dir, FeatureFormat format) {
    fs::create_directories(dir);
    const auto rows = static_cast<std::size_t>(s.features.rows());
    const auto dim = static_cast<std::size_t>(s.features.cols());

    json manifest;
    manifest["name"] = s.name;
    manifest["extractor"] = {{"name", s.extractor.name},
                             {"mflops_per_image", s.extractor.cost_mflops},
                             {"feature_dim", s.extractor.feature_dim}};
    manifest["models"] = json::array();
    for (const auto& m : s.models) {
        json entry{{"name", m.name}, {"mflops_per_image", m.cost_mflops}};
        if (m.is_extractor_backbone) entry["extractor_backbone"] = true;
        if (m.residual_mflops) entry["residual_mflops_per_image"] = *m.residual_mflops;
        manifest["models"].push_back(entry);
    }

    if (format == FeatureFormat::F32LE) {
        std::ofstream out(dir / "features.f32", std::ios::binary);
        for (std::size_t i = 0; i < rows * dim; ++i) {
            auto word = std::bit_cast<std::uint32_t>(static_cast<float>(s.features.data()[i]));
            if constexpr (std::endian::native == std::endian::big) word = __builtin_bswap32(word);
            out.write(reinterpret_cast<const char*>(&word), sizeof(word));
        }
        if (!out) throw RuntimeError("failed writing " + (dir / "features.f32").string());
        manifest["features"] = {{"path", "features.f32"}, {"format", "f32le"}, {"rows", rows}, {"dim", dim}};
    } else {
        std::ofstream out(dir / "features.csv");
        out.precision(17);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < dim; ++c)
                out << (c ? "," : "") << s.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            out << '\n';
        }
        manifest["features"] = {{"path", "features.csv"}, {"format", "csv"}, {"rows", rows}, {"dim", dim}};
    }

    {
        std::ofstream out(dir / "correctness.csv");
        for (Eigen::Index r = 0; r < s.correctness.rows(); ++r) {
            for (Eigen::Index k = 0; k < s.correctness.cols(); ++k)
                out << (k ? "," : "") << static_cast<int>(s.correctness(r, k));
            out << '\n';
        }
        if (!out) throw RuntimeError("failed writing " + (dir / "correctness.csv").string());
    }
    manifest["correctness"] = {{"path", "correctness.csv"}, {"format", "csv"}};
    if (!s.splits.empty()) {
        manifest["splits"] = json::object();
        for (const auto& [split_name, indices] : s.splits) manifest["splits"][split_name] = indices;
    }

    const fs::path manifest_path = dir / "manifest.json";
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << '\n';
    if (!out) throw RuntimeError("failed writing " + manifest_path.string());
    return manifest_path;
}

Scenario generate_synthetic(const SyntheticSpec& spec) {
    const auto num_models = spec.num_models;
    if (num_models < 2) throw ValidationError("synthetic scenario needs at least 2 models");
    if (spec.costs.size() != num_models) throw ValidationError("costs length must equal num_models");
    for (std::size_t k = 0; k < num_models; ++k) {
        if (!(spec.costs[k] > 0)) throw ValidationError("costs must be positive");
        if (k > 0 && !(spec.costs[k] > spec.costs[k - 1]))
            throw ValidationError("costs must be strictly ascending");
    }
    if (!(spec.noise_rate >= 0 && spec.noise_rate <= 1)) throw ValidationError("noise_rate must be in [0,1]");
    if (spec.feature_dim < 1) throw ValidationError("feature_dim must be >= 1");
    if (!(spec.cluster_separation >= 0)) throw ValidationError("cluster_separation must be >= 0");

    std::vector<Real> tiers = spec.tier_fractions;
    if (tiers.empty()) {
        Real w = 1.0;
        for (std::size_t k = 0; k < num_models; ++k, w /= 3.0) tiers.push_back(w);
        const Real total = std::accumulate(tiers.begin(), tiers.end(), 0.0);
        for (auto& t : tiers) t /= total;
    }
    if (tiers.size() != num_models) throw ValidationError("tier_fractions length must equal num_models");
    const Real tier_total = std::accumulate(tiers.begin(), tiers.end(), 0.0);
    if (std::any_of(tiers.begin(), tiers.end(), [](Real t) { return t < 0; }) || tier_total > 1.0 + 1e-12)
        throw ValidationError("tier_fractions must be nonnegative and sum to at most 1");

    Rng rng(spec.seed);
    // Separate stream so that features do not depend on noise_rate.
    Rng noise_rng(splitmix64(spec.seed ^ 0x6E6F697365ULL));
    std::normal_distribution<Real> gauss(0.0, 1.0);
    const auto dim = spec.feature_dim;
    const auto rows = spec.num_samples;

    // Pairwise distance between centers is exactly cluster_separation.
    Matrix centers = Matrix::Zero(static_cast<Eigen::Index>(num_models), static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < num_models; ++k) {
        if (dim >= num_models)
            centers(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) =
                spec.cluster_separation / std::sqrt(2.0);
        else
            centers(static_cast<Eigen::Index>(k), 0) = spec.cluster_separation * static_cast<Real>(k);
    }

    // Tier k needs model k; value num_models marks hopeless samples.
    std::vector<std::size_t> tier_of(rows);
    {
        std::size_t n = 0;
        Real cumulative = 0;
        for (std::size_t k = 0; k < num_models; ++k) {
            cumulative += tiers[k];
            const auto end = std::min(rows, static_cast<std::size_t>(std::llround(cumulative * static_cast<Real>(rows))));
            for (; n < end; ++n) tier_of[n] = k;
        }
        for (; n < rows; ++n) tier_of[n] = num_models;
        std::shuffle(tier_of.begin(), tier_of.end(), rng);
    }

    Scenario s;
    s.name = "synthetic";
    s.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    s.correctness.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(num_models));
    for (std::size_t n = 0; n < rows; ++n) {
        const auto r = static_cast<Eigen::Index>(n);
        // Hopeless samples sit with the cheapest tier, where the oracle sends them.
        const auto center = static_cast<Eigen::Index>(tier_of[n] == num_models ? 0 : tier_of[n]);
        for (std::size_t d = 0; d < dim; ++d)
            s.features(r, static_cast<Eigen::Index>(d)) = centers(center, static_cast<Eigen::Index>(d)) + gauss(rng);
        for (std::size_t k = 0; k < num_models; ++k) {
            std::uint8_t bit = (tier_of[n] < num_models && tier_of[n] <= k) ? 1 : 0;
            if (spec.noise_rate > 0 && uniform01(noise_rng) < spec.noise_rate) bit ^= 1;
            s.correctness(r, static_cast<Eigen::Index>(k)) = bit;
        }
    }

    for (std::size_t k = 0; k < num_models; ++k)
        s.models.push_back({"model" + std::to_string(k), spec.costs[k], false, std::nullopt});
    s.original_order.resize(num_models);
    std::iota(s.original_order.begin(), s.original_order.end(), std::size_t{0});
    s.extractor = {"synthetic-extractor", spec.extractor_mflops, dim};
    return s;
}

Scenario split_scenario(Scenario s, std::array<Real, 3> fractions, std::uint64_t seed) {
    const Real total = fractions[0] + fractions[1] + fractions[2];
    if (std::any_of(fractions.begin(), fractions.end(), [](Real f) { return !(f > 0); }) ||
        std::abs(total - 1.0) > 1e-9)
        throw ValidationError("split fractions must be positive and sum to 1");

    const auto rows = s.num_samples();
    IndexList order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_train = std::min(rows, static_cast<std::size_t>(std::llround(fractions[0] * static_cast<Real>(rows))));
    const auto n_val = std::min(rows - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<Real>(rows))));
    s.splits.clear();
    s.splits["train"] = IndexList(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.splits["val"] = IndexList(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                                order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.splits["test"] = IndexList(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    for (auto& [_, indices] : s.splits) std::sort(indices.begin(), indices.end());
    return s;
}

}  // namespace dsynth
