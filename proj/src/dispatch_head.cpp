#include "dsynth/dispatch_head.hpp"

#include <json.hpp>

#include <fstream>

namespace dsynth {

using nlohmann::json;

namespace {

template <typename Derived>
std::vector<Real> flatten(const Eigen::DenseBase<Derived>& m) {
    std::vector<Real> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    return out;
}

Vector to_vector(const std::vector<Real>& v, std::size_t expected, const char* what) {
    if (v.size() != expected) throw ValidationError(std::string("head checkpoint: wrong length for ") + what);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_head(const DispatchHead<Real>& head, const std::filesystem::path& path) {
    json j;
    j["feature_dim"] = head.feature_dim();
    j["num_models"] = head.num_models();
    j["weights"] = flatten(head.weights);
    j["bias"] = flatten(head.bias);
    j["feature_mean"] = flatten(head.feature_mean);
    j["feature_scale"] = flatten(head.feature_scale);
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw RuntimeError("failed writing head checkpoint " + path.string());
}

DispatchHead<Real> load_head(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open head checkpoint " + path.string());
    try {
        const json j = json::parse(in);
        const auto dim = j.at("feature_dim").get<std::size_t>();
        const auto models = j.at("num_models").get<std::size_t>();
        const auto w = j.at("weights").get<std::vector<Real>>();
        if (w.size() != dim * models) throw ValidationError("head checkpoint: wrong weight count");
        DispatchHead<Real> head;
        head.weights = Eigen::Map<const Matrix>(w.data(), static_cast<Eigen::Index>(models),
                                                static_cast<Eigen::Index>(dim));
        head.bias = to_vector(j.at("bias").get<std::vector<Real>>(), models, "bias");
        head.feature_mean = to_vector(j.at("feature_mean").get<std::vector<Real>>(), dim, "feature_mean");
        head.feature_scale = to_vector(j.at("feature_scale").get<std::vector<Real>>(), dim, "feature_scale");
        return head;
    } catch (const json::exception& e) {
        throw ValidationError("malformed head checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace dsynth
