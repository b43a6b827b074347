#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dsynth/loss.hpp"
#include "oracles.hpp"

#include <random>

using namespace dsynth;

namespace {

LossConfig uniform_config(std::size_t k, Real penalty) {
    const std::vector<std::size_t> counts(k, 10);
    return make_loss_config(PenaltyMatrix::uniform(k, penalty), {WeightingScheme::INS, 0.999}, counts);
}

// Random logits whose per-row top two values differ by at least `gap`.
Matrix tie_free_logits(Eigen::Index rows, Eigen::Index cols, std::mt19937& rng, double gap = 0.05) {
    std::normal_distribution<double> g(0.0, 1.5);
    Matrix z(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (;;) {
            for (Eigen::Index c = 0; c < cols; ++c) z(r, c) = g(rng);
            Eigen::RowVectorXd sorted = z.row(r);
            std::sort(sorted.data(), sorted.data() + cols);
            if (sorted(cols - 1) - sorted(cols - 2) > gap) break;
        }
    }
    return z;
}

}  // namespace

TEST_CASE("PenaltyMatrix invariants") {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = 150;
    CHECK_THROWS_WITH_AS(PenaltyMatrix{m}, doctest::Contains("out of range [0,100]"), ValidationError);
    m(0, 1) = 1;
    m(1, 1) = 1;
    CHECK_THROWS_WITH_AS(PenaltyMatrix{m}, doctest::Contains("diagonal"), ValidationError);

    const std::vector<Real> off{10, 0.001};
    const auto p = PenaltyMatrix::from_list(off, 2);
    CHECK(p(0, 1) == 10);
    CHECK(p(1, 0) == 0.001);
    CHECK(p.row_major() == std::vector<Real>{0, 10, 0.001, 0});
    const std::vector<Real> bad{1, 2, 3};
    CHECK_THROWS_WITH_AS(PenaltyMatrix::from_list(bad, 2), doctest::Contains("penalty count mismatch"),
                         ValidationError);
}

TEST_CASE("class_weights: INS and ISNS hand cases") {
    const std::vector<std::size_t> ins_counts{2, 1};
    const auto ins = class_weights(ins_counts, {WeightingScheme::INS});
    CHECK(std::abs(ins[0] - 2.0 / 3.0) <= 1e-12);
    CHECK(std::abs(ins[1] - 4.0 / 3.0) <= 1e-12);

    const std::vector<std::size_t> isns_counts{4, 1};
    const auto isns = class_weights(isns_counts, {WeightingScheme::ISNS});
    CHECK(std::abs(isns[0] - 2.0 / 3.0) <= 1e-12);
    CHECK(std::abs(isns[1] - 4.0 / 3.0) <= 1e-12);

    const std::vector<std::size_t> zero{3, 0};
    CHECK_THROWS_WITH_AS(class_weights(zero, {WeightingScheme::INS}), doctest::Contains("zero count"),
                         ValidationError);
}

TEST_CASE("class_weights: ENS against direct formula evaluation") {
    for (double beta : {0.9, 0.99, 0.999}) {
        const std::vector<std::size_t> counts{1, 10, 100, 10000};
        const auto w = class_weights(counts, {WeightingScheme::ENS, beta});
        std::vector<double> raw;
        for (auto n : counts) raw.push_back(oracle::ens_weight(beta, static_cast<double>(n)));
        const double mean = (raw[0] + raw[1] + raw[2] + raw[3]) / 4.0;
        for (std::size_t i = 0; i < counts.size(); ++i) CHECK(std::abs(w[i] - raw[i] / mean) <= 1e-10);
    }
    const std::vector<std::size_t> two{100, 1};
    const auto w = class_weights(two, {WeightingScheme::ENS, 0.99});
    const double raw0 = oracle::ens_weight(0.99, 100), raw1 = 1.0;
    CHECK(std::abs(w[0] - 2 * raw0 / (raw0 + raw1)) <= 1e-12);
}

TEST_CASE("class_weights: mean one, permutation equivariance, ENS degenerates to uniform") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<std::size_t> count(1, 5000);
    for (auto scheme : {WeightingScheme::INS, WeightingScheme::ISNS, WeightingScheme::ENS}) {
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<std::size_t> counts(5);
            for (auto& c : counts) c = count(rng);
            const auto w = class_weights(counts, {scheme, 0.999});
            double sum = 0;
            for (auto x : w) sum += x;
            CHECK(std::abs(sum / 5.0 - 1.0) <= 1e-9);

            auto permuted = counts;
            std::vector<std::size_t> perm{3, 0, 4, 1, 2};
            for (std::size_t i = 0; i < 5; ++i) permuted[i] = counts[perm[i]];
            const auto wp = class_weights(permuted, {scheme, 0.999});
            for (std::size_t i = 0; i < 5; ++i) CHECK(wp[i] == doctest::Approx(w[perm[i]]).epsilon(1e-14));
        }
    }
    const std::vector<std::size_t> counts{1, 10, 1000};
    for (auto x : class_weights(counts, {WeightingScheme::ENS, 1e-6})) CHECK(std::abs(x - 1.0) <= 1e-4);
}

TEST_CASE("penalized_loss: all-correct batch is exactly zero") {
    Matrix z(3, 3);
    z << 2, 0, 0,
         0, 3, 1,
         0, 0, 1;
    const std::vector<int> labels{0, 1, 2};
    const auto r = penalized_loss<Real>(z, labels, uniform_config(3, 7.0));
    CHECK(r.loss == 0.0);
    CHECK(r.gradient.isZero(0));
}

TEST_CASE("penalized_loss: unit penalties reduce to mean CE of misclassified samples") {
    std::mt19937 rng(8);
    const auto cfg = uniform_config(4, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix z = tie_free_logits(32, 4, rng);
        std::vector<int> labels(32);
        std::uniform_int_distribution<int> lab(0, 3);
        for (auto& l : labels) l = lab(rng);
        double expected = 0;
        for (Eigen::Index r = 0; r < 32; ++r) {
            Eigen::Index top;
            z.row(r).maxCoeff(&top);
            if (top == labels[static_cast<std::size_t>(r)]) continue;
            std::vector<double> row(z.row(r).data(), z.row(r).data() + 4);
            expected += oracle::cross_entropy(row, labels[static_cast<std::size_t>(r)]);
        }
        expected /= 32.0;
        CHECK(std::abs(penalized_loss<Real>(z, labels, cfg).loss - expected) <= 1e-12);
    }
}

TEST_CASE("penalized_loss: single-sample hand cases") {
    Matrix p = Matrix::Zero(2, 2);
    p(0, 1) = 2;
    p(1, 0) = 1;
    const std::vector<std::size_t> counts{5, 5};
    const auto cfg = make_loss_config(PenaltyMatrix(p), {WeightingScheme::INS}, counts);
    const std::vector<int> label{0};

    Matrix tie(1, 2);
    tie << 0, 0;
    CHECK(penalized_loss<Real>(tie, label, cfg).loss == 0.0);

    Matrix z(1, 2);
    z << 0, 0.1;
    const double ce = -std::log(std::exp(0.0) / (std::exp(0.0) + std::exp(0.1)));
    const auto r = penalized_loss<Real>(z, label, cfg);
    CHECK(r.loss == doctest::Approx(2.0 * ce).epsilon(1e-14));
    // Gradient of 2 * CE: 2 * (softmax - onehot).
    const double p1 = std::exp(0.1) / (1.0 + std::exp(0.1));
    CHECK(r.gradient(0, 0) == doctest::Approx(2.0 * ((1 - p1) - 1)).epsilon(1e-14));
    CHECK(r.gradient(0, 1) == doctest::Approx(2.0 * p1).epsilon(1e-14));
}

TEST_CASE("penalized_loss: errors") {
    const auto cfg = uniform_config(2, 1.0);
    Matrix z(1, 2);
    z << std::numeric_limits<double>::quiet_NaN(), 0;
    const std::vector<int> label{0};
    CHECK_THROWS_WITH_AS(penalized_loss<Real>(z, label, cfg), doctest::Contains("non-finite logit"), RuntimeError);
    Matrix ok(1, 2);
    ok << 0, 1;
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(penalized_loss<Real>(ok, bad, cfg), ValidationError);
}

TEST_CASE("finite_difference_check") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> pen(0.5, 20.0);
    Matrix p = Matrix::Zero(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) p(i, j) = pen(rng);
    const std::vector<std::size_t> counts{50, 20, 5};
    const auto cfg = make_loss_config(PenaltyMatrix(p), {WeightingScheme::ISNS}, counts);

    const Matrix z = tie_free_logits(16, 3, rng);
    std::vector<int> labels(16);
    std::uniform_int_distribution<int> lab(0, 2);
    for (auto& l : labels) l = lab(rng);
    CHECK(finite_difference_check<Real>(z, labels, cfg, 1e-5) <= 1e-4);

    Matrix correct(2, 3);
    correct << 3, 0, 0,
               0, 0, 3;
    const std::vector<int> right{0, 2};
    CHECK(finite_difference_check<Real>(correct, right, cfg, 1e-5) == 0.0);

    Matrix one_wrong(2, 3);
    one_wrong << 3, 0, 0,
                 0, 1, 0.2;
    const std::vector<int> mixed{0, 2};
    CHECK(finite_difference_check<Real>(one_wrong, mixed, cfg, 1e-5) <= 1e-4);
}

TEST_CASE("penalized_loss is linear in the penalties and shift invariant") {
    std::mt19937 rng(23);
    const Matrix z = tie_free_logits(40, 3, rng);
    std::vector<int> labels(40);
    std::uniform_int_distribution<int> lab(0, 2);
    for (auto& l : labels) l = lab(rng);
    const std::vector<std::size_t> counts{30, 8, 2};
    Matrix p(3, 3);
    p << 0, 4, 9,
         1, 0, 6,
         0.5, 2, 0;
    const auto base = make_loss_config(PenaltyMatrix(p), {WeightingScheme::ENS, 0.99}, counts);
    const auto r = penalized_loss<Real>(z, labels, base);
    for (double c : {2.0, 0.25, 3.0, 7.5}) {
        const auto scaled = make_loss_config(PenaltyMatrix(Matrix(c * p)), {WeightingScheme::ENS, 0.99}, counts);
        const auto rs = penalized_loss<Real>(z, labels, scaled);
        CHECK(rs.loss == doctest::Approx(c * r.loss).epsilon(1e-13));
        CHECK((rs.gradient - c * r.gradient).cwiseAbs().maxCoeff() <= 1e-13 * c);
    }
    Matrix shifted = z;
    shifted.row(5).array() += 4.0;
    shifted.row(11).array() -= 2.5;
    CHECK(penalized_loss<Real>(shifted, labels, base).loss == doctest::Approx(r.loss).epsilon(1e-13));
}

TEST_CASE("always_ce makes correct samples contribute through the row-mean penalty") {
    Matrix z(1, 2);
    z << 1, 0;
    const std::vector<int> label{0};
    const std::vector<std::size_t> counts{1, 1};
    Matrix p = Matrix::Zero(2, 2);
    p(0, 1) = 3;
    const auto cfg = make_loss_config(PenaltyMatrix(p), {WeightingScheme::INS}, counts, true);
    const double ce = std::log(1.0 + std::exp(-1.0));
    CHECK(penalized_loss<Real>(z, label, cfg).loss == doctest::Approx(3.0 * ce).epsilon(1e-14));

    const auto zero = make_loss_config(PenaltyMatrix::uniform(2, 0.0), {WeightingScheme::INS}, counts, true);
    CHECK(penalized_loss<Real>(z, label, zero).loss == 0.0);
}

TEST_CASE("penalized_loss in single precision") {
    MatrixX<float> z(2, 2);
    z << 0.f, 1.f,
         2.f, 0.f;
    const std::vector<int> labels{0, 0};
    const auto r = penalized_loss<float>(z, labels, uniform_config(2, 1.0));
    CHECK(r.loss == doctest::Approx(std::log(1.0 + std::exp(1.0)) / 2.0).epsilon(1e-6));
}
