#include <cmath>

#include <gtest/gtest.h>

#include "adr/rectify.hpp"
#include "adr/rng.hpp"
#include "adr/schedule.hpp"

using namespace adr;

namespace {

// Independent scalar reimplementation used as the batch oracle.
std::vector<double> oracle_rectified(const std::vector<double>& logits, int y, double tau,
                                     double lambda) {
    std::vector<double> p(logits.size());
    double mx = logits[0] / tau;
    for (double z : logits) mx = std::max(mx, z / tau);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] / tau - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    std::size_t top = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[top]) top = i;
    double li = lambda - (p[top] - p[static_cast<std::size_t>(y)]);
    li = std::min(1.0, std::max(0.0, li));
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        out[i] = li * p[i] + (1.0 - li) * (static_cast<int>(i) == y ? 1.0 : 0.0);
    return out;
}

std::vector<double> random_distribution(std::size_t c, Rng& rng) {
    std::vector<double> p(c);
    double sum = 0.0;
    for (auto& v : p) {
        v = -std::log(1.0 - rng.uniform()); // exponential draws normalize to a simplex point
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

} // namespace

TEST(TeacherDistribution, UniformOnEqualLogits) {
    const auto p = teacher_distribution({1.3, 1.3, 1.3, 1.3}, 2.0);
    for (double v : p) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(TeacherDistribution, ClosedFormThreeClasses) {
    const auto p = teacher_distribution({2.0, 0.0, 0.0}, 1.0);
    const double e2 = std::exp(2.0);
    EXPECT_NEAR(p[0], e2 / (e2 + 2.0), 1e-12);
    EXPECT_NEAR(p[1], 1.0 / (e2 + 2.0), 1e-12);
    EXPECT_NEAR(p[2], 1.0 / (e2 + 2.0), 1e-12);
    EXPECT_NEAR(p[0], 0.7870, 1e-4);
    EXPECT_NEAR(p[1], 0.1065, 1e-4);
}

TEST(TeacherDistribution, LargeTemperatureApproachesUniform) {
    const auto p = teacher_distribution({3.0, -1.0, 0.5, 2.0}, 1e6);
    for (double v : p) EXPECT_NEAR(v, 0.25, 1e-5);
}

TEST(TeacherDistribution, NonPositiveTemperatureRejected) {
    EXPECT_THROW(teacher_distribution({1.0, 2.0}, 0.0), parameter_error);
}

TEST(AdjustedLambda, CorrectTeacherKeepsLambda) {
    // teacher argmax == ground truth => lambda_i == lambda exactly
    EXPECT_EQ(adjusted_lambda({0.6, 0.3, 0.1}, 0, 0.7), 0.7);
    EXPECT_EQ(adjusted_lambda({0.25, 0.25, 0.25, 0.25}, 2, 0.4), 0.4); // tie includes y
}

TEST(AdjustedLambda, HandValues) {
    EXPECT_NEAR(adjusted_lambda({0.3, 0.5, 0.2}, 0, 0.7), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(adjusted_lambda({0.05, 0.90, 0.05}, 0, 0.7), 0.0); // raw -0.15 clips to 0
}

TEST(AdjustedLambda, IndexAndRangeValidation) {
    EXPECT_THROW(adjusted_lambda({0.5, 0.5}, 2, 0.5), parameter_error);
    EXPECT_THROW(adjusted_lambda({0.5, 0.5}, 0, 1.5), parameter_error);
}

TEST(Rectify, LambdaZeroGivesExactOneHot) {
    const auto t = rectify({0.3, 0.5, 0.2}, 1, 0.0);
    EXPECT_DOUBLE_EQ(t.distribution[0], 0.0);
    EXPECT_DOUBLE_EQ(t.distribution[1], 1.0);
    EXPECT_DOUBLE_EQ(t.distribution[2], 0.0);
    EXPECT_DOUBLE_EQ(t.lambda_used, 0.0);
}

TEST(Rectify, HandValue) {
    const auto t = rectify({0.3, 0.5, 0.2}, 0, 0.5);
    EXPECT_NEAR(t.distribution[0], 0.65, 1e-15);
    EXPECT_NEAR(t.distribution[1], 0.25, 1e-15);
    EXPECT_NEAR(t.distribution[2], 0.10, 1e-15);
    EXPECT_EQ(t.teacher_argmax, 1);
}

TEST(Rectify, UniformTeacherIsLabelSmoothing) {
    const std::size_t c = 5;
    const double lambda = 0.6;
    std::vector<double> uniform(c, 1.0 / static_cast<double>(c));
    const double li = adjusted_lambda(uniform, 3, lambda);
    EXPECT_EQ(li, lambda);
    const auto t = rectify(uniform, 3, li);
    for (std::size_t i = 0; i < c; ++i) {
        const double expect = i == 3 ? 1.0 - lambda + lambda / c : lambda / c;
        EXPECT_NEAR(t.distribution[i], expect, 1e-15);
    }
}

TEST(RectifyBatch, SingleRowMatchesPipeline) {
    Tensor logits({1, 4}, {0.5, -0.2, 1.5, 0.0});
    const auto batch = rectify_batch(logits, {2}, 2.0, 0.8);
    ASSERT_EQ(batch.size(), 1u);
    const auto p = teacher_distribution({0.5, -0.2, 1.5, 0.0}, 2.0);
    const auto single = rectify(p, 2, adjusted_lambda(p, 2, 0.8));
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_DOUBLE_EQ(batch[0].distribution[i], single.distribution[i]);
}

TEST(RectifyBatch, MixedBatchMatchesScalarOracle) {
    Rng rng(5);
    const std::int64_t n = 64, c = 10;
    Tensor logits = Tensor::zeros({n, c});
    std::vector<int> labels;
    for (std::int64_t r = 0; r < n; ++r) {
        for (std::int64_t j = 0; j < c; ++j) logits(r, j) = rng.uniform(-3.0, 3.0);
        labels.push_back(static_cast<int>(rng.below(c)));
    }
    const double tau = 1.7, lambda = 0.75;
    const auto batch = rectify_batch(logits, labels, tau, lambda);
    for (std::int64_t r = 0; r < n; ++r) {
        std::vector<double> row(logits.data.begin() + r * c, logits.data.begin() + (r + 1) * c);
        const auto expect = oracle_rectified(row, labels[static_cast<std::size_t>(r)], tau, lambda);
        for (std::int64_t j = 0; j < c; ++j)
            EXPECT_NEAR(batch[static_cast<std::size_t>(r)].distribution[static_cast<std::size_t>(j)],
                        expect[static_cast<std::size_t>(j)], 1e-12);
    }
}

TEST(RectifyBatch, RecipeEndpointLambdas) {
    // lambda schedule endpoints 0.7 -> 0.95 over the horizon
    const AnnealSpec lambda_spec{0.7, 0.95, 200, ScheduleUnit::PerEpoch};
    Tensor logits({1, 10}, std::vector<double>(10, 0.0));
    const auto at_start =
        rectify_batch(logits, {4}, 2.5, cosine_anneal(lambda_spec, 0.0));
    EXPECT_NEAR(at_start[0].lambda_used, 0.7, 1e-12);
    const auto at_end =
        rectify_batch(logits, {4}, 2.0, cosine_anneal(lambda_spec, 200.0));
    EXPECT_NEAR(at_end[0].lambda_used, 0.95, 1e-12);
}

TEST(RectifyBatch, RowErrorCarriesRowIndex) {
    Tensor logits = Tensor::zeros({2, 3});
    try {
        rectify_batch(logits, {0, 7}, 1.0, 0.5);
        FAIL() << "expected parameter_error";
    } catch (const parameter_error& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
    }
}

TEST(Dominance, GroundTruthAlwaysWinsOnRandomDraws) {
    Rng rng(6);
    for (int rep = 0; rep < 100000; ++rep) {
        const std::size_t c = 2 + rng.below(9);
        const auto p = random_distribution(c, rng);
        const int y = static_cast<int>(rng.below(c));
        const double lambda = rng.uniform();
        const double li = adjusted_lambda(p, y, lambda);
        EXPECT_GE(li, 0.0);
        EXPECT_LE(li, 1.0);
        const auto t = rectify(p, y, li);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            sum += t.distribution[j];
            if (static_cast<int>(j) != y)
                EXPECT_GE(t.distribution[static_cast<std::size_t>(y)],
                          t.distribution[j] - 1e-15);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}
