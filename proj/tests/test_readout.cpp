#include "ccrc/readout.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ccrc;

namespace {

LabeledFeatureSet random_problem(int n, int d, int classes, std::mt19937_64& rng)
{
    std::normal_distribution<double> g(0.0, 1.0);
    LabeledFeatureSet s;
    s.features.resize(n, d);
    for (Eigen::Index i = 0; i < s.features.size(); ++i)
        s.features.data()[i] = g(rng) * 3.0 + 1.0;
    for (int i = 0; i < n; ++i) {
        s.labels.push_back(1 + i % classes);
        s.sample_times.push_back(i);
    }
    return s;
}

// Gaussian clusters around well-separated class centers.
LabeledFeatureSet clusters(int per_class, int classes, int d, double spread, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix centers(classes, d);
    for (Eigen::Index i = 0; i < centers.size(); ++i)
        centers.data()[i] = 5.0 * g(rng);
    LabeledFeatureSet s;
    s.features.resize(per_class * classes, d);
    for (int i = 0; i < per_class * classes; ++i) {
        const int c = i % classes;
        for (int j = 0; j < d; ++j)
            s.features(i, j) = centers(c, j) + spread * g(rng);
        s.labels.push_back(c + 1);
        s.sample_times.push_back(i);
    }
    return s;
}

}  // namespace

TEST(Ridge, MatchesAugmentedNormalEquations)
{
    // Oracle: minimize ||Y - X W' - 1 b'||^2 + lambda ||W||^2 by solving the
    // (d+1)-dimensional normal equations with an unpenalized intercept row.
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> dims(2, 12), sizes(15, 60), ncls(2, 5);
    std::uniform_real_distribution<double> loglam(-3.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = dims(rng), n = sizes(rng), k = ncls(rng);
        const auto data = random_problem(n, d, k, rng);
        const double lambda = std::pow(10.0, loglam(rng));
        const auto model = fit_ridge(data, lambda);

        Matrix a(n, d + 1);
        a.leftCols(d) = data.features;
        a.col(d).setOnes();
        Matrix y = Matrix::Zero(n, k);
        for (int i = 0; i < n; ++i)
            y(i, data.labels[i] - 1) = 1.0;
        Matrix lhs = a.transpose() * a;
        lhs.diagonal().head(d).array() += lambda;
        const Matrix beta = lhs.fullPivLu().solve(a.transpose() * y);  // (d+1) x k

        ASSERT_EQ(model.class_count(), k);
        const double scale = 1.0 + beta.cwiseAbs().maxCoeff();
        EXPECT_LT((model.weights - beta.topRows(d).transpose()).cwiseAbs().maxCoeff(), 1e-8 * scale) << trial;
        EXPECT_LT((model.bias - beta.row(d).transpose()).cwiseAbs().maxCoeff(), 1e-8 * scale) << trial;
    }
}

TEST(Ridge, SeparableClustersAreClassifiedPerfectly)
{
    const auto train = clusters(30, 10, 20, 0.5, 2), test = clusters(20, 10, 20, 0.5, 2);
    RidgeOptions opt;
    opt.seed = 9;
    const auto r = train_ridge(train, opt);
    EXPECT_DOUBLE_EQ(r.cv.chosen_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(evaluate(r.model, test), 1.0);
}

TEST(Ridge, CvPicksBestAndSmallestOnTies)
{
    const auto data = clusters(12, 4, 30, 6.0, 3);
    RidgeOptions opt;
    opt.seed = 4;
    const auto r = train_ridge(data, opt);
    ASSERT_EQ(r.cv.lambdas.size(), opt.lambda_grid.size());
    const double scale = trace_scale(data.features);
    for (std::size_t i = 0; i < r.cv.lambdas.size(); ++i) {
        EXPECT_NEAR(r.cv.lambdas[i], opt.lambda_grid[i] * scale, 1e-12 * r.cv.lambdas[i]);
        EXPECT_LE(r.cv.mean_accuracy[i], r.cv.chosen_accuracy);
        if (r.cv.mean_accuracy[i] == r.cv.chosen_accuracy) {
            EXPECT_GE(r.cv.lambdas[i], r.cv.chosen_lambda);
        }
    }
    EXPECT_DOUBLE_EQ(r.model.ridge_lambda, r.cv.chosen_lambda);
}

TEST(Ridge, Deterministic)
{
    const auto data = clusters(10, 5, 8, 3.0, 5);
    RidgeOptions opt;
    opt.seed = 6;
    const auto a = train_ridge(data, opt), b = train_ridge(data, opt);
    EXPECT_EQ(a.cv.mean_accuracy, b.cv.mean_accuracy);
    EXPECT_TRUE(a.model.weights == b.model.weights);
}

TEST(Ridge, FoldsAreBalanced)
{
    const auto fold = fold_assignment(103, 10, 7);
    std::vector<int> sizes(10, 0);
    for (int f : fold)
        ++sizes[static_cast<std::size_t>(f)];
    for (int s : sizes) {
        EXPECT_GE(s, 10);
        EXPECT_LE(s, 11);
    }
}

TEST(Ridge, RejectsInvalidInput)
{
    auto data = clusters(5, 3, 4, 1.0, 8);
    EXPECT_THROW(fit_ridge(data, -1.0), ValidationError);
    auto one_class = data;
    std::fill(one_class.labels.begin(), one_class.labels.end(), 1);
    EXPECT_THROW(fit_ridge(one_class, 1.0), ValidationError);
    data.features(0, 0) = std::nan("");
    EXPECT_THROW(fit_ridge(data, 1.0), ValidationError);
    EXPECT_THROW(train_ridge(LabeledFeatureSet{}), ValidationError);
}

TEST(Ridge, EvaluateChecksFeatureSpace)
{
    const auto data = clusters(5, 3, 4, 1.0, 8);
    auto model = fit_ridge(data, 1.0);
    auto latent = data;
    latent.feature_space = FeatureSpace::latent;
    EXPECT_THROW(evaluate(model, latent), ValidationError);
    EXPECT_THROW(parse_feature_space("pca"), ValidationError);
}

TEST(Features, ObservedRatesAtTheSampleBin)
{
    // Channel 0 spikes twice inside [900, 1000) of the first window, channel 1 once in the second.
    SpikeTrainSet s(3000.0, std::vector<std::vector<double>>{{100.0, 905.0, 990.0}, {1950.0}});
    StimulusProgram p;
    p.windows = {{0, 3}, {1000, 7}, {2500, 3}};
    p.span = 3000;
    const auto f = extract_features(s, p, FeatureSpace::observed_rates);
    ASSERT_EQ(f.size(), 2);
    EXPECT_EQ(f.dropped, 1);
    EXPECT_EQ(f.labels, (std::vector<int>{3, 7}));
    EXPECT_DOUBLE_EQ(f.features(0, 0), 20.0);
    EXPECT_DOUBLE_EQ(f.features(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(f.features(1, 1), 10.0);
    EXPECT_DOUBLE_EQ(f.sample_times[1], 1900.0);

    FeatureOptions two;
    two.sample_offset = 800.0;
    two.offsets = 2;
    const auto g = extract_features(s, p, FeatureSpace::observed_rates, nullptr, two);
    ASSERT_EQ(g.feature_dim(), 4);
    EXPECT_DOUBLE_EQ(g.features(0, 2), 20.0);  // second offset block, channel 0
}

TEST(Features, LatentRequiresModelAndAlignedOffset)
{
    SpikeTrainSet s(2000.0, std::vector<std::vector<double>>{{}, {}});
    StimulusProgram p;
    p.windows = {{0, 1}};
    EXPECT_THROW(extract_features(s, p, FeatureSpace::latent), ValidationError);
    FeatureOptions bad;
    bad.sample_offset = 950.0;
    EXPECT_THROW(extract_features(s, p, FeatureSpace::observed_rates, nullptr, bad), ValidationError);
}

TEST(Timeline, CrossingIsLastDescentBelowThreshold)
{
    AccuracyTimeline t;
    t.round_times = {0.25, 0.5, 0.75, 1.0, 1.25};
    t.accuracies = {0.9, 0.5, 0.7, 0.55, 0.4};
    ASSERT_TRUE(t.threshold_crossing(0.6).has_value());
    EXPECT_DOUBLE_EQ(*t.threshold_crossing(0.6), 1.0);
    EXPECT_DOUBLE_EQ(t.time_above(0.6), 1.0);
    t.accuracies.back() = 0.65;
    EXPECT_FALSE(t.threshold_crossing(0.6).has_value());
    EXPECT_DOUBLE_EQ(t.time_above(0.6), 1.25);
}

TEST(Timeline, ScoresEachRound)
{
    const auto data = clusters(10, 3, 5, 0.2, 10);
    const auto model = fit_ridge(data, 1e-3);
    auto flipped = data;
    for (auto& l : flipped.labels)
        l = l % 3 + 1;
    const auto t = accuracy_timeline(model, {data, flipped}, {0.25, 0.5});
    EXPECT_DOUBLE_EQ(t.accuracies[0], 1.0);
    EXPECT_DOUBLE_EQ(t.accuracies[1], 0.0);
    EXPECT_THROW(accuracy_timeline(model, {data, data}, {0.5, 0.25}), ValidationError);
}
