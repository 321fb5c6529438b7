#include "ccrc/latent.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace ccrc;

namespace {

struct Synthetic {
    FiringRateMatrix rates;
    Matrix loading;  // channels x q
    Matrix latents;  // q x bins
};

// Draws from the generative model: per segment, each latent is a squared-exponential GP.
Synthetic sample_gpfa(int channels, int q, int segments, int bins, double tau, double noise_sd, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const double dt = 100.0;
    Matrix k(bins, bins);
    for (int a = 0; a < bins; ++a)
        for (int b = 0; b < bins; ++b)
            k(a, b) = std::exp(-std::pow((a - b) * dt, 2) / (2 * tau * tau)) + (a == b ? 1e-6 : 0.0);
    const Matrix l = k.llt().matrixL();

    Synthetic s;
    s.loading.resize(channels, q);
    for (Eigen::Index i = 0; i < s.loading.size(); ++i)
        s.loading.data()[i] = 3.0 * g(rng);
    s.latents.resize(q, segments * bins);
    for (int seg = 0; seg < segments; ++seg)
        for (int i = 0; i < q; ++i) {
            Vector z(bins);
            for (int t = 0; t < bins; ++t)
                z(t) = g(rng);
            s.latents.block(i, seg * bins, 1, bins) = (l * z).transpose();
        }
    s.rates.bin_width = dt;
    s.rates.values = s.loading * s.latents;
    s.rates.values.colwise() += Vector::Constant(channels, 10.0);
    for (Eigen::Index i = 0; i < s.rates.values.size(); ++i)
        s.rates.values.data()[i] += noise_sd * g(rng);
    return s;
}

// Largest principal angle (degrees) between the column spaces of a and b.
double max_principal_angle(const Matrix& a, const Matrix& b)
{
    const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
    const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
    Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
    const double smallest = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
    return std::acos(smallest) * 180.0 / std::numbers::pi;
}

LatentTrajectory circle(double omega, int bins, double dt, double t0 = 0.0)
{
    LatentTrajectory tr;
    tr.states.resize(bins, 2);
    for (int k = 0; k < bins; ++k) {
        const double t = t0 + k * dt;
        tr.times.push_back(t);
        tr.states(k, 0) = std::cos(omega * t);
        tr.states(k, 1) = std::sin(omega * t);
    }
    return tr;
}

}  // namespace

TEST(Gpfa, LogLikelihoodNeverDecreases)
{
    for (int dataset = 0; dataset < 20; ++dataset) {
        const auto s = sample_gpfa(12, 2, 20, 10, 250.0, 1.0, 100 + dataset);
        GpfaOptions opt;
        opt.latent_dim = 2;
        opt.max_iters = 40;
        opt.tol = 0.0;
        const auto m = fit_gpfa(s.rates, opt);
        ASSERT_GE(m.log_likelihoods.size(), 2u);
        for (std::size_t i = 1; i < m.log_likelihoods.size(); ++i)
            EXPECT_GE(m.log_likelihoods[i], m.log_likelihoods[i - 1] - 1e-7 * std::abs(m.log_likelihoods[i - 1]))
                << "dataset " << dataset << " iteration " << i;
    }
}

TEST(Gpfa, RecoversLoadingSubspace)
{
    const auto s = sample_gpfa(30, 3, 60, 10, 300.0, 0.5, 7);
    GpfaOptions opt;
    opt.latent_dim = 3;
    const auto m = fit_gpfa(s.rates, opt);
    EXPECT_LT(max_principal_angle(m.loading, s.loading), 5.0);
    const Matrix u = m.orthonormal_loading();
    EXPECT_LT((u.transpose() * u - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(m.offset.mean(), 10.0, 0.5);
}

TEST(Gpfa, PosteriorTracksTrueLatents)
{
    const auto s = sample_gpfa(30, 2, 40, 10, 300.0, 0.5, 8);
    GpfaOptions opt;
    opt.latent_dim = 2;
    const auto m = fit_gpfa(s.rates, opt);
    const auto tr = infer_trajectory(m, s.rates);
    // The inferred states are an invertible linear map of the true ones: regress and check R^2.
    const Matrix x = tr.states;                 // bins x 2
    const Matrix z = s.latents.transpose();     // bins x 2
    const Matrix coef = x.colPivHouseholderQr().solve(z);
    const double r2 = 1.0 - (z - x * coef).squaredNorm() / (z.rowwise() - z.colwise().mean()).squaredNorm();
    EXPECT_GT(r2, 0.95);
    EXPECT_EQ(tr.covariances.size(), static_cast<std::size_t>(s.rates.bin_count()));
}

TEST(Gpfa, ValidatesInput)
{
    const auto s = sample_gpfa(5, 1, 3, 10, 200.0, 1.0, 9);
    GpfaOptions opt;
    opt.latent_dim = 6;
    EXPECT_THROW(fit_gpfa(s.rates, opt), ValidationError);
    opt.latent_dim = 0;
    EXPECT_THROW(fit_gpfa(s.rates, opt), ValidationError);
    auto bad = s.rates;
    bad.values(0, 0) = std::nan("");
    EXPECT_THROW(fit_gpfa(bad, GpfaOptions{}), ValidationError);
}

TEST(VelocityField, RotationIsTangentWithChordSpeed)
{
    const double omega = 2 * std::numbers::pi / 1000.0, dt = 10.0;
    const std::vector<LatentTrajectory> trs{circle(omega, 2000, dt)};
    const auto field = velocity_field(trs, bounding_grid(trs, 6, 2));
    const double speed = 2.0 * std::sin(omega * dt / 2.0) / dt;
    const auto& g = field.grid;
    int checked = 0;
    for (int i = 0; i < g.cells[0]; ++i)
        for (int j = 0; j < g.cells[1]; ++j) {
            const auto& v = field.cells[static_cast<std::size_t>(i * g.cells[1] + j)];
            if (!v)
                continue;
            ++checked;
            EXPECT_NEAR(v->norm(), speed, 0.02 * speed);
            // Counter-clockwise: the velocity points along (-y, x) at the cell center.
            const double cx = g.lower[0] + (i + 0.5) * (g.upper[0] - g.lower[0]) / g.cells[0];
            const double cy = g.lower[1] + (j + 0.5) * (g.upper[1] - g.lower[1]) / g.cells[1];
            EXPECT_GT(-cy * (*v)(0) + cx * (*v)(1), 0.0);
        }
    EXPECT_GE(checked, 12);
    EXPECT_FALSE(field.cells[static_cast<std::size_t>(2 * 6 + 2)].has_value());  // the circle skips the center
}

TEST(Attractor, PeriodicTrajectoryYieldsCycle)
{
    const double period = 1000.0;
    std::vector<LatentTrajectory> trs{circle(2 * std::numbers::pi / period, 300, 100.0, 0.0)};
    AttractorOptions opt;
    opt.period = period;
    const auto a = estimate_attractor(trs, AttractorMode::cycle, opt);
    ASSERT_TRUE(a.cycle.has_value());
    EXPECT_FALSE(a.fallback);
    EXPECT_NEAR(a.phase_variance_ratio, 1.0, 1e-9);
    for (int b = 0; b < 10; ++b) {
        const double phase = 2 * std::numbers::pi * b / 10.0;
        EXPECT_NEAR((*a.cycle)(b, 0), std::cos(phase), 1e-9);
        EXPECT_NEAR((*a.cycle)(b, 1), std::sin(phase), 1e-9);
    }
    EXPECT_EQ(a.point_cloud.rows(), 300);
}

TEST(Attractor, AperiodicDataFallsBackToPointCloud)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    LatentTrajectory tr;
    tr.states.resize(500, 2);
    for (int k = 0; k < 500; ++k) {
        tr.times.push_back(k * 100.0);
        tr.states(k, 0) = g(rng);
        tr.states(k, 1) = g(rng);
    }
    const auto a = estimate_attractor({tr}, AttractorMode::cycle);
    EXPECT_TRUE(a.fallback);
    EXPECT_FALSE(a.cycle.has_value());
    EXPECT_EQ(a.point_cloud.rows(), 500);
}

TEST(Attractor, LabeledMeansPerPhase)
{
    auto tr = circle(2 * std::numbers::pi / 1000.0, 20, 100.0);
    tr.label = 4;
    const auto a = estimate_attractor({tr}, AttractorMode::point_cloud);
    ASSERT_EQ(a.labeled_means.size(), 10u);
    EXPECT_EQ(a.labeled_means[0].label, 4);
    EXPECT_EQ(a.labeled_means[0].count, 2);
    EXPECT_NEAR(a.labeled_means[0].point(0), 1.0, 1e-9);
}
