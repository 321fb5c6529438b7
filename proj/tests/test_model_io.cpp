#include "ccrc/model_io.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace ccrc;

namespace {

Matrix noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = g(rng) * 1e3 / 7.0;  // values without short decimal forms
    return m;
}

ModelFile round_trip(const ModelFile& f, std::string* text = nullptr)
{
    std::stringstream ss;
    write_model_file(ss, f);
    if (text)
        *text = ss.str();
    return read_model_file(ss);
}

std::string text_of(const ModelFile& f)
{
    std::stringstream ss;
    write_model_file(ss, f);
    return ss.str();
}

ReadoutModel some_readout()
{
    ReadoutModel m;
    m.weights = noise(4, 6, 1);
    m.bias = noise(4, 1, 2);
    m.ridge_lambda = 0.1 / 3.0;
    m.class_labels = {1, 3, 5, 7};
    m.feature_space = FeatureSpace::latent;
    return m;
}

}  // namespace

TEST(ModelFile, ReadoutRoundTripIsBitExact)
{
    const auto m = some_readout();
    std::string first;
    const auto back = readout_from(round_trip(to_model_file(m), &first));
    EXPECT_TRUE(back.weights == m.weights);
    EXPECT_TRUE(back.bias == m.bias);
    EXPECT_EQ(back.ridge_lambda, m.ridge_lambda);
    EXPECT_EQ(back.class_labels, m.class_labels);
    EXPECT_EQ(back.feature_space, m.feature_space);
    EXPECT_EQ(text_of(to_model_file(back)), first);
}

TEST(ModelFile, LatentRoundTripPreservesInference)
{
    FiringRateMatrix rates;
    rates.values = noise(8, 200, 3).array() + 50.0;
    GpfaOptions opt;
    opt.latent_dim = 2;
    opt.max_iters = 10;
    const auto m = fit_gpfa(rates, opt);
    std::string first;
    const auto back = latent_from(round_trip(to_model_file(m), &first));
    EXPECT_TRUE(back.loading == m.loading);
    EXPECT_EQ(back.gp_timescales, m.gp_timescales);
    EXPECT_EQ(back.log_likelihoods, m.log_likelihoods);
    EXPECT_TRUE(infer_trajectory(back, rates).states == infer_trajectory(m, rates).states);
    EXPECT_EQ(text_of(to_model_file(back)), first);
}

TEST(ModelFile, AttractorRoundTrip)
{
    LatentTrajectory tr;
    tr.label = 2;
    tr.states = noise(30, 3, 4);
    for (int k = 0; k < 30; ++k)
        tr.times.push_back(100.0 * k);
    const auto a = estimate_attractor({tr}, AttractorMode::cycle, AttractorOptions{});
    std::string first;
    const auto back = attractor_from(round_trip(to_model_file(a), &first));
    EXPECT_TRUE(back.point_cloud == a.point_cloud);
    EXPECT_EQ(back.cycle.has_value(), a.cycle.has_value());
    ASSERT_EQ(back.labeled_means.size(), a.labeled_means.size());
    EXPECT_TRUE(back.labeled_means[3].point == a.labeled_means[3].point);
    EXPECT_EQ(text_of(to_model_file(back)), first);
}

TEST(ModelFile, TransplantRoundTrip)
{
    TransplantRecord t;
    t.expert_id = "expert-a";
    t.student_id = "student-b";
    t.transform.linear = noise(3, 3, 5);
    t.transform.translation = noise(3, 1, 6);
    t.transform.ridge_lambda = 1e-3;
    t.transform.fit_residual = 0.25;
    t.transform.probe_count = 60;
    t.transplanted_readout = some_readout();
    t.transplanted_readout.weights = noise(4, 3, 7);
    t.provenance = {{"expert_cv_accuracy", "0.9"}};
    std::string first;
    const auto back = transplant_from(round_trip(to_model_file(t), &first));
    EXPECT_EQ(back.student_id, "student-b");
    EXPECT_TRUE(back.transform.linear == t.transform.linear);
    EXPECT_EQ(back.provenance, t.provenance);
    EXPECT_EQ(text_of(to_model_file(back)), first);
}

TEST(ModelFile, NestedPartsKeepTheirKinds)
{
    ModelFile bundle;
    bundle.kind = "bundle";
    nest(bundle, "readout", to_model_file(some_readout()));
    const auto back = round_trip(bundle);
    ASSERT_TRUE(has_part(back, "readout"));
    EXPECT_FALSE(has_part(back, "latent"));
    EXPECT_TRUE(readout_from(part(back, "readout")).weights == some_readout().weights);
}

TEST(ModelFile, RejectsMalformedInput)
{
    auto parse = [](const std::string& s) {
        std::istringstream is(s);
        return read_model_file(is);
    };
    EXPECT_THROW(parse("kind=readout\nend\n"), ValidationError);
    EXPECT_THROW(parse("#CCRC-MODEL 1\nkind=readout\n"), ValidationError);
    EXPECT_THROW(parse("#CCRC-MODEL 1\nkind=readout\nmatrix w 2 2\n1\t2\nend\n"), ValidationError);
    EXPECT_THROW(parse("#CCRC-MODEL 1\nkind=readout\nmatrix w 1 2\n1\tx\nend\n"), ValidationError);
    EXPECT_THROW(parse("#CCRC-MODEL 1\nkind=readout\ngarbage\nend\n"), ValidationError);
    EXPECT_THROW(readout_from(parse("#CCRC-MODEL 1\nkind=latent\nend\n")), ValidationError);
    EXPECT_THROW(readout_from(parse("#CCRC-MODEL 1\nkind=readout\nfeature_space=latent\nend\n")), ValidationError);
}
