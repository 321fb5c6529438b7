#include "ccrc/diagnostics.hpp"
#include "ccrc/substrate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace ccrc;

namespace ccrc {
void PrintTo(ActivityType t, std::ostream* os) { *os << to_char(t); }
}  // namespace ccrc

namespace {

StimulusProgram no_stimulus(TimeMs span = 0)
{
    StimulusProgram p;
    p.span = span;
    return p;
}

CategorizeParams fast_categorize()
{
    CategorizeParams p;
    p.compute_metrics = false;
    return p;
}

}  // namespace

TEST(Simulate, Deterministic)
{
    auto cfg = preset(ActivityType::C);
    const auto prog = build_training_program(standard_patterns(), 5, 11, 1000);
    const auto a = simulate(cfg, DriftConfig{}, prog, 8000.0);
    const auto b = simulate(cfg, DriftConfig{}, prog, 8000.0);
    EXPECT_GT(a.total_spikes(), 0u);
    EXPECT_EQ(a, b);
}

TEST(Simulate, SilentNetwork)
{
    SubstrateConfig cfg;
    cfg.light_gain = 0.0;
    cfg.noise_rate = 0.0;
    cfg.excitability_bias = 0.5;
    cfg.bias_spread = 0.0;
    const auto prog = build_training_program(standard_patterns(), 3, 1);
    const auto s = simulate(cfg, DriftConfig{}, prog, 3000.0);
    EXPECT_EQ(s.total_spikes(), 0u);
}

TEST(Simulate, RejectsProgramLongerThanDuration)
{
    const auto prog = build_training_program(standard_patterns(), 3, 1);
    EXPECT_THROW(simulate(preset(ActivityType::C), DriftConfig{}, prog, 2000.0), ValidationError);
}

TEST(Simulate, RejectsNonFiniteParameters)
{
    auto cfg = preset(ActivityType::C);
    cfg.light_gain = std::nan("");
    EXPECT_THROW(simulate(cfg, DriftConfig{}, no_stimulus(), 100.0), ValidationError);
    cfg = preset(ActivityType::C);
    cfg.neuron_count = 64;
    EXPECT_THROW(simulate(cfg, DriftConfig{}, no_stimulus(), 100.0), ValidationError);
}

TEST(Simulate, TimestampsValidAndChannelsMapped)
{
    const auto s = simulate(preset(ActivityType::C), DriftConfig{}, no_stimulus(), 5000.0);
    EXPECT_EQ(s.channel_count(), 128);
    for (const auto& train : s.channels())
        for (std::size_t k = 0; k < train.size(); ++k) {
            EXPECT_GE(train[k], 0.0);
            EXPECT_LT(train[k], 5000.0);
            if (k)
                EXPECT_GT(train[k], train[k - 1]);
        }
}

TEST(Preset, TypeCBurstRateFixture)
{
    const auto s = simulate(preset(ActivityType::C), DriftConfig{}, no_stimulus(), 60000.0);
    const double rate = static_cast<double>(detect_bursts(s).size()) / 60.0;
    EXPECT_GT(rate, 0.5);
    EXPECT_LT(rate, 2.0);
}

class PresetCategory : public ::testing::TestWithParam<ActivityType> {};

TEST_P(PresetCategory, SpontaneousActivityCategorizesAsRequested)
{
    const auto s = simulate(preset(GetParam()), DriftConfig{}, no_stimulus(), 300000.0);
    const auto rep = categorize(s, fast_categorize());
    EXPECT_EQ(to_char(rep.type_label), to_char(GetParam()))
        << "burst rate " << rep.burst_rate << " interburst " << rep.interburst_fraction;
    if (GetParam() == ActivityType::D)
        EXPECT_LT(rep.interburst_fraction, 0.05);
}

INSTANTIATE_TEST_SUITE_P(AllTypes, PresetCategory,
                         ::testing::Values(ActivityType::A, ActivityType::B, ActivityType::C, ActivityType::D),
                         [](const auto& info) { return std::string(1, to_char(info.param)); });

TEST(Preset, UnknownLabelRejected)
{
    EXPECT_THROW(parse_activity_type("E"), ValidationError);
}

TEST(Simulate, MonotoneDrive)
{
    auto cfg = preset(ActivityType::C);
    cfg.noise_rate = 0.0;
    std::size_t previous = 0;
    for (double intensity : {0.0, 0.25, 0.5, 1.0, 2.0}) {
        const auto prog = build_training_program({PatternSpec{5}}, 1, 1, 2000, intensity);
        const auto s = simulate(cfg, DriftConfig{}, prog, 3000.0);
        const auto evoked = slice(s, 2000.0, 3000.0).total_spikes();
        EXPECT_GE(evoked, previous) << "intensity " << intensity;
        previous = evoked;
    }
}

TEST(Simulate, DriftReducesEvokedRateOverRounds)
{
    auto cfg = preset(ActivityType::C);
    DriftConfig drift;
    drift.enabled = true;
    drift.efficacy_decay_rate = 0.5;
    drift.synaptic_decay_rate = 0.2;
    drift.time_scale = 10.0;
    drift.responsiveness_cutoff = 1e6;
    const auto prog = build_test_program({PatternSpec{10}}, 12, 5, TestTiming{5000, 5, 55000});
    const auto s = simulate(cfg, drift, prog, static_cast<double>(prog.span));
    // Ordinary least squares slope of per-round evoked spike counts.
    std::vector<double> y;
    for (int r = 0; r < 12; ++r) {
        const double begin = 5000.0 + r * 60000.0;
        y.push_back(static_cast<double>(slice(s, begin, begin + 5000.0).total_spikes()));
    }
    const double n = static_cast<double>(y.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sx += i;
        sy += y[i];
        sxx += double(i) * i;
        sxy += i * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    double rss = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        rss += std::pow(y[i] - intercept - slope * i, 2);
    const double se = std::sqrt(rss / (n - 2) / (sxx - sx * sx / n));
    EXPECT_LE(slope - 1.812 * se, 0.0);  // one-sided 95%, 10 dof
    EXPECT_LT(slope, 0.0);
}

TEST(BinRates, SingleSpike)
{
    SpikeTrainSet s(100.0 * 3, std::vector<std::vector<double>>{{50.0}, {}});
    const auto r = bin_rates(s, 100.0);
    EXPECT_EQ(r.bin_count(), 3);
    EXPECT_DOUBLE_EQ(r.values(0, 0), 10.0);
    EXPECT_DOUBLE_EQ(r.values.sum(), 10.0);
}

TEST(BinRates, EmptyAndPastEnd)
{
    SpikeTrainSet s(4, 1000.0);
    const auto r = bin_rates(s, 100.0);
    EXPECT_EQ(r.bin_count(), 10);
    EXPECT_EQ(r.values.sum(), 0.0);
    EXPECT_EQ(bin_rates(s, 100.0, 1000.0).bin_count(), 0);
    EXPECT_EQ(bin_rates(s, 100.0, 5000.0).bin_count(), 0);
    EXPECT_THROW(bin_rates(s, 0.0), ValidationError);
}

TEST(BinRates, PoissonMean)
{
    std::mt19937_64 rng(42);
    std::exponential_distribution<double> isi(20.0 / 1000.0);
    std::vector<std::vector<double>> trains(16);
    for (auto& t : trains)
        for (double x = isi(rng); x < 100000.0; x += isi(rng))
            t.push_back(x);
    const auto r = bin_rates(SpikeTrainSet(100000.0, trains), 100.0);
    for (int c = 0; c < r.channel_count(); ++c)
        EXPECT_NEAR(r.values.row(c).mean(), 20.0, 1.5);
}

TEST(BinRates, ConservesSpikes)
{
    const auto s = simulate(preset(ActivityType::C), DriftConfig{}, no_stimulus(), 2050.0);
    const auto r = bin_rates(s, 100.0, 25.0);
    for (int c = 0; c < s.channel_count(); ++c) {
        std::size_t inside = 0;
        for (double t : s.channel(c))
            inside += t >= 25.0 && t < 25.0 + r.bin_count() * 100.0;
        EXPECT_NEAR(r.values.row(c).sum() * 100.0 / 1000.0, static_cast<double>(inside), 1e-9);
    }
}

TEST(SpikeFile, RoundTripIsBitExact)
{
    const auto s = simulate(preset(ActivityType::C), DriftConfig{}, no_stimulus(), 3000.0);
    std::stringstream ss;
    write_spikes(ss, s);
    const auto t = read_spikes(ss);
    EXPECT_EQ(s, t);
}

TEST(SpikeFile, RejectsMalformed)
{
    std::stringstream a("channels=2 duration_ms=10\n0\t1\n");
    EXPECT_THROW(read_spikes(a), ValidationError);
    std::stringstream b("#CCRC-SPIKES 1\nchannels=2 duration_ms=10\n0\t11\n");
    EXPECT_THROW(read_spikes(b), ValidationError);
    std::stringstream c("#CCRC-SPIKES 1\nchannels=2 duration_ms=10\n1\t1\n0\t2\n");
    EXPECT_THROW(read_spikes(c), ValidationError);
}

TEST(SpikeTrainSet, RejectsUnsortedTimestamps)
{
    EXPECT_THROW(SpikeTrainSet(10.0, std::vector<std::vector<double>>{{2.0, 1.0}}), ValidationError);
    EXPECT_THROW(SpikeTrainSet(10.0, std::vector<std::vector<double>>{{10.0}}), ValidationError);
}

TEST(PermuteChannels, MovesTrains)
{
    SpikeTrainSet s(10.0, std::vector<std::vector<double>>{{1.0}, {2.0}, {3.0}});
    const auto p = permute_channels(s, {2, 0, 1});
    EXPECT_EQ(p.channel(2), std::vector<double>{1.0});
    EXPECT_EQ(p.channel(0), std::vector<double>{2.0});
    EXPECT_THROW(permute_channels(s, {0, 0, 1}), ValidationError);
}
