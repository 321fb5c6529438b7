#include "ccrc/control.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ccrc;

namespace {

StimulusProgram modulated_program(TimeMs anchor, int windows)
{
    StimulusProgram p;
    p.anchor = anchor;
    p.modulation.enabled = true;
    for (int k = 0; k < windows; ++k)
        p.windows.push_back({anchor + 1000 * k, 1 + k % 10});
    p.span = anchor + 1000 * windows;
    return p;
}

BurstEvents onsets(std::vector<double> t)
{
    BurstEvents b;
    b.onsets = t;
    for (double x : t) {
        b.offsets.push_back(x + 50.0);
        b.spike_counts.push_back(100);
    }
    return b;
}

}  // namespace

TEST(Entrainment, PhaseLockedPeriodicBurstsHaveZeroVariance)
{
    std::vector<double> t;
    for (int k = 0; k < 100; ++k)
        t.push_back(5000.0 + 1000.0 * k + 20.0);
    const auto r = entrainment_metrics(onsets(t), modulated_program(5000, 100));
    EXPECT_NEAR(r.onset_phase_circular_variance, 0.0, 1e-12);
    EXPECT_NEAR(r.burst_interval_variance, 0.0, 1e-9);
    EXPECT_DOUBLE_EQ(r.aligned_fraction, 1.0);
    EXPECT_EQ(r.burst_count, 100);
}

TEST(Entrainment, UniformOnsetsHaveHighVariance)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1e6);
    std::vector<double> t(5000);
    for (auto& x : t)
        x = u(rng);
    std::sort(t.begin(), t.end());
    const auto r = entrainment_metrics(onsets(t), modulated_program(0, 10));
    EXPECT_GT(r.onset_phase_circular_variance, 0.95);
}

TEST(Entrainment, InvariantToCommonTimeShift)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> jitter(0.0, 120.0);
    std::vector<double> t;
    for (int k = 0; k < 200; ++k)
        t.push_back(3000.0 + 1000.0 * k + jitter(rng));
    const auto a = entrainment_metrics(onsets(t), modulated_program(3000, 200));
    for (auto& x : t)
        x += 7000.0;
    const auto b = entrainment_metrics(onsets(t), modulated_program(10000, 200));
    EXPECT_NEAR(a.onset_phase_circular_variance, b.onset_phase_circular_variance, 1e-9);
    EXPECT_NEAR(a.burst_interval_variance, b.burst_interval_variance, 1e-6);
    EXPECT_DOUBLE_EQ(a.aligned_fraction, b.aligned_fraction);
}

TEST(Entrainment, VonMisesOracle)
{
    // Wrapped-normal phases with angular sd s have expected resultant length exp(-s^2 / 2).
    std::mt19937_64 rng(3);
    const double s = 0.6;
    std::normal_distribution<double> g(0.0, s * 1000.0 / (2 * std::numbers::pi));
    std::vector<double> t;
    for (int k = 0; k < 20000; ++k)
        t.push_back(1e4 + 1000.0 * k + g(rng));
    std::sort(t.begin(), t.end());
    const auto r = entrainment_metrics(onsets(t), modulated_program(0, 1));
    EXPECT_NEAR(r.onset_phase_circular_variance, 1.0 - std::exp(-s * s / 2), 0.01);
}

TEST(Entrainment, NeedsTwoBursts)
{
    EXPECT_THROW(entrainment_metrics(onsets({1.0}), modulated_program(0, 2)), ValidationError);
}

TEST(ApplyControl, LeavesPatternEventsUntouched)
{
    auto prog = build_training_program(standard_patterns(), 20, 5, 40000);
    ModulationSpec m;
    m.enabled = true;
    const auto on = apply_control(prog, m);
    EXPECT_EQ(on.events, prog.events);
    EXPECT_EQ(on.windows, prog.windows);
    EXPECT_TRUE(on.modulation.enabled);
    EXPECT_EQ(on.anchor, prog.windows.front().onset);
    EXPECT_DOUBLE_EQ(modulation_start(on), 0.0);

    m.enabled = false;
    EXPECT_EQ(apply_control(prog, m), prog);
    m.enabled = true;
    m.amplitude_fraction = 1.5;
    EXPECT_THROW(apply_control(prog, m), ValidationError);
}
