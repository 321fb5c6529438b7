#pragma once

// Compressed naive-RC / cc-RC protocol: training session, then fixed-readout
// test rounds. Test rounds are simulated as independent segments with a
// warm-up lead so that long rest periods need not be integrated.

#include "ccrc/control.hpp"
#include "ccrc/diagnostics.hpp"
#include "ccrc/encoding.hpp"
#include "ccrc/readout.hpp"
#include "ccrc/substrate.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace ccrc {

struct ProtocolTiming {
    double time_compression = 10.0;
    int training_windows_full = 3600;     // 1 h at 1 s per window
    int test_rounds = 47;
    int patterns_per_round_full = 180;
    double initial_rest_full_ms = 15 * 60 * 1000.0;
    double round_period_full_ms = 15 * 60 * 1000.0;
    double warmup_ms = 10000.0;           // settling lead before each test round segment

    int training_windows() const { return std::max(1, static_cast<int>(std::lround(training_windows_full / time_compression))); }
    int patterns_per_round() const { return std::max(1, static_cast<int>(std::lround(patterns_per_round_full / time_compression))); }
    /// Rests are rounded to whole seconds so every onset stays on the 1 s modulation grid.
    TimeMs initial_rest() const { return 1000 * std::lround(initial_rest_full_ms / time_compression / 1000.0); }
    TimeMs round_period() const
    {
        return std::max<TimeMs>(1000 * patterns_per_round(), 1000 * std::lround(round_period_full_ms / time_compression / 1000.0));
    }

    void validate() const
    {
        require(std::isfinite(time_compression) && time_compression >= 1.0, "time compression must be >= 1");
        require(training_windows_full >= 1 && test_rounds >= 1 && patterns_per_round_full >= 1, "protocol counts must be positive");
        require(initial_rest_full_ms >= 0.0 && round_period_full_ms > 0.0 && warmup_ms >= 0.0, "protocol durations must be non-negative");
    }
};

struct RcPrograms {
    StimulusProgram training;  // absolute times; starts after the modulation lead-in
    StimulusProgram testing;   // absolute times
    StimulusProgram combined;
    std::vector<std::pair<TimeMs, TimeMs>> rounds;  // [first onset, end of last window)
    std::vector<double> round_times_h;              // protocol hours since the test session started
};

inline RcPrograms build_rc_programs(const ProtocolTiming& timing, const ModulationSpec& modulation,
                                    std::uint64_t train_seed, std::uint64_t test_seed, double intensity = 1.0)
{
    timing.validate();
    const auto patterns = standard_patterns();
    const auto lead = static_cast<TimeMs>(1000 * std::llround(modulation.lead_in));
    RcPrograms p;
    p.training = build_training_program(patterns, timing.training_windows(), train_seed, lead, intensity);
    TestTiming tt;
    tt.initial_rest = timing.initial_rest();
    tt.patterns_per_round = timing.patterns_per_round();
    tt.round_rest = timing.round_period() - 1000 * tt.patterns_per_round;
    auto test_rel = build_test_program(patterns, timing.test_rounds, test_seed, tt, 0, intensity);
    // Same modulation spec on both halves keeps the phase grid continuous.
    p.training.modulation = modulation;
    p.combined = apply_control(append_program(p.training, test_rel), modulation);
    p.combined.modulation = modulation;
    p.testing = test_rel;
    for (auto& e : p.testing.events)
        e.onset += p.training.span;
    for (auto& w : p.testing.windows)
        w.onset += p.training.span;
    p.testing.anchor = p.training.anchor;
    p.testing.span += p.training.span;
    p.testing.modulation = modulation;
    const TimeMs test_start = p.training.span;
    for (int r = 0; r < timing.test_rounds; ++r) {
        const TimeMs first = test_start + tt.initial_rest + r * timing.round_period();
        p.rounds.emplace_back(first, first + 1000 * tt.patterns_per_round);
        p.round_times_h.push_back(static_cast<double>(first - test_start) * timing.time_compression / 3.6e6);
    }
    return p;
}

/// Simulated recording of the whole protocol: training continuously, test rounds as segments.
inline SpikeTrainSet simulate_protocol(const Substrate& substrate, const DriftConfig& drift, const RcPrograms& p,
                                       const ProtocolTiming& timing)
{
    std::vector<SpikeTrainSet> parts;
    parts.push_back(substrate.simulate_window(p.combined, drift, 0.0, static_cast<double>(p.training.span), 0));
    double covered = static_cast<double>(p.training.span);
    for (std::size_t r = 0; r < p.rounds.size(); ++r) {
        // The warm-up never reaches back into the previous segment (short rests).
        const double begin = std::max(covered, static_cast<double>(p.rounds[r].first) - timing.warmup_ms);
        covered = static_cast<double>(p.rounds[r].second);
        parts.push_back(substrate.simulate_window(p.combined, drift, begin, covered, r + 1));
    }
    return merge_recordings(parts, static_cast<double>(p.combined.span));
}

/// Windows of `program` whose onset lies in [begin, end).
inline StimulusProgram windows_between(const StimulusProgram& program, TimeMs begin, TimeMs end)
{
    StimulusProgram out = program;
    out.windows.clear();
    out.events.clear();
    for (const auto& w : program.windows)
        if (w.onset >= begin && w.onset < end)
            out.windows.push_back(w);
    for (const auto& e : program.events)
        if (e.onset >= begin && e.onset < end)
            out.events.push_back(e);
    return out;
}

}  // namespace ccrc
