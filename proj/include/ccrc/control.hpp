#pragma once

// Chaos control: attach the periodic background modulation to a program
// and quantify how strongly burst onsets lock to it.

#include "ccrc/core.hpp"
#include "ccrc/diagnostics.hpp"
#include "ccrc/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ccrc {

/// Pattern events are never touched; only the modulation spec changes.
inline StimulusProgram apply_control(const StimulusProgram& program, const ModulationSpec& spec)
{
    if (!spec.enabled)
        return program;
    spec.validate();
    StimulusProgram out = program;
    out.modulation = spec;
    if (!out.windows.empty())
        out.anchor = out.windows.front().onset;
    return out;
}

/// Earliest time the modulation is non-zero (anchor - lead_in).
inline double modulation_start(const StimulusProgram& program)
{
    return static_cast<double>(program.anchor) - program.modulation.lead_in * 1000.0;
}

struct EntrainmentReport {
    double burst_interval_variance = 0.0;  // ms^2
    double burst_interval_sd = 0.0;        // ms
    double onset_phase_circular_variance = 0.0;
    double aligned_fraction = 0.0;
    double window_tolerance = 50.0;  // ms
    int burst_count = 0;
};

/// Phase of each onset relative to the program's modulation cycle (anchor + phase_offset),
/// defined whether or not the modulation is enabled so that paired runs are comparable.
inline EntrainmentReport entrainment_metrics(const BurstEvents& bursts, const StimulusProgram& program,
                                             double window_tolerance = 50.0)
{
    require(bursts.size() >= 2, "entrainment metrics need at least two bursts");
    require(window_tolerance >= 0.0, "window tolerance must be non-negative");
    EntrainmentReport r;
    r.window_tolerance = window_tolerance;
    r.burst_count = static_cast<int>(bursts.size());

    const auto& on = bursts.onsets;
    double mean = 0.0;
    for (std::size_t i = 1; i < on.size(); ++i)
        mean += on[i] - on[i - 1];
    mean /= static_cast<double>(on.size() - 1);
    double ss = 0.0;
    for (std::size_t i = 1; i < on.size(); ++i)
        ss += (on[i] - on[i - 1] - mean) * (on[i] - on[i - 1] - mean);
    r.burst_interval_variance = on.size() > 2 ? ss / static_cast<double>(on.size() - 2) : 0.0;
    r.burst_interval_sd = std::sqrt(r.burst_interval_variance);

    const double period = program.modulation.period_ms();
    const double ref = static_cast<double>(program.anchor) + program.modulation.phase_offset;
    double c = 0.0, s = 0.0;
    for (double t : on) {
        double u = std::fmod(t - ref, period);
        if (u < 0.0)
            u += period;
        const double phase = 2.0 * std::numbers::pi * u / period;
        c += std::cos(phase);
        s += std::sin(phase);
    }
    const double n = static_cast<double>(on.size());
    r.onset_phase_circular_variance = std::clamp(1.0 - std::hypot(c, s) / n, 0.0, 1.0);

    int aligned = 0;
    for (double t : on) {
        auto it = std::lower_bound(program.windows.begin(), program.windows.end(), t,
                                   [](const PatternWindow& w, double x) { return static_cast<double>(w.onset) < x; });
        double best = std::numeric_limits<double>::infinity();
        if (it != program.windows.end())
            best = std::min(best, static_cast<double>(it->onset) - t);
        if (it != program.windows.begin())
            best = std::min(best, t - static_cast<double>(std::prev(it)->onset));
        aligned += best <= window_tolerance;
    }
    r.aligned_fraction = aligned / n;
    return r;
}

}  // namespace ccrc
