#pragma once

#include "ccrc/core.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace ccrc {

using TimeMs = std::int64_t;

/// Frequency-coded optical pattern: label N is N pulses spread over the active window.
struct PatternSpec {
    int label = 1;
    TimeMs pulse_width = 15;
    TimeMs active_window = 900;
    TimeMs rest_window = 100;

    int pulse_count() const { return label; }
    TimeMs window_length() const { return active_window + rest_window; }

    void validate() const
    {
        require(label >= 1 && label <= 10, "pattern label must be in [1, 10]");
        require(pulse_width > 0 && active_window > 0 && rest_window >= 0, "pattern timings must be positive");
        require(pulse_count() * pulse_width <= active_window, "pulses do not fit in the active window");
    }
};

inline std::vector<PatternSpec> standard_patterns(TimeMs pulse_width = 15, TimeMs active = 900, TimeMs rest = 100)
{
    std::vector<PatternSpec> out;
    for (int n = 1; n <= 10; ++n)
        out.push_back(PatternSpec{n, pulse_width, active, rest});
    return out;
}

enum class ModulationShape { triangular };

/// Background periodic drive used for chaos control.
struct ModulationSpec {
    ModulationShape shape = ModulationShape::triangular;
    double frequency = 1.0;             // Hz
    double duty_cycle = 1.0;            // fraction of the period carrying the triangle
    double amplitude_fraction = 0.10;   // of the pattern intensity
    double lead_in = 40.0;              // s before the first pattern onset
    double phase_offset = 0.0;          // ms; 0 puts a rising zero-crossing on each window onset
    bool enabled = false;

    double period_ms() const { return 1000.0 / frequency; }

    void validate() const
    {
        require(std::isfinite(frequency) && frequency > 0.0, "modulation frequency must be positive");
        require(amplitude_fraction > 0.0 && amplitude_fraction < 1.0, "modulation amplitude must be in (0, 1)");
        require(duty_cycle > 0.0 && duty_cycle <= 1.0, "duty cycle must be in (0, 1]");
        require(std::isfinite(lead_in) && lead_in >= 0.0, "lead-in must be non-negative");
        require(std::isfinite(phase_offset), "phase offset must be finite");
    }

    bool operator==(const ModulationSpec&) const = default;
};

struct StimulusEvent {
    TimeMs onset = 0;
    double intensity = 1.0;
    TimeMs duration = 15;
    int label = 0;  // 0: unlabeled

    bool operator==(const StimulusEvent&) const = default;
};

struct PatternWindow {
    TimeMs onset = 0;
    int label = 0;

    bool operator==(const PatternWindow&) const = default;
};

struct StimulusProgram {
    std::vector<StimulusEvent> events;   // time-sorted pulses
    std::vector<PatternWindow> windows;  // labeled pattern windows
    ModulationSpec modulation;
    TimeMs anchor = 0;  // modulation phase reference (first window onset)
    TimeMs span = 0;
    double reference_intensity = 1.0;
    TimeMs window_length = 1000;
    TimeMs active_window = 900;
    TimeMs pulse_width = 15;

    bool operator==(const StimulusProgram&) const = default;
};

/// Pulse k starts at onset + floor(k * active_window / N).
inline std::vector<StimulusEvent> encode_pattern(const PatternSpec& spec, TimeMs onset, double intensity)
{
    spec.validate();
    require_finite(intensity, "intensity");
    require(intensity >= 0.0, "intensity must be non-negative");
    std::vector<StimulusEvent> out;
    const int n = spec.pulse_count();
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        out.push_back({onset + (k * spec.active_window) / n, intensity, spec.pulse_width, spec.label});
    return out;
}

/// Inverse of encode_pattern for a single window: the label is the pulse count.
inline int decode_pulse_count(const std::vector<StimulusEvent>& events, TimeMs window_onset, TimeMs window_length)
{
    return static_cast<int>(std::count_if(events.begin(), events.end(), [&](const StimulusEvent& e) {
        return e.onset >= window_onset && e.onset < window_onset + window_length;
    }));
}

namespace detail {

inline void check_pattern_set(const std::vector<PatternSpec>& patterns)
{
    require(!patterns.empty(), "pattern set must not be empty");
    for (const auto& p : patterns) {
        p.validate();
        require(p.window_length() == patterns.front().window_length() &&
                    p.active_window == patterns.front().active_window,
                "all patterns must share window timing");
    }
}

inline void append_window(StimulusProgram& prog, const PatternSpec& spec, TimeMs onset, double intensity)
{
    prog.windows.push_back({onset, spec.label});
    auto pulses = encode_pattern(spec, onset, intensity);
    prog.events.insert(prog.events.end(), pulses.begin(), pulses.end());
}

inline StimulusProgram empty_program(const std::vector<PatternSpec>& patterns, double intensity)
{
    StimulusProgram prog;
    prog.reference_intensity = intensity;
    prog.window_length = patterns.front().window_length();
    prog.active_window = patterns.front().active_window;
    prog.pulse_width = patterns.front().pulse_width;
    return prog;
}

}  // namespace detail

/// `count` back-to-back windows with labels drawn uniformly from the pattern set.
inline StimulusProgram build_training_program(const std::vector<PatternSpec>& patterns, int count, std::uint64_t seed,
                                              TimeMs start = 0, double intensity = 1.0)
{
    detail::check_pattern_set(patterns);
    require(count > 0, "training window count must be positive");
    require(start >= 0, "program start must be non-negative");
    auto prog = detail::empty_program(patterns, intensity);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, patterns.size() - 1);
    TimeMs t = start;
    for (int i = 0; i < count; ++i) {
        detail::append_window(prog, patterns[pick(rng)], t, intensity);
        t += prog.window_length;
    }
    prog.anchor = start;
    prog.span = t;
    return prog;
}

struct TestTiming {
    TimeMs initial_rest = 15 * 60 * 1000;
    int patterns_per_round = 180;
    TimeMs round_rest = 12 * 60 * 1000;
};

/// Balanced labels (cycled through the set) shuffled independently per round.
inline StimulusProgram build_test_program(const std::vector<PatternSpec>& patterns, int rounds, std::uint64_t seed,
                                          const TestTiming& timing = {}, TimeMs start = 0, double intensity = 1.0)
{
    detail::check_pattern_set(patterns);
    require(rounds >= 1, "at least one test round is required");
    require(timing.patterns_per_round >= 1 && timing.initial_rest >= 0 && timing.round_rest >= 0,
            "invalid test timing");
    auto prog = detail::empty_program(patterns, intensity);
    std::mt19937_64 rng(seed);
    TimeMs t = start + timing.initial_rest;
    prog.anchor = t;
    std::vector<std::size_t> order(static_cast<std::size_t>(timing.patterns_per_round));
    for (int r = 0; r < rounds; ++r) {
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i % patterns.size();
        std::shuffle(order.begin(), order.end(), rng);
        for (auto idx : order) {
            detail::append_window(prog, patterns[idx], t, intensity);
            t += prog.window_length;
        }
        t += timing.round_rest;
    }
    prog.span = t;
    return prog;
}

/// Concatenate `second` after `first` (shifted by first.span). Modulation and anchor come from `first`.
inline StimulusProgram append_program(const StimulusProgram& first, const StimulusProgram& second)
{
    require(first.window_length == second.window_length, "window lengths differ");
    StimulusProgram out = first;
    for (auto e : second.events) {
        e.onset += first.span;
        out.events.push_back(e);
    }
    for (auto w : second.windows) {
        w.onset += first.span;
        out.windows.push_back(w);
    }
    if (first.windows.empty() && !second.windows.empty())
        out.anchor = second.windows.front().onset + first.span;
    out.span = first.span + second.span;
    return out;
}

/// Triangle wave in [0, amplitude_fraction]; rising zero-crossings at anchor + phase_offset + k * period.
inline double modulation_waveform(const ModulationSpec& spec, TimeMs anchor, double t)
{
    if (!spec.enabled)
        return 0.0;
    if (t < static_cast<double>(anchor) - spec.lead_in * 1000.0)
        return 0.0;
    const double period = spec.period_ms();
    double u = std::fmod(t - static_cast<double>(anchor) - spec.phase_offset, period);
    if (u < 0.0)
        u += period;
    u /= period;
    if (u >= spec.duty_cycle)
        return 0.0;
    const double x = u / spec.duty_cycle;
    return spec.amplitude_fraction * (1.0 - std::abs(2.0 * x - 1.0));
}

/// Optical drive of a program: pattern pulses and the background modulation, separately.
class LightSchedule {
public:
    explicit LightSchedule(const StimulusProgram& program) : program_(program) {}

    /// Summed intensity of pulses active at t. Must be queried with non-decreasing t.
    double pulses(double t)
    {
        while (next_ < program_.events.size() && static_cast<double>(program_.events[next_].onset) <= t) {
            active_.push_back(next_);
            ++next_;
        }
        double drive = 0.0;
        for (std::size_t i = 0; i < active_.size();) {
            const auto& e = program_.events[active_[i]];
            if (static_cast<double>(e.onset + e.duration) <= t) {
                active_[i] = active_.back();
                active_.pop_back();
                continue;
            }
            drive += e.intensity;
            ++i;
        }
        return drive;
    }

    double modulation(double t) const
    {
        if (!program_.modulation.enabled || t >= static_cast<double>(program_.span))
            return 0.0;
        return program_.reference_intensity * modulation_waveform(program_.modulation, program_.anchor, t);
    }

    double operator()(double t) { return pulses(t) + modulation(t); }

private:
    const StimulusProgram& program_;
    std::size_t next_ = 0;
    std::vector<std::size_t> active_;
};

// Program file: magic line, key=value header, then window and event tables.
inline constexpr const char* kProgramMagic = "#CCRC-PROGRAM 1";

inline void write_program(std::ostream& os, const StimulusProgram& p)
{
    const auto& m = p.modulation;
    os << kProgramMagic << '\n'
       << "span_ms=" << p.span << '\n'
       << "anchor_ms=" << p.anchor << '\n'
       << "reference_intensity=" << format_double(p.reference_intensity) << '\n'
       << "window_ms=" << p.window_length << '\n'
       << "active_window_ms=" << p.active_window << '\n'
       << "pulse_width_ms=" << p.pulse_width << '\n'
       << "modulation.enabled=" << (m.enabled ? 1 : 0) << '\n'
       << "modulation.shape=triangular\n"
       << "modulation.frequency_hz=" << format_double(m.frequency) << '\n'
       << "modulation.duty_cycle=" << format_double(m.duty_cycle) << '\n'
       << "modulation.amplitude_fraction=" << format_double(m.amplitude_fraction) << '\n'
       << "modulation.lead_in_s=" << format_double(m.lead_in) << '\n'
       << "modulation.phase_offset_ms=" << format_double(m.phase_offset) << '\n'
       << "windows=" << p.windows.size() << '\n';
    for (const auto& w : p.windows)
        os << w.onset << '\t' << w.label << '\n';
    os << "events=" << p.events.size() << '\n';
    for (const auto& e : p.events)
        os << e.onset << '\t' << format_double(e.intensity) << '\t' << e.duration << '\t' << e.label << '\n';
}

inline StimulusProgram read_program(std::istream& is)
{
    std::string line;
    require(static_cast<bool>(std::getline(is, line)) && trim(line) == kProgramMagic, "missing program file header");
    StimulusProgram p;
    auto& m = p.modulation;
    auto next_kv = [&](std::string_view expected) {
        require(static_cast<bool>(std::getline(is, line)), "truncated program file");
        auto pos = line.find('=');
        require(pos != std::string::npos && trim(std::string_view(line).substr(0, pos)) == expected,
                "expected program key '" + std::string(expected) + "'");
        return std::string(trim(std::string_view(line).substr(pos + 1)));
    };
    p.span = parse_int(next_kv("span_ms"));
    p.anchor = parse_int(next_kv("anchor_ms"));
    p.reference_intensity = parse_double(next_kv("reference_intensity"));
    p.window_length = parse_int(next_kv("window_ms"));
    p.active_window = parse_int(next_kv("active_window_ms"));
    p.pulse_width = parse_int(next_kv("pulse_width_ms"));
    m.enabled = parse_int(next_kv("modulation.enabled")) != 0;
    require(next_kv("modulation.shape") == "triangular", "unsupported modulation shape");
    m.frequency = parse_double(next_kv("modulation.frequency_hz"));
    m.duty_cycle = parse_double(next_kv("modulation.duty_cycle"));
    m.amplitude_fraction = parse_double(next_kv("modulation.amplitude_fraction"));
    m.lead_in = parse_double(next_kv("modulation.lead_in_s"));
    m.phase_offset = parse_double(next_kv("modulation.phase_offset_ms"));
    m.validate();
    const auto n_windows = parse_int(next_kv("windows"));
    require(n_windows >= 0, "negative window count");
    for (long long i = 0; i < n_windows; ++i) {
        require(static_cast<bool>(std::getline(is, line)), "truncated window table");
        auto cols = split(trim(line), '\t');
        require(cols.size() == 2, "malformed window row");
        p.windows.push_back({parse_int(cols[0]), static_cast<int>(parse_int(cols[1]))});
    }
    const auto n_events = parse_int(next_kv("events"));
    require(n_events >= 0, "negative event count");
    for (long long i = 0; i < n_events; ++i) {
        require(static_cast<bool>(std::getline(is, line)), "truncated event table");
        auto cols = split(trim(line), '\t');
        require(cols.size() == 4, "malformed event row");
        p.events.push_back({parse_int(cols[0]), parse_double(cols[1]), parse_int(cols[2]),
                            static_cast<int>(parse_int(cols[3]))});
    }
    for (std::size_t i = 1; i < p.events.size(); ++i)
        require(p.events[i].onset >= p.events[i - 1].onset + p.events[i - 1].duration, "overlapping pattern events");
    for (const auto& e : p.events)
        require(e.onset + e.duration <= p.span, "event beyond program span");
    return p;
}

}  // namespace ccrc
