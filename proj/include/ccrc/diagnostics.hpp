#pragma once

// Pre-flight characterization of spontaneous activity: burst detection,
// avalanche branching ratio, kernel/generalization rank, spectral radius of a
// fitted linear state map, mean pairwise transfer entropy, and Type A-D
// categorization.

#include "ccrc/core.hpp"
#include "ccrc/encoding.hpp"
#include "ccrc/spikes.hpp"
#include "ccrc/substrate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

namespace ccrc {

struct BurstEvents {
    std::vector<double> onsets;   // ms
    std::vector<double> offsets;  // ms, exclusive
    std::vector<std::size_t> spike_counts;

    std::size_t size() const { return onsets.size(); }
};

struct BurstParams {
    double bin_width = 10.0;         // ms
    double threshold_fraction = 0.25;  // of channels active within a bin
};

/// A burst is a maximal run of bins in which at least threshold_fraction of the channels spike.
inline BurstEvents detect_bursts(const SpikeTrainSet& spikes, const BurstParams& params = {})
{
    require(params.bin_width > 0.0, "burst bin width must be positive");
    const auto bins = static_cast<long>(std::floor(spikes.duration() / params.bin_width + 1e-9));
    std::vector<int> active(static_cast<std::size_t>(std::max(0L, bins)), 0);
    std::vector<std::size_t> counts(active.size(), 0);
    for (int c = 0; c < spikes.channel_count(); ++c) {
        long last = -1;
        for (double t : spikes.channel(c)) {
            const auto k = static_cast<long>(t / params.bin_width);
            if (k >= bins)
                break;
            ++counts[static_cast<std::size_t>(k)];
            if (k != last) {
                ++active[static_cast<std::size_t>(k)];
                last = k;
            }
        }
    }
    const double needed = params.threshold_fraction * spikes.channel_count();
    BurstEvents out;
    long k = 0;
    while (k < bins) {
        if (active[static_cast<std::size_t>(k)] >= needed && active[static_cast<std::size_t>(k)] > 0) {
            const long start = k;
            std::size_t n = 0;
            while (k < bins && active[static_cast<std::size_t>(k)] >= needed && active[static_cast<std::size_t>(k)] > 0)
                n += counts[static_cast<std::size_t>(k++)];
            out.onsets.push_back(start * params.bin_width);
            out.offsets.push_back(k * params.bin_width);
            out.spike_counts.push_back(n);
        } else {
            ++k;
        }
    }
    return out;
}

/// Fraction of spikes falling outside bursts (each burst padded by `pad` ms on both sides).
inline double interburst_spike_fraction(const SpikeTrainSet& spikes, const BurstEvents& bursts, double pad)
{
    const auto total = spikes.total_spikes();
    if (total == 0)
        return 0.0;
    std::size_t outside = 0;
    for (int c = 0; c < spikes.channel_count(); ++c) {
        std::size_t b = 0;
        for (double t : spikes.channel(c)) {
            while (b < bursts.size() && bursts.offsets[b] + pad <= t)
                ++b;
            const bool inside = b < bursts.size() && t >= bursts.onsets[b] - pad;
            if (!inside)
                ++outside;
        }
    }
    return static_cast<double>(outside) / static_cast<double>(total);
}

/// Population spike count per bin.
inline std::vector<std::uint32_t> population_counts(const SpikeTrainSet& spikes, double bin_width)
{
    const auto bins = static_cast<std::size_t>(std::floor(spikes.duration() / bin_width + 1e-9));
    std::vector<std::uint32_t> n(bins, 0);
    for (const auto& train : spikes.channels())
        for (double t : train) {
            const auto k = static_cast<std::size_t>(t / bin_width);
            if (k < bins)
                ++n[k];
        }
    return n;
}

/// Avalanches are runs of non-empty bins delimited by empty bins. The branching
/// ratio is the mean over avalanches of descendants / ancestors, i.e. the count
/// in an avalanche's second bin over its first (zero for single-bin avalanches).
/// Runs touching the recording edges are excluded because they are truncated.
inline double branching_ratio(const std::vector<std::uint32_t>& counts)
{
    double sum = 0.0;
    std::size_t avalanches = 0;
    std::size_t k = 0;
    const std::size_t n = counts.size();
    while (k < n) {
        if (counts[k] == 0) {
            ++k;
            continue;
        }
        const std::size_t start = k;
        while (k < n && counts[k] != 0)
            ++k;
        if (start == 0 || k == n)
            continue;
        const double ancestors = counts[start];
        const double descendants = (start + 1 < k) ? counts[start + 1] : 0.0;
        sum += descendants / ancestors;
        ++avalanches;
    }
    if (avalanches == 0)
        throw NumericalError("branching ratio not computable: no complete avalanches");
    return sum / static_cast<double>(avalanches);
}

inline double branching_ratio(const SpikeTrainSet& spikes, double bin_width = 1.0)
{
    require(bin_width > 0.0, "bin width must be positive");
    return branching_ratio(population_counts(spikes, bin_width));
}

inline int kernel_rank(const FiringRateMatrix& rates, double tolerance = 0.05)
{
    require(rates.bin_count() >= 2, "kernel rank needs at least two bins");
    require(tolerance > 0.0 && tolerance < 1.0, "rank tolerance must be in (0, 1)");
    return effective_rank(rates.values, tolerance);
}

struct GeneralizationRankResult {
    int rank = 0;
    Matrix responses;  // channels x repeats
};

/// Present `repeats` jittered copies of one pattern (each from the same initial
/// state, independent background noise) and rank the post-stimulus responses.
inline GeneralizationRankResult generalization_rank(const Substrate& substrate, const PatternSpec& probe,
                                                    double noise_level, int repeats, double tolerance = 0.05,
                                                    std::uint64_t seed = 0, double intensity = 1.0,
                                                    TimeMs settle = 1000)
{
    require(repeats >= 2, "generalization rank needs at least two repeats");
    require(noise_level >= 0.0 && std::isfinite(noise_level), "jitter must be non-negative");
    probe.validate();
    std::mt19937_64 rng(derive_seed(seed, "jitter"));
    const auto jitter = static_cast<TimeMs>(std::floor(noise_level));
    std::uniform_int_distribution<TimeMs> shift(-jitter, jitter);
    GeneralizationRankResult out;
    out.responses = Matrix::Zero(substrate.channel_count(), repeats);
    const TimeMs onset = settle;
    for (int r = 0; r < repeats; ++r) {
        StimulusProgram prog;
        prog.window_length = probe.window_length();
        prog.active_window = probe.active_window;
        prog.reference_intensity = intensity;
        prog.events = encode_pattern(probe, onset, intensity);
        TimeMs prev_end = onset - jitter;
        for (auto& e : prog.events) {
            e.onset = std::max(e.onset + shift(rng), prev_end);
            prev_end = e.onset + e.duration;
        }
        prog.windows.push_back({onset, probe.label});
        prog.anchor = onset;
        prog.span = onset + probe.window_length() + jitter;
        const double sample_begin = static_cast<double>(onset + probe.active_window);
        const double sample_end = sample_begin + static_cast<double>(probe.rest_window > 0 ? probe.rest_window : 100);
        auto spikes = substrate.simulate_window(prog, DriftConfig{}, 0.0, std::max<double>(sample_end, prog.span),
                                                derive_seed(seed, "repeat", static_cast<std::uint64_t>(r)));
        auto rates = bin_rates(slice(spikes, sample_begin, sample_end), sample_end - sample_begin);
        out.responses.col(r) = rates.values.col(0);
    }
    out.rank = effective_rank(out.responses, tolerance);
    return out;
}

/// Largest eigenvalue magnitude of a ridge-fitted map x(t+1) = A x(t) on mean-centered rates.
inline double spectral_radius(const FiringRateMatrix& rates, double ridge = 1e-3)
{
    require(rates.bin_count() >= 2, "spectral radius needs at least two bins");
    require(rates.values.allFinite(), "rates must be finite");
    Matrix x = rates.values;
    x.colwise() -= x.rowwise().mean();
    const auto t = x.cols();
    const Matrix past = x.leftCols(t - 1);
    const Matrix next = x.rightCols(t - 1);
    Matrix gram = past * past.transpose();
    const double scale = gram.trace() / static_cast<double>(gram.rows());
    if (!(scale > 0.0))
        return 0.0;
    gram.diagonal().array() += ridge * scale;
    const Matrix a = gram.ldlt().solve(past * next.transpose()).transpose();
    Eigen::EigenSolver<Matrix> eig(a, false);
    if (eig.info() != Eigen::Success)
        throw NumericalError("eigen decomposition failed");
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

/// Binary occupancy per channel per bin.
inline std::vector<std::vector<std::uint8_t>> binarize(const SpikeTrainSet& spikes, double bin_width)
{
    const auto bins = static_cast<std::size_t>(std::floor(spikes.duration() / bin_width + 1e-9));
    std::vector<std::vector<std::uint8_t>> out(static_cast<std::size_t>(spikes.channel_count()),
                                               std::vector<std::uint8_t>(bins, 0));
    for (int c = 0; c < spikes.channel_count(); ++c)
        for (double t : spikes.channel(c)) {
            const auto k = static_cast<std::size_t>(t / bin_width);
            if (k < bins)
                out[static_cast<std::size_t>(c)][k] = 1;
        }
    return out;
}

/// Plug-in transfer entropy source -> target in bits with `history`-bin pasts.
inline double transfer_entropy(const std::vector<std::uint8_t>& source, const std::vector<std::uint8_t>& target,
                               int history = 1)
{
    require(history >= 1 && history <= 8, "history must be in [1, 8]");
    require(source.size() == target.size(), "series lengths differ");
    const auto h = static_cast<std::size_t>(history);
    require(source.size() > h + 1, "record too short for the requested history");
    const std::size_t states = std::size_t{1} << (2 * h + 1);
    std::vector<std::uint64_t> joint(states, 0);
    const std::size_t mask = (std::size_t{1} << h) - 1;
    std::size_t tp = 0, sp = 0;
    for (std::size_t t = 0; t < h; ++t) {
        tp = ((tp << 1) | target[t]) & mask;
        sp = ((sp << 1) | source[t]) & mask;
    }
    for (std::size_t t = h; t < target.size(); ++t) {
        ++joint[(static_cast<std::size_t>(target[t]) << (2 * h)) | (tp << h) | sp];
        tp = ((tp << 1) | target[t]) & mask;
        sp = ((sp << 1) | source[t]) & mask;
    }
    const double total = static_cast<double>(target.size() - h);
    const std::size_t past_states = std::size_t{1} << h;
    std::vector<double> p_past_both(past_states * past_states, 0.0), p_next_tpast(2 * past_states, 0.0),
        p_tpast(past_states, 0.0);
    for (std::size_t s = 0; s < states; ++s) {
        const double c = static_cast<double>(joint[s]);
        const std::size_t next = s >> (2 * h), tpast = (s >> h) & mask, spast = s & mask;
        p_past_both[(tpast << h) | spast] += c;
        p_next_tpast[(next << h) | tpast] += c;
        p_tpast[tpast] += c;
    }
    double te = 0.0;
    for (std::size_t s = 0; s < states; ++s) {
        if (joint[s] == 0)
            continue;
        const double c = static_cast<double>(joint[s]);
        const std::size_t next = s >> (2 * h), tpast = (s >> h) & mask, spast = s & mask;
        te += c / total *
              std::log2((c * p_tpast[tpast]) / (p_past_both[(tpast << h) | spast] * p_next_tpast[(next << h) | tpast]));
    }
    return std::max(0.0, te);
}

inline double mean_transfer_entropy(const std::vector<std::vector<std::uint8_t>>& channels, int history = 1)
{
    require(channels.size() >= 2, "transfer entropy needs at least two channels");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < channels.size(); ++i)
        for (std::size_t j = 0; j < channels.size(); ++j) {
            if (i == j)
                continue;
            sum += transfer_entropy(channels[i], channels[j], history);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

inline double mean_transfer_entropy(const SpikeTrainSet& spikes, double bin_width = 10.0, int history = 1)
{
    require(spikes.channel_count() >= 2, "transfer entropy needs at least two channels");
    require(bin_width > 0.0, "bin width must be positive");
    return mean_transfer_entropy(binarize(spikes, bin_width), history);
}

struct CategorizeParams {
    BurstParams bursts;
    double min_duration = 300000.0;     // ms
    double coherence_floor = 5.0;       // bursts per 5 minutes
    double d_interburst_fraction = 0.05;
    double b_c_rate_boundary = 0.5;     // Hz
    double burst_pad = 10.0;            // ms added around bursts when counting interburst spikes
    double kernel_rank_tolerance = 0.05;
    double rate_bin_width = 100.0;      // ms, kernel rank and spectral radius
    double avalanche_bin_width = 1.0;   // ms
    double te_bin_width = 10.0;         // ms
    int te_history = 1;
    bool compute_metrics = true;
};

struct DiagnosticsReport {
    ActivityType type_label = ActivityType::A;
    double burst_rate = 0.0;           // Hz
    std::size_t burst_count = 0;
    double interburst_fraction = 0.0;
    std::optional<double> branching_ratio;
    // Empty when metrics were skipped (or, for the branching ratio, not estimable).
    std::optional<int> kernel_rank;
    std::optional<int> generalization_rank;
    std::optional<double> spectral_radius;
    std::optional<double> mean_transfer_entropy;  // bits
    double recording_duration = 0.0;     // s
};

inline DiagnosticsReport categorize(const SpikeTrainSet& spikes, const CategorizeParams& params = {})
{
    require(spikes.duration() >= params.min_duration, "categorization needs at least 5 minutes of activity");
    DiagnosticsReport rep;
    rep.recording_duration = spikes.duration() / 1000.0;
    const auto bursts = detect_bursts(spikes, params.bursts);
    rep.burst_count = bursts.size();
    rep.burst_rate = static_cast<double>(bursts.size()) / rep.recording_duration;
    rep.interburst_fraction = interburst_spike_fraction(spikes, bursts, params.burst_pad);
    const double per_five_minutes = static_cast<double>(bursts.size()) * 300.0 / rep.recording_duration;
    if (per_five_minutes < params.coherence_floor)
        rep.type_label = ActivityType::A;
    else if (rep.interburst_fraction < params.d_interburst_fraction)
        rep.type_label = ActivityType::D;
    else if (rep.burst_rate < params.b_c_rate_boundary)
        rep.type_label = ActivityType::B;
    else
        rep.type_label = ActivityType::C;

    if (params.compute_metrics) {
        if (rep.type_label != ActivityType::A) {
            try {
                rep.branching_ratio = branching_ratio(spikes, params.avalanche_bin_width);
            } catch (const NumericalError&) {
            }
        }
        const auto rates = bin_rates(spikes, params.rate_bin_width);
        rep.kernel_rank = kernel_rank(rates, params.kernel_rank_tolerance);
        rep.spectral_radius = spectral_radius(rates);
        if (spikes.channel_count() >= 2)
            rep.mean_transfer_entropy = mean_transfer_entropy(spikes, params.te_bin_width, params.te_history);
    }
    return rep;
}

/// Flat key=value block.
inline void write_diagnostics(std::ostream& os, const DiagnosticsReport& r)
{
    os << "type=" << to_char(r.type_label) << '\n'
       << "burst_rate_hz=" << format_double(r.burst_rate) << '\n'
       << "burst_count=" << r.burst_count << '\n'
       << "interburst_fraction=" << format_double(r.interburst_fraction) << '\n'
       << "branching_ratio=" << (r.branching_ratio ? format_double(*r.branching_ratio) : "NA") << '\n'
       << "kernel_rank=" << (r.kernel_rank ? std::to_string(*r.kernel_rank) : "NA") << '\n'
       << "generalization_rank=" << (r.generalization_rank ? std::to_string(*r.generalization_rank) : "NA") << '\n'
       << "spectral_radius=" << (r.spectral_radius ? format_double(*r.spectral_radius) : "NA") << '\n'
       << "mean_transfer_entropy_bits=" << (r.mean_transfer_entropy ? format_double(*r.mean_transfer_entropy) : "NA")
       << '\n'
       << "recording_duration_s=" << format_double(r.recording_duration) << '\n';
}

}  // namespace ccrc
