#pragma once

#include "ccrc/core.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace ccrc {

/// Per-channel spike timestamps (ms) over a recording of fixed duration.
class SpikeTrainSet {
public:
    SpikeTrainSet() = default;

    SpikeTrainSet(int channel_count, double duration_ms)
        : duration_(duration_ms), spikes_(static_cast<std::size_t>(channel_count))
    {
        require(channel_count > 0, "channel count must be positive");
        require(std::isfinite(duration_ms) && duration_ms >= 0.0, "duration must be finite and non-negative");
    }

    SpikeTrainSet(double duration_ms, std::vector<std::vector<double>> spikes)
        : duration_(duration_ms), spikes_(std::move(spikes))
    {
        require(!spikes_.empty(), "channel count must be positive");
        require(std::isfinite(duration_ms) && duration_ms >= 0.0, "duration must be finite and non-negative");
        for (const auto& train : spikes_) {
            for (std::size_t k = 0; k < train.size(); ++k) {
                require(train[k] >= 0.0 && train[k] < duration_, "spike timestamp outside [0, duration)");
                require(k == 0 || train[k] > train[k - 1], "spike timestamps must be strictly increasing per channel");
            }
        }
    }

    int channel_count() const { return static_cast<int>(spikes_.size()); }
    double duration() const { return duration_; }
    const std::vector<double>& channel(int c) const { return spikes_.at(static_cast<std::size_t>(c)); }
    const std::vector<std::vector<double>>& channels() const { return spikes_; }

    std::size_t total_spikes() const
    {
        std::size_t n = 0;
        for (const auto& train : spikes_)
            n += train.size();
        return n;
    }

    bool operator==(const SpikeTrainSet& other) const = default;

private:
    double duration_ = 0.0;
    std::vector<std::vector<double>> spikes_;
};

/// Channels x bins firing-rate matrix in Hz.
struct FiringRateMatrix {
    double bin_width = 100.0;  // ms
    double t0 = 0.0;           // ms offset of first bin
    Matrix values;             // channel_count x bin_count

    int channel_count() const { return static_cast<int>(values.rows()); }
    int bin_count() const { return static_cast<int>(values.cols()); }
    double bin_start(int k) const { return t0 + k * bin_width; }
};

/// Bin spike counts into rates (Hz). Only complete bins inside the recording are produced.
inline FiringRateMatrix bin_rates(const SpikeTrainSet& spikes, double bin_width, double t0 = 0.0)
{
    require(bin_width > 0.0 && std::isfinite(bin_width), "bin width must be positive");
    require(std::isfinite(t0) && t0 >= 0.0, "bin origin must be finite and non-negative");
    FiringRateMatrix out;
    out.bin_width = bin_width;
    out.t0 = t0;
    long bins = 0;
    if (t0 < spikes.duration())
        bins = static_cast<long>(std::floor((spikes.duration() - t0) / bin_width + 1e-9));
    out.values = Matrix::Zero(spikes.channel_count(), bins);
    if (bins == 0)
        return out;
    const double end = t0 + bins * bin_width;
    const double scale = 1000.0 / bin_width;
    for (int c = 0; c < spikes.channel_count(); ++c) {
        const auto& train = spikes.channel(c);
        auto it = std::lower_bound(train.begin(), train.end(), t0);
        for (; it != train.end() && *it < end; ++it) {
            auto k = static_cast<long>(std::floor((*it - t0) / bin_width));
            k = std::clamp(k, 0L, bins - 1);
            out.values(c, k) += scale;
        }
    }
    return out;
}

/// Relabel channels: output channel perm[c] carries input channel c.
inline SpikeTrainSet permute_channels(const SpikeTrainSet& spikes, const std::vector<int>& perm)
{
    require(static_cast<int>(perm.size()) == spikes.channel_count(), "permutation size mismatch");
    std::vector<std::vector<double>> out(perm.size());
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t c = 0; c < perm.size(); ++c) {
        const auto target = static_cast<std::size_t>(perm[c]);
        require(target < perm.size() && !seen[target], "not a permutation");
        seen[target] = true;
        out[target] = spikes.channels()[c];
    }
    return SpikeTrainSet(spikes.duration(), std::move(out));
}

/// Restrict to [begin, end) and shift so that `begin` maps to 0.
inline SpikeTrainSet slice(const SpikeTrainSet& spikes, double begin, double end)
{
    require(begin >= 0.0 && end >= begin, "invalid slice bounds");
    end = std::min(end, spikes.duration());
    std::vector<std::vector<double>> out(spikes.channels().size());
    for (std::size_t c = 0; c < out.size(); ++c) {
        const auto& train = spikes.channels()[c];
        auto lo = std::lower_bound(train.begin(), train.end(), begin);
        auto hi = std::lower_bound(train.begin(), train.end(), end);
        for (auto it = lo; it != hi; ++it)
            out[c].push_back(*it - begin);
    }
    return SpikeTrainSet(std::max(0.0, end - begin), std::move(out));
}

// Spike file: magic line, `channels=<n> duration_ms=<d>`, then one
// `channel<TAB>timestamp_ms` row per spike sorted by (channel, time).
inline constexpr const char* kSpikeMagic = "#CCRC-SPIKES 1";

inline void write_spikes(std::ostream& os, const SpikeTrainSet& spikes)
{
    os << kSpikeMagic << '\n';
    os << "channels=" << spikes.channel_count() << " duration_ms=" << format_double(spikes.duration()) << '\n';
    for (int c = 0; c < spikes.channel_count(); ++c)
        for (double t : spikes.channel(c))
            os << c << '\t' << format_double(t) << '\n';
}

inline SpikeTrainSet read_spikes(std::istream& is)
{
    std::string line;
    require(static_cast<bool>(std::getline(is, line)) && trim(line) == kSpikeMagic, "missing spike file header");
    require(static_cast<bool>(std::getline(is, line)), "missing spike file dimensions");
    int channels = -1;
    double duration = -1.0;
    for (auto field : split(trim(line), ' ')) {
        auto kv = split(field, '=');
        require(kv.size() == 2, "malformed spike header field");
        if (kv[0] == "channels")
            channels = static_cast<int>(parse_int(kv[1]));
        else if (kv[0] == "duration_ms")
            duration = parse_double(kv[1]);
        else
            throw ValidationError("unknown spike header field: " + std::string(kv[0]));
    }
    require(channels > 0 && duration >= 0.0, "spike header missing channels or duration");
    std::vector<std::vector<double>> trains(static_cast<std::size_t>(channels));
    int last_channel = 0;
    while (std::getline(is, line)) {
        auto view = trim(line);
        if (view.empty())
            continue;
        auto cols = split(view, '\t');
        require(cols.size() == 2, "malformed spike row");
        auto c = static_cast<int>(parse_int(cols[0]));
        require(c >= 0 && c < channels, "spike channel out of range");
        require(c >= last_channel, "spike rows must be sorted by channel");
        last_channel = c;
        trains[static_cast<std::size_t>(c)].push_back(parse_double(cols[1]));
    }
    return SpikeTrainSet(duration, std::move(trains));
}

}  // namespace ccrc
