#pragma once

// Surrogate living reservoir: a sparse recurrent network of leaky
// integrate-and-fire neurons with Tsodyks-Markram depression on excitatory
// synapses, slow spike-triggered adaptation, Poisson background kicks and an
// optical drive current. Neuron i is recorded on channel i mod channel_count.

#include "ccrc/core.hpp"
#include "ccrc/encoding.hpp"
#include "ccrc/spikes.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace ccrc {

struct DepressionParams {
    double utilization = 0.2;   // fraction of resources used per spike
    double recovery_tau = 800;  // ms

    bool operator==(const DepressionParams&) const = default;
};

struct SubstrateConfig {
    int neuron_count = 512;
    int channel_count = 128;
    double connection_probability = 0.1;
    double synaptic_weight_scale = 1.0;
    DepressionParams depression;
    double excitability_bias = 0.8;  // in units of the firing threshold
    double noise_rate = 5.0;         // Hz per neuron
    double light_gain = 1.0;         // current per unit intensity
    std::uint64_t seed = 1;

    // Finer structure of the surrogate; presets set these too.
    double inhibitory_fraction = 0.2;
    double inhibition_ratio = 1.0;     // inhibitory / excitatory coupling
    double base_coupling = 2.0;        // excitatory coupling before synaptic_weight_scale
    double noise_amplitude = 0.25;     // voltage kick per background event
    double bias_spread = 0.05;         // sd of per-neuron bias around excitability_bias
    double membrane_tau = 20.0;        // ms
    double synaptic_tau = 5.0;         // ms
    double refractory = 2.0;           // ms
    double adaptation_strength = 0.15; // mean current per unit adaptation
    double adaptation_tau_min = 100.0; // ms, log-uniform range across neurons
    double adaptation_tau_max = 2000.0;
    double light_responsive_fraction = 0.7;

    bool operator==(const SubstrateConfig&) const = default;

    void validate() const
    {
        require(neuron_count > 0 && channel_count > 0, "neuron and channel counts must be positive");
        require(neuron_count >= channel_count, "neuron_count must be >= channel_count");
        require(connection_probability > 0.0 && connection_probability < 1.0, "connection probability must be in (0, 1)");
        const double finite_params[] = {synaptic_weight_scale, depression.utilization, depression.recovery_tau,
                                        excitability_bias,     noise_rate,             light_gain,
                                        inhibitory_fraction,   inhibition_ratio,       base_coupling,
                                        noise_amplitude,       bias_spread,            membrane_tau,
                                        synaptic_tau,          refractory,             adaptation_strength,
                                        adaptation_tau_min,    adaptation_tau_max,     light_responsive_fraction};
        for (double v : finite_params)
            require_finite(v, "substrate parameter");
        require(synaptic_weight_scale >= 0.0 && light_gain >= 0.0 && noise_rate >= 0.0, "scales and rates must be non-negative");
        require(depression.utilization > 0.0 && depression.utilization <= 1.0, "utilization must be in (0, 1]");
        require(depression.recovery_tau > 0.0 && membrane_tau > 0.0 && synaptic_tau > 0.0, "time constants must be positive");
        require(adaptation_tau_min > 0.0 && adaptation_tau_max >= adaptation_tau_min, "adaptation time constants must be positive");
        require(refractory >= 0.0 && noise_amplitude >= 0.0 && bias_spread >= 0.0 && adaptation_strength >= 0.0,
                "non-negative parameter expected");
        require(inhibitory_fraction >= 0.0 && inhibitory_fraction < 1.0, "inhibitory fraction must be in [0, 1)");
        require(light_responsive_fraction >= 0.0 && light_responsive_fraction <= 1.0, "responsive fraction must be in [0, 1]");
    }
};

/// Slow loss of efficacy and excitability change over (protocol) hours.
struct DriftConfig {
    double efficacy_decay_rate = 0.0;   // per hour, multiplicative on light_gain
    double synaptic_decay_rate = 0.0;   // per hour, multiplicative on synaptic_weight_scale
    double excitability_drift_rate = 0.0;  // bias units per hour
    double responsiveness_cutoff = 6.0;    // hours; light response vanishes afterwards
    double time_scale = 1.0;               // drift hours per simulated hour
    double onset = 0.0;                    // ms; drift clock starts here
    bool enabled = false;

    bool operator==(const DriftConfig&) const = default;

    void validate() const
    {
        require(std::isfinite(efficacy_decay_rate) && efficacy_decay_rate >= 0.0, "efficacy decay rate must be >= 0");
        require(std::isfinite(synaptic_decay_rate) && synaptic_decay_rate >= 0.0, "synaptic decay rate must be >= 0");
        require(std::isfinite(excitability_drift_rate) && excitability_drift_rate >= 0.0, "excitability drift must be >= 0");
        require(std::isfinite(responsiveness_cutoff) && responsiveness_cutoff > 0.0, "responsiveness cutoff must be > 0");
        require(std::isfinite(time_scale) && time_scale > 0.0, "drift time scale must be > 0");
        require(std::isfinite(onset) && onset >= 0.0, "drift onset must be >= 0");
    }

    double hours_at(double t_ms) const { return std::max(0.0, t_ms - onset) / 3.6e6 * time_scale; }
    double light_factor(double t_ms) const
    {
        if (!enabled)
            return 1.0;
        const double h = hours_at(t_ms);
        return h >= responsiveness_cutoff ? 0.0 : std::exp(-efficacy_decay_rate * h);
    }
    double synaptic_factor(double t_ms) const { return enabled ? std::exp(-synaptic_decay_rate * hours_at(t_ms)) : 1.0; }
    double bias_shift(double t_ms) const { return enabled ? excitability_drift_rate * hours_at(t_ms) : 0.0; }
};

enum class ActivityType { A, B, C, D };

inline char to_char(ActivityType t) { return static_cast<char>('A' + static_cast<int>(t)); }

inline ActivityType parse_activity_type(std::string_view s)
{
    if (s == "A" || s == "a") return ActivityType::A;
    if (s == "B" || s == "b") return ActivityType::B;
    if (s == "C" || s == "c") return ActivityType::C;
    if (s == "D" || s == "d") return ActivityType::D;
    throw ValidationError("unknown activity type '" + std::string(s) + "'");
}

/// Frozen configurations whose spontaneous activity categorizes as the given Type.
inline SubstrateConfig preset(ActivityType type)
{
    SubstrateConfig c;
    switch (type) {
    case ActivityType::A:  // weakly coupled, Poisson-like
        c.synaptic_weight_scale = 0.15;
        break;
    case ActivityType::B:  // slow bursting with interburst spiking
        c.synaptic_weight_scale = 1.5;
        c.depression.recovery_tau = 4000.0;
        c.excitability_bias = 0.65;
        c.noise_rate = 8.0;
        break;
    case ActivityType::C:  // fast bursting with interburst spiking; tonic cells carry the evoked code
        c.synaptic_weight_scale = 0.6;
        c.excitability_bias = 0.85;
        c.bias_spread = 0.35;
        c.adaptation_strength = 0.7;
        c.noise_rate = 1.0;
        break;
    case ActivityType::D:  // regular bursts, quiet in between
        c.synaptic_weight_scale = 2.0;
        c.noise_rate = 2.0;
        break;
    }
    return c;
}

/// Instantiated network: connectivity and per-neuron parameters drawn from the config seed.
class Substrate {
public:
    explicit Substrate(SubstrateConfig config) : config_(std::move(config))
    {
        config_.validate();
        build();
    }

    const SubstrateConfig& config() const { return config_; }
    int neuron_count() const { return config_.neuron_count; }
    int channel_count() const { return config_.channel_count; }
    int channel_of(int neuron) const { return neuron % config_.channel_count; }
    bool is_excitatory(int neuron) const { return excitatory_[static_cast<std::size_t>(neuron)]; }

    /// Simulate program time [begin, end). Spikes carry absolute timestamps; the
    /// returned set has duration `end`. `stream` selects the background-noise realization.
    SpikeTrainSet simulate_window(const StimulusProgram& program, const DriftConfig& drift, double begin, double end,
                                  std::uint64_t stream = 0) const
    {
        drift.validate();
        require(std::isfinite(begin) && std::isfinite(end) && begin >= 0.0 && end >= begin, "invalid simulation window");
        const int n = config_.neuron_count;
        std::vector<std::vector<double>> trains(static_cast<std::size_t>(config_.channel_count));

        std::mt19937_64 rng(derive_seed(config_.seed, "noise", stream));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::exponential_distribution<double> expo(1.0);

        std::vector<double> v(n), i_exc(n, 0.0), i_inh(n, 0.0), adapt(n, 0.0), resources(n, 1.0), last_release(n, begin);
        std::vector<double> refractory_until(n, -1.0), next_noise(n, std::numeric_limits<double>::infinity());
        const double noise_per_ms = config_.noise_rate / 1000.0;
        {
            std::mt19937_64 init_rng(derive_seed(config_.seed, "init"));
            for (int i = 0; i < n; ++i)
                v[i] = unif(init_rng) * std::clamp(bias_[i], 0.0, 0.95);
        }
        if (noise_per_ms > 0.0)
            for (int i = 0; i < n; ++i)
                next_noise[i] = begin + expo(rng) / noise_per_ms;

        const double dt = 1.0;
        const double decay_syn = std::exp(-dt / config_.synaptic_tau);
        const double leak = dt / config_.membrane_tau;
        const double u = config_.depression.utilization;
        const double tau_rec = config_.depression.recovery_tau;
        LightSchedule light(program);

        std::vector<int> fired;
        fired.reserve(n);
        for (double t = begin; t < end; t += dt) {
            // Efficacy loss affects the pulsed input only; the slow background drive is spared.
            const double drive = (light.pulses(t) * drift.light_factor(t) + light.modulation(t)) * config_.light_gain;
            const double syn = drift.synaptic_factor(t);
            const double shift = drift.bias_shift(t);
            fired.clear();
            for (int i = 0; i < n; ++i) {
                i_exc[i] *= decay_syn;
                i_inh[i] *= decay_syn;
                adapt[i] *= adapt_decay_[i];
                int kicks = 0;
                while (next_noise[i] <= t) {
                    ++kicks;
                    next_noise[i] += expo(rng) / noise_per_ms;
                }
                if (t < refractory_until[i])
                    continue;
                const double current = bias_[i] + shift + i_exc[i] - i_inh[i] + drive * light_sensitivity_[i] -
                                       adapt_strength_[i] * adapt[i];
                v[i] += leak * (current - v[i]) + kicks * config_.noise_amplitude;
                if (v[i] >= 1.0) {
                    v[i] = 0.0;
                    refractory_until[i] = t + config_.refractory;
                    adapt[i] += 1.0;
                    fired.push_back(i);
                }
            }
            for (int i : fired) {
                trains[static_cast<std::size_t>(channel_of(i))].push_back(t);
                const auto lo = offsets_[i], hi = offsets_[i + 1];
                if (excitatory_[i]) {
                    resources[i] = 1.0 - (1.0 - resources[i]) * std::exp(-(t - last_release[i]) / tau_rec);
                    last_release[i] = t;
                    const double w = coupling_exc_ * syn * u * resources[i];
                    resources[i] -= u * resources[i];
                    for (auto k = lo; k < hi; ++k)
                        i_exc[targets_[k]] += w;
                } else {
                    const double w = coupling_inh_ * syn;
                    for (auto k = lo; k < hi; ++k)
                        i_inh[targets_[k]] += w;
                }
            }
        }
        // Spikes were appended in time order per channel; neurons sharing a channel may
        // fire in the same step, so merge duplicates by nudging to distinct sub-ms times.
        const double nudge = 1.0 / (std::ceil(static_cast<double>(n) / config_.channel_count) + 1.0);
        for (auto& train : trains)
            make_strictly_increasing(train, nudge);
        return SpikeTrainSet(end, std::move(trains));
    }

private:
    static void make_strictly_increasing(std::vector<double>& train, double nudge)
    {
        for (std::size_t k = 1; k < train.size(); ++k)
            if (train[k] <= train[k - 1])
                train[k] = train[k - 1] + nudge;
    }

    void build()
    {
        const int n = config_.neuron_count;
        std::mt19937_64 rng(derive_seed(config_.seed, "network"));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);

        excitatory_.assign(static_cast<std::size_t>(n), true);
        bias_.resize(n);
        adapt_decay_.resize(n);
        adapt_strength_.resize(n);
        light_sensitivity_.resize(n);
        const double log_lo = std::log(config_.adaptation_tau_min), log_hi = std::log(config_.adaptation_tau_max);
        for (int i = 0; i < n; ++i) {
            excitatory_[static_cast<std::size_t>(i)] = unif(rng) >= config_.inhibitory_fraction;
            bias_[i] = config_.excitability_bias + config_.bias_spread * gauss(rng);
            const double tau_a = std::exp(log_lo + (log_hi - log_lo) * unif(rng));
            adapt_decay_[i] = std::exp(-1.0 / tau_a);
            adapt_strength_[i] = config_.adaptation_strength * 2.0 * unif(rng);
            light_sensitivity_[i] = unif(rng) < config_.light_responsive_fraction ? 0.5 + unif(rng) : 0.0;
        }
        offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
        targets_.clear();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j)
                if (j != i && unif(rng) < config_.connection_probability)
                    targets_.push_back(j);
            offsets_[i + 1] = targets_.size();
        }
        // Coupling normalized so the summed excitatory input is independent of network size.
        const double expected_exc_inputs =
            std::max(1.0, config_.connection_probability * n * (1.0 - config_.inhibitory_fraction));
        coupling_exc_ = config_.base_coupling * config_.synaptic_weight_scale * 41.0 / expected_exc_inputs;
        coupling_inh_ = coupling_exc_ * config_.inhibition_ratio * 0.1;
    }

    SubstrateConfig config_;
    std::vector<bool> excitatory_;
    std::vector<double> bias_, adapt_decay_, adapt_strength_, light_sensitivity_;
    std::vector<std::size_t> offsets_;
    std::vector<int> targets_;
    double coupling_exc_ = 0.0;
    double coupling_inh_ = 0.0;
};

/// Run `program` for `duration` ms from rest.
inline SpikeTrainSet simulate(const SubstrateConfig& config, const DriftConfig& drift, const StimulusProgram& program,
                              double duration, std::uint64_t stream = 0)
{
    require(std::isfinite(duration) && duration >= 0.0, "duration must be finite and non-negative");
    require(static_cast<double>(program.span) <= duration, "stimulus program exceeds the simulation duration");
    return Substrate(config).simulate_window(program, drift, 0.0, duration, stream);
}

/// Merge disjoint-in-time recordings of the same channel layout.
inline SpikeTrainSet merge_recordings(const std::vector<SpikeTrainSet>& parts, double duration)
{
    require(!parts.empty(), "nothing to merge");
    const int channels = parts.front().channel_count();
    std::vector<std::vector<double>> trains(static_cast<std::size_t>(channels));
    for (const auto& p : parts) {
        require(p.channel_count() == channels, "channel count mismatch");
        for (int c = 0; c < channels; ++c)
            trains[c].insert(trains[c].end(), p.channel(c).begin(), p.channel(c).end());
    }
    for (auto& t : trains)
        std::sort(t.begin(), t.end());
    return SpikeTrainSet(duration, std::move(trains));
}

}  // namespace ccrc
