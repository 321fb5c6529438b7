#pragma once

// Experiment orchestration: configuration, the naive-RC / cc-RC / KT
// protocols, run reports and their on-disk formats.
//
// Seed hierarchy (root = one entry of ExperimentConfig::seeds):
//   substrate        derive_seed(root, "substrate")
//   training labels  derive_seed(root, "train")     test labels  derive_seed(root, "test")
//   CV folds         derive_seed(root, "cv")
//   KT               "expert-program", "student-program", "permutation", "student-substrate"
// Noise streams: 0 = training session, r + 1 = test round r, kPreflightStream = pre-flight recording.

#include "ccrc/control.hpp"
#include "ccrc/diagnostics.hpp"
#include "ccrc/latent.hpp"
#include "ccrc/model_io.hpp"
#include "ccrc/protocol.hpp"
#include "ccrc/readout.hpp"
#include "ccrc/substrate.hpp"
#include "ccrc/transplant.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ccrc {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kConfigMagic = "#CCRC-CONFIG 1";
inline constexpr std::uint64_t kPreflightStream = 1000003;

enum class ProtocolKind { naive_rc, cc_rc, kt };
enum class ControlSetting { automatic, on, off };
enum class KtStudent { clone, permuted_clone, independent };

inline const char* to_string(ProtocolKind p)
{
    switch (p) {
    case ProtocolKind::naive_rc: return "naive_rc";
    case ProtocolKind::cc_rc: return "cc_rc";
    case ProtocolKind::kt: return "kt";
    }
    return "?";
}
inline ProtocolKind parse_protocol(std::string_view s)
{
    if (s == "naive_rc") return ProtocolKind::naive_rc;
    if (s == "cc_rc") return ProtocolKind::cc_rc;
    if (s == "kt") return ProtocolKind::kt;
    throw ValidationError("unknown protocol '" + std::string(s) + "' (expected naive_rc, cc_rc or kt)");
}
inline const char* to_string(ControlSetting c)
{
    return c == ControlSetting::on ? "on" : c == ControlSetting::off ? "off" : "auto";
}
inline ControlSetting parse_control(std::string_view s)
{
    if (s == "on") return ControlSetting::on;
    if (s == "off") return ControlSetting::off;
    if (s == "auto") return ControlSetting::automatic;
    throw ValidationError("control must be on, off or auto");
}
inline const char* to_string(KtStudent s)
{
    return s == KtStudent::clone ? "clone" : s == KtStudent::permuted_clone ? "permuted_clone" : "independent";
}
inline KtStudent parse_kt_student(std::string_view s)
{
    if (s == "clone") return KtStudent::clone;
    if (s == "permuted_clone") return KtStudent::permuted_clone;
    if (s == "independent") return KtStudent::independent;
    throw ValidationError("kt.student must be clone, permuted_clone or independent");
}

struct KtSettings {
    int expert_windows = 600;
    int student_windows = 600;     // includes the probe, which opens the student session
    int probe_windows = 60;
    int latent_dim = 8;
    int gpfa_iterations = 50;
    double alignment_lambda = 1e-3;
    double anchor_weight = 1.0;    // relative to the trace scale of the fine-tuning data
    double train_fraction = 0.7;
    int checkpoint_windows = 10;
    KtStudent student = KtStudent::permuted_clone;
    std::string student_preset;    // empty: same Type as the expert
    FeatureOptions features{100.0, 0.0, 10};  // whole-window latent trajectory

    bool operator==(const KtSettings&) const = default;
};

inline bool operator==(const FeatureOptions& a, const FeatureOptions& b)
{
    return a.bin_width == b.bin_width && a.sample_offset == b.sample_offset && a.offsets == b.offsets;
}

struct ExperimentConfig {
    std::string preset = "C";
    SubstrateConfig substrate = ccrc::preset(ActivityType::C);  // seed is replaced per run
    DriftConfig drift = default_drift();
    ProtocolKind protocol = ProtocolKind::naive_rc;
    ProtocolTiming timing;
    ModulationSpec modulation;
    ControlSetting control = ControlSetting::automatic;
    FeatureOptions features;
    int cv_folds = 10;
    double preflight_duration = 300000.0;  // ms
    bool preflight_metrics = true;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "ccrc-out";
    KtSettings kt;

    static DriftConfig default_drift()
    {
        DriftConfig d;
        d.enabled = true;
        d.efficacy_decay_rate = 0.3;
        return d;
    }

    ActivityType expected_type() const { return parse_activity_type(preset); }

    /// Modulation on for cc_rc and kt unless overridden.
    bool control_enabled() const
    {
        if (control == ControlSetting::automatic)
            return protocol != ProtocolKind::naive_rc;
        return control == ControlSetting::on;
    }

    void validate() const
    {
        expected_type();
        substrate.validate();
        drift.validate();
        timing.validate();
        modulation.validate();
        require(!seeds.empty(), "at least one seed is required");
        require(cv_folds >= 2, "cv folds must be >= 2");
        require(preflight_duration >= 300000.0, "pre-flight recording must last at least 5 minutes");
        require(features.bin_width > 0.0 && features.offsets >= 1 && features.sample_offset >= 0.0,
                "invalid readout feature options");
        require(features.sample_offset + features.offsets * features.bin_width <= 1000.0,
                "readout samples must stay inside the 1 s pattern window");
        require(kt.expert_windows >= 20 && kt.student_windows > kt.probe_windows && kt.probe_windows >= 10,
                "invalid KT window counts");
        require(kt.latent_dim >= 1 && kt.gpfa_iterations >= 1, "invalid KT latent settings");
        require(kt.train_fraction > 0.0 && kt.train_fraction < 1.0, "kt.train_fraction must be in (0, 1)");
        require(kt.alignment_lambda >= 0.0 && kt.anchor_weight >= 0.0 && kt.checkpoint_windows >= 1,
                "invalid KT regularization settings");
        require(static_cast<int>((kt.student_windows) * kt.train_fraction) > kt.probe_windows,
                "the student training partition must be longer than the probe");
    }
};

// ---------------------------------------------------------------------------
// Config file: magic line, then key=value lines ('#' starts a comment).

namespace config_detail {

template <class T>
struct Field {
    std::string key;
    std::function<std::string(const T&)> get;
    std::function<void(T&, std::string_view)> set;
};

template <class T, class M>
Field<T> number(const char* key, M T::*member)
{
    return {key, [member](const T& t) { return format_double(static_cast<double>(t.*member)); },
            [member](T& t, std::string_view v) {
                const double x = parse_double(v);
                if constexpr (std::is_integral_v<M>) {
                    require(x == std::floor(x), std::string("integer expected"));
                    t.*member = static_cast<M>(x);
                } else {
                    t.*member = x;
                }
            }};
}

template <class T>
Field<T> flag(const char* key, bool T::*member)
{
    return {key, [member](const T& t) { return std::string(t.*member ? "1" : "0"); },
            [member](T& t, std::string_view v) {
                require(v == "0" || v == "1" || v == "true" || v == "false", "boolean expected");
                t.*member = v == "1" || v == "true";
            }};
}

inline const std::vector<Field<ExperimentConfig>>& fields()
{
    using C = ExperimentConfig;
    static const std::vector<Field<C>> f = [] {
        std::vector<Field<C>> v;
        v.push_back({"protocol", [](const C& c) { return std::string(to_string(c.protocol)); },
                     [](C& c, std::string_view s) { c.protocol = parse_protocol(s); }});
        v.push_back({"preset", [](const C& c) { return c.preset; },
                     [](C& c, std::string_view s) {
                         c.preset = std::string(s);
                         c.substrate = ccrc::preset(parse_activity_type(s));
                     }});
        v.push_back({"seeds",
                     [](const C& c) {
                         std::string out;
                         for (std::size_t i = 0; i < c.seeds.size(); ++i)
                             out += (i ? "," : "") + std::to_string(c.seeds[i]);
                         return out;
                     },
                     [](C& c, std::string_view s) {
                         c.seeds.clear();
                         for (auto part : split(s, ','))
                             if (!trim(part).empty()) {
                                 const auto x = parse_int(trim(part));
                                 require(x >= 0, "seeds must be non-negative");
                                 c.seeds.push_back(static_cast<std::uint64_t>(x));
                             }
                     }});
        v.push_back({"output_dir", [](const C& c) { return c.output_dir; },
                     [](C& c, std::string_view s) { c.output_dir = std::string(s); }});
        v.push_back({"control", [](const C& c) { return std::string(to_string(c.control)); },
                     [](C& c, std::string_view s) { c.control = parse_control(s); }});
        v.push_back({"time_compression", [](const C& c) { return format_double(c.timing.time_compression); },
                     [](C& c, std::string_view s) { c.timing.time_compression = parse_double(s); }});

        auto sub = [&v](const char* key, auto member) {
            auto inner = number<SubstrateConfig>(key, member);
            v.push_back({key, [inner](const C& c) { return inner.get(c.substrate); },
                         [inner](C& c, std::string_view s) { inner.set(c.substrate, s); }});
        };
        using S = SubstrateConfig;
        sub("substrate.neuron_count", &S::neuron_count);
        sub("substrate.channel_count", &S::channel_count);
        sub("substrate.connection_probability", &S::connection_probability);
        sub("substrate.synaptic_weight_scale", &S::synaptic_weight_scale);
        sub("substrate.excitability_bias", &S::excitability_bias);
        sub("substrate.noise_rate", &S::noise_rate);
        sub("substrate.light_gain", &S::light_gain);
        sub("substrate.inhibitory_fraction", &S::inhibitory_fraction);
        sub("substrate.inhibition_ratio", &S::inhibition_ratio);
        sub("substrate.base_coupling", &S::base_coupling);
        sub("substrate.noise_amplitude", &S::noise_amplitude);
        sub("substrate.bias_spread", &S::bias_spread);
        sub("substrate.membrane_tau", &S::membrane_tau);
        sub("substrate.synaptic_tau", &S::synaptic_tau);
        sub("substrate.refractory", &S::refractory);
        sub("substrate.adaptation_strength", &S::adaptation_strength);
        sub("substrate.adaptation_tau_min", &S::adaptation_tau_min);
        sub("substrate.adaptation_tau_max", &S::adaptation_tau_max);
        sub("substrate.light_responsive_fraction", &S::light_responsive_fraction);
        v.push_back({"substrate.depression.utilization",
                     [](const C& c) { return format_double(c.substrate.depression.utilization); },
                     [](C& c, std::string_view s) { c.substrate.depression.utilization = parse_double(s); }});
        v.push_back({"substrate.depression.recovery_tau",
                     [](const C& c) { return format_double(c.substrate.depression.recovery_tau); },
                     [](C& c, std::string_view s) { c.substrate.depression.recovery_tau = parse_double(s); }});

        auto drift = [&v](Field<DriftConfig> inner) {
            v.push_back({inner.key, [inner](const C& c) { return inner.get(c.drift); },
                         [inner](C& c, std::string_view s) { inner.set(c.drift, s); }});
        };
        drift(flag("drift.enabled", &DriftConfig::enabled));
        drift(number("drift.efficacy_decay_rate", &DriftConfig::efficacy_decay_rate));
        drift(number("drift.synaptic_decay_rate", &DriftConfig::synaptic_decay_rate));
        drift(number("drift.excitability_drift_rate", &DriftConfig::excitability_drift_rate));
        drift(number("drift.responsiveness_cutoff", &DriftConfig::responsiveness_cutoff));

        auto timing = [&v](Field<ProtocolTiming> inner) {
            v.push_back({inner.key, [inner](const C& c) { return inner.get(c.timing); },
                         [inner](C& c, std::string_view s) { inner.set(c.timing, s); }});
        };
        timing(number("timing.training_windows_full", &ProtocolTiming::training_windows_full));
        timing(number("timing.test_rounds", &ProtocolTiming::test_rounds));
        timing(number("timing.patterns_per_round_full", &ProtocolTiming::patterns_per_round_full));
        timing(number("timing.initial_rest_full_ms", &ProtocolTiming::initial_rest_full_ms));
        timing(number("timing.round_period_full_ms", &ProtocolTiming::round_period_full_ms));
        timing(number("timing.warmup_ms", &ProtocolTiming::warmup_ms));

        auto mod = [&v](Field<ModulationSpec> inner) {
            v.push_back({inner.key, [inner](const C& c) { return inner.get(c.modulation); },
                         [inner](C& c, std::string_view s) { inner.set(c.modulation, s); }});
        };
        mod(number("modulation.frequency_hz", &ModulationSpec::frequency));
        mod(number("modulation.duty_cycle", &ModulationSpec::duty_cycle));
        mod(number("modulation.amplitude_fraction", &ModulationSpec::amplitude_fraction));
        mod(number("modulation.lead_in_s", &ModulationSpec::lead_in));
        mod(number("modulation.phase_offset_ms", &ModulationSpec::phase_offset));

        // `group` maps a config to one of its feature-option blocks, const or not.
        auto feat = [&v](const std::string& prefix, auto group) {
            auto add = [&](const char* name, Field<FeatureOptions> inner) {
                v.push_back({prefix + name, [inner, group](const C& c) { return inner.get(group(c)); },
                             [inner, group](C& c, std::string_view s) { inner.set(group(c), s); }});
            };
            add("bin_width_ms", number("", &FeatureOptions::bin_width));
            add("sample_offset_ms", number("", &FeatureOptions::sample_offset));
            add("offsets", number("", &FeatureOptions::offsets));
        };
        feat("readout.", [](auto& c) -> auto& { return c.features; });
        v.push_back(number("readout.cv_folds", &C::cv_folds));
        v.push_back(number("preflight.duration_ms", &C::preflight_duration));
        v.push_back(flag("preflight.metrics", &C::preflight_metrics));

        auto kt = [&v](Field<KtSettings> inner) {
            v.push_back({inner.key, [inner](const C& c) { return inner.get(c.kt); },
                         [inner](C& c, std::string_view s) { inner.set(c.kt, s); }});
        };
        kt(number("kt.expert_windows", &KtSettings::expert_windows));
        kt(number("kt.student_windows", &KtSettings::student_windows));
        kt(number("kt.probe_windows", &KtSettings::probe_windows));
        kt(number("kt.latent_dim", &KtSettings::latent_dim));
        kt(number("kt.gpfa_iterations", &KtSettings::gpfa_iterations));
        kt(number("kt.alignment_lambda", &KtSettings::alignment_lambda));
        kt(number("kt.anchor_weight", &KtSettings::anchor_weight));
        kt(number("kt.train_fraction", &KtSettings::train_fraction));
        kt(number("kt.checkpoint_windows", &KtSettings::checkpoint_windows));
        v.push_back({"kt.student", [](const C& c) { return std::string(to_string(c.kt.student)); },
                     [](C& c, std::string_view s) { c.kt.student = parse_kt_student(s); }});
        v.push_back({"kt.student_preset", [](const C& c) { return c.kt.student_preset; },
                     [](C& c, std::string_view s) { c.kt.student_preset = std::string(s); }});
        feat("kt.", [](auto& c) -> auto& { return c.kt.features; });
        return v;
    }();
    return f;
}

}  // namespace config_detail

/// Canonical form: every key, fixed order.
inline void write_config(std::ostream& os, const ExperimentConfig& c, bool with_output_dir = true)
{
    os << kConfigMagic << '\n';
    for (const auto& f : config_detail::fields())
        if (with_output_dir || f.key != "output_dir")
            os << f.key << '=' << f.get(c) << '\n';
}

/// What a run depends on: the canonical form minus where results are written.
/// Reports embed it and the config hash is taken over it.
inline std::string config_text(const ExperimentConfig& c)
{
    std::ostringstream os;
    write_config(os, c, false);
    return os.str();
}

/// Keys may appear in any order; `preset` is applied first so that
/// substrate.* lines override the preset rather than the other way round.
inline ExperimentConfig read_config(std::istream& is)
{
    std::string line;
    require(static_cast<bool>(std::getline(is, line)) && trim(line) == kConfigMagic, "missing config file header");
    std::vector<std::pair<std::string, std::string>> entries;
    while (std::getline(is, line)) {
        auto view = trim(line);
        if (const auto hash = view.find('#'); hash != std::string_view::npos)
            view = trim(view.substr(0, hash));
        if (view.empty())
            continue;
        const auto eq = view.find('=');
        require(eq != std::string_view::npos, "malformed config line: " + std::string(view));
        entries.emplace_back(std::string(trim(view.substr(0, eq))), std::string(trim(view.substr(eq + 1))));
    }
    std::stable_partition(entries.begin(), entries.end(), [](const auto& e) { return e.first == "preset"; });
    ExperimentConfig c;
    for (const auto& [key, value] : entries) {
        const auto& fs = config_detail::fields();
        auto it = std::find_if(fs.begin(), fs.end(), [&](const auto& f) { return key == f.key; });
        require(it != fs.end(), "unknown config key '" + key + "'");
        try {
            it->set(c, value);
        } catch (const ValidationError& e) {
            throw ValidationError("config key '" + key + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

inline std::string hex64(std::uint64_t x)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << x;
    return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(hash_tag(config_text(c))); }

// ---------------------------------------------------------------------------
// Reports

struct SeedRun {
    std::uint64_t seed = 0;
    DiagnosticsReport diagnostics;
    std::vector<std::string> warnings;
    double cv_accuracy = 0.0;
    double ridge_lambda = 0.0;
    AccuracyTimeline timeline;                  // empty for KT runs
    std::optional<EntrainmentReport> entrainment;

    // KT only
    std::optional<double> expert_accuracy;      // expert readout on its held-out windows
    std::optional<double> zero_shot_accuracy;   // transplanted readout on the student's held-out windows
    std::optional<double> alignment_residual;
    int alignment_pairs = 0;
    std::vector<std::pair<double, double>> learning_curve;  // (student minutes, accuracy), KT-initialized
    std::vector<std::pair<double, double>> scratch_curve;   // same checkpoints, trained from scratch
    std::optional<double> scratch_final_accuracy;
    std::optional<int> kt_samples_to_target;    // windows until KT matches scratch_final_accuracy
    int student_training_windows = 0;
};

struct RunReport {
    ProtocolKind protocol = ProtocolKind::naive_rc;
    bool control = false;
    std::string role;  // "", "expert" or "student"
    std::vector<SeedRun> runs;
    std::vector<std::pair<std::string, std::string>> provenance;
    std::string config;  // canonical config text
};

inline std::vector<std::pair<std::string, std::string>> provenance_for(const ExperimentConfig& c)
{
    std::string seeds;
    for (std::size_t i = 0; i < c.seeds.size(); ++i)
        seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
    return {{"config_hash", config_hash(c)},
            {"seeds", seeds},
            {"ccrc_version", kVersion},
            {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)}};
}

// ---------------------------------------------------------------------------
// Protocols

namespace harness_detail {

inline SubstrateConfig seeded(const SubstrateConfig& base, std::uint64_t seed)
{
    auto c = base;
    c.seed = seed;
    return c;
}

inline DiagnosticsReport preflight(const Substrate& substrate, const ExperimentConfig& config)
{
    StimulusProgram silent;
    const auto rec = substrate.simulate_window(silent, DriftConfig{}, 0.0, config.preflight_duration, kPreflightStream);
    CategorizeParams params;
    params.compute_metrics = config.preflight_metrics;
    return categorize(rec, params);
}

inline void check_type(SeedRun& run, ActivityType expected)
{
    const auto got = run.diagnostics.type_label;
    if (got == ActivityType::A && (expected == ActivityType::C || expected == ActivityType::D))
        run.warnings.push_back(std::string("substrate categorized as Type A; protocol expects Type ") +
                               to_char(expected));
    else if (got != expected)
        run.warnings.push_back(std::string("substrate categorized as Type ") + to_char(got) + ", expected " +
                               to_char(expected));
}

inline ModulationSpec modulation_for(const ExperimentConfig& config, bool control)
{
    auto m = config.modulation;
    m.enabled = control;
    return m;
}

inline SeedRun run_rc_seed(const ExperimentConfig& config, std::uint64_t seed, bool control)
{
    SeedRun run;
    run.seed = seed;
    const Substrate substrate(seeded(config.substrate, derive_seed(seed, "substrate")));
    run.diagnostics = preflight(substrate, config);
    check_type(run, config.expected_type());

    const auto programs = build_rc_programs(config.timing, modulation_for(config, control), derive_seed(seed, "train"),
                                            derive_seed(seed, "test"));
    auto drift = config.drift;
    drift.time_scale = config.timing.time_compression;  // drift rates are per protocol hour
    drift.onset = static_cast<double>(programs.training.span);
    const auto rec = simulate_protocol(substrate, drift, programs, config.timing);

    const auto train = extract_features(rec, programs.training, FeatureSpace::observed_rates, nullptr, config.features);
    RidgeOptions ro;
    ro.folds = config.cv_folds;
    ro.seed = derive_seed(seed, "cv");
    const auto ridge = train_ridge(train, ro);
    run.cv_accuracy = ridge.cv.chosen_accuracy;
    run.ridge_lambda = ridge.cv.chosen_lambda;

    std::vector<LabeledFeatureSet> rounds;
    for (const auto& [first, end] : programs.rounds)
        rounds.push_back(extract_features(rec, windows_between(programs.testing, first, end),
                                          FeatureSpace::observed_rates, nullptr, config.features));
    run.timeline = accuracy_timeline(ridge.model, rounds, programs.round_times_h);

    if (control) {
        // The lead-in carries the modulation alone, so its bursts are spontaneous.
        const auto lead = static_cast<double>(programs.training.windows.front().onset);
        const auto bursts = detect_bursts(slice(rec, 0.0, lead));
        if (bursts.size() >= 2)
            run.entrainment = entrainment_metrics(bursts, programs.combined);
        else
            run.warnings.push_back("fewer than two bursts in the modulation lead-in; entrainment not computed");
    }
    return run;
}

}  // namespace harness_detail

inline RunReport run_rc(const ExperimentConfig& config, bool control)
{
    config.validate();
    RunReport report;
    report.protocol = control ? ProtocolKind::cc_rc : ProtocolKind::naive_rc;
    report.control = control;
    report.config = config_text(config);
    report.provenance = provenance_for(config);
    for (auto seed : config.seeds)
        report.runs.push_back(harness_detail::run_rc_seed(config, seed, control));
    return report;
}

inline RunReport run_naive_rc(const ExperimentConfig& config) { return run_rc(config, false); }

/// Modulation on unless the config explicitly switches control off.
inline RunReport run_cc_rc(const ExperimentConfig& config) { return run_rc(config, config.control != ControlSetting::off); }

/// Spontaneous activity under modulation alone (no patterns), for entrainment measurements.
inline EntrainmentReport entrainment_probe(const ExperimentConfig& config, std::uint64_t seed, bool control,
                                           double duration_ms = 60000.0)
{
    require(duration_ms >= 2000.0, "entrainment probe needs at least 2 s");
    const Substrate substrate(harness_detail::seeded(config.substrate, derive_seed(seed, "substrate")));
    StimulusProgram program;
    program.modulation = harness_detail::modulation_for(config, control);
    program.modulation.lead_in = duration_ms / 1000.0;
    program.anchor = static_cast<TimeMs>(duration_ms);
    program.span = program.anchor;
    const auto rec = substrate.simulate_window(program, DriftConfig{}, 0.0, duration_ms, 0);
    return entrainment_metrics(detect_bursts(rec), program);
}

// ---------------------------------------------------------------------------
// Pipeline bundle: everything needed to turn a recording into predictions.

struct Pipeline {
    FeatureOptions features;
    std::optional<LatentModel> latent;
    ReadoutModel readout;
    std::optional<AttractorModel> attractor;
    std::optional<TransplantRecord> transplant;

    LabeledFeatureSet featurize(const SpikeTrainSet& spikes, const StimulusProgram& program) const
    {
        return extract_features(spikes, program, readout.feature_space, latent ? &*latent : nullptr, features);
    }
};

inline ModelFile to_model_file(const Pipeline& p)
{
    ModelFile f;
    f.kind = "pipeline";
    f.set("features.bin_width_ms", p.features.bin_width);
    f.set("features.sample_offset_ms", p.features.sample_offset);
    f.set("features.offsets", p.features.offsets);
    nest(f, "readout", to_model_file(p.readout));
    if (p.latent)
        nest(f, "latent", to_model_file(*p.latent));
    if (p.attractor)
        nest(f, "attractor", to_model_file(*p.attractor));
    if (p.transplant)
        nest(f, "transplant", to_model_file(*p.transplant));
    return f;
}

/// Accepts a pipeline bundle or a bare readout (observed rates, default features).
inline Pipeline pipeline_from(const ModelFile& f)
{
    Pipeline p;
    if (f.kind == "readout") {
        p.readout = readout_from(f);
    } else {
        require(f.kind == "pipeline", "expected a pipeline or readout model, found '" + f.kind + "'");
        p.features.bin_width = f.number("features.bin_width_ms");
        p.features.sample_offset = f.number("features.sample_offset_ms");
        p.features.offsets = f.integer("features.offsets");
        p.readout = readout_from(part(f, "readout"));
        if (has_part(f, "latent"))
            p.latent = latent_from(part(f, "latent"));
        if (has_part(f, "attractor"))
            p.attractor = attractor_from(part(f, "attractor"));
        if (has_part(f, "transplant"))
            p.transplant = transplant_from(part(f, "transplant"));
    }
    require(p.readout.feature_space != FeatureSpace::latent || p.latent, "latent readout without a latent model");
    return p;
}

namespace harness_detail {

inline std::vector<LatentTrajectory> window_trajectories(const LatentModel& model, const SpikeTrainSet& rec,
                                                         const StimulusProgram& program, const FeatureOptions& opt)
{
    std::vector<LatentTrajectory> out;
    const int bins = static_cast<int>(std::lround(static_cast<double>(program.window_length) / opt.bin_width));
    for (const auto& w : program.windows) {
        const auto rates = window_rates(rec, static_cast<double>(w.onset), bins, opt.bin_width);
        auto tr = infer_trajectory(model, rates, 0);
        tr.label = w.label;
        tr.times.clear();
        for (int k = 0; k < bins; ++k)
            tr.times.push_back(static_cast<double>(w.onset) + k * opt.bin_width);
        out.push_back(std::move(tr));
    }
    return out;
}

/// Windows [begin, end) of `p` by index.
inline StimulusProgram window_range(const StimulusProgram& p, std::size_t begin, std::size_t end)
{
    require(begin <= end && end <= p.windows.size(), "window range out of bounds");
    const TimeMs lo = begin < p.windows.size() ? p.windows[begin].onset : p.span;
    const TimeMs hi = end < p.windows.size() ? p.windows[end].onset : p.span;
    return windows_between(p, lo, hi);
}

}  // namespace harness_detail

struct PipelineOptions {
    FeatureSpace space = FeatureSpace::observed_rates;
    FeatureOptions features;
    int latent_dim = 8;
    int gpfa_iterations = 50;
    int cv_folds = 10;
    std::uint64_t cv_seed = 0;
};

/// Fit (GPFA and) a CV-tuned ridge readout on the program's windows. Latent
/// pipelines also carry the evoked attractor (label x phase-bin means).
inline Pipeline train_pipeline(const SpikeTrainSet& spikes, const StimulusProgram& program, const PipelineOptions& opt,
                               CvReport* cv = nullptr)
{
    require(!program.windows.empty(), "training program has no windows");
    Pipeline p;
    p.features = opt.features;
    if (opt.space == FeatureSpace::latent) {
        const double begin = static_cast<double>(program.windows.front().onset);
        const double end = static_cast<double>(program.windows.back().onset + program.window_length);
        GpfaOptions g;
        g.latent_dim = opt.latent_dim;
        g.max_iters = opt.gpfa_iterations;
        p.latent = fit_gpfa(bin_rates(slice(spikes, begin, end), opt.features.bin_width), g);
    }
    RidgeOptions ro;
    ro.folds = std::min<int>(opt.cv_folds, static_cast<int>(program.windows.size()));
    ro.seed = opt.cv_seed;
    const auto result =
        train_ridge(extract_features(spikes, program, opt.space, p.latent ? &*p.latent : nullptr, opt.features), ro);
    p.readout = result.model;
    if (cv)
        *cv = result.cv;
    if (p.latent) {
        AttractorOptions a;
        a.anchor = static_cast<double>(program.windows.front().onset);
        a.period = static_cast<double>(program.window_length);
        a.phase_bins = static_cast<int>(std::lround(a.period / opt.features.bin_width));
        p.attractor = estimate_attractor(harness_detail::window_trajectories(*p.latent, spikes, program, opt.features),
                                         AttractorMode::cycle, a);
    }
    return p;
}

/// Student pipeline from a labeled probe: own GPFA, probe trajectories matched to the
/// expert attractor by (label, phase bin), affine alignment, composed readout.
inline Pipeline transplant_pipeline(const Pipeline& expert, const SpikeTrainSet& probe_spikes,
                                    const StimulusProgram& probe, int latent_dim, double alignment_lambda,
                                    int gpfa_iterations = 50, std::vector<std::string>* warnings = nullptr)
{
    require(expert.latent && expert.attractor && expert.readout.feature_space == FeatureSpace::latent,
            "expert pipeline must be latent-space with an attractor");
    require(!probe.windows.empty(), "probe program has no windows");
    const auto& fopt = expert.features;
    Pipeline p;
    p.features = fopt;
    const double begin = static_cast<double>(probe.windows.front().onset);
    const double end = static_cast<double>(probe.windows.back().onset + probe.window_length);
    GpfaOptions g;
    g.latent_dim = latent_dim;
    g.max_iters = gpfa_iterations;
    p.latent = fit_gpfa(bin_rates(slice(probe_spikes, begin, end), fopt.bin_width), g);

    AttractorOptions a;
    a.anchor = begin;
    a.period = static_cast<double>(probe.window_length);
    a.phase_bins = expert.attractor->phase_bins;
    const auto corr = correspond_points(harness_detail::window_trajectories(*p.latent, probe_spikes, probe, fopt),
                                        *expert.attractor, a);
    if (warnings) {
        if (corr.single_label)
            warnings->push_back("student probe shares a single label with the expert attractor");
        for (const auto& [label, n] : corr.skipped_per_label)
            warnings->push_back("label " + std::to_string(label) + ": " + std::to_string(n) +
                                " probe bins without an expert counterpart");
    }
    TransplantRecord rec;
    rec.transform = fit_alignment(corr.student, corr.expert, alignment_lambda);
    rec.transplanted_readout = transplant_readout(expert.readout, rec.transform);
    p.readout = rec.transplanted_readout;
    p.transplant = std::move(rec);
    return p;
}

struct KtReports {
    RunReport expert;
    RunReport student;
};


/// Expert session -> latent readout and attractor; student probe -> alignment ->
/// transplanted readout; then KT-initialized vs from-scratch learning curves on the
/// student's training partition, scored on its held-out partition.
inline KtReports run_kt(const ExperimentConfig& config)
{
    using namespace harness_detail;
    config.validate();
    const auto& kt = config.kt;
    const auto expected = config.expected_type();
    if (!kt.student_preset.empty())
        require(parse_activity_type(kt.student_preset) == expected,
                "knowledge transplant requires a same-Type student (expert " + config.preset + ", student " +
                    kt.student_preset + ")");
    require(config.control != ControlSetting::off, "knowledge transplant requires cc-RC control on both samples");

    KtReports out;
    for (auto* r : {&out.expert, &out.student}) {
        r->protocol = ProtocolKind::kt;
        r->control = true;
        r->config = config_text(config);
        r->provenance = provenance_for(config);
    }
    out.expert.role = "expert";
    out.student.role = "student";

    const auto modulation = modulation_for(config, true);
    const auto lead = static_cast<TimeMs>(1000 * std::llround(modulation.lead_in));
    PipelineOptions popt;
    popt.space = FeatureSpace::latent;
    popt.features = kt.features;
    popt.latent_dim = kt.latent_dim;
    popt.gpfa_iterations = kt.gpfa_iterations;
    popt.cv_folds = config.cv_folds;

    for (auto seed : config.seeds) {
        popt.cv_seed = derive_seed(seed, "cv");

        SeedRun ex;
        ex.seed = seed;
        const Substrate expert(seeded(config.substrate, derive_seed(seed, "substrate")));
        ex.diagnostics = preflight(expert, config);
        check_type(ex, expected);
        const auto eprog = apply_control(
            build_training_program(standard_patterns(), kt.expert_windows, derive_seed(seed, "expert-program"), lead),
            modulation);
        const auto erec = expert.simulate_window(eprog, DriftConfig{}, 0.0, static_cast<double>(eprog.span), 0);
        const auto e_ntrain = static_cast<std::size_t>(kt.expert_windows * kt.train_fraction);
        CvReport ecv;
        const auto ep = train_pipeline(erec, window_range(eprog, 0, e_ntrain), popt, &ecv);
        ex.cv_accuracy = ecv.chosen_accuracy;
        ex.ridge_lambda = ecv.chosen_lambda;
        ex.expert_accuracy = evaluate(ep.readout, ep.featurize(erec, window_range(eprog, e_ntrain, eprog.windows.size())));

        SeedRun st;
        st.seed = seed;
        const auto student_seed =
            kt.student == KtStudent::independent ? derive_seed(seed, "student-substrate") : derive_seed(seed, "substrate");
        const Substrate student(seeded(config.substrate, student_seed));
        st.diagnostics = kt.student == KtStudent::independent ? preflight(student, config) : ex.diagnostics;
        check_type(st, expected);
        const auto sprog = apply_control(
            build_training_program(standard_patterns(), kt.student_windows, derive_seed(seed, "student-program"), lead),
            modulation);
        auto srec = student.simulate_window(sprog, DriftConfig{}, 0.0, static_cast<double>(sprog.span), 1);
        if (kt.student == KtStudent::permuted_clone) {
            std::vector<int> perm(static_cast<std::size_t>(srec.channel_count()));
            std::iota(perm.begin(), perm.end(), 0);
            std::mt19937_64 rng(derive_seed(seed, "permutation"));
            std::shuffle(perm.begin(), perm.end(), rng);
            srec = permute_channels(srec, perm);
        }
        const auto s_ntrain = static_cast<std::size_t>(kt.student_windows * kt.train_fraction);
        const auto sp = transplant_pipeline(ep, srec, window_range(sprog, 0, static_cast<std::size_t>(kt.probe_windows)),
                                            kt.latent_dim, kt.alignment_lambda, kt.gpfa_iterations, &st.warnings);
        st.alignment_residual = sp.transplant->transform.fit_residual;
        st.alignment_pairs = sp.transplant->transform.probe_count;

        const auto strain = sp.featurize(srec, window_range(sprog, 0, s_ntrain));
        const auto stest = sp.featurize(srec, window_range(sprog, s_ntrain, sprog.windows.size()));
        st.student_training_windows = static_cast<int>(strain.labels.size());
        st.expert_accuracy = ex.expert_accuracy;
        st.zero_shot_accuracy = evaluate(sp.readout, stest);

        RidgeOptions ro;
        ro.folds = config.cv_folds;
        ro.seed = popt.cv_seed;
        const auto full = train_ridge(strain, ro);
        st.cv_accuracy = full.cv.chosen_accuracy;
        st.ridge_lambda = full.cv.chosen_lambda;
        st.scratch_final_accuracy = evaluate(full.model, stest);

        // The probe opens the student session: KT has consumed it before its first point.
        const double window_min = static_cast<double>(sprog.window_length) / 60000.0;
        st.learning_curve.emplace_back(kt.probe_windows * window_min, *st.zero_shot_accuracy);
        if (*st.zero_shot_accuracy >= *st.scratch_final_accuracy)
            st.kt_samples_to_target = kt.probe_windows;
        const int n_total = static_cast<int>(strain.labels.size());
        for (int n = kt.checkpoint_windows; n <= n_total; n += kt.checkpoint_windows) {
            const auto data = head(strain, n);
            RidgeOptions cro = ro;
            cro.folds = std::min(config.cv_folds, n);
            std::optional<RidgeResult> scratch;
            try {
                scratch = train_ridge(data, cro);
            } catch (const ValidationError&) {
                // too few samples or classes at this checkpoint
            }
            if (scratch)
                st.scratch_curve.emplace_back(n * window_min, evaluate(scratch->model, stest));
            if (n <= kt.probe_windows)
                continue;
            const double lambda = scratch ? scratch->cv.chosen_lambda : full.cv.chosen_lambda;
            const auto tuned = fine_tune(sp.readout, data, lambda, kt.anchor_weight * trace_scale(data.features));
            const double acc = evaluate(tuned, stest);
            st.learning_curve.emplace_back(n * window_min, acc);
            if (!st.kt_samples_to_target && acc >= *st.scratch_final_accuracy)
                st.kt_samples_to_target = n;
        }

        out.expert.runs.push_back(std::move(ex));
        out.student.runs.push_back(std::move(st));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report persistence (canonical, machine-readable) and emission.

namespace report_detail {

inline std::string opt_number(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }
inline std::optional<double> parse_opt(const std::string& s)
{
    if (s == "NA")
        return std::nullopt;
    return parse_double(s);
}
inline std::string opt_int(const std::optional<int>& v) { return v ? std::to_string(*v) : "NA"; }
inline std::optional<int> parse_opt_int(const std::string& s)
{
    if (s == "NA")
        return std::nullopt;
    return static_cast<int>(parse_int(s));
}

inline Matrix pairs_matrix(const std::vector<std::pair<double, double>>& v)
{
    Matrix m(static_cast<Eigen::Index>(v.size()), 2);
    for (std::size_t i = 0; i < v.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = v[i].first;
        m(static_cast<Eigen::Index>(i), 1) = v[i].second;
    }
    return m;
}
inline std::vector<std::pair<double, double>> matrix_pairs(const Matrix& m)
{
    require(m.rows() == 0 || m.cols() == 2, "malformed series matrix");
    std::vector<std::pair<double, double>> v;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        v.emplace_back(m(i, 0), m(i, 1));
    return v;
}

}  // namespace report_detail

inline ModelFile to_model_file(const RunReport& r)
{
    using namespace report_detail;
    ModelFile f;
    f.kind = "run-report";
    f.set("protocol", std::string(to_string(r.protocol)));
    f.set("control", std::string(r.control ? "on" : "off"));
    f.set("role", r.role.empty() ? std::string("main") : r.role);
    for (const auto& [k, v] : r.provenance)
        f.set("provenance." + k, v);
    {
        std::istringstream cfg(r.config);
        std::string line;
        int i = 0;
        while (std::getline(cfg, line))
            f.set("config." + std::to_string(i++), line);
    }
    f.set("runs", static_cast<int>(r.runs.size()));
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
        const auto& s = r.runs[i];
        const std::string p = "run." + std::to_string(i) + ".";
        f.set(p + "seed", std::to_string(s.seed));
        const auto& d = s.diagnostics;
        f.set(p + "diagnostics.type", std::string(1, to_char(d.type_label)));
        f.set(p + "diagnostics.burst_rate_hz", d.burst_rate);
        f.set(p + "diagnostics.burst_count", std::to_string(d.burst_count));
        f.set(p + "diagnostics.interburst_fraction", d.interburst_fraction);
        f.set(p + "diagnostics.branching_ratio", opt_number(d.branching_ratio));
        f.set(p + "diagnostics.kernel_rank", opt_int(d.kernel_rank));
        f.set(p + "diagnostics.generalization_rank", opt_int(d.generalization_rank));
        f.set(p + "diagnostics.spectral_radius", opt_number(d.spectral_radius));
        f.set(p + "diagnostics.mean_transfer_entropy_bits", opt_number(d.mean_transfer_entropy));
        f.set(p + "diagnostics.recording_duration_s", d.recording_duration);
        f.set(p + "warnings", static_cast<int>(s.warnings.size()));
        for (std::size_t w = 0; w < s.warnings.size(); ++w)
            f.set(p + "warning." + std::to_string(w), s.warnings[w]);
        f.set(p + "cv_accuracy", s.cv_accuracy);
        f.set(p + "ridge_lambda", s.ridge_lambda);
        f.set(p + "entrainment", std::string(s.entrainment ? "1" : "0"));
        if (s.entrainment) {
            const auto& e = *s.entrainment;
            f.set(p + "entrainment.burst_interval_variance_ms2", e.burst_interval_variance);
            f.set(p + "entrainment.burst_interval_sd_ms", e.burst_interval_sd);
            f.set(p + "entrainment.onset_phase_circular_variance", e.onset_phase_circular_variance);
            f.set(p + "entrainment.aligned_fraction", e.aligned_fraction);
            f.set(p + "entrainment.window_tolerance_ms", e.window_tolerance);
            f.set(p + "entrainment.burst_count", e.burst_count);
        }
        f.set(p + "expert_accuracy", opt_number(s.expert_accuracy));
        f.set(p + "zero_shot_accuracy", opt_number(s.zero_shot_accuracy));
        f.set(p + "alignment_residual", opt_number(s.alignment_residual));
        f.set(p + "alignment_pairs", s.alignment_pairs);
        f.set(p + "scratch_final_accuracy", opt_number(s.scratch_final_accuracy));
        f.set(p + "kt_samples_to_target",
              s.kt_samples_to_target ? std::to_string(*s.kt_samples_to_target) : std::string("NA"));
        f.set(p + "student_training_windows", s.student_training_windows);
        std::vector<std::pair<double, double>> tl;
        for (std::size_t k = 0; k < s.timeline.accuracies.size(); ++k)
            tl.emplace_back(s.timeline.round_times[k], s.timeline.accuracies[k]);
        f.put(p + "timeline", pairs_matrix(tl));
        f.put(p + "learning_curve", pairs_matrix(s.learning_curve));
        f.put(p + "scratch_curve", pairs_matrix(s.scratch_curve));
    }
    return f;
}

inline RunReport report_from(const ModelFile& f)
{
    using namespace report_detail;
    require(f.kind == "run-report", "expected a run-report file, found '" + f.kind + "'");
    RunReport r;
    r.protocol = parse_protocol(f.get("protocol"));
    r.control = f.get("control") == "on";
    r.role = f.get("role") == "main" ? "" : f.get("role");
    for (const auto& [k, v] : f.scalars) {
        if (k.starts_with("provenance."))
            r.provenance.emplace_back(k.substr(11), v);
        else if (k.starts_with("config."))
            r.config += v + "\n";
    }
    const int runs = f.integer("runs");
    require(runs >= 0, "negative run count");
    for (int i = 0; i < runs; ++i) {
        const std::string p = "run." + std::to_string(i) + ".";
        SeedRun s;
        s.seed = static_cast<std::uint64_t>(parse_int(f.get(p + "seed")));
        auto& d = s.diagnostics;
        d.type_label = parse_activity_type(f.get(p + "diagnostics.type"));
        d.burst_rate = f.number(p + "diagnostics.burst_rate_hz");
        d.burst_count = static_cast<std::size_t>(parse_int(f.get(p + "diagnostics.burst_count")));
        d.interburst_fraction = f.number(p + "diagnostics.interburst_fraction");
        d.branching_ratio = parse_opt(f.get(p + "diagnostics.branching_ratio"));
        d.kernel_rank = parse_opt_int(f.get(p + "diagnostics.kernel_rank"));
        d.generalization_rank = parse_opt_int(f.get(p + "diagnostics.generalization_rank"));
        d.spectral_radius = parse_opt(f.get(p + "diagnostics.spectral_radius"));
        d.mean_transfer_entropy = parse_opt(f.get(p + "diagnostics.mean_transfer_entropy_bits"));
        d.recording_duration = f.number(p + "diagnostics.recording_duration_s");
        const int warnings = f.integer(p + "warnings");
        for (int w = 0; w < warnings; ++w)
            s.warnings.push_back(f.get(p + "warning." + std::to_string(w)));
        s.cv_accuracy = f.number(p + "cv_accuracy");
        s.ridge_lambda = f.number(p + "ridge_lambda");
        if (f.get(p + "entrainment") == "1") {
            EntrainmentReport e;
            e.burst_interval_variance = f.number(p + "entrainment.burst_interval_variance_ms2");
            e.burst_interval_sd = f.number(p + "entrainment.burst_interval_sd_ms");
            e.onset_phase_circular_variance = f.number(p + "entrainment.onset_phase_circular_variance");
            e.aligned_fraction = f.number(p + "entrainment.aligned_fraction");
            e.window_tolerance = f.number(p + "entrainment.window_tolerance_ms");
            e.burst_count = f.integer(p + "entrainment.burst_count");
            s.entrainment = e;
        }
        s.expert_accuracy = parse_opt(f.get(p + "expert_accuracy"));
        s.zero_shot_accuracy = parse_opt(f.get(p + "zero_shot_accuracy"));
        s.alignment_residual = parse_opt(f.get(p + "alignment_residual"));
        s.alignment_pairs = f.integer(p + "alignment_pairs");
        s.scratch_final_accuracy = parse_opt(f.get(p + "scratch_final_accuracy"));
        if (const auto& k = f.get(p + "kt_samples_to_target"); k != "NA")
            s.kt_samples_to_target = static_cast<int>(parse_int(k));
        s.student_training_windows = f.integer(p + "student_training_windows");
        for (const auto& [t, a] : matrix_pairs(f.matrix(p + "timeline"))) {
            s.timeline.round_times.push_back(t);
            s.timeline.accuracies.push_back(a);
        }
        s.learning_curve = matrix_pairs(f.matrix(p + "learning_curve"));
        s.scratch_curve = matrix_pairs(f.matrix(p + "scratch_curve"));
        r.runs.push_back(std::move(s));
    }
    return r;
}

enum class ReportFormat { text, table, plotdata };

inline const char* to_string(ReportFormat f)
{
    return f == ReportFormat::text ? "text" : f == ReportFormat::table ? "table" : "plotdata";
}
inline ReportFormat parse_report_format(std::string_view s)
{
    if (s == "text") return ReportFormat::text;
    if (s == "table") return ReportFormat::table;
    if (s == "plotdata") return ReportFormat::plotdata;
    throw ValidationError("unknown report format '" + std::string(s) + "' (expected text, table or plotdata)");
}

namespace report_detail {

inline std::string prefix(const RunReport& r) { return r.role.empty() ? std::string() : r.role + "_"; }

inline std::ofstream open_for_write(const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "cannot write '" + path.string() + "'");
    return os;
}

inline void write_text(std::ostream& os, const RunReport& r)
{
    os << "#CCRC-REPORT-TEXT 1\n";
    os << "protocol: " << to_string(r.protocol) << (r.role.empty() ? "" : " (" + r.role + ")") << '\n';
    os << "control: " << (r.control ? "on" : "off") << '\n';
    for (const auto& [k, v] : r.provenance)
        os << k << ": " << v << '\n';
    for (const auto& s : r.runs) {
        os << "\n== seed " << s.seed << '\n';
        const auto& d = s.diagnostics;
        os << "pre-flight: Type " << to_char(d.type_label) << ", burst rate " << format_double(d.burst_rate)
           << " Hz, interburst fraction " << format_double(d.interburst_fraction) << ", branching ratio "
           << opt_number(d.branching_ratio) << ", kernel rank " << opt_int(d.kernel_rank) << ", spectral radius "
           << opt_number(d.spectral_radius) << ", mean TE " << opt_number(d.mean_transfer_entropy) << " bits\n";
        for (const auto& w : s.warnings)
            os << "warning: " << w << '\n';
        os << "readout: cv accuracy " << format_double(s.cv_accuracy) << ", lambda " << format_double(s.ridge_lambda)
           << '\n';
        if (!s.timeline.accuracies.empty()) {
            const auto crossing = s.timeline.threshold_crossing(0.6);
            os << "timeline: " << s.timeline.accuracies.size() << " rounds, time above 60% "
               << format_double(s.timeline.time_above(0.6)) << " h, 60% crossing "
               << (crossing ? format_double(*crossing) + " h" : std::string("none")) << '\n';
        }
        if (s.entrainment) {
            const auto& e = *s.entrainment;
            os << "entrainment: " << e.burst_count << " bursts, circular variance "
               << format_double(e.onset_phase_circular_variance) << ", interval sd " << format_double(e.burst_interval_sd)
               << " ms, aligned fraction " << format_double(e.aligned_fraction) << '\n';
        }
        if (s.expert_accuracy)
            os << "expert accuracy: " << format_double(*s.expert_accuracy) << '\n';
        if (s.zero_shot_accuracy)
            os << "zero-shot transplant accuracy: " << format_double(*s.zero_shot_accuracy) << " (" << s.alignment_pairs
               << " pairs, residual " << opt_number(s.alignment_residual) << ")\n";
        if (s.scratch_final_accuracy)
            os << "from-scratch final accuracy: " << format_double(*s.scratch_final_accuracy) << " with "
               << s.student_training_windows << " windows\n";
        if (s.kt_samples_to_target)
            os << "KT windows to reach it: " << *s.kt_samples_to_target << '\n';
    }
}

inline void write_table(std::ostream& os, const RunReport& r)
{
    os << "#CCRC-REPORT-TABLE 1\n";
    os << "# seed\ttype\tburst_rate_hz\tcv_accuracy\trounds\ttime_above_60_h\tcircular_variance\texpert_accuracy"
          "\tzero_shot_accuracy\tscratch_final_accuracy\tkt_windows_to_target\n";
    for (const auto& s : r.runs) {
        os << s.seed << '\t' << to_char(s.diagnostics.type_label) << '\t' << format_double(s.diagnostics.burst_rate)
           << '\t' << format_double(s.cv_accuracy) << '\t' << s.timeline.accuracies.size() << '\t'
           << (s.timeline.accuracies.empty() ? "NA" : format_double(s.timeline.time_above(0.6))) << '\t'
           << (s.entrainment ? format_double(s.entrainment->onset_phase_circular_variance) : "NA") << '\t'
           << opt_number(s.expert_accuracy) << '\t' << opt_number(s.zero_shot_accuracy) << '\t'
           << opt_number(s.scratch_final_accuracy) << '\t'
           << (s.kt_samples_to_target ? std::to_string(*s.kt_samples_to_target) : "NA") << '\n';
    }
}

}  // namespace report_detail

/// Writes the requested format into `dir`; returns the files written.
/// plotdata: timeline rows (seed, round, hours, accuracy), plus a learning-curve
/// file only when the report has one.
inline std::vector<std::filesystem::path> emit_report(const RunReport& report, ReportFormat format,
                                                      const std::filesystem::path& dir)
{
    using namespace report_detail;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec && std::filesystem::is_directory(dir), "cannot create output directory '" + dir.string() + "'");
    std::vector<std::filesystem::path> written;
    const auto pre = prefix(report);
    if (format == ReportFormat::text) {
        const auto path = dir / (pre + "report.txt");
        auto os = open_for_write(path);
        write_text(os, report);
        written.push_back(path);
    } else if (format == ReportFormat::table) {
        const auto path = dir / (pre + "summary.tsv");
        auto os = open_for_write(path);
        write_table(os, report);
        written.push_back(path);
    } else {
        bool any_timeline = false, any_curve = false;
        for (const auto& s : report.runs) {
            any_timeline |= !s.timeline.accuracies.empty();
            any_curve |= !s.learning_curve.empty();
        }
        if (any_timeline) {
            const auto path = dir / (pre + "timeline.tsv");
            auto os = open_for_write(path);
            os << "#CCRC-PLOTDATA 1\n# seed\tround\ttime_h\taccuracy\n";
            for (const auto& s : report.runs)
                for (std::size_t k = 0; k < s.timeline.accuracies.size(); ++k)
                    os << s.seed << '\t' << k << '\t' << format_double(s.timeline.round_times[k]) << '\t'
                       << format_double(s.timeline.accuracies[k]) << '\n';
            written.push_back(path);
        }
        if (any_curve) {
            const auto path = dir / (pre + "learning_curve.tsv");
            auto os = open_for_write(path);
            os << "#CCRC-PLOTDATA 1\n# seed\tcurve\tminutes\taccuracy\n";
            for (const auto& s : report.runs) {
                for (const auto& [m, a] : s.learning_curve)
                    os << s.seed << "\tkt\t" << format_double(m) << '\t' << format_double(a) << '\n';
                for (const auto& [m, a] : s.scratch_curve)
                    os << s.seed << "\tscratch\t" << format_double(m) << '\t' << format_double(a) << '\n';
            }
            written.push_back(path);
        }
    }
    return written;
}

/// Canonical report file plus all three emitted formats.
inline std::vector<std::filesystem::path> save_report(const RunReport& report, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec && std::filesystem::is_directory(dir), "cannot create output directory '" + dir.string() + "'");
    const auto path = dir / (report_detail::prefix(report) + "report.ccrc");
    {
        auto os = report_detail::open_for_write(path);
        write_model_file(os, to_model_file(report));
    }
    std::vector<std::filesystem::path> written{path};
    for (auto fmt : {ReportFormat::text, ReportFormat::table, ReportFormat::plotdata})
        for (auto& p : emit_report(report, fmt, dir))
            written.push_back(std::move(p));
    return written;
}

inline RunReport load_report(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "cannot read '" + path.string() + "'");
    return report_from(read_model_file(is));
}

}  // namespace ccrc
