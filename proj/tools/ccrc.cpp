// Command-line front end. Exit codes: 0 success, 2 invalid input, 3 runtime/numerical failure.

#include "ccrc/ccrc.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace ccrc;
namespace fs = std::filesystem;

namespace {

template <class F>
auto with_file(const std::string& path, std::ios::openmode mode, F&& f)
{
    std::fstream s(path, mode);
    require(static_cast<bool>(s), "cannot open '" + path + "'");
    return f(s);
}

SpikeTrainSet load_spikes(const std::string& path)
{
    return with_file(path, std::ios::in, [](std::istream& is) { return read_spikes(is); });
}

StimulusProgram load_program(const std::string& path)
{
    return with_file(path, std::ios::in, [](std::istream& is) { return read_program(is); });
}

ModelFile load_model(const std::string& path)
{
    return with_file(path, std::ios::in, [](std::istream& is) { return read_model_file(is); });
}

void save_model(const std::string& path, const ModelFile& f)
{
    with_file(path, std::ios::out | std::ios::trunc, [&](std::ostream& os) {
        write_model_file(os, f);
        return 0;
    });
}

ExperimentConfig load_config(const std::string& path)
{
    if (path.empty())
        return {};
    return with_file(path, std::ios::in, [](std::istream& is) { return read_config(is); });
}

bool on_off(const std::string& v)
{
    require(v == "on" || v == "off", "expected on or off, got '" + v + "'");
    return v == "on";
}

/// --output-dir, then $CCRC_OUTPUT_DIR, then the config's output_dir.
fs::path output_dir(const std::string& flag, const ExperimentConfig& config)
{
    if (!flag.empty())
        return flag;
    if (const char* env = std::getenv("CCRC_OUTPUT_DIR"); env && *env)
        return env;
    return config.output_dir;
}

void print_paths(const std::vector<fs::path>& paths)
{
    for (const auto& p : paths)
        std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Surrogate living-reservoir toolkit: simulate, characterize, train, control, transplant"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // simulate
    std::string sim_config, sim_preset, sim_program, sim_program_out, sim_output, sim_drift = "off", sim_control;
    std::uint64_t sim_seed = 1;
    double sim_duration = 0.0;
    int sim_windows = 0;
    auto* simulate_cmd = app.add_subcommand("simulate", "Simulate a substrate recording");
    simulate_cmd->add_option("--config", sim_config, "Experiment config file (substrate, drift, modulation)");
    simulate_cmd->add_option("--preset", sim_preset, "Activity type preset A-D (overrides the config)");
    simulate_cmd->add_option("--seed", sim_seed, "Root seed");
    simulate_cmd->add_option("--program", sim_program, "Stimulus program file");
    simulate_cmd->add_option("--windows", sim_windows, "Generate a training program with this many windows");
    simulate_cmd->add_option("--program-out", sim_program_out, "Write the generated program here");
    simulate_cmd->add_option("--duration", sim_duration, "Duration in seconds (default: program span)");
    simulate_cmd->add_option("--drift", sim_drift, "on|off")->capture_default_str();
    simulate_cmd->add_option("--control", sim_control, "on|off: attach the modulation to the program");
    simulate_cmd->add_option("--output,-o", sim_output, "Spike file to write")->required();

    // diagnose
    std::string diag_spikes, diag_output, diag_preset;
    bool diag_no_metrics = false;
    std::uint64_t diag_seed = 1;
    auto* diagnose_cmd = app.add_subcommand("diagnose", "Categorize a spontaneous recording and report its metrics");
    diagnose_cmd->add_option("--spikes", diag_spikes, "Spike file (at least 5 minutes)")->required();
    diagnose_cmd->add_flag("--no-metrics", diag_no_metrics, "Skip branching ratio, kernel rank, spectral radius, TE");
    diagnose_cmd->add_option("--generalization-preset", diag_preset,
                             "Also measure the generalization rank of this preset's substrate");
    diagnose_cmd->add_option("--seed", diag_seed, "Root seed of that substrate");
    diagnose_cmd->add_option("--output,-o", diag_output, "Write the report here instead of stdout");

    // train
    std::string train_spikes, train_program, train_space = "observed_rates", train_output;
    std::uint64_t train_seed = 1;
    int train_latent_dim = 8;
    FeatureOptions train_features;
    bool train_window_latent = false;
    auto* train_cmd = app.add_subcommand("train", "Fit a ridge readout (and GPFA for latent features)");
    train_cmd->add_option("--spikes", train_spikes)->required();
    train_cmd->add_option("--program", train_program)->required();
    train_cmd->add_option("--feature-space", train_space, "observed_rates|latent")->capture_default_str();
    train_cmd->add_option("--latent-dim", train_latent_dim)->capture_default_str();
    train_cmd->add_option("--bin-width", train_features.bin_width, "ms")->capture_default_str();
    train_cmd->add_option("--sample-offset", train_features.sample_offset, "ms after window onset")->capture_default_str();
    train_cmd->add_option("--offsets", train_features.offsets, "Consecutive bins per feature vector")->capture_default_str();
    train_cmd->add_flag("--whole-window", train_window_latent, "Use every bin of the window (sample offset 0)");
    train_cmd->add_option("--seed", train_seed, "Root seed for the CV folds");
    train_cmd->add_option("--output,-o", train_output, "Model file to write")->required();

    // test
    std::string test_model, test_spikes, test_program;
    auto* test_cmd = app.add_subcommand("test", "Score a model on a labeled recording");
    test_cmd->add_option("--model", test_model)->required();
    test_cmd->add_option("--spikes", test_spikes)->required();
    test_cmd->add_option("--program", test_program)->required();

    // control
    std::string ctl_program, ctl_output, ctl_spikes, ctl_state = "on";
    double ctl_amplitude = ModulationSpec{}.amplitude_fraction, ctl_phase = 0.0;
    auto* control_cmd = app.add_subcommand("control", "Attach the modulation to a program, or measure entrainment");
    control_cmd->add_option("--program", ctl_program)->required();
    control_cmd->add_option("--control", ctl_state, "on|off")->capture_default_str();
    control_cmd->add_option("--amplitude", ctl_amplitude, "Fraction of the pattern intensity")->capture_default_str();
    control_cmd->add_option("--phase-offset", ctl_phase, "ms")->capture_default_str();
    control_cmd->add_option("--output,-o", ctl_output, "Program file to write");
    control_cmd->add_option("--spikes", ctl_spikes, "Measure burst entrainment of this recording instead");

    // transplant
    std::string kt_expert, kt_output;
    std::vector<std::string> kt_probes;
    int kt_probe_windows = 60, kt_latent_dim = 8;
    double kt_lambda = 1e-3;
    auto* transplant_cmd = app.add_subcommand("transplant", "Align a student to an expert and transplant the readout");
    transplant_cmd->add_option("--expert", kt_expert, "Latent pipeline model of the expert")->required();
    transplant_cmd->add_option("--student-probes", kt_probes, "Student spike file and program file")
        ->expected(2)
        ->required();
    transplant_cmd->add_option("--probe-windows", kt_probe_windows, "Leading labeled windows used as the probe")
        ->capture_default_str();
    transplant_cmd->add_option("--latent-dim", kt_latent_dim)->capture_default_str();
    transplant_cmd->add_option("--lambda", kt_lambda, "Alignment ridge penalty")->capture_default_str();
    transplant_cmd->add_option("--output,-o", kt_output, "Student model file to write")->required();

    // run
    std::string run_config, run_protocol, run_seeds, run_out, run_control, run_dump;
    double run_compression = 0.0;
    bool run_full_scale = false;
    auto* run_cmd = app.add_subcommand("run", "Run a full protocol (naive_rc, cc_rc, kt)");
    run_cmd->add_option("--config", run_config, "Experiment config file");
    run_cmd->add_option("--protocol", run_protocol, "naive_rc|cc_rc|kt (overrides the config)");
    run_cmd->add_option("--seeds", run_seeds, "Comma-separated root seeds (overrides the config)");
    run_cmd->add_option("--compression", run_compression, "Time compression factor >= 1");
    run_cmd->add_flag("--full-scale", run_full_scale, "Uncompressed 1 h training / 12 h test protocol");
    run_cmd->add_option("--control", run_control, "on|off (overrides the protocol default)");
    run_cmd->add_option("--output-dir", run_out, "Defaults to $CCRC_OUTPUT_DIR, then the config");
    run_cmd->add_option("--dump-config", run_dump, "Write the effective config to this file and exit");

    // report
    std::string rep_input, rep_format = "text", rep_out;
    auto* report_cmd = app.add_subcommand("report", "Re-emit a saved run report");
    report_cmd->add_option("--input", rep_input, "report.ccrc file")->required();
    report_cmd->add_option("--format", rep_format, "text|table|plotdata")->capture_default_str();
    report_cmd->add_option("--output-dir", rep_out, "Defaults to $CCRC_OUTPUT_DIR, then the input's directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*simulate_cmd) {
            auto config = load_config(sim_config);
            if (!sim_preset.empty()) {
                config.preset = sim_preset;
                config.substrate = preset(parse_activity_type(sim_preset));
            }
            StimulusProgram program;
            if (!sim_program.empty()) {
                program = load_program(sim_program);
            } else if (sim_windows > 0) {
                const auto lead = static_cast<TimeMs>(1000 * std::llround(config.modulation.lead_in));
                program = build_training_program(standard_patterns(), sim_windows, derive_seed(sim_seed, "train"), lead);
            }
            if (!sim_control.empty()) {
                auto m = config.modulation;
                m.enabled = on_off(sim_control);
                program = apply_control(program, m);
                program.modulation = m;
            }
            if (!sim_program_out.empty())
                with_file(sim_program_out, std::ios::out | std::ios::trunc, [&](std::ostream& os) {
                    write_program(os, program);
                    return 0;
                });
            const double duration = sim_duration > 0.0 ? sim_duration * 1000.0 : static_cast<double>(program.span);
            require(duration > 0.0, "give --duration or a non-empty program");
            auto drift = config.drift;
            drift.enabled = on_off(sim_drift) && drift.enabled;
            drift.time_scale = config.timing.time_compression;
            auto sub = config.substrate;
            sub.seed = derive_seed(sim_seed, "substrate");
            const auto spikes = simulate(sub, drift, program, duration);
            with_file(sim_output, std::ios::out | std::ios::trunc, [&](std::ostream& os) {
                write_spikes(os, spikes);
                return 0;
            });
            std::cout << "wrote " << spikes.total_spikes() << " spikes on " << spikes.channel_count() << " channels, "
                      << duration / 1000.0 << " s\n";
        } else if (*diagnose_cmd) {
            CategorizeParams params;
            params.compute_metrics = !diag_no_metrics;
            auto rep = categorize(load_spikes(diag_spikes), params);
            if (!diag_preset.empty()) {
                auto sub = preset(parse_activity_type(diag_preset));
                sub.seed = derive_seed(diag_seed, "substrate");
                rep.generalization_rank =
                    generalization_rank(Substrate(sub), PatternSpec{5}, 20.0, 20, 0.05, derive_seed(diag_seed, "probe")).rank;
            }
            if (diag_output.empty())
                write_diagnostics(std::cout, rep);
            else
                with_file(diag_output, std::ios::out | std::ios::trunc, [&](std::ostream& os) {
                    write_diagnostics(os, rep);
                    return 0;
                });
        } else if (*train_cmd) {
            PipelineOptions opt;
            opt.space = parse_feature_space(train_space);
            opt.features = train_features;
            if (train_window_latent) {
                opt.features.sample_offset = 0.0;
                opt.features.offsets = static_cast<int>(std::lround(1000.0 / opt.features.bin_width));
            }
            opt.latent_dim = train_latent_dim;
            opt.cv_seed = derive_seed(train_seed, "cv");
            CvReport cv;
            const auto pipeline = train_pipeline(load_spikes(train_spikes), load_program(train_program), opt, &cv);
            save_model(train_output, to_model_file(pipeline));
            std::cout << "cv_accuracy=" << format_double(cv.chosen_accuracy) << "\nridge_lambda="
                      << format_double(cv.chosen_lambda) << "\nfolds=" << cv.folds << '\n';
        } else if (*test_cmd) {
            const auto pipeline = pipeline_from(load_model(test_model));
            const auto data = pipeline.featurize(load_spikes(test_spikes), load_program(test_program));
            require(!data.labels.empty(), "no complete windows to score");
            std::cout << "accuracy=" << format_double(evaluate(pipeline.readout, data)) << "\nwindows=" << data.labels.size()
                      << "\ndropped=" << data.dropped << '\n';
        } else if (*control_cmd) {
            auto program = load_program(ctl_program);
            if (!ctl_spikes.empty()) {
                const auto e = entrainment_metrics(detect_bursts(load_spikes(ctl_spikes)), program);
                std::cout << "burst_count=" << e.burst_count << "\nburst_interval_variance_ms2="
                          << format_double(e.burst_interval_variance) << "\nburst_interval_sd_ms="
                          << format_double(e.burst_interval_sd) << "\nonset_phase_circular_variance="
                          << format_double(e.onset_phase_circular_variance) << "\naligned_fraction="
                          << format_double(e.aligned_fraction) << "\nwindow_tolerance_ms="
                          << format_double(e.window_tolerance) << '\n';
            } else {
                require(!ctl_output.empty(), "--output is required when applying control");
                ModulationSpec m = program.modulation;
                m.enabled = on_off(ctl_state);
                m.amplitude_fraction = ctl_amplitude;
                m.phase_offset = ctl_phase;
                program = apply_control(program, m);
                program.modulation = m;
                with_file(ctl_output, std::ios::out | std::ios::trunc, [&](std::ostream& os) {
                    write_program(os, program);
                    return 0;
                });
            }
        } else if (*transplant_cmd) {
            const auto expert = pipeline_from(load_model(kt_expert));
            const auto spikes = load_spikes(kt_probes[0]);
            const auto program = load_program(kt_probes[1]);
            require(kt_probe_windows >= 1, "probe windows must be positive");
            const auto n = std::min<std::size_t>(program.windows.size(), static_cast<std::size_t>(kt_probe_windows));
            std::vector<std::string> warnings;
            auto student = transplant_pipeline(expert, spikes, harness_detail::window_range(program, 0, n),
                                               kt_latent_dim, kt_lambda, 50, &warnings);
            student.transplant->expert_id = fs::path(kt_expert).filename().string();
            student.transplant->student_id = fs::path(kt_probes[0]).filename().string();
            student.transplant->provenance.emplace_back("expert_model", kt_expert);
            student.transplant->provenance.emplace_back("probe_windows", std::to_string(n));
            save_model(kt_output, to_model_file(student));
            for (const auto& w : warnings)
                std::cerr << "warning: " << w << '\n';
            std::cout << "pairs=" << student.transplant->transform.probe_count
                      << "\nfit_residual=" << format_double(student.transplant->transform.fit_residual) << '\n';
        } else if (*run_cmd) {
            auto config = load_config(run_config);
            if (!run_protocol.empty())
                config.protocol = parse_protocol(run_protocol);
            if (!run_seeds.empty()) {
                std::istringstream is(std::string(kConfigMagic) + "\nseeds=" + run_seeds + "\n");
                config.seeds = read_config(is).seeds;
            }
            if (run_full_scale)
                config.timing.time_compression = 1.0;
            if (run_compression > 0.0)
                config.timing.time_compression = run_compression;
            if (!run_control.empty())
                config.control = on_off(run_control) ? ControlSetting::on : ControlSetting::off;
            const auto dir = output_dir(run_out, config);
            config.output_dir = dir.string();
            config.validate();
            if (!run_dump.empty()) {
                with_file(run_dump, std::ios::out | std::ios::trunc, [&](std::ostream& os) {
                    write_config(os, config);
                    return 0;
                });
                return 0;
            }
            std::vector<RunReport> reports;
            if (config.protocol == ProtocolKind::kt) {
                auto kt = run_kt(config);
                reports.push_back(std::move(kt.expert));
                reports.push_back(std::move(kt.student));
            } else {
                reports.push_back(run_rc(config, config.control_enabled()));
            }
            for (const auto& r : reports) {
                for (const auto& s : r.runs)
                    for (const auto& w : s.warnings)
                        std::cerr << "warning (seed " << s.seed << "): " << w << '\n';
                print_paths(save_report(r, dir));
            }
        } else if (*report_cmd) {
            const auto report = load_report(rep_input);
            fs::path dir = rep_out;
            if (dir.empty()) {
                const char* env = std::getenv("CCRC_OUTPUT_DIR");
                dir = env && *env ? fs::path(env) : fs::path(rep_input).parent_path();
            }
            if (dir.empty())
                dir = ".";
            print_paths(emit_report(report, parse_report_format(rep_format), dir));
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
