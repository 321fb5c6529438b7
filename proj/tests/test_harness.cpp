#include "ccrc/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace ccrc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig fast_config()
{
    ExperimentConfig c;
    c.preflight_metrics = false;
    c.timing.test_rounds = 4;
    c.modulation.lead_in = 10.0;
    c.seeds = {3};
    return c;
}

fs::path scratch_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("ccrc-test-" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

int data_rows(const fs::path& p)
{
    std::ifstream is(p);
    std::string line;
    int n = 0;
    while (std::getline(is, line))
        n += !line.empty() && line[0] != '#';
    return n;
}

RunReport synthetic_report(int rounds)
{
    RunReport r;
    r.protocol = ProtocolKind::naive_rc;
    r.config = config_text(ExperimentConfig{});
    r.provenance = provenance_for(ExperimentConfig{});
    SeedRun s;
    s.seed = 1;
    s.cv_accuracy = 0.8;
    for (int k = 0; k < rounds; ++k) {
        s.timeline.round_times.push_back(0.25 * (k + 1));
        s.timeline.accuracies.push_back(0.9 - 0.01 * k);
    }
    r.runs.push_back(s);
    return r;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST(Config, CanonicalRoundTrip)
{
    ExperimentConfig c;
    c.preset = "B";
    c.substrate = preset(ActivityType::B);
    c.substrate.noise_rate = 0.37;
    c.protocol = ProtocolKind::kt;
    c.seeds = {4, 8, 15};
    c.timing.time_compression = 4.0;
    c.drift.efficacy_decay_rate = 0.45;
    c.features.offsets = 3;
    c.features.sample_offset = 600.0;
    c.kt.student = KtStudent::independent;
    c.kt.features.offsets = 5;
    std::stringstream ss;
    write_config(ss, c);
    const auto back = read_config(ss);
    EXPECT_EQ(config_text(back), config_text(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(back.seeds, c.seeds);
    EXPECT_EQ(back.substrate.noise_rate, 0.37);
}

TEST(Config, PresetAppliesBeforeOverridesAndCommentsAreIgnored)
{
    std::istringstream is(std::string(kConfigMagic) +
                          "\n# comment\nsubstrate.noise_rate=0.25   # trailing\npreset=D\nseeds=1,2\n");
    const auto c = read_config(is);
    EXPECT_EQ(c.preset, "D");
    EXPECT_EQ(c.substrate.noise_rate, 0.25);
    EXPECT_EQ(c.substrate.synaptic_weight_scale, preset(ActivityType::D).synaptic_weight_scale);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
}

TEST(Config, RejectsBadInput)
{
    auto parse = [](const std::string& body) {
        std::istringstream is(std::string(kConfigMagic) + "\n" + body);
        return read_config(is);
    };
    EXPECT_THROW(parse("no_such_key=1\n"), ValidationError);
    EXPECT_THROW(parse("protocol=deep_rc\n"), ValidationError);
    EXPECT_THROW(parse("time_compression=0.5\n"), ValidationError);
    EXPECT_THROW(parse("readout.cv_folds=2.5\n"), ValidationError);
    EXPECT_THROW(parse("preset=Q\n"), ValidationError);
    std::istringstream no_magic("seeds=1\n");
    EXPECT_THROW(read_config(no_magic), ValidationError);
}

TEST(Config, OutputDirDoesNotChangeTheHash)
{
    ExperimentConfig a, b;
    b.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seeds = {2};
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, ControlDefaultsFollowTheProtocol)
{
    ExperimentConfig c;
    EXPECT_FALSE(c.control_enabled());
    c.protocol = ProtocolKind::cc_rc;
    EXPECT_TRUE(c.control_enabled());
    c.control = ControlSetting::off;
    EXPECT_FALSE(c.control_enabled());
}

TEST(Report, PlotdataHasOneRowPerRound)
{
    const auto dir = scratch_dir("plotdata");
    const auto files = emit_report(synthetic_report(47), ReportFormat::plotdata, dir);
    ASSERT_EQ(files.size(), 1u);  // no learning curve outside KT
    EXPECT_EQ(files[0].filename(), "timeline.tsv");
    EXPECT_EQ(data_rows(files[0]), 47);
    EXPECT_FALSE(fs::exists(dir / "learning_curve.tsv"));
    fs::remove_all(dir);
}

TEST(Report, CanonicalFileRoundTripsByteForByte)
{
    auto r = synthetic_report(5);
    r.runs[0].entrainment = EntrainmentReport{};
    r.runs[0].warnings = {"odd substrate"};
    r.runs[0].learning_curve = {{1.0, 0.5}, {2.0, 0.75}};
    r.role = "student";
    const auto a = scratch_dir("roundtrip-a"), b = scratch_dir("roundtrip-b");
    const auto written = save_report(r, a);
    save_report(load_report(a / "student_report.ccrc"), b);
    for (const auto& p : written)
        EXPECT_EQ(slurp(p), slurp(b / p.filename())) << p.filename();
    EXPECT_TRUE(fs::exists(a / "student_learning_curve.tsv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Report, UnwritableDirectoryIsValidationError)
{
    const auto file = scratch_dir("blocker");
    std::ofstream(file) << "x";
    EXPECT_THROW(emit_report(synthetic_report(1), ReportFormat::text, file / "sub"), ValidationError);
    fs::remove(file);
    EXPECT_THROW(parse_report_format("pdf"), ValidationError);
}

TEST(Harness, RcRunIsDeterministic)
{
    const auto c = fast_config();
    const auto a = scratch_dir("det-a"), b = scratch_dir("det-b");
    const auto files = save_report(run_naive_rc(c), a);
    save_report(run_naive_rc(c), b);
    for (const auto& p : files)
        EXPECT_EQ(slurp(p), slurp(b / p.filename())) << p.filename();
    EXPECT_EQ(data_rows(a / "timeline.tsv"), 4);
    EXPECT_FALSE(fs::exists(a / "learning_curve.tsv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Harness, CcRcWithControlOffMatchesNaive)
{
    auto c = fast_config();
    c.protocol = ProtocolKind::cc_rc;
    c.control = ControlSetting::off;
    const auto cc = run_cc_rc(c);
    const auto naive = run_naive_rc(c);
    EXPECT_FALSE(cc.control);
    EXPECT_EQ(cc.runs[0].timeline.accuracies, naive.runs[0].timeline.accuracies);
    EXPECT_EQ(cc.runs[0].cv_accuracy, naive.runs[0].cv_accuracy);
    EXPECT_FALSE(cc.runs[0].entrainment.has_value());
}

TEST(Harness, CcRcReportsEntrainmentAndKeepsThePatterns)
{
    auto c = fast_config();
    c.protocol = ProtocolKind::cc_rc;
    const auto cc = run_cc_rc(c);
    EXPECT_TRUE(cc.control);
    ASSERT_TRUE(cc.runs[0].entrainment.has_value());
    EXPECT_GE(cc.runs[0].entrainment->burst_count, 2);
    // Same seeds draw the same labelled events whatever the control setting.
    const auto on = build_rc_programs(c.timing, harness_detail::modulation_for(c, true), derive_seed(3, "train"),
                                      derive_seed(3, "test"));
    const auto off = build_rc_programs(c.timing, harness_detail::modulation_for(c, false), derive_seed(3, "train"),
                                       derive_seed(3, "test"));
    EXPECT_EQ(on.combined.events, off.combined.events);
    EXPECT_EQ(on.combined.windows, off.combined.windows);
}

TEST(Harness, FasterDriftDegradesSooner)
{
    auto slow = fast_config();
    slow.timing.test_rounds = 24;
    auto fast = slow;
    fast.drift.efficacy_decay_rate = 2 * slow.drift.efficacy_decay_rate;
    const auto a = run_naive_rc(slow).runs[0].timeline, b = run_naive_rc(fast).runs[0].timeline;
    EXPECT_LE(b.time_above(0.6), a.time_above(0.6));
    EXPECT_LT(mean(b.accuracies), mean(a.accuracies));
}

TEST(Harness, NoDriftKeepsAccuracyFlat)
{
    auto c = fast_config();
    c.drift.enabled = false;
    c.timing.test_rounds = 3;
    c.timing.patterns_per_round_full = 3600;  // 360 patterns per round keeps the sampling error small
    const auto t = run_naive_rc(c).runs[0].timeline;
    const auto [lo, hi] = std::minmax_element(t.accuracies.begin(), t.accuracies.end());
    EXPECT_LE(*hi - *lo, 0.10);
}

TEST(Harness, EntrainmentProbeLocksBurstsUnderControl)
{
    ExperimentConfig c;
    const auto off = entrainment_probe(c, 2, false), on = entrainment_probe(c, 2, true);
    EXPECT_LT(on.onset_phase_circular_variance, off.onset_phase_circular_variance);
}

TEST(Kt, RejectsTypeMismatchAndControlOff)
{
    auto c = fast_config();
    c.protocol = ProtocolKind::kt;
    c.kt.student_preset = "B";
    EXPECT_THROW(run_kt(c), ValidationError);
    c.kt.student_preset = "C";
    c.control = ControlSetting::off;
    EXPECT_THROW(run_kt(c), ValidationError);
}

TEST(Kt, SmallSessionProducesCurves)
{
    auto c = fast_config();
    c.protocol = ProtocolKind::kt;
    c.kt.expert_windows = 200;
    c.kt.student_windows = 200;
    c.kt.probe_windows = 30;
    c.kt.gpfa_iterations = 20;
    const auto r = run_kt(c);
    ASSERT_EQ(r.student.runs.size(), 1u);
    const auto& s = r.student.runs[0];
    ASSERT_TRUE(s.zero_shot_accuracy && s.scratch_final_accuracy && s.expert_accuracy);
    EXPECT_EQ(s.student_training_windows, 140);
    ASSERT_FALSE(s.learning_curve.empty());
    EXPECT_DOUBLE_EQ(s.learning_curve.front().first, 0.5);  // the probe: 30 one-second windows
    EXPECT_DOUBLE_EQ(s.learning_curve.front().second, *s.zero_shot_accuracy);
    EXPECT_FALSE(s.scratch_curve.empty());
    EXPECT_GT(s.alignment_pairs, 0);
    if (s.kt_samples_to_target) {
        EXPECT_GE(*s.kt_samples_to_target, 30);
        EXPECT_LE(*s.kt_samples_to_target, 140);
    }
    EXPECT_EQ(r.expert.role, "expert");
    const auto dir = scratch_dir("kt");
    save_report(r.student, dir);
    EXPECT_TRUE(fs::exists(dir / "student_learning_curve.tsv"));
    EXPECT_FALSE(fs::exists(dir / "student_timeline.tsv"));
    fs::remove_all(dir);
}
