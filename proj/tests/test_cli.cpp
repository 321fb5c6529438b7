#include "ccrc/harness.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ccrc;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() / "ccrc-cli-test";
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    /// Exit status of `ccrc <args>` run inside the scratch directory; stdout goes to out.txt.
    int ccrc(const std::string& args, const std::string& env = "")
    {
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" CCRC_CLI_PATH "' " + args +
                                " > out.txt 2> err.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const std::string& name) const
    {
        std::ifstream is(dir_ / name);
        std::ostringstream os;
        os << is.rdbuf();
        return os.str();
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors)
{
    EXPECT_EQ(ccrc("--help"), 0);
    EXPECT_EQ(ccrc(""), 2);
    EXPECT_EQ(ccrc("frobnicate"), 2);
    EXPECT_EQ(ccrc("simulate --preset E --duration 1 -o x.txt"), 2);
    EXPECT_EQ(ccrc("diagnose --spikes missing.txt"), 2);
    EXPECT_EQ(ccrc("report --input missing.ccrc"), 2);
}

TEST_F(Cli, MalformedInputIsRejected)
{
    std::ofstream(dir_ / "bad.txt") << "#CCRC-SPIKES 1\nchannels=2 duration_ms=10\n5\t1\n";
    EXPECT_EQ(ccrc("diagnose --spikes bad.txt"), 2);
    EXPECT_NE(read("err.txt").find("error"), std::string::npos);
}

TEST_F(Cli, SimulateTrainTestRoundTrip)
{
    ASSERT_EQ(ccrc("simulate --preset C --seed 2 --windows 120 --program-out prog.txt -o spikes.txt"), 0);
    ASSERT_EQ(ccrc("train --spikes spikes.txt --program prog.txt -o model.txt"), 0);
    EXPECT_NE(read("out.txt").find("cv_accuracy="), std::string::npos);
    ASSERT_EQ(ccrc("test --model model.txt --spikes spikes.txt --program prog.txt"), 0);
    EXPECT_NE(read("out.txt").find("windows=120"), std::string::npos);
    // A short recording cannot be categorized.
    EXPECT_EQ(ccrc("diagnose --spikes spikes.txt"), 2);
}

TEST_F(Cli, ControlAttachesModulationOnly)
{
    ASSERT_EQ(ccrc("simulate --preset C --windows 5 --program-out prog.txt -o s.txt"), 0);
    ASSERT_EQ(ccrc("control --program prog.txt --amplitude 0.2 -o ctl.txt"), 0);
    std::ifstream a(dir_ / "prog.txt"), b(dir_ / "ctl.txt");
    const auto plain = read_program(a), controlled = read_program(b);
    EXPECT_EQ(plain.events, controlled.events);
    EXPECT_TRUE(controlled.modulation.enabled);
    EXPECT_DOUBLE_EQ(controlled.modulation.amplitude_fraction, 0.2);
    EXPECT_EQ(ccrc("control --program prog.txt --amplitude 2 -o ctl.txt"), 2);
}

TEST_F(Cli, RunOverridesReachTheConfig)
{
    ASSERT_EQ(ccrc("run --protocol kt --seeds 4,5 --compression 5 --control on --dump-config eff.cfg"), 0);
    std::ifstream is(dir_ / "eff.cfg");
    const auto c = read_config(is);
    EXPECT_EQ(c.protocol, ProtocolKind::kt);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
    EXPECT_EQ(c.timing.time_compression, 5.0);
    EXPECT_EQ(c.control, ControlSetting::on);
    EXPECT_EQ(ccrc("run --compression 0.5 --dump-config eff.cfg"), 2);
}

TEST_F(Cli, OutputDirectoryFromEnvironment)
{
    RunReport r;
    r.config = config_text(ExperimentConfig{});
    SeedRun s;
    s.seed = 1;
    s.timeline.round_times = {0.25};
    s.timeline.accuracies = {0.5};
    r.runs.push_back(s);
    save_report(r, dir_ / "saved");
    ASSERT_EQ(ccrc("report --input saved/report.ccrc --format plotdata", "CCRC_OUTPUT_DIR=env-out"), 0);
    EXPECT_TRUE(fs::exists(dir_ / "env-out" / "timeline.tsv"));
    ASSERT_EQ(ccrc("report --input saved/report.ccrc --format table --output-dir flag-out", "CCRC_OUTPUT_DIR=env-out"), 0);
    EXPECT_TRUE(fs::exists(dir_ / "flag-out" / "summary.tsv"));
    EXPECT_EQ(ccrc("report --input saved/report.ccrc --format pdf"), 2);
}
