// End-to-end exercises of the command-line binary: exit codes, determinism,
// log format, and the synth/train/calibrate/eval contract.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "food/radar.hpp"

#ifndef FOOD_CLI_PATH
#error "FOOD_CLI_PATH must point at the food binary"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const std::string out_file =
        (fs::temp_directory_path() / "food_cli_out.txt").string();
    const std::string cmd =
        std::string(FOOD_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    res.output = ss.str();
    return res;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Shared tiny workspace: synth once, train once, reuse across tests.
class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / "food_cli_pipeline";
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        config_path_ = (dir_ / "run.cfg").string();
        std::ofstream cfg(config_path_);
        cfg << "epochs = 1\nbatch_per_class = 8\nframes_per_class = 60\nthreads = 2\n";
        cfg.close();

        data_path_ = (dir_ / "data.bin").string();
        ckpt_path_ = (dir_ / "run" / "model.ckpt").string();
        auto synth = run_cli("synth --out " + data_path_ + " --frames-per-class 60 --seed 5");
        ASSERT_EQ(synth.exit_code, 0) << synth.output;
        train_out_ = run_cli("train --data " + data_path_ + " --config " + config_path_ +
                             " --seed 5 --out " + ckpt_path_);
        ASSERT_EQ(train_out_.exit_code, 0) << train_out_.output;
    }

    static fs::path dir_;
    static std::string config_path_, data_path_, ckpt_path_;
    static RunResult train_out_;
};

fs::path CliPipeline::dir_;
std::string CliPipeline::config_path_, CliPipeline::data_path_, CliPipeline::ckpt_path_;
RunResult CliPipeline::train_out_;

} // namespace

TEST(CliUsage, MissingSubcommandIsUsageError) {
    EXPECT_EQ(run_cli("").exit_code, 2);
    EXPECT_EQ(run_cli("bogus-subcommand").exit_code, 2);
}

TEST(CliUsage, HelpExitsCleanly) {
    const auto res = run_cli("--help");
    EXPECT_EQ(res.exit_code, 0);
    EXPECT_NE(res.output.find("synth"), std::string::npos);
}

TEST(CliUsage, ZeroFramesIsUsageError) {
    const auto res = run_cli("synth --out /tmp/unused.bin --frames-per-class 0");
    EXPECT_EQ(res.exit_code, 2);
}

TEST(CliUsage, MissingDataFileIsDataError) {
    const auto res =
        run_cli("train --data /nonexistent/nope.bin --out /tmp/x.ckpt");
    EXPECT_EQ(res.exit_code, 3);
    EXPECT_NE(res.output.find("nope.bin"), std::string::npos);
}

TEST(CliUsage, DumpConfigPrintsAllKeys) {
    const auto res = run_cli("train --data x --out y --dump-config");
    EXPECT_EQ(res.exit_code, 0);
    for (const char* key : {"seed", "encoder_channels", "lr", "epochs", "train_fraction",
                            "frames_per_class", "negatives_mode"}) {
        EXPECT_NE(res.output.find(key), std::string::npos) << key;
    }
}

TEST(CliSynth, SameSeedProducesIdenticalBytes) {
    const fs::path dir = fs::temp_directory_path() / "food_cli_synth";
    fs::create_directories(dir);
    const std::string a = (dir / "a.bin").string();
    const std::string b = (dir / "b.bin").string();
    ASSERT_EQ(run_cli("synth --out " + a + " --frames-per-class 5 --seed 9").exit_code, 0);
    ASSERT_EQ(run_cli("synth --out " + b + " --frames-per-class 5 --seed 9 --threads 2")
                  .exit_code,
              0);
    EXPECT_EQ(read_bytes(a), read_bytes(b));
    const std::string c = (dir / "c.bin").string();
    ASSERT_EQ(run_cli("synth --out " + c + " --frames-per-class 5 --seed 10").exit_code, 0);
    EXPECT_NE(read_bytes(a), read_bytes(c));
    fs::remove_all(dir);
}

TEST(CliSynth, FrameCountIsFourTimesPerClass) {
    const fs::path dir = fs::temp_directory_path() / "food_cli_synth2";
    fs::create_directories(dir);
    const std::string path = (dir / "d.bin").string();
    const auto res = run_cli("synth --out " + path + " --frames-per-class 10 --seed 1");
    ASSERT_EQ(res.exit_code, 0);
    EXPECT_NE(res.output.find("40 frames"), std::string::npos);
    fs::remove_all(dir);
}

TEST_F(CliPipeline, EpochLogHasExactlyEightLossFields) {
    std::istringstream lines(train_out_.output);
    std::string line;
    bool found = false;
    const std::regex field("(mp1|mp2|mp3|cl|pl1|pl2|pl3|total)=");
    while (std::getline(lines, line)) {
        if (line.rfind("epoch=", 0) != 0) continue;
        found = true;
        const auto begin = std::sregex_iterator(line.begin(), line.end(), field);
        EXPECT_EQ(std::distance(begin, std::sregex_iterator()), 8) << line;
    }
    EXPECT_TRUE(found) << train_out_.output;
}

TEST_F(CliPipeline, RunDirHoldsResolvedConfigAndLog) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / "config.resolved.txt"));
    EXPECT_TRUE(fs::exists(dir_ / "run" / "train.log.txt"));
    const std::string cfg = read_bytes(dir_ / "run" / "config.resolved.txt");
    EXPECT_NE(cfg.find("seed = 5"), std::string::npos);
}

TEST_F(CliPipeline, UncalibratedEvalRefusesToRun) {
    const auto res = run_cli("eval --ckpt " + ckpt_path_ + " --id " + data_path_ + " --ood " +
                             data_path_ + " --report " + (dir_ / "r.json").string());
    EXPECT_EQ(res.exit_code, 3);
    EXPECT_NE(res.output.find("calibrate"), std::string::npos);
}

TEST_F(CliPipeline, CalibrationIsIdempotentAndCoverageAtLeast95) {
    const auto first = run_cli("calibrate --ckpt " + ckpt_path_ + " --data " + data_path_);
    ASSERT_EQ(first.exit_code, 0) << first.output;
    const std::regex cov("coverage[1-3]=([0-9.]+)");
    auto it = std::sregex_iterator(first.output.begin(), first.output.end(), cov);
    int matches = 0;
    for (; it != std::sregex_iterator(); ++it, ++matches) {
        EXPECT_GE(std::stod((*it)[1]), 0.95);
    }
    EXPECT_EQ(matches, 3);

    const std::string bytes1 = read_bytes(ckpt_path_);
    const auto second = run_cli("calibrate --ckpt " + ckpt_path_ + " --data " + data_path_);
    ASSERT_EQ(second.exit_code, 0);
    EXPECT_EQ(bytes1, read_bytes(ckpt_path_));
}

TEST_F(CliPipeline, EvalEmitsReportAndTable) {
    ASSERT_EQ(run_cli("calibrate --ckpt " + ckpt_path_ + " --data " + data_path_).exit_code,
              0);
    const std::string report = (dir_ / "report.json").string();
    const auto res = run_cli("eval --ckpt " + ckpt_path_ + " --id " + data_path_ + " --ood " +
                             data_path_ + " --report " + report);
    ASSERT_EQ(res.exit_code, 0) << res.output;
    ASSERT_TRUE(fs::exists(report));
    ASSERT_TRUE(fs::exists(report + ".txt"));
    const std::string json = read_bytes(report);
    for (const char* key : {"auroc", "aupr_in", "aupr_out", "fpr95", "accuracy", "confusion",
                            "test_time_seconds", "mode"}) {
        EXPECT_NE(json.find(key), std::string::npos) << key;
    }
    EXPECT_NE(res.output.find("tau1="), std::string::npos);
}

TEST_F(CliPipeline, EvalWithoutOodFramesIsDataError) {
    ASSERT_EQ(run_cli("calibrate --ckpt " + ckpt_path_ + " --data " + data_path_).exit_code,
              0);
    // strip the OOD frames into an ID-only file for the --ood side
    food::Dataset ds = food::load_dataset(data_path_);
    food::Dataset id_only = ds;
    id_only.frames.clear();
    for (const auto& f : ds.frames) {
        if (f.label != food::Label::Ood) id_only.frames.push_back(f);
    }
    const std::string id_only_path = (dir_ / "id_only.bin").string();
    food::save_dataset(id_only_path, id_only);

    const auto res = run_cli("eval --ckpt " + ckpt_path_ + " --id " + data_path_ + " --ood " +
                             id_only_path + " --report " + (dir_ / "r2.json").string());
    EXPECT_EQ(res.exit_code, 3);
    EXPECT_NE(res.output.find("no OOD"), std::string::npos);
}

TEST_F(CliPipeline, ResumeContinuesStepCounterAndEpochs) {
    const std::string cfg2 = (dir_ / "run2.cfg").string();
    {
        std::ofstream cfg(cfg2);
        cfg << "epochs = 2\nbatch_per_class = 8\nthreads = 2\n";
    }
    const auto res = run_cli("train --data " + data_path_ + " --config " + cfg2 +
                             " --seed 5 --out " + (dir_ / "run" / "model2.ckpt").string() +
                             " --resume " + ckpt_path_);
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_NE(res.output.find("resumed from"), std::string::npos);
    // 60 frames/class -> 48 train/class -> 6 steps/epoch; epoch 1 is done
    EXPECT_NE(res.output.find("optimizer step 6"), std::string::npos);
    EXPECT_NE(res.output.find("epoch=2 "), std::string::npos);
    EXPECT_EQ(res.output.find("epoch=1 "), std::string::npos);
}

TEST(CliSeedFallback, EnvironmentSeedMatchesFlag) {
    const fs::path dir = fs::temp_directory_path() / "food_cli_env";
    fs::create_directories(dir);
    const std::string by_flag = (dir / "flag.bin").string();
    const std::string by_env = (dir / "env.bin").string();
    ASSERT_EQ(run_cli("synth --out " + by_flag + " --frames-per-class 4 --seed 77").exit_code,
              0);
    setenv("FOOD_SEED", "77", 1);
    ASSERT_EQ(run_cli("synth --out " + by_env + " --frames-per-class 4").exit_code, 0);
    unsetenv("FOOD_SEED");
    EXPECT_EQ(read_bytes(by_flag), read_bytes(by_env));
    fs::remove_all(dir);
}

TEST_F(CliPipeline, DivergentTrainingExitsWithNumericCode) {
    const std::string cfg = (dir_ / "blowup.cfg").string();
    {
        std::ofstream out(cfg);
        out << "epochs = 1\nbatch_per_class = 8\nlr = 1e25\n";
    }
    const auto res = run_cli("train --data " + data_path_ + " --config " + cfg +
                             " --seed 5 --out " + (dir_ / "run" / "blowup.ckpt").string());
    EXPECT_EQ(res.exit_code, 4);
    EXPECT_NE(res.output.find("non-finite"), std::string::npos);
}
