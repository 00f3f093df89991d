// Command-line front end: synthesize datasets, train, calibrate thresholds,
// and evaluate, end to end.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numeric
// failure (non-finite loss or scores).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "food/checkpoint.hpp"
#include "food/config.hpp"
#include "food/detect.hpp"
#include "food/metrics.hpp"
#include "food/radar.hpp"
#include "food/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed_flag = 0;
    bool seed_set = false;
    std::size_t threads_flag = 0;
    bool threads_set = false;
    bool dump = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value configuration file");
    cmd->add_option("--seed", args.seed_flag, "master seed (overrides config and FOOD_SEED)")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--threads", args.threads_flag,
                    "worker threads for generation and scoring")
        ->each([&args](const std::string&) { args.threads_set = true; });
    cmd->add_flag("--dump-config", args.dump, "print the resolved configuration and exit");
}

// Precedence: built-in defaults < FOOD_SEED < config file < flags.
food::RunConfig resolve_config(const CommonArgs& args) {
    food::RunConfig cfg;
    if (const char* env = std::getenv("FOOD_SEED")) {
        cfg.seed = food::detail::parse_u64("FOOD_SEED", env);
    }
    if (!args.config_path.empty()) food::load_config_file(cfg, args.config_path);
    if (args.seed_set) cfg.seed = args.seed_flag;
    if (args.threads_set) cfg.threads = args.threads_flag;
    cfg.apply_seed();
    return cfg;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw food::FormatError(path.string() + ": cannot open for writing");
    out << text;
}

// Run directory: the parent of the primary output; the resolved config is
// always copied there.
fs::path prepare_run_dir(const std::string& primary_out, const food::RunConfig& cfg) {
    fs::path dir = fs::path(primary_out).parent_path();
    if (dir.empty()) dir = ".";
    fs::create_directories(dir);
    write_text_file(dir / "config.resolved.txt", food::dump_config(cfg));
    return dir;
}

std::array<std::vector<const food::FrameCube*>, 3> id_frames_by_class(
    const food::Dataset& ds) {
    std::array<std::vector<const food::FrameCube*>, 3> out;
    for (const auto& f : ds.frames) {
        const int l = static_cast<int>(f.label);
        if (l >= 0 && l < 3) out[l].push_back(&f);
    }
    return out;
}

int cmd_synth(const CommonArgs& common, const std::string& out_path,
              std::size_t frames_flag, bool frames_set, const std::string& profile_path) {
    food::RunConfig cfg = resolve_config(common);
    if (frames_set) cfg.frames_per_class = frames_flag;
    if (common.dump) {
        std::cout << food::dump_config(cfg);
        return 0;
    }
    if (cfg.frames_per_class == 0) {
        std::cerr << "synth: --frames-per-class must be positive\n";
        return kExitUsage;
    }
    food::SynthSpec spec;
    if (!profile_path.empty()) food::load_profile_file(spec, profile_path);

    prepare_run_dir(out_path, cfg);
    food::Dataset ds = food::synth_dataset(cfg.frames_per_class, cfg.seed, food::RadarConfig{},
                                           spec.id_profiles, spec.ood, cfg.threads);
    food::save_dataset(out_path, ds);
    std::cout << "wrote " << ds.frames.size() << " frames (" << cfg.frames_per_class
              << " per class + OOD) to " << out_path << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& data_path,
              const std::string& out_path, const std::string& resume_path) {
    food::RunConfig cfg = resolve_config(common);
    if (common.dump) {
        std::cout << food::dump_config(cfg);
        return 0;
    }
    const food::Dataset ds = food::load_dataset(data_path);

    food::FoodModel model;
    food::SplitSpec split{cfg.seed, cfg.train_fraction, cfg.calib_fraction};
    std::size_t start_epoch = 0;
    std::unique_ptr<food::Adamax<float>> optim;
    if (!resume_path.empty()) {
        food::Checkpoint ckpt = food::load_checkpoint(resume_path);
        // the optimizer binds to the parameter nodes, which survive the move
        optim = std::make_unique<food::Adamax<float>>(ckpt.make_optimizer());
        model = std::move(ckpt.model);
        split = ckpt.split;
        start_epoch = ckpt.epochs_completed;
        std::cout << "resumed from " << resume_path << " at epoch " << start_epoch
                  << ", optimizer step " << optim->step_count() << "\n";
    } else {
        cfg.model.input_height = ds.n_chirps;
        cfg.model.input_width = ds.n_samples;
        model = food::FoodModel::build(cfg.model);
        optim = std::make_unique<food::Adamax<float>>(model.parameters(), cfg.optim);
    }

    const fs::path run_dir = prepare_run_dir(out_path, cfg);
    std::ofstream log_file(run_dir / "train.log.txt", std::ios::app);

    food::ThreeWaySplit parts = food::three_way_split(ds, split);
    food::TrainOptions opts;
    opts.epochs = cfg.epochs;
    opts.batch_per_class = cfg.batch_per_class;
    opts.optim = cfg.optim;
    opts.seed = cfg.seed;

    train_model(model, *optim, parts.train, ds, opts, start_epoch,
                [&](const food::EpochLog& log) {
                    const std::string line = food::epoch_log_line(log);
                    std::cout << line << std::endl;
                    log_file << line << "\n";
                });

    // training invalidates any previously calibrated thresholds
    food::save_checkpoint(out_path, model, split, optim.get(), food::ThresholdSet{},
                          static_cast<std::uint32_t>(cfg.epochs));
    std::cout << "checkpoint written to " << out_path << " (" << model.parameter_count()
              << " parameters)\n";
    return 0;
}

int cmd_calibrate(const CommonArgs& common, const std::string& ckpt_path,
                  const std::string& data_path) {
    food::RunConfig cfg = resolve_config(common);
    if (common.dump) {
        std::cout << food::dump_config(cfg);
        return 0;
    }
    food::Checkpoint ckpt = food::load_checkpoint(ckpt_path);
    const food::Dataset ds = food::load_dataset(data_path);
    const food::ThreeWaySplit parts = food::three_way_split(ds, ckpt.split);
    const food::ThresholdSet ts =
        food::calibrate(ckpt.model, parts.calib, ds, cfg.threads);

    const auto optim = ckpt.make_optimizer();
    food::save_checkpoint(ckpt_path, ckpt.model, ckpt.split,
                          ckpt.has_optimizer ? &optim : nullptr, ts, ckpt.epochs_completed);
    for (int i = 0; i < 3; ++i) {
        std::cout << "tau" << (i + 1) << "=" << ts.tau[i] << " coverage" << (i + 1) << "="
                  << ts.coverage[i] << " n" << (i + 1) << "=" << ts.calib_count[i] << "\n";
    }
    std::cout << "thresholds written to " << ckpt_path << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& ckpt_path,
             const std::string& id_path, const std::string& ood_path,
             const std::string& report_path) {
    food::RunConfig cfg = resolve_config(common);
    if (common.dump) {
        std::cout << food::dump_config(cfg);
        return 0;
    }
    food::Checkpoint ckpt = food::load_checkpoint(ckpt_path);
    if (!ckpt.thresholds.calibrated) {
        std::cerr << "eval: checkpoint has no calibrated thresholds; run `food calibrate` "
                     "first\n";
        return kExitData;
    }

    const food::Dataset id_ds = food::load_dataset(id_path);
    food::Dataset ood_ds_storage;
    const food::Dataset* ood_ds = &id_ds;
    if (ood_path != id_path) {
        ood_ds_storage = food::load_dataset(ood_path);
        ood_ds = &ood_ds_storage;
    }

    // held-out ID test slice re-derived from the checkpoint's split spec
    const food::ThreeWaySplit parts = food::three_way_split(id_ds, ckpt.split);
    std::vector<const food::FrameCube*> ood_frames = ood_ds->with_label(food::Label::Ood);
    if (ood_frames.empty()) {
        std::cerr << "eval: " << ood_path << " contains no OOD-labeled frames\n";
        return kExitData;
    }

    prepare_run_dir(report_path, cfg);
    const food::MetricsReport report =
        food::evaluate(ckpt.model, ckpt.thresholds, parts.id_test, ood_frames, *ood_ds,
                       cfg.negatives_mode, cfg.threads);

    write_text_file(report_path, report.to_json().dump(2) + "\n");
    const std::string table = report.to_table();
    write_text_file(report_path + ".txt", table);
    for (int i = 0; i < 3; ++i) {
        std::cout << "tau" << (i + 1) << "=" << ckpt.thresholds.tau[i] << " ";
    }
    std::cout << "\n" << table;
    std::cout << "report written to " << report_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FMCW radar face authentication and OOD detection pipeline"};
    app.require_subcommand(1);

    CommonArgs common;

    auto* synth = app.add_subcommand("synth", "generate a synthetic FOODRAW1 dataset");
    std::string synth_out;
    std::size_t frames_flag = 0;
    bool frames_set = false;
    std::string profile_path;
    synth->add_option("--out", synth_out, "output dataset path")->required();
    synth->add_option("--frames-per-class", frames_flag, "frames per population")
        ->each([&](const std::string&) { frames_set = true; });
    synth->add_option("--profile", profile_path, "synthesis profile override file");
    add_common(synth, common);

    auto* train = app.add_subcommand("train", "train the reconstruction network");
    std::string train_data, train_out, resume_path;
    train->add_option("--data", train_data, "FOODRAW1 training dataset")->required();
    train->add_option("--out", train_out, "output checkpoint path")->required();
    train->add_option("--resume", resume_path, "resume from an existing checkpoint");
    add_common(train, common);

    auto* calib = app.add_subcommand("calibrate", "calibrate per-class OOD thresholds");
    std::string calib_ckpt, calib_data;
    calib->add_option("--ckpt", calib_ckpt, "checkpoint to update")->required();
    calib->add_option("--data", calib_data, "FOODRAW1 dataset (calibration slice is derived)")
        ->required();
    add_common(calib, common);

    auto* eval = app.add_subcommand("eval", "evaluate OOD detection and classification");
    std::string eval_ckpt, eval_id, eval_ood, eval_report;
    eval->add_option("--ckpt", eval_ckpt, "calibrated checkpoint")->required();
    eval->add_option("--id", eval_id, "FOODRAW1 dataset with ID frames")->required();
    eval->add_option("--ood", eval_ood, "FOODRAW1 dataset with OOD frames")->required();
    eval->add_option("--report", eval_report, "output JSON report path")->required();
    add_common(eval, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(common, synth_out, frames_flag, frames_set, profile_path);
        }
        if (train->parsed()) return cmd_train(common, train_data, train_out, resume_path);
        if (calib->parsed()) return cmd_calibrate(common, calib_ckpt, calib_data);
        if (eval->parsed()) return cmd_eval(common, eval_ckpt, eval_id, eval_ood, eval_report);
    } catch (const food::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const food::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const food::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
