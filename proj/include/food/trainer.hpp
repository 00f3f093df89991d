// Training loop and the deterministic train/calibration/test partition.
//
// Each step draws one equal-size mini-batch per ID class, computes the seven
// reconstruction losses, backpropagates their sum, and applies one Adamax
// update. Execution within a step is single-threaded; identical seeds
// reproduce identical parameter trajectories bit for bit.

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "food/checkpoint.hpp"
#include "food/model.hpp"
#include "food/optim.hpp"
#include "food/radar.hpp"

namespace food {

// Shuffle [0,n) with the given stream and keep the first floor(fraction*n),
// restored to ascending order.
inline std::vector<std::size_t> stratified_take(std::size_t n, double fraction, Rng rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.uniform_int(0, i - 1);
        std::swap(idx[i - 1], idx[j]);
    }
    const std::size_t take = static_cast<std::size_t>(fraction * static_cast<double>(n) + 1e-9);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Deterministic three-way partition of a labeled dataset:
//   per ID class: train (trained on), calib (threshold calibration only),
//   test (held out entirely); OOD frames all go to test.
// Both stages are stratified per class and depend only on SplitSpec, so
// training, calibration, and evaluation re-derive identical partitions.
struct ThreeWaySplit {
    std::array<std::vector<const FrameCube*>, 3> train;
    std::array<std::vector<const FrameCube*>, 3> calib;
    std::array<std::vector<const FrameCube*>, 3> id_test;
    std::vector<const FrameCube*> ood_test;
};

inline ThreeWaySplit three_way_split(const Dataset& ds, const SplitSpec& spec) {
    ThreeWaySplit out;
    for (int c = 0; c < 3; ++c) {
        std::vector<const FrameCube*> all;
        for (const auto& f : ds.frames) {
            if (f.label == static_cast<Label>(c)) all.push_back(&f);
        }
        // stage 1: train pool vs test
        const auto pool_idx = stratified_take(all.size(), spec.train_fraction,
                                              Rng::derive(spec.seed, 0x100 + c));
        std::vector<bool> in_pool(all.size(), false);
        for (std::size_t i : pool_idx) in_pool[i] = true;
        std::vector<const FrameCube*> pool;
        for (std::size_t i = 0; i < all.size(); ++i) {
            (in_pool[i] ? pool : out.id_test[c]).push_back(all[i]);
        }
        // stage 2: carve the calibration slice out of the train pool
        const auto train_idx = stratified_take(pool.size(), 1.0 - spec.calib_fraction,
                                               Rng::derive(spec.seed, 0x200 + c));
        std::vector<bool> in_train(pool.size(), false);
        for (std::size_t i : train_idx) in_train[i] = true;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            (in_train[i] ? out.train[c] : out.calib[c]).push_back(pool[i]);
        }
    }
    for (const auto& f : ds.frames) {
        if (f.label == Label::Ood) out.ood_test.push_back(&f);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_per_class = 32;
    AdamaxConfig optim;
    std::uint64_t seed = 1; // drives per-epoch shuffles
};

struct EpochLog {
    std::size_t epoch = 0; // 1-based, cumulative across resumes
    typename LossBreakdown<float>::Values mean;
    std::size_t steps = 0;
    double seconds = 0.0;
};

// Runs (opts.epochs - start_epoch) epochs. per_epoch is invoked after each
// epoch with averaged loss components; throwing NumericError aborts on the
// first non-finite loss.
inline std::vector<EpochLog> train_model(
    FoodModel& model, Adamax<float>& optim,
    const std::array<std::vector<const FrameCube*>, 3>& train_frames, const Dataset& ds,
    const TrainOptions& opts, std::size_t start_epoch = 0,
    const std::function<void(const EpochLog&)>& per_epoch = {}) {
    if (opts.batch_per_class == 0) throw std::invalid_argument("train: batch size is zero");
    std::size_t min_frames = train_frames[0].size();
    for (const auto& v : train_frames) min_frames = std::min(min_frames, v.size());
    const std::size_t steps_per_epoch = min_frames / opts.batch_per_class;
    if (steps_per_epoch == 0) {
        throw std::invalid_argument(
            "train: smallest class has " + std::to_string(min_frames) +
            " frames, need at least batch_per_class=" + std::to_string(opts.batch_per_class));
    }

    std::vector<EpochLog> logs;
    for (std::size_t epoch = start_epoch; epoch < opts.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        std::array<std::vector<std::size_t>, 3> order;
        for (int c = 0; c < 3; ++c) {
            const std::size_t n = train_frames[c].size();
            order[c].resize(n);
            for (std::size_t i = 0; i < n; ++i) order[c][i] = i;
            Rng rng = Rng::derive(opts.seed, 0x1000 + epoch * 4 + c);
            for (std::size_t i = n; i > 1; --i) {
                const std::size_t j = rng.uniform_int(0, i - 1);
                std::swap(order[c][i - 1], order[c][j]);
            }
        }

        EpochLog log;
        log.epoch = epoch + 1;
        log.steps = steps_per_epoch;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            std::array<TensorF, 3> batches;
            for (int c = 0; c < 3; ++c) {
                std::vector<const FrameCube*> batch(opts.batch_per_class);
                for (std::size_t i = 0; i < opts.batch_per_class; ++i) {
                    batch[i] = train_frames[c][order[c][step * opts.batch_per_class + i]];
                }
                batches[c] = stack_frames(batch, ds);
            }
            LossBreakdown<float> lb = model.training_losses(batches);
            const auto v = lb.values();
            if (!std::isfinite(v.total)) {
                throw NumericError("train: non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + " step " +
                                   std::to_string(step + 1));
            }
            for (int c = 0; c < 3; ++c) {
                log.mean.mp[c] += v.mp[c];
                log.mean.pl[c] += v.pl[c];
            }
            log.mean.cl += v.cl;
            log.mean.total += v.total;

            lb.total.backward();
            optim.step();
            optim.zero_grad();
        }

        const double inv = 1.0 / static_cast<double>(steps_per_epoch);
        for (int c = 0; c < 3; ++c) {
            log.mean.mp[c] *= inv;
            log.mean.pl[c] *= inv;
        }
        log.mean.cl *= inv;
        log.mean.total *= inv;
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        if (per_epoch) per_epoch(log);
        logs.push_back(log);
    }
    return logs;
}

// One machine-readable line per epoch: seven loss components plus the total.
inline std::string epoch_log_line(const EpochLog& log) {
    std::ostringstream os;
    os.precision(8);
    os << "epoch=" << log.epoch << " mp1=" << log.mean.mp[0] << " mp2=" << log.mean.mp[1]
       << " mp3=" << log.mean.mp[2] << " cl=" << log.mean.cl << " pl1=" << log.mean.pl[0]
       << " pl2=" << log.mean.pl[1] << " pl3=" << log.mean.pl[2]
       << " total=" << log.mean.total << " steps=" << log.steps
       << " seconds=" << log.seconds;
    return os.str();
}

} // namespace food
