// Multi-threshold OOD calibration and the joint OOD/classification rule.
//
// Each ID class gets its own threshold tau_i: the smallest order statistic of
// that class's calibration OOD scores that covers at least 95% of them
// (k = ceil(0.95*N), computed in integer arithmetic). A sample is declared
// OOD only when all three of its OOD scores exceed their thresholds;
// otherwise it is assigned the class with the smallest classification score,
// ties going to the lowest class index.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "food/model.hpp"
#include "food/radar.hpp"

namespace food {

// 1-based index of the smallest order statistic covering >= 95% of n values.
inline std::size_t ceil95_index(std::size_t n) {
    return (19 * n + 19) / 20;
}

struct ThresholdSet {
    std::array<double, 3> tau{};
    std::array<std::size_t, 3> calib_count{};
    std::array<double, 3> coverage{}; // achieved fraction of scores <= tau
    bool calibrated = false;
};

struct Decision {
    Label label = Label::Ood;
    ScoreTriple scores;
};

inline ThresholdSet calibrate_from_scores(
    const std::array<std::vector<double>, 3>& per_class_scores) {
    ThresholdSet ts;
    for (int i = 0; i < 3; ++i) {
        const auto& scores = per_class_scores[i];
        if (scores.empty()) {
            throw std::invalid_argument("calibrate: empty calibration set for class " +
                                        std::to_string(i + 1));
        }
        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t k = ceil95_index(sorted.size());
        ts.tau[i] = sorted[k - 1];
        ts.calib_count[i] = sorted.size();
        const auto below = static_cast<std::size_t>(
            std::upper_bound(sorted.begin(), sorted.end(), ts.tau[i]) - sorted.begin());
        ts.coverage[i] = static_cast<double>(below) / static_cast<double>(sorted.size());
    }
    ts.calibrated = true;
    return ts;
}

inline Decision decide(const ScoreTriple& scores, const ThresholdSet& thresholds) {
    if (!thresholds.calibrated) {
        throw std::logic_error("decide: thresholds are not calibrated");
    }
    Decision d;
    d.scores = scores;
    bool all_exceed = true;
    for (int i = 0; i < 3; ++i) {
        all_exceed = all_exceed && scores.ood_scores[i] > thresholds.tau[i];
    }
    if (all_exceed) {
        d.label = Label::Ood;
        return d;
    }
    int best = 0;
    for (int i = 1; i < 3; ++i) {
        if (scores.cls_scores[i] < scores.cls_scores[best]) best = i;
    }
    d.label = static_cast<Label>(best);
    return d;
}

// ---------------------------------------------------------------------------
// Scoring passes over frames
// ---------------------------------------------------------------------------

// Scores each frame through the frozen model. Workers take disjoint index
// ranges; results are positionally stable, so the output does not depend on
// the thread count.
inline std::vector<ScoreTriple> score_frames(const FoodModel& model,
                                             const std::vector<const FrameCube*>& frames,
                                             const Dataset& ds, std::size_t threads = 1) {
    std::vector<ScoreTriple> out(frames.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            TensorF x = stack_frames({frames[i]}, ds);
            out[i] = model.score_sample(x);
        }
    };
    if (threads <= 1 || frames.size() < 2) {
        work(0, frames.size());
    } else {
        const std::size_t n_workers = std::min<std::size_t>(threads, frames.size());
        std::vector<std::thread> pool;
        const std::size_t chunk = (frames.size() + n_workers - 1) / n_workers;
        for (std::size_t w = 0; w < n_workers; ++w) {
            const std::size_t b = w * chunk;
            const std::size_t e = std::min(frames.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& t : pool) t.join();
    }
    return out;
}

// Thresholds from per-class ID calibration frames, scored with ood_score_i
// for class i.
inline ThresholdSet calibrate(const FoodModel& model,
                              const std::array<std::vector<const FrameCube*>, 3>& calib,
                              const Dataset& ds, std::size_t threads = 1) {
    std::array<std::vector<double>, 3> per_class_scores;
    for (int i = 0; i < 3; ++i) {
        const auto scores = score_frames(model, calib[i], ds, threads);
        per_class_scores[i].reserve(scores.size());
        for (const auto& s : scores) per_class_scores[i].push_back(s.ood_scores[i]);
    }
    return calibrate_from_scores(per_class_scores);
}

} // namespace food
