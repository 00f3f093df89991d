// OOD detection metrics and the evaluation protocol.
//
// Score convention: higher means more OOD-like. AUROC is computed rank-based
// (Mann-Whitney, ties counted half); AUPR is average precision with step
// interpolation, orienting scores so the positive side ranks first; FPR95
// counts OOD samples accepted at the threshold that admits 95% of ID
// samples. evaluate() scores every test frame once and derives both the
// per-class detection metrics and the decision-level confusion matrix from
// that single pass.

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "food/detect.hpp"
#include "food/model.hpp"
#include "food/radar.hpp"

namespace food {

struct ScoredPopulation {
    std::vector<double> id_scores;
    std::vector<double> ood_scores;

    void validate(const char* op) const {
        if (id_scores.empty() || ood_scores.empty()) {
            throw std::invalid_argument(std::string(op) +
                                        ": both populations must be non-empty");
        }
        for (double v : id_scores) {
            if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite ID score");
        }
        for (double v : ood_scores) {
            if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite OOD score");
        }
    }
};

// P(ood > id) + 1/2 P(ood == id), via sorted counting. The pair counts are
// integers, so the result is exact up to the final division.
inline double auroc(const ScoredPopulation& pop) {
    pop.validate("auroc");
    std::vector<double> id_sorted = pop.id_scores;
    std::sort(id_sorted.begin(), id_sorted.end());
    std::uint64_t twice_wins = 0;
    for (double o : pop.ood_scores) {
        const auto lo = std::lower_bound(id_sorted.begin(), id_sorted.end(), o);
        const auto hi = std::upper_bound(lo, id_sorted.end(), o);
        const std::uint64_t less = static_cast<std::uint64_t>(lo - id_sorted.begin());
        const std::uint64_t ties = static_cast<std::uint64_t>(hi - lo);
        twice_wins += 2 * less + ties;
    }
    return static_cast<double>(twice_wins) /
           (2.0 * static_cast<double>(pop.id_scores.size()) *
            static_cast<double>(pop.ood_scores.size()));
}

// Average precision with the positive side ranked first. positives_ood
// selects which population counts as positive; for ID positives the score
// order is flipped so low scores rank first.
inline double aupr(const ScoredPopulation& pop, bool positives_ood) {
    pop.validate("aupr");
    struct Entry {
        double key;
        bool positive;
    };
    std::vector<Entry> entries;
    entries.reserve(pop.id_scores.size() + pop.ood_scores.size());
    const double sign = positives_ood ? -1.0 : 1.0; // sort ascending by key = sign*score
    for (double v : pop.id_scores) entries.push_back({sign * v, !positives_ood});
    for (double v : pop.ood_scores) entries.push_back({sign * v, positives_ood});
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.key < b.key; });

    const std::size_t total_pos = positives_ood ? pop.ood_scores.size() : pop.id_scores.size();
    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    std::size_t i = 0;
    while (i < entries.size()) {
        // whole tie block enters at one threshold
        std::size_t j = i;
        std::size_t block_pos = 0;
        while (j < entries.size() && entries[j].key == entries[i].key) {
            block_pos += entries[j].positive ? 1 : 0;
            ++j;
        }
        tp += block_pos;
        seen = j;
        if (block_pos > 0) {
            const double precision = static_cast<double>(tp) / static_cast<double>(seen);
            ap += precision * static_cast<double>(block_pos) / static_cast<double>(total_pos);
        }
        i = j;
    }
    return ap;
}

// Fraction of OOD scores at or below the threshold that admits 95% of ID
// scores (k-th smallest ID score, k = ceil(0.95*N)).
inline double fpr_at_95_tpr(const ScoredPopulation& pop) {
    pop.validate("fpr_at_95_tpr");
    std::vector<double> id_sorted = pop.id_scores;
    std::sort(id_sorted.begin(), id_sorted.end());
    const double tau = id_sorted[ceil95_index(id_sorted.size()) - 1];
    std::size_t fp = 0;
    for (double o : pop.ood_scores) fp += o <= tau ? 1 : 0;
    return static_cast<double>(fp) / static_cast<double>(pop.ood_scores.size());
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

enum class IdNegativesMode {
    ClassOnly, // class-i ID samples vs all OOD (default)
    AllId,     // all ID samples vs all OOD, still scored with ood_score_i
};

inline const char* to_string(IdNegativesMode m) {
    return m == IdNegativesMode::ClassOnly ? "class_only" : "all_id";
}

struct PerClassMetrics {
    double auroc = 0.0;
    double aupr_in = 0.0;
    double aupr_out = 0.0;
    double fpr95 = 0.0;
};

struct MetricsReport {
    std::array<PerClassMetrics, 3> per_class{};
    double accuracy = 0.0;
    // rows: true PER1..3, OOD; cols: predicted PER1..3, OOD
    std::array<std::array<std::uint64_t, 4>, 4> confusion{};
    std::array<std::uint64_t, 3> id_test_counts{};
    std::uint64_t ood_test_count = 0;
    IdNegativesMode mode = IdNegativesMode::ClassOnly;
    double id_acceptance = 0.0; // fraction of ID test frames not declared OOD
    double test_time_seconds = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema"] = "food-metrics-v1";
        j["mode"] = to_string(mode);
        j["per_class"] = nlohmann::json::array();
        static const char* names[3] = {"PER1", "PER2", "PER3"};
        for (int i = 0; i < 3; ++i) {
            j["per_class"].push_back({{"class", names[i]},
                                      {"auroc", per_class[i].auroc},
                                      {"aupr_in", per_class[i].aupr_in},
                                      {"aupr_out", per_class[i].aupr_out},
                                      {"fpr95", per_class[i].fpr95}});
        }
        j["accuracy"] = accuracy;
        j["id_acceptance"] = id_acceptance;
        j["confusion"] = confusion;
        j["counts"] = {{"id_test", id_test_counts}, {"ood_test", ood_test_count}};
        j["timing"] = {{"test_time_seconds", test_time_seconds}};
        return j;
    }

    static MetricsReport from_json(const nlohmann::json& j) {
        MetricsReport r;
        r.mode = j.at("mode").get<std::string>() == "all_id" ? IdNegativesMode::AllId
                                                             : IdNegativesMode::ClassOnly;
        for (int i = 0; i < 3; ++i) {
            const auto& c = j.at("per_class").at(i);
            r.per_class[i].auroc = c.at("auroc").get<double>();
            r.per_class[i].aupr_in = c.at("aupr_in").get<double>();
            r.per_class[i].aupr_out = c.at("aupr_out").get<double>();
            r.per_class[i].fpr95 = c.at("fpr95").get<double>();
        }
        r.accuracy = j.at("accuracy").get<double>();
        r.id_acceptance = j.at("id_acceptance").get<double>();
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                r.confusion[a][b] = j.at("confusion").at(a).at(b).get<std::uint64_t>();
            }
        }
        for (int i = 0; i < 3; ++i) {
            r.id_test_counts[i] = j.at("counts").at("id_test").at(i).get<std::uint64_t>();
        }
        r.ood_test_count = j.at("counts").at("ood_test").get<std::uint64_t>();
        r.test_time_seconds = j.at("timing").at("test_time_seconds").get<double>();
        return r;
    }

    std::string to_table() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4);
        os << "Class    AUROC    AUPR_IN  AUPR_OUT FPR95\n";
        static const char* names[3] = {"PER1", "PER2", "PER3"};
        for (int i = 0; i < 3; ++i) {
            os << std::left << std::setw(9) << names[i] << std::setw(9)
               << per_class[i].auroc << std::setw(9) << per_class[i].aupr_in << std::setw(9)
               << per_class[i].aupr_out << std::setw(9) << per_class[i].fpr95 << "\n";
        }
        os << "Accuracy " << accuracy << "   ID acceptance " << id_acceptance
           << "   Test time " << std::setprecision(2) << test_time_seconds << " s\n";
        os << "Confusion (rows true PER1..3,OOD / cols predicted):\n";
        for (int a = 0; a < 4; ++a) {
            os << " ";
            for (int b = 0; b < 4; ++b) os << std::setw(8) << confusion[a][b];
            os << "\n";
        }
        os << "Per-class negatives mode: " << to_string(mode) << "\n";
        return os.str();
    }
};

// Full test protocol: per-class detection populations scored with that
// class's OOD score, plus decision-level accuracy over the union of the ID
// and OOD test sets. The wall clock covers the scoring pass.
inline MetricsReport evaluate(const FoodModel& model, const ThresholdSet& thresholds,
                              const std::array<std::vector<const FrameCube*>, 3>& id_test,
                              const std::vector<const FrameCube*>& ood_test,
                              const Dataset& ds,
                              IdNegativesMode mode = IdNegativesMode::ClassOnly,
                              std::size_t threads = 1) {
    for (int i = 0; i < 3; ++i) {
        if (id_test[i].empty()) {
            throw std::invalid_argument("evaluate: no test frames for class " +
                                        std::to_string(i + 1));
        }
    }
    if (ood_test.empty()) throw std::invalid_argument("evaluate: no OOD test frames");
    if (!thresholds.calibrated) {
        throw std::logic_error("evaluate: thresholds are not calibrated; run calibrate first");
    }

    MetricsReport report;
    report.mode = mode;

    const auto t0 = std::chrono::steady_clock::now();
    std::array<std::vector<ScoreTriple>, 3> id_scores;
    for (int i = 0; i < 3; ++i) id_scores[i] = score_frames(model, id_test[i], ds, threads);
    std::vector<ScoreTriple> ood_scores = score_frames(model, ood_test, ds, threads);
    const auto t1 = std::chrono::steady_clock::now();
    report.test_time_seconds = std::chrono::duration<double>(t1 - t0).count();

    for (int i = 0; i < 3; ++i) {
        ScoredPopulation pop;
        if (mode == IdNegativesMode::ClassOnly) {
            for (const auto& s : id_scores[i]) pop.id_scores.push_back(s.ood_scores[i]);
        } else {
            for (int c = 0; c < 3; ++c) {
                for (const auto& s : id_scores[c]) pop.id_scores.push_back(s.ood_scores[i]);
            }
        }
        for (const auto& s : ood_scores) pop.ood_scores.push_back(s.ood_scores[i]);
        report.per_class[i].auroc = auroc(pop);
        report.per_class[i].aupr_in = aupr(pop, /*positives_ood=*/false);
        report.per_class[i].aupr_out = aupr(pop, /*positives_ood=*/true);
        report.per_class[i].fpr95 = fpr_at_95_tpr(pop);
    }

    std::uint64_t correct = 0, total = 0, id_accepted = 0, id_total = 0;
    for (int i = 0; i < 3; ++i) {
        report.id_test_counts[i] = id_scores[i].size();
        for (const auto& s : id_scores[i]) {
            const Decision d = decide(s, thresholds);
            report.confusion[i][static_cast<int>(d.label)]++;
            correct += d.label == static_cast<Label>(i) ? 1 : 0;
            id_accepted += d.label != Label::Ood ? 1 : 0;
            ++total;
            ++id_total;
        }
    }
    report.ood_test_count = ood_scores.size();
    for (const auto& s : ood_scores) {
        const Decision d = decide(s, thresholds);
        report.confusion[3][static_cast<int>(d.label)]++;
        correct += d.label == Label::Ood ? 1 : 0;
        ++total;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    report.id_acceptance = static_cast<double>(id_accepted) / static_cast<double>(id_total);
    return report;
}

} // namespace food
