#pragma once

// Per-run summaries over (client, round) decisions and the sensitivity sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "flad/detection.hpp"
#include "flad/federation.hpp"
#include "flad/metrics.hpp"

namespace flad {

/// Which per-client-round score feeds a ROC curve.
enum class RocScore {
    combined,  // max (or min, for the AND rule) of the two channel z-scores
    grad,      // gradient score standardised within its round
    recon,     // reconstruction error standardised against the clean baseline
};

/// Scores for every (round, client) pair in report order.
inline std::vector<double> client_round_scores(std::span<const RoundReport> reports, const ReconBaseline& base,
                                               RocScore which, Combine rule = Combine::either) {
    std::vector<double> out;
    for (const auto& rep : reports) {
        const auto stats = population_stats(rep.grad_scores);
        for (std::size_t c = 0; c < rep.grad_scores.size(); ++c) {
            const double zg = standard_score(rep.grad_scores[c], stats.mu, stats.sigma);
            const double zr = standard_score(rep.recon_scores[c], base.mu_r, base.sigma_r);
            switch (which) {
                case RocScore::grad: out.push_back(zg); break;
                case RocScore::recon: out.push_back(zr); break;
                case RocScore::combined:
                    out.push_back(rule == Combine::either ? std::max(zg, zr) : std::min(zg, zr));
                    break;
            }
        }
    }
    return out;
}

/// Ground-truth labels aligned with client_round_scores.
inline std::vector<bool> client_round_labels(std::span<const RoundReport> reports,
                                             const std::vector<bool>& malicious_by_client) {
    std::vector<bool> out;
    for (const auto& rep : reports)
        for (const auto& v : rep.verdicts) out.push_back(malicious_by_client.at(v.client_id));
    return out;
}

inline std::vector<bool> client_round_flags(std::span<const RoundReport> reports) {
    std::vector<bool> out;
    for (const auto& rep : reports)
        for (const auto& v : rep.verdicts) out.push_back(v.flagged);
    return out;
}

struct RunSummary {
    double final_accuracy = 0.0;
    double poisoned_eval_accuracy = 0.0;
    double final_global_loss = 0.0;
    std::optional<double> detection_auc;  // absent when no client is malicious (or none is clean)
    ConfusionCounts counts;
    std::vector<std::size_t> anomalies_per_round;
    std::size_t total_anomalies = 0;
    std::size_t rounds_with_anomalies = 0;
    std::size_t empty_rounds = 0;
    double mean_grad_score = 0.0;
    double mean_recon_score = 0.0;
};

inline RunSummary summarize(const FladResult& res, const std::vector<bool>& malicious_by_client,
                            Combine rule = Combine::either) {
    RunSummary s;
    if (res.reports.empty()) return s;
    const auto& last = res.reports.back();
    s.final_accuracy = last.global_accuracy;
    s.poisoned_eval_accuracy = last.poisoned_eval_accuracy;
    s.final_global_loss = last.global_loss;

    double g = 0.0, r = 0.0;
    std::size_t cells = 0;
    for (const auto& rep : res.reports) {
        const auto n = rep.flagged_count();
        s.anomalies_per_round.push_back(n);
        s.total_anomalies += n;
        if (n > 0) ++s.rounds_with_anomalies;
        if (rep.empty_accepted) ++s.empty_rounds;
        for (std::size_t c = 0; c < rep.grad_scores.size(); ++c, ++cells) {
            g += rep.grad_scores[c];
            r += rep.recon_scores[c];
        }
    }
    s.mean_grad_score = g / static_cast<double>(cells);
    s.mean_recon_score = r / static_cast<double>(cells);

    const auto labels = client_round_labels(res.reports, malicious_by_client);
    s.counts = confusion(client_round_flags(res.reports), labels);
    const auto pos = std::count(labels.begin(), labels.end(), true);
    if (pos > 0 && static_cast<std::size_t>(pos) < labels.size())
        s.detection_auc = roc_curve(client_round_scores(res.reports, res.recon_base, RocScore::combined, rule), labels).auc;
    return s;
}

// ---------------------------------------------------------------------------
// Sensitivity sweep

struct SweepRow {
    double sf = 0.0;
    std::uint64_t seed = 0;  // meaningful for raw rows only
    double final_accuracy = 0.0;
    double poisoned_eval_accuracy = 0.0;
    double total_anomalies = 0.0;
    double rounds_with_anomalies = 0.0;
    double mean_grad_score = 0.0;
    double mean_recon_score = 0.0;
    double detection_rate = 0.0;
    double false_positive_rate = 0.0;
};

struct SweepResult {
    std::vector<double> sf_grid;
    std::vector<SweepRow> rows;  // one per sf, averaged over seeds
    std::vector<SweepRow> raw;   // one per (sf, seed)
};

inline SweepRow sweep_row(double sf, std::uint64_t seed, const RunSummary& s) {
    return {sf,
            seed,
            s.final_accuracy,
            s.poisoned_eval_accuracy,
            static_cast<double>(s.total_anomalies),
            static_cast<double>(s.rounds_with_anomalies),
            s.mean_grad_score,
            s.mean_recon_score,
            s.counts.detection_rate(),
            s.counts.false_positive_rate()};
}

/// Runs `run(sf, seed) -> RunSummary` for every grid point and seed, in
/// (sf, seed) order, and averages each column over seeds.
template <typename RunFn>
SweepResult sweep_sensitivity(RunFn&& run, std::span<const double> sf_grid, std::span<const std::uint64_t> seeds) {
    if (sf_grid.empty()) throw InvalidSpecError("sweep: empty sensitivity grid");
    if (seeds.empty()) throw InvalidSpecError("sweep: need at least one seed");
    SweepResult out;
    out.sf_grid.assign(sf_grid.begin(), sf_grid.end());
    for (double sf : sf_grid) {
        SweepRow avg{sf, 0};
        for (auto seed : seeds) {
            const SweepRow row = sweep_row(sf, seed, run(sf, seed));
            out.raw.push_back(row);
            avg.final_accuracy += row.final_accuracy;
            avg.poisoned_eval_accuracy += row.poisoned_eval_accuracy;
            avg.total_anomalies += row.total_anomalies;
            avg.rounds_with_anomalies += row.rounds_with_anomalies;
            avg.mean_grad_score += row.mean_grad_score;
            avg.mean_recon_score += row.mean_recon_score;
            avg.detection_rate += row.detection_rate;
            avg.false_positive_rate += row.false_positive_rate;
        }
        const double n = static_cast<double>(seeds.size());
        for (double* col : {&avg.final_accuracy, &avg.poisoned_eval_accuracy, &avg.total_anomalies,
                            &avg.rounds_with_anomalies, &avg.mean_grad_score, &avg.mean_recon_score,
                            &avg.detection_rate, &avg.false_positive_rate})
            *col /= n;
        out.rows.push_back(avg);
    }
    return out;
}

}  // namespace flad
