#pragma once

// Builds the federated datasets from an ExperimentConfig, runs it, and
// serialises the results (rounds.csv, verdicts.csv, summary.json, sweeps, ROC).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "flad/config.hpp"
#include "flad/data.hpp"
#include "flad/detection.hpp"
#include "flad/federation.hpp"
#include "flad/metrics.hpp"
#include "flad/summary.hpp"

namespace flad {

struct PreparedExperiment {
    FederationData data;
    RoundConfig round;
    std::vector<bool> malicious;  // per client id
    std::size_t pca_rank = 1;
};

inline Dataset load_source(const DataSource& src, std::uint64_t seed) {
    if (const auto* s = std::get_if<SyntheticSource>(&src))
        return gen_synthetic(s->k, s->per_class, s->d_in, s->class_sep, s->std_dev, seed);
    const auto& m = std::get<MnistSource>(src);
    Dataset full = load_idx(m.images_path, m.labels_path);
    if (m.subset_n == 0 || m.subset_n >= full.size()) return full;
    return select_reference(full, m.subset_n, derive_seed(seed, {stream::split}));
}

/// Data pipeline: generate or load, hold out a clean split (test set and
/// source of D_ref), partition the rest across clients, then poison.
inline PreparedExperiment prepare(const ExperimentConfig& cfg) {
    PreparedExperiment p;
    p.round = cfg.federation;
    p.round.seed = cfg.seed;

    const Dataset full = load_source(cfg.dataset, cfg.seed);
    auto [train, holdout] = split_holdout(full, cfg.test_fraction, cfg.seed);
    if (cfg.reference_m > holdout.size())
        throw ConfigError("reference.m", "exceeds the held-out pool of " + std::to_string(holdout.size()) + " samples");

    const auto part = partition(train, cfg.federation.N, cfg.partition, cfg.seed);
    const auto poisoned = apply_poison(train, part, cfg.poison, cfg.seed);

    p.malicious = poisoned.mask.malicious;
    std::vector<Dataset> client_sets;
    for (std::size_t c = 0; c < part.clients(); ++c) {
        client_sets.push_back(subset(poisoned.dataset, part.assignments[c]));
        p.data.clients.push_back({c, client_sets.back(), p.malicious[c]});
    }
    p.data.d_ref = select_reference(holdout, cfg.reference_m, cfg.seed);
    p.data.eval.test = std::move(holdout);
    p.data.eval.poisoned = concat(client_sets);

    p.round.arch = cfg.hidden.empty()
                       ? Architecture::for_data(full.dim(), full.k,
                                                std::holds_alternative<MnistSource>(cfg.dataset)
                                                    ? std::vector<std::size_t>{128}
                                                    : std::vector<std::size_t>{32})
                       : Architecture::for_data(full.dim(), full.k, cfg.hidden);
    p.pca_rank = cfg.pca_rank > 0 ? cfg.pca_rank : p.round.arch.ae_bottleneck;
    return p;
}

struct ExperimentResult {
    FladResult flad;
    RunSummary summary;
    std::vector<bool> malicious;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const auto prep = prepare(cfg);
    ExperimentResult out;
    out.flad = run_flad(prep.data, prep.round);
    out.malicious = prep.malicious;
    out.summary = summarize(out.flad, out.malicious, prep.round.detector.combine);
    return out;
}

/// PCA baseline scores per (round, client): fitted on D_ref, applied to each
/// client's data directly with no federated training. The per-client score
/// is repeated for every round so it lines up with the other detectors.
inline std::vector<double> pca_client_round_scores(const PreparedExperiment& prep) {
    const auto model = pca_fit(prep.data.d_ref, prep.pca_rank, prep.round.seed);
    std::vector<double> per_client;
    for (const auto& c : prep.data.clients) per_client.push_back(pca_score(model, c.data));
    std::vector<double> out;
    for (std::size_t r = 0; r < prep.round.R; ++r) out.insert(out.end(), per_client.begin(), per_client.end());
    return out;
}

inline std::vector<bool> pca_client_round_labels(const PreparedExperiment& prep) {
    std::vector<bool> out;
    for (std::size_t r = 0; r < prep.round.R; ++r) out.insert(out.end(), prep.malicious.begin(), prep.malicious.end());
    return out;
}

// ---------------------------------------------------------------------------
// Serialisation

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_rounds_csv(std::ostream& out, std::span<const RoundReport> reports) {
    out << "round,global_loss,global_accuracy,poisoned_eval_accuracy,n_flagged,mean_grad_score,mean_recon_score\n";
    for (const auto& r : reports) {
        double g = 0.0, e = 0.0;
        for (double x : r.grad_scores) g += x;
        for (double x : r.recon_scores) e += x;
        const double n = static_cast<double>(r.grad_scores.size());
        out << r.round << ',' << fmt17(r.global_loss) << ',' << fmt17(r.global_accuracy) << ','
            << fmt17(r.poisoned_eval_accuracy) << ',' << r.flagged_count() << ',' << fmt17(g / n) << ','
            << fmt17(e / n) << '\n';
    }
}

inline void write_verdicts_csv(std::ostream& out, std::span<const RoundReport> reports,
                               const std::vector<bool>& malicious) {
    out << "round,client,is_malicious,grad_score,recon_score,grad_flag,recon_flag,flagged\n";
    for (const auto& r : reports)
        for (const auto& v : r.verdicts)
            out << v.round << ',' << v.client_id << ',' << int(malicious.at(v.client_id)) << ','
                << fmt17(v.grad_score) << ',' << fmt17(v.recon_score) << ',' << int(v.grad_flag) << ','
                << int(v.recon_flag) << ',' << int(v.flagged) << '\n';
}

inline nlohmann::json summary_json(const RunSummary& s) {
    nlohmann::json j;
    j["final_accuracy"] = s.final_accuracy;
    j["poisoned_eval_accuracy"] = s.poisoned_eval_accuracy;
    j["final_global_loss"] = s.final_global_loss;
    j["detection_auc"] = s.detection_auc ? nlohmann::json(*s.detection_auc) : nlohmann::json(nullptr);
    j["tp"] = s.counts.tp;
    j["fp"] = s.counts.fp;
    j["tn"] = s.counts.tn;
    j["fn"] = s.counts.fn;
    j["detection_rate"] = s.counts.detection_rate();
    j["false_positive_rate"] = s.counts.false_positive_rate();
    j["anomalies_per_round"] = s.anomalies_per_round;
    j["total_anomalies"] = s.total_anomalies;
    j["rounds_with_anomalies"] = s.rounds_with_anomalies;
    j["empty_rounds"] = s.empty_rounds;
    j["mean_grad_score"] = s.mean_grad_score;
    j["mean_recon_score"] = s.mean_recon_score;
    return j;
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, bool with_seed) {
    out << "sf";
    if (with_seed) out << ",seed";
    out << ",final_accuracy,poisoned_eval_accuracy,total_anomalies,rounds_with_anomalies,mean_grad_score,"
           "mean_recon_score,detection_rate,false_positive_rate\n";
    for (const auto& r : rows) {
        out << fmt17(r.sf);
        if (with_seed) out << ',' << r.seed;
        out << ',' << fmt17(r.final_accuracy) << ',' << fmt17(r.poisoned_eval_accuracy) << ','
            << fmt17(r.total_anomalies) << ',' << fmt17(r.rounds_with_anomalies) << ',' << fmt17(r.mean_grad_score)
            << ',' << fmt17(r.mean_recon_score) << ',' << fmt17(r.detection_rate) << ','
            << fmt17(r.false_positive_rate) << '\n';
    }
}

inline void write_roc_csv(std::ostream& out, const RocCurve& roc) {
    out << "fpr,tpr\n";
    for (const auto& p : roc.points) out << fmt17(p.fpr) << ',' << fmt17(p.tpr) << '\n';
}

}  // namespace flad
