#pragma once

// Round orchestration: local training, anomaly screening, exclusion of
// flagged clients and size-weighted aggregation of the remaining updates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flad/dataset.hpp"
#include "flad/detection.hpp"
#include "flad/error.hpp"
#include "flad/metrics.hpp"
#include "flad/nn.hpp"
#include "flad/parallel.hpp"
#include "flad/random.hpp"

namespace flad {

enum class LrSchedule { constant, inv_sqrt_T };

/// Network shapes for the global classifier and the detector autoencoder.
struct Architecture {
    MlpConfig classifier;
    std::vector<std::size_t> ae_hidden{64};
    std::size_t ae_bottleneck = 16;

    /// d_in -> hidden... -> k classifier (default one hidden layer of 32) and
    /// a d_in -> 64 -> b -> 64 -> d_in autoencoder with b = min(16, d_in / 2).
    static Architecture for_data(std::size_t d_in, std::size_t k, std::vector<std::size_t> hidden = {32}) {
        if (d_in < 2) throw InvalidSpecError("autoencoder needs d_in >= 2");
        Architecture a;
        a.classifier.layer_sizes.push_back(d_in);
        for (auto h : hidden) a.classifier.layer_sizes.push_back(h);
        a.classifier.layer_sizes.push_back(k);
        a.classifier.hidden_activation = Activation::relu;
        a.classifier.output_head = OutputHead::softmax_logits;
        a.ae_bottleneck = std::min<std::size_t>(16, d_in / 2);
        return a;
    }
};

struct RoundConfig {
    std::size_t N = 10;
    std::size_t R = 20;
    double lr = 0.001;
    std::size_t bs = 64;
    std::size_t local_epochs = 1;
    Sensitivity sens = Sensitivity::uniform(2.0);
    LrSchedule lr_schedule = LrSchedule::constant;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;

    Architecture arch;
    DetectorOptions detector;
    std::size_t ae_epochs = 200;
    double ae_lr = 0.001;
    std::size_t ae_bs = 64;
    std::size_t calibration_chunk = 0;  // 0: mean client size, capped at half the calibration rows
    double calibration_fraction = 0.5;  // share of D_ref held out from autoencoder training for calibration

    void validate() const {
        if (N < 1) throw InvalidSpecError("federation.N must be >= 1");
        if (R < 1) throw InvalidSpecError("federation.R must be >= 1");
        if (!(lr > 0.0)) throw InvalidSpecError("federation.lr must be positive");
        if (bs < 1) throw InvalidSpecError("federation.bs must be >= 1");
        if (!(sens.alpha >= 0.0) || !(sens.beta >= 0.0)) throw InvalidSpecError("sensitivity must be non-negative");
    }

    /// Step size used in every round: lr, or lr / sqrt(R) for the
    /// horizon-scaled schedule.
    double round_lr() const {
        return lr_schedule == LrSchedule::constant ? lr : lr / std::sqrt(static_cast<double>(R));
    }
};

struct ClientState {
    std::size_t id = 0;
    Dataset data;
    bool is_malicious = false;  // ground truth; never read by the detector
};

struct ServerState {
    Model global;
    Autoencoder detector_ae;
    ReconBaseline recon_base;
    Dataset d_ref;
};

/// Clean held-out test data plus the union of (possibly poisoned) client data.
struct EvalData {
    Dataset test;
    Dataset poisoned;
};

struct FederationData {
    std::vector<ClientState> clients;
    Dataset d_ref;
    EvalData eval;
};

struct RoundReport {
    std::size_t round = 0;
    std::vector<AnomalyVerdict> verdicts;
    std::vector<std::size_t> accepted;
    bool empty_accepted = false;
    double global_loss = 0.0;
    double global_accuracy = 0.0;
    double poisoned_eval_accuracy = 0.0;
    std::vector<double> grad_scores;
    std::vector<double> recon_scores;

    std::size_t flagged_count() const {
        return static_cast<std::size_t>(
            std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.flagged; }));
    }
};

struct LocalUpdate {
    Model local;
    ParamVector delta;
    double grad_score = 0.0;
    double recon_score = 0.0;
};

inline ParamVector reference_gradient(const ServerState& server) {
    return backward(server.global, server.d_ref.features, server.d_ref.labels);
}

/// Trains the client's copy of the global model and scores it on both
/// channels. `ref_grad` is the global model's gradient on D_ref.
inline LocalUpdate local_update(const ClientState& client, const ServerState& server, const RoundConfig& cfg,
                                std::size_t round, const ParamVector& ref_grad) {
    LocalUpdate up;
    up.local = train_local(server.global, client.data, cfg.round_lr(), cfg.bs, cfg.local_epochs,
                           derive_seed(cfg.seed, {stream::local_train, client.id, round}), cfg.optimizer);
    up.delta = up.local.params - server.global.params;

    const ParamVector g = backward(up.local, client.data.features, client.data.labels);
    up.grad_score = cfg.detector.grad_score == GradScoreKind::deviation ? grad_deviation(g, ref_grad) : l2_norm(g);

    if (cfg.detector.ae_mode == AeMode::server_ref) {
        up.recon_score = recon_error(server.detector_ae, client.data);
    } else {
        const auto seed = derive_seed(cfg.seed, {stream::client_ae, client.id, round});
        auto ae = Autoencoder::make(client.data.dim(), cfg.arch.ae_hidden, cfg.arch.ae_bottleneck, seed);
        ae = train_autoencoder(ae, client.data.features, cfg.ae_lr, cfg.ae_bs, cfg.ae_epochs, derive_seed(seed, {1}));
        up.recon_score = recon_error(ae, client.data);
    }
    return up;
}

inline LocalUpdate local_update(const ClientState& client, const ServerState& server, const RoundConfig& cfg,
                                std::size_t round) {
    return local_update(client, server, cfg, round, reference_gradient(server));
}

/// Size-weighted mean of client updates.
inline ParamVector aggregate(std::span<const ParamVector> deltas, std::span<const std::size_t> sizes) {
    if (deltas.empty()) throw EmptyDataError("aggregate: no updates");
    if (deltas.size() != sizes.size()) throw ShapeError("aggregate: deltas and sizes differ in length");
    double total = 0.0;
    for (auto s : sizes) {
        if (s == 0) throw InvalidSpecError("aggregate: client size must be positive");
        total += static_cast<double>(s);
    }
    ParamVector out(deltas.front().size());
    for (std::size_t c = 0; c < deltas.size(); ++c) {
        if (deltas[c].size() != out.size()) throw ShapeError("aggregate: update dimension mismatch");
        const double w = static_cast<double>(sizes[c]) / total;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * deltas[c][i];
    }
    return out;
}

inline void evaluate_into(RoundReport& rep, const Model& global, const EvalData& eval) {
    if (!eval.test.empty()) {
        rep.global_loss = loss_value(global, eval.test.features, eval.test.labels);
        rep.global_accuracy = accuracy(global, eval.test);
    }
    if (!eval.poisoned.empty()) rep.poisoned_eval_accuracy = accuracy(global, eval.poisoned);
}

/// One round over every client: parallel local updates, then detection and
/// aggregation in ascending client order. A round in which every client is
/// flagged leaves the global model unchanged.
inline RoundReport flad_round(ServerState& server, std::span<const ClientState> clients, const RoundConfig& cfg,
                              std::size_t round, const EvalData& eval) {
    const std::size_t n = clients.size();
    const ParamVector ref_grad = reference_gradient(server);
    std::vector<LocalUpdate> updates(n);
    parallel_for(n, [&](std::size_t c) { updates[c] = local_update(clients[c], server, cfg, round, ref_grad); });

    RoundReport rep;
    rep.round = round;
    for (const auto& u : updates) {
        rep.grad_scores.push_back(u.grad_score);
        rep.recon_scores.push_back(u.recon_score);
    }
    const auto flags = detect_round(rep.grad_scores, rep.recon_scores, server.recon_base, cfg.sens, cfg.detector);

    std::vector<ParamVector> accepted_deltas;
    std::vector<std::size_t> accepted_sizes;
    for (std::size_t c = 0; c < n; ++c) {
        rep.verdicts.push_back({clients[c].id, round, rep.grad_scores[c], rep.recon_scores[c], flags[c].grad_flag,
                                flags[c].recon_flag, flags[c].flagged});
        if (!flags[c].flagged) {
            rep.accepted.push_back(clients[c].id);
            accepted_deltas.push_back(std::move(updates[c].delta));
            accepted_sizes.push_back(clients[c].data.size());
        }
    }
    if (accepted_deltas.empty()) {
        rep.empty_accepted = true;
    } else {
        server.global.params += aggregate(accepted_deltas, accepted_sizes);
    }
    evaluate_into(rep, server.global, eval);
    return rep;
}

/// Disjoint (autoencoder-training, calibration) split of D_ref. The
/// baseline must come from clean rows the autoencoder has not seen, or clean
/// clients score systematically above it.
inline std::pair<Dataset, Dataset> split_reference(const Dataset& d_ref, double calibration_fraction,
                                                   std::uint64_t seed) {
    if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
        throw InvalidSpecError("calibration_fraction must lie in (0,1)");
    std::vector<std::size_t> order(d_ref.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, {stream::calibration, 1}));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_cal = static_cast<std::size_t>(std::llround(calibration_fraction * static_cast<double>(order.size())));
    std::vector<std::size_t> cal(order.begin(), order.begin() + n_cal);
    std::vector<std::size_t> fit(order.begin() + n_cal, order.end());
    std::sort(cal.begin(), cal.end());
    std::sort(fit.begin(), fit.end());
    return {subset(d_ref, fit), subset(d_ref, cal)};
}

inline std::size_t calibration_chunk(const FederationData& data, const RoundConfig& cfg, std::size_t calibration_rows) {
    if (cfg.calibration_chunk > 0) return cfg.calibration_chunk;
    std::size_t total = 0;
    for (const auto& c : data.clients) total += c.data.size();
    const std::size_t mean = data.clients.empty() ? 1 : std::max<std::size_t>(1, total / data.clients.size());
    return std::clamp<std::size_t>(mean, 1, std::max<std::size_t>(1, calibration_rows / 2));
}

/// Initial global model, the detector autoencoder trained on part of D_ref,
/// and its reconstruction baseline from the rest.
inline ServerState init_server(const FederationData& data, const RoundConfig& cfg) {
    ServerState s;
    s.global = Model::glorot(cfg.arch.classifier, derive_seed(cfg.seed, {stream::init}));
    s.d_ref = data.d_ref;
    const auto [fit, cal] = split_reference(data.d_ref, cfg.calibration_fraction, cfg.seed);
    const auto ae_seed = derive_seed(cfg.seed, {stream::autoencoder});
    s.detector_ae = Autoencoder::make(data.d_ref.dim(), cfg.arch.ae_hidden, cfg.arch.ae_bottleneck, ae_seed);
    s.detector_ae = train_autoencoder(s.detector_ae, fit.features, cfg.ae_lr, cfg.ae_bs, cfg.ae_epochs,
                                      derive_seed(ae_seed, {1}));
    s.recon_base = calibrate_recon_baseline(s.detector_ae, cal, calibration_chunk(data, cfg, cal.size()), cfg.seed);
    return s;
}

struct FladResult {
    Model final_model;
    std::vector<RoundReport> reports;
    ReconBaseline recon_base;
};

/// R rounds of flad_round from a freshly initialised server.
inline FladResult run_flad(const FederationData& data, const RoundConfig& cfg) {
    cfg.validate();
    if (data.clients.size() != cfg.N)
        throw InvalidSpecError("federation.N is " + std::to_string(cfg.N) + " but " +
                               std::to_string(data.clients.size()) + " clients were supplied");
    for (const auto& c : data.clients)
        if (c.data.empty()) throw EmptyDataError("client " + std::to_string(c.id) + " has no data");
    ServerState server = init_server(data, cfg);
    FladResult res;
    res.recon_base = server.recon_base;
    res.reports.reserve(cfg.R);
    for (std::size_t r = 0; r < cfg.R; ++r) res.reports.push_back(flad_round(server, data.clients, cfg, r, data.eval));
    res.final_model = std::move(server.global);
    return res;
}

}  // namespace flad
