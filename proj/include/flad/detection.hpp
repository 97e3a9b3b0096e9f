#pragma once

// Client-level anomaly scoring: the gradient-deviation channel, the
// autoencoder reconstruction channel, their combination, and a PCA
// residual baseline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "flad/dataset.hpp"
#include "flad/error.hpp"
#include "flad/nn.hpp"
#include "flad/random.hpp"
#include "flad/tensor.hpp"

namespace flad {

struct GradientStats {
    double mu = 0.0;
    double sigma = 0.0;
};

/// Sensitivity factors for the gradient (alpha) and reconstruction (beta)
/// channels. An infinite factor disables its channel.
struct Sensitivity {
    double alpha = 2.0;
    double beta = 2.0;

    static constexpr double off = std::numeric_limits<double>::infinity();

    static Sensitivity uniform(double sf) { return {sf, sf}; }
    static Sensitivity disabled() { return {off, off}; }
    bool is_disabled() const { return std::isinf(alpha) && std::isinf(beta); }
};

struct ReconBaseline {
    double mu_r = 0.0;
    double sigma_r = 0.0;
};

enum class Combine { either, both };  // "or" / "and"
enum class AeMode { server_ref, per_client };
enum class GradScoreKind { deviation, raw_norm };

struct DetectorOptions {
    Combine combine = Combine::either;
    AeMode ae_mode = AeMode::server_ref;
    GradScoreKind grad_score = GradScoreKind::deviation;
    bool robust_stats = false;
};

struct DetectFlags {
    bool grad_flag = false;
    bool recon_flag = false;
    bool flagged = false;
};

struct AnomalyVerdict {
    std::size_t client_id = 0;
    std::size_t round = 0;
    double grad_score = 0.0;
    double recon_score = 0.0;
    bool grad_flag = false;
    bool recon_flag = false;
    bool flagged = false;
};

// ---------------------------------------------------------------------------
// Gradient channel

/// ||grad_client - grad_ref||.
inline double grad_deviation(const ParamVector& grad_client, const ParamVector& grad_ref) {
    if (grad_client.size() != grad_ref.size()) throw ShapeError("grad_deviation: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < grad_client.size(); ++i) {
        const double d = grad_client[i] - grad_ref[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Mean and population standard deviation.
inline GradientStats population_stats(std::span<const double> scores) {
    if (scores.empty()) throw EmptyDataError("population_stats: empty score list");
    const double n = static_cast<double>(scores.size());
    const double mu = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double ss = 0.0;
    for (double s : scores) ss += (s - mu) * (s - mu);
    return {mu, std::sqrt(ss / n)};
}

/// score > mu + alpha * sigma (strict; ties are benign).
inline bool flag_gradient_anomaly(double score, const GradientStats& stats, double alpha) {
    if (std::isinf(alpha)) return false;
    if (!(alpha >= 0.0)) throw InvalidSpecError("alpha must be non-negative");
    return score > stats.mu + alpha * stats.sigma;
}

/// Signed distance from the mean in units of sigma; +/-inf (or 0 on a tie)
/// when sigma is zero. `z > alpha` iff flag_gradient_anomaly.
inline double standard_score(double score, double mu, double sigma) {
    if (sigma > 0.0) return (score - mu) / sigma;
    if (score > mu) return std::numeric_limits<double>::infinity();
    if (score < mu) return -std::numeric_limits<double>::infinity();
    return 0.0;
}

// ---------------------------------------------------------------------------
// Reconstruction channel

/// Mean squared reconstruction error of the rows of `features`.
inline double recon_error(const Autoencoder& ae, const Tensor& features) {
    if (features.rows() == 0) throw EmptyDataError("recon_error: empty data");
    return mse_loss(features, reconstruct(ae, features));
}

inline double recon_error(const Autoencoder& ae, const Dataset& data) { return recon_error(ae, data.features); }

/// Baseline from a list of clean chunk errors.
inline ReconBaseline baseline_from_errors(std::span<const double> errors) {
    const auto st = population_stats(errors);
    return {st.mu, st.sigma};
}

/// Splits `clean` into disjoint shuffled chunks of `chunk` rows (a short
/// remainder is dropped) and summarises their reconstruction errors.
inline ReconBaseline calibrate_recon_baseline(const Autoencoder& ae, const Dataset& clean, std::size_t chunk,
                                              std::uint64_t seed) {
    if (chunk == 0) throw InvalidSpecError("calibration chunk must be positive");
    if (clean.size() < 2 * chunk)
        throw EmptyDataError("insufficient calibration data: need " + std::to_string(2 * chunk) + " rows, have " +
                             std::to_string(clean.size()));
    std::vector<std::size_t> order(clean.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {stream::calibration}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> errors;
    for (std::size_t start = 0; start + chunk <= order.size(); start += chunk) {
        const std::span<const std::size_t> rows(order.data() + start, chunk);
        errors.push_back(recon_error(ae, gather_rows(clean.features, rows)));
    }
    return baseline_from_errors(errors);
}

/// err > mu_r + beta * sigma_r (strict).
inline bool flag_recon_anomaly(double err, const ReconBaseline& base, double beta) {
    if (std::isinf(beta)) return false;
    if (!(beta >= 0.0)) throw InvalidSpecError("beta must be non-negative");
    return err > base.mu_r + beta * base.sigma_r;
}

// ---------------------------------------------------------------------------
// Combination

inline bool combine_flags(bool grad_flag, bool recon_flag, Combine rule) {
    return rule == Combine::either ? (grad_flag || recon_flag) : (grad_flag && recon_flag);
}

/// Verdict for one client given every client's gradient score this round.
inline DetectFlags detect_anom(double grad_score, std::span<const double> all_grad_scores, double recon_score,
                               const ReconBaseline& base, const Sensitivity& sens,
                               Combine rule = Combine::either) {
    DetectFlags f;
    f.grad_flag = flag_gradient_anomaly(grad_score, population_stats(all_grad_scores), sens.alpha);
    f.recon_flag = flag_recon_anomaly(recon_score, base, sens.beta);
    f.flagged = combine_flags(f.grad_flag, f.recon_flag, rule);
    return f;
}

/// Verdicts for a whole round. With robust_stats, mu and sigma are
/// re-estimated once over the clients not flagged by the first pass.
inline std::vector<DetectFlags> detect_round(std::span<const double> grad_scores, std::span<const double> recon_scores,
                                             const ReconBaseline& base, const Sensitivity& sens,
                                             const DetectorOptions& opt) {
    if (grad_scores.size() != recon_scores.size()) throw ShapeError("detect_round: score lists differ in length");
    std::vector<DetectFlags> out;
    out.reserve(grad_scores.size());
    for (std::size_t c = 0; c < grad_scores.size(); ++c)
        out.push_back(detect_anom(grad_scores[c], grad_scores, recon_scores[c], base, sens, opt.combine));
    if (!opt.robust_stats) return out;

    std::vector<double> kept;
    for (std::size_t c = 0; c < grad_scores.size(); ++c)
        if (!out[c].grad_flag) kept.push_back(grad_scores[c]);
    if (kept.empty() || kept.size() == grad_scores.size()) return out;
    const auto stats = population_stats(kept);
    for (std::size_t c = 0; c < grad_scores.size(); ++c) {
        out[c].grad_flag = flag_gradient_anomaly(grad_scores[c], stats, sens.alpha);
        out[c].flagged = combine_flags(out[c].grad_flag, out[c].recon_flag, opt.combine);
    }
    return out;
}

// ---------------------------------------------------------------------------
// PCA residual baseline

struct PcaModel {
    std::vector<double> mean;                     // d_in
    std::vector<std::vector<double>> components;  // r rows of length d_in, orthonormal
    std::vector<double> explained_variance;       // eigenvalue per component
    bool rank_deficient = false;                  // fewer than the requested components were found

    std::size_t rank() const noexcept { return components.size(); }
    std::size_t dim() const noexcept { return mean.size(); }
};

namespace detail {

inline void orthogonalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
    for (const auto& b : basis) {
        const double p = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
    }
}

inline double normalize(std::vector<double>& v) {
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (n > 0.0)
        for (double& x : v) x /= n;
    return n;
}

}  // namespace detail

/// Top-r principal directions of the sample covariance by power iteration
/// with deflation (tolerance 1e-9, at most 1000 iterations per component).
inline PcaModel pca_fit(const Dataset& clean, std::size_t r, std::uint64_t seed = 0) {
    const std::size_t n = clean.size();
    const std::size_t d = clean.dim();
    if (n < 2) throw EmptyDataError("pca_fit: need at least two samples");
    if (r == 0 || r > std::min(n, d)) throw InvalidSpecError("pca_fit: rank must lie in [1, min(n, d_in)]");

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += clean.features(i, j);
    for (double& m : model.mean) m /= static_cast<double>(n);

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = clean.features.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = row[a] - model.mean[a];
            for (std::size_t b = a; b < d; ++b) cov[a * d + b] += xa * (row[b] - model.mean[b]);
        }
    }
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            cov[a * d + b] /= static_cast<double>(n - 1);
            cov[b * d + a] = cov[a * d + b];
        }
        trace += cov[a * d + a];
    }

    constexpr double tol = 1e-9;
    constexpr int max_iter = 1000;
    const double floor = 1e-12 * std::max(trace, 1e-300);
    Rng rng(derive_seed(seed, {stream::pca}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> next(d);
    for (std::size_t comp = 0; comp < r; ++comp) {
        std::vector<double> v(d);
        for (double& x : v) x = normal(rng);
        detail::orthogonalize(v, model.components);
        if (detail::normalize(v) == 0.0) {
            model.rank_deficient = true;
            break;
        }
        for (int it = 0; it < max_iter; ++it) {
            for (std::size_t a = 0; a < d; ++a) {
                double s = 0.0;
                for (std::size_t b = 0; b < d; ++b) s += cov[a * d + b] * v[b];
                next[a] = s;
            }
            detail::orthogonalize(next, model.components);
            if (detail::normalize(next) == 0.0) break;
            double diff = 0.0;
            for (std::size_t a = 0; a < d; ++a) diff += (next[a] - v[a]) * (next[a] - v[a]);
            v = next;
            if (std::sqrt(diff) < tol) break;
        }
        double lambda = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < d; ++b) s += cov[a * d + b] * v[b];
            lambda += v[a] * s;
        }
        if (lambda <= floor) {
            model.rank_deficient = true;
            break;
        }
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] -= lambda * v[a] * v[b];
        model.components.push_back(v);
        model.explained_variance.push_back(lambda);
    }
    return model;
}

/// Mean over rows of the squared norm of the residual after projecting the
/// centered row onto the retained components.
inline double pca_score(const PcaModel& model, const Tensor& features) {
    if (features.cols() != model.dim()) throw ShapeError("pca_score: feature dimension mismatch");
    if (features.rows() == 0) throw EmptyDataError("pca_score: empty data");
    const std::size_t d = model.dim();
    std::vector<double> x(d);
    double total = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto row = features.row(i);
        for (std::size_t j = 0; j < d; ++j) x[j] = row[j] - model.mean[j];
        for (const auto& c : model.components) {
            const double p = std::inner_product(x.begin(), x.end(), c.begin(), 0.0);
            for (std::size_t j = 0; j < d; ++j) x[j] -= p * c[j];
        }
        total += std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
    }
    return total / static_cast<double>(features.rows());
}

inline double pca_score(const PcaModel& model, const Dataset& data) { return pca_score(model, data.features); }

}  // namespace flad
