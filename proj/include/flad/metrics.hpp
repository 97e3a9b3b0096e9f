#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "flad/dataset.hpp"
#include "flad/detection.hpp"
#include "flad/error.hpp"
#include "flad/nn.hpp"

namespace flad {

/// Fraction of rows whose argmax output equals the label; ties go to the
/// lowest class index.
inline double accuracy(const Model& model, const Dataset& data) {
    if (data.empty()) throw EmptyDataError("accuracy: empty data");
    const Tensor z = logits(model, data.features);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const auto row = z.row(r);
        const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (pred == data.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    double detection_rate() const noexcept {
        return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    double false_positive_rate() const noexcept {
        return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn);
    }

    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
};

inline ConfusionCounts confusion(const std::vector<bool>& flagged, const std::vector<bool>& malicious) {
    if (flagged.size() != malicious.size()) throw ShapeError("confusion: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < flagged.size(); ++i) {
        if (malicious[i]) (flagged[i] ? c.tp : c.fn)++;
        else (flagged[i] ? c.fp : c.tn)++;
    }
    return c;
}

/// tp / (tp + fn) over aligned verdict/ground-truth lists; 1.0 when there is
/// nothing malicious to find.
inline double detection_rate(const std::vector<bool>& flagged, const std::vector<bool>& malicious) {
    return confusion(flagged, malicious).detection_rate();
}

inline double detection_rate(std::span<const AnomalyVerdict> verdicts, const std::vector<bool>& malicious) {
    std::vector<bool> flags;
    flags.reserve(verdicts.size());
    for (const auto& v : verdicts) flags.push_back(v.flagged);
    return detection_rate(flags, malicious);
}

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> count_classes(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc: scores and labels differ in length");
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedRocError("ROC undefined: labels contain a single class");
    for (double s : scores)
        if (std::isnan(s)) throw NumericError("roc: NaN score");
    return {pos, neg};
}

}  // namespace detail

/// Threshold sweep over distinct scores in descending order; tied scores
/// move together, producing one diagonal step. AUC by the trapezoidal rule.
inline RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& labels) {
    const auto [pos, neg] = detail::count_classes(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double area = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        std::size_t j = i;
        for (; j < order.size() && scores[order[j]] == s; ++j) (labels[order[j]] ? tp : fp)++;
        const RocPoint p{static_cast<double>(fp) / static_cast<double>(neg),
                         static_cast<double>(tp) / static_cast<double>(pos)};
        const RocPoint& q = roc.points.back();
        area += (p.fpr - q.fpr) * (p.tpr + q.tpr) / 2.0;
        roc.points.push_back(p);
        i = j;
    }
    roc.auc = area;
    return roc;
}

/// (#correctly ordered positive/negative pairs + 0.5 * #ties) / (#pos * #neg).
inline double auc_pair_oracle(std::span<const double> scores, const std::vector<bool>& labels) {
    const auto [pos, neg] = detail::count_classes(scores, labels);
    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Centered moving average; the window shrinks at the edges.
inline std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
    if (window == 0) throw InvalidSpecError("moving_average: window must be >= 1");
    const std::size_t half_lo = (window - 1) / 2;
    const std::size_t half_hi = window / 2;
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::size_t lo = i >= half_lo ? i - half_lo : 0;
        const std::size_t hi = std::min(series.size() - 1, i + half_hi);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += series[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

}  // namespace flad
