#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "flad/metrics.hpp"
#include "flad/summary.hpp"

using namespace flad;

TEST(Accuracy, ArgmaxWithLowestIndexTies) {
    // Zero model: every logit ties, so every row predicts class 0.
    const Model zero = Model::zeros({{2, 3}, Activation::relu, OutputHead::softmax_logits});
    const Dataset ds{Tensor({4, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}), {0, 0, 1, 2}, 3};
    EXPECT_DOUBLE_EQ(accuracy(zero, ds), 0.5);
    Model bias = zero;
    bias.params[2 * 3 + 2] = 1.0;  // bias of class 2
    EXPECT_DOUBLE_EQ(accuracy(bias, ds), 0.25);
}

TEST(Confusion, CountsAndRates) {
    const std::vector<bool> flagged{true, false, true, false, true};
    const std::vector<bool> truth{true, true, false, false, false};
    const auto c = confusion(flagged, truth);
    EXPECT_EQ(c.tp, 1u);
    EXPECT_EQ(c.fn, 1u);
    EXPECT_EQ(c.fp, 2u);
    EXPECT_EQ(c.tn, 1u);
    EXPECT_DOUBLE_EQ(c.detection_rate(), 0.5);
    EXPECT_DOUBLE_EQ(c.false_positive_rate(), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(detection_rate(std::vector<bool>{false}, std::vector<bool>{false}), 1.0);
    EXPECT_THROW(confusion(flagged, std::vector<bool>{true}), ShapeError);
}

TEST(Confusion, MarginalsMatchGroundTruth) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<bool> f(1 + rng() % 40), t(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] = rng() & 1;
            t[i] = rng() & 1;
        }
        const auto c = confusion(f, t);
        const auto pos = static_cast<std::size_t>(std::count(t.begin(), t.end(), true));
        EXPECT_EQ(c.tp + c.fn, pos);
        EXPECT_EQ(c.fp + c.tn, t.size() - pos);
    }
}

TEST(Roc, KnownCurves) {
    const std::vector<bool> labels{true, true, false, false};
    EXPECT_DOUBLE_EQ(roc_curve(std::vector<double>{0.9, 0.8, 0.1, 0.4}, labels).auc, 1.0);
    const auto r = roc_curve(std::vector<double>{0.8, 0.3, 0.5, 0.1}, labels);
    EXPECT_DOUBLE_EQ(r.auc, 0.75);
    EXPECT_EQ(r.points.front().fpr, 0.0);
    EXPECT_EQ(r.points.front().tpr, 0.0);
    EXPECT_EQ(r.points.back().fpr, 1.0);
    EXPECT_EQ(r.points.back().tpr, 1.0);
    EXPECT_DOUBLE_EQ(roc_curve(std::vector<double>{1, 1, 1, 1}, labels).auc, 0.5);
    EXPECT_THROW(roc_curve(std::vector<double>{1, 2}, std::vector<bool>{true, true}), UndefinedRocError);
    EXPECT_THROW(roc_curve(std::vector<double>{NAN, 2}, std::vector<bool>{true, false}), NumericError);
}

TEST(Roc, MatchesPairOracleWithTiesMonotoneAndInvariant) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        const std::size_t levels = 1 + rng() % 6;  // few levels means heavy ties
        std::vector<double> s(n);
        std::vector<bool> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial % 2 ? static_cast<double>(rng() % levels) : std::ldexp(static_cast<double>(rng() % 1000), -7);
            y[i] = rng() % 3 == 0;
        }
        y[0] = true;
        y[1] = false;
        const auto roc = roc_curve(s, y);
        EXPECT_NEAR(roc.auc, auc_pair_oracle(s, y), 1e-9);
        EXPECT_GE(roc.auc, 0.0);
        EXPECT_LE(roc.auc, 1.0);
        for (std::size_t i = 1; i < roc.points.size(); ++i) {
            EXPECT_GE(roc.points[i].fpr, roc.points[i - 1].fpr);
            EXPECT_GE(roc.points[i].tpr, roc.points[i - 1].tpr);
        }
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        EXPECT_NEAR(roc_curve(t, y).auc, roc.auc, 1e-12);
        std::vector<bool> inv(n);
        for (std::size_t i = 0; i < n; ++i) inv[i] = !y[i];
        EXPECT_NEAR(roc_curve(s, inv).auc, 1.0 - roc.auc, 1e-12);
    }
}

TEST(MovingAverage, WindowsAndEdges) {
    const std::vector<double> s{1, 2, 3, 4, 5};
    EXPECT_EQ(moving_average(s, 1), s);
    const auto m3 = moving_average(s, 3);
    EXPECT_EQ(m3, (std::vector<double>{1.5, 2, 3, 4, 4.5}));
    const auto m5 = moving_average(std::vector<double>{2, 2, 2, 2}, 5);
    for (double v : m5) EXPECT_DOUBLE_EQ(v, 2.0);
    EXPECT_THROW(moving_average(s, 0), InvalidSpecError);
}

namespace {

RoundReport report(std::size_t round, std::vector<double> grads, std::vector<double> recons, std::vector<bool> flagged) {
    RoundReport r;
    r.round = round;
    r.grad_scores = std::move(grads);
    r.recon_scores = std::move(recons);
    for (std::size_t c = 0; c < flagged.size(); ++c) {
        r.verdicts.push_back({c, round, r.grad_scores[c], r.recon_scores[c], false, false, flagged[c]});
        if (!flagged[c]) r.accepted.push_back(c);
    }
    r.global_accuracy = 0.5 + 0.1 * static_cast<double>(round);
    return r;
}

}  // namespace

TEST(ClientRoundScores, ChannelZScoresAndCombination) {
    const std::vector<RoundReport> reps{report(0, {1, 1, 4}, {0.1, 0.3, 0.1}, {false, false, true})};
    const ReconBaseline base{0.1, 0.1};
    const auto g = client_round_scores(reps, base, RocScore::grad);
    const auto r = client_round_scores(reps, base, RocScore::recon);
    const auto c = client_round_scores(reps, base, RocScore::combined);
    const double sd = std::sqrt(2.0);
    EXPECT_NEAR(g[2], 2.0 / sd, 1e-12);
    EXPECT_NEAR(r[1], 2.0, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(c[i], std::max(g[i], r[i]));
    const auto both = client_round_scores(reps, base, RocScore::combined, Combine::both);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(both[i], std::min(g[i], r[i]));
}

TEST(Summary, CountsAndAuc) {
    FladResult res;
    res.recon_base = {0.1, 0.1};
    res.reports = {report(0, {1, 1, 4}, {0.1, 0.1, 0.1}, {false, false, true}),
                   report(1, {1, 2, 1}, {0.1, 0.1, 0.1}, {false, true, false})};
    const auto s = summarize(res, {false, false, true});
    EXPECT_EQ(s.total_anomalies, 2u);
    EXPECT_EQ(s.rounds_with_anomalies, 2u);
    EXPECT_EQ(s.anomalies_per_round, (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(s.counts.tp, 1u);
    EXPECT_EQ(s.counts.fp, 1u);
    EXPECT_DOUBLE_EQ(s.final_accuracy, 0.6);
    ASSERT_TRUE(s.detection_auc.has_value());
    EXPECT_NEAR(*s.detection_auc, auc_pair_oracle(client_round_scores(res.reports, res.recon_base, RocScore::combined),
                                                  client_round_labels(res.reports, {false, false, true})),
                1e-12);
    EXPECT_FALSE(summarize(res, {false, false, false}).detection_auc.has_value());
}

TEST(Sweep, AveragesPerGridPointInOrder) {
    std::vector<std::pair<double, std::uint64_t>> calls;
    const std::vector<double> grid{0.5, 2.0};
    const std::vector<std::uint64_t> seeds{3, 4};
    const auto out = sweep_sensitivity(
        [&](double sf, std::uint64_t seed) {
            calls.emplace_back(sf, seed);
            RunSummary s;
            s.final_accuracy = sf + static_cast<double>(seed);
            s.total_anomalies = seed;
            return s;
        },
        grid, seeds);
    EXPECT_EQ(calls, (std::vector<std::pair<double, std::uint64_t>>{{0.5, 3}, {0.5, 4}, {2.0, 3}, {2.0, 4}}));
    ASSERT_EQ(out.rows.size(), 2u);
    EXPECT_DOUBLE_EQ(out.rows[1].final_accuracy, 5.5);
    EXPECT_DOUBLE_EQ(out.rows[0].total_anomalies, 3.5);
    EXPECT_EQ(out.raw.size(), 4u);
    EXPECT_EQ(out.raw[3].seed, 4u);
    EXPECT_THROW(sweep_sensitivity([](double, std::uint64_t) { return RunSummary{}; }, std::vector<double>{}, seeds),
                 InvalidSpecError);
}
