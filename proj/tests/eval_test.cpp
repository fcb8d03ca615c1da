#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eegdann/eval.hpp"

using namespace eegdann;
using eval::ConfusionCounts;

namespace {

// Scores on a coarse grid so ties are common.
void random_case(std::mt19937_64& rng, std::vector<double>& probs, std::vector<int>& labels) {
    const std::size_t n = 2 + rng() % 19;
    probs.resize(n);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        probs[i] = static_cast<double>(1 + rng() % 8) / 10.0;
        labels[i] = static_cast<int>(rng() % 2);
    }
    labels[rng() % n] = 1;
    std::size_t j = rng() % n;
    while (labels[j] == 1 && std::count(labels.begin(), labels.end(), 0) == 0) {
        labels[j] = 0;
        j = (j + 1) % n;
    }
    if (std::count(labels.begin(), labels.end(), 1) == 0) {
        labels[(j + 1) % n] = 1;
    }
}

double pair_count_auc(const std::vector<double>& p, const std::vector<int>& y) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1.0;
                wins += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
            }
        }
    }
    return wins / pairs;
}

double f1_at(const std::vector<double>& p, const std::vector<int>& y, double tau) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool hit = p[i] >= tau;
        tp += hit && y[i] == 1;
        fp += hit && y[i] == 0;
        fn += !hit && y[i] == 1;
    }
    return 2 * tp / (2 * tp + fp + fn);
}

}  // namespace

TEST(Detect, InclusiveThreshold) {
    const std::vector<double> p{0.7, 0.5, 0.49};
    EXPECT_EQ(eval::detect(p, 0.5), (std::vector<int>{1, 1, 0}));
}

TEST(Detect, MonotoneInThreshold) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(100);
    for (auto& v : p) {
        v = u(rng);
    }
    for (int trial = 0; trial < 50; ++trial) {
        double lo = u(rng), hi = u(rng);
        if (lo > hi) {
            std::swap(lo, hi);
        }
        const auto a = eval::detect(p, lo);
        const auto b = eval::detect(p, hi);
        for (std::size_t i = 0; i < p.size(); ++i) {
            ASSERT_LE(b[i], a[i]);
        }
    }
}

TEST(SelectThreshold, SeparableExample) {
    const std::vector<double> p{0.1, 0.2, 0.8, 0.9};
    const std::vector<int> y{0, 0, 1, 1};
    const auto t = eval::select_threshold(p, y);
    EXPECT_EQ(t.tau, 0.8);
    EXPECT_EQ(t.f1, 1.0);
}

TEST(SelectThreshold, LowerThresholdWinsOnF1) {
    const std::vector<double> p{0.9, 0.8, 0.7};
    const std::vector<int> y{1, 0, 1};
    const auto t = eval::select_threshold(p, y);
    EXPECT_EQ(t.tau, 0.7);
    EXPECT_NEAR(t.f1, 0.8, 1e-12);
}

TEST(SelectThreshold, ConstantScores) {
    const std::vector<double> p{0.3, 0.3, 0.3};
    const std::vector<int> y{1, 0, 1};
    EXPECT_EQ(eval::select_threshold(p, y).tau, 0.3);
}

TEST(SelectThreshold, NoPositivesThrows) {
    const std::vector<double> p{0.3, 0.4};
    const std::vector<int> y{0, 0};
    EXPECT_THROW(eval::select_threshold(p, y), eval::NoPositivesError);
}

TEST(SelectThreshold, MatchesExhaustiveSweep) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p;
        std::vector<int> y;
        random_case(rng, p, y);
        double best_tau = 2.0;
        double best_f1 = -1.0;
        for (double tau : p) {
            const double f = f1_at(p, y, tau);
            if (f > best_f1 || (f == best_f1 && tau < best_tau)) {
                best_f1 = f;
                best_tau = tau;
            }
        }
        const auto t = eval::select_threshold(p, y);
        ASSERT_EQ(t.tau, best_tau) << "trial " << trial;
        ASSERT_EQ(t.f1, best_f1);
    }
}

TEST(ConfusionMetrics, HandFormula) {
    const auto m = eval::confusion_metrics({2, 3, 1, 1});
    EXPECT_NEAR(m.mcc, 5.0 / 12.0, 1e-12);
    EXPECT_NEAR(m.sensitivity, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.specificity, 0.75, 1e-15);
}

TEST(ConfusionMetrics, PerfectAndDegenerate) {
    const auto perfect = eval::confusion_metrics({4, 6, 0, 0});
    EXPECT_EQ(perfect.sensitivity, 1.0);
    EXPECT_EQ(perfect.specificity, 1.0);
    EXPECT_EQ(perfect.mcc, 1.0);
    const auto none = eval::confusion_metrics({0, 6, 0, 4});
    EXPECT_EQ(none.sensitivity, 0.0);
    EXPECT_EQ(none.mcc, 0.0);
}

TEST(ConfusionMetrics, MccSymmetricUnderFlip) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> pred(30), y(30), npred(30), ny(30);
        for (std::size_t i = 0; i < 30; ++i) {
            pred[i] = static_cast<int>(rng() % 2);
            y[i] = static_cast<int>(rng() % 2);
            npred[i] = 1 - pred[i];
            ny[i] = 1 - y[i];
        }
        const double a = eval::confusion_metrics(eval::confusion(pred, y)).mcc;
        const double b = eval::confusion_metrics(eval::confusion(npred, ny)).mcc;
        ASSERT_NEAR(a, b, 1e-12);
    }
}

TEST(AucRoc, Examples) {
    EXPECT_EQ(eval::auc_roc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}), 1.0);
    EXPECT_EQ(eval::auc_roc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{0, 1, 1}), 0.5);
    EXPECT_EQ(eval::auc_roc(std::vector<double>{0.9, 0.4, 0.6}, std::vector<int>{1, 1, 0}), 0.5);
    EXPECT_THROW(eval::auc_roc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), eval::SingleClassError);
}

TEST(AucRoc, MatchesPairCounting) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p;
        std::vector<int> y;
        random_case(rng, p, y);
        ASSERT_EQ(eval::auc_roc(p, y), pair_count_auc(p, y)) << "trial " << trial;
    }
}

TEST(AucPr, Examples) {
    EXPECT_EQ(eval::auc_pr(std::vector<double>{0.9, 0.8, 0.2}, std::vector<int>{1, 1, 0}), 1.0);
    EXPECT_NEAR(eval::auc_pr(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}), 0.25, 1e-15);
    EXPECT_NEAR(eval::auc_pr(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{1, 0, 1}), 5.0 / 6.0, 1e-15);
    EXPECT_THROW(eval::auc_pr(std::vector<double>{0.1}, std::vector<int>{0}), eval::NoPositivesError);
}

TEST(Curves, EndpointsAndMonotoneRoc) {
    const std::vector<double> p{0.9, 0.3, 0.6, 0.6, 0.1};
    const std::vector<int> y{1, 0, 1, 0, 0};
    const auto roc = eval::roc_curve(p, y);
    EXPECT_EQ(roc.front().x, 0.0);
    EXPECT_EQ(roc.back().x, 1.0);
    EXPECT_EQ(roc.back().y, 1.0);
    for (std::size_t i = 1; i < roc.size(); ++i) {
        EXPECT_GE(roc[i].x, roc[i - 1].x);
        EXPECT_GE(roc[i].y, roc[i - 1].y);
    }
    const auto pr = eval::pr_curve(p, y);
    EXPECT_EQ(pr.back().x, 1.0);
    EXPECT_NEAR(pr.back().y, 0.4, 1e-15);
}

TEST(Arms, NamesRoundTrip) {
    for (auto a : eval::all_arms()) {
        EXPECT_EQ(eval::parse_arm(eval::arm_name(a)), a);
    }
    EXPECT_FALSE(eval::parse_arm("nope").has_value());
}

TEST(Report, AggregateMatchesRows) {
    eval::EvalReport report;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const char* pid : {"P01", "P02", "P03", "P04"}) {
        for (std::uint64_t s : {1u, 2u, 3u}) {
            for (auto arm : eval::all_arms()) {
                eval::FoldResult r;
                r.patient_id = pid;
                r.seed = s;
                r.arm = arm;
                r.metrics = {u(rng), u(rng), u(rng)};
                r.auc_roc = u(rng);
                r.auc_pr = u(rng);
                report.rows.push_back(r);
            }
        }
    }
    const auto agg = report.aggregate();
    ASSERT_EQ(agg.size(), 4u);
    for (const auto& a : agg) {
        EXPECT_EQ(a.patients, 4u);
        for (std::size_t m = 0; m < 5; ++m) {
            std::vector<double> per_patient;
            for (const char* pid : {"P01", "P02", "P03", "P04"}) {
                double sum = 0.0;
                for (const auto& r : report.rows) {
                    if (r.arm == a.arm && r.patient_id == pid) {
                        sum += eval::metric_value(r, m);
                    }
                }
                per_patient.push_back(sum / 3.0);
            }
            double mean = 0.0;
            for (double v : per_patient) {
                mean += v / 4.0;
            }
            double var = 0.0;
            for (double v : per_patient) {
                var += (v - mean) * (v - mean) / 3.0;
            }
            EXPECT_NEAR(a.mean[m], mean, 1e-12);
            EXPECT_NEAR(a.sd[m], std::sqrt(var), 1e-12);
        }
    }
    const std::string csv = report.aggregate_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "arm,patients,Sensitivity,Sensitivity_sd,Specificity,Specificity_sd,MCC,MCC_sd,AUC-ROC,AUC-ROC_sd,"
              "AUC-PR,AUC-PR_sd");
}

namespace {

pre::WindowedSequence toy(const std::string& id, double gain, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    pre::WindowedSequence s;
    s.patient_id = id;
    s.channels = 2;
    s.window = 16;
    for (std::size_t t = 0; t < 12; ++t) {
        const int y = t >= 4 && t < 7 ? 1 : 0;
        s.labels.push_back(y);
        for (std::size_t i = 0; i < 32; ++i) {
            s.data.push_back(gain * noise(rng) + (y ? 2.0 * std::sin(0.8 * i) : 0.0));
        }
    }
    return s;
}

eval::LopoConfig tiny_config() {
    eval::LopoConfig cfg;
    cfg.arch.in_channels = 2;
    cfg.arch.window = 16;
    cfg.arch.block_channels = {3, 4};
    cfg.arch.label_hidden = 3;
    cfg.arch.domain_hidden = 5;
    cfg.arch.lstm_hidden = 3;
    cfg.stage1.epochs = 2;
    cfg.stage1.batch_size = 8;
    cfg.stage2.epochs = 2;
    cfg.seeds = {1, 2};
    return cfg;
}

}  // namespace

TEST(Lopo, HeldOutPatientNeverTrains) {
    std::vector<pre::WindowedSequence> cohort{toy("A", 1.0, 1), toy("B", 1.5, 2), toy("C", 2.0, 3)};
    auto cfg = tiny_config();
    const auto outs = eval::run_fold(cohort, 1, cfg, 1, cfg.arms);
    ASSERT_EQ(outs.size(), 4u);
    for (const auto& o : outs) {
        EXPECT_EQ(o.result.patient_id, "B");
        EXPECT_EQ(o.test_labels, cohort[1].labels);
    }
    // Corrupting the held-out patient's windows changes nothing but its own scores.
    auto altered = cohort;
    for (auto& v : altered[1].data) {
        v *= -3.0;
    }
    const auto again = eval::run_fold(altered, 1, cfg, 1, cfg.arms);
    for (std::size_t i = 0; i < outs.size(); ++i) {
        EXPECT_EQ(outs[i].result.tau, again[i].result.tau);
    }
}

TEST(Lopo, GridCountAndSkippedPatient) {
    std::vector<pre::WindowedSequence> cohort{toy("A", 1.0, 1), toy("B", 1.5, 2), toy("C", 2.0, 3),
                                              toy("D", 1.2, 4)};
    std::fill(cohort[3].labels.begin(), cohort[3].labels.end(), 0);
    auto cfg = tiny_config();
    cfg.workers = 2;
    std::size_t units = 0;
    const auto report = eval::lopo(cohort, cfg, {}, [&](const auto&) { ++units; });
    EXPECT_EQ(units, 6u);
    EXPECT_EQ(report.rows.size(), 24u);
    ASSERT_EQ(report.warnings.size(), 1u);
    EXPECT_NE(report.warnings[0].find("D"), std::string::npos);
    EXPECT_EQ(report.rows.front().patient_id, "A");

    cfg.workers = 1;
    const auto serial = eval::lopo(cohort, cfg);
    EXPECT_EQ(serial.rows_csv(), report.rows_csv());

    // Completed units are taken over verbatim.
    std::size_t rerun = 0;
    const auto resumed = eval::lopo(cohort, cfg, report.rows, [&](const auto&) { ++rerun; });
    EXPECT_EQ(rerun, 0u);
    EXPECT_EQ(resumed.rows_csv(), report.rows_csv());
}

TEST(Lopo, TooFewPatients) {
    std::vector<pre::WindowedSequence> cohort{toy("A", 1.0, 1), toy("B", 1.5, 2)};
    EXPECT_THROW(eval::lopo(cohort, tiny_config()), DataError);
}
