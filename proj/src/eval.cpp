#include "eegdann/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace eegdann::eval {

namespace {

void check_sizes(std::span<const double> probs, std::span<const int> labels, const char* what) {
    require(probs.size() == labels.size(), std::string(what) + ": " + std::to_string(probs.size()) +
                                               " scores for " + std::to_string(labels.size()) + " labels");
}

// Groups of tied scores in descending order, with the positive and negative
// count of each group.
struct ScoreGroup {
    double score;
    std::size_t pos;
    std::size_t neg;
};

std::vector<ScoreGroup> descending_groups(std::span<const double> probs, std::span<const int> labels) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    std::vector<ScoreGroup> groups;
    for (std::size_t i : order) {
        if (groups.empty() || groups.back().score != probs[i]) {
            groups.push_back({probs[i], 0, 0});
        }
        (labels[i] == 1 ? groups.back().pos : groups.back().neg) += 1;
    }
    return groups;
}

std::size_t count_positive(std::span<const int> labels) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::vector<int> detect(std::span<const double> probs, double tau) {
    std::vector<int> out(probs.size());
    std::transform(probs.begin(), probs.end(), out.begin(), [tau](double p) { return p >= tau ? 1 : 0; });
    return out;
}

ThresholdChoice select_threshold(std::span<const double> probs, std::span<const int> labels) {
    check_sizes(probs, labels, "select_threshold");
    const std::size_t positives = count_positive(labels);
    if (positives == 0) {
        throw NoPositivesError("threshold selection needs at least one seizure window");
    }
    // F1 = 2TP / (2TP + FP + FN); compared as integer ratios.
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t best_num = 0;
    std::size_t best_den = 1;
    double best_tau = 0.0;
    bool have = false;
    for (const auto& g : descending_groups(probs, labels)) {
        tp += g.pos;
        fp += g.neg;
        const std::size_t num = 2 * tp;
        const std::size_t den = 2 * tp + fp + (positives - tp);
        // Descending sweep: >= moves ties toward the smaller threshold.
        if (!have || num * best_den >= best_num * den) {
            best_num = num;
            best_den = den;
            best_tau = g.score;
            have = true;
        }
    }
    return {best_tau, static_cast<double>(best_num) / static_cast<double>(best_den)};
}

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> labels) {
    require(predicted.size() == labels.size(), "confusion: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            (predicted[i] == 1 ? c.tp : c.fn) += 1;
        } else {
            (predicted[i] == 1 ? c.fp : c.tn) += 1;
        }
    }
    return c;
}

Metrics confusion_metrics(const ConfusionCounts& c) {
    const auto tp = static_cast<double>(c.tp);
    const auto tn = static_cast<double>(c.tn);
    const auto fp = static_cast<double>(c.fp);
    const auto fn = static_cast<double>(c.fn);
    Metrics m;
    m.sensitivity = c.tp + c.fn == 0 ? 0.0 : tp / (tp + fn);
    m.specificity = c.tn + c.fp == 0 ? 0.0 : tn / (tn + fp);
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    m.mcc = den == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(den);
    return m;
}

double auc_roc(std::span<const double> probs, std::span<const int> labels) {
    check_sizes(probs, labels, "auc_roc");
    const std::size_t p = count_positive(labels);
    const std::size_t n = labels.size() - p;
    if (p == 0 || n == 0) {
        throw SingleClassError("AUC-ROC needs both classes");
    }
    // Twice the trapezoid area in units of one positive-negative pair.
    std::size_t tp = 0;
    std::size_t area2 = 0;
    for (const auto& g : descending_groups(probs, labels)) {
        area2 += g.neg * (2 * tp + g.pos);
        tp += g.pos;
    }
    return static_cast<double>(area2) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
}

double auc_pr(std::span<const double> probs, std::span<const int> labels) {
    check_sizes(probs, labels, "auc_pr");
    const std::size_t p = count_positive(labels);
    if (p == 0) {
        throw NoPositivesError("AUC-PR needs at least one seizure window");
    }
    std::size_t tp = 0;
    std::size_t seen = 0;
    double ap = 0.0;
    for (const auto& g : descending_groups(probs, labels)) {
        tp += g.pos;
        seen += g.pos + g.neg;
        if (g.pos > 0) {
            ap += static_cast<double>(g.pos) / static_cast<double>(p) * static_cast<double>(tp) /
                  static_cast<double>(seen);
        }
    }
    return ap;
}

std::vector<CurvePoint> roc_curve(std::span<const double> probs, std::span<const int> labels) {
    check_sizes(probs, labels, "roc_curve");
    const std::size_t p = count_positive(labels);
    const std::size_t n = labels.size() - p;
    if (p == 0 || n == 0) {
        throw SingleClassError("ROC curve needs both classes");
    }
    std::vector<CurvePoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& g : descending_groups(probs, labels)) {
        tp += g.pos;
        fp += g.neg;
        out.push_back({g.score, static_cast<double>(fp) / static_cast<double>(n),
                       static_cast<double>(tp) / static_cast<double>(p)});
    }
    return out;
}

std::vector<CurvePoint> pr_curve(std::span<const double> probs, std::span<const int> labels) {
    check_sizes(probs, labels, "pr_curve");
    const std::size_t p = count_positive(labels);
    if (p == 0) {
        throw NoPositivesError("PR curve needs at least one seizure window");
    }
    std::vector<CurvePoint> out{{std::numeric_limits<double>::infinity(), 0.0, 1.0}};
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (const auto& g : descending_groups(probs, labels)) {
        tp += g.pos;
        seen += g.pos + g.neg;
        out.push_back({g.score, static_cast<double>(tp) / static_cast<double>(p),
                       static_cast<double>(tp) / static_cast<double>(seen)});
    }
    return out;
}

const std::vector<Arm>& all_arms() {
    static const std::vector<Arm> arms{Arm::cnn_no_at, Arm::cnn_at, Arm::bilstm_no_at, Arm::bilstm_at};
    return arms;
}

std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::cnn_at:
            return "cnn_at";
        case Arm::cnn_no_at:
            return "cnn_no_at";
        case Arm::bilstm_at:
            return "cnn_bilstm_at";
        case Arm::bilstm_no_at:
            return "cnn_bilstm_no_at";
    }
    return "unknown";
}

std::optional<Arm> parse_arm(const std::string& name) {
    for (Arm a : all_arms()) {
        if (arm_name(a) == name) {
            return a;
        }
    }
    return std::nullopt;
}

bool arm_adversarial(Arm arm) {
    return arm == Arm::cnn_at || arm == Arm::bilstm_at;
}

bool arm_sequence(Arm arm) {
    return arm == Arm::bilstm_at || arm == Arm::bilstm_no_at;
}

std::vector<FoldOutputs> run_fold(std::span<const pre::WindowedSequence> cohort, std::size_t held_out,
                                  const LopoConfig& config, std::uint64_t seed, std::span<const Arm> arms,
                                  const train::ProgressFn& progress) {
    require(held_out < cohort.size(), "run_fold: held-out index out of range");
    std::vector<const pre::WindowedSequence*> training;
    for (std::size_t k = 0; k < cohort.size(); ++k) {
        if (k != held_out) {
            training.push_back(&cohort[k]);
        }
    }
    const train::SourceDataset ds(training);
    const pre::WindowedSequence& test = cohort[held_out];
    const std::string tag = test.patient_id + " seed " + std::to_string(seed) + ": ";
    const auto tagged = [&](const std::string& msg) {
        if (progress) {
            progress(tag + msg);
        }
    };

    std::vector<FoldOutputs> outputs;
    for (bool adversarial : {false, true}) {
        std::vector<Arm> wanted;
        for (Arm a : arms) {
            if (arm_adversarial(a) == adversarial) {
                wanted.push_back(a);
            }
        }
        if (wanted.empty()) {
            continue;
        }
        train::Stage1Config s1 = config.stage1;
        s1.adversarial = adversarial;
        auto stage1 = train::stage1_train(ds, config.arch, s1, seed, tagged);
        std::optional<train::Stage2Result> stage2;
        for (Arm arm : wanted) {
            std::vector<double> train_probs;
            std::vector<int> train_labels;
            std::vector<double> test_probs;
            if (arm_sequence(arm)) {
                if (!stage2) {
                    stage2 = train::stage2_train(ds, stage1.model.features, config.arch, config.stage2,
                                                 stage1.weights, seed, tagged);
                }
                for (const auto* s : training) {
                    const auto p = train::predict_sequence(stage2->model, *s);
                    train_probs.insert(train_probs.end(), p.begin(), p.end());
                }
                test_probs = train::predict_sequence(stage2->model, test);
            } else {
                for (const auto* s : training) {
                    const auto p = train::predict_windows(stage1.model, *s);
                    train_probs.insert(train_probs.end(), p.begin(), p.end());
                }
                test_probs = train::predict_windows(stage1.model, test);
            }
            train_labels = ds.labels();
            FoldOutputs out;
            out.result.patient_id = test.patient_id;
            out.result.seed = seed;
            out.result.arm = arm;
            out.result.tau = select_threshold(train_probs, train_labels).tau;
            out.result.metrics = confusion_metrics(confusion(detect(test_probs, out.result.tau), test.labels));
            out.result.auc_roc = auc_roc(test_probs, test.labels);
            out.result.auc_pr = auc_pr(test_probs, test.labels);
            out.result.windows = test.size();
            out.test_probs = std::move(test_probs);
            out.test_labels = test.labels;
            outputs.push_back(std::move(out));
        }
    }
    return outputs;
}

double metric_value(const FoldResult& r, std::size_t metric) {
    switch (metric) {
        case 0:
            return r.metrics.sensitivity;
        case 1:
            return r.metrics.specificity;
        case 2:
            return r.metrics.mcc;
        case 3:
            return r.auc_roc;
        case 4:
            return r.auc_pr;
        default:
            throw ContractViolation("metric index out of range");
    }
}

std::vector<AggregateRow> EvalReport::aggregate() const {
    std::vector<AggregateRow> out;
    for (Arm arm : all_arms()) {
        // patient -> per-metric sum and seed count, in first-seen order
        std::vector<std::string> patients;
        std::map<std::string, std::pair<std::array<double, 5>, std::size_t>> acc;
        for (const auto& r : rows) {
            if (r.arm != arm) {
                continue;
            }
            auto [it, inserted] = acc.try_emplace(r.patient_id);
            if (inserted) {
                patients.push_back(r.patient_id);
            }
            for (std::size_t m = 0; m < 5; ++m) {
                it->second.first[m] += metric_value(r, m);
            }
            ++it->second.second;
        }
        if (patients.empty()) {
            continue;
        }
        AggregateRow row;
        row.arm = arm;
        row.patients = patients.size();
        for (std::size_t m = 0; m < 5; ++m) {
            std::vector<double> per_patient;
            for (const auto& p : patients) {
                const auto& [sums, n] = acc.at(p);
                per_patient.push_back(sums[m] / static_cast<double>(n));
            }
            const double mean =
                std::accumulate(per_patient.begin(), per_patient.end(), 0.0) / static_cast<double>(per_patient.size());
            double ss = 0.0;
            for (double v : per_patient) {
                ss += (v - mean) * (v - mean);
            }
            row.mean[m] = mean;
            row.sd[m] = per_patient.size() > 1 ? std::sqrt(ss / static_cast<double>(per_patient.size() - 1)) : 0.0;
        }
        out.push_back(row);
    }
    return out;
}

std::string EvalReport::rows_csv() const {
    std::string out = "patient,seed,arm,tau,windows,sensitivity,specificity,mcc,auc_roc,auc_pr\n";
    for (const auto& r : rows) {
        out += r.patient_id + "," + std::to_string(r.seed) + "," + arm_name(r.arm) + "," + fixed(r.tau) + "," +
               std::to_string(r.windows);
        for (std::size_t m = 0; m < 5; ++m) {
            out += "," + fixed(metric_value(r, m));
        }
        out += "\n";
    }
    return out;
}

std::string EvalReport::aggregate_csv() const {
    std::string out = "arm,patients";
    for (const char* name : kMetricNames) {
        out += std::string(",") + name + "," + name + "_sd";
    }
    out += "\n";
    for (const auto& a : aggregate()) {
        out += arm_name(a.arm) + "," + std::to_string(a.patients);
        for (std::size_t m = 0; m < 5; ++m) {
            out += "," + fixed(a.mean[m]) + "," + fixed(a.sd[m]);
        }
        out += "\n";
    }
    return out;
}

EvalReport lopo(std::span<const pre::WindowedSequence> cohort, const LopoConfig& config,
                const std::vector<FoldResult>& completed, const UnitDone& on_unit,
                const train::ProgressFn& progress) {
    if (cohort.size() < 3) {
        throw DataError("leave-one-patient-out needs at least 3 patients, got " + std::to_string(cohort.size()));
    }
    if (config.seeds.empty() || config.arms.empty()) {
        throw ConfigError("evaluation needs at least one seed and one arm");
    }
    EvalReport report;
    std::vector<std::size_t> eligible;
    for (std::size_t k = 0; k < cohort.size(); ++k) {
        const auto& labels = cohort[k].labels;
        if (std::find(labels.begin(), labels.end(), 1) == labels.end()) {
            report.warnings.push_back("patient " + cohort[k].patient_id + " has no seizure windows; fold skipped");
        } else {
            eligible.push_back(k);
        }
    }

    struct Unit {
        std::size_t patient;
        std::uint64_t seed;
    };
    std::vector<Unit> todo;
    for (std::size_t k : eligible) {
        for (std::uint64_t s : config.seeds) {
            std::set<Arm> done;
            for (const auto& r : completed) {
                if (r.patient_id == cohort[k].patient_id && r.seed == s) {
                    done.insert(r.arm);
                }
            }
            const bool all_done = std::all_of(config.arms.begin(), config.arms.end(),
                                              [&](Arm a) { return done.count(a) > 0; });
            if (all_done) {
                for (const auto& r : completed) {
                    if (r.patient_id == cohort[k].patient_id && r.seed == s && done.count(r.arm)) {
                        report.rows.push_back(r);
                    }
                }
            } else {
                todo.push_back({k, s});
            }
        }
    }

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    const auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) {
                return;
            }
            {
                std::lock_guard lock(mu);
                if (failure) {
                    return;
                }
            }
            try {
                const auto locked_progress = [&](const std::string& msg) {
                    if (progress) {
                        std::lock_guard lock(mu);
                        progress(msg);
                    }
                };
                auto outs = run_fold(cohort, todo[i].patient, config, todo[i].seed, config.arms, locked_progress);
                std::lock_guard lock(mu);
                for (const auto& o : outs) {
                    report.rows.push_back(o.result);
                }
                if (on_unit) {
                    on_unit(outs);
                }
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) {
                    failure = std::current_exception();
                }
                return;
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, std::max<std::size_t>(todo.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    std::map<std::string, std::size_t> position;
    for (std::size_t k = 0; k < cohort.size(); ++k) {
        position.emplace(cohort[k].patient_id, k);
    }
    std::sort(report.rows.begin(), report.rows.end(), [&](const FoldResult& a, const FoldResult& b) {
        const auto ka = std::make_tuple(position.at(a.patient_id), a.seed, static_cast<int>(a.arm));
        const auto kb = std::make_tuple(position.at(b.patient_id), b.seed, static_cast<int>(b.arm));
        return ka < kb;
    });
    return report;
}

}  // namespace eegdann::eval
