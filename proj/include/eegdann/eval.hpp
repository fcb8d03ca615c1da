#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegdann/error.hpp"
#include "eegdann/model.hpp"
#include "eegdann/preprocess.hpp"
#include "eegdann/training.hpp"

namespace eegdann::eval {

namespace fs = std::filesystem;

class NoPositivesError : public DataError {
public:
    using DataError::DataError;
};

class SingleClassError : public DataError {
public:
    using DataError::DataError;
};

/// ŷ >= tau gives 1.
std::vector<int> detect(std::span<const double> probs, double tau);

struct ThresholdChoice {
    double tau = 0.5;
    double f1 = 0.0;
};

/// The candidate thresholds are the distinct predicted probabilities; the F1
/// maximiser wins, ties going to the smallest tau.
ThresholdChoice select_threshold(std::span<const double> probs, std::span<const int> labels);

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
};

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> labels);

struct Metrics {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double mcc = 0.0;
};

/// Zero denominators give 0.
Metrics confusion_metrics(const ConfusionCounts& c);

/// Probability that a random positive outranks a random negative (ties 1/2),
/// computed as the trapezoidal area under the ROC staircase.
double auc_roc(std::span<const double> probs, std::span<const int> labels);

/// Average precision over the ranking induced by the scores.
double auc_pr(std::span<const double> probs, std::span<const int> labels);

struct CurvePoint {
    double threshold = 0.0;
    double x = 0.0;  // FPR for ROC, recall for PR
    double y = 0.0;  // TPR for ROC, precision for PR
};

std::vector<CurvePoint> roc_curve(std::span<const double> probs, std::span<const int> labels);
std::vector<CurvePoint> pr_curve(std::span<const double> probs, std::span<const int> labels);

enum class Arm { cnn_at, cnn_no_at, bilstm_at, bilstm_no_at };

const std::vector<Arm>& all_arms();
std::string arm_name(Arm arm);
std::optional<Arm> parse_arm(const std::string& name);
bool arm_adversarial(Arm arm);
bool arm_sequence(Arm arm);

struct FoldResult {
    std::string patient_id;
    std::uint64_t seed = 0;
    Arm arm = Arm::cnn_at;
    double tau = 0.5;
    Metrics metrics;
    double auc_roc = 0.0;
    double auc_pr = 0.0;
    std::size_t windows = 0;
};

struct FoldOutputs {
    FoldResult result;
    std::vector<double> test_probs;
    std::vector<int> test_labels;
};

struct LopoConfig {
    model::ArchConfig arch;
    train::Stage1Config stage1;
    train::Stage2Config stage2;
    std::vector<std::uint64_t> seeds{1};
    std::vector<Arm> arms = all_arms();
    std::size_t workers = 1;
};

/// Trains on every patient except `held_out`, picks tau on the training-fold
/// predictions, and scores the held-out patient for each requested arm. Arms
/// sharing an adversarial flag reuse one stage-1 model.
std::vector<FoldOutputs> run_fold(std::span<const pre::WindowedSequence> cohort, std::size_t held_out,
                                  const LopoConfig& config, std::uint64_t seed, std::span<const Arm> arms,
                                  const train::ProgressFn& progress = {});

struct AggregateRow {
    Arm arm = Arm::cnn_at;
    std::size_t patients = 0;
    double mean[5]{};
    double sd[5]{};
};

struct EvalReport {
    std::vector<FoldResult> rows;  // sorted by (patient, seed, arm)
    std::vector<std::string> warnings;

    /// Per-patient seed means, then mean and sample SD across patients.
    std::vector<AggregateRow> aggregate() const;
    std::string rows_csv() const;
    std::string aggregate_csv() const;
};

inline constexpr const char* kMetricNames[5] = {"Sensitivity", "Specificity", "MCC", "AUC-ROC", "AUC-PR"};

double metric_value(const FoldResult& r, std::size_t metric);

/// Called after each completed (patient, seed) unit with its fold results.
using UnitDone = std::function<void(const std::vector<FoldOutputs>&)>;

/// Full leave-one-patient-out grid. Units listed in `completed` (keyed by
/// patient id and seed) are skipped. Patients without a seizure window are
/// skipped with a warning.
EvalReport lopo(std::span<const pre::WindowedSequence> cohort, const LopoConfig& config,
                const std::vector<FoldResult>& completed = {}, const UnitDone& on_unit = {},
                const train::ProgressFn& progress = {});

}  // namespace eegdann::eval
