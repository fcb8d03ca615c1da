#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eegdann/adam.hpp"
#include "eegdann/losses.hpp"
#include "eegdann/model.hpp"
#include "eegdann/preprocess.hpp"

namespace eegdann::train {

class SingleDomainError : public DataError {
public:
    using DataError::DataError;
};

struct Stage1Config {
    double lr = 0.005;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    bool adversarial = true;  // false forces lambda = 0 (GRL inert)
};

struct Stage2Config {
    double lr = 0.001;
    std::size_t batch_size = 2;  // whole patient sequences per batch
    std::size_t epochs = 6;
    bool recompute_class_weights = false;
};

/// Training patients. Domain k is the k-th sequence in the list; the flat
/// stage-1 view enumerates (sequence, window) pairs in order.
class SourceDataset {
public:
    SourceDataset() = default;
    explicit SourceDataset(std::vector<const pre::WindowedSequence*> sequences);

    std::size_t domains() const { return sequences_.size(); }
    std::size_t windows() const { return flat_.size(); }
    const pre::WindowedSequence& sequence(std::size_t k) const { return *sequences_[k]; }
    std::size_t channels() const;
    std::size_t window_length() const;

    std::vector<int> labels() const;

    struct Batch {
        Tensor windows;  // [n, C, L]
        std::vector<int> labels;
        std::vector<int> domains;
    };
    Batch gather(std::span<const std::size_t> flat_indices) const;
    /// Windows of sequence k as [T, C, L].
    Tensor sequence_windows(std::size_t k) const;

private:
    struct Ref {
        std::size_t sequence;
        std::size_t window;
    };
    std::vector<const pre::WindowedSequence*> sequences_;
    std::vector<Ref> flat_;
};

struct EpochLosses {
    double label = 0.0;
    double domain = 0.0;
};

struct StepLosses {
    double label = 0.0;
    double domain = 0.0;
};

/// One stage-1 update: L_y + L_d with the domain head behind a gradient
/// reversal of strength `lambda`, single backward pass, Adam step.
StepLosses stage1_step(model::DannModel& model, std::span<ad::Tensor> params, ad::AdamState& adam,
                       const SourceDataset::Batch& batch, const ClassWeights& weights, double lambda,
                       double lr);

/// Index ranges of one epoch's batches. A trailing batch of a single window is
/// merged into the previous one (batch norm needs two samples).
std::vector<std::vector<std::size_t>> stage1_batches(std::size_t windows, std::size_t batch_size,
                                                     model::Rng& rng);

struct Stage1Result {
    model::DannModel model;
    ClassWeights weights;
    std::vector<EpochLosses> curve;
    std::size_t steps = 0;
    double final_lambda = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

Stage1Result stage1_train(const SourceDataset& data, const model::ArchConfig& arch, const Stage1Config& config,
                          std::uint64_t seed, const ProgressFn& progress = {});

struct Stage2Result {
    model::SequenceModel model;
    std::vector<double> epoch_loss;
    std::vector<std::string> warnings;
};

/// Copies values between two named tensor lists with identical names/shapes.
void copy_values(const nn::NamedTensors& from, const nn::NamedTensors& to);

/// Label loss of stage 2 over a batch of whole sequences: the weighted BCE
/// summed over every window of the batch divided by the total window count.
Tensor sequence_batch_loss(model::SequenceModel& model, const SourceDataset& data,
                           std::span<const std::size_t> sequences, const ClassWeights& weights);

/// Fresh sequence model whose feature extractor (parameters and batch-norm
/// buffers) is a copy of `initial_features`.
model::SequenceModel init_sequence_model(const model::FeatureExtractor& initial_features,
                                         const model::ArchConfig& arch, std::uint64_t seed);

Stage2Result stage2_train(const SourceDataset& data, const model::FeatureExtractor& initial_features,
                          const model::ArchConfig& arch, const Stage2Config& config, const ClassWeights& weights,
                          std::uint64_t seed, const ProgressFn& progress = {});

/// Eval-mode per-window probabilities from the stage-1 label path.
std::vector<double> predict_windows(model::DannModel& model, const pre::WindowedSequence& seq);
/// Eval-mode per-window probabilities from the sequence model.
std::vector<double> predict_sequence(model::SequenceModel& model, const pre::WindowedSequence& seq);
/// Eval-mode 40-dimensional features, row-major [T, F].
std::vector<double> extract_features(model::FeatureExtractor& features, const pre::WindowedSequence& seq);

struct ProbeConfig {
    double lr = 0.005;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
};

struct ProbeResult {
    double accuracy = 0.0;
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;
};

/// Trains a fresh domain classifier on frozen eval-mode features of the
/// even-indexed windows of each sequence and reports its accuracy on the
/// odd-indexed windows.
ProbeResult domain_probe(model::FeatureExtractor& features, const SourceDataset& data,
                         const model::ArchConfig& arch, const ProbeConfig& config, std::uint64_t seed);

}  // namespace eegdann::train
