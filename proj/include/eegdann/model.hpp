#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "eegdann/layers.hpp"

namespace eegdann::model {

using ad::Tensor;
using nn::Mode;
using nn::NamedTensors;
using nn::Rng;

/// Architecture constants. Defaults give the 18x500 -> 40 feature network.
struct ArchConfig {
    std::size_t in_channels = 18;
    std::size_t window = 500;
    std::vector<std::size_t> block_channels{5, 10, 20, 40};
    std::size_t kernel = 3;
    std::size_t label_hidden = 20;
    std::size_t domain_hidden = 40;
    std::size_t lstm_hidden = 20;
    std::size_t lstm_layers = 2;

    std::size_t feature_dim() const { return block_channels.back(); }
};

/// Four blocks of 2 x (conv1d, batch norm, leaky ReLU) + max pool, then
/// global average pooling. [N, C, L] -> [N, F]; [C, L] -> [F].
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(const ArchConfig& arch, Rng& rng);

    Tensor forward(const Tensor& windows, Mode mode);
    /// Temporal length after each pooled block, starting with the input length.
    std::vector<std::size_t> length_trace(std::size_t input_length) const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;

    void append_params(NamedTensors& out, const std::string& prefix) const;
    void append_state(NamedTensors& out, const std::string& prefix) const;

private:
    struct Unit {
        nn::Conv1d conv;
        nn::BatchNorm1d norm;
    };
    std::size_t in_channels_ = 0;
    std::vector<std::array<Unit, 2>> blocks_;
};

/// Two affine layers with no hidden activation and a terminal sigmoid.
/// [N, F] -> [N] probabilities.
class LabelPredictor {
public:
    LabelPredictor() = default;
    LabelPredictor(const ArchConfig& arch, Rng& rng);

    Tensor forward(const Tensor& features) const;
    void append_params(NamedTensors& out, const std::string& prefix) const;

    nn::Linear hidden;
    nn::Linear output;
};

/// Three-layer MLP (batch norm + leaky ReLU after the first two) with a
/// softmax over K domains. [N, F] -> [N, K].
class DomainClassifier {
public:
    DomainClassifier() = default;
    DomainClassifier(const ArchConfig& arch, std::size_t domains, Rng& rng);

    Tensor forward(const Tensor& features, Mode mode);
    std::size_t domains() const { return fc3.weight.extent(0); }
    void append_params(NamedTensors& out, const std::string& prefix) const;
    void append_state(NamedTensors& out, const std::string& prefix) const;

    nn::Linear fc1;
    nn::BatchNorm1d bn1;
    nn::Linear fc2;
    nn::BatchNorm1d bn2;
    nn::Linear fc3;
};

/// BiLSTM over per-window features followed by an affine layer and sigmoid.
/// [T, F] -> [T] probabilities.
class SequenceHead {
public:
    SequenceHead() = default;
    SequenceHead(const ArchConfig& arch, Rng& rng);

    Tensor forward(const Tensor& features) const;
    void append_params(NamedTensors& out, const std::string& prefix) const;

    nn::BiLstm lstm;
    nn::Linear output;
};

/// Stage-1 network: shared feature extractor with label and domain heads.
struct DannModel {
    FeatureExtractor features;
    LabelPredictor label;
    DomainClassifier domain;

    DannModel() = default;
    DannModel(const ArchConfig& arch, std::size_t domains, Rng& rng);

    /// Per-window seizure probabilities [N] for windows [N, C, L].
    Tensor predict(const Tensor& windows, Mode mode);
    std::vector<Tensor> parameters() const;
    NamedTensors named_state() const;
};

/// Stage-2 network: feature extractor + BiLSTM head over whole sequences.
struct SequenceModel {
    FeatureExtractor features;
    SequenceHead head;

    SequenceModel() = default;
    SequenceModel(const ArchConfig& arch, Rng& rng);

    /// windows [T, C, L] -> probabilities [T].
    Tensor forward(const Tensor& windows, Mode mode);
    /// Several sequences concatenated along the leading axis (lengths sum to
    /// the window count). The feature extractor sees them as one batch; the
    /// recurrent head runs per sequence. Returns [sum T] in input order.
    Tensor forward_sequences(const Tensor& windows, std::span<const std::size_t> lengths,
                             Mode mode);
    std::vector<Tensor> parameters() const;
    NamedTensors named_state() const;
};

std::vector<Tensor> tensors_of(const NamedTensors& named);

}  // namespace eegdann::model
