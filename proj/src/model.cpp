#include "eegdann/model.hpp"

#include <numeric>

#include "eegdann/error.hpp"
#include "eegdann/ops.hpp"

namespace eegdann::model {

using ad::to_string;

FeatureExtractor::FeatureExtractor(const ArchConfig& arch, Rng& rng) : in_channels_(arch.in_channels) {
    require(!arch.block_channels.empty(), "feature extractor needs at least one block");
    std::size_t in = arch.in_channels;
    const std::size_t pad = arch.kernel / 2;
    for (std::size_t out : arch.block_channels) {
        std::array<Unit, 2> block;
        for (auto& unit : block) {
            unit.conv = nn::Conv1d(in, out, arch.kernel, rng, 1, pad);
            unit.norm = nn::BatchNorm1d(out);
            in = out;
        }
        blocks_.push_back(std::move(block));
    }
}

Tensor FeatureExtractor::forward(const Tensor& windows, Mode mode) {
    const bool single = windows.dim() == 2;
    require(single || windows.dim() == 3,
            "feature extractor expects [N, C, L] or [C, L], got " + to_string(windows.shape()));
    Tensor x = single ? ad::reshape(windows, {1, windows.extent(0), windows.extent(1)}) : windows;
    require(x.extent(1) == in_channels_, "feature extractor expects " +
                                             std::to_string(in_channels_) + " channels, got " +
                                             std::to_string(x.extent(1)));
    for (auto& block : blocks_) {
        for (auto& unit : block) {
            x = nn::leaky_relu(unit.norm.forward(unit.conv.forward(x), mode));
        }
        x = nn::max_pool1d(x, 2, 2);
    }
    Tensor pooled = nn::global_avg_pool(x);
    return single ? ad::reshape(pooled, {pooled.size()}) : pooled;
}

std::vector<std::size_t> FeatureExtractor::length_trace(std::size_t input_length) const {
    std::vector<std::size_t> trace{input_length};
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        trace.push_back(trace.back() / 2);
    }
    return trace;
}

std::size_t FeatureExtractor::output_dim() const {
    return blocks_.back()[1].conv.weight.extent(0);
}

std::size_t FeatureExtractor::parameter_count() const {
    NamedTensors named;
    append_params(named, "");
    std::size_t total = 0;
    for (const auto& [_, t] : named) {
        total += t.size();
    }
    return total;
}

void FeatureExtractor::append_params(NamedTensors& out, const std::string& prefix) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        for (std::size_t u = 0; u < 2; ++u) {
            const std::string name = prefix + ".b" + std::to_string(b) + ".u" + std::to_string(u);
            blocks_[b][u].conv.append_params(out, name + ".conv");
            blocks_[b][u].norm.append_params(out, name + ".bn");
        }
    }
}

void FeatureExtractor::append_state(NamedTensors& out, const std::string& prefix) const {
    append_params(out, prefix);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        for (std::size_t u = 0; u < 2; ++u) {
            const std::string name = prefix + ".b" + std::to_string(b) + ".u" + std::to_string(u);
            blocks_[b][u].norm.append_buffers(out, name + ".bn");
        }
    }
}

LabelPredictor::LabelPredictor(const ArchConfig& arch, Rng& rng)
    : hidden(arch.feature_dim(), arch.label_hidden, rng), output(arch.label_hidden, 1, rng) {}

Tensor LabelPredictor::forward(const Tensor& features) const {
    Tensor logits = output.forward(hidden.forward(features));
    return ad::sigmoid(ad::reshape(logits, {logits.size()}));
}

void LabelPredictor::append_params(NamedTensors& out, const std::string& prefix) const {
    hidden.append_params(out, prefix + ".fc1");
    output.append_params(out, prefix + ".fc2");
}

DomainClassifier::DomainClassifier(const ArchConfig& arch, std::size_t domains, Rng& rng)
    : fc1(arch.feature_dim(), arch.domain_hidden, rng),
      bn1(arch.domain_hidden),
      fc2(arch.domain_hidden, arch.domain_hidden, rng),
      bn2(arch.domain_hidden),
      fc3(arch.domain_hidden, domains, rng) {
    require(domains >= 2, "domain classifier needs at least 2 domains");
}

Tensor DomainClassifier::forward(const Tensor& features, Mode mode) {
    const bool single = features.dim() == 1;
    Tensor x = single ? ad::reshape(features, {1, features.size()}) : features;
    x = nn::leaky_relu(bn1.forward(fc1.forward(x), mode));
    x = nn::leaky_relu(bn2.forward(fc2.forward(x), mode));
    Tensor probs = nn::softmax(fc3.forward(x));
    return single ? ad::reshape(probs, {probs.size()}) : probs;
}

void DomainClassifier::append_params(NamedTensors& out, const std::string& prefix) const {
    fc1.append_params(out, prefix + ".fc1");
    bn1.append_params(out, prefix + ".bn1");
    fc2.append_params(out, prefix + ".fc2");
    bn2.append_params(out, prefix + ".bn2");
    fc3.append_params(out, prefix + ".fc3");
}

void DomainClassifier::append_state(NamedTensors& out, const std::string& prefix) const {
    append_params(out, prefix);
    bn1.append_buffers(out, prefix + ".bn1");
    bn2.append_buffers(out, prefix + ".bn2");
}

SequenceHead::SequenceHead(const ArchConfig& arch, Rng& rng)
    : lstm(arch.feature_dim(), arch.lstm_hidden, arch.lstm_layers, rng),
      output(2 * arch.lstm_hidden, 1, rng) {}

Tensor SequenceHead::forward(const Tensor& features) const {
    require(features.dim() == 2 && features.extent(0) >= 1,
            "sequence head expects [T, F] with T >= 1, got " + to_string(features.shape()));
    Tensor logits = output.forward(lstm.forward(features));
    return ad::sigmoid(ad::reshape(logits, {logits.size()}));
}

void SequenceHead::append_params(NamedTensors& out, const std::string& prefix) const {
    lstm.append_params(out, prefix + ".lstm");
    output.append_params(out, prefix + ".fc");
}

DannModel::DannModel(const ArchConfig& arch, std::size_t domains, Rng& rng)
    : features(arch, rng), label(arch, rng), domain(arch, domains, rng) {}

Tensor DannModel::predict(const Tensor& windows, Mode mode) {
    return label.forward(features.forward(windows, mode));
}

std::vector<Tensor> DannModel::parameters() const {
    NamedTensors named;
    features.append_params(named, "features");
    label.append_params(named, "label");
    domain.append_params(named, "domain");
    return tensors_of(named);
}

NamedTensors DannModel::named_state() const {
    NamedTensors named;
    features.append_state(named, "features");
    label.append_params(named, "label");
    domain.append_state(named, "domain");
    return named;
}

SequenceModel::SequenceModel(const ArchConfig& arch, Rng& rng) : features(arch, rng), head(arch, rng) {}

Tensor SequenceModel::forward(const Tensor& windows, Mode mode) {
    require(windows.dim() == 3 && windows.extent(0) >= 1,
            "sequence model expects [T, C, L] with T >= 1, got " + to_string(windows.shape()));
    return head.forward(features.forward(windows, mode));
}

Tensor SequenceModel::forward_sequences(const Tensor& windows, std::span<const std::size_t> lengths,
                                        Mode mode) {
    require(!lengths.empty(), "forward_sequences: no sequences");
    const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    require(windows.dim() == 3 && windows.extent(0) == total,
            "forward_sequences: lengths sum to " + std::to_string(total) + " but got " +
                to_string(windows.shape()));
    Tensor feats = features.forward(windows, mode);
    if (lengths.size() == 1) {
        return head.forward(feats);
    }
    std::vector<Tensor> outputs;
    std::size_t offset = 0;
    for (std::size_t len : lengths) {
        require(len >= 1, "forward_sequences: empty sequence");
        std::vector<std::size_t> idx(len);
        std::iota(idx.begin(), idx.end(), offset);
        outputs.push_back(head.forward(ad::gather_rows(feats, idx)));
        offset += len;
    }
    return ad::concat(outputs);
}

std::vector<Tensor> SequenceModel::parameters() const {
    NamedTensors named;
    features.append_params(named, "features");
    head.append_params(named, "sequence");
    return tensors_of(named);
}

NamedTensors SequenceModel::named_state() const {
    NamedTensors named;
    features.append_state(named, "features");
    head.append_params(named, "sequence");
    return named;
}

std::vector<Tensor> tensors_of(const NamedTensors& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [_, t] : named) {
        out.push_back(t);
    }
    return out;
}

}  // namespace eegdann::model
