#include "eegdann/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "eegdann/ops.hpp"

namespace eegdann::train {

namespace {

constexpr std::size_t kEvalChunk = 256;

model::Rng seeded(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return model::Rng(seq);
}

void check_finite(double value, const std::string& what) {
    if (!std::isfinite(value)) {
        throw NumericError(what + " is not finite");
    }
}

Tensor windows_tensor(const pre::WindowedSequence& seq, std::size_t begin, std::size_t end) {
    const std::size_t per = seq.window_values();
    std::vector<double> values(seq.data.begin() + static_cast<std::ptrdiff_t>(begin * per),
                               seq.data.begin() + static_cast<std::ptrdiff_t>(end * per));
    return Tensor::from({end - begin, seq.channels, seq.window}, std::move(values));
}

std::string format_epoch(const char* stage, std::size_t epoch, std::size_t total, double a, double b) {
    std::ostringstream os;
    os << stage << " epoch " << epoch << "/" << total << " loss " << a;
    if (!std::isnan(b)) {
        os << " domain " << b;
    }
    return os.str();
}

}  // namespace

SourceDataset::SourceDataset(std::vector<const pre::WindowedSequence*> sequences)
    : sequences_(std::move(sequences)) {
    for (std::size_t k = 0; k < sequences_.size(); ++k) {
        const auto& s = *sequences_[k];
        if (s.channels != sequences_[0]->channels || s.window != sequences_[0]->window) {
            throw DataError("sequence " + s.patient_id + " has a different window shape");
        }
        if (s.data.size() != s.size() * s.window_values()) {
            throw DataError("sequence " + s.patient_id + " data does not match its labels");
        }
        for (std::size_t t = 0; t < s.size(); ++t) {
            flat_.push_back({k, t});
        }
    }
}

std::size_t SourceDataset::channels() const {
    return sequences_.empty() ? 0 : sequences_[0]->channels;
}

std::size_t SourceDataset::window_length() const {
    return sequences_.empty() ? 0 : sequences_[0]->window;
}

std::vector<int> SourceDataset::labels() const {
    std::vector<int> out;
    out.reserve(flat_.size());
    for (const auto* s : sequences_) {
        out.insert(out.end(), s->labels.begin(), s->labels.end());
    }
    return out;
}

SourceDataset::Batch SourceDataset::gather(std::span<const std::size_t> flat_indices) const {
    const std::size_t per = channels() * window_length();
    std::vector<double> values;
    values.reserve(flat_indices.size() * per);
    Batch batch;
    for (std::size_t i : flat_indices) {
        require(i < flat_.size(), "gather: index out of range");
        const Ref r = flat_[i];
        const auto w = sequences_[r.sequence]->window_at(r.window);
        values.insert(values.end(), w.begin(), w.end());
        batch.labels.push_back(sequences_[r.sequence]->labels[r.window]);
        batch.domains.push_back(static_cast<int>(r.sequence));
    }
    batch.windows = Tensor::from({flat_indices.size(), channels(), window_length()}, std::move(values));
    return batch;
}

Tensor SourceDataset::sequence_windows(std::size_t k) const {
    return windows_tensor(*sequences_.at(k), 0, sequences_[k]->size());
}

StepLosses stage1_step(model::DannModel& model, std::span<Tensor> params, ad::AdamState& adam,
                       const SourceDataset::Batch& batch, const ClassWeights& weights, double lambda,
                       double lr) {
    ad::zero_grads(params);
    const Tensor feats = model.features.forward(batch.windows, nn::Mode::train);
    const Tensor probs = model.label.forward(feats);
    const Tensor ly = label_loss(probs, batch.labels, weights);
    const Tensor dprobs = model.domain.forward(nn::grad_reversal(feats, lambda), nn::Mode::train);
    const Tensor ld = domain_loss(dprobs, batch.domains);
    const Tensor total = ad::add(ly, ld);
    check_finite(total.item(), "stage-1 loss");
    ad::backward(total);
    ad::adam_step(params, adam, lr);
    return {ly.item(), ld.item()};
}

std::vector<std::vector<std::size_t>> stage1_batches(std::size_t windows, std::size_t batch_size,
                                                     model::Rng& rng) {
    if (batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    std::vector<std::size_t> order(windows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < windows; i += batch_size) {
        const std::size_t end = std::min(windows, i + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

Stage1Result stage1_train(const SourceDataset& data, const model::ArchConfig& arch, const Stage1Config& config,
                          std::uint64_t seed, const ProgressFn& progress) {
    if (data.domains() < 2) {
        throw SingleDomainError("adversarial training needs at least two source patients, got " +
                                std::to_string(data.domains()));
    }
    if (data.windows() < 2) {
        throw DataError("stage 1 needs at least two windows");
    }
    if (config.epochs == 0) {
        throw ConfigError("stage-1 epochs must be positive");
    }
    if (data.channels() != arch.in_channels || data.window_length() != arch.window) {
        throw DataError("windows are " + std::to_string(data.channels()) + "x" +
                        std::to_string(data.window_length()) + " but the network expects " +
                        std::to_string(arch.in_channels) + "x" + std::to_string(arch.window));
    }
    const std::vector<int> labels = data.labels();
    Stage1Result result;
    result.weights = class_weights(labels);

    auto init_rng = seeded(seed, 0);
    auto shuffle_rng = seeded(seed, 1);
    result.model = model::DannModel(arch, data.domains(), init_rng);
    std::vector<Tensor> params = result.model.parameters();
    auto adam = ad::AdamState::for_params(params);

    const std::size_t n = data.windows();
    const std::size_t b = std::max<std::size_t>(config.batch_size, 1);
    const std::size_t per_epoch = (n + b - 1) / b - (n > b && n % b == 1 ? 1 : 0);
    const std::size_t total_steps = per_epoch * config.epochs;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto batches = stage1_batches(data.windows(), config.batch_size, shuffle_rng);
        EpochLosses sums;
        for (const auto& idx : batches) {
            const double p = static_cast<double>(result.steps) / static_cast<double>(total_steps);
            const double lambda = config.adversarial ? lambda_schedule(p) : 0.0;
            const auto batch = data.gather(idx);
            const StepLosses l = stage1_step(result.model, params, adam, batch, result.weights, lambda, config.lr);
            sums.label += l.label;
            sums.domain += l.domain;
            ++result.steps;
            result.final_lambda = lambda;
        }
        sums.label /= static_cast<double>(batches.size());
        sums.domain /= static_cast<double>(batches.size());
        result.curve.push_back(sums);
        if (progress) {
            progress(format_epoch("stage1", epoch + 1, config.epochs, sums.label, sums.domain));
        }
    }
    ad::zero_grads(params);
    for (auto& p : params) {
        p.clear_grad();
    }
    return result;
}

void copy_values(const nn::NamedTensors& from, const nn::NamedTensors& to) {
    require(from.size() == to.size(), "copy_values: tensor count differs");
    for (std::size_t i = 0; i < from.size(); ++i) {
        require(from[i].first == to[i].first && from[i].second.shape() == to[i].second.shape(),
                "copy_values: mismatch at " + to[i].first);
        auto dst = Tensor(to[i].second).values_mut();
        const auto src = from[i].second.values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

Tensor sequence_batch_loss(model::SequenceModel& model, const SourceDataset& data,
                           std::span<const std::size_t> sequences, const ClassWeights& weights) {
    require(!sequences.empty(), "sequence_batch_loss: empty batch");
    std::vector<double> values;
    std::vector<int> labels;
    std::vector<std::size_t> lengths;
    for (std::size_t k : sequences) {
        const auto& s = data.sequence(k);
        values.insert(values.end(), s.data.begin(), s.data.end());
        labels.insert(labels.end(), s.labels.begin(), s.labels.end());
        lengths.push_back(s.size());
    }
    const Tensor windows = Tensor::from({labels.size(), data.channels(), data.window_length()}, std::move(values));
    const Tensor probs = model.forward_sequences(windows, lengths, nn::Mode::train);
    return label_loss(probs, labels, weights);
}

model::SequenceModel init_sequence_model(const model::FeatureExtractor& initial_features,
                                         const model::ArchConfig& arch, std::uint64_t seed) {
    auto init_rng = seeded(seed, 2);
    model::SequenceModel m(arch, init_rng);
    nn::NamedTensors from;
    nn::NamedTensors to;
    initial_features.append_state(from, "features");
    m.features.append_state(to, "features");
    copy_values(from, to);
    return m;
}

Stage2Result stage2_train(const SourceDataset& data, const model::FeatureExtractor& initial_features,
                          const model::ArchConfig& arch, const Stage2Config& config, const ClassWeights& weights,
                          std::uint64_t seed, const ProgressFn& progress) {
    if (data.domains() == 0) {
        throw DataError("stage 2 needs at least one training sequence");
    }
    if (config.batch_size == 0 || config.epochs == 0) {
        throw ConfigError("stage-2 batch size and epochs must be positive");
    }
    Stage2Result result;
    result.model = init_sequence_model(initial_features, arch, seed);
    auto shuffle_rng = seeded(seed, 3);
    std::size_t batch_size = config.batch_size;
    if (batch_size > data.domains()) {
        result.warnings.push_back("stage-2 batch size " + std::to_string(batch_size) + " exceeds the " +
                                  std::to_string(data.domains()) + " training sequences; using " +
                                  std::to_string(data.domains()));
        batch_size = data.domains();
        if (progress) {
            progress(result.warnings.back());
        }
    }
    const ClassWeights w = config.recompute_class_weights ? class_weights(data.labels()) : weights;

    std::vector<Tensor> params = result.model.parameters();
    auto adam = ad::AdamState::for_params(params);
    std::vector<std::size_t> order(data.domains());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < order.size(); i += batch_size) {
            const std::size_t end = std::min(order.size(), i + batch_size);
            const std::span<const std::size_t> batch(order.data() + i, end - i);
            ad::zero_grads(params);
            const Tensor loss = sequence_batch_loss(result.model, data, batch, w);
            check_finite(loss.item(), "stage-2 loss");
            ad::backward(loss);
            ad::adam_step(params, adam, config.lr);
            sum += loss.item();
            ++count;
        }
        result.epoch_loss.push_back(sum / static_cast<double>(count));
        if (progress) {
            progress(format_epoch("stage2", epoch + 1, config.epochs, result.epoch_loss.back(),
                                  std::nan("")));
        }
    }
    for (auto& p : params) {
        p.clear_grad();
    }
    return result;
}

std::vector<double> extract_features(model::FeatureExtractor& features, const pre::WindowedSequence& seq) {
    ad::NoGradGuard guard;
    std::vector<double> out;
    for (std::size_t begin = 0; begin < seq.size(); begin += kEvalChunk) {
        const std::size_t end = std::min(seq.size(), begin + kEvalChunk);
        const Tensor f = features.forward(windows_tensor(seq, begin, end), nn::Mode::eval);
        const auto v = f.values();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

std::vector<double> predict_windows(model::DannModel& model, const pre::WindowedSequence& seq) {
    ad::NoGradGuard guard;
    std::vector<double> feats = extract_features(model.features, seq);
    if (feats.empty()) {
        return {};
    }
    const std::size_t f = model.features.output_dim();
    const Tensor probs = model.label.forward(Tensor::from({seq.size(), f}, std::move(feats)));
    const auto v = probs.values();
    return {v.begin(), v.end()};
}

std::vector<double> predict_sequence(model::SequenceModel& model, const pre::WindowedSequence& seq) {
    ad::NoGradGuard guard;
    std::vector<double> feats = extract_features(model.features, seq);
    if (feats.empty()) {
        return {};
    }
    const std::size_t f = model.features.output_dim();
    const Tensor probs = model.head.forward(Tensor::from({seq.size(), f}, std::move(feats)));
    const auto v = probs.values();
    return {v.begin(), v.end()};
}

ProbeResult domain_probe(model::FeatureExtractor& features, const SourceDataset& data,
                         const model::ArchConfig& arch, const ProbeConfig& config, std::uint64_t seed) {
    if (data.domains() < 2) {
        throw SingleDomainError("domain probe needs at least two patients");
    }
    const std::size_t f = features.output_dim();
    std::vector<double> train_x;
    std::vector<int> train_d;
    std::vector<double> test_x;
    std::vector<int> test_d;
    for (std::size_t k = 0; k < data.domains(); ++k) {
        const auto& seq = data.sequence(k);
        const std::vector<double> feats = extract_features(features, seq);
        for (std::size_t t = 0; t < seq.size(); ++t) {
            auto& x = t % 2 == 0 ? train_x : test_x;
            auto& d = t % 2 == 0 ? train_d : test_d;
            x.insert(x.end(), feats.begin() + static_cast<std::ptrdiff_t>(t * f),
                     feats.begin() + static_cast<std::ptrdiff_t>((t + 1) * f));
            d.push_back(static_cast<int>(k));
        }
    }
    ProbeResult result;
    result.train_windows = train_d.size();
    result.test_windows = test_d.size();
    if (result.train_windows < 2 || result.test_windows == 0) {
        throw DataError("domain probe needs at least three windows");
    }

    auto init_rng = seeded(seed, 4);
    auto shuffle_rng = seeded(seed, 5);
    model::DomainClassifier probe(arch, data.domains(), init_rng);
    nn::NamedTensors named;
    probe.append_params(named, "probe");
    std::vector<Tensor> params = model::tensors_of(named);
    auto adam = ad::AdamState::for_params(params);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& idx : stage1_batches(result.train_windows, config.batch_size, shuffle_rng)) {
            std::vector<double> x;
            std::vector<int> d;
            x.reserve(idx.size() * f);
            for (std::size_t i : idx) {
                x.insert(x.end(), train_x.begin() + static_cast<std::ptrdiff_t>(i * f),
                         train_x.begin() + static_cast<std::ptrdiff_t>((i + 1) * f));
                d.push_back(train_d[i]);
            }
            ad::zero_grads(params);
            const Tensor loss =
                domain_loss(probe.forward(Tensor::from({idx.size(), f}, std::move(x)), nn::Mode::train), d);
            check_finite(loss.item(), "domain probe loss");
            ad::backward(loss);
            ad::adam_step(params, adam, config.lr);
        }
    }

    ad::NoGradGuard guard;
    const Tensor probs = probe.forward(Tensor::from({result.test_windows, f}, std::move(test_x)), nn::Mode::eval);
    const std::size_t k = data.domains();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < result.test_windows; ++i) {
        const auto rowv = probs.values().subspan(i * k, k);
        const auto best = static_cast<int>(std::max_element(rowv.begin(), rowv.end()) - rowv.begin());
        correct += best == test_d[i] ? 1 : 0;
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(result.test_windows);
    return result;
}

}  // namespace eegdann::train
