#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eegdann/error.hpp"
#include "eegdann/layers.hpp"
#include "eegdann/model.hpp"
#include "eegdann/ops.hpp"

using namespace eegdann;
using ad::Tensor;
using nn::Mode;
using nn::NamedTensors;

namespace {

Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) {
        x = dist(rng);
    }
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

void fill(const Tensor& t, double value) {
    auto v = const_cast<Tensor&>(t).values_mut();
    std::fill(v.begin(), v.end(), value);
}

std::vector<double> copy(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

// ---------------------------------------------------------------------------
// Layer examples
// ---------------------------------------------------------------------------

TEST(Conv1d, IdentityKernel) {
    auto x = Tensor::from({1, 4}, {1, 2, 3, 4});
    auto w = Tensor::from({1, 1, 3}, {0, 1, 0});
    auto b = Tensor::from({1}, {0});
    EXPECT_EQ(copy(nn::conv1d(x, w, b, 1, 1)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Conv1d, BoxKernelWithPadding) {
    auto x = Tensor::from({1, 4}, {1, 2, 3, 4});
    auto w = Tensor::from({1, 1, 3}, {1, 1, 1});
    auto b = Tensor::from({1}, {0});
    EXPECT_EQ(copy(nn::conv1d(x, w, b, 1, 1)), (std::vector<double>{3, 6, 9, 7}));
}

TEST(Conv1d, BiasOnly) {
    std::mt19937_64 rng(1);
    auto x = random_tensor({3, 5}, rng);
    auto w = Tensor::zeros({2, 3, 3});
    auto b = Tensor::from({2}, {0.25, -1.5});
    auto y = nn::conv1d(x, w, b, 1, 1);
    ASSERT_EQ(y.shape(), (ad::Shape{2, 5}));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(y.values()[i], 0.25);
        EXPECT_EQ(y.values()[5 + i], -1.5);
    }
}

TEST(Conv1d, ChannelMismatchIsContractViolation) {
    auto x = Tensor::zeros({2, 5});
    auto w = Tensor::zeros({1, 3, 3});
    auto b = Tensor::zeros({1});
    EXPECT_THROW(nn::conv1d(x, w, b, 1, 1), ContractViolation);
}

TEST(Conv1d, IdentityKernelIsIdentityForRandomInput) {
    std::mt19937_64 rng(2);
    auto x = random_tensor({3, 11}, rng);
    auto w = Tensor::zeros({3, 3, 3});
    {
        auto wv = w.values_mut();
        for (std::size_t c = 0; c < 3; ++c) {
            wv[(c * 3 + c) * 3 + 1] = 1.0;
        }
    }
    EXPECT_EQ(copy(nn::conv1d(x, w, Tensor::zeros({3}), 1, 1)), copy(x));
}

TEST(MaxPool, Examples) {
    EXPECT_EQ(copy(nn::max_pool1d(Tensor::from({1, 4}, {1, 3, 2, 5}))), (std::vector<double>{3, 5}));
    EXPECT_EQ(nn::max_pool1d(Tensor::zeros({2, 125})).shape(), (ad::Shape{2, 62}));
    auto c = nn::max_pool1d(Tensor::filled({1, 9}, 4.5));
    EXPECT_EQ(copy(c), (std::vector<double>(4, 4.5)));
    EXPECT_THROW(nn::max_pool1d(Tensor::zeros({1, 1})), ContractViolation);
}

TEST(MaxPool, GradientOnlyAtArgmax) {
    auto x = Tensor::from({1, 7}, {0.1, 0.5, -2, -3, 4, 1, 9}, true);
    ad::backward(ad::sum(nn::max_pool1d(x)));
    EXPECT_EQ(copy(Tensor::from({7}, {x.grad().begin(), x.grad().end()})),
              (std::vector<double>{0, 1, 1, 0, 1, 0, 0}));
}

TEST(GlobalAvgPool, Examples) {
    EXPECT_DOUBLE_EQ(nn::global_avg_pool(Tensor::from({1, 4}, {1, 2, 3, 4})).values()[0], 2.5);
    EXPECT_EQ(copy(nn::global_avg_pool(Tensor::from({2, 3}, {1, 1, 1, 2, 4, 6}))),
              (std::vector<double>{1, 4}));
    EXPECT_DOUBLE_EQ(nn::global_avg_pool(Tensor::filled({1, 13}, -0.7)).values()[0], -0.7);
}

TEST(BatchNorm, TrainModeNormalizes) {
    std::mt19937_64 rng(3);
    auto x = random_tensor({4, 3, 9}, rng);
    nn::BatchNorm1d bn(3);
    auto y = bn.forward(x, Mode::train);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        double ss = 0.0;
        for (std::size_t n = 0; n < 4; ++n) {
            for (std::size_t l = 0; l < 9; ++l) {
                const double v = y.values()[(n * 3 + c) * 9 + l];
                s += v;
                ss += v * v;
            }
        }
        EXPECT_NEAR(s / 36.0, 0.0, 1e-12);
        EXPECT_NEAR(ss / 36.0, 1.0, 1e-3);
    }
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
    nn::BatchNorm1d bn(1);
    fill(bn.beta, 0.3);
    auto y = bn.forward(Tensor::filled({2, 1, 5}, 7.0), Mode::train);
    for (double v : y.values()) {
        EXPECT_NEAR(v, 0.3, 1e-12);
    }
}

TEST(BatchNorm, EvalModeFormula) {
    nn::BatchNorm1d bn(2);
    fill(bn.gamma, 2.0);
    fill(bn.beta, 1.0);
    bn.running_mean.values_mut()[0] = 0.5;
    bn.running_mean.values_mut()[1] = -1.0;
    bn.running_var.values_mut()[0] = 4.0;
    bn.running_var.values_mut()[1] = 0.25;
    std::mt19937_64 rng(4);
    auto x = random_tensor({3, 2, 4}, rng);
    auto y = bn.forward(x, Mode::eval);
    for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t c = 0; c < 2; ++c) {
            const double m = c == 0 ? 0.5 : -1.0;
            const double v = c == 0 ? 4.0 : 0.25;
            for (std::size_t l = 0; l < 4; ++l) {
                const std::size_t i = (n * 2 + c) * 4 + l;
                EXPECT_NEAR(y.values()[i], 2.0 * (x.values()[i] - m) / std::sqrt(v + 1e-5) + 1.0, 1e-9);
            }
        }
    }
}

TEST(BatchNorm, RunningStatisticsUpdate) {
    nn::BatchNorm1d bn(1);
    auto x = Tensor::from({2, 1, 2}, {1, 3, 5, 7});
    bn.forward(x, Mode::train);
    // mean 4, unbiased variance 20/3
    EXPECT_NEAR(bn.running_mean.values()[0], 0.4, 1e-12);
    EXPECT_NEAR(bn.running_var.values()[0], 0.9 + 0.1 * 20.0 / 3.0, 1e-12);
    bn.forward(x, Mode::eval);
    EXPECT_NEAR(bn.running_mean.values()[0], 0.4, 1e-12);
}

TEST(Activations, Examples) {
    auto y = nn::leaky_relu(Tensor::from({2}, {-1.0, 2.0}));
    EXPECT_DOUBLE_EQ(y.values()[0], -0.1);
    EXPECT_DOUBLE_EQ(y.values()[1], 2.0);
    EXPECT_DOUBLE_EQ(ad::sigmoid(Tensor::scalar(0.0)).item(), 0.5);
    auto s = nn::softmax(Tensor::zeros({4}));
    for (double v : s.values()) {
        EXPECT_DOUBLE_EQ(v, 0.25);
    }
}

TEST(BiLstm, ZeroWeightsGiveZeroOutputs) {
    nn::Rng rng(5);
    nn::BiLstm lstm(40, 20, 2, rng);
    NamedTensors params;
    lstm.append_params(params, "l");
    for (auto& [_, t] : params) {
        fill(t, 0.0);
    }
    std::mt19937_64 g(6);
    auto y = lstm.forward(random_tensor({7, 40}, g));
    ASSERT_EQ(y.shape(), (ad::Shape{7, 40}));
    for (double v : y.values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(BiLstm, BackwardDirectionMirrorsForward) {
    nn::Rng rng(7);
    nn::LstmDirection dir(4, 3, rng);
    std::mt19937_64 g(8);
    auto s = random_tensor({6, 4}, g);
    std::vector<double> reversed;
    for (std::size_t t = 0; t < 6; ++t) {
        auto row = s.values().subspan((5 - t) * 4, 4);
        reversed.insert(reversed.end(), row.begin(), row.end());
    }
    auto back = dir.run(s, true);
    auto fwd_rev = dir.run(Tensor::from({6, 4}, reversed), false);
    for (std::size_t t = 0; t < 6; ++t) {
        for (std::size_t h = 0; h < 3; ++h) {
            EXPECT_DOUBLE_EQ(back.values()[t * 3 + h], fwd_rev.values()[(5 - t) * 3 + h]);
        }
    }
}

TEST(BiLstm, OutputShapeForDefaultWidths) {
    nn::Rng rng(9);
    nn::BiLstm lstm(40, 20, 2, rng);
    std::mt19937_64 g(10);
    EXPECT_EQ(lstm.forward(random_tensor({5, 40}, g)).shape(), (ad::Shape{5, 40}));
}

TEST(GradReversal, ForwardIdentityBackwardNegated) {
    auto x = Tensor::from({3}, {0.2, -1, 5}, true);
    auto y = nn::grad_reversal(x, 1.0);
    EXPECT_EQ(copy(y), copy(x));
    ad::backward(ad::dot(y, Tensor::from({3}, {0.3, 0.3, 0.3})));
    for (double g : x.grad()) {
        EXPECT_DOUBLE_EQ(g, -0.3);
    }
    auto z = Tensor::from({3}, {0.2, -1, 5}, true);
    ad::backward(ad::sum(nn::grad_reversal(z, 0.0)));
    for (double g : z.grad()) {
        EXPECT_EQ(g, 0.0);
    }
}

TEST(GradReversal, ScalesUpstreamGradientByMinusLambda) {
    nn::Rng rng(11);
    nn::Linear a(5, 4, rng);
    nn::Linear head(4, 2, rng);
    std::mt19937_64 g(12);
    auto x = random_tensor({3, 5}, g);
    auto loss_of = [&](bool grl) {
        auto h = a.forward(x);
        if (grl) {
            h = nn::grad_reversal(h, 0.7);
        }
        auto out = ad::tanh(head.forward(h));
        return ad::sum(ad::mul(out, out));
    };
    ad::backward(loss_of(false));
    auto plain_w = copy(Tensor::from(a.weight.shape(), {a.weight.grad().begin(), a.weight.grad().end()}));
    auto plain_head = std::vector<double>(head.weight.grad().begin(), head.weight.grad().end());
    a.weight.zero_grad();
    a.bias.zero_grad();
    head.weight.zero_grad();
    head.bias.zero_grad();
    ad::backward(loss_of(true));
    for (std::size_t i = 0; i < plain_w.size(); ++i) {
        EXPECT_NEAR(a.weight.grad()[i], -0.7 * plain_w[i], 1e-15);
    }
    for (std::size_t i = 0; i < plain_head.size(); ++i) {
        EXPECT_EQ(head.weight.grad()[i], plain_head[i]);
    }
}

// ---------------------------------------------------------------------------
// Model architecture
// ---------------------------------------------------------------------------

TEST(FeatureExtractor, ParameterCount) {
    nn::Rng rng(1);
    model::ArchConfig arch;
    model::FeatureExtractor f(arch, rng);
    // Conv (in * k + 1) * out plus batch-norm gamma and beta for each unit.
    const std::size_t plan[] = {18, 5, 5, 10, 10, 20, 20, 40, 40};
    std::size_t expected = 0;
    for (std::size_t i = 0; i + 1 < std::size(plan); ++i) {
        expected += (plan[i] * 3 + 1) * plan[i + 1] + 2 * plan[i + 1];
    }
    EXPECT_EQ(expected, 10245u);
    EXPECT_EQ(f.parameter_count(), expected);
}

TEST(FeatureExtractor, LengthTraceAndOutputShape) {
    nn::Rng rng(2);
    model::ArchConfig arch;
    model::FeatureExtractor f(arch, rng);
    EXPECT_EQ(f.length_trace(500), (std::vector<std::size_t>{500, 250, 125, 62, 31}));
    std::mt19937_64 g(3);
    EXPECT_EQ(f.forward(random_tensor({18, 500}, g), Mode::eval).shape(), (ad::Shape{40}));
    EXPECT_EQ(f.forward(random_tensor({3, 18, 500}, g), Mode::train).shape(), (ad::Shape{3, 40}));
    EXPECT_THROW(f.forward(random_tensor({17, 500}, g), Mode::eval), ContractViolation);
    EXPECT_THROW(f.forward(random_tensor({500}, g), Mode::eval), ContractViolation);
}

TEST(FeatureExtractor, ZeroInputZeroWeightsGivesZeroFeatures) {
    nn::Rng rng(4);
    model::ArchConfig arch;
    model::FeatureExtractor f(arch, rng);
    NamedTensors params;
    f.append_params(params, "f");
    for (auto& [name, t] : params) {
        if (name.find(".gamma") == std::string::npos) {
            fill(t, 0.0);
        }
    }
    const auto out = f.forward(Tensor::zeros({18, 500}), Mode::eval);
    for (double v : out.values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(FeatureExtractor, EvalModeIsBatchSizeIndependent) {
    nn::Rng rng(5);
    model::ArchConfig arch;
    model::FeatureExtractor f(arch, rng);
    std::mt19937_64 g(6);
    // Give the running statistics non-trivial values first.
    f.forward(random_tensor({4, 18, 500}, g), Mode::train);
    auto batch = random_tensor({8, 18, 500}, g);
    auto all = f.forward(batch, Mode::eval);
    for (std::size_t n = 0; n < 8; ++n) {
        auto one = f.forward(Tensor::from({18, 500}, {batch.values().begin() + n * 9000,
                                                       batch.values().begin() + (n + 1) * 9000}),
                             Mode::eval);
        for (std::size_t k = 0; k < 40; ++k) {
            EXPECT_NEAR(one.values()[k], all.values()[n * 40 + k], 1e-12);
        }
    }
}

TEST(FeatureExtractor, IdenticalWindowsInEvalBatch) {
    nn::Rng rng(7);
    model::ArchConfig arch;
    model::FeatureExtractor f(arch, rng);
    std::mt19937_64 g(8);
    auto w = random_tensor({18, 500}, g);
    std::vector<double> twice(w.values().begin(), w.values().end());
    twice.insert(twice.end(), w.values().begin(), w.values().end());
    auto y = f.forward(Tensor::from({2, 18, 500}, twice), Mode::eval);
    for (std::size_t k = 0; k < 40; ++k) {
        EXPECT_EQ(y.values()[k], y.values()[40 + k]);
    }
}

TEST(LabelPredictor, ZeroWeightsGiveHalf) {
    nn::Rng rng(9);
    model::ArchConfig arch;
    model::LabelPredictor p(arch, rng);
    NamedTensors params;
    p.append_params(params, "y");
    for (auto& [_, t] : params) {
        fill(t, 0.0);
    }
    EXPECT_DOUBLE_EQ(p.forward(Tensor::zeros({40})).values()[0], 0.5);
}

TEST(LabelPredictor, OutputInsideUnitIntervalAndMonotone) {
    nn::Rng rng(10);
    model::ArchConfig arch;
    model::LabelPredictor p(arch, rng);
    std::mt19937_64 g(11);
    auto f = random_tensor({40}, g);
    // Effective direction of the affine composition: W2 * W1.
    std::vector<double> dir(40, 0.0);
    for (std::size_t j = 0; j < 20; ++j) {
        for (std::size_t i = 0; i < 40; ++i) {
            dir[i] += p.output.weight.values()[j] * p.hidden.weight.values()[j * 40 + i];
        }
    }
    double prev = -1.0;
    for (double step : {-20.0, -1.0, 0.0, 0.5, 3.0}) {
        std::vector<double> v(f.values().begin(), f.values().end());
        for (std::size_t i = 0; i < 40; ++i) {
            v[i] += step * dir[i];
        }
        const double y = p.forward(Tensor::from({40}, v)).values()[0];
        EXPECT_GT(y, 0.0);
        EXPECT_LT(y, 1.0);
        EXPECT_GT(y, prev);
        prev = y;
    }
}

TEST(DomainClassifier, ZeroWeightsGiveUniform) {
    nn::Rng rng(12);
    model::ArchConfig arch;
    model::DomainClassifier d(arch, 5, rng);
    NamedTensors params;
    d.append_params(params, "d");
    for (auto& [name, t] : params) {
        if (name.find(".gamma") == std::string::npos) {
            fill(t, 0.0);
        }
    }
    const auto out = d.forward(Tensor::zeros({40}), Mode::eval);
    for (double v : out.values()) {
        EXPECT_NEAR(v, 0.2, 1e-15);
    }
}

TEST(DomainClassifier, RowsSumToOne) {
    nn::Rng rng(13);
    model::ArchConfig arch;
    model::DomainClassifier d(arch, 19, rng);
    std::mt19937_64 g(14);
    auto p = d.forward(random_tensor({6, 40}, g), Mode::train);
    ASSERT_EQ(p.shape(), (ad::Shape{6, 19}));
    for (std::size_t n = 0; n < 6; ++n) {
        double s = 0.0;
        for (std::size_t k = 0; k < 19; ++k) {
            EXPECT_GE(p.values()[n * 19 + k], 0.0);
            s += p.values()[n * 19 + k];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    EXPECT_THROW(model::DomainClassifier(arch, 1, rng), ContractViolation);
}

TEST(DomainClassifier, GrlLeavesForwardValuesUnchanged) {
    nn::Rng rng(15);
    model::ArchConfig arch;
    model::DannModel m(arch, 4, rng);
    std::mt19937_64 g(16);
    auto x = random_tensor({3, 18, 500}, g);
    auto f = m.features.forward(x, Mode::eval);
    auto plain = m.domain.forward(f, Mode::eval);
    auto reversed = m.domain.forward(nn::grad_reversal(f, 0.9), Mode::eval);
    EXPECT_EQ(copy(plain), copy(reversed));
}

TEST(SequenceModel, TWindowsGiveTProbabilities) {
    nn::Rng rng(17);
    model::ArchConfig arch;
    model::SequenceModel m(arch, rng);
    std::mt19937_64 g(18);
    for (std::size_t t : {1u, 7u, 320u}) {
        auto p = m.forward(random_tensor({t, 18, 500}, g), Mode::eval);
        ASSERT_EQ(p.shape(), (ad::Shape{t}));
        for (double v : p.values()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(SequenceModel, EmptySequenceIsContractViolation) {
    nn::Rng rng(19);
    model::ArchConfig arch;
    model::SequenceModel m(arch, rng);
    EXPECT_THROW(m.head.forward(Tensor::zeros({0, 40})), ContractViolation);
}

TEST(SequenceModel, LastWindowInfluencesFirstOutput) {
    nn::Rng rng(20);
    model::ArchConfig arch;
    model::SequenceModel m(arch, rng);
    std::mt19937_64 g(21);
    auto x = random_tensor({6, 18, 500}, g);
    const double before = m.forward(x, Mode::eval).values()[0];
    std::vector<double> v(x.values().begin(), x.values().end());
    for (std::size_t i = 5 * 9000; i < 6 * 9000; ++i) {
        v[i] += 0.5;
    }
    const double after = m.forward(Tensor::from({6, 18, 500}, v), Mode::eval).values()[0];
    EXPECT_GT(std::abs(after - before), 0.0);
}

TEST(SequenceModel, ZeroHeadGivesHalfEverywhere) {
    nn::Rng rng(22);
    model::ArchConfig arch;
    model::SequenceModel m(arch, rng);
    NamedTensors params;
    m.head.append_params(params, "s");
    for (auto& [_, t] : params) {
        fill(t, 0.0);
    }
    std::mt19937_64 g(23);
    const auto out = m.forward(random_tensor({4, 18, 500}, g), Mode::eval);
    for (double v : out.values()) {
        EXPECT_EQ(v, 0.5);
    }
}

TEST(SequenceModel, ForwardSequencesMatchesPerSequenceInEval) {
    nn::Rng rng(24);
    model::ArchConfig arch;
    model::SequenceModel m(arch, rng);
    std::mt19937_64 g(25);
    auto x = random_tensor({5, 18, 500}, g);
    const std::size_t lengths[] = {2, 3};
    auto joint = m.forward_sequences(x, lengths, Mode::eval);
    auto first = m.forward(Tensor::from({2, 18, 500}, {x.values().begin(), x.values().begin() + 18000}),
                           Mode::eval);
    auto second = m.forward(Tensor::from({3, 18, 500}, {x.values().begin() + 18000, x.values().end()}),
                            Mode::eval);
    ASSERT_EQ(joint.size(), 5u);
    EXPECT_NEAR(joint.values()[0], first.values()[0], 1e-12);
    EXPECT_NEAR(joint.values()[1], first.values()[1], 1e-12);
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_NEAR(joint.values()[2 + t], second.values()[t], 1e-12);
    }
}

TEST(SequenceModel, HeadParameterCount) {
    nn::Rng rng(26);
    model::ArchConfig arch;
    model::SequenceHead head(arch, rng);
    NamedTensors params;
    head.append_params(params, "s");
    std::size_t total = 0;
    for (const auto& [_, t] : params) {
        total += t.size();
    }
    // Four directions of 4H(I + H + 1) with I = 40, H = 20, plus a 40 -> 1 affine.
    EXPECT_EQ(total, 4u * 80u * (40u + 20u + 1u) + 41u);
}
