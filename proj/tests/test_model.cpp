#include <gtest/gtest.h>

#include "adr/grad_check.hpp"
#include "adr/model.hpp"
#include "adr/ops.hpp"
#include "adr/rng.hpp"

using namespace adr;

namespace {

Tensor random_batch(const ModelSpec& spec, std::int64_t n, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({n, spec.in_c, spec.in_h, spec.in_w});
    for (auto& v : t.data) v = rng.uniform(0.0, 1.0);
    return t;
}

} // namespace

TEST(ModelInit, SameSeedBitwiseEqual) {
    const ModelSpec spec = ModelSpec::small_conv(1, 8, 8, 10);
    ParamSet a = init(spec, 7);
    ParamSet b = init(spec, 7);
    ASSERT_EQ(a.params.size(), b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        EXPECT_EQ(a.params[i].name, b.params[i].name);
        EXPECT_EQ(a.params[i].value.data, b.params[i].value.data);
    }
    ParamSet c = init(spec, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params.size(); ++i)
        if (a.params[i].value.data != c.params[i].value.data) any_diff = true;
    EXPECT_TRUE(any_diff);
}

TEST(ModelInit, MlpParameterCount) {
    const ModelSpec spec = ModelSpec::mlp({784, 256, 128, 10}, 1, 28, 28);
    ParamSet ps = init(spec, 1);
    EXPECT_EQ(ps.total_count(), 235146);
}

TEST(ModelInit, ZeroWidthLayerRejected) {
    EXPECT_THROW(ModelSpec::mlp({16, 0, 4}, 1, 4, 4), parameter_error);
    ModelSpec bad_tail;
    bad_tail.kind = ModelKind::Mlp;
    bad_tail.mlp_widths = {16, 8, 5};
    bad_tail.in_c = 1;
    bad_tail.in_h = 4;
    bad_tail.in_w = 4;
    bad_tail.num_classes = 4; // widths do not end at num_classes
    EXPECT_THROW(bad_tail.validate(), parameter_error);
}

TEST(ModelForward, ZeroParamsGiveUniformSoftmax) {
    const ModelSpec spec = ModelSpec::mlp({16, 8, 4}, 1, 4, 4);
    ParamSet ps = init(spec, 3);
    for (auto& p : ps.params)
        for (auto& v : p.value.data) v = 0.0;
    Tensor logits = forward(spec, ps, random_batch(spec, 3, 5));
    for (double v : logits.data) EXPECT_DOUBLE_EQ(v, 0.0);
    Tensor probs = softmax(logits);
    for (double v : probs.data) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(ModelForward, OutputShapes) {
    for (const ModelSpec& spec :
         {ModelSpec::mlp({64, 32, 5}, 1, 8, 8), ModelSpec::small_conv(1, 8, 8, 5)}) {
        ParamSet ps = init(spec, 11);
        Tensor logits = forward(spec, ps, random_batch(spec, 6, 2));
        EXPECT_EQ(logits.shape, (Shape{6, 5}));
    }
}

TEST(ModelForward, RecordingDoesNotChangeLogits) {
    for (const ModelSpec& spec :
         {ModelSpec::mlp({64, 32, 5}, 1, 8, 8), ModelSpec::small_conv(1, 8, 8, 5)}) {
        ParamSet ps = init(spec, 13);
        Tensor batch = random_batch(spec, 4, 3);
        Tensor plain = forward(spec, ps, batch);
        Tape tape;
        std::vector<int> nodes;
        Tensor taped = forward(spec, ps, batch, &tape, &nodes);
        EXPECT_EQ(plain.data, taped.data);
        Tensor again = forward(spec, ps, batch);
        EXPECT_EQ(plain.data, again.data); // pure function of (params, batch)
    }
}

TEST(ModelForward, BatchShapeMismatchRejected) {
    const ModelSpec spec = ModelSpec::small_conv(1, 8, 8, 5);
    ParamSet ps = init(spec, 1);
    EXPECT_THROW(forward(spec, ps, Tensor::zeros({2, 1, 6, 8})), dimension_error);
}

TEST(ParamSet, FlattenUnflattenRoundTripIsBitwise) {
    const ModelSpec spec = ModelSpec::small_conv(1, 8, 8, 10);
    ParamSet ps = init(spec, 21);
    const std::vector<double> flat = ps.flatten();
    ParamSet other = init(spec, 22);
    other.unflatten(flat);
    for (std::size_t i = 0; i < ps.params.size(); ++i)
        EXPECT_EQ(ps.params[i].value.data, other.params[i].value.data);
    EXPECT_THROW(other.unflatten(std::vector<double>(3)), dimension_error);
}

TEST(ModelGrad, ThetaGradientsPassGradCheckBothArchitectures) {
    for (const ModelSpec& spec :
         {ModelSpec::mlp({16, 10, 4}, 1, 4, 4), ModelSpec::small_conv(1, 8, 8, 4)}) {
        ParamSet ps = init(spec, 31);
        Tensor batch = random_batch(spec, 4, 17);
        std::vector<int> labels{0, 1, 2, 3};
        Tensor targets = one_hot(labels, spec.num_classes);

        Tape tape;
        std::vector<int> nodes;
        Tensor logits = forward(spec, ps, batch, &tape, &nodes);
        Tensor loss = soft_cross_entropy(logits, targets, &tape);
        tape.backward(loss);

        std::vector<double> analytic;
        for (int node : nodes) {
            const Tensor g = tape.grad(node);
            analytic.insert(analytic.end(), g.data.begin(), g.data.end());
        }
        auto f = [&](const std::vector<double>& flat) {
            ParamSet probe = ps;
            probe.unflatten(flat);
            return soft_cross_entropy(forward(spec, probe, batch), targets).item();
        };
        const auto report = grad_check(f, ps.flatten(), analytic, 1e-5, 1e-4);
        EXPECT_TRUE(report.pass) << "max rel err " << report.max_rel_error;
    }
}
