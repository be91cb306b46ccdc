#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "adr/grad_check.hpp"
#include "adr/ops.hpp"
#include "adr/rng.hpp"
#include "adr/schedule.hpp"
#include "adr/tensor.hpp"

using namespace adr;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

double entropy_of(const Tensor& probs, std::int64_t row) {
    double h = 0.0;
    for (std::int64_t j = 0; j < probs.shape[1]; ++j) {
        const double p = probs(row, j);
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

// Finite-difference check of d(scalar)/d(x) where the scalar is built by
// `make_loss` from a tensor with the given shape.
void expect_grad(const Shape& x_shape,
                 const std::function<Tensor(const Tensor&, Tape*)>& make_loss, Rng& rng,
                 double lo = -1.0, double hi = 1.0, double tol = 1e-4) {
    Tensor x = random_tensor(x_shape, rng, lo, hi);
    Tape tape;
    Tensor xt = tape.watch(x);
    Tensor loss = make_loss(xt, &tape);
    tape.backward(loss);
    const Tensor analytic = tape.grad(xt);
    auto f = [&](const std::vector<double>& point) {
        Tensor xp(x.shape, point);
        return make_loss(xp, nullptr).item();
    };
    const auto report = grad_check(f, x.data, analytic.data, 1e-5, tol);
    EXPECT_TRUE(report.pass) << "max rel error " << report.max_rel_error << " at coordinate "
                             << report.worst_coordinate;
}

Tensor fixed_weights(const Shape& shape, std::uint64_t salt) {
    Rng rng = Rng::substream(123, "weights", salt);
    Tensor w = Tensor::zeros(shape);
    for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
    return w;
}

} // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TEST(Matmul, IdentityAndHandValues) {
    Rng rng(1);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    Tensor out = matmul(a, eye);
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_DOUBLE_EQ(out.data[i], a.data[i]);

    Tensor b({2, 2}, {1, 2, 3, 4});
    Tensor c({2, 1}, {0, 1});
    Tensor r = matmul(b, c);
    EXPECT_DOUBLE_EQ(r(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(r(1, 0), 4.0);

    Tensor zero = Tensor::zeros({2, 2});
    Tensor rz = matmul(zero, b);
    for (double v : rz.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 2});
    try {
        matmul(a, b);
        FAIL() << "expected dimension_error";
    } catch (const dimension_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_NE(msg.find("[2x2]"), std::string::npos);
    }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
    Rng rng(2);
    const Tensor w = fixed_weights({2, 4}, 0);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor other = random_tensor({3, 4}, rng);
        expect_grad({2, 3}, [&](const Tensor& x, Tape* tape) {
            return weighted_sum(matmul(x, other, tape), w, tape);
        }, rng);
    }
    const Tensor w2 = fixed_weights({3, 2}, 1);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor other = random_tensor({3, 4}, rng);
        expect_grad({4, 2}, [&](const Tensor& x, Tape* tape) {
            return weighted_sum(matmul(other, x, tape), w2, tape);
        }, rng);
    }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

TEST(Conv2d, OneByOneKernelIsIdentity) {
    Rng rng(3);
    Tensor x = random_tensor({1, 1, 3, 3}, rng);
    Tensor k({1, 1, 1, 1}, {1.0});
    Tensor out = conv2d(x, k, 1, 0);
    EXPECT_EQ(out.shape, (Shape{1, 1, 3, 3}));
    for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_DOUBLE_EQ(out.data[i], x.data[i]);
}

TEST(Conv2d, AllOnesWindowSums) {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor out = conv2d(x, k, 1, 0);
    EXPECT_EQ(out.shape, (Shape{1, 1, 2, 2}));
    for (double v : out.data) EXPECT_DOUBLE_EQ(v, 4.0);
}

TEST(Conv2d, NonIntegralExtentRejected) {
    Tensor x = Tensor::zeros({1, 1, 5, 5});
    Tensor k = Tensor::zeros({1, 1, 2, 2});
    EXPECT_THROW(conv2d(x, k, 2, 0), config_error);
}

TEST(Conv2d, KernelGradientOfOutputSumEqualsWindowSums) {
    // d(sum of outputs)/d(kernel entry) = sum of the input window it touches.
    Rng rng(4);
    Tensor x = random_tensor({1, 1, 4, 4}, rng);
    Tensor k = random_tensor({1, 1, 2, 2}, rng);
    Tape tape;
    Tensor kt = tape.watch(k);
    Tensor out = conv2d(x, kt, 1, 0, &tape);
    Tensor loss = weighted_sum(out, Tensor::full(out.shape, 1.0), &tape);
    tape.backward(loss);
    Tensor gk = tape.grad(kt);
    for (int ki = 0; ki < 2; ++ki)
        for (int kj = 0; kj < 2; ++kj) {
            double expect = 0.0;
            for (int oh = 0; oh < 3; ++oh)
                for (int ow = 0; ow < 3; ++ow) expect += x.data[(oh + ki) * 4 + (ow + kj)];
            EXPECT_NEAR(gk.data[ki * 2 + kj], expect, 1e-12);
        }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        const std::int64_t stride = 1 + (rep % 2);
        const std::int64_t pad = rep % 2;
        Tensor kernels = random_tensor({2, 2, 3, 3}, rng);
        const Shape in_shape{2, 2, 5 + (rep % 2) * 2, 5 + (rep % 2) * 2};
        const auto geom_ok = [&] {
            const std::int64_t h = in_shape[2];
            return (h + 2 * pad - 3) % stride == 0;
        }();
        if (!geom_ok) continue;
        Tensor probe = conv2d(random_tensor(in_shape, rng), kernels, stride, pad);
        const Tensor w = fixed_weights(probe.shape, static_cast<std::uint64_t>(rep));
        expect_grad(in_shape, [&](const Tensor& x, Tape* tape) {
            return weighted_sum(conv2d(x, kernels, stride, pad, tape), w, tape);
        }, rng);
        Tensor x = random_tensor(in_shape, rng);
        expect_grad({2, 2, 3, 3}, [&](const Tensor& k, Tape* tape) {
            return weighted_sum(conv2d(x, k, stride, pad, tape), w, tape);
        }, rng);
    }
}

// ---------------------------------------------------------------------------
// relu / maxpool / flatten / add_bias
// ---------------------------------------------------------------------------

TEST(Relu, HandValues) {
    Tensor x({1, 2}, {-1.0, 2.0});
    Tensor out = relu(x);
    EXPECT_DOUBLE_EQ(out.data[0], 0.0);
    EXPECT_DOUBLE_EQ(out.data[1], 2.0);
}

TEST(Maxpool, HandValueAndOddExtentRejected) {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor out = maxpool2d(x);
    EXPECT_EQ(out.shape, (Shape{1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(out.data[0], 4.0);
    EXPECT_THROW(maxpool2d(Tensor::zeros({1, 1, 3, 4})), config_error);
}

TEST(Maxpool, BackwardRoutesOnlyToMax) {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    Tape tape;
    Tensor xt = tape.watch(x);
    Tensor out = maxpool2d(xt, &tape);
    Tensor loss = weighted_sum(out, Tensor::full(out.shape, 1.0), &tape);
    tape.backward(loss);
    Tensor gx = tape.grad(xt);
    EXPECT_DOUBLE_EQ(gx.data[0], 0.0);
    EXPECT_DOUBLE_EQ(gx.data[1], 0.0);
    EXPECT_DOUBLE_EQ(gx.data[2], 0.0);
    EXPECT_DOUBLE_EQ(gx.data[3], 1.0);
}

TEST(EltwiseOps, GradientsMatchFiniteDifferences) {
    Rng rng(6);
    const Tensor w_flat = fixed_weights({2, 8}, 2);
    const Tensor w_pool = fixed_weights({2, 1, 1, 2}, 3);
    const Tensor w_bias = fixed_weights({2, 3, 2, 2}, 4);
    for (int rep = 0; rep < 100; ++rep) {
        // relu: keep inputs away from the kink at 0
        {
            Tensor probe = random_tensor({2, 4}, rng);
            for (auto& v : probe.data)
                if (std::abs(v) < 1e-3) v = 1e-3;
            Tape tape;
            Tensor xt = tape.watch(probe);
            Tensor loss = weighted_sum(relu(xt, &tape), fixed_weights({2, 4}, 5), &tape);
            tape.backward(loss);
            auto f = [&](const std::vector<double>& p) {
                Tensor xp(probe.shape, p);
                return weighted_sum(relu(xp), fixed_weights({2, 4}, 5)).item();
            };
            const auto rep2 = grad_check(f, probe.data, tape.grad(xt).data, 1e-5, 1e-4);
            EXPECT_TRUE(rep2.pass);
        }
        expect_grad({2, 2, 2, 2}, [&](const Tensor& x, Tape* tape) {
            return weighted_sum(flatten(x, tape), w_flat, tape);
        }, rng);
        // maxpool: reject near-ties so the max is stable under the FD step
        {
            Tensor x = random_tensor({2, 1, 2, 4}, rng);
            bool ok = true;
            for (int win = 0; win < 4 && ok; ++win) {
                double vals[4];
                const int n = win / 2, ow = win % 2;
                for (int d = 0; d < 4; ++d)
                    vals[d] = x.data[n * 8 + (d / 2) * 4 + ow * 2 + (d % 2)];
                for (int a = 0; a < 4; ++a)
                    for (int b = a + 1; b < 4; ++b)
                        if (std::abs(vals[a] - vals[b]) < 1e-3) ok = false;
            }
            if (ok)
                expect_grad({2, 1, 2, 4}, [&](const Tensor& x2, Tape* tape) {
                    return weighted_sum(maxpool2d(x2, tape), w_pool, tape);
                }, rng);
        }
        Tensor bias = random_tensor({3}, rng);
        expect_grad({2, 3, 2, 2}, [&](const Tensor& x, Tape* tape) {
            return weighted_sum(add_bias(x, bias, tape), w_bias, tape);
        }, rng);
        Tensor xb = random_tensor({2, 3, 2, 2}, rng);
        expect_grad({3}, [&](const Tensor& b, Tape* tape) {
            return weighted_sum(add_bias(xb, b, tape), w_bias, tape);
        }, rng);
    }
}

// ---------------------------------------------------------------------------
// softmax_t
// ---------------------------------------------------------------------------

TEST(SoftmaxT, UniformOnEqualLogits) {
    Tensor z = Tensor::full({2, 5}, 3.7);
    for (double tau : {0.5, 1.0, 2.5}) {
        Tensor p = softmax_t(z, tau);
        for (double v : p.data) EXPECT_NEAR(v, 0.2, 1e-12);
    }
}

TEST(SoftmaxT, ClosedFormTwoClasses) {
    Tensor z({1, 2}, {2.0, 0.0});
    Tensor p = softmax_t(z, 2.0);
    const double e = std::exp(1.0);
    EXPECT_NEAR(p(0, 0), e / (e + 1.0), 1e-12);
    EXPECT_NEAR(p(0, 1), 1.0 / (e + 1.0), 1e-12);
    EXPECT_NEAR(p(0, 0), 0.7311, 5e-5);
    EXPECT_NEAR(p(0, 1), 0.2689, 5e-5);
}

TEST(SoftmaxT, RecipeStartTemperature) {
    // CIFAR-10 recipe default: tau starts at 2.5
    adr::AnnealSpec tau{2.5, 2.0, 10, adr::ScheduleUnit::PerEpoch};
    Rng rng(7);
    Tensor z = random_tensor({4, 10}, rng);
    Tensor p = softmax_t(z, tau.start);
    for (std::int64_t r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (std::int64_t c = 0; c < 10; ++c) sum += p(r, c);
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(SoftmaxT, InvalidTemperatureRejected) {
    Tensor z = Tensor::zeros({1, 3});
    EXPECT_THROW(softmax_t(z, 0.0), parameter_error);
    EXPECT_THROW(softmax_t(z, -1.0), parameter_error);
}

TEST(SoftmaxT, RowsSumToOneAndEntriesInUnitInterval) {
    Rng rng(8);
    // wide logit range: row normalization must survive max subtraction
    for (int rep = 0; rep < 200; ++rep) {
        Tensor z = random_tensor({3, 7}, rng, -30.0, 30.0);
        Tensor p = softmax_t(z, rng.uniform(0.1, 5.0));
        for (std::int64_t r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (std::int64_t c = 0; c < 7; ++c) sum += p(r, c);
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
    // moderate gaps: entries stay strictly inside (0, 1) in double precision
    for (int rep = 0; rep < 200; ++rep) {
        Tensor z = random_tensor({3, 7}, rng, -8.0, 8.0);
        Tensor p = softmax_t(z, rng.uniform(0.5, 5.0));
        for (double v : p.data) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(SoftmaxT, EntropyIncreasesWithTemperature) {
    Rng rng(9);
    for (int rep = 0; rep < 200; ++rep) {
        Tensor z = random_tensor({1, 6}, rng, -3.0, 3.0);
        const double t1 = rng.uniform(0.2, 3.0);
        const double t2 = t1 + rng.uniform(0.1, 3.0);
        const double h1 = entropy_of(softmax_t(z, t1), 0);
        const double h2 = entropy_of(softmax_t(z, t2), 0);
        EXPECT_GE(h2, h1 - 1e-12);
    }
}

TEST(SoftmaxT, GradientMatchesFiniteDifferences) {
    Rng rng(10);
    const Tensor w = fixed_weights({2, 5}, 6);
    for (int rep = 0; rep < 100; ++rep) {
        const double tau = rng.uniform(0.5, 3.0);
        expect_grad({2, 5}, [&](const Tensor& z, Tape* tape) {
            return weighted_sum(softmax_t(z, tau, tape), w, tape);
        }, rng, -2.0, 2.0);
    }
}

// ---------------------------------------------------------------------------
// soft_cross_entropy
// ---------------------------------------------------------------------------

TEST(SoftCrossEntropy, UniformLogitsOneHotTarget) {
    Tensor z = Tensor::zeros({1, 10});
    Tensor t = one_hot({3}, 10);
    EXPECT_NEAR(soft_cross_entropy(z, t).item(), std::log(10.0), 1e-12);
}

TEST(SoftCrossEntropy, SelfTargetGivesEntropy) {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor z = random_tensor({3, 6}, rng, -2.0, 2.0);
        Tensor p = softmax(z);
        double mean_entropy = 0.0;
        for (std::int64_t r = 0; r < 3; ++r) mean_entropy += entropy_of(p, r);
        mean_entropy /= 3.0;
        EXPECT_NEAR(soft_cross_entropy(z, p).item(), mean_entropy, 1e-9);
    }
}

TEST(SoftCrossEntropy, HandValueOnZeroLogits) {
    Tensor z = Tensor::zeros({1, 3});
    Tensor t({1, 3}, {0.65, 0.25, 0.10});
    EXPECT_NEAR(soft_cross_entropy(z, t).item(), std::log(3.0), 1e-12);
}

TEST(SoftCrossEntropy, NegativeTargetRejected) {
    Tensor z = Tensor::zeros({1, 3});
    Tensor t({1, 3}, {1.2, -0.2, 0.0});
    EXPECT_THROW(soft_cross_entropy(z, t), parameter_error);
}

TEST(SoftCrossEntropy, GradientMatchesFiniteDifferences) {
    Rng rng(12);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor raw = random_tensor({3, 5}, rng, 0.05, 1.0);
        for (std::int64_t r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (std::int64_t c = 0; c < 5; ++c) sum += raw(r, c);
            for (std::int64_t c = 0; c < 5; ++c) raw(r, c) /= sum;
        }
        expect_grad({3, 5}, [&](const Tensor& z, Tape* tape) {
            return soft_cross_entropy(z, raw, tape);
        }, rng, -2.0, 2.0);
    }
}

// ---------------------------------------------------------------------------
// kl_divergence
// ---------------------------------------------------------------------------

TEST(KlDivergence, IdenticalLogitsGiveZero) {
    Rng rng(13);
    Tensor z = random_tensor({4, 6}, rng);
    EXPECT_NEAR(kl_divergence(z, z).item(), 0.0, 1e-12);
}

TEST(KlDivergence, NonNegativeOnRandomPairs) {
    Rng rng(14);
    for (int rep = 0; rep < 1000; ++rep) {
        Tensor p = random_tensor({2, 4}, rng, -4.0, 4.0);
        Tensor q = random_tensor({2, 4}, rng, -4.0, 4.0);
        EXPECT_GE(kl_divergence(p, q).item(), -1e-12);
    }
}

TEST(KlDivergence, ClosedFormTwoClasses) {
    // clean distribution q = softmax([ln 2, 0]) = [2/3, 1/3], adversarial p uniform
    Tensor q_logits({1, 2}, {std::log(2.0), 0.0});
    Tensor p_logits = Tensor::zeros({1, 2});
    const double expected =
        (2.0 / 3.0) * std::log((2.0 / 3.0) / 0.5) + (1.0 / 3.0) * std::log((1.0 / 3.0) / 0.5);
    EXPECT_NEAR(kl_divergence(p_logits, q_logits).item(), expected, 1e-12);
}

TEST(KlDivergence, GradientsMatchFiniteDifferences) {
    Rng rng(15);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor other = random_tensor({2, 4}, rng, -2.0, 2.0);
        expect_grad({2, 4}, [&](const Tensor& p, Tape* tape) {
            return kl_divergence(p, other, tape);
        }, rng, -2.0, 2.0);
        expect_grad({2, 4}, [&](const Tensor& q, Tape* tape) {
            return kl_divergence(other, q, tape);
        }, rng, -2.0, 2.0);
    }
}

// ---------------------------------------------------------------------------
// tape / backward / grad_check
// ---------------------------------------------------------------------------

TEST(Backward, SquareAtThree) {
    Tensor x = Tensor::full({1, 1}, 3.0);
    Tape tape;
    Tensor xt = tape.watch(x);
    Tensor y = matmul(xt, xt, &tape); // x^2 as a 1x1 product of the same leaf
    tape.backward(y);
    EXPECT_DOUBLE_EQ(tape.grad(xt).data[0], 6.0);
}

TEST(Backward, DisconnectedLeafGetsZeros) {
    Tensor x = Tensor::full({2, 2}, 1.0);
    Tape tape;
    Tensor used = tape.watch(x);
    Tensor unused = tape.watch(x);
    Tensor loss = weighted_sum(used, Tensor::full({2, 2}, 1.0), &tape);
    tape.backward(loss);
    for (double v : tape.grad(unused).data) EXPECT_DOUBLE_EQ(v, 0.0);
    for (double v : tape.grad(used).data) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Backward, NonScalarOutputRejected) {
    Tensor x = Tensor::full({2, 2}, 1.0);
    Tape tape;
    Tensor xt = tape.watch(x);
    Tensor y = relu(xt, &tape);
    EXPECT_THROW(tape.backward(y), usage_error);
    Tensor untracked = Tensor::scalar(1.0);
    EXPECT_THROW(tape.backward(untracked), usage_error);
}

TEST(GradCheck, LinearFunctionExact) {
    std::vector<double> point{0.3, -0.7, 1.1};
    std::vector<double> coeffs{2.0, -1.0, 0.5};
    auto f = [&](const std::vector<double>& p) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += coeffs[i] * p[i];
        return s;
    };
    const auto report = grad_check(f, point, coeffs, 1e-5, 1e-10);
    EXPECT_TRUE(report.pass);
}

TEST(GradCheck, SoftmaxCrossEntropyCompositePasses) {
    Rng rng(16);
    Tensor target({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25});
    Tensor z = random_tensor({2, 4}, rng, -1.0, 1.0);
    Tape tape;
    Tensor zt = tape.watch(z);
    Tensor p = softmax_t(zt, 1.7, &tape);
    Tensor loss = weighted_sum(p, fixed_weights({2, 4}, 7), &tape);
    tape.backward(loss);
    auto f = [&](const std::vector<double>& pt) {
        Tensor zp(z.shape, pt);
        return weighted_sum(softmax_t(zp, 1.7), fixed_weights({2, 4}, 7)).item();
    };
    EXPECT_TRUE(grad_check(f, z.data, tape.grad(zt).data, 1e-5, 1e-4).pass);
}

TEST(GradCheck, CorruptedBackwardRuleFails) {
    Rng rng(17);
    Tensor z = random_tensor({2, 4}, rng, -1.0, 1.0);
    Tensor target = softmax(random_tensor({2, 4}, rng));
    Tape tape;
    Tensor zt = tape.watch(z);
    tape.backward(soft_cross_entropy(zt, target, &tape));
    std::vector<double> corrupted = tape.grad(zt).data;
    for (auto& v : corrupted) v *= 1.5;
    auto f = [&](const std::vector<double>& pt) {
        Tensor zp(z.shape, pt);
        return soft_cross_entropy(zp, target).item();
    };
    EXPECT_FALSE(grad_check(f, z.data, corrupted, 1e-5, 1e-4).pass);
}

TEST(Tensor, ShapeDataMismatchRejected) {
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), dimension_error);
}
