#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "ccvit/common/error.hpp"
#include "ccvit/numerics/grad_check.hpp"
#include "ccvit/numerics/ops.hpp"
#include "helpers.hpp"

namespace ccvit {
namespace {

using numerics::GradCheckOptions;
using numerics::Parameter;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using testing::random_tensor;

Parameter<double> param(std::string name, Shape shape, std::uint64_t seed, double scale = 1.0) {
    Parameter<double> p;
    p.name = std::move(name);
    p.value = random_tensor<double>(std::move(shape), seed, scale);
    p.zero_grad();
    return p;
}

// Weighted sum so every output element gets a distinct upstream gradient.
Var<double> probe(Var<double> v, std::uint64_t seed) {
    auto& tape = v.tape();
    auto w = tape.constant(random_tensor<double>(v.shape(), seed));
    return numerics::sum(numerics::mul(v, w));
}

double check(const numerics::ScalarFunction& f, std::vector<Parameter<double>*> params, std::size_t samples = 60) {
    GradCheckOptions o;
    o.samples = samples;
    o.min_per_parameter = 3;
    const auto r = numerics::grad_check(f, params, o);
    EXPECT_GE(r.coordinates, std::min<std::size_t>(samples, 1));
    return r.max_rel_error;
}

TEST(Tensor, ShapeAndIndexing) {
    auto m = Tensor<float>::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m.at(1, 2), 6.0f);
    EXPECT_EQ(numerics::shape_string(m.shape()), "[2x3]");
    EXPECT_THROW(m.reshaped({4, 2}), ShapeError);
    EXPECT_EQ(m.reshaped({3, 2}).at(2, 1), 6.0f);
    EXPECT_TRUE(m.all_finite());
    m[0] = std::numeric_limits<float>::infinity();
    EXPECT_FALSE(m.all_finite());
}

TEST(Ops, MatmulMatchesNaiveProduct) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const std::size_t m = 3 + seed, k = 5 + 2 * seed, p = 4 + seed;
        Tape<double> tape;
        auto a = tape.constant(random_tensor<double>({m, k}, seed));
        auto b = tape.constant(random_tensor<double>({k, p}, seed + 100));
        auto c = numerics::matmul(a, b);
        ASSERT_EQ(c.shape(), (Shape{m, p}));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < k; ++t) s += a.value().at(i, t) * b.value().at(t, j);
                EXPECT_NEAR(c.value().at(i, j), s, 1e-12);
            }
    }
}

TEST(Ops, MatmulRejectsMismatchedInnerDimension) {
    Tape<double> tape;
    auto a = tape.constant(Tensor<double>({2, 3}));
    auto b = tape.constant(Tensor<double>({4, 2}));
    EXPECT_THROW(numerics::matmul(a, b), ShapeError);
}

TEST(Ops, SoftmaxRowsSumToOne) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tape<double> tape;
        auto x = tape.constant(random_tensor<double>({4, 7}, seed, 30.0));
        auto y = numerics::softmax(x);
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 7; ++c) {
                EXPECT_GE(y.value().at(r, c), 0.0);
                s += y.value().at(r, c);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Ops, SoftmaxAlongLeadingAxis) {
    Tape<double> tape;
    auto x = tape.constant(random_tensor<double>({3, 2, 4}, 9));
    auto y = numerics::softmax(x, 0);
    for (std::size_t j = 0; j < 8; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s += y.value()[i * 8 + j];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Ops, LayerNormMatchesDirectFormula) {
    Tape<double> tape;
    const auto xv = random_tensor<double>({3, 6}, 4, 2.0);
    const auto gv = random_tensor<double>({6}, 5);
    const auto bv = random_tensor<double>({6}, 6);
    auto y = numerics::layer_norm(tape.constant(xv), tape.constant(gv), tape.constant(bv), 1e-6);
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < 6; ++c) mean += xv.at(r, c) / 6.0;
        for (std::size_t c = 0; c < 6; ++c) var += (xv.at(r, c) - mean) * (xv.at(r, c) - mean) / 6.0;
        for (std::size_t c = 0; c < 6; ++c)
            EXPECT_NEAR(y.value().at(r, c), (xv.at(r, c) - mean) / std::sqrt(var + 1e-6) * gv[c] + bv[c], 1e-12);
    }
}

TEST(Ops, LayerNormMapsConstantRowsToBeta) {
    Tape<double> tape;
    auto x = tape.constant(Tensor<double>({2, 5}, 3.25));
    auto g = tape.constant(random_tensor<double>({5}, 1));
    auto b = tape.constant(random_tensor<double>({5}, 2));
    auto y = numerics::layer_norm(x, g, b);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(y.value()[i], b.value()[i % 5]);
}

TEST(Ops, GeluIsExactErfForm) {
    Tape<double> tape;
    auto x = tape.constant(Tensor<double>::matrix(1, 5, {-3.0, -0.5, 0.0, 0.7, 4.0}));
    auto y = numerics::gelu(x);
    for (std::size_t i = 0; i < 5; ++i) {
        const double v = x.value()[i];
        EXPECT_NEAR(y.value()[i], 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)), 1e-15);
    }
}

TEST(Ops, CrossEntropyOfUniformLogitsIsLogK) {
    for (std::size_t k : {2u, 7u, 512u}) {
        Tape<double> tape;
        auto logits = tape.constant(Tensor<double>({3, k}, 0.37));
        std::vector<std::size_t> targets{0, k - 1, k / 2};
        auto ce = numerics::cross_entropy(logits, targets);
        EXPECT_NEAR(ce.value()[0], std::log(static_cast<double>(k)), 1e-12);
    }
}

TEST(Ops, CrossEntropyMatchesLogSumExp) {
    Tape<double> tape;
    const auto lv = random_tensor<double>({4, 9}, 3, 5.0);
    std::vector<std::size_t> targets{1, 8, 0, 4};
    auto ce = numerics::cross_entropy(tape.constant(lv), targets);
    double expected = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
        double lse = 0.0;
        for (std::size_t c = 0; c < 9; ++c) lse += std::exp(lv.at(r, c));
        expected += (std::log(lse) - lv.at(r, targets[r])) / 4.0;
    }
    EXPECT_NEAR(ce.value()[0], expected, 1e-12);
}

TEST(Ops, CrossEntropyRejectsOutOfRangeTarget) {
    Tape<double> tape;
    auto logits = tape.constant(Tensor<double>({1, 3}));
    std::vector<std::size_t> targets{3};
    EXPECT_THROW(numerics::cross_entropy(logits, targets), InvalidArgument);
}

TEST(Ops, MseIsMeanSquaredDifference) {
    Tape<double> tape;
    auto a = tape.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
    auto b = tape.constant(Tensor<double>::matrix(2, 2, {1, 0, 3, 7}));
    EXPECT_DOUBLE_EQ(numerics::mse(a, b).value()[0], (4.0 + 9.0) / 4.0);
    EXPECT_DOUBLE_EQ(numerics::mse(a, a).value()[0], 0.0);
}

TEST(Ops, GatherRowsPicksRequestedRows) {
    Tape<double> tape;
    auto a = tape.constant(Tensor<double>::matrix(1, 2, {1, 2}));
    auto b = tape.constant(Tensor<double>::matrix(2, 2, {3, 4, 5, 6}));
    std::vector<numerics::RowRef> rows{{1, 1}, {0, 0}, {1, 0}, {1, 1}};
    auto g = numerics::gather_rows<double>({a, b}, rows);
    EXPECT_EQ(g.value(), (Tensor<double>::matrix(4, 2, {5, 6, 1, 2, 3, 4, 5, 6})));
}

TEST(Ops, NonFiniteResultThrows) {
    Tape<double> tape;
    auto a = tape.constant(Tensor<double>::matrix(1, 1, {std::numeric_limits<double>::max()}));
    EXPECT_THROW(numerics::scale(a, 10.0), NumericError);
}

TEST(Ops, AttentionMatchesNaiveMultiHeadAttention) {
    const std::size_t seqs = 2, len = 4, heads = 2, d = 6, hd = d / heads;
    Tape<double> tape;
    const auto qkv_v = random_tensor<double>({seqs * len, 3 * d}, 11);
    const auto bias_v = random_tensor<double>({heads, len, len}, 12);
    Tensor<double> probs;
    auto out = numerics::attention(tape.constant(qkv_v), tape.constant(bias_v), seqs, heads, &probs);
    ASSERT_EQ(out.shape(), (Shape{seqs * len, d}));
    for (std::size_t s = 0; s < seqs; ++s)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < len; ++i) {
                std::vector<double> logit(len);
                double mx = -1e300;
                for (std::size_t j = 0; j < len; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < hd; ++c)
                        dot += qkv_v.at(s * len + i, h * hd + c) * qkv_v.at(s * len + j, d + h * hd + c);
                    logit[j] = dot / std::sqrt(static_cast<double>(hd)) + bias_v[(h * len + i) * len + j];
                    mx = std::max(mx, logit[j]);
                }
                double z = 0.0;
                for (auto& l : logit) z += (l = std::exp(l - mx));
                double row_sum = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    EXPECT_NEAR(probs[((s * heads + h) * len + i) * len + j], logit[j] / z, 1e-12);
                    row_sum += probs[((s * heads + h) * len + i) * len + j];
                }
                EXPECT_NEAR(row_sum, 1.0, 1e-12);
                for (std::size_t c = 0; c < hd; ++c) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < len; ++j) v += logit[j] / z * qkv_v.at(s * len + j, 2 * d + h * hd + c);
                    EXPECT_NEAR(out.value().at(s * len + i, h * hd + c), v, 1e-12);
                }
            }
}

TEST(GradCheck, RecoversKnownGradient) {
    auto x = param("x", {3, 4}, 1);
    auto f = [&](Tape<double>& t) {
        auto v = t.parameter(x);
        return numerics::sum(numerics::mul(v, v));
    };
    EXPECT_LT(check(f, {&x}), 1e-7);
    Tape<double> tape;
    x.zero_grad();
    tape.backward(f(tape));
    for (std::size_t i = 0; i < x.value.size(); ++i) EXPECT_NEAR(x.grad[i], 2.0 * x.value[i], 1e-12);
}

TEST(GradCheck, DetectsWrongGradient) {
    auto x = param("x", {5}, 2);
    // A deliberately wrong backward: reports d/dx as 3x instead of 2x.
    auto f = [&](Tape<double>& t) {
        auto v = t.parameter(x);
        Tensor<double> out({1});
        for (auto e : x.value.data()) out[0] += e * e;
        return t.record("bad_square", std::move(out), {v}, [v](Tape<double>& tp, std::size_t self) {
            auto& g = tp.grad(v.id());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * v.value()[i] * tp.grad(self)[0];
        });
    };
    EXPECT_GT(check(f, {&x}), 0.1);
}

TEST(GradCheck, RejectsStepOutsideRange) {
    auto x = param("x", {2}, 3);
    GradCheckOptions o;
    o.eps = 1e-2;
    auto f = [&](Tape<double>& t) { return numerics::sum(t.parameter(x)); };
    EXPECT_THROW(numerics::grad_check(f, {&x}, o), InvalidArgument);
}

TEST(Gradients, LinearMatmulAddScaleTranspose) {
    auto x = param("x", {3, 4}, 1), w = param("w", {4, 5}, 2), b = param("b", {5}, 3), m = param("m", {5, 3}, 4);
    auto f = [&](Tape<double>& t) {
        auto y = numerics::linear(t.parameter(x), t.parameter(w), t.parameter(b));
        auto z = numerics::matmul(y, t.parameter(m));
        auto xv = t.parameter(x);
        z = numerics::add(z, numerics::scale(numerics::matmul(xv, numerics::transpose(xv)), 0.5));
        return probe(numerics::reshape(z, {9}), 7);
    };
    EXPECT_LT(check(f, {&x, &w, &b, &m}), 1e-6);
}

TEST(Gradients, SoftmaxLayerNormGelu) {
    auto x = param("x", {3, 6}, 1), g = param("g", {6}, 2), b = param("b", {6}, 3);
    auto f = [&](Tape<double>& t) {
        auto y = numerics::layer_norm(t.parameter(x), t.parameter(g), t.parameter(b));
        y = numerics::gelu(y);
        return probe(numerics::softmax(y), 4);
    };
    EXPECT_LT(check(f, {&x, &g, &b}), 1e-6);
}

TEST(Gradients, SoftmaxOverLeadingAxis) {
    auto x = param("x", {3, 2, 2}, 5);
    auto f = [&](Tape<double>& t) { return probe(numerics::softmax(t.parameter(x), 0), 6); };
    EXPECT_LT(check(f, {&x}), 1e-6);
}

TEST(Gradients, CrossEntropyAndMse) {
    auto logits = param("logits", {4, 5}, 1), pred = param("pred", {4, 3}, 2);
    std::vector<std::size_t> targets{0, 4, 2, 2};
    auto target = random_tensor<double>({4, 3}, 3);
    auto f = [&](Tape<double>& t) {
        auto ce = numerics::cross_entropy(t.parameter(logits), targets);
        return numerics::add(ce, numerics::mse(t.parameter(pred), t.constant(target)));
    };
    EXPECT_LT(check(f, {&logits, &pred}), 1e-6);
}

TEST(Gradients, GatherAndGatherRows) {
    auto a = param("a", {2, 3}, 1), b = param("b", {3, 3}, 2);
    std::vector<numerics::RowRef> rows{{1, 2}, {0, 0}, {1, 2}, {0, 1}};
    std::vector<std::size_t> index{0, 5, 5, 3, 1, 0};
    auto f = [&](Tape<double>& t) {
        auto g = numerics::gather_rows<double>({t.parameter(a), t.parameter(b)}, rows);
        auto h = numerics::gather(t.parameter(a), index, {2, 3});
        return numerics::add(probe(g, 3), probe(h, 4));
    };
    EXPECT_LT(check(f, {&a, &b}), 1e-6);
}

TEST(Gradients, AttentionWithBias) {
    auto qkv = param("qkv", {2 * 5, 3 * 4}, 1), bias = param("bias", {2, 5, 5}, 2);
    auto f = [&](Tape<double>& t) { return probe(numerics::attention(t.parameter(qkv), t.parameter(bias), 2, 2), 3); };
    EXPECT_LT(check(f, {&qkv, &bias}, 120), 1e-6);
}

// Every primitive at random shapes up to 8 per dimension, 100 seeds.
TEST(Gradients, RandomShapeSweep) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        auto dim = [&](std::size_t lo) { return std::uniform_int_distribution<std::size_t>(lo, 8)(rng); };
        const std::size_t r = dim(1), c = dim(2), k = dim(1);
        auto x = param("x", {r, c}, seed * 10 + 1), w = param("w", {c, k}, seed * 10 + 2);
        auto b = param("b", {k}, seed * 10 + 3), g = param("g", {c}, seed * 10 + 4), y = param("y", {r, c}, seed * 10 + 5);
        std::vector<std::size_t> targets(r);
        for (auto& t : targets) t = std::uniform_int_distribution<std::size_t>(0, c - 1)(rng);
        const auto target = random_tensor<double>({r, c}, seed * 10 + 6);
        std::vector<numerics::RowRef> rows(dim(1));
        for (auto& row : rows) {
            const std::uint32_t src = std::uniform_int_distribution<std::uint32_t>(0, 1)(rng);
            row = {src, static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, r - 1)(rng))};
        }
        std::vector<std::size_t> index(dim(1));
        for (auto& i : index) i = std::uniform_int_distribution<std::size_t>(0, r * c - 1)(rng);
        const std::vector<Parameter<double>*> ps{&x, &w, &b, &g, &y};

        const std::vector<numerics::ScalarFunction> fs{
            [&](Tape<double>& t) { return probe(numerics::matmul(t.parameter(x), t.parameter(w)), seed); },
            [&](Tape<double>& t) { return probe(numerics::linear(t.parameter(x), t.parameter(w), t.parameter(b)), seed); },
            [&](Tape<double>& t) { return probe(numerics::add(t.parameter(x), t.parameter(y)), seed); },
            [&](Tape<double>& t) { return probe(numerics::mul(t.parameter(x), t.parameter(y)), seed); },
            [&](Tape<double>& t) { return probe(numerics::scale(t.parameter(x), -1.7), seed); },
            [&](Tape<double>& t) { return numerics::sum(t.parameter(x)); },
            [&](Tape<double>& t) { return probe(numerics::transpose(t.parameter(x)), seed); },
            [&](Tape<double>& t) { return probe(numerics::reshape(t.parameter(x), {r * c}), seed); },
            [&](Tape<double>& t) { return probe(numerics::softmax(t.parameter(x)), seed); },
            [&](Tape<double>& t) { return probe(numerics::softmax(t.parameter(x), 0), seed); },
            [&](Tape<double>& t) {
                return probe(numerics::layer_norm(t.parameter(x), t.parameter(g), t.parameter(g)), seed);
            },
            [&](Tape<double>& t) { return probe(numerics::gelu(t.parameter(x)), seed); },
            [&](Tape<double>& t) { return numerics::cross_entropy(t.parameter(x), targets); },
            [&](Tape<double>& t) { return numerics::mse(t.parameter(x), t.constant(target)); },
            [&](Tape<double>& t) {
                return probe(numerics::gather_rows<double>({t.parameter(x), t.parameter(y)}, rows), seed);
            },
            [&](Tape<double>& t) { return probe(numerics::gather(t.parameter(x), index, {index.size()}), seed); },
        };
        for (std::size_t i = 0; i < fs.size(); ++i) {
            GradCheckOptions o;
            o.samples = 12;
            o.seed = seed;
            const auto res = numerics::grad_check(fs[i], ps, o);
            EXPECT_LT(res.max_rel_error, 1e-4) << "op " << i << " seed " << seed << " " << res.worst_parameter;
            worst = std::max(worst, res.max_rel_error);
        }

        const std::size_t heads = dim(1), hd = dim(1), len = dim(1), seqs = dim(1);
        auto qkv = param("qkv", {seqs * len, 3 * heads * hd}, seed * 10 + 7);
        auto bias = param("bias", {heads, len, len}, seed * 10 + 8);
        GradCheckOptions o;
        o.samples = 24;
        o.seed = seed;
        const auto res = numerics::grad_check(
            [&](Tape<double>& t) {
                return probe(numerics::attention(t.parameter(qkv), t.parameter(bias), seqs, heads), seed);
            },
            {&qkv, &bias}, o);
        EXPECT_LT(res.max_rel_error, 1e-4) << "attention seed " << seed;
    }
    RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Tape, ParameterGradientsAccumulateAcrossBackwardPasses) {
    auto x = param("x", {3}, 1);
    x.zero_grad();
    for (int pass = 0; pass < 2; ++pass) {
        Tape<double> tape;
        tape.backward(numerics::sum(tape.parameter(x)));
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad[i], 2.0);
}

} // namespace
} // namespace ccvit
