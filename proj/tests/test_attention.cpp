#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tkat/attention.hpp"
#include "tkat/rng.hpp"

using namespace tkat;

namespace {

Tensor rand2d(int64_t rows, int64_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::generate({rows, cols}, [&](int64_t) { return rng.uniform(lo, hi); });
}

}  // namespace

TEST_CASE("identical keys give uniform attention: output is the value column mean") {
    Rng rng(1);
    Tensor q = rand2d(5, 2, rng);
    Tensor k_row = rand2d(1, 2, rng);
    // 7 identical key rows
    std::vector<double> krows;
    for (int i = 0; i < 7; ++i) {
        krows.push_back(k_row.at({0, 0}));
        krows.push_back(k_row.at({0, 1}));
    }
    Tensor k = Tensor::from_vector({7, 2}, krows);
    Tensor v = rand2d(7, 3, rng);
    Tensor out = scaled_dot_attention(q, k, v);
    for (int64_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (int64_t i = 0; i < 7; ++i) mean += v.at({i, j});
        mean /= 7.0;
        for (int64_t i = 0; i < 5; ++i) {
            CHECK(out.at({i, j}) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("a single key routes its value row to every query") {
    Rng rng(2);
    Tensor q = rand2d(4, 2, rng);
    Tensor k = rand2d(1, 2, rng);
    Tensor v = rand2d(1, 3, rng);
    Tensor out = scaled_dot_attention(q, k, v);
    for (int64_t i = 0; i < 4; ++i) {
        for (int64_t j = 0; j < 3; ++j) CHECK(out.at({i, j}) == v.at({0, j}));
    }
}

TEST_CASE("shape contract and errors") {
    Rng rng(3);
    Tensor out = scaled_dot_attention(rand2d(5, 2, rng), rand2d(7, 2, rng), rand2d(7, 3, rng));
    CHECK(out.shape() == Shape{5, 3});
    CHECK_THROWS_AS(scaled_dot_attention(rand2d(5, 2, rng), rand2d(7, 3, rng), rand2d(7, 3, rng)),
                    std::invalid_argument);
    CHECK_THROWS_AS(scaled_dot_attention(rand2d(5, 2, rng), rand2d(7, 2, rng), rand2d(6, 3, rng)),
                    std::invalid_argument);
}

TEST_CASE("attention rows sit on the simplex") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor weights;
        scaled_dot_attention(rand2d(4, 3, rng, -3, 3), rand2d(6, 3, rng, -3, 3),
                             rand2d(6, 2, rng), &weights);
        for (int64_t i = 0; i < 4; ++i) {
            double total = 0.0;
            for (int64_t j = 0; j < 6; ++j) {
                CHECK(weights.at({i, j}) >= 0.0);
                total += weights.at({i, j});
            }
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("the exact scaling makes jointly rescaled Q,K a different computation") {
    // Softmax(QK^T/sqrt(d)) is invariant under Q,K -> cQ,cK only if the
    // logits are rescaled by exactly 1/c^2; compare both computations.
    Rng rng(5);
    Tensor q = rand2d(3, 4, rng), k = rand2d(5, 4, rng), v = rand2d(5, 2, rng);
    const double c = 3.0;
    Tensor qc = scale(q, c), kc = scale(k, c);
    Tensor w_base, w_scaled, w_corrected;
    scaled_dot_attention(q, k, v, &w_base);
    scaled_dot_attention(qc, kc, v, &w_scaled);
    // rescaling the logits back by 1/c^2 restores the original rows
    Tensor corrected = softmax(scale(matmul(qc, kc, false, true),
                                     1.0 / (c * c * std::sqrt(4.0))), -1);
    bool any_diff = false;
    for (int64_t i = 0; i < w_base.size(); ++i) {
        if (std::abs(w_base.data()[i] - w_scaled.data()[i]) > 1e-6) any_diff = true;
        CHECK(w_base.data()[i] == doctest::Approx(corrected.data()[i]).epsilon(1e-10));
    }
    CHECK(any_diff);
}

TEST_CASE("multi-head attention reduces to one scaled-dot head plus the combiner") {
    Rng init(6);
    MultiHeadAttention mha(4, 1, 0, 0, init);
    Rng rng(7);
    Tensor x = rand2d(3, 4, rng);
    Tensor expected = matmul(
        scaled_dot_attention(matmul(x, mha.w_query[0]), matmul(x, mha.w_key[0]),
                             matmul(x, mha.w_value[0])),
        mha.w_combine);
    Tensor out = mha.forward(x).combined;
    CHECK(out.to_vector() == expected.to_vector());
}

TEST_CASE("unmasked self-attention is permutation-equivariant without positions") {
    Rng init(8);
    MultiHeadAttention mha(4, 2, 0, 0, init);
    Rng rng(9);
    Tensor x = rand2d(5, 4, rng);
    // swap rows 1 and 3
    std::vector<double> swapped = x.to_vector();
    for (int64_t j = 0; j < 4; ++j) std::swap(swapped[4 + j], swapped[12 + j]);
    Tensor xs = Tensor::from_vector({5, 4}, swapped);
    Tensor out = mha.forward(x).combined;
    Tensor outs = mha.forward(xs).combined;
    for (int64_t j = 0; j < 4; ++j) {
        CHECK(out.at({1, j}) == doctest::Approx(outs.at({3, j})).epsilon(1e-12));
        CHECK(out.at({3, j}) == doctest::Approx(outs.at({1, j})).epsilon(1e-12));
        CHECK(out.at({0, j}) == doctest::Approx(outs.at({0, j})).epsilon(1e-12));
    }
}

TEST_CASE("batched attention equals per-sample attention") {
    Rng init(10);
    MultiHeadAttention mha(4, 2, 0, 0, init);
    Rng rng(11);
    Tensor batch = Tensor::generate({3, 5, 4}, [&](int64_t) { return rng.uniform(-1.0, 1.0); });
    Tensor out = mha.forward(batch).combined;
    for (int64_t b = 0; b < 3; ++b) {
        Tensor single = reshape(slice(batch, 0, b, 1), {5, 4});
        Tensor expected = mha.forward(single).combined;
        for (int64_t t = 0; t < 5; ++t) {
            for (int64_t j = 0; j < 4; ++j) {
                CHECK(out.at({b, t, j}) == doctest::Approx(expected.at({t, j})).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("head dimensioning: divisibility enforced, explicit override allowed") {
    Rng init(12);
    CHECK_THROWS_AS(MultiHeadAttention(5, 2, 0, 0, init), std::invalid_argument);
    MultiHeadAttention custom(5, 2, 3, 2, init);
    CHECK(custom.d_attn == 3);
    CHECK(custom.d_v == 2);
    Rng rng(13);
    CHECK(custom.forward(rand2d(4, 5, rng)).combined.shape() == Shape{4, 5});
}

TEST_CASE("multi-head gradient check at T=3, d_model=4, two heads") {
    Rng init(14);
    MultiHeadAttention mha(4, 2, 0, 0, init);
    Rng rng(15);
    Tensor x = rand2d(3, 4, rng);
    std::vector<Tensor*> slots;
    mha.visit_params("m", [&](const std::string&, Tensor& t) { slots.push_back(&t); });
    slots.push_back(&x);
    const double err = finite_diff_check_params(
        [&] { return sum(square(mha.forward(x).combined)); }, slots, 1e-6, 1e-4);
    CHECK(err < 1e-5);
}

TEST_CASE("flatten_time is the row-major bijection") {
    Tensor x = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    Tensor flat = flatten_time(x);
    CHECK(flat.shape() == Shape{4});
    CHECK(flat.to_vector() == std::vector<double>{1, 2, 3, 4});
    CHECK(reshape(flat, {2, 2}).to_vector() == x.to_vector());

    Tensor single = Tensor::from_vector({1, 3}, {7, 8, 9});
    CHECK(flatten_time(single).to_vector() == std::vector<double>{7, 8, 9});

    Tensor batched = Tensor::from_vector({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(flatten_time(batched).shape() == Shape{2, 4});
}

TEST_CASE("output head: bias fallback, dot product, horizon widths") {
    Rng init(16);
    {
        OutputHead head(2, 1, init);
        head.w = Tensor::ones({2, 1});
        head.b = Tensor::zeros({1});
        CHECK(head.forward(Tensor::from_vector({2}, {0.5, 0.5})).value() == 1.0);
    }
    {
        OutputHead head(3, 2, init);
        head.w = Tensor::zeros({3, 2});
        head.b = Tensor::from_vector({2}, {1.5, -2.5});
        Tensor out = head.forward(Tensor::from_vector({1, 3}, {9, 9, 9}));
        CHECK(out.to_vector() == std::vector<double>{1.5, -2.5});
    }
    for (int horizon : {1, 3, 6, 9, 12, 15}) {
        OutputHead head(10, horizon, init);
        Rng rng(17);
        Tensor flat = rand2d(2, 10, rng);
        CHECK(head.forward(flat).shape() == Shape{2, horizon});
    }
    OutputHead head(4, 2, init);
    CHECK_THROWS_AS(head.forward(Tensor::ones({1, 5})), std::invalid_argument);
}

TEST_CASE("every forecast step owns a distinct weight row") {
    Rng init(18);
    OutputHead head(6, 3, init);
    head.w.set_requires_grad(true);
    Rng rng(19);
    Tensor flat = rand2d(1, 6, rng);
    for (int64_t step = 0; step < 3; ++step) {
        Tape tape;
        Tensor y = head.forward(flat);
        Tensor g = tape.backward(slice(reshape(y, {3}), 0, step, 1)).at(head.w);
        // only column `step` of w receives gradient
        for (int64_t i = 0; i < 6; ++i) {
            for (int64_t j = 0; j < 3; ++j) {
                if (j == step) {
                    CHECK(g.at({i, j}) == doctest::Approx(flat.at({0, i})).epsilon(1e-12));
                } else {
                    CHECK(g.at({i, j}) == 0.0);
                }
            }
        }
    }
}

TEST_CASE("sinusoidal encoding shape and range") {
    Tensor pe = sinusoidal_encoding(10, 6);
    CHECK(pe.shape() == Shape{10, 6});
    for (double v : pe.to_vector()) CHECK(std::abs(v) <= 1.0);
    CHECK(pe.at({0, 0}) == 0.0);  // sin(0)
    CHECK(pe.at({0, 1}) == 1.0);  // cos(0)
}
