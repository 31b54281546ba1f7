#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tkat/recurrent.hpp"
#include "tkat/rng.hpp"

using namespace tkat;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// plain-double oracle for one LSTM step (single-bias convention)
struct TinyLstm {
    // one unit, one input
    double wf, uf, bf, wi, ui, bi, wo, uo, bo, wg, ug, bg;
    void step(double x, double& h, double& c) const {
        const double f = sig(wf * x + uf * h + bf);
        const double i = sig(wi * x + ui * h + bi);
        const double o = sig(wo * x + uo * h + bo);
        const double g = std::tanh(wg * x + ug * h + bg);
        c = f * c + i * g;
        h = o * std::tanh(c);
    }
};

struct TinyGru {
    double wz, uz, bz, wr, ur, br, wh, uh, bh;
    void step(double x, double& h) const {
        const double z = sig(wz * x + uz * h + bz);
        const double r = sig(wr * x + ur * h + br);
        const double cand = std::tanh(wh * x + uh * (r * h) + bh);
        h = z * h + (1.0 - z) * cand;
    }
};

void set_gate(GateParams& g, double w, double u, double b) {
    g.w = Tensor::from_vector({1, 1}, {w});
    g.u = Tensor::from_vector({1, 1}, {u});
    g.b = Tensor::from_vector({1}, {b});
}

KanOptions tiny_kan() {
    KanOptions o;
    o.grid_size = 3;
    o.order = 2;
    return o;
}

void zero_tkan(TkanCell& cell) {
    auto zero = [](Tensor& t) { t = Tensor::zeros(t.shape()); };
    cell.visit_params("c", [&](const std::string&, Tensor& t) { zero(t); });
}

}  // namespace

TEST_CASE("rkan memory update: memoryless, pure carry, geometric ramp") {
    Rng rng(5);
    RkanSubLayer sub(2, 2, 2, tiny_kan(), rng);

    SUBCASE("zero transition weights keep the memory at zero") {
        sub.w_hh = Tensor::zeros({2, 2});
        sub.w_hz = Tensor::zeros({2, 2});
        Tensor mem = Tensor::zeros({1, 2});
        Tensor x = Tensor::from_vector({1, 2}, {0.3, -0.2});
        Tensor y = sub.step(x, mem);
        CHECK(mem.to_vector() == std::vector<double>{0, 0});
        // output equals the KAN applied to [x, 0]
        Tensor joined = Tensor::from_vector({1, 4}, {0.3, -0.2, 0.0, 0.0});
        CHECK(y.to_vector() == sub.kan.forward(joined).to_vector());
    }

    SUBCASE("identity W_hh with zero W_hz carries the memory unchanged") {
        sub.w_hh = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
        sub.w_hz = Tensor::zeros({2, 2});
        Tensor mem = Tensor::from_vector({1, 2}, {0.4, -0.7});
        Tensor x = Tensor::from_vector({1, 2}, {0.1, 0.2});
        for (int t = 0; t < 4; ++t) sub.step(x, mem);
        CHECK(mem.at({0, 0}) == doctest::Approx(0.4).epsilon(1e-14));
        CHECK(mem.at({0, 1}) == doctest::Approx(-0.7).epsilon(1e-14));
    }

    SUBCASE("0.5 I transitions with constant ones input give 1 - 0.5^t") {
        sub.w_hh = Tensor::from_vector({2, 2}, {0.5, 0, 0, 0.5});
        sub.w_hz = Tensor::from_vector({2, 2}, {0.5, 0, 0, 0.5});
        Tensor mem = Tensor::zeros({1, 2});
        Tensor x = Tensor::ones({1, 2});
        for (int t = 1; t <= 8; ++t) {
            sub.step(x, mem);
            const double expected = 1.0 - std::pow(0.5, t);
            CHECK(mem.at({0, 0}) == doctest::Approx(expected).epsilon(1e-13));
        }
    }
}

TEST_CASE("tkan cell with all-zero parameters matches the hand evaluation") {
    Rng rng(6);
    TkanCell cell(2, 2, 1, tiny_kan(), CandidateActivation::Sigmoid, rng);
    zero_tkan(cell);
    CellState s = cell.initial_state(1);
    Tensor x = Tensor::from_vector({1, 2}, {0.6, -0.1});
    Tensor h1 = cell.step(x, s);
    // f = i = cand = sigmoid(0) = 0.5; c1 = 0.25; o = sigmoid(0) = 0.5
    const double expected = 0.5 * std::tanh(0.25);
    CHECK(expected == doctest::Approx(0.12246).epsilon(1e-4));  // sanity on the constant
    for (int64_t j = 0; j < 2; ++j) {
        CHECK(h1.at({0, j}) == doctest::Approx(expected).epsilon(1e-14));
        CHECK(s.c.at({0, j}) == doctest::Approx(0.25).epsilon(1e-14));
    }
}

TEST_CASE("saturated forget gate carries the cell state exactly") {
    Rng rng(7);
    TkanCell cell(2, 2, 1, tiny_kan(), CandidateActivation::Sigmoid, rng);
    zero_tkan(cell);
    cell.forget_gate().b = Tensor::from_vector({2}, {100.0, 100.0});  // f = 1 exactly
    cell.input_gate().b = Tensor::from_vector({2}, {-100.0, -100.0});  // i ~ 4e-44
    CellState s = cell.initial_state(1);
    s.c = Tensor::from_vector({1, 2}, {0.37, -1.25});
    Tensor x = Tensor::from_vector({1, 2}, {0.9, 0.4});
    cell.step(x, s);
    CHECK(s.c.at({0, 0}) == 0.37);  // bitwise carry
    CHECK(s.c.at({0, 1}) == -1.25);
}

TEST_CASE("cell state update identity: i = 0 gives a pure forget product") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t n = 3;
        Tensor c0 = Tensor::generate({1, n}, [&](int64_t) { return rng.uniform(0.2, 2.0); });
        Tensor zero = Tensor::zeros({1, n});
        Tensor c = c0;
        Tensor product = Tensor::ones({1, n});
        for (int t = 0; t < 5; ++t) {
            Tensor f = Tensor::generate({1, n}, [&](int64_t) { return rng.uniform(0.0, 1.0); });
            Tensor cand =
                Tensor::generate({1, n}, [&](int64_t) { return rng.uniform(-1.0, 1.0); });
            c = cell_state_update(f, zero, c, cand);
            product = mul(product, f);
        }
        Tensor expected = mul(product, c0);
        for (int64_t j = 0; j < n; ++j) {
            CHECK(c.at({0, j}) == doctest::Approx(expected.at({0, j})).epsilon(1e-12));
        }
    }
}

TEST_CASE("gate outputs stay inside (0,1)") {
    Rng rng(9);
    TkanCell cell(3, 4, 1, tiny_kan(), CandidateActivation::Sigmoid, rng);
    CellState s = cell.initial_state(2);
    Rng xr(10);
    for (int t = 0; t < 5; ++t) {
        Tensor x = Tensor::generate({2, 3}, [&](int64_t) { return xr.uniform(-3.0, 3.0); });
        cell.step(x, s);
        for (int64_t i = 0; i < s.h.size(); ++i) {
            CHECK(std::abs(s.h.data()[i]) < 1.0);  // |h| = |o * tanh(c)| < 1
        }
    }
}

TEST_CASE("lstm cell matches a plain-double oracle over two steps") {
    Rng rng(11);
    LstmCell cell(1, 1, rng);
    TinyLstm oracle{};
    Rng pr(12);
    oracle.wf = pr.uniform(-1, 1); oracle.uf = pr.uniform(-1, 1); oracle.bf = pr.uniform(-1, 1);
    oracle.wi = pr.uniform(-1, 1); oracle.ui = pr.uniform(-1, 1); oracle.bi = pr.uniform(-1, 1);
    oracle.wo = pr.uniform(-1, 1); oracle.uo = pr.uniform(-1, 1); oracle.bo = pr.uniform(-1, 1);
    oracle.wg = pr.uniform(-1, 1); oracle.ug = pr.uniform(-1, 1); oracle.bg = pr.uniform(-1, 1);
    LstmCell configured(1, 1, rng);
    // reach the gates through the visitor in declaration order
    std::vector<double> flat = {oracle.wf, oracle.uf, oracle.bf, oracle.wi, oracle.ui, oracle.bi,
                                oracle.wo, oracle.uo, oracle.bo, oracle.wg, oracle.ug, oracle.bg};
    size_t cursor = 0;
    configured.visit_params("l", [&](const std::string&, Tensor& t) {
        t = Tensor::from_vector(t.shape(), {flat[cursor++]});
    });
    CellState s = configured.initial_state(1);
    double h = 0.0, c = 0.0;
    for (double x : {0.7, -0.3}) {
        configured.step(Tensor::from_vector({1, 1}, {x}), s);
        oracle.step(x, h, c);
        CHECK(s.h.value() == doctest::Approx(h).epsilon(1e-14));
        CHECK(s.c.value() == doctest::Approx(c).epsilon(1e-14));
    }
}

TEST_CASE("lstm with all-zero parameters gives zero cell state and output") {
    Rng rng(13);
    LstmCell cell(2, 2, rng);
    cell.visit_params("l", [](const std::string&, Tensor& t) { t = Tensor::zeros(t.shape()); });
    CellState s = cell.initial_state(1);
    Tensor h1 = cell.step(Tensor::from_vector({1, 2}, {0.5, -0.5}), s);
    for (double v : h1.to_vector()) CHECK(v == 0.0);
    for (double v : s.c.to_vector()) CHECK(v == 0.0);
}

TEST_CASE("gru cell matches a plain-double oracle and its zero-parameter halving") {
    Rng rng(14);
    GruCell cell(1, 1, rng);
    TinyGru oracle{};
    Rng pr(15);
    oracle.wz = pr.uniform(-1, 1); oracle.uz = pr.uniform(-1, 1); oracle.bz = pr.uniform(-1, 1);
    oracle.wr = pr.uniform(-1, 1); oracle.ur = pr.uniform(-1, 1); oracle.br = pr.uniform(-1, 1);
    oracle.wh = pr.uniform(-1, 1); oracle.uh = pr.uniform(-1, 1); oracle.bh = pr.uniform(-1, 1);
    std::vector<double> flat = {oracle.wz, oracle.uz, oracle.bz, oracle.wr, oracle.ur, oracle.br,
                                oracle.wh, oracle.uh, oracle.bh};
    size_t cursor = 0;
    cell.visit_params("g", [&](const std::string&, Tensor& t) {
        t = Tensor::from_vector(t.shape(), {flat[cursor++]});
    });
    CellState s = cell.initial_state(1);
    double h = 0.0;
    for (double x : {0.4, -0.8}) {
        cell.step(Tensor::from_vector({1, 1}, {x}), s);
        oracle.step(x, h);
        CHECK(s.h.value() == doctest::Approx(h).epsilon(1e-14));
    }

    // all-zero parameters: update gate 0.5 halves the previous state
    GruCell zero(1, 1, rng);
    zero.visit_params("g", [](const std::string&, Tensor& t) { t = Tensor::zeros(t.shape()); });
    CellState sz = zero.initial_state(1);
    sz.h = Tensor::from_vector({1, 1}, {0.8});
    zero.step(Tensor::from_vector({1, 1}, {0.123}), sz);
    CHECK(sz.h.value() == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("state shapes are stationary across steps") {
    Rng rng(16);
    TkanCell cell(3, 4, 2, tiny_kan(), CandidateActivation::Sigmoid, rng);
    CellState s = cell.initial_state(2);
    const Shape h_shape = s.h.shape(), c_shape = s.c.shape();
    const size_t n_mem = s.rkan.size();
    Rng xr(17);
    for (int t = 0; t < 3; ++t) {
        Tensor x = Tensor::generate({2, 3}, [&](int64_t) { return xr.uniform(-1.0, 1.0); });
        cell.step(x, s);
        CHECK(s.h.shape() == h_shape);
        CHECK(s.c.shape() == c_shape);
        CHECK(s.rkan.size() == n_mem);
    }
}

TEST_CASE("run_sequence contracts") {
    Rng rng(18);
    TkanCell cell(2, 3, 1, tiny_kan(), CandidateActivation::Sigmoid, rng);
    Rng xr(19);
    Tensor xs = Tensor::generate({2, 3, 2}, [&](int64_t) { return xr.uniform(-1.0, 1.0); });

    SUBCASE("T=1 equals a single cell step") {
        Tensor one = slice(xs, 1, 0, 1);
        SequenceResult r = run_sequence(cell, one, nullptr, false);
        CellState s = cell.initial_state(2);
        Tensor expected = cell.step(reshape(slice(xs, 1, 0, 1), {2, 2}), s);
        CHECK(r.outputs.to_vector() == expected.to_vector());
    }

    SUBCASE("return_sequences stacks the per-step outputs in order") {
        SequenceResult r = run_sequence(cell, xs, nullptr, true);
        CHECK(r.outputs.shape() == Shape{2, 3, 3});
        CellState s = cell.initial_state(2);
        for (int64_t t = 0; t < 3; ++t) {
            Tensor expected = cell.step(reshape(slice(xs, 1, t, 1), {2, 2}), s);
            for (int64_t b = 0; b < 2; ++b) {
                for (int64_t j = 0; j < 3; ++j) {
                    CHECK(r.outputs.at({b, t, j}) == expected.at({b, j}));
                }
            }
        }
        CHECK(r.final_state.h.to_vector() == s.h.to_vector());
        CHECK(r.final_state.c.to_vector() == s.c.to_vector());
    }

    SUBCASE("chained zero-parameter steps match the hand recursion") {
        zero_tkan(cell);
        SequenceResult r = run_sequence(cell, xs, nullptr, true);
        // with zero params every gate is 0.5 at every step and the output
        // gate input stays 0, so c follows c' = 0.5c + 0.25
        double c = 0.0;
        for (int64_t t = 0; t < 3; ++t) {
            c = 0.5 * c + 0.25;
            const double h = 0.5 * std::tanh(c);
            for (int64_t j = 0; j < 3; ++j) {
                CHECK(r.outputs.at({0, t, j}) == doctest::Approx(h).epsilon(1e-13));
            }
        }
    }

    SUBCASE("bad input ranks are rejected") {
        CHECK_THROWS_AS(run_sequence(cell, Tensor::ones({2, 2}), nullptr, true),
                        std::invalid_argument);
    }
}

TEST_CASE("three-step gradient check through the tkan cell") {
    Rng rng(20);
    TkanCell cell(2, 3, 1, tiny_kan(), CandidateActivation::Sigmoid, rng);
    Rng xr(21);
    Tensor xs = Tensor::generate({2, 3, 2}, [&](int64_t) { return xr.uniform(-0.7, 0.7); });
    std::vector<Tensor*> slots;
    cell.visit_params("c", [&](const std::string&, Tensor& t) { slots.push_back(&t); });
    slots.push_back(&xs);
    const double err = finite_diff_check_params(
        [&] { return sum(square(run_sequence(cell, xs, nullptr, false).outputs)); }, slots, 1e-6,
        1e-4);
    CHECK(err < 1e-4);
}

TEST_CASE("candidate activation flag switches between sigmoid and tanh") {
    Rng rng(22);
    TkanCell sig_cell(1, 1, 1, tiny_kan(), CandidateActivation::Sigmoid, rng);
    zero_tkan(sig_cell);
    Rng rng2(22);
    TkanCell tanh_cell(1, 1, 1, tiny_kan(), CandidateActivation::Tanh, rng2);
    zero_tkan(tanh_cell);
    Tensor x = Tensor::from_vector({1, 1}, {0.5});
    CellState sa = sig_cell.initial_state(1), sb = tanh_cell.initial_state(1);
    sig_cell.step(x, sa);
    tanh_cell.step(x, sb);
    // zero params: sigmoid candidate 0.5, tanh candidate 0
    CHECK(sa.c.value() == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(sb.c.value() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("two-layer GRU parameter count formula (input width 21, 100 units)") {
    Rng rng(23);
    GruCell layer1(21, 100, rng);
    GruCell layer2(100, 100, rng);
    int64_t count = 0;
    auto add_count = [&](const std::string&, Tensor& t) { count += t.size(); };
    layer1.visit_params("a", add_count);
    CHECK(count == 3 * ((21 + 100) * 100 + 100));  // 36,600
    layer2.visit_params("b", add_count);
    CHECK(count == 36600 + 3 * ((100 + 100) * 100 + 100));  // + 60,300
}

TEST_CASE("make_cell dispatch and validation") {
    Rng rng(24);
    CHECK(make_cell(CellKind::LSTM, 2, 3, tiny_kan(), CandidateActivation::Sigmoid, 1, rng)
              ->units() == 3);
    CHECK(make_cell(CellKind::GRU, 2, 3, tiny_kan(), CandidateActivation::Sigmoid, 1, rng)
              ->input_dim() == 2);
    CHECK_THROWS_AS(make_cell(static_cast<CellKind>(42), 2, 3, tiny_kan(),
                              CandidateActivation::Sigmoid, 1, rng),
                    std::invalid_argument);
    Tensor bad = Tensor::ones({1, 5});
    TkanCell cell(2, 3, 1, tiny_kan(), CandidateActivation::Sigmoid, rng);
    CellState s = cell.initial_state(1);
    CHECK_THROWS_AS(cell.step(bad, s), std::invalid_argument);
}
