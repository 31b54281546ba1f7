#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tkat/rng.hpp"
#include "tkat/spline.hpp"

using namespace tkat;

namespace {

// Textbook Cox-de Boor recursion over the full basis; the independent
// oracle for the production evaluator.
double cox_de_boor(const std::vector<double>& t, int i, int k, double x) {
    if (k == 0) {
        return (x >= t[static_cast<size_t>(i)] && x < t[static_cast<size_t>(i + 1)]) ? 1.0 : 0.0;
    }
    double left = 0.0, right = 0.0;
    const double dl = t[static_cast<size_t>(i + k)] - t[static_cast<size_t>(i)];
    const double dr = t[static_cast<size_t>(i + k + 1)] - t[static_cast<size_t>(i + 1)];
    if (dl > 0.0) left = (x - t[static_cast<size_t>(i)]) / dl * cox_de_boor(t, i, k - 1, x);
    if (dr > 0.0) {
        right = (t[static_cast<size_t>(i + k + 1)] - x) / dr * cox_de_boor(t, i + 1, k - 1, x);
    }
    return left + right;
}

}  // namespace

TEST_CASE("grid construction and validation") {
    SplineGrid grid(-1.0, 1.0, 5, 3);
    CHECK(grid.num_basis() == 8);
    CHECK(grid.knots.size() == 12);
    for (size_t i = 1; i < grid.knots.size(); ++i) CHECK(grid.knots[i] > grid.knots[i - 1]);
    CHECK(grid.knots[3] == doctest::Approx(-1.0));
    CHECK(grid.knots[8] == doctest::Approx(1.0));
    CHECK_THROWS_AS(SplineGrid(1.0, 1.0, 5, 3), std::invalid_argument);
    CHECK_THROWS_AS(SplineGrid(-1.0, 1.0, 0, 3), std::invalid_argument);
}

TEST_CASE("partition of unity at 1000 random interior points") {
    SplineGrid grid(-1.0, 1.0, 5, 3);
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const double x = rng.uniform(-0.999, 0.999);
        Tensor row = bspline_basis(Tensor::from_vector({1}, {x}), grid);
        double total = 0.0;
        for (int64_t b = 0; b < grid.num_basis(); ++b) {
            CHECK(row.at({0, b}) >= 0.0);
            total += row.at({0, b});
        }
        CHECK(std::abs(total - 1.0) < 1e-10);
    }
}

TEST_CASE("order-0 basis is a one-hot interval indicator") {
    SplineGrid grid(0.0, 4.0, 4, 0);
    for (int j = 0; j < 4; ++j) {
        Tensor row = bspline_basis(Tensor::from_vector({1}, {j + 0.5}), grid);
        for (int b = 0; b < 4; ++b) CHECK(row.at({0, b}) == (b == j ? 1.0 : 0.0));
    }
}

TEST_CASE("basis row matches the recursive oracle everywhere") {
    Rng rng(2);
    for (int k : {1, 2, 3}) {
        for (int g : {2, 4, 5}) {
            SplineGrid grid(-1.0, 1.0, g, k);
            for (int trial = 0; trial < 200; ++trial) {
                const double x = rng.uniform(-0.999, 0.999);
                Tensor row = bspline_basis(Tensor::from_vector({1}, {x}), grid);
                for (int b = 0; b < grid.num_basis(); ++b) {
                    const double expected = cox_de_boor(grid.knots, b, k, x);
                    CHECK(row.at({0, b}) == doctest::Approx(expected).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("basis row is palindromic at the midpoint of a symmetric grid") {
    SplineGrid grid(-1.0, 1.0, 2, 1);
    Tensor row = bspline_basis(Tensor::from_vector({1}, {0.0}), grid);
    const int nb = grid.num_basis();  // 3
    for (int b = 0; b < nb; ++b) {
        CHECK(row.at({0, b}) == doctest::Approx(row.at({0, nb - 1 - b})).epsilon(1e-12));
    }
    // hand check against the oracle at the midpoint
    CHECK(row.at({0, 1}) == doctest::Approx(cox_de_boor(grid.knots, 1, 1, 0.0)).epsilon(1e-12));
}

TEST_CASE("local support: zero outside the b-th knot span (G=4, k=2)") {
    SplineGrid grid(-1.0, 1.0, 4, 2);
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const double x = rng.uniform(-0.999, 0.999);
        Tensor row = bspline_basis(Tensor::from_vector({1}, {x}), grid);
        for (int b = 0; b < grid.num_basis(); ++b) {
            const double lo = grid.knots[static_cast<size_t>(b)];
            const double hi = grid.knots[static_cast<size_t>(b + grid.order + 1)];
            if (x < lo || x > hi) CHECK(row.at({0, b}) == 0.0);
        }
    }
}

TEST_CASE("out-of-range inputs clamp to the boundary row") {
    SplineGrid grid(-1.0, 1.0, 5, 3);
    Tensor at_edge = bspline_basis(Tensor::from_vector({1}, {1.0}), grid);
    Tensor beyond = bspline_basis(Tensor::from_vector({1}, {7.5}), grid);
    for (int64_t b = 0; b < grid.num_basis(); ++b) {
        CHECK(beyond.at({0, b}) == at_edge.at({0, b}));
    }
}

TEST_CASE("kan_linear degenerate parameter settings") {
    KanOptions opts;
    Rng rng(10);
    KanLinear kan(3, 3, opts, rng);
    const int nb = kan.grid.num_basis();

    kan.base_weight = Tensor::zeros({3, 3});
    kan.spline_coeffs = Tensor::zeros({3, 3, nb});
    Tensor x = Tensor::from_vector({2, 3}, {0.1, -0.4, 0.8, 0.0, 0.5, -0.9});
    for (double v : kan.forward(x).to_vector()) CHECK(v == 0.0);

    // base path only: identity base weight reproduces SiLU(x)
    kan.base_weight = Tensor::from_vector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor out = kan.forward(x);
    Tensor expected = silu(x);
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < 3; ++j) {
            CHECK(out.at({i, j}) == doctest::Approx(expected.at({i, j})).epsilon(1e-14));
        }
    }
}

TEST_CASE("kan_linear spline path interpolates f(x)=x with hat-function coefficients") {
    KanOptions opts;
    opts.grid_size = 2;
    opts.order = 1;
    Rng rng(11);
    KanLinear kan(1, 1, opts, rng);
    kan.base_weight = Tensor::zeros({1, 1});
    kan.spline_scale = Tensor::ones({1, 1});
    // degree-1 B-splines peak at the interior knots -1, 0, 1; coefficients
    // equal to those knots reproduce the identity on [-1,1]
    kan.spline_coeffs = Tensor::from_vector({1, 1, 3}, {-1.0, 0.0, 1.0});
    for (double x : {-0.9, -0.4, 0.0, 0.3, 0.99}) {
        Tensor out = kan.forward(Tensor::from_vector({1, 1}, {x}));
        CHECK(out.value() == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("init determinism and validation") {
    KanOptions opts;
    Rng a(42), b(42), c(43);
    KanLinear ka(4, 2, opts, a), kb(4, 2, opts, b), kc(4, 2, opts, c);
    CHECK(ka.base_weight.to_vector() == kb.base_weight.to_vector());
    CHECK(ka.spline_coeffs.to_vector() == kb.spline_coeffs.to_vector());
    CHECK(ka.base_weight.to_vector() != kc.base_weight.to_vector());
    Rng d(1);
    CHECK_THROWS_AS(KanLinear(3, 0, opts, d), std::invalid_argument);
}

TEST_CASE("parameter count formula") {
    KanOptions opts;  // G=5, k=3 -> 8 basis functions
    Rng rng(1);
    KanLinear kan(7, 4, opts, rng);
    CHECK(kan.parameter_count() == 4 * 7 * 8 + 2 * 4 * 7);
    int64_t visited = 0;
    kan.visit_params("k", [&](const std::string&, Tensor& t) { visited += t.size(); });
    CHECK(visited == kan.parameter_count());
}

TEST_CASE("kan_linear gradients match finite differences away from knots") {
    KanOptions opts;
    Rng rng(12);
    KanLinear kan(2, 2, opts, rng);
    Rng xr(13);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        // stay 1e-3 clear of the knot lattice (step 0.4)
        Tensor x = Tensor::generate({3, 2}, [&](int64_t) {
            double v;
            do {
                v = xr.uniform(-0.95, 0.95);
            } while (std::abs(v / 0.4 - std::round(v / 0.4)) * 0.4 < 1e-3);
            return v;
        });
        std::vector<Tensor*> slots = {&kan.base_weight, &kan.spline_coeffs, &kan.spline_scale,
                                      &x};
        worst = std::max(worst, finite_diff_check_params(
                                    [&] { return sum(square(kan.forward(x))); }, slots, 1e-6,
                                    1e-4));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("bspline_basis rejects bad input") {
    SplineGrid grid(-1.0, 1.0, 5, 3);
    CHECK_THROWS_AS(bspline_basis(Tensor::ones({2, 2}), grid), std::invalid_argument);
}
