#pragma once

#include <string>
#include <vector>

#include "tkat/rng.hpp"
#include "tkat/tensor.hpp"

namespace tkat {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// Uniform B-spline grid over [lo, hi] with `grid_size` interior intervals
// and spline order (= degree) `order`. The knot vector is uniformly
// extended by `order` knots on each side, giving grid_size + order basis
// functions.
struct SplineGrid {
    double lo = -1.0;
    double hi = 1.0;
    int grid_size = 5;
    int order = 3;
    std::vector<double> knots;  // grid_size + 2*order + 1, non-decreasing

    SplineGrid(double lo, double hi, int grid_size, int order);

    int num_basis() const { return grid_size + order; }
    double step() const { return (hi - lo) / grid_size; }
};

// Values (and optionally derivatives) of all basis functions at one
// point. `x` outside [lo, hi] is clamped to the boundary; the clamp
// zeroes the derivative there. Cox-de Boor evaluated on the local
// non-zero span only.
void bspline_eval_point(const SplineGrid& grid, double x, double* values, double* derivs);

// x: rank-1 tensor [n] -> [n, num_basis]. Differentiable w.r.t. x.
Tensor bspline_basis(const Tensor& x, const SplineGrid& grid);

struct KanOptions {
    int grid_size = 5;
    int order = 3;
    double lo = -1.0;
    double hi = 1.0;
};

// One Kolmogorov-Arnold layer: per edge (j,i) a learnable spline plus a
// SiLU base path,
//   out[.,j] = sum_i base_weight[j,i]*silu(x_i)
//            + spline_scale[j,i] * sum_b spline_coeffs[j,i,b]*B_b(x_i)
struct KanLinear {
    int in_dim = 0;
    int out_dim = 0;
    SplineGrid grid;
    Tensor base_weight;    // [out, in]
    Tensor spline_scale;   // [out, in]
    Tensor spline_coeffs;  // [out, in, num_basis]

    KanLinear(int in_dim, int out_dim, const KanOptions& opts, Rng& rng);

    Tensor forward(const Tensor& x) const;  // x: [batch, in] -> [batch, out]

    int64_t parameter_count() const;
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace tkat
