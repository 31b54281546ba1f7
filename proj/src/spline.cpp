#include "tkat/spline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "tkat/kernels.hpp"

namespace tkat {

SplineGrid::SplineGrid(double lo_, double hi_, int grid_size_, int order_)
    : lo(lo_), hi(hi_), grid_size(grid_size_), order(order_) {
    if (!(lo < hi)) {
        throw std::invalid_argument("SplineGrid: degenerate range [" + std::to_string(lo) + "," +
                                    std::to_string(hi) + "]");
    }
    if (grid_size < 1 || order < 0) {
        throw std::invalid_argument("SplineGrid: grid_size must be >= 1 and order >= 0");
    }
    const double h = (hi - lo) / grid_size;
    knots.resize(static_cast<size_t>(grid_size + 2 * order + 1));
    for (int i = 0; i < static_cast<int>(knots.size()); ++i) {
        knots[static_cast<size_t>(i)] = lo + (i - order) * h;
    }
}

// Dispatches on the knot span so only the order+1 non-zero functions are
// computed; classic triangular recurrence. `last` holds the degree
// (order-1) values needed for the derivative formula.
void bspline_eval_point(const SplineGrid& grid, double x, double* values, double* derivs) {
    const int k = grid.order;
    const int nb = grid.num_basis();
    std::fill(values, values + nb, 0.0);
    if (derivs) std::fill(derivs, derivs + nb, 0.0);

    const bool clamped = x < grid.lo || x > grid.hi;
    const double u = std::min(std::max(x, grid.lo), grid.hi);
    int interval = static_cast<int>((u - grid.lo) / grid.step());
    interval = std::min(std::max(interval, 0), grid.grid_size - 1);
    const int s = interval + k;  // knot span: knots[s] <= u < knots[s+1] (interior)
    const std::vector<double>& t = grid.knots;

    // n[r] = B_{s-deg+r, deg}(u) for the current degree
    std::vector<double> n(static_cast<size_t>(k + 1), 0.0);
    std::vector<double> prev(static_cast<size_t>(k + 1), 0.0);
    n[0] = 1.0;
    for (int deg = 1; deg <= k; ++deg) {
        prev = n;
        for (int r = 0; r <= deg; ++r) {
            const int i = s - deg + r;  // basis index at this degree
            double acc = 0.0;
            if (r > 0) {
                const double den = t[static_cast<size_t>(i + deg)] - t[static_cast<size_t>(i)];
                acc += (u - t[static_cast<size_t>(i)]) / den * prev[static_cast<size_t>(r - 1)];
            }
            if (r < deg) {
                const double den =
                    t[static_cast<size_t>(i + deg + 1)] - t[static_cast<size_t>(i + 1)];
                acc += (t[static_cast<size_t>(i + deg + 1)] - u) / den * prev[static_cast<size_t>(r)];
            }
            n[static_cast<size_t>(r)] = acc;
        }
    }

    for (int r = 0; r <= k; ++r) {
        const int i = s - k + r;
        if (i >= 0 && i < nb) values[i] = n[static_cast<size_t>(r)];
    }
    if (!derivs || k == 0) return;
    if (clamped) return;  // clamp kills the derivative outside the range
    // B'_{i,k} = k * (B_{i,k-1}/(t_{i+k}-t_i) - B_{i+1,k-1}/(t_{i+k+1}-t_{i+1}))
    // prev holds the degree k-1 values B_{s-(k-1)+r, k-1}
    for (int r = 0; r <= k; ++r) {
        const int i = s - k + r;
        if (i < 0 || i >= nb) continue;
        double dv = 0.0;
        const int rl = i - (s - k + 1);  // index of B_{i,k-1} within prev
        if (rl >= 0 && rl <= k - 1) {
            dv += prev[static_cast<size_t>(rl)] /
                  (t[static_cast<size_t>(i + k)] - t[static_cast<size_t>(i)]);
        }
        const int rr = rl + 1;  // B_{i+1,k-1}
        if (rr >= 0 && rr <= k - 1) {
            dv -= prev[static_cast<size_t>(rr)] /
                  (t[static_cast<size_t>(i + k + 1)] - t[static_cast<size_t>(i + 1)]);
        }
        derivs[i] = k * dv;
    }
}

Tensor bspline_basis(const Tensor& x, const SplineGrid& grid) {
    if (!x.defined() || x.rank() != 1) {
        throw std::invalid_argument("bspline_basis: input must be a rank-1 tensor");
    }
    const int64_t n = x.size();
    const int nb = grid.num_basis();
    std::vector<double> out(static_cast<size_t>(n * nb));
    const double* px = x.data();
    kernels::for_each_index_costed(n, 8 * (grid.order + 1) * (grid.order + 1), [&](int64_t i) {
        bspline_eval_point(grid, px[i], out.data() + i * nb, nullptr);
    });
    Tensor result = Tensor::from_vector({n, nb}, std::move(out));

    Tape* tape = Tape::active();
    if (tape && tape->tracks(x)) {
        std::vector<int> parents{tape->ensure_node(x)};
        Tensor saved_x = x;
        SplineGrid g = grid;
        tape->record("bspline_basis", result, parents,
                     [saved_x, g](const Tensor& grad) -> std::vector<Tensor> {
                         const int64_t n = saved_x.size();
                         const int nb = g.num_basis();
                         std::vector<double> dx(static_cast<size_t>(n));
                         const double* px = saved_x.data();
                         const double* pg = grad.data();
                         std::vector<double> vals(static_cast<size_t>(nb));
                         std::vector<double> ders(static_cast<size_t>(nb));
                         for (int64_t i = 0; i < n; ++i) {
                             bspline_eval_point(g, px[i], vals.data(), ders.data());
                             double acc = 0.0;
                             for (int b = 0; b < nb; ++b) acc += pg[i * nb + b] * ders[b];
                             dx[static_cast<size_t>(i)] = acc;
                         }
                         return {Tensor::from_vector(saved_x.shape(), std::move(dx))};
                     });
    }
    return result;
}

KanLinear::KanLinear(int in, int out, const KanOptions& opts, Rng& rng)
    : in_dim(in), out_dim(out), grid(opts.lo, opts.hi, opts.grid_size, opts.order) {
    if (in < 1 || out < 1) {
        throw std::invalid_argument("KanLinear: dimensions must be positive, got in=" +
                                    std::to_string(in) + " out=" + std::to_string(out));
    }
    const int nb = grid.num_basis();
    const double bound = std::sqrt(6.0 / (in + out));
    base_weight = Tensor::generate({out, in}, [&](int64_t) { return rng.uniform(-bound, bound); })
                      .set_requires_grad(true);
    const double coeff_std = 0.1 / std::sqrt(static_cast<double>(nb));
    spline_coeffs =
        Tensor::generate({out, in, nb}, [&](int64_t) { return rng.normal(0.0, coeff_std); })
            .set_requires_grad(true);
    spline_scale = Tensor::ones({out, in}).set_requires_grad(true);
}

Tensor KanLinear::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_dim) {
        throw std::invalid_argument("KanLinear: expected input [batch," + std::to_string(in_dim) +
                                    "], got " + shape_str(x.shape()));
    }
    const int64_t batch = x.dim(0);
    const int nb = grid.num_basis();
    Tensor base_out = matmul(silu(x), base_weight, false, true);
    Tensor basis = bspline_basis(reshape(x, {batch * in_dim}), grid);
    Tensor basis_rows = reshape(basis, {batch, static_cast<int64_t>(in_dim) * nb});
    Tensor scaled = mul(spline_coeffs, reshape(spline_scale, {out_dim, in_dim, 1}));
    Tensor coeff_rows = reshape(scaled, {out_dim, static_cast<int64_t>(in_dim) * nb});
    Tensor spline_out = matmul(basis_rows, coeff_rows, false, true);
    return add(base_out, spline_out);
}

int64_t KanLinear::parameter_count() const {
    return static_cast<int64_t>(out_dim) * in_dim * grid.num_basis() +
           2ll * out_dim * in_dim;
}

void KanLinear::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".base_weight", base_weight);
    v(prefix + ".spline_coeffs", spline_coeffs);
    v(prefix + ".spline_scale", spline_scale);
}

}  // namespace tkat
