#include "tkat/gradcheck.hpp"

#include <vector>

#include "tkat/attention.hpp"
#include "tkat/fusion.hpp"
#include "tkat/model.hpp"
#include "tkat/recurrent.hpp"
#include "tkat/spline.hpp"
#include "tkat/tensor.hpp"
#include "tkat/training.hpp"

namespace tkat {

namespace {

constexpr double kLayerTol = 1e-5;
// gradients below this cannot be resolved at eps=1e-6 in float64
constexpr double kSkipFloor = 1e-4;
constexpr double kEndToEndTol = 1e-4;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -0.8, double hi = 0.8) {
    return Tensor::generate(std::move(shape), [&](int64_t) { return rng.uniform(lo, hi); });
}

// gathers every parameter slot of a block via its visitor
template <typename Block>
std::vector<Tensor*> block_params(Block& block) {
    std::vector<Tensor*> out;
    block.visit_params("p", [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

GradCheckResult check(const std::string& name, double err, double tol) {
    return {name, err, tol, err < tol};
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(double eps) {
    std::vector<GradCheckResult> results;
    Rng rng(20240621);

    {  // KAN linear layer, params and input
        KanOptions opts;
        Rng init(11);
        KanLinear kan(3, 2, opts, init);
        Tensor x = random_tensor({4, 3}, rng);
        auto params = block_params(kan);
        params.push_back(&x);
        x.set_requires_grad(true);
        const double err = finite_diff_check_params(
            [&] { return sum(kan.forward(x)); }, params, eps, kSkipFloor);
        results.push_back(check("kan_linear", err, kLayerTol));
    }
    {  // RKAN sub-layer single step
        KanOptions opts;
        Rng init(12);
        RkanSubLayer sub(3, 3, 3, opts, init);
        Tensor x = random_tensor({2, 3}, rng);
        Tensor mem0 = random_tensor({2, 3}, rng, -0.3, 0.3);
        auto params = block_params(sub);
        params.push_back(&x);
        const double err = finite_diff_check_params(
            [&] {
                Tensor mem = mem0;
                return sum(sub.step(x, mem));
            },
            params, eps, kSkipFloor);
        results.push_back(check("rkan_substep", err, kLayerTol));
    }
    {  // TKAN cell, one step
        KanOptions opts;
        Rng init(13);
        TkanCell cell(3, 4, 1, opts, CandidateActivation::Sigmoid, init);
        Tensor x = random_tensor({2, 3}, rng);
        auto params = block_params(cell);
        params.push_back(&x);
        const double err = finite_diff_check_params(
            [&] {
                CellState s = cell.initial_state(2);
                return sum(cell.step(x, s));
            },
            params, eps, kSkipFloor);
        results.push_back(check("tkan_cell", err, kLayerTol));
    }
    {  // GLU
        Rng init(14);
        GluBlock glu(4, init);
        Tensor x = random_tensor({3, 4}, rng);
        auto params = block_params(glu);
        params.push_back(&x);
        const double err =
            finite_diff_check_params([&] { return sum(glu.forward(x)); }, params, eps, kSkipFloor);
        results.push_back(check("glu", err, kLayerTol));
    }
    {  // GRN with a projected skip path (d_in != d_out)
        Rng init(15);
        Grn grn(3, 4, 4, init);
        Tensor x = random_tensor({3, 3}, rng);
        auto params = block_params(grn);
        params.push_back(&x);
        const double err =
            finite_diff_check_params([&] { return sum(grn.forward(x)); }, params, eps, kSkipFloor);
        results.push_back(check("grn", err, kLayerTol));
    }
    {  // VSN over three width-1 streams
        Rng init(16);
        Vsn vsn(3, 1, 4, init);
        std::vector<Tensor> streams = {random_tensor({3, 1}, rng), random_tensor({3, 1}, rng),
                                       random_tensor({3, 1}, rng)};
        auto params = block_params(vsn);
        for (Tensor& s : streams) params.push_back(&s);
        const double err = finite_diff_check_params(
            [&] { return sum(vsn.forward(streams).combined); }, params, eps, kSkipFloor);
        results.push_back(check("vsn", err, kLayerTol));
    }
    {  // multi-head self-attention
        Rng init(17);
        MultiHeadAttention mha(4, 2, 0, 0, init);
        Tensor x = random_tensor({3, 4}, rng);
        auto params = block_params(mha);
        params.push_back(&x);
        const double err = finite_diff_check_params(
            [&] { return sum(mha.forward(x).combined); }, params, eps, kSkipFloor);
        results.push_back(check("attention", err, kLayerTol));
    }
    {  // LSTM and GRU baseline cells, two chained steps
        Rng init(18);
        LstmCell lstm(3, 4, init);
        Tensor x1 = random_tensor({2, 3}, rng), x2 = random_tensor({2, 3}, rng);
        auto params = block_params(lstm);
        params.push_back(&x1);
        params.push_back(&x2);
        const double err = finite_diff_check_params(
            [&] {
                CellState s = lstm.initial_state(2);
                lstm.step(x1, s);
                return sum(lstm.step(x2, s));
            },
            params, eps, kSkipFloor);
        results.push_back(check("lstm_cell", err, kLayerTol));
    }
    {
        Rng init(19);
        GruCell gru(3, 4, init);
        Tensor x1 = random_tensor({2, 3}, rng), x2 = random_tensor({2, 3}, rng);
        auto params = block_params(gru);
        params.push_back(&x1);
        params.push_back(&x2);
        const double err = finite_diff_check_params(
            [&] {
                CellState s = gru.initial_state(2);
                gru.step(x1, s);
                return sum(gru.step(x2, s));
            },
            params, eps, kSkipFloor);
        results.push_back(check("gru_cell", err, kLayerTol));
    }
    {  // full model end to end, MSE loss on a 2-sample batch
        TkatConfig cfg;
        cfg.n_observed = 2;
        cfg.n_known = 1;
        cfg.past_len = 3;
        cfg.horizon = 2;
        cfg.d_model = 4;
        cfg.heads = 2;
        cfg.units = 4;
        cfg.seed = 99;
        TkatModel model(cfg);
        Tensor past = random_tensor({2, 3, 3}, rng, 0.05, 0.95);
        Tensor future = random_tensor({2, 2, 1}, rng, 0.05, 0.95);
        Tensor truth = random_tensor({2, 2}, rng, 0.1, 0.9);
        std::vector<Tensor*> params;
        model.visit_params([&](const std::string&, Tensor& t) { params.push_back(&t); });
        params.push_back(&past);
        params.push_back(&future);
        const double err = finite_diff_check_params(
            [&] { return mse_loss(model.forward(past, future), truth); }, params, eps, kSkipFloor);
        results.push_back(check("tkat_end_to_end", err, kEndToEndTol));
    }
    return results;
}

}  // namespace tkat
