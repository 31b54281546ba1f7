#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tkat/linear.hpp"
#include "tkat/rng.hpp"
#include "tkat/tensor.hpp"

namespace tkat {

// Gated linear unit: sigmoid(x.Wg^T + bg) (hadamard) (x.Wv^T + bv).
// The gate can close a branch entirely when its pre-activation saturates
// negative.
struct GluBlock {
    int dim = 0;
    Tensor w_gate, b_gate;    // [d,d], [d]
    Tensor w_value, b_value;  // [d,d], [d]

    GluBlock() = default;
    GluBlock(int dim, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// Gated residual network without the external context input:
//   out = LayerNorm(skip(x) + GLU(W_out . ELU(W_hidden . x + b_hidden) + b_out))
// skip(x) is the identity when d_in == d_out, otherwise a linear
// projection on the residual path.
struct Grn {
    int d_in = 0, d_hidden = 0, d_out = 0;
    Tensor w_hidden, b_hidden;  // [hidden, in]
    Tensor w_out, b_out;        // [out, hidden]
    GluBlock glu;               // on d_out
    Tensor ln_gain, ln_bias;    // [out]
    Tensor w_skip;              // [out, in], only when d_in != d_out

    Grn() = default;
    Grn(int d_in, int d_hidden, int d_out, Rng& rng);

    Tensor forward(const Tensor& x) const;  // [batch, d_in] -> [batch, d_out]
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// Per-feature width-1 (or width-w) affine embedding; feature j owns its
// own row of a and b.
struct FeatureEmbedding {
    int n_features = 0;
    int width = 1;
    Tensor a;  // [m, w]
    Tensor b;  // [m, w]

    FeatureEmbedding() = default;
    FeatureEmbedding(int n_features, int width, Rng& rng);

    // raw: [batch, n_selected]; ids select which feature rows apply to the
    // columns of raw. Returns one [batch, width] stream per column.
    std::vector<Tensor> forward(const Tensor& raw, const std::vector<int>& ids) const;

    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

struct VsnResult {
    Tensor combined;  // [batch, d_model]
    Tensor weights;   // [batch, n_vars], rows on the simplex
};

// Variable selection network: softmax weights from a GRN over the
// flattened inputs, one GRN per variable (weights shared across all time
// steps by construction), convex combination of the processed streams.
struct Vsn {
    int n_vars = 0;
    int input_width = 1;
    int d_model = 0;
    Grn selection;             // [m*w] -> m logits
    std::vector<Grn> per_var;  // each [w] -> d_model

    Vsn() = default;
    Vsn(int n_vars, int input_width, int d_model, Rng& rng);

    VsnResult forward(const std::vector<Tensor>& streams) const;
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

}  // namespace tkat
