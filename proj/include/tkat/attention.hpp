#pragma once

#include <string>
#include <vector>

#include "tkat/rng.hpp"
#include "tkat/tensor.hpp"

namespace tkat {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// Softmax(Q K^T / sqrt(d_attn)) V, unmasked. Operands are [T,d] or
// batched [B,T,d]. Pass weights_out to inspect the attention rows.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            Tensor* weights_out = nullptr);

struct MhaOutput {
    Tensor combined;      // [.., T, d_model]
    Tensor concat_heads;  // [.., T, n_heads*d_v], pre-combiner
};

// Self-attention with per-head projections and a linear combiner. No
// causal mask and no positional encoding here; the whole sequence is
// visible to every position.
struct MultiHeadAttention {
    int d_model = 0;
    int n_heads = 0;
    int d_attn = 0;
    int d_v = 0;
    std::vector<Tensor> w_query;  // per head [d_model, d_attn]
    std::vector<Tensor> w_key;    // per head [d_model, d_attn]
    std::vector<Tensor> w_value;  // per head [d_model, d_v]
    Tensor w_combine;             // [n_heads*d_v, d_model]

    MultiHeadAttention() = default;
    // d_attn/d_v of 0 default to d_model / n_heads (must divide).
    MultiHeadAttention(int d_model, int n_heads, int d_attn, int d_v, Rng& rng);

    MhaOutput forward(const Tensor& x, std::vector<Tensor>* head_weights = nullptr) const;
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// Row-major flattening of a full sequence: [T,d] -> [T*d], or batched
// [B,T,d] -> [B,T*d].
Tensor flatten_time(const Tensor& x);

// Final projection: every forecast step gets its own weight row over the
// flattened sequence.
struct OutputHead {
    int flat_width = 0;
    int horizon = 0;
    Tensor w;  // [flat_width, horizon]
    Tensor b;  // [horizon]

    OutputHead() = default;
    OutputHead(int flat_width, int horizon, Rng& rng);

    Tensor forward(const Tensor& flat) const;  // [batch, flat] -> [batch, horizon]
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// Sinusoidal position table, [T, d]; optional ablation input to the
// attention block.
Tensor sinusoidal_encoding(int64_t steps, int64_t d_model);

}  // namespace tkat
