#include "tkat/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "tkat/fusion.hpp"

namespace tkat {

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            Tensor* weights_out) {
    if (q.dim(-1) != k.dim(-1)) {
        throw std::invalid_argument("attention: query/key width mismatch, " +
                                    shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    }
    if (k.dim(-2) != v.dim(-2)) {
        throw std::invalid_argument("attention: key/value length mismatch, " +
                                    shape_str(k.shape()) + " vs " + shape_str(v.shape()));
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
    Tensor scores = scale(matmul(q, k, false, true), inv_sqrt);
    Tensor weights = softmax(scores, -1);
    if (weights_out) *weights_out = weights;
    return matmul(weights, v);
}

MultiHeadAttention::MultiHeadAttention(int d_model_, int n_heads_, int d_attn_, int d_v_, Rng& rng)
    : d_model(d_model_), n_heads(n_heads_), d_attn(d_attn_), d_v(d_v_) {
    if (n_heads < 1) throw std::invalid_argument("MultiHeadAttention: needs at least one head");
    if (d_attn == 0 || d_v == 0) {
        if (d_model % n_heads != 0) {
            throw std::invalid_argument("MultiHeadAttention: d_model " + std::to_string(d_model) +
                                        " not divisible by " + std::to_string(n_heads) +
                                        " heads; set d_attn/d_v explicitly");
        }
        if (d_attn == 0) d_attn = d_model / n_heads;
        if (d_v == 0) d_v = d_model / n_heads;
    }
    for (int h = 0; h < n_heads; ++h) {
        w_query.push_back(glorot_uniform({d_model, d_attn}, d_model, d_attn, rng));
        w_key.push_back(glorot_uniform({d_model, d_attn}, d_model, d_attn, rng));
        w_value.push_back(glorot_uniform({d_model, d_v}, d_model, d_v, rng));
    }
    w_combine = glorot_uniform({n_heads * d_v, d_model}, n_heads * d_v, d_model, rng);
}

MhaOutput MultiHeadAttention::forward(const Tensor& x, std::vector<Tensor>* head_weights) const {
    if (x.dim(-1) != d_model) {
        throw std::invalid_argument("MultiHeadAttention: expected last dim " +
                                    std::to_string(d_model) + ", got " + shape_str(x.shape()));
    }
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const size_t hh = static_cast<size_t>(h);
        Tensor qh = matmul(x, w_query[hh]);
        Tensor kh = matmul(x, w_key[hh]);
        Tensor vh = matmul(x, w_value[hh]);
        Tensor weights;
        heads.push_back(scaled_dot_attention(qh, kh, vh, head_weights ? &weights : nullptr));
        if (head_weights) head_weights->push_back(weights);
    }
    MhaOutput out;
    out.concat_heads = n_heads == 1
                           ? heads[0]
                           : concat(std::span<const Tensor>(heads.data(), heads.size()), -1);
    out.combined = matmul(out.concat_heads, w_combine);
    return out;
}

void MultiHeadAttention::visit_params(const std::string& prefix, const ParamVisitor& v) {
    for (int h = 0; h < n_heads; ++h) {
        const std::string head = prefix + ".head" + std::to_string(h);
        v(head + ".w_query", w_query[static_cast<size_t>(h)]);
        v(head + ".w_key", w_key[static_cast<size_t>(h)]);
        v(head + ".w_value", w_value[static_cast<size_t>(h)]);
    }
    v(prefix + ".w_combine", w_combine);
}

Tensor flatten_time(const Tensor& x) {
    if (x.rank() == 2) return reshape(x, {x.dim(0) * x.dim(1)});
    if (x.rank() == 3) return reshape(x, {x.dim(0), x.dim(1) * x.dim(2)});
    throw std::invalid_argument("flatten_time: expected rank 2 or 3, got " +
                                shape_str(x.shape()));
}

OutputHead::OutputHead(int flat_width_, int horizon_, Rng& rng)
    : flat_width(flat_width_), horizon(horizon_) {
    if (flat_width < 1 || horizon < 1) throw std::invalid_argument("OutputHead: bad dimensions");
    w = glorot_uniform({flat_width, horizon}, flat_width, horizon, rng);
    b = Tensor::zeros({horizon}).set_requires_grad(true);
}

Tensor OutputHead::forward(const Tensor& flat) const {
    if (flat.dim(-1) != flat_width) {
        throw std::invalid_argument("OutputHead: expected width " + std::to_string(flat_width) +
                                    ", got " + shape_str(flat.shape()));
    }
    if (flat.rank() == 1) {
        return reshape(add(matmul(reshape(flat, {1, flat_width}), w), b), {horizon});
    }
    return add(matmul(flat, w), b);
}

void OutputHead::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".w", w);
    v(prefix + ".b", b);
}

Tensor sinusoidal_encoding(int64_t steps, int64_t d_model) {
    std::vector<double> pe(static_cast<size_t>(steps * d_model));
    for (int64_t t = 0; t < steps; ++t) {
        for (int64_t j = 0; j < d_model; ++j) {
            const double angle =
                static_cast<double>(t) /
                std::pow(10000.0, 2.0 * static_cast<double>(j / 2) / static_cast<double>(d_model));
            pe[static_cast<size_t>(t * d_model + j)] = (j % 2 == 0) ? std::sin(angle)
                                                                    : std::cos(angle);
        }
    }
    return Tensor::from_vector({steps, d_model}, std::move(pe));
}

}  // namespace tkat
