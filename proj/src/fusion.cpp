#include "tkat/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace tkat {

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    return Tensor::generate(std::move(shape), [&](int64_t) { return rng.uniform(-bound, bound); })
        .set_requires_grad(true);
}

Linear::Linear(int in, int out, Rng& rng) : in_dim(in), out_dim(out) {
    if (in < 1 || out < 1) throw std::invalid_argument("Linear: dimensions must be positive");
    w = glorot_uniform({out, in}, in, out, rng);
    b = Tensor::zeros({out}).set_requires_grad(true);
}

Tensor Linear::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_dim) {
        throw std::invalid_argument("Linear: expected [batch," + std::to_string(in_dim) +
                                    "], got " + shape_str(x.shape()));
    }
    return add(matmul(x, w, false, true), b);
}

GluBlock::GluBlock(int d, Rng& rng) : dim(d) {
    w_gate = glorot_uniform({d, d}, d, d, rng);
    b_gate = Tensor::zeros({d}).set_requires_grad(true);
    w_value = glorot_uniform({d, d}, d, d, rng);
    b_value = Tensor::zeros({d}).set_requires_grad(true);
}

Tensor GluBlock::forward(const Tensor& x) const {
    if (x.dim(-1) != dim) {
        throw std::invalid_argument("GluBlock: expected last dim " + std::to_string(dim) +
                                    ", got " + shape_str(x.shape()));
    }
    Tensor gate = sigmoid(add(matmul(x, w_gate, false, true), b_gate));
    Tensor value = add(matmul(x, w_value, false, true), b_value);
    return mul(gate, value);
}

void GluBlock::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".w_gate", w_gate);
    v(prefix + ".b_gate", b_gate);
    v(prefix + ".w_value", w_value);
    v(prefix + ".b_value", b_value);
}

Grn::Grn(int in, int hidden, int out, Rng& rng) : d_in(in), d_hidden(hidden), d_out(out) {
    w_hidden = glorot_uniform({hidden, in}, in, hidden, rng);
    b_hidden = Tensor::zeros({hidden}).set_requires_grad(true);
    w_out = glorot_uniform({out, hidden}, hidden, out, rng);
    b_out = Tensor::zeros({out}).set_requires_grad(true);
    glu = GluBlock(out, rng);
    ln_gain = Tensor::ones({out}).set_requires_grad(true);
    ln_bias = Tensor::zeros({out}).set_requires_grad(true);
    if (in != out) w_skip = glorot_uniform({out, in}, in, out, rng);
}

Tensor Grn::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != d_in) {
        throw std::invalid_argument("Grn: expected [batch," + std::to_string(d_in) + "], got " +
                                    shape_str(x.shape()));
    }
    Tensor hidden = elu(add(matmul(x, w_hidden, false, true), b_hidden));
    Tensor pre_gate = add(matmul(hidden, w_out, false, true), b_out);
    Tensor skip = d_in == d_out ? x : matmul(x, w_skip, false, true);
    return layer_norm(add(skip, glu.forward(pre_gate)), ln_gain, ln_bias);
}

void Grn::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".w_hidden", w_hidden);
    v(prefix + ".b_hidden", b_hidden);
    v(prefix + ".w_out", w_out);
    v(prefix + ".b_out", b_out);
    glu.visit_params(prefix + ".glu", v);
    v(prefix + ".ln_gain", ln_gain);
    v(prefix + ".ln_bias", ln_bias);
    if (w_skip.defined()) v(prefix + ".w_skip", w_skip);
}

FeatureEmbedding::FeatureEmbedding(int m, int w, Rng& rng) : n_features(m), width(w) {
    if (m < 1 || w < 1) throw std::invalid_argument("FeatureEmbedding: bad dimensions");
    a = glorot_uniform({m, w}, 1, w, rng);
    b = Tensor::zeros({m, w}).set_requires_grad(true);
}

std::vector<Tensor> FeatureEmbedding::forward(const Tensor& raw,
                                              const std::vector<int>& ids) const {
    if (raw.rank() != 2 || raw.dim(1) != static_cast<int64_t>(ids.size())) {
        throw std::invalid_argument("FeatureEmbedding: input " + shape_str(raw.shape()) +
                                    " does not match " + std::to_string(ids.size()) +
                                    " feature ids");
    }
    std::vector<Tensor> streams;
    streams.reserve(ids.size());
    for (size_t c = 0; c < ids.size(); ++c) {
        const int j = ids[c];
        if (j < 0 || j >= n_features) throw std::invalid_argument("FeatureEmbedding: bad id");
        Tensor col = slice(raw, 1, static_cast<int64_t>(c), 1);  // [batch, 1]
        Tensor aj = slice(a, 0, j, 1);                           // [1, w]
        Tensor bj = slice(b, 0, j, 1);
        streams.push_back(add(mul(col, aj), bj));  // [batch, w]
    }
    return streams;
}

void FeatureEmbedding::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".a", a);
    v(prefix + ".b", b);
}

Vsn::Vsn(int m, int w, int d, Rng& rng) : n_vars(m), input_width(w), d_model(d) {
    if (m < 1) throw std::invalid_argument("Vsn: needs at least one variable");
    // a single variable always gets weight 1 (softmax of a singleton), so
    // no selection network is built for it
    if (m > 1) selection = Grn(m * w, d, m, rng);
    per_var.reserve(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) per_var.emplace_back(w, d, d, rng);
}

VsnResult Vsn::forward(const std::vector<Tensor>& streams) const {
    if (static_cast<int>(streams.size()) != n_vars) {
        throw std::invalid_argument("Vsn: expected " + std::to_string(n_vars) + " streams, got " +
                                    std::to_string(streams.size()));
    }
    Tensor weights;
    if (n_vars == 1) {
        weights = Tensor::ones({streams[0].dim(0), 1});
    } else {
        Tensor flat = concat(std::span<const Tensor>(streams.data(), streams.size()), 1);
        weights = softmax(selection.forward(flat), -1);  // [batch, m]
    }
    Tensor combined;
    for (int j = 0; j < n_vars; ++j) {
        Tensor processed = per_var[static_cast<size_t>(j)].forward(streams[static_cast<size_t>(j)]);
        Tensor weighted = mul(slice(weights, 1, j, 1), processed);
        combined = j == 0 ? weighted : add(combined, weighted);
    }
    return {combined, weights};
}

void Vsn::visit_params(const std::string& prefix, const ParamVisitor& v) {
    if (n_vars > 1) selection.visit_params(prefix + ".selection", v);
    for (int j = 0; j < n_vars; ++j) {
        per_var[static_cast<size_t>(j)].visit_params(prefix + ".var" + std::to_string(j), v);
    }
}

}  // namespace tkat
