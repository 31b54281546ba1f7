#include "tkat/model.hpp"

#include <array>
#include <numeric>
#include <stdexcept>

namespace tkat {

std::vector<std::pair<std::string, Tensor*>> named_params(ForecastModel& model) {
    std::vector<std::pair<std::string, Tensor*>> out;
    model.visit_params([&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

int64_t count_parameters(ForecastModel& model, std::map<std::string, int64_t>* breakdown) {
    int64_t total = 0;
    model.visit_params([&](const std::string& name, Tensor& t) {
        total += t.size();
        if (breakdown) {
            const size_t dot = name.find('.');
            (*breakdown)[name.substr(0, dot)] += t.size();
        }
    });
    return total;
}

void TkatConfig::validate() const {
    if (n_observed + n_known < 1) throw std::invalid_argument("TkatConfig: no input features");
    if (n_known < 1) throw std::invalid_argument("TkatConfig: decoder needs known features");
    if (past_len < 1 || horizon < 1) {
        throw std::invalid_argument("TkatConfig: past_len and horizon must be >= 1");
    }
    if (d_model < 2) throw std::invalid_argument("TkatConfig: d_model must be >= 2");
    if (heads < 1) throw std::invalid_argument("TkatConfig: heads must be >= 1");
    if (n_recurrent_layers < 1) throw std::invalid_argument("TkatConfig: needs recurrent layers");
    if (embed_width < 1) throw std::invalid_argument("TkatConfig: embed_width must be >= 1");
    if (cell_kind == CellKind::GRU) {
        throw std::invalid_argument("TkatConfig: recurrent stacks are TKAN or LSTM");
    }
    if ((d_attn == 0 || d_v == 0) && d_model % heads != 0) {
        throw std::invalid_argument("TkatConfig: d_model not divisible by heads");
    }
    if (flatten == FlattenMode::PerHead && variant != TkatVariant::BASE) {
        throw std::invalid_argument("TkatConfig: per-head flattening only supports BASE variant");
    }
}

namespace {

Rng group_rng(uint64_t seed, const char* group) { return Rng(mix_seed(seed, fnv1a(group))); }

std::vector<int> iota_ids(int from, int count) {
    std::vector<int> ids(static_cast<size_t>(count));
    std::iota(ids.begin(), ids.end(), from);
    return ids;
}

}  // namespace

TkatModel::TkatModel(const TkatConfig& config) : config_(config) {
    config_.validate();
    const int f_all = config_.n_features();
    const int units = config_.effective_units();
    const int seq_len = config_.past_len + config_.horizon;

    {
        Rng rng = group_rng(config_.seed, "embed");
        embed_ = FeatureEmbedding(f_all, config_.embed_width, rng);
    }
    {
        Rng rng = group_rng(config_.seed, "vsn_past");
        vsn_past_ = Vsn(f_all, config_.embed_width, config_.d_model, rng);
    }
    {
        Rng rng = group_rng(config_.seed, "vsn_future");
        vsn_future_ = Vsn(config_.n_known, config_.embed_width, config_.d_model, rng);
    }
    {
        Rng rng = group_rng(config_.seed, "encoder");
        int in = config_.d_model;
        for (int l = 0; l < config_.n_recurrent_layers; ++l) {
            encoder_.push_back(make_cell(config_.cell_kind, in, units, config_.kan,
                                         config_.candidate, config_.rkan_sublayers, rng));
            in = units;
        }
    }
    {
        Rng rng = group_rng(config_.seed, "decoder");
        int in = config_.d_model;
        for (int l = 0; l < config_.n_recurrent_layers; ++l) {
            decoder_.push_back(make_cell(config_.cell_kind, in, units, config_.kan,
                                         config_.candidate, config_.rkan_sublayers, rng));
            in = units;
        }
    }
    {
        Rng rng = group_rng(config_.seed, "pre_attn_grn");
        pre_attn_grn_ = Grn(units, config_.d_model, config_.d_model, rng);
    }
    {
        Rng rng = group_rng(config_.seed, "attention");
        attention_ =
            MultiHeadAttention(config_.d_model, config_.heads, config_.d_attn, config_.d_v, rng);
    }
    if (config_.variant == TkatVariant::A || config_.variant == TkatVariant::B) {
        Rng rng = group_rng(config_.seed, "variant_a");
        glu_a_ = GluBlock(config_.d_model, rng);
        ln_a_gain_ = Tensor::ones({config_.d_model}).set_requires_grad(true);
        ln_a_bias_ = Tensor::zeros({config_.d_model}).set_requires_grad(true);
    }
    if (config_.variant == TkatVariant::B) {
        Rng rng = group_rng(config_.seed, "variant_b");
        grn_b_ = Grn(config_.d_model, config_.d_model, config_.d_model, rng);
        glu_b_ = GluBlock(config_.d_model, rng);
        ln_b_gain_ = Tensor::ones({config_.d_model}).set_requires_grad(true);
        ln_b_bias_ = Tensor::zeros({config_.d_model}).set_requires_grad(true);
    }
    {
        Rng rng = group_rng(config_.seed, "head");
        const int flat_width = config_.flatten == FlattenMode::Sequence
                                   ? seq_len * config_.d_model
                                   : seq_len * attention_.n_heads * attention_.d_v;
        head_ = OutputHead(flat_width, config_.horizon, rng);
    }
    if (config_.positional_encoding) {
        positional_ = sinusoidal_encoding(seq_len, config_.d_model);
    }
}

std::string TkatModel::kind() const {
    std::string name = config_.cell_kind == CellKind::TKAN ? "TKAT" : "TKATN";
    if (config_.variant == TkatVariant::A) name += "-A";
    if (config_.variant == TkatVariant::B) name += "-B";
    return name;
}

Tensor TkatModel::forward(const Tensor& past, const Tensor& future_known) {
    return forward(past, future_known, nullptr);
}

Tensor TkatModel::forward(const Tensor& past, const Tensor& future_known, ForwardTrace* trace) {
    const int f_all = config_.n_features();
    if (past.rank() != 3 || past.dim(1) != config_.past_len || past.dim(2) != f_all) {
        throw std::invalid_argument("TkatModel: expected past [batch," +
                                    std::to_string(config_.past_len) + "," +
                                    std::to_string(f_all) + "], got " + shape_str(past.shape()));
    }
    if (future_known.rank() != 3 || future_known.dim(1) != config_.horizon ||
        future_known.dim(2) != config_.n_known) {
        throw std::invalid_argument("TkatModel: expected future [batch," +
                                    std::to_string(config_.horizon) + "," +
                                    std::to_string(config_.n_known) + "], got " +
                                    shape_str(future_known.shape()));
    }
    const int64_t batch = past.dim(0);
    const int64_t p = config_.past_len;
    const int64_t tau = config_.horizon;
    const int64_t d = config_.d_model;
    const int units = config_.effective_units();

    // past path: embed every feature, select, encode
    Tensor past2d = reshape(past, {batch * p, f_all});
    VsnResult sel_past = vsn_past_.forward(embed_.forward(past2d, iota_ids(0, f_all)));
    Tensor enc_in = reshape(sel_past.combined, {batch, p, d});

    std::vector<CellState> enc_final;
    Tensor enc_seq = enc_in;
    for (auto& cell : encoder_) {
        SequenceResult r = run_sequence(*cell, enc_seq, nullptr, true);
        enc_seq = r.outputs;
        enc_final.push_back(r.final_state);
    }

    // future path: known features only, decoder starts from the encoder
    // final cell state
    Tensor fut2d = reshape(future_known, {batch * tau, config_.n_known});
    VsnResult sel_fut =
        vsn_future_.forward(embed_.forward(fut2d, iota_ids(config_.n_observed, config_.n_known)));
    Tensor dec_seq = reshape(sel_fut.combined, {batch, tau, d});
    for (size_t l = 0; l < decoder_.size(); ++l) {
        CellState init = decoder_[l]->initial_state(batch);
        init.c = enc_final[l].c;
        if (trace && l == decoder_.size() - 1) {
            trace->encoder_final_c = enc_final[l].c;
            trace->decoder_initial_c = init.c;
        }
        SequenceResult r = run_sequence(*decoder_[l], dec_seq, &init, true);
        dec_seq = r.outputs;
    }

    // whole sequence (past + future positions) through a shared GRN, then
    // self-attention
    std::array<Tensor, 2> seq_parts{enc_seq, dec_seq};
    Tensor grn_in_seq = concat(std::span<const Tensor>(seq_parts.data(), 2), 1);
    const int64_t total = p + tau;
    Tensor pre_attn =
        reshape(pre_attn_grn_.forward(reshape(grn_in_seq, {batch * total, units})),
                {batch, total, d});
    if (config_.positional_encoding) pre_attn = add(pre_attn, positional_);

    std::vector<Tensor> head_weights;
    MhaOutput mha = attention_.forward(pre_attn, trace ? &head_weights : nullptr);
    if (trace) {
        trace->vsn_weights_past = sel_past.weights;
        trace->vsn_weights_future = sel_fut.weights;
        trace->attention_heads = std::move(head_weights);
    }

    Tensor head_seq;
    switch (config_.variant) {
        case TkatVariant::BASE: head_seq = mha.combined; break;
        case TkatVariant::A: {
            Tensor gated = glu_a_.forward(reshape(mha.combined, {batch * total, d}));
            head_seq = layer_norm(add(reshape(pre_attn, {batch * total, d}), gated), ln_a_gain_,
                                  ln_a_bias_);
            head_seq = reshape(head_seq, {batch, total, d});
            break;
        }
        case TkatVariant::B: {
            Tensor gated = glu_a_.forward(reshape(mha.combined, {batch * total, d}));
            Tensor a_out = layer_norm(add(reshape(pre_attn, {batch * total, d}), gated),
                                      ln_a_gain_, ln_a_bias_);
            Tensor enriched = grn_b_.forward(a_out);
            Tensor gated_b = glu_b_.forward(enriched);
            // feedforward of the pre-GRN inputs; widths must already agree
            if (units != d) {
                throw std::invalid_argument(
                    "TkatModel: variant B requires units == d_model for the final residual");
            }
            head_seq = layer_norm(add(reshape(grn_in_seq, {batch * total, d}), gated_b),
                                  ln_b_gain_, ln_b_bias_);
            head_seq = reshape(head_seq, {batch, total, d});
            break;
        }
    }

    Tensor flat = config_.flatten == FlattenMode::Sequence ? flatten_time(head_seq)
                                                           : flatten_time(mha.concat_heads);
    return head_.forward(flat);
}

void TkatModel::visit_params(const ParamVisitor& v) {
    embed_.visit_params("embed", v);
    vsn_past_.visit_params("vsn_past", v);
    vsn_future_.visit_params("vsn_future", v);
    for (size_t l = 0; l < encoder_.size(); ++l) {
        encoder_[l]->visit_params("encoder." + std::to_string(l), v);
    }
    for (size_t l = 0; l < decoder_.size(); ++l) {
        decoder_[l]->visit_params("decoder." + std::to_string(l), v);
    }
    pre_attn_grn_.visit_params("pre_attn_grn", v);
    attention_.visit_params("attention", v);
    if (config_.variant == TkatVariant::A || config_.variant == TkatVariant::B) {
        glu_a_.visit_params("variant.glu_a", v);
        v("variant.ln_a_gain", ln_a_gain_);
        v("variant.ln_a_bias", ln_a_bias_);
    }
    if (config_.variant == TkatVariant::B) {
        grn_b_.visit_params("variant.grn_b", v);
        glu_b_.visit_params("variant.glu_b", v);
        v("variant.ln_b_gain", ln_b_gain_);
        v("variant.ln_b_bias", ln_b_bias_);
    }
    head_.visit_params("head", v);
}

}  // namespace tkat
