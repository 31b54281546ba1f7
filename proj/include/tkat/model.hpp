#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tkat/attention.hpp"
#include "tkat/fusion.hpp"
#include "tkat/recurrent.hpp"
#include "tkat/spline.hpp"
#include "tkat/tensor.hpp"

namespace tkat {

// Common surface for everything the training loop and benchmark drive.
class ForecastModel {
public:
    virtual ~ForecastModel() = default;
    // past: [batch, P, n_features]; future_known: [batch, horizon, n_known].
    // Models without a decoder path ignore future_known.
    virtual Tensor forward(const Tensor& past, const Tensor& future_known) = 0;
    virtual void visit_params(const ParamVisitor& v) = 0;
    virtual std::string kind() const = 0;
    virtual int horizon() const = 0;
};

std::vector<std::pair<std::string, Tensor*>> named_params(ForecastModel& model);
int64_t count_parameters(ForecastModel& model,
                         std::map<std::string, int64_t>* breakdown = nullptr);

enum class TkatVariant { BASE, A, B };
enum class FlattenMode { Sequence, PerHead };

struct TkatConfig {
    int n_observed = 0;
    int n_known = 0;
    int past_len = 30;
    int horizon = 1;
    int d_model = 100;
    int heads = 4;
    int units = 0;  // 0 -> d_model
    int n_recurrent_layers = 1;
    CellKind cell_kind = CellKind::TKAN;
    TkatVariant variant = TkatVariant::BASE;
    KanOptions kan;
    int rkan_sublayers = 1;
    int embed_width = 1;
    FlattenMode flatten = FlattenMode::Sequence;
    CandidateActivation candidate = CandidateActivation::Sigmoid;
    bool positional_encoding = false;
    int d_attn = 0;  // 0 -> d_model / heads
    int d_v = 0;
    uint64_t seed = 0;

    int n_features() const { return n_observed + n_known; }
    int effective_units() const { return units > 0 ? units : d_model; }
    void validate() const;
};

// Captured intermediates from one forward pass, for inspection/export.
struct ForwardTrace {
    Tensor vsn_weights_past;    // [batch*P, n_features]
    Tensor vsn_weights_future;  // [batch*horizon, n_known]
    std::vector<Tensor> attention_heads;
    Tensor encoder_final_c;
    Tensor decoder_initial_c;
};

// Encoder-decoder forecaster: per-feature embeddings -> variable
// selection -> recurrent encoder over the past -> recurrent decoder over
// the known future seeded with the encoder final cell state -> position-
// wise GRN -> multi-head self-attention over the whole sequence ->
// variant head -> flatten -> linear multi-horizon projection.
class TkatModel : public ForecastModel {
public:
    explicit TkatModel(const TkatConfig& config);

    Tensor forward(const Tensor& past, const Tensor& future_known) override;
    Tensor forward(const Tensor& past, const Tensor& future_known, ForwardTrace* trace);

    void visit_params(const ParamVisitor& v) override;
    std::string kind() const override;
    int horizon() const override { return config_.horizon; }
    const TkatConfig& config() const { return config_; }

private:
    TkatConfig config_;
    FeatureEmbedding embed_;
    Vsn vsn_past_;
    Vsn vsn_future_;
    std::vector<std::unique_ptr<RecurrentCell>> encoder_;
    std::vector<std::unique_ptr<RecurrentCell>> decoder_;
    Grn pre_attn_grn_;
    MultiHeadAttention attention_;
    // variant A adds a gate+add+norm over the attention output; variant B
    // adds a GRN and a second gate+add+norm fed by the pre-GRN sequence
    GluBlock glu_a_;
    Tensor ln_a_gain_, ln_a_bias_;
    Grn grn_b_;
    GluBlock glu_b_;
    Tensor ln_b_gain_, ln_b_bias_;
    OutputHead head_;
    Tensor positional_;  // [P+horizon, d_model] when enabled
};

}  // namespace tkat
