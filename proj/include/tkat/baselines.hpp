#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tkat/linear.hpp"
#include "tkat/model.hpp"
#include "tkat/recurrent.hpp"

namespace tkat {

// Two stacked recurrent layers finalized by a dense linear layer over the
// final hidden state. Ignores the known-future inputs.
class SimpleRecurrentModel : public ForecastModel {
public:
    SimpleRecurrentModel(CellKind kind, int input_width, int units, int horizon,
                         const KanOptions& opts, uint64_t seed);

    Tensor forward(const Tensor& past, const Tensor& future_known) override;
    void visit_params(const ParamVisitor& v) override;
    std::string kind() const override;
    int horizon() const override { return horizon_; }

private:
    CellKind cell_kind_;
    int input_width_ = 0;
    int horizon_ = 0;
    std::vector<std::unique_ptr<RecurrentCell>> layers_;
    Linear head_;
};

// Flatten(past) -> dense(hidden, relu) -> dense(hidden, relu) -> dense(horizon).
class MlpModel : public ForecastModel {
public:
    MlpModel(int input_width, int past_len, int hidden, int horizon, uint64_t seed);

    Tensor forward(const Tensor& past, const Tensor& future_known) override;
    void visit_params(const ParamVisitor& v) override;
    std::string kind() const override { return "MLP"; }
    int horizon() const override { return horizon_; }

private:
    int input_width_ = 0;
    int past_len_ = 0;
    int horizon_ = 0;
    Linear dense1_, dense2_, head_;
};

struct ModelSpec {
    int n_observed = 0;
    int n_known = 0;
    int past_len = 30;
    int horizon = 1;
    int d_model = 100;
    int heads = 4;
    int units = 100;       // simple recurrent baselines
    int mlp_hidden = 100;
    KanOptions kan;
    int rkan_sublayers = 1;
    uint64_t seed = 0;
};

// Known names: TKAT, TKATN, TKAT-A, TKATN-A, TKAT-B, TKATN-B,
// TKAN-simple (alias TKAN), GRU, LSTM, MLP.
std::unique_ptr<ForecastModel> build_model(const std::string& name, const ModelSpec& spec);
bool is_known_model(const std::string& name);
const std::vector<std::string>& all_model_names();

}  // namespace tkat
