#include "tkat/baselines.hpp"

#include <stdexcept>

namespace tkat {

SimpleRecurrentModel::SimpleRecurrentModel(CellKind kind, int input_width, int units, int horizon,
                                           const KanOptions& opts, uint64_t seed)
    : cell_kind_(kind), input_width_(input_width), horizon_(horizon) {
    Rng rng(mix_seed(seed, fnv1a("simple_recurrent")));
    layers_.push_back(make_cell(kind, input_width, units, opts, CandidateActivation::Sigmoid, 1,
                                rng));
    layers_.push_back(make_cell(kind, units, units, opts, CandidateActivation::Sigmoid, 1, rng));
    head_ = Linear(units, horizon, rng);
}

Tensor SimpleRecurrentModel::forward(const Tensor& past, const Tensor& future_known) {
    (void)future_known;
    if (past.rank() != 3 || past.dim(2) != input_width_) {
        throw std::invalid_argument("SimpleRecurrentModel: expected past [batch,T," +
                                    std::to_string(input_width_) + "], got " +
                                    shape_str(past.shape()));
    }
    SequenceResult first = run_sequence(*layers_[0], past, nullptr, true);
    SequenceResult second = run_sequence(*layers_[1], first.outputs, nullptr, false);
    return head_.forward(second.outputs);
}

void SimpleRecurrentModel::visit_params(const ParamVisitor& v) {
    for (size_t l = 0; l < layers_.size(); ++l) {
        layers_[l]->visit_params("recurrent." + std::to_string(l), v);
    }
    head_.visit_params("head", v);
}

std::string SimpleRecurrentModel::kind() const {
    switch (cell_kind_) {
        case CellKind::TKAN: return "TKAN-simple";
        case CellKind::GRU: return "GRU";
        case CellKind::LSTM: return "LSTM";
    }
    return "?";
}

MlpModel::MlpModel(int input_width, int past_len, int hidden, int horizon, uint64_t seed)
    : input_width_(input_width), past_len_(past_len), horizon_(horizon) {
    Rng rng(mix_seed(seed, fnv1a("mlp")));
    dense1_ = Linear(input_width * past_len, hidden, rng);
    dense2_ = Linear(hidden, hidden, rng);
    head_ = Linear(hidden, horizon, rng);
}

Tensor MlpModel::forward(const Tensor& past, const Tensor& future_known) {
    (void)future_known;
    if (past.rank() != 3 || past.dim(1) != past_len_ || past.dim(2) != input_width_) {
        throw std::invalid_argument("MlpModel: expected past [batch," +
                                    std::to_string(past_len_) + "," +
                                    std::to_string(input_width_) + "], got " +
                                    shape_str(past.shape()));
    }
    Tensor flat = reshape(past, {past.dim(0), past.dim(1) * past.dim(2)});
    Tensor h1 = relu(dense1_.forward(flat));
    Tensor h2 = relu(dense2_.forward(h1));
    return head_.forward(h2);
}

void MlpModel::visit_params(const ParamVisitor& v) {
    dense1_.visit_params("dense1", v);
    dense2_.visit_params("dense2", v);
    head_.visit_params("head", v);
}

namespace {

const std::vector<std::string> kModelNames = {"TKAT",    "TKATN",   "TKAT-A", "TKATN-A",
                                              "TKAT-B",  "TKATN-B", "TKAN-simple",
                                              "GRU",     "LSTM",    "MLP"};

TkatConfig tkat_config_from_spec(const ModelSpec& spec, CellKind cell, TkatVariant variant) {
    TkatConfig cfg;
    cfg.n_observed = spec.n_observed;
    cfg.n_known = spec.n_known;
    cfg.past_len = spec.past_len;
    cfg.horizon = spec.horizon;
    cfg.d_model = spec.d_model;
    cfg.heads = spec.heads;
    cfg.kan = spec.kan;
    cfg.rkan_sublayers = spec.rkan_sublayers;
    cfg.cell_kind = cell;
    cfg.variant = variant;
    cfg.seed = spec.seed;
    return cfg;
}

}  // namespace

const std::vector<std::string>& all_model_names() { return kModelNames; }

bool is_known_model(const std::string& name) {
    if (name == "TKAN") return true;  // alias for TKAN-simple
    for (const auto& n : kModelNames) {
        if (n == name) return true;
    }
    return false;
}

std::unique_ptr<ForecastModel> build_model(const std::string& name, const ModelSpec& spec) {
    const int input_width = spec.n_observed + spec.n_known;
    if (name == "TKAT") {
        return std::make_unique<TkatModel>(
            tkat_config_from_spec(spec, CellKind::TKAN, TkatVariant::BASE));
    }
    if (name == "TKATN") {
        return std::make_unique<TkatModel>(
            tkat_config_from_spec(spec, CellKind::LSTM, TkatVariant::BASE));
    }
    if (name == "TKAT-A") {
        return std::make_unique<TkatModel>(
            tkat_config_from_spec(spec, CellKind::TKAN, TkatVariant::A));
    }
    if (name == "TKATN-A") {
        return std::make_unique<TkatModel>(
            tkat_config_from_spec(spec, CellKind::LSTM, TkatVariant::A));
    }
    if (name == "TKAT-B") {
        return std::make_unique<TkatModel>(
            tkat_config_from_spec(spec, CellKind::TKAN, TkatVariant::B));
    }
    if (name == "TKATN-B") {
        return std::make_unique<TkatModel>(
            tkat_config_from_spec(spec, CellKind::LSTM, TkatVariant::B));
    }
    if (name == "TKAN-simple" || name == "TKAN") {
        return std::make_unique<SimpleRecurrentModel>(CellKind::TKAN, input_width, spec.units,
                                                      spec.horizon, spec.kan, spec.seed);
    }
    if (name == "GRU") {
        return std::make_unique<SimpleRecurrentModel>(CellKind::GRU, input_width, spec.units,
                                                      spec.horizon, spec.kan, spec.seed);
    }
    if (name == "LSTM") {
        return std::make_unique<SimpleRecurrentModel>(CellKind::LSTM, input_width, spec.units,
                                                      spec.horizon, spec.kan, spec.seed);
    }
    if (name == "MLP") {
        return std::make_unique<MlpModel>(input_width, spec.past_len, spec.mlp_hidden,
                                          spec.horizon, spec.seed);
    }
    throw std::invalid_argument("build_model: unknown model name '" + name + "'");
}

}  // namespace tkat
