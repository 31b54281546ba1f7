#include "tkat/recurrent.hpp"

#include <array>
#include <stdexcept>

#include "tkat/fusion.hpp"

namespace tkat {

GateParams::GateParams(int input_dim, int units, double bias_init, Rng& rng) {
    w = glorot_uniform({units, input_dim}, input_dim, units, rng);
    u = glorot_uniform({units, units}, units, units, rng);
    b = Tensor::full({units}, bias_init).set_requires_grad(true);
}

Tensor GateParams::pre(const Tensor& x, const Tensor& h) const {
    return add(add(matmul(x, w, false, true), matmul(h, u, false, true)), b);
}

void GateParams::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".w", w);
    v(prefix + ".u", u);
    v(prefix + ".b", b);
}

RkanSubLayer::RkanSubLayer(int in, int sub, int out, const KanOptions& opts, Rng& rng)
    : input_dim(in), sub_dim(sub), out_dim(out), kan(in + sub, out, opts, rng) {
    w_hh = glorot_uniform({sub, sub}, sub, sub, rng);
    w_hz = glorot_uniform({sub, in}, in, sub, rng);
}

Tensor RkanSubLayer::step(const Tensor& x, Tensor& mem) const {
    if (x.rank() != 2 || x.dim(1) != input_dim || mem.dim(1) != sub_dim) {
        throw std::invalid_argument("RkanSubLayer: shape mismatch, x=" + shape_str(x.shape()) +
                                    " mem=" + shape_str(mem.shape()));
    }
    mem = add(matmul(mem, w_hh, false, true), matmul(x, w_hz, false, true));
    std::array<Tensor, 2> joined{x, mem};
    return kan.forward(concat(std::span<const Tensor>(joined.data(), 2), 1));
}

void RkanSubLayer::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".w_hh", w_hh);
    v(prefix + ".w_hz", w_hz);
    kan.visit_params(prefix + ".kan", v);
}

Tensor cell_state_update(const Tensor& f, const Tensor& i, const Tensor& c_prev,
                         const Tensor& cand) {
    return add(mul(f, c_prev), mul(i, cand));
}

// --- TKAN ------------------------------------------------------------------

TkanCell::TkanCell(int input_dim, int units, int n_sublayers, const KanOptions& opts,
                   CandidateActivation candidate, Rng& rng)
    : input_dim_(input_dim),
      units_(units),
      cand_act_(candidate),
      forget_(input_dim, units, 1.0, rng),
      input_(input_dim, units, 0.0, rng),
      candidate_(input_dim, units, 0.0, rng) {
    if (n_sublayers < 1) throw std::invalid_argument("TkanCell: needs at least one sub-layer");
    int in = input_dim;
    for (int l = 0; l < n_sublayers; ++l) {
        subs_.emplace_back(in, units, units, opts, rng);
        in = units;
    }
}

CellState TkanCell::initial_state(int64_t batch) const {
    CellState s;
    s.h = Tensor::zeros({batch, units_});
    s.c = Tensor::zeros({batch, units_});
    s.rkan.reserve(subs_.size());
    for (size_t l = 0; l < subs_.size(); ++l) s.rkan.push_back(Tensor::zeros({batch, units_}));
    return s;
}

Tensor TkanCell::step(const Tensor& x, CellState& state) const {
    if (x.rank() != 2 || x.dim(1) != input_dim_) {
        throw std::invalid_argument("TkanCell: expected input [batch," +
                                    std::to_string(input_dim_) + "], got " + shape_str(x.shape()));
    }
    Tensor f = sigmoid(forget_.pre(x, state.h));
    Tensor i = sigmoid(input_.pre(x, state.h));
    Tensor cand_pre = candidate_.pre(x, state.h);
    Tensor cand = cand_act_ == CandidateActivation::Tanh ? tanh(cand_pre) : sigmoid(cand_pre);
    Tensor sub_in = x;
    for (size_t l = 0; l < subs_.size(); ++l) {
        sub_in = subs_[l].step(sub_in, state.rkan[l]);
    }
    Tensor o = sigmoid(sub_in);
    state.c = cell_state_update(f, i, state.c, cand);
    state.h = mul(o, tanh(state.c));
    return state.h;
}

void TkanCell::visit_params(const std::string& prefix, const ParamVisitor& v) {
    forget_.visit_params(prefix + ".forget", v);
    input_.visit_params(prefix + ".input", v);
    candidate_.visit_params(prefix + ".candidate", v);
    for (size_t l = 0; l < subs_.size(); ++l) {
        subs_[l].visit_params(prefix + ".rkan" + std::to_string(l), v);
    }
}

// --- LSTM ------------------------------------------------------------------

LstmCell::LstmCell(int input_dim, int units, Rng& rng)
    : input_dim_(input_dim),
      units_(units),
      forget_(input_dim, units, 1.0, rng),
      input_(input_dim, units, 0.0, rng),
      output_(input_dim, units, 0.0, rng),
      cand_(input_dim, units, 0.0, rng) {}

CellState LstmCell::initial_state(int64_t batch) const {
    CellState s;
    s.h = Tensor::zeros({batch, units_});
    s.c = Tensor::zeros({batch, units_});
    return s;
}

Tensor LstmCell::step(const Tensor& x, CellState& state) const {
    if (x.rank() != 2 || x.dim(1) != input_dim_) {
        throw std::invalid_argument("LstmCell: expected input [batch," +
                                    std::to_string(input_dim_) + "], got " + shape_str(x.shape()));
    }
    Tensor f = sigmoid(forget_.pre(x, state.h));
    Tensor i = sigmoid(input_.pre(x, state.h));
    Tensor o = sigmoid(output_.pre(x, state.h));
    Tensor g = tanh(cand_.pre(x, state.h));
    state.c = cell_state_update(f, i, state.c, g);
    state.h = mul(o, tanh(state.c));
    return state.h;
}

void LstmCell::visit_params(const std::string& prefix, const ParamVisitor& v) {
    forget_.visit_params(prefix + ".forget", v);
    input_.visit_params(prefix + ".input", v);
    output_.visit_params(prefix + ".output", v);
    cand_.visit_params(prefix + ".cand", v);
}

// --- GRU -------------------------------------------------------------------

GruCell::GruCell(int input_dim, int units, Rng& rng)
    : input_dim_(input_dim),
      units_(units),
      update_(input_dim, units, 0.0, rng),
      reset_(input_dim, units, 0.0, rng),
      cand_(input_dim, units, 0.0, rng) {}

CellState GruCell::initial_state(int64_t batch) const {
    CellState s;
    s.h = Tensor::zeros({batch, units_});
    return s;
}

Tensor GruCell::step(const Tensor& x, CellState& state) const {
    if (x.rank() != 2 || x.dim(1) != input_dim_) {
        throw std::invalid_argument("GruCell: expected input [batch," +
                                    std::to_string(input_dim_) + "], got " + shape_str(x.shape()));
    }
    Tensor z = sigmoid(update_.pre(x, state.h));
    Tensor r = sigmoid(reset_.pre(x, state.h));
    Tensor cand = tanh(add(add(matmul(x, cand_.w, false, true),
                               matmul(mul(r, state.h), cand_.u, false, true)),
                           cand_.b));
    // h' = z (.) h + (1 - z) (.) cand
    Tensor one_minus_z = sub(Tensor::ones(z.shape()), z);
    state.h = add(mul(z, state.h), mul(one_minus_z, cand));
    return state.h;
}

void GruCell::visit_params(const std::string& prefix, const ParamVisitor& v) {
    update_.visit_params(prefix + ".update", v);
    reset_.visit_params(prefix + ".reset", v);
    cand_.visit_params(prefix + ".cand", v);
}

std::unique_ptr<RecurrentCell> make_cell(CellKind kind, int input_dim, int units,
                                         const KanOptions& opts, CandidateActivation candidate,
                                         int n_sublayers, Rng& rng) {
    switch (kind) {
        case CellKind::TKAN:
            return std::make_unique<TkanCell>(input_dim, units, n_sublayers, opts, candidate, rng);
        case CellKind::LSTM: return std::make_unique<LstmCell>(input_dim, units, rng);
        case CellKind::GRU: return std::make_unique<GruCell>(input_dim, units, rng);
    }
    throw std::invalid_argument("make_cell: unknown cell kind");
}

SequenceResult run_sequence(const RecurrentCell& cell, const Tensor& xs,
                            const CellState* initial_state, bool return_sequences) {
    if (xs.rank() != 3) {
        throw std::invalid_argument("run_sequence: expected [batch,T,features], got " +
                                    shape_str(xs.shape()));
    }
    const int64_t batch = xs.dim(0);
    const int64_t steps = xs.dim(1);
    if (steps < 1) throw std::invalid_argument("run_sequence: needs T >= 1");
    CellState state = initial_state ? *initial_state : cell.initial_state(batch);

    std::vector<Tensor> outputs;
    outputs.reserve(static_cast<size_t>(steps));
    for (int64_t t = 0; t < steps; ++t) {
        Tensor x_t = reshape(slice(xs, 1, t, 1), {batch, xs.dim(2)});
        Tensor h = cell.step(x_t, state);
        if (return_sequences) outputs.push_back(reshape(h, {batch, 1, cell.units()}));
    }
    SequenceResult res;
    res.final_state = state;
    if (return_sequences) {
        res.outputs = steps == 1 ? outputs[0]
                                 : concat(std::span<const Tensor>(outputs.data(), outputs.size()), 1);
    } else {
        res.outputs = state.h;
    }
    return res;
}

}  // namespace tkat
