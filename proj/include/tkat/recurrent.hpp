#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tkat/linear.hpp"
#include "tkat/spline.hpp"
#include "tkat/tensor.hpp"

namespace tkat {

enum class CellKind { TKAN, LSTM, GRU };
enum class CandidateActivation { Sigmoid, Tanh };

// Recurrent state bundle. h is always present; c only for cell kinds
// with a cell state; rkan holds one memory tensor per KAN sub-layer.
// Shapes are invariant across time steps.
struct CellState {
    Tensor h;
    Tensor c;
    std::vector<Tensor> rkan;
};

// One gate: pre-activation x.W^T + h.U^T + b.
struct GateParams {
    Tensor w;  // [units, input_dim]
    Tensor u;  // [units, units]
    Tensor b;  // [units]

    GateParams() = default;
    GateParams(int input_dim, int units, double bias_init, Rng& rng);
    Tensor pre(const Tensor& x, const Tensor& h) const;
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// KAN sub-layer with its own memory:
//   mem(t) = mem(t-1).W_hh^T + x(t).W_hz^T
//   y(t)   = KAN([x(t), mem(t)])
struct RkanSubLayer {
    int input_dim = 0;
    int sub_dim = 0;
    int out_dim = 0;
    Tensor w_hh;  // [sub, sub]
    Tensor w_hz;  // [sub, input_dim]
    KanLinear kan;

    RkanSubLayer(int input_dim, int sub_dim, int out_dim, const KanOptions& opts, Rng& rng);
    // Updates mem in place, returns the sub-layer output.
    Tensor step(const Tensor& x, Tensor& mem) const;
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// Cell state update shared by the gated cells: f (.) c_prev + i (.) cand.
Tensor cell_state_update(const Tensor& f, const Tensor& i, const Tensor& c_prev,
                         const Tensor& cand);

class RecurrentCell {
public:
    virtual ~RecurrentCell() = default;
    virtual Tensor step(const Tensor& x, CellState& state) const = 0;
    virtual CellState initial_state(int64_t batch) const = 0;
    virtual int units() const = 0;
    virtual int input_dim() const = 0;
    virtual void visit_params(const std::string& prefix, const ParamVisitor& v) = 0;
};

// Gated recurrent cell whose output gate comes from a stack of RKAN
// sub-layers instead of a learned linear gate. The candidate activation
// is sigmoid by default (tanh available for ablation).
class TkanCell : public RecurrentCell {
public:
    TkanCell(int input_dim, int units, int n_sublayers, const KanOptions& opts,
             CandidateActivation candidate, Rng& rng);
    Tensor step(const Tensor& x, CellState& state) const override;
    CellState initial_state(int64_t batch) const override;
    int units() const override { return units_; }
    int input_dim() const override { return input_dim_; }
    void visit_params(const std::string& prefix, const ParamVisitor& v) override;

    const std::vector<RkanSubLayer>& sublayers() const { return subs_; }
    GateParams& forget_gate() { return forget_; }
    GateParams& input_gate() { return input_; }
    GateParams& candidate_gate() { return candidate_; }

private:
    int input_dim_ = 0;
    int units_ = 0;
    CandidateActivation cand_act_;
    GateParams forget_, input_, candidate_;
    std::vector<RkanSubLayer> subs_;
};

class LstmCell : public RecurrentCell {
public:
    LstmCell(int input_dim, int units, Rng& rng);
    Tensor step(const Tensor& x, CellState& state) const override;
    CellState initial_state(int64_t batch) const override;
    int units() const override { return units_; }
    int input_dim() const override { return input_dim_; }
    void visit_params(const std::string& prefix, const ParamVisitor& v) override;

private:
    int input_dim_ = 0;
    int units_ = 0;
    GateParams forget_, input_, output_, cand_;
};

// Single-bias convention: three gates, each (in+units)*units + units
// weights.
class GruCell : public RecurrentCell {
public:
    GruCell(int input_dim, int units, Rng& rng);
    Tensor step(const Tensor& x, CellState& state) const override;
    CellState initial_state(int64_t batch) const override;
    int units() const override { return units_; }
    int input_dim() const override { return input_dim_; }
    void visit_params(const std::string& prefix, const ParamVisitor& v) override;

private:
    int input_dim_ = 0;
    int units_ = 0;
    GateParams update_, reset_, cand_;
};

std::unique_ptr<RecurrentCell> make_cell(CellKind kind, int input_dim, int units,
                                         const KanOptions& opts, CandidateActivation candidate,
                                         int n_sublayers, Rng& rng);

struct SequenceResult {
    Tensor outputs;  // [batch, T, units] with return_sequences, else [batch, units]
    CellState final_state;
};

// Left-to-right unroll of a cell over xs [batch, T, input_dim]. The
// initial state defaults to the cell's zero state.
SequenceResult run_sequence(const RecurrentCell& cell, const Tensor& xs,
                            const CellState* initial_state, bool return_sequences);

}  // namespace tkat
