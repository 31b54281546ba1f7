#include "tkat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tkat/kernels.hpp"

namespace tkat {

int64_t shape_size(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

namespace {

[[noreturn]] void fail_shape(const std::string& msg) { throw std::invalid_argument(msg); }

void check_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor operand");
}

void check_shape_valid(const Shape& s) {
    for (int64_t d : s) {
        if (d <= 0) fail_shape("tensor dimensions must be positive, got " + shape_str(s));
    }
}

}  // namespace

// Single creation point for tensors: validates the shape/data contract
// and rejects non-finite values, naming the producing op in the error.
Tensor make_checked(Shape shape, std::vector<double> values, const char* op) {
    check_shape_valid(shape);
    if (shape_size(shape) != static_cast<int64_t>(values.size())) {
        fail_shape(std::string(op) + ": data length " + std::to_string(values.size()) +
                   " does not match shape " + shape_str(shape));
    }
    if (!kernels::all_finite(values.data(), static_cast<int64_t>(values.size()))) {
        throw std::runtime_error(std::string(op) + ": produced a non-finite value");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
    return t;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
    const int64_t n = shape_size(shape);
    return make_checked(std::move(shape), std::vector<double>(static_cast<size_t>(n), value),
                        "full");
}

Tensor Tensor::scalar(double value) { return make_checked({}, {value}, "scalar"); }

Tensor Tensor::from_vector(Shape shape, std::vector<double> values) {
    return make_checked(std::move(shape), std::move(values), "from_vector");
}

Tensor Tensor::generate(Shape shape, const std::function<double(int64_t)>& fn) {
    std::vector<double> v(shape_size(shape));
    for (int64_t i = 0; i < static_cast<int64_t>(v.size()); ++i) v[i] = fn(i);
    return make_checked(std::move(shape), std::move(v), "generate");
}

int64_t Tensor::dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) {
        fail_shape("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[static_cast<size_t>(axis)];
}

double Tensor::value() const {
    if (size() != 1) fail_shape("value(): tensor " + shape_str(shape_) + " is not a scalar");
    return (*data_)[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
        fail_shape("at(): index rank mismatch for shape " + shape_str(shape_));
    }
    int64_t off = 0;
    int d = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= shape_[static_cast<size_t>(d)]) fail_shape("at(): index out of range");
        off = off * shape_[static_cast<size_t>(d)] + i;
        ++d;
    }
    return (*data_)[static_cast<size_t>(off)];
}

// --- tape ----------------------------------------------------------------

namespace {
thread_local Tape* t_active_tape = nullptr;

// RAII de-activation so backward closures run without recording.
struct TapePause {
    Tape* saved;
    TapePause() : saved(t_active_tape) { t_active_tape = nullptr; }
    ~TapePause() { t_active_tape = saved; }
};
}  // namespace

Tape::Tape() : node_ids_(std::make_shared<std::unordered_map<const void*, int>>()) {
    if (t_active_tape != nullptr) {
        throw std::logic_error("a tape is already active on this thread");
    }
    t_active_tape = this;
}

Tape::~Tape() {
    if (t_active_tape == this) t_active_tape = nullptr;
}

Tape* Tape::active() { return t_active_tape; }

int Tape::node_of(const Tensor& t) const {
    auto it = node_ids_->find(t.buffer_id());
    return it == node_ids_->end() ? -1 : it->second;
}

bool Tape::tracks(const Tensor& t) const { return t.requires_grad() || node_of(t) >= 0; }

int Tape::ensure_node(const Tensor& t) {
    int id = node_of(t);
    if (id >= 0) return id;
    if (!t.requires_grad()) return -1;
    id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{"leaf", {}, nullptr, t});
    node_ids_->emplace(t.buffer_id(), id);
    return id;
}

void Tape::record(const char* op, const Tensor& result, std::vector<int> parents, BackwardFn fn) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{op, std::move(parents), std::move(fn), result});
    node_ids_->emplace(result.buffer_id(), id);
}

GradMap Tape::backward(const Tensor& loss) {
    if (nodes_.empty()) throw std::invalid_argument("backward: tape is empty");
    if (loss.size() != 1) {
        fail_shape("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    const int loss_node = node_of(loss);
    if (loss_node < 0) {
        throw std::invalid_argument("backward: loss does not depend on any tracked tensor");
    }

    TapePause pause;  // ops invoked from closures must not record

    std::vector<Tensor> grads(nodes_.size());
    grads[static_cast<size_t>(loss_node)] = Tensor::full(loss.shape(), 1.0);

    // Nodes are appended after their parents, so descending index order is
    // a reverse topological order; each node is expanded exactly once.
    for (int i = loss_node; i >= 0; --i) {
        const Node& node = nodes_[static_cast<size_t>(i)];
        Tensor& g = grads[static_cast<size_t>(i)];
        if (!g.defined() || !node.backward) continue;
        std::vector<Tensor> contrib = node.backward(g);
        if (contrib.size() != node.parents.size()) {
            throw std::logic_error("backward rule arity mismatch for op " + std::string(node.op));
        }
        for (size_t p = 0; p < node.parents.size(); ++p) {
            const int pid = node.parents[p];
            if (pid < 0 || !contrib[p].defined()) continue;
            Tensor& slot = grads[static_cast<size_t>(pid)];
            slot = slot.defined() ? add(slot, contrib[p]) : contrib[p];
        }
    }

    GradMap out;
    out.node_of_ = node_ids_;
    auto pinned = std::make_shared<std::vector<Tensor>>();
    pinned->reserve(nodes_.size());
    for (const Node& n : nodes_) pinned->push_back(n.value);
    out.pinned_ = std::move(pinned);
    out.by_node_ = std::move(grads);
    return out;
}

const Tensor* GradMap::find(const Tensor& t) const {
    auto it = node_of_->find(t.buffer_id());
    if (it == node_of_->end()) return nullptr;
    const Tensor& g = by_node_[static_cast<size_t>(it->second)];
    return g.defined() ? &g : nullptr;
}

const Tensor& GradMap::at(const Tensor& t) const {
    const Tensor* g = find(t);
    if (!g) throw std::invalid_argument("GradMap::at: no gradient recorded for tensor");
    return *g;
}

// --- recording helper ------------------------------------------------------

namespace {

void maybe_record(const char* op, const Tensor& result,
                  std::initializer_list<const Tensor*> inputs,
                  const std::function<Tape::BackwardFn(const std::vector<int>&)>& make_fn) {
    Tape* tape = Tape::active();
    if (!tape) return;
    bool any = false;
    for (const Tensor* in : inputs) any = any || tape->tracks(*in);
    if (!any) return;
    std::vector<int> parents;
    parents.reserve(inputs.size());
    for (const Tensor* in : inputs) parents.push_back(tape->ensure_node(*in));
    tape->record(op, result, parents, make_fn(parents));
}

}  // namespace

// --- broadcasting ----------------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const size_t ra = a.size(), rb = b.size();
    const size_t r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        const int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
        const int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
        if (da != db && da != 1 && db != 1) {
            fail_shape(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// element strides of `s` viewed as `out` (0 where broadcast)
std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
    std::vector<int64_t> st(out.size(), 0);
    int64_t acc = 1;
    for (size_t i = s.size(); i-- > 0;) {
        const size_t oi = i + (out.size() - s.size());
        st[oi] = (s[i] == 1) ? 0 : acc;
        acc *= s[i];
    }
    return st;
}

template <typename F>
std::vector<double> binary_broadcast(const Tensor& a, const Tensor& b, const Shape& out, F f) {
    const int64_t n = shape_size(out);
    std::vector<double> res(static_cast<size_t>(n));
    const double* pa = a.data();
    const double* pb = b.data();
    if (a.shape() == b.shape()) {
        kernels::for_each_index(n, [&](int64_t i) { res[static_cast<size_t>(i)] = f(pa[i], pb[i]); });
        return res;
    }
    const auto sa = broadcast_strides(a.shape(), out);
    const auto sb = broadcast_strides(b.shape(), out);
    const size_t r = out.size();
    const int64_t inner = out[r - 1];
    const int64_t outer = n / inner;
    const int64_t ia = sa[r - 1], ib = sb[r - 1];
    kernels::for_each_index_costed(outer, inner, [&](int64_t o) {
        // decode the outer index into offsets for both operands
        int64_t rem = o, offa = 0, offb = 0;
        for (size_t d = r - 1; d-- > 0;) {
            const int64_t idx = rem % out[d];
            rem /= out[d];
            offa += idx * sa[d];
            offb += idx * sb[d];
        }
        double* dst = res.data() + o * inner;
        const double* qa = pa + offa;
        const double* qb = pb + offb;
        for (int64_t j = 0; j < inner; ++j) dst[j] = f(qa[j * ia], qb[j * ib]);
    });
    return res;
}

}  // namespace

Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    const Shape& gs = g.shape();
    std::vector<double> out(static_cast<size_t>(shape_size(target)), 0.0);
    const auto st = broadcast_strides(target, gs);
    const size_t r = gs.size();
    const double* pg = g.data();
    // row-major scan with an incremental odometer; serial so the
    // accumulation order is fixed
    std::vector<int64_t> idx(r, 0);
    int64_t toff = 0;
    const int64_t n = g.size();
    for (int64_t i = 0; i < n; ++i) {
        out[static_cast<size_t>(toff)] += pg[i];
        for (size_t d = r; d-- > 0;) {
            idx[d]++;
            toff += st[d];
            if (idx[d] < gs[d]) break;
            toff -= st[d] * gs[d];
            idx[d] = 0;
        }
    }
    return make_checked(target, std::move(out), "reduce_to_shape");
}

// --- matmul ----------------------------------------------------------------

namespace {

struct MatmulDims {
    int64_t batch, m, k, n;
    int64_t stride_a, stride_b;
    bool batched;
    Shape out_shape;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if ((a.rank() != 2 && a.rank() != 3) || (b.rank() != 2 && b.rank() != 3)) {
        fail_shape("matmul: operands must be rank 2 or 3, got " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
    }
    const int64_t am = ta ? a.dim(-1) : a.dim(-2);
    const int64_t ak = ta ? a.dim(-2) : a.dim(-1);
    const int64_t bk = tb ? b.dim(-1) : b.dim(-2);
    const int64_t bn = tb ? b.dim(-2) : b.dim(-1);
    if (ak != bk) {
        fail_shape("matmul: inner dimensions disagree for shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()));
    }
    MatmulDims d;
    d.m = am;
    d.k = ak;
    d.n = bn;
    d.batched = a.rank() == 3 || b.rank() == 3;
    if (d.batched) {
        int64_t batch_a = a.rank() == 3 ? a.dim(0) : 0;
        int64_t batch_b = b.rank() == 3 ? b.dim(0) : 0;
        if (batch_a && batch_b && batch_a != batch_b) {
            fail_shape("matmul: batch dimensions disagree for shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
        }
        d.batch = batch_a ? batch_a : batch_b;
        d.stride_a = a.rank() == 3 ? a.dim(1) * a.dim(2) : 0;
        d.stride_b = b.rank() == 3 ? b.dim(1) * b.dim(2) : 0;
        d.out_shape = {d.batch, d.m, d.n};
    } else {
        d.batch = 1;
        d.stride_a = d.stride_b = 0;
        d.out_shape = {d.m, d.n};
    }
    return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    const MatmulDims d = matmul_dims(a, b, trans_a, trans_b);
    std::vector<double> out(static_cast<size_t>(shape_size(d.out_shape)));
    if (d.batched) {
        kernels::gemm_batched(a.data(), b.data(), out.data(), d.batch, d.m, d.k, d.n, trans_a,
                              trans_b, d.stride_a, d.stride_b, d.m * d.n);
    } else {
        kernels::gemm(a.data(), b.data(), out.data(), d.m, d.k, d.n, trans_a, trans_b, false);
    }
    Tensor result = make_checked(d.out_shape, std::move(out), "matmul");
    maybe_record("matmul", result, {&a, &b}, [&](const std::vector<int>& parents) {
        const bool need_a = parents[0] >= 0, need_b = parents[1] >= 0;
        const bool ta = trans_a, tb = trans_b;
        Tensor ca = a, cb = b;
        return [=](const Tensor& g) -> std::vector<Tensor> {
            std::vector<Tensor> out(2);
            if (need_a) {
                Tensor da = ta ? matmul(cb, g, tb, true) : matmul(g, cb, false, !tb);
                out[0] = da.rank() > ca.rank() ? reduce_to_shape(da, ca.shape()) : da;
            }
            if (need_b) {
                Tensor db = tb ? matmul(g, ca, true, ta) : matmul(ca, g, !ta, false);
                out[1] = db.rank() > cb.rank() ? reduce_to_shape(db, cb.shape()) : db;
            }
            return out;
        };
    });
    return result;
}

// --- binary elementwise ------------------------------------------------------

namespace {

template <typename F>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f,
                 const std::function<Tape::BackwardFn(const std::vector<int>&)>& make_fn) {
    check_defined(a, name);
    check_defined(b, name);
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    Tensor result = make_checked(out_shape, binary_broadcast(a, b, out_shape, f), name);
    maybe_record(name, result, {&a, &b}, make_fn);
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [&](const std::vector<int>& parents) -> Tape::BackwardFn {
            const bool na = parents[0] >= 0, nb = parents[1] >= 0;
            const Shape sa = a.shape(), sb = b.shape();
            return [=](const Tensor& g) -> std::vector<Tensor> {
                std::vector<Tensor> out(2);
                if (na) out[0] = reduce_to_shape(g, sa);
                if (nb) out[1] = reduce_to_shape(g, sb);
                return out;
            };
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [&](const std::vector<int>& parents) -> Tape::BackwardFn {
            const bool na = parents[0] >= 0, nb = parents[1] >= 0;
            const Shape sa = a.shape(), sb = b.shape();
            return [=](const Tensor& g) -> std::vector<Tensor> {
                std::vector<Tensor> out(2);
                if (na) out[0] = reduce_to_shape(g, sa);
                if (nb) out[1] = reduce_to_shape(neg(g), sb);
                return out;
            };
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [&](const std::vector<int>& parents) -> Tape::BackwardFn {
            const bool na = parents[0] >= 0, nb = parents[1] >= 0;
            Tensor ca = a, cb = b;
            return [=](const Tensor& g) -> std::vector<Tensor> {
                std::vector<Tensor> out(2);
                if (na) out[0] = reduce_to_shape(mul(g, cb), ca.shape());
                if (nb) out[1] = reduce_to_shape(mul(g, ca), cb.shape());
                return out;
            };
        });
}

// --- unary elementwise -------------------------------------------------------

namespace {

template <typename F>
std::vector<double> map_values(const Tensor& x, F f) {
    std::vector<double> out(static_cast<size_t>(x.size()));
    const double* p = x.data();
    kernels::for_each_index(x.size(), [&](int64_t i) { out[static_cast<size_t>(i)] = f(p[i]); });
    return out;
}

double sigmoid_stable(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// dx = g * d(x), where d is expressed in terms of the saved tensor
template <typename D>
Tensor unary_op(const char* name, const Tensor& x, double (*fwd)(double), bool save_output, D dfn) {
    check_defined(x, name);
    Tensor result = make_checked(x.shape(), map_values(x, fwd), name);
    Tensor saved = save_output ? result : x;
    maybe_record(name, result, {&x}, [&](const std::vector<int>&) -> Tape::BackwardFn {
        return [saved, dfn](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> out(static_cast<size_t>(g.size()));
            const double* pg = g.data();
            const double* ps = saved.data();
            kernels::for_each_index(g.size(), [&](int64_t i) {
                out[static_cast<size_t>(i)] = pg[i] * dfn(ps[i]);
            });
            return {make_checked(g.shape(), std::move(out), "unary_backward")};
        };
    });
    return result;
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x, +[](double v) { return sigmoid_stable(v); }, true,
        [](double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        "tanh", x, +[](double v) { return std::tanh(v); }, true,
        [](double y) { return 1.0 - y * y; });
}

Tensor elu(const Tensor& x) {
    return unary_op(
        "elu", x, +[](double v) { return v > 0.0 ? v : std::expm1(v); }, true,
        [](double y) { return y > 0.0 ? 1.0 : y + 1.0; });
}

Tensor silu(const Tensor& x) {
    return unary_op(
        "silu", x, +[](double v) { return v * sigmoid_stable(v); }, false,
        [](double v) {
            const double s = sigmoid_stable(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        "relu", x, +[](double v) { return v > 0.0 ? v : 0.0; }, false,
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        "exp", x, +[](double v) { return std::exp(v); }, true, [](double y) { return y; });
}

Tensor square(const Tensor& x) {
    return unary_op(
        "square", x, +[](double v) { return v * v; }, false, [](double v) { return 2.0 * v; });
}

Tensor neg(const Tensor& x) {
    return unary_op(
        "neg", x, +[](double v) { return -v; }, false, [](double) { return -1.0; });
}

Tensor scale(const Tensor& x, double c) {
    check_defined(x, "scale");
    std::vector<double> out(static_cast<size_t>(x.size()));
    const double* p = x.data();
    kernels::for_each_index(x.size(), [&](int64_t i) { out[static_cast<size_t>(i)] = p[i] * c; });
    Tensor result = make_checked(x.shape(), std::move(out), "scale");
    maybe_record("scale", result, {&x}, [&](const std::vector<int>&) -> Tape::BackwardFn {
        return [c](const Tensor& g) -> std::vector<Tensor> { return {scale(g, c)}; };
    });
    return result;
}

Tensor elementwise(UnaryOp op, const Tensor& x) {
    switch (op) {
        case UnaryOp::Sigmoid: return sigmoid(x);
        case UnaryOp::Tanh: return tanh(x);
        case UnaryOp::Elu: return elu(x);
        case UnaryOp::Silu: return silu(x);
        case UnaryOp::Relu: return relu(x);
        case UnaryOp::Exp: return exp(x);
        case UnaryOp::Square: return square(x);
        case UnaryOp::Neg: return neg(x);
    }
    throw std::invalid_argument("elementwise: unknown unary op kind");
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
    switch (op) {
        case BinaryOp::Add: return add(a, b);
        case BinaryOp::Sub: return sub(a, b);
        case BinaryOp::Mul: return mul(a, b);
    }
    throw std::invalid_argument("elementwise: unknown binary op kind");
}

// --- softmax -------------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
    check_defined(x, "softmax");
    if (x.rank() == 0) fail_shape("softmax: scalar input has no axis");
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank()) {
        fail_shape("softmax: axis out of range for shape " + shape_str(x.shape()));
    }
    const int64_t n = x.dim(axis);
    if (n < 1) fail_shape("softmax: empty axis");

    std::vector<double> out(static_cast<size_t>(x.size()));
    if (axis == x.rank() - 1) {
        kernels::softmax_rows(x.data(), out.data(), x.size() / n, n);
    } else {
        int64_t inner = 1;
        for (int d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
        const int64_t outer = x.size() / (n * inner);
        const double* px = x.data();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * n * inner + in;
                double mx = px[base];
                for (int64_t j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
                double s = 0.0;
                for (int64_t j = 0; j < n; ++j) {
                    const double e = std::exp(px[base + j * inner] - mx);
                    out[static_cast<size_t>(base + j * inner)] = e;
                    s += e;
                }
                for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(base + j * inner)] /= s;
            }
        }
    }
    Tensor result = make_checked(x.shape(), std::move(out), "softmax");
    maybe_record("softmax", result, {&x}, [&](const std::vector<int>&) -> Tape::BackwardFn {
        Tensor y = result;
        const int ax = axis;
        return [y, ax](const Tensor& g) -> std::vector<Tensor> {
            // dx = y * (g - sum(g*y, axis))
            const int64_t n = y.dim(ax);
            int64_t inner = 1;
            for (int d = ax + 1; d < y.rank(); ++d) inner *= y.dim(d);
            const int64_t outer = y.size() / (n * inner);
            std::vector<double> dx(static_cast<size_t>(y.size()));
            const double* py = y.data();
            const double* pg = g.data();
            kernels::for_each_index_costed(outer * inner, 2 * n, [&](int64_t oi) {
                const int64_t o = oi / inner, in = oi % inner;
                const int64_t base = o * n * inner + in;
                double dot = 0.0;
                for (int64_t j = 0; j < n; ++j) dot += pg[base + j * inner] * py[base + j * inner];
                for (int64_t j = 0; j < n; ++j) {
                    const int64_t ix = base + j * inner;
                    dx[static_cast<size_t>(ix)] = py[ix] * (pg[ix] - dot);
                }
            });
            return {make_checked(y.shape(), std::move(dx), "softmax_backward")};
        };
    });
    return result;
}

// --- layer norm ------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    check_defined(x, "layer_norm");
    check_defined(gain, "layer_norm");
    check_defined(bias, "layer_norm");
    if (x.rank() < 1) fail_shape("layer_norm: input must have at least one axis");
    const int64_t d = x.dim(-1);
    if (d < 2) fail_shape("layer_norm: last dimension must be >= 2, got " + shape_str(x.shape()));
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        fail_shape("layer_norm: gain/bias must have shape [" + std::to_string(d) + "], got " +
                   shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
    }
    const int64_t rows = x.size() / d;
    std::vector<double> out(static_cast<size_t>(x.size()));
    std::vector<double> xhat(static_cast<size_t>(x.size()));
    std::vector<double> inv_std(static_cast<size_t>(rows));
    const double* px = x.data();
    const double* pgain = gain.data();
    const double* pbias = bias.data();
    kernels::for_each_index_costed(rows, 4 * d, [&](int64_t r) {
        const double* xr = px + r * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = xr[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        for (int64_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mu) * inv;
            xhat[static_cast<size_t>(r * d + j)] = xh;
            out[static_cast<size_t>(r * d + j)] = xh * pgain[j] + pbias[j];
        }
    });
    Tensor result = make_checked(x.shape(), std::move(out), "layer_norm");
    maybe_record("layer_norm", result, {&x, &gain, &bias},
                 [&](const std::vector<int>& parents) -> Tape::BackwardFn {
                     const bool nx = parents[0] >= 0, ngain = parents[1] >= 0,
                                nbias = parents[2] >= 0;
                     Tensor xh = make_checked(x.shape(), std::move(xhat), "layer_norm_save");
                     Tensor inv = make_checked({rows}, std::move(inv_std), "layer_norm_save");
                     Tensor cgain = gain;
                     const int64_t dd = d, rr = rows;
                     return [=](const Tensor& g) -> std::vector<Tensor> {
                         std::vector<Tensor> outg(3);
                         const double* pg = g.data();
                         const double* pxh = xh.data();
                         const double* pinv = inv.data();
                         const double* pga = cgain.data();
                         if (nx) {
                             std::vector<double> dx(static_cast<size_t>(rr * dd));
                             kernels::for_each_index_costed(rr, 6 * dd, [&](int64_t r) {
                                 const int64_t base = r * dd;
                                 double m1 = 0.0, m2 = 0.0;
                                 for (int64_t j = 0; j < dd; ++j) {
                                     const double gy = pga[j] * pg[base + j];
                                     m1 += gy;
                                     m2 += gy * pxh[base + j];
                                 }
                                 m1 /= static_cast<double>(dd);
                                 m2 /= static_cast<double>(dd);
                                 for (int64_t j = 0; j < dd; ++j) {
                                     const double gy = pga[j] * pg[base + j];
                                     dx[static_cast<size_t>(base + j)] =
                                         pinv[r] * (gy - m1 - pxh[base + j] * m2);
                                 }
                             });
                             outg[0] = make_checked(xh.shape(), std::move(dx), "layer_norm_backward");
                         }
                         if (ngain || nbias) {
                             std::vector<double> dgain(static_cast<size_t>(dd), 0.0);
                             std::vector<double> dbias(static_cast<size_t>(dd), 0.0);
                             for (int64_t r = 0; r < rr; ++r) {  // fixed order accumulation
                                 const int64_t base = r * dd;
                                 for (int64_t j = 0; j < dd; ++j) {
                                     dgain[static_cast<size_t>(j)] += pg[base + j] * pxh[base + j];
                                     dbias[static_cast<size_t>(j)] += pg[base + j];
                                 }
                             }
                             if (ngain)
                                 outg[1] = make_checked({dd}, std::move(dgain), "layer_norm_backward");
                             if (nbias)
                                 outg[2] = make_checked({dd}, std::move(dbias), "layer_norm_backward");
                         }
                         return outg;
                     };
                 });
    return result;
}

// --- reductions -------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    check_defined(x, "sum");
    double acc = 0.0;
    const double* p = x.data();
    for (int64_t i = 0; i < x.size(); ++i) acc += p[i];
    Tensor result = make_checked({}, {acc}, "sum");
    maybe_record("sum", result, {&x}, [&](const std::vector<int>&) -> Tape::BackwardFn {
        const Shape s = x.shape();
        return [s](const Tensor& g) -> std::vector<Tensor> {
            return {Tensor::full(s, g.value())};
        };
    });
    return result;
}

Tensor mean(const Tensor& x) {
    check_defined(x, "mean");
    double acc = 0.0;
    const double* p = x.data();
    for (int64_t i = 0; i < x.size(); ++i) acc += p[i];
    const double n = static_cast<double>(x.size());
    Tensor result = make_checked({}, {acc / n}, "mean");
    maybe_record("mean", result, {&x}, [&](const std::vector<int>&) -> Tape::BackwardFn {
        const Shape s = x.shape();
        return [s, n](const Tensor& g) -> std::vector<Tensor> {
            return {Tensor::full(s, g.value() / n)};
        };
    });
    return result;
}

// --- shape ops ---------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape) {
    check_defined(x, "reshape");
    if (shape_size(new_shape) != x.size()) {
        fail_shape("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    }
    Tensor result = make_checked(std::move(new_shape), x.to_vector(), "reshape");
    maybe_record("reshape", result, {&x}, [&](const std::vector<int>&) -> Tape::BackwardFn {
        const Shape s = x.shape();
        return [s](const Tensor& g) -> std::vector<Tensor> { return {reshape(g, s)}; };
    });
    return result;
}

namespace {

// contiguous block copy helpers shared by concat/slice
void copy_axis_block(const double* src, double* dst, int64_t outer, int64_t src_axis_inner,
                     int64_t dst_axis_inner, int64_t src_off, int64_t dst_off, int64_t len) {
    for (int64_t o = 0; o < outer; ++o) {
        std::copy_n(src + o * src_axis_inner + src_off, len, dst + o * dst_axis_inner + dst_off);
    }
}

}  // namespace

Tensor concat(std::span<const Tensor> parts, int axis) {
    if (parts.empty()) fail_shape("concat: no inputs");
    for (const Tensor& p : parts) check_defined(p, "concat");
    const Tensor& first = parts[0];
    if (axis < 0) axis += first.rank();
    if (axis < 0 || axis >= first.rank()) {
        fail_shape("concat: axis out of range for shape " + shape_str(first.shape()));
    }
    Shape out_shape = first.shape();
    int64_t total_axis = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != first.rank()) fail_shape("concat: rank mismatch");
        for (int d = 0; d < first.rank(); ++d) {
            if (d != axis && p.dim(d) != first.dim(d)) {
                fail_shape("concat: shapes " + shape_str(first.shape()) + " and " +
                           shape_str(p.shape()) + " differ off-axis");
            }
        }
        total_axis += p.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = total_axis;

    int64_t inner = 1;
    for (int d = axis + 1; d < first.rank(); ++d) inner *= first.dim(d);
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= first.dim(d);

    std::vector<double> out(static_cast<size_t>(shape_size(out_shape)));
    int64_t off = 0;
    for (const Tensor& p : parts) {
        const int64_t alen = p.dim(axis) * inner;
        copy_axis_block(p.data(), out.data(), outer, alen, total_axis * inner, 0, off, alen);
        off += alen;
    }
    Tensor result = make_checked(out_shape, std::move(out), "concat");

    Tape* tape = Tape::active();
    if (tape) {
        bool any = false;
        for (const Tensor& p : parts) any = any || tape->tracks(p);
        if (any) {
            std::vector<int> parents;
            std::vector<int64_t> offsets;
            std::vector<Tensor> saved(parts.begin(), parts.end());
            int64_t o2 = 0;
            for (const Tensor& p : parts) {
                parents.push_back(tape->ensure_node(p));
                offsets.push_back(o2);
                o2 += p.dim(axis);
            }
            const int ax = axis;
            tape->record("concat", result, parents,
                         [saved, offsets, ax](const Tensor& g) -> std::vector<Tensor> {
                             std::vector<Tensor> outg(saved.size());
                             for (size_t i = 0; i < saved.size(); ++i) {
                                 outg[i] = slice(g, ax, offsets[i], saved[i].dim(ax));
                             }
                             return outg;
                         });
        }
    }
    return result;
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length) {
    check_defined(x, "slice");
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank()) {
        fail_shape("slice: axis out of range for shape " + shape_str(x.shape()));
    }
    if (start < 0 || length < 1 || start + length > x.dim(axis)) {
        fail_shape("slice: range [" + std::to_string(start) + "," +
                   std::to_string(start + length) + ") out of bounds for shape " +
                   shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = length;
    int64_t inner = 1;
    for (int d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);

    std::vector<double> out(static_cast<size_t>(shape_size(out_shape)));
    copy_axis_block(x.data(), out.data(), outer, x.dim(axis) * inner, length * inner,
                    start * inner, 0, length * inner);
    Tensor result = make_checked(out_shape, std::move(out), "slice");
    maybe_record("slice", result, {&x}, [&](const std::vector<int>&) -> Tape::BackwardFn {
        const Shape s = x.shape();
        const int ax = axis;
        const int64_t st = start, len = length, inn = inner, out_ax = x.dim(axis), outr = outer;
        return [=](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> dx(static_cast<size_t>(shape_size(s)), 0.0);
            copy_axis_block(g.data(), dx.data(), outr, len * inn, out_ax * inn, 0, st * inn,
                            len * inn);
            (void)ax;
            return {make_checked(s, std::move(dx), "slice_backward")};
        };
    });
    return result;
}

// --- finite differences ---------------------------------------------------------

namespace {

double rel_err(double a, double c) { return std::abs(a - c) / (std::abs(a) + std::abs(c) + 1e-12); }

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be positive");
    Tensor probe = x;
    probe.set_requires_grad(true);
    Tensor analytic;
    {
        Tape tape;
        Tensor loss = f(probe);
        if (loss.size() != 1) {
            fail_shape("finite_diff_check: f must be scalar-valued, got " +
                       shape_str(loss.shape()));
        }
        analytic = tape.backward(loss).at(probe);
    }
    double max_err = 0.0;
    std::vector<double> base = x.to_vector();
    for (int64_t i = 0; i < x.size(); ++i) {
        std::vector<double> hi = base, lo = base;
        hi[static_cast<size_t>(i)] += eps;
        lo[static_cast<size_t>(i)] -= eps;
        const double fp = f(Tensor::from_vector(x.shape(), hi)).value();
        const double fm = f(Tensor::from_vector(x.shape(), lo)).value();
        const double num = (fp - fm) / (2.0 * eps);
        max_err = std::max(max_err, rel_err(analytic.data()[i], num));
    }
    return max_err;
}

double finite_diff_check_params(const std::function<Tensor()>& f,
                                std::span<Tensor* const> params, double eps, double skip_floor) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_check_params: eps must be positive");
    for (Tensor* p : params) p->set_requires_grad(true);
    std::vector<Tensor> analytic(params.size());
    {
        Tape tape;
        Tensor loss = f();
        if (loss.size() != 1) {
            fail_shape("finite_diff_check_params: f must be scalar-valued, got " +
                       shape_str(loss.shape()));
        }
        GradMap grads = tape.backward(loss);
        for (size_t p = 0; p < params.size(); ++p) {
            const Tensor* g = grads.find(*params[p]);
            analytic[p] = g ? *g : Tensor::zeros(params[p]->shape());
        }
    }
    double max_err = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor original = *params[p];
        const std::vector<double> base = original.to_vector();
        for (int64_t i = 0; i < original.size(); ++i) {
            std::vector<double> hi = base, lo = base;
            hi[static_cast<size_t>(i)] += eps;
            lo[static_cast<size_t>(i)] -= eps;
            *params[p] = Tensor::from_vector(original.shape(), hi).set_requires_grad(true);
            const double fp = f().value();
            *params[p] = Tensor::from_vector(original.shape(), lo).set_requires_grad(true);
            const double fm = f().value();
            const double num = (fp - fm) / (2.0 * eps);
            const double a = analytic[p].data()[i];
            if (std::max(std::abs(a), std::abs(num)) < skip_floor) continue;
            max_err = std::max(max_err, rel_err(a, num));
        }
        *params[p] = original;
    }
    return max_err;
}

}  // namespace tkat
