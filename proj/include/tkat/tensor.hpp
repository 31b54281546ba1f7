#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tkat {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense row-major float64 tensor. The value is immutable after
// construction; copies share the underlying buffer. Every constructor
// and every op rejects non-finite values, so a tensor in flight is
// always finite.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor from_vector(Shape shape, std::vector<double> values);
    static Tensor generate(Shape shape, const std::function<double(int64_t)>& fn);

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    int64_t dim(int axis) const;

    const double* data() const { return data_->data(); }
    const std::vector<double>& values() const { return *data_; }
    std::vector<double> to_vector() const { return *data_; }
    double value() const;  // scalar tensors only
    double at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool v) {
        requires_grad_ = v;
        return *this;
    }

    // identity of the underlying buffer; used by the tape
    const void* buffer_id() const { return static_cast<const void*>(data_.get()); }

private:
    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    bool requires_grad_ = false;

    friend Tensor make_checked(Shape shape, std::vector<double> values, const char* op);
};

enum class UnaryOp { Sigmoid, Tanh, Elu, Silu, Relu, Exp, Square, Neg };
enum class BinaryOp { Add, Sub, Mul };

// --- differentiable ops ------------------------------------------------
// Rank 2 or 3 operands; a rank-3 operand is treated as a batch of
// matrices. Shapes [B,m,k]x[k,n], [B,m,k]x[B,k,n] and [m,k]x[B,k,n] are
// supported; trans_a requires a rank-2 a or matching rank-3 batches.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// Elementwise ops broadcast numpy-style (right-aligned, size-1 dims expand).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor elu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
Tensor neg(const Tensor& x);

Tensor elementwise(UnaryOp op, const Tensor& x);
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length);

// Sums g over broadcast axes until it has `target` shape (gradient of a
// broadcast). Public because layer code reuses it in a few places.
Tensor reduce_to_shape(const Tensor& g, const Shape& target);

// --- reverse-mode tape --------------------------------------------------

class GradMap {
public:
    const Tensor* find(const Tensor& t) const;
    const Tensor& at(const Tensor& t) const;  // throws when absent

private:
    friend class Tape;
    std::shared_ptr<const std::unordered_map<const void*, int>> node_of_;
    // keeps every recorded buffer alive so the address keys stay unique
    std::shared_ptr<const std::vector<Tensor>> pinned_;
    std::vector<Tensor> by_node_;
};

// One forward/backward pass owns one tape. Creating a Tape makes it the
// active tape for the current thread; ops record themselves while one is
// active and any input participates. Threads do not share tapes.
class Tape {
public:
    using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // Accumulated gradients for every participating tensor; gradients sum
    // over fan-out and the traversal visits each node exactly once in
    // reverse topological order.
    GradMap backward(const Tensor& loss);

    int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

    bool tracks(const Tensor& t) const;
    int node_of(const Tensor& t) const;  // -1 when untracked
    // Registers t as a leaf if it requires grad; returns node id or -1.
    int ensure_node(const Tensor& t);
    void record(const char* op, const Tensor& result, std::vector<int> parents, BackwardFn fn);

private:
    struct Node {
        const char* op;
        std::vector<int> parents;
        BackwardFn backward;
        Tensor value;  // pins the buffer so address keys cannot be reused
    };
    std::vector<Node> nodes_;
    std::shared_ptr<std::unordered_map<const void*, int>> node_ids_;
};

// --- gradient verification ----------------------------------------------

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |central| + 1e-12). f must be scalar-valued and x should
// sit at least ~10*eps away from non-smooth points (ELU kink, ReLU kink,
// spline knots).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps);

// Same check against every coordinate of every listed parameter slot.
// f() must re-read the slots on each call. Coordinates where both the
// analytic and the central value sit below skip_floor are not rated: a
// gradient under ~1e-4 cannot be resolved to 1e-5 relative accuracy by
// eps-sized central differences in float64 (the difference quotient
// carries ~|f|*2^-52/eps of roundoff), and a wrong backward rule cannot
// hide there because either side being large rates the coordinate.
double finite_diff_check_params(const std::function<Tensor()>& f,
                                std::span<Tensor* const> params, double eps,
                                double skip_floor = 0.0);

}  // namespace tkat
