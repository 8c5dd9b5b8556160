#pragma once

#include <functional>
#include <vector>

#include "dgmae/matrix.hpp"

namespace dgmae::ad {

class Tape;

// Lightweight handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

// Reverse-mode tape over rank <= 2 dense tensors. Insertion order is the
// topological order; backward() visits each node exactly once in reverse.
// One tape serves one training step and is single-threaded.
class Tape {
public:
    explicit Tape(bool debug_checks =
#ifndef NDEBUG
                      true
#else
                      false
#endif
                  )
        : debug_checks_(debug_checks) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf that participates in differentiation (parameters, inputs).
    Var leaf(Matrix value);
    // Node excluded from differentiation (targets, detached data).
    Var constant(Matrix value);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    // differentiable node. loss must be 1x1.
    void backward(Var loss);

    size_t size() const noexcept { return nodes_.size(); }
    bool debug_checks() const noexcept { return debug_checks_; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void()> back; // empty for leaves/constants
        bool needs_grad = false;
    };

    friend struct OpAccess;
    Var push(Matrix value, bool needs_grad, std::function<void()> back);
    void set_back(Var v, std::function<void()> f) { nodes_[v.id].back = std::move(f); }
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
    Matrix& grad_mut(Var v) { return nodes_[v.id].grad; }

    std::vector<Node> nodes_;
    bool debug_checks_ = false;
};

// --- differentiable ops -----------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);             // same shape
Var sub(Var a, Var b);             // same shape
Var mul(Var a, Var b);             // elementwise, same shape
Var scale(Var a, double s);        // constant scalar multiply
Var add_row_broadcast(Var x, Var row); // row is 1 x cols, added to every row
Var mul_row_broadcast(Var x, Var row); // row is 1 x cols, multiplies every row
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, int begin, int end);
Var row_normalize_l2(Var x, double eps = 1e-12);
Var leaky_relu(Var x, double slope);
Var elu(Var x);
Var exp(Var x);
Var log(Var x);
Var pow_elem(Var x, double p);     // x >= 0 elementwise for non-integer p
Var sum(Var x);                    // 1x1
Var mean(Var x);                   // 1x1
Var row_sum(Var x);                // rows x 1

// gather/scatter are mutually adjoint arc-wise message-passing primitives
Var gather_rows(Var x, const std::vector<int>& idx);
Var scatter_add_rows(Var src, const std::vector<int>& idx, int n);

// Per-destination softmax of per-arc scalar logits (arcs x 1), stabilized
// by per-segment max subtraction.
Var segment_softmax(Var logits, const std::vector<int>& dst, int n);

// Row i of x scaled by s(i, 0); s is rows x 1.
Var scale_rows(Var x, Var s);

} // namespace dgmae::ad
