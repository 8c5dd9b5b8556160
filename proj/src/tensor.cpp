#include "dgmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dgmae::ad {

namespace {

void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw DataError(Errc::dimension_mismatch, std::string(op) + ": operands from different tapes");
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw DataError(Errc::dimension_mismatch,
                        std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                            " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

} // namespace

// Grants op implementations access to tape internals without listing every
// op as a friend.
struct OpAccess {
    static Var push(Tape& t, Matrix value, bool needs_grad) {
        return t.push(std::move(value), needs_grad, {});
    }
    static void set_back(Var v, std::function<void()> f) { v.tape->set_back(v, std::move(f)); }
    static Matrix& grad(Var v) { return v.tape->grad_mut(v); }
    static bool needs_grad(Var v) { return v.tape->needs_grad(v); }
};

Var Tape::push(Matrix value, bool needs_grad, std::function<void()> back) {
    if (debug_checks_ && !value.all_finite())
        throw NumericError(Errc::non_finite, "tape node " + std::to_string(nodes_.size()) + " produced NaN/Inf");
    Node n;
    n.grad = Matrix(value.rows(), value.cols());
    n.value = std::move(value);
    n.back = std::move(back);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value) { return push(std::move(value), true, {}); }
Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

void Tape::backward(Var loss) {
    if (loss.tape != this) throw DataError(Errc::dimension_mismatch, "backward: loss from another tape");
    const Matrix& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1)
        throw DataError(Errc::dimension_mismatch, "backward: loss must be a 1x1 scalar");
    for (auto& n : nodes_) n.grad.fill(0.0);
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i)
        if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back();
}

// --- binary elementwise -------------------------------------------------

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (av.cols() != bv.rows())
        throw DataError(Errc::dimension_mismatch,
                        "matmul: inner dims " + std::to_string(av.cols()) + " vs " + std::to_string(bv.rows()));
    Matrix val(av.rows(), bv.cols());
    for (int i = 0; i < av.rows(); ++i) {
        const double* ai = av.row(i);
        double* oi = val.row(i);
        for (int k = 0; k < av.cols(); ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = bv.row(k);
            for (int j = 0; j < bv.cols(); ++j) oi[j] += aik * bk[j];
        }
    }
    const bool ng = OpAccess::needs_grad(a) || OpAccess::needs_grad(b);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [a, b, out]() {
            Tape& t = *a.tape;
            const Matrix& g = t.grad(out);
            const Matrix& av = t.value(a);
            const Matrix& bv = t.value(b);
            if (OpAccess::needs_grad(a)) {
                Matrix& ga = OpAccess::grad(a);
                for (int i = 0; i < g.rows(); ++i) {
                    const double* gi = g.row(i);
                    double* gai = ga.row(i);
                    for (int k = 0; k < bv.rows(); ++k) {
                        const double* bk = bv.row(k);
                        double s = 0.0;
                        for (int j = 0; j < g.cols(); ++j) s += gi[j] * bk[j];
                        gai[k] += s;
                    }
                }
            }
            if (OpAccess::needs_grad(b)) {
                Matrix& gb = OpAccess::grad(b);
                for (int i = 0; i < av.rows(); ++i) {
                    const double* ai = av.row(i);
                    const double* gi = g.row(i);
                    for (int k = 0; k < av.cols(); ++k) {
                        const double aik = ai[k];
                        if (aik == 0.0) continue;
                        double* gbk = gb.row(k);
                        for (int j = 0; j < g.cols(); ++j) gbk[j] += aik * gi[j];
                    }
                }
            }
        });
    return out;
}

namespace {

template <typename Fwd, typename BackA, typename BackB>
Var binary_same_shape(Var a, Var b, const char* name, Fwd fwd, BackA ba, BackB bb) {
    check_same_tape(a, b, name);
    Tape& t = *a.tape;
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    check_same_shape(av, bv, name);
    Matrix val(av.rows(), av.cols());
    for (int i = 0; i < av.rows(); ++i)
        for (int j = 0; j < av.cols(); ++j) val(i, j) = fwd(av(i, j), bv(i, j));
    const bool ng = OpAccess::needs_grad(a) || OpAccess::needs_grad(b);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [a, b, out, ba, bb]() {
            Tape& t = *a.tape;
            const Matrix& g = t.grad(out);
            const Matrix& av = t.value(a);
            const Matrix& bv = t.value(b);
            if (OpAccess::needs_grad(a)) {
                Matrix& ga = OpAccess::grad(a);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) ga(i, j) += ba(g(i, j), av(i, j), bv(i, j));
            }
            if (OpAccess::needs_grad(b)) {
                Matrix& gb = OpAccess::grad(b);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gb(i, j) += bb(g(i, j), av(i, j), bv(i, j));
            }
        });
    return out;
}

} // namespace

Var add(Var a, Var b) {
    return binary_same_shape(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Var sub(Var a, Var b) {
    return binary_same_shape(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Var mul(Var a, Var b) {
    return binary_same_shape(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double g, double, double y) { return g * y; }, [](double g, double x, double) { return g * x; });
}

// --- unary elementwise -----------------------------------------------------

namespace {

template <typename Fwd, typename Back>
Var unary_elementwise(Var x, Fwd fwd, Back back) {
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    Matrix val(xv.rows(), xv.cols());
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = 0; j < xv.cols(); ++j) val(i, j) = fwd(xv(i, j));
    const bool ng = OpAccess::needs_grad(x);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, out, back]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            const Matrix& xv = t.value(x);
            const Matrix& yv = t.value(out);
            Matrix& gx = OpAccess::grad(x);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) gx(i, j) += g(i, j) * back(xv(i, j), yv(i, j));
        });
    return out;
}

} // namespace

Var scale(Var a, double s) {
    return unary_elementwise(
        a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var leaky_relu(Var x, double slope) {
    return unary_elementwise(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var elu(Var x) {
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
        [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

Var exp(Var x) {
    return unary_elementwise(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
    return unary_elementwise(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var pow_elem(Var x, double p) {
    return unary_elementwise(
        x, [p](double v) { return std::pow(v, p); },
        [p](double v, double) {
            if (v == 0.0) return p > 1.0 ? 0.0 : (p == 1.0 ? 1.0 : std::numeric_limits<double>::infinity());
            return p * std::pow(v, p - 1.0);
        });
}

// --- broadcasts and layout ---------------------------------------------------

Var add_row_broadcast(Var x, Var row) {
    check_same_tape(x, row, "add_row_broadcast");
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    const Matrix& rv = t.value(row);
    if (rv.rows() != 1 || rv.cols() != xv.cols())
        throw DataError(Errc::dimension_mismatch, "add_row_broadcast: row vector must be 1 x cols");
    Matrix val = xv;
    for (int i = 0; i < val.rows(); ++i)
        for (int j = 0; j < val.cols(); ++j) val(i, j) += rv(0, j);
    const bool ng = OpAccess::needs_grad(x) || OpAccess::needs_grad(row);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, row, out]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            if (OpAccess::needs_grad(x)) {
                Matrix& gx = OpAccess::grad(x);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gx(i, j) += g(i, j);
            }
            if (OpAccess::needs_grad(row)) {
                Matrix& gr = OpAccess::grad(row);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
            }
        });
    return out;
}

Var mul_row_broadcast(Var x, Var row) {
    check_same_tape(x, row, "mul_row_broadcast");
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    const Matrix& rv = t.value(row);
    if (rv.rows() != 1 || rv.cols() != xv.cols())
        throw DataError(Errc::dimension_mismatch, "mul_row_broadcast: row vector must be 1 x cols");
    Matrix val(xv.rows(), xv.cols());
    for (int i = 0; i < val.rows(); ++i)
        for (int j = 0; j < val.cols(); ++j) val(i, j) = xv(i, j) * rv(0, j);
    const bool ng = OpAccess::needs_grad(x) || OpAccess::needs_grad(row);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, row, out]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            const Matrix& xv = t.value(x);
            const Matrix& rv = t.value(row);
            if (OpAccess::needs_grad(x)) {
                Matrix& gx = OpAccess::grad(x);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gx(i, j) += g(i, j) * rv(0, j);
            }
            if (OpAccess::needs_grad(row)) {
                Matrix& gr = OpAccess::grad(row);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j) * xv(i, j);
            }
        });
    return out;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw DataError(Errc::empty_subset, "concat_rows: no parts");
    Tape& t = *parts[0].tape;
    const int cols = t.value(parts[0]).cols();
    int rows = 0;
    bool ng = false;
    for (Var p : parts) {
        check_same_tape(parts[0], p, "concat_rows");
        if (t.value(p).cols() != cols) throw DataError(Errc::dimension_mismatch, "concat_rows: column mismatch");
        rows += t.value(p).rows();
        ng = ng || OpAccess::needs_grad(p);
    }
    Matrix val(rows, cols);
    int r0 = 0;
    for (Var p : parts) {
        const Matrix& pv = t.value(p);
        for (int i = 0; i < pv.rows(); ++i)
            for (int j = 0; j < cols; ++j) val(r0 + i, j) = pv(i, j);
        r0 += pv.rows();
    }
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng) {
        std::vector<Var> ps = parts;
        OpAccess::set_back(out, [ps, out]() {
            Tape& t = *out.tape;
            const Matrix& g = t.grad(out);
            int r0 = 0;
            for (Var p : ps) {
                const int pr = t.value(p).rows();
                if (OpAccess::needs_grad(p)) {
                    Matrix& gp = OpAccess::grad(p);
                    for (int i = 0; i < pr; ++i)
                        for (int j = 0; j < g.cols(); ++j) gp(i, j) += g(r0 + i, j);
                }
                r0 += pr;
            }
        });
    }
    return out;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DataError(Errc::empty_subset, "concat_cols: no parts");
    Tape& t = *parts[0].tape;
    const int rows = t.value(parts[0]).rows();
    int cols = 0;
    bool ng = false;
    for (Var p : parts) {
        check_same_tape(parts[0], p, "concat_cols");
        if (t.value(p).rows() != rows) throw DataError(Errc::dimension_mismatch, "concat_cols: row mismatch");
        cols += t.value(p).cols();
        ng = ng || OpAccess::needs_grad(p);
    }
    Matrix val(rows, cols);
    int c0 = 0;
    for (Var p : parts) {
        const Matrix& pv = t.value(p);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pv.cols(); ++j) val(i, c0 + j) = pv(i, j);
        c0 += pv.cols();
    }
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng) {
        std::vector<Var> ps = parts;
        OpAccess::set_back(out, [ps, out]() {
            Tape& t = *out.tape;
            const Matrix& g = t.grad(out);
            int c0 = 0;
            for (Var p : ps) {
                const int pc = t.value(p).cols();
                if (OpAccess::needs_grad(p)) {
                    Matrix& gp = OpAccess::grad(p);
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < pc; ++j) gp(i, j) += g(i, c0 + j);
                }
                c0 += pc;
            }
        });
    }
    return out;
}

Var slice_cols(Var x, int begin, int end) {
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    if (begin < 0 || end > xv.cols() || begin >= end)
        throw DataError(Errc::index_out_of_range, "slice_cols: bad range");
    Matrix val(xv.rows(), end - begin);
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = begin; j < end; ++j) val(i, j - begin) = xv(i, j);
    const bool ng = OpAccess::needs_grad(x);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, out, begin]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            Matrix& gx = OpAccess::grad(x);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) gx(i, begin + j) += g(i, j);
        });
    return out;
}

Var row_normalize_l2(Var x, double eps) {
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    Matrix val(xv.rows(), xv.cols());
    for (int i = 0; i < xv.rows(); ++i) {
        const double inv = 1.0 / std::max(xv.row_norm(i), eps);
        for (int j = 0; j < xv.cols(); ++j) val(i, j) = xv(i, j) * inv;
    }
    const bool ng = OpAccess::needs_grad(x);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, out, eps]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            const Matrix& xv = t.value(x);
            const Matrix& yv = t.value(out);
            Matrix& gx = OpAccess::grad(x);
            for (int i = 0; i < g.rows(); ++i) {
                const double norm = xv.row_norm(i);
                const double m = std::max(norm, eps);
                if (norm > eps) {
                    // d(x/|x|) = (g - y (y.g)) / |x|
                    double dot = 0.0;
                    for (int j = 0; j < g.cols(); ++j) dot += yv(i, j) * g(i, j);
                    for (int j = 0; j < g.cols(); ++j) gx(i, j) += (g(i, j) - yv(i, j) * dot) / m;
                } else {
                    // clamped region: y = x / eps
                    for (int j = 0; j < g.cols(); ++j) gx(i, j) += g(i, j) / m;
                }
            }
        });
    return out;
}

// --- reductions ------------------------------------------------------------

Var sum(Var x) {
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    double s = 0.0;
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = 0; j < xv.cols(); ++j) s += xv(i, j);
    Matrix val(1, 1);
    val(0, 0) = s;
    const bool ng = OpAccess::needs_grad(x);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, out]() {
            Tape& t = *x.tape;
            const double g = t.grad(out)(0, 0);
            Matrix& gx = OpAccess::grad(x);
            for (int i = 0; i < gx.rows(); ++i)
                for (int j = 0; j < gx.cols(); ++j) gx(i, j) += g;
        });
    return out;
}

Var mean(Var x) {
    // Snapshot the size: sum() pushes a node, which may invalidate value() refs.
    const size_t n = x.tape->value(x).size();
    if (n == 0) throw DataError(Errc::empty_subset, "mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var row_sum(Var x) {
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    Matrix val(xv.rows(), 1);
    for (int i = 0; i < xv.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < xv.cols(); ++j) s += xv(i, j);
        val(i, 0) = s;
    }
    const bool ng = OpAccess::needs_grad(x);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, out]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            Matrix& gx = OpAccess::grad(x);
            for (int i = 0; i < gx.rows(); ++i)
                for (int j = 0; j < gx.cols(); ++j) gx(i, j) += g(i, 0);
        });
    return out;
}

// --- gather / scatter --------------------------------------------------------

Var gather_rows(Var x, const std::vector<int>& idx) {
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    for (int k : idx)
        if (k < 0 || k >= xv.rows()) throw DataError(Errc::index_out_of_range, "gather_rows: index " + std::to_string(k));
    Matrix val(static_cast<int>(idx.size()), xv.cols());
    for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < xv.cols(); ++j) val(static_cast<int>(r), j) = xv(idx[r], j);
    const bool ng = OpAccess::needs_grad(x);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, out, idx]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            Matrix& gx = OpAccess::grad(x);
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < g.cols(); ++j) gx(idx[r], j) += g(static_cast<int>(r), j);
        });
    return out;
}

Var scatter_add_rows(Var src, const std::vector<int>& idx, int n) {
    Tape& t = *src.tape;
    const Matrix& sv = t.value(src);
    if (static_cast<int>(idx.size()) != sv.rows())
        throw DataError(Errc::dimension_mismatch, "scatter_add_rows: index count must equal source rows");
    for (int k : idx)
        if (k < 0 || k >= n) throw DataError(Errc::index_out_of_range, "scatter_add_rows: index " + std::to_string(k));
    Matrix val(n, sv.cols());
    for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < sv.cols(); ++j) val(idx[r], j) += sv(static_cast<int>(r), j);
    const bool ng = OpAccess::needs_grad(src);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [src, out, idx]() {
            Tape& t = *src.tape;
            const Matrix& g = t.grad(out);
            Matrix& gs = OpAccess::grad(src);
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < g.cols(); ++j) gs(static_cast<int>(r), j) += g(idx[r], j);
        });
    return out;
}

// --- graph attention kernels --------------------------------------------------

Var segment_softmax(Var logits, const std::vector<int>& dst, int n) {
    Tape& t = *logits.tape;
    const Matrix& lv = t.value(logits);
    if (lv.cols() != 1) throw DataError(Errc::dimension_mismatch, "segment_softmax: logits must be arcs x 1");
    if (static_cast<int>(dst.size()) != lv.rows())
        throw DataError(Errc::dimension_mismatch, "segment_softmax: destination count must equal arc count");
    for (int k : dst)
        if (k < 0 || k >= n) throw DataError(Errc::index_out_of_range, "segment_softmax: destination " + std::to_string(k));

    const int arcs = lv.rows();
    std::vector<double> seg_max(n, -std::numeric_limits<double>::infinity());
    for (int a = 0; a < arcs; ++a) seg_max[dst[a]] = std::max(seg_max[dst[a]], lv(a, 0));
    std::vector<double> seg_sum(n, 0.0);
    Matrix val(arcs, 1);
    for (int a = 0; a < arcs; ++a) {
        val(a, 0) = std::exp(lv(a, 0) - seg_max[dst[a]]);
        seg_sum[dst[a]] += val(a, 0);
    }
    for (int a = 0; a < arcs; ++a) val(a, 0) /= seg_sum[dst[a]];

    const bool ng = OpAccess::needs_grad(logits);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [logits, out, dst, n]() {
            Tape& t = *logits.tape;
            const Matrix& g = t.grad(out);
            const Matrix& w = t.value(out);
            Matrix& gl = OpAccess::grad(logits);
            // d logit_a = w_a * (g_a - sum_{b in seg(a)} w_b g_b)
            std::vector<double> seg_dot(n, 0.0);
            for (int a = 0; a < g.rows(); ++a) seg_dot[dst[a]] += w(a, 0) * g(a, 0);
            for (int a = 0; a < g.rows(); ++a) gl(a, 0) += w(a, 0) * (g(a, 0) - seg_dot[dst[a]]);
        });
    return out;
}

Var scale_rows(Var x, Var s) {
    check_same_tape(x, s, "scale_rows");
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    const Matrix& sv = t.value(s);
    if (sv.cols() != 1 || sv.rows() != xv.rows())
        throw DataError(Errc::dimension_mismatch, "scale_rows: scales must be rows x 1");
    Matrix val(xv.rows(), xv.cols());
    for (int i = 0; i < xv.rows(); ++i)
        for (int j = 0; j < xv.cols(); ++j) val(i, j) = xv(i, j) * sv(i, 0);
    const bool ng = OpAccess::needs_grad(x) || OpAccess::needs_grad(s);
    Var out = OpAccess::push(t, std::move(val), ng);
    if (ng)
        OpAccess::set_back(out, [x, s, out]() {
            Tape& t = *x.tape;
            const Matrix& g = t.grad(out);
            const Matrix& xv = t.value(x);
            const Matrix& sv = t.value(s);
            if (OpAccess::needs_grad(x)) {
                Matrix& gx = OpAccess::grad(x);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gx(i, j) += g(i, j) * sv(i, 0);
            }
            if (OpAccess::needs_grad(s)) {
                Matrix& gs = OpAccess::grad(s);
                for (int i = 0; i < g.rows(); ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < g.cols(); ++j) dot += g(i, j) * xv(i, j);
                    gs(i, 0) += dot;
                }
            }
        });
    return out;
}

} // namespace dgmae::ad
