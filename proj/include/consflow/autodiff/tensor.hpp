#pragma once

/// @file tensor.hpp
/// @brief Dense 2-D tensors with reverse-mode gradients and tagged forward tangents.
///
/// A Tensor is a handle to a graph node (values, accumulated gradient, parents and
/// a backward closure) plus an optional set of forward tangents. Each tangent is
/// keyed by an integer tag and is itself a Tensor, i.e. an ordinary graph node.
/// Reverse mode therefore differentiates straight through expressions that contain
/// forward derivatives (forward-over-reverse).
///
/// Tags are handed out by TangentScope in nesting order. When an op propagates the
/// tangent for tag k it uses inputs that still carry their tangents with tags < k,
/// so nested scopes produce mixed derivatives (hyper-dual arithmetic) without
/// perturbation confusion.

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace consflow::ad {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    [[nodiscard]] std::size_t size() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << "[" << s.rows << ", " << s.cols << "]";
    return os.str();
}

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;

    double* grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad.data();
    }
};

class Tensor;
using TangentList = std::vector<std::pair<int, Tensor>>;

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values) {
        if (values.size() != shape.size()) {
            throw ShapeError("constant: value count does not match shape " + to_string(shape));
        }
        auto n = std::make_shared<Node>();
        n->shape = shape;
        n->value = std::move(values);
        return Tensor(std::move(n));
    }
    static Tensor constant(double v) { return constant({1, 1}, {v}); }
    static Tensor full(Shape shape, double v) { return constant(shape, std::vector<double>(shape.size(), v)); }
    static Tensor zeros(Shape shape) { return full(shape, 0.0); }
    static Tensor column(std::span<const double> v) {
        return constant({v.size(), 1}, std::vector<double>(v.begin(), v.end()));
    }
    static Tensor row(std::span<const double> v) {
        return constant({1, v.size()}, std::vector<double>(v.begin(), v.end()));
    }

    /// Leaf node; gradients accumulate into it during backward.
    static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = true) {
        Tensor t = constant(shape, std::move(values));
        t.node_->requires_grad = requires_grad;
        return t;
    }

    [[nodiscard]] bool defined() const { return node_ != nullptr; }
    [[nodiscard]] const Shape& shape() const { return node_->shape; }
    [[nodiscard]] std::size_t rows() const { return node_->shape.rows; }
    [[nodiscard]] std::size_t cols() const { return node_->shape.cols; }
    [[nodiscard]] std::size_t size() const { return node_->value.size(); }
    [[nodiscard]] std::span<const double> values() const { return node_->value; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    [[nodiscard]] double item() const {
        if (size() != 1) throw ShapeError("item: tensor is not a scalar " + to_string(shape()));
        return node_->value[0];
    }
    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

    /// Gradient accumulated by the last backward sweep (zeros if never reached).
    [[nodiscard]] std::vector<double> grad() const {
        if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
        return node_->grad;
    }

    // -- tangents -----------------------------------------------------------
    [[nodiscard]] const TangentList& tangents() const { return tangents_; }
    [[nodiscard]] bool has_tangent(int tag) const {
        return std::any_of(tangents_.begin(), tangents_.end(), [tag](const auto& p) { return p.first == tag; });
    }
    /// Directional derivative for `tag`; zeros when the tensor does not depend on it.
    [[nodiscard]] Tensor tangent(int tag) const {
        for (const auto& [k, t] : tangents_) {
            if (k == tag) return t;
        }
        return zeros(shape());
    }
    [[nodiscard]] Tensor with_tangent(int tag, const Tensor& t) const {
        if (t.shape() != shape()) {
            throw ShapeError("with_tangent: tangent shape " + to_string(t.shape()) + " != " + to_string(shape()));
        }
        Tensor out = *this;
        std::erase_if(out.tangents_, [tag](const auto& p) { return p.first == tag; });
        out.tangents_.emplace_back(tag, t);
        std::sort(out.tangents_.begin(), out.tangents_.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        return out;
    }
    [[nodiscard]] Tensor without_tangents() const { return Tensor(node_); }
    /// Keeps only tangents whose tag is strictly below `tag`.
    [[nodiscard]] Tensor strip_from(int tag) const {
        Tensor out(node_);
        for (const auto& p : tangents_) {
            if (p.first < tag) out.tangents_.push_back(p);
        }
        return out;
    }
    /// Same values, cut from the graph, no tangents.
    [[nodiscard]] Tensor detach() const { return constant(shape(), node_->value); }

private:
    friend struct TangentAccess;
    std::shared_ptr<Node> node_;
    TangentList tangents_;
};

struct TangentAccess {
    static TangentList& list(Tensor& t) { return t.tangents_; }
};

/// RAII allocation of a tangent tag. Nested scopes get larger tags.
class TangentScope {
public:
    TangentScope() : tag_(depth()++) {}
    ~TangentScope() { --depth(); }
    TangentScope(const TangentScope&) = delete;
    TangentScope& operator=(const TangentScope&) = delete;

    [[nodiscard]] int tag() const { return tag_; }
    /// `x` seeded with direction `dir` for this scope's tag.
    [[nodiscard]] Tensor seed(const Tensor& x, const Tensor& dir) const { return x.with_tangent(tag_, dir); }
    [[nodiscard]] Tensor seed_ones(const Tensor& x) const { return x.with_tangent(tag_, Tensor::full(x.shape(), 1.0)); }

private:
    static int& depth() {
        thread_local int d = 0;
        return d;
    }
    int tag_;
};

namespace detail {

inline std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value,
                                       std::vector<std::shared_ptr<Node>> parents,
                                       std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return n;
}

inline std::vector<int> tag_union(std::initializer_list<const Tensor*> ins) {
    std::vector<int> tags;
    for (const Tensor* t : ins) {
        for (const auto& p : t->tangents()) tags.push_back(p.first);
    }
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    return tags;
}

/// Propagates tangents of a unary op. `rule(a_k, da, out_k)` returns d(out) for tag k.
template <class Rule>
Tensor attach_unary(Tensor out, const Tensor& a, Rule&& rule) {
    for (const auto& [k, da] : a.tangents()) {
        Tensor dk = rule(a.strip_from(k), da, out.strip_from(k));
        TangentAccess::list(out).emplace_back(k, std::move(dk));
    }
    return out;
}

/// Binary version; absent tangents are passed as nullptr.
template <class Rule>
Tensor attach_binary(Tensor out, const Tensor& a, const Tensor& b, Rule&& rule) {
    for (int k : tag_union({&a, &b})) {
        const Tensor* da = nullptr;
        const Tensor* db = nullptr;
        for (const auto& p : a.tangents()) {
            if (p.first == k) da = &p.second;
        }
        for (const auto& p : b.tangents()) {
            if (p.first == k) db = &p.second;
        }
        Tensor dk = rule(a.strip_from(k), b.strip_from(k), da, db, out.strip_from(k));
        TangentAccess::list(out).emplace_back(k, std::move(dk));
    }
    return out;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    auto dim = [&](std::size_t x, std::size_t y) {
        if (x == y) return x;
        if (x == 1) return y;
        if (y == 1) return x;
        throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
    };
    return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

/// Sum a broadcast gradient back onto the operand shape.
inline void reduce_into(const Shape& out, const double* g, const Shape& target, double* dst, double scale = 1.0) {
    const std::size_t rs = target.rows == 1 ? 0 : 1;
    const std::size_t cs = target.cols == 1 ? 0 : 1;
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) {
            dst[(r * rs) * target.cols + c * cs] += scale * g[r * out.cols + c];
        }
    }
}

template <class F, class DF>
Tensor map_primal(const Tensor& a, F f, DF df) {
    const auto& av = a.node()->value;
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    auto node = make_node(a.shape(), std::move(out), {a.node()}, [df](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        double* g = p.grad_buffer();
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            g[i] += self.grad[i] * df(p.value[i], self.value[i]);
        }
    });
    return Tensor(std::move(node));
}

enum class BinaryKind { add, sub, mul, div };

inline Tensor binary_primal(const Tensor& a, const Tensor& b, BinaryKind kind) {
    static constexpr const char* names[] = {"add", "sub", "mul", "div"};
    const Shape sa = a.shape(), sb = b.shape();
    const Shape so = broadcast_shape(sa, sb, names[static_cast<int>(kind)]);
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    std::vector<double> out(so.size());
    const std::size_t ar = sa.rows == 1 ? 0 : sa.cols, ac = sa.cols == 1 ? 0 : 1;
    const std::size_t br = sb.rows == 1 ? 0 : sb.cols, bc = sb.cols == 1 ? 0 : 1;
    for (std::size_t r = 0; r < so.rows; ++r) {
        for (std::size_t c = 0; c < so.cols; ++c) {
            const double x = av[r * ar + c * ac];
            const double y = bv[r * br + c * bc];
            double v = 0.0;
            switch (kind) {
                case BinaryKind::add: v = x + y; break;
                case BinaryKind::sub: v = x - y; break;
                case BinaryKind::mul: v = x * y; break;
                case BinaryKind::div: v = x / y; break;
            }
            out[r * so.cols + c] = v;
        }
    }
    auto node = make_node(so, std::move(out), {a.node(), b.node()}, [kind, sa, sb](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const Shape so = self.shape;
        const std::size_t ar = sa.rows == 1 ? 0 : sa.cols, ac = sa.cols == 1 ? 0 : 1;
        const std::size_t br = sb.rows == 1 ? 0 : sb.cols, bc = sb.cols == 1 ? 0 : 1;
        double* ga = pa.requires_grad ? pa.grad_buffer() : nullptr;
        double* gb = pb.requires_grad ? pb.grad_buffer() : nullptr;
        for (std::size_t r = 0; r < so.rows; ++r) {
            for (std::size_t c = 0; c < so.cols; ++c) {
                const double g = self.grad[r * so.cols + c];
                const std::size_t ia = r * ar + c * ac;
                const std::size_t ib = r * br + c * bc;
                switch (kind) {
                    case BinaryKind::add:
                        if (ga) ga[ia] += g;
                        if (gb) gb[ib] += g;
                        break;
                    case BinaryKind::sub:
                        if (ga) ga[ia] += g;
                        if (gb) gb[ib] -= g;
                        break;
                    case BinaryKind::mul:
                        if (ga) ga[ia] += g * pb.value[ib];
                        if (gb) gb[ib] += g * pa.value[ia];
                        break;
                    case BinaryKind::div: {
                        const double y = pb.value[ib];
                        if (ga) ga[ia] += g / y;
                        if (gb) gb[ib] -= g * pa.value[ia] / (y * y);
                        break;
                    }
                }
            }
        }
    });
    return Tensor(std::move(node));
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline Tensor matmul_primal(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const Shape so{a.rows(), b.cols()};
    std::vector<double> out(so.size());
    MutMap(out.data(), so.rows, so.cols).noalias() =
        ConstMap(a.node()->value.data(), a.rows(), a.cols()) * ConstMap(b.node()->value.data(), b.rows(), b.cols());
    auto node = make_node(so, std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        ConstMap g(self.grad.data(), self.shape.rows, self.shape.cols);
        if (pa.requires_grad) {
            MutMap(pa.grad_buffer(), pa.shape.rows, pa.shape.cols).noalias() +=
                g * ConstMap(pb.value.data(), pb.shape.rows, pb.shape.cols).transpose();
        }
        if (pb.requires_grad) {
            MutMap(pb.grad_buffer(), pb.shape.rows, pb.shape.cols).noalias() +=
                ConstMap(pa.value.data(), pa.shape.rows, pa.shape.cols).transpose() * g;
        }
    });
    return Tensor(std::move(node));
}

}  // namespace detail

// ============================================================================
// Elementwise arithmetic (2-D broadcasting: each axis equal or 1)
// ============================================================================

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor out = detail::binary_primal(a.without_tangents(), b.without_tangents(), detail::BinaryKind::add);
    return detail::attach_binary(std::move(out), a, b,
                                 [](const Tensor&, const Tensor&, const Tensor* da, const Tensor* db, const Tensor& o) {
                                     if (da && db) return *da + *db;
                                     Tensor d = da ? *da : *db;
                                     if (d.shape() == o.shape()) return d;
                                     return d + Tensor::zeros(o.shape());
                                 });
}

inline Tensor operator-(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return -x; }, [](double, double) { return -1.0; });
    return detail::attach_unary(std::move(out), a, [](const Tensor&, const Tensor& da, const Tensor&) { return -da; });
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    Tensor out = detail::binary_primal(a.without_tangents(), b.without_tangents(), detail::BinaryKind::sub);
    return detail::attach_binary(std::move(out), a, b,
                                 [](const Tensor&, const Tensor&, const Tensor* da, const Tensor* db, const Tensor& o) {
                                     Tensor d = da && db ? *da - *db : (da ? *da : -*db);
                                     if (d.shape() == o.shape()) return d;
                                     return d + Tensor::zeros(o.shape());
                                 });
}

inline Tensor operator*(const Tensor& a, const Tensor& b) {
    Tensor out = detail::binary_primal(a.without_tangents(), b.without_tangents(), detail::BinaryKind::mul);
    return detail::attach_binary(std::move(out), a, b,
                                 [](const Tensor& ak, const Tensor& bk, const Tensor* da, const Tensor* db,
                                    const Tensor&) {
                                     if (da && db) return *da * bk + ak * *db;
                                     if (da) return *da * bk;
                                     return ak * *db;
                                 });
}

inline Tensor operator/(const Tensor& a, const Tensor& b) {
    Tensor out = detail::binary_primal(a.without_tangents(), b.without_tangents(), detail::BinaryKind::div);
    return detail::attach_binary(std::move(out), a, b,
                                 [](const Tensor&, const Tensor& bk, const Tensor* da, const Tensor* db,
                                    const Tensor& o) {
                                     if (da && db) return (*da - o * *db) / bk;
                                     if (da) return *da / bk;
                                     return -(o * *db) / bk;
                                 });
}

inline Tensor operator+(const Tensor& a, double s) { return a + Tensor::constant(s); }
inline Tensor operator+(double s, const Tensor& a) { return Tensor::constant(s) + a; }
inline Tensor operator-(const Tensor& a, double s) { return a - Tensor::constant(s); }
inline Tensor operator-(double s, const Tensor& a) { return Tensor::constant(s) - a; }
inline Tensor operator*(const Tensor& a, double s) { return a * Tensor::constant(s); }
inline Tensor operator*(double s, const Tensor& a) { return Tensor::constant(s) * a; }
inline Tensor operator/(const Tensor& a, double s) { return a * Tensor::constant(1.0 / s); }
inline Tensor operator/(double s, const Tensor& a) { return Tensor::constant(s) / a; }

inline Tensor exp(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor&, const Tensor& da, const Tensor& o) { return o * da; });
}

inline Tensor log(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor& ak, const Tensor& da, const Tensor&) { return da / ak; });
}

namespace detail {
inline double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
inline double softplus_scalar(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}
}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), detail::sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
    return detail::attach_unary(std::move(out), a, [](const Tensor& ak, const Tensor& da, const Tensor& o) {
        // sigma' = sigma(x) sigma(-x); the second factor is recomputed to stay accurate in the right tail
        return o * sigmoid(-ak) * da;
    });
}

inline Tensor tanh(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor&, const Tensor& da, const Tensor& o) { return (1.0 - square(o)) * da; });
}

inline Tensor sin(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor& ak, const Tensor& da, const Tensor&) { return cos(ak) * da; });
}

inline Tensor cos(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor& ak, const Tensor& da, const Tensor&) { return -(sin(ak) * da); });
}

/// log(1 + e^x), stable for large |x|.
inline Tensor softplus(const Tensor& a) {
    Tensor out = detail::map_primal(a.without_tangents(), detail::softplus_scalar,
                                    [](double x, double) { return detail::sigmoid_scalar(x); });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor& ak, const Tensor& da, const Tensor&) { return sigmoid(ak) * da; });
}

/// log sigma(x) = -softplus(-x).
inline Tensor log_sigmoid(const Tensor& a) { return -softplus(-a); }

inline Tensor square(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor& ak, const Tensor& da, const Tensor&) { return 2.0 * ak * da; });
}

inline Tensor sqrt(const Tensor& a) {
    Tensor out = detail::map_primal(
        a.without_tangents(), [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
    return detail::attach_unary(std::move(out), a,
                                [](const Tensor&, const Tensor& da, const Tensor& o) { return 0.5 * da / o; });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out = detail::matmul_primal(a.without_tangents(), b.without_tangents());
    return detail::attach_binary(std::move(out), a, b,
                                 [](const Tensor& ak, const Tensor& bk, const Tensor* da, const Tensor* db,
                                    const Tensor&) {
                                     if (da && db) return matmul(*da, bk) + matmul(ak, *db);
                                     if (da) return matmul(*da, bk);
                                     return matmul(ak, *db);
                                 });
}

// ============================================================================
// Structural ops and reductions (all linear, so tangents map through the op)
// ============================================================================

namespace detail {
template <class Primal>
Tensor linear_op(const Tensor& a, Primal&& primal) {
    Tensor out = primal(a.without_tangents());
    return attach_unary(std::move(out), a,
                        [&primal](const Tensor&, const Tensor& da, const Tensor&) { return primal(da); });
}
}  // namespace detail

/// Row-wise sum -> [rows, 1].
inline Tensor sum_cols(const Tensor& a) {
    return detail::linear_op(a, [](const Tensor& x) {
        const Shape s = x.shape();
        std::vector<double> out(s.rows, 0.0);
        for (std::size_t r = 0; r < s.rows; ++r) {
            for (std::size_t c = 0; c < s.cols; ++c) out[r] += x.node()->value[r * s.cols + c];
        }
        return Tensor(detail::make_node({s.rows, 1}, std::move(out), {x.node()}, [](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer();
            for (std::size_t r = 0; r < p.shape.rows; ++r) {
                for (std::size_t c = 0; c < p.shape.cols; ++c) g[r * p.shape.cols + c] += self.grad[r];
            }
        }));
    });
}

/// Column-wise sum -> [1, cols].
inline Tensor sum_rows(const Tensor& a) {
    return detail::linear_op(a, [](const Tensor& x) {
        const Shape s = x.shape();
        std::vector<double> out(s.cols, 0.0);
        for (std::size_t r = 0; r < s.rows; ++r) {
            for (std::size_t c = 0; c < s.cols; ++c) out[c] += x.node()->value[r * s.cols + c];
        }
        return Tensor(detail::make_node({1, s.cols}, std::move(out), {x.node()}, [](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer();
            for (std::size_t r = 0; r < p.shape.rows; ++r) {
                for (std::size_t c = 0; c < p.shape.cols; ++c) g[r * p.shape.cols + c] += self.grad[c];
            }
        }));
    });
}

inline Tensor sum(const Tensor& a) { return sum_rows(sum_cols(a)); }
inline Tensor mean(const Tensor& a) { return sum(a) * (1.0 / static_cast<double>(a.size())); }

/// Same data, new shape (row-major order is preserved).
inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape.size() != a.size()) {
        throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
    }
    return detail::linear_op(a, [shape](const Tensor& x) {
        return Tensor(detail::make_node(shape, x.node()->value, {x.node()}, [](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }));
    });
}

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.cols()) {
        throw ShapeError("slice_cols: range exceeds " + to_string(a.shape()));
    }
    return detail::linear_op(a, [start, count](const Tensor& x) {
        const Shape s = x.shape();
        std::vector<double> out(s.rows * count);
        for (std::size_t r = 0; r < s.rows; ++r) {
            std::copy_n(x.node()->value.begin() + static_cast<std::ptrdiff_t>(r * s.cols + start), count,
                        out.begin() + static_cast<std::ptrdiff_t>(r * count));
        }
        return Tensor(detail::make_node({s.rows, count}, std::move(out), {x.node()}, [start, count](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer();
            for (std::size_t r = 0; r < p.shape.rows; ++r) {
                for (std::size_t c = 0; c < count; ++c) g[r * p.shape.cols + start + c] += self.grad[r * count + c];
            }
        }));
    });
}

inline Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.rows()) {
        throw ShapeError("slice_rows: range exceeds " + to_string(a.shape()));
    }
    return detail::linear_op(a, [start, count](const Tensor& x) {
        const std::size_t c = x.cols();
        std::vector<double> out(x.node()->value.begin() + static_cast<std::ptrdiff_t>(start * c),
                                x.node()->value.begin() + static_cast<std::ptrdiff_t>((start + count) * c));
        return Tensor(detail::make_node({count, c}, std::move(out), {x.node()}, [start](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer() + start * p.shape.cols;
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }));
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.cols();
    }
    auto primal = [rows, cols](const std::vector<Tensor>& xs) {
        std::vector<double> out(rows * cols);
        std::vector<std::shared_ptr<Node>> parents;
        std::size_t off = 0;
        for (const auto& x : xs) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) out[r * cols + off + c] = x.node()->value[r * x.cols() + c];
            }
            off += x.cols();
            parents.push_back(x.node());
        }
        return Tensor(detail::make_node({rows, cols}, std::move(out), std::move(parents), [](Node& self) {
            std::size_t off = 0;
            const std::size_t cols = self.shape.cols;
            for (auto& pp : self.parents) {
                Node& p = *pp;
                if (p.requires_grad) {
                    double* g = p.grad_buffer();
                    for (std::size_t r = 0; r < p.shape.rows; ++r) {
                        for (std::size_t c = 0; c < p.shape.cols; ++c) g[r * p.shape.cols + c] += self.grad[r * cols + off + c];
                    }
                }
                off += p.shape.cols;
            }
        }));
    };
    std::vector<Tensor> bare;
    std::vector<int> tags;
    for (const auto& p : parts) {
        bare.push_back(p.without_tangents());
        for (const auto& t : p.tangents()) tags.push_back(t.first);
    }
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    Tensor out = primal(bare);
    for (int k : tags) {
        std::vector<Tensor> ds;
        for (const auto& p : parts) ds.push_back(p.tangent(k));
        TangentAccess::list(out).emplace_back(k, concat_cols(ds));
    }
    return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
        rows += p.rows();
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<int> tags;
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        parents.push_back(p.node());
        for (const auto& t : p.tangents()) tags.push_back(t.first);
    }
    Tensor result(detail::make_node({rows, cols}, std::move(out), std::move(parents), [](Node& self) {
        std::size_t off = 0;
        for (auto& pp : self.parents) {
            Node& p = *pp;
            if (p.requires_grad) {
                double* g = p.grad_buffer();
                for (std::size_t i = 0; i < p.value.size(); ++i) g[i] += self.grad[off + i];
            }
            off += p.value.size();
        }
    }));
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    for (int k : tags) {
        std::vector<Tensor> ds;
        for (const auto& p : parts) ds.push_back(p.tangent(k));
        TangentAccess::list(result).emplace_back(k, concat_rows(ds));
    }
    return result;
}

/// Horizontal tiling: [r, c] -> [r, c * times].
inline Tensor tile_cols(const Tensor& a, std::size_t times) {
    return detail::linear_op(a, [times](const Tensor& x) {
        const Shape s = x.shape();
        const std::size_t oc = s.cols * times;
        std::vector<double> out(s.rows * oc);
        for (std::size_t r = 0; r < s.rows; ++r) {
            for (std::size_t k = 0; k < times; ++k) {
                for (std::size_t c = 0; c < s.cols; ++c) out[r * oc + k * s.cols + c] = x.node()->value[r * s.cols + c];
            }
        }
        return Tensor(detail::make_node({s.rows, oc}, std::move(out), {x.node()}, [times](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer();
            const std::size_t pc = p.shape.cols, oc = self.shape.cols;
            for (std::size_t r = 0; r < p.shape.rows; ++r) {
                for (std::size_t k = 0; k < times; ++k) {
                    for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += self.grad[r * oc + k * pc + c];
                }
            }
        }));
    });
}

/// Each row repeated `times` times consecutively: [r, c] -> [r * times, c].
inline Tensor repeat_rows(const Tensor& a, std::size_t times) {
    if (times == 1) return a;
    return detail::linear_op(a, [times](const Tensor& x) {
        const Shape s = x.shape();
        std::vector<double> out(s.size() * times);
        for (std::size_t r = 0; r < s.rows; ++r) {
            for (std::size_t k = 0; k < times; ++k) {
                std::copy_n(x.node()->value.begin() + static_cast<std::ptrdiff_t>(r * s.cols), s.cols,
                            out.begin() + static_cast<std::ptrdiff_t>((r * times + k) * s.cols));
            }
        }
        return Tensor(detail::make_node({s.rows * times, s.cols}, std::move(out), {x.node()}, [times](Node& self) {
            Node& p = *self.parents[0];
            double* g = p.grad_buffer();
            const std::size_t c = p.shape.cols;
            for (std::size_t r = 0; r < p.shape.rows; ++r) {
                for (std::size_t k = 0; k < times; ++k) {
                    for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad[(r * times + k) * c + j];
                }
            }
        }));
    });
}

/// Broadcast a [1,c], [r,1] or [1,1] tensor to `shape`.
inline Tensor broadcast_to(const Tensor& a, Shape shape) {
    if (a.shape() == shape) return a;
    return a + Tensor::zeros(shape);
}

/// Elementwise choice between `a` and `b` by a constant mask of the output shape.
inline Tensor select(const std::vector<std::uint8_t>& mask, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || mask.size() != a.size()) {
        throw ShapeError("select: shapes differ");
    }
    auto primal = [&mask](const Tensor& x, const Tensor& y) {
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? x.node()->value[i] : y.node()->value[i];
        return Tensor(detail::make_node(x.shape(), std::move(out), {x.node(), y.node()}, [mask](Node& self) {
            Node& px = *self.parents[0];
            Node& py = *self.parents[1];
            double* gx = px.requires_grad ? px.grad_buffer() : nullptr;
            double* gy = py.requires_grad ? py.grad_buffer() : nullptr;
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                if (mask[i]) {
                    if (gx) gx[i] += self.grad[i];
                } else if (gy) {
                    gy[i] += self.grad[i];
                }
            }
        }));
    };
    Tensor out = primal(a.without_tangents(), b.without_tangents());
    for (int k : detail::tag_union({&a, &b})) {
        TangentAccess::list(out).emplace_back(k, select(mask, a.tangent(k), b.tangent(k)));
    }
    return out;
}

/// Row-wise max, treated as a constant (used only as a stabilising shift).
inline Tensor rowmax_detached(const Tensor& a) {
    const Shape s = a.shape();
    std::vector<double> out(s.rows, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t c = 0; c < s.cols; ++c) out[r] = std::max(out[r], a.at(r, c));
        if (!std::isfinite(out[r])) out[r] = 0.0;
    }
    return Tensor::constant({s.rows, 1}, std::move(out));
}

/// Row-wise log-sum-exp -> [rows, 1].
inline Tensor logsumexp_cols(const Tensor& a) {
    Tensor shift = rowmax_detached(a);
    return log(sum_cols(exp(a - shift))) + shift;
}

/// Row-wise softmax weights.
inline Tensor softmax_cols(const Tensor& a) { return exp(a - logsumexp_cols(a)); }

inline Tensor log_softmax_cols(const Tensor& a) { return a - logsumexp_cols(a); }

/// Group-wise reduction helper: [r, g*w] viewed as [r*g, w] rows.
inline Tensor grouped(const Tensor& a, std::size_t width) {
    if (a.cols() % width != 0) throw ShapeError("grouped: columns not divisible by group width");
    return reshape(a, {a.rows() * (a.cols() / width), width});
}

// ============================================================================
// Reverse sweep
// ============================================================================

/// Accumulates d(loss)/d(node) into every reachable node that requires grad.
/// Tangent tensors are ordinary nodes, so derivatives of forward-mode quantities
/// are included.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->grad.assign(n->value.size(), 0.0);
    loss.node()->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

}  // namespace consflow::ad
