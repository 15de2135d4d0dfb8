// tensor.hpp
// Minimal eager reverse-mode autodiff over dense row-major tensors.
// The op set is exactly what the models need: matmul (with transpose
// flags), elementwise add/sub/mul/tanh/relu, row broadcasts, embedding
// gather with scatter-add backward, concat/slice, row softmax, layer
// norm, cross entropy with integer targets, stop-gradient, sums.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <unordered_map>
#include <vector>

#include "decor/common.hpp"

namespace decor::num {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

// ---------------------------------------------------------------------------
// Finite checks: on by default in debug builds, switchable via
// DECOR_DEBUG_FINITE=0|1. Failing values raise NumericsError.
// ---------------------------------------------------------------------------

inline bool& finite_checks_flag() {
    static bool enabled = [] {
#ifdef NDEBUG
        bool def = false;
#else
        bool def = true;
#endif
        const char* env = std::getenv("DECOR_DEBUG_FINITE");
        if (env == nullptr) return def;
        return std::string(env) != "0";
    }();
    return enabled;
}

inline bool finite_checks_enabled() { return finite_checks_flag(); }
inline void set_finite_checks(bool on) { finite_checks_flag() = on; }

template <typename T>
void check_finite(const std::vector<T>& v, const char* where) {
    if (!finite_checks_enabled()) return;
    for (T x : v) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw NumericsError(std::string("non-finite value in ") + where);
        }
    }
}

// ---------------------------------------------------------------------------
// Replay log. grad_check evaluates the op several times; quantities that
// must stay frozen across probe evaluations (stop-gradient values, dropout
// masks) are recorded on the first pass and replayed afterwards.
// ---------------------------------------------------------------------------

template <typename T>
struct ReplayLog {
    bool recording = true;
    std::vector<std::vector<T>> values;
    size_t cursor = 0;

    void restart_replay() {
        recording = false;
        cursor = 0;
    }
};

template <typename T>
inline ReplayLog<T>*& active_replay() {
    thread_local ReplayLog<T>* log = nullptr;
    return log;
}

// Records `fresh` on the first pass, returns the frozen copy on replays.
template <typename T>
std::vector<T> replay_aux(std::vector<T> fresh) {
    ReplayLog<T>* log = active_replay<T>();
    if (log == nullptr) return fresh;
    if (log->recording) {
        log->values.push_back(fresh);
        return fresh;
    }
    DECOR_REQUIRE(log->cursor < log->values.size(), NumericsError,
                  "replay log exhausted; op builds a different graph across evaluations");
    return log->values[log->cursor++];
}

// ---------------------------------------------------------------------------
// Graph nodes and gradients.
// ---------------------------------------------------------------------------

template <typename T>
class Gradients;

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(const std::vector<T>&, Gradients<T>&)> backward;

    int64_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
    int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
    int64_t numel() const { return static_cast<int64_t>(value.size()); }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Adjoints live outside the nodes so several threads can run backward over
// graphs that share subgraphs (the per-step fused vocabulary) without racing.
template <typename T>
class Gradients {
public:
    std::vector<T>& of(const Node<T>* n) {
        auto it = adj_.find(n);
        if (it == adj_.end()) {
            it = adj_.emplace(n, std::vector<T>(static_cast<size_t>(n->numel()), T(0))).first;
        }
        return it->second;
    }
    const std::vector<T>* find(const Node<T>* n) const {
        auto it = adj_.find(n);
        return it == adj_.end() ? nullptr : &it->second;
    }
    void clear() { adj_.clear(); }

private:
    std::unordered_map<const Node<T>*, std::vector<T>> adj_;
};

inline bool& no_grad_flag() {
    thread_local bool flag = false;
    return flag;
}

// Scoped inference mode: ops built under the guard carry no backward edges.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(no_grad_flag()) { no_grad_flag() = true; }
    ~NoGradGuard() { no_grad_flag() = prev; }
};

// ---------------------------------------------------------------------------
// Tensor: a value-semantic handle onto a graph node.
// Shapes are {n} (a row vector) or {rows, cols}.
// ---------------------------------------------------------------------------

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr<T> n) : node_(std::move(n)) {}

    static Tensor leaf(Shape shape, std::vector<T> data, bool requires_grad) {
        DECOR_REQUIRE(numel_of(shape) == static_cast<int64_t>(data.size()), NumericsError,
                      "leaf data length does not match shape");
        check_finite(data, "leaf");
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad && !no_grad_flag();
        return Tensor(std::move(n));
    }
    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto total = static_cast<size_t>(numel_of(shape));
        return leaf(std::move(shape), std::vector<T>(total, T(0)), requires_grad);
    }
    static Tensor scalar(T v) { return leaf({1}, {v}, false); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t rows() const { return node_->rows(); }
    int64_t cols() const { return node_->cols(); }
    int64_t numel() const { return node_->numel(); }
    const std::vector<T>& value() const { return node_->value; }
    std::vector<T>& mutable_value() { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }
    T item() const {
        DECOR_REQUIRE(node_->numel() == 1, NumericsError, "item() on non-scalar tensor");
        return node_->value[0];
    }
    Node<T>* node() const { return node_.get(); }
    const NodePtr<T>& node_ptr() const { return node_; }

private:
    NodePtr<T> node_;
};

template <typename T>
NodePtr<T> make_op_node(Shape shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
                        std::function<void(const std::vector<T>&, Gradients<T>&)> backward,
                        const char* name) {
    check_finite(value, name);
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (!no_grad_flag()) {
        for (const auto& p : parents) {
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
        }
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backward = std::move(backward);
        }
    }
    return n;
}

// ---------------------------------------------------------------------------
// Raw row-major matmul kernels (single-threaded, used by forward and
// backward alike).  C[m,n] = opA(A) * opB(B), opX = transpose when flagged.
// ---------------------------------------------------------------------------

template <typename T>
void matmul_raw(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k, bool ta, bool tb,
                bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    if (!ta && !tb) {
        // A {m,k}, B {k,n}
        for (int64_t i = 0; i < m; ++i) {
            T* ci = c + i * n;
            const T* ai = a + i * k;
            for (int64_t p = 0; p < k; ++p) {
                T av = ai[p];
                if (av == T(0)) continue;
                const T* bp = b + p * n;
                for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else if (!ta && tb) {
        // A {m,k}, B {n,k}
        for (int64_t i = 0; i < m; ++i) {
            const T* ai = a + i * k;
            T* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const T* bj = b + j * k;
                T s = T(0);
                for (int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
                ci[j] += s;
            }
        }
    } else if (ta && !tb) {
        // A {k,m}, B {k,n}
        for (int64_t p = 0; p < k; ++p) {
            const T* ap = a + p * m;
            const T* bp = b + p * n;
            for (int64_t i = 0; i < m; ++i) {
                T av = ap[i];
                if (av == T(0)) continue;
                T* ci = c + i * n;
                for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else {
        // A {k,m}, B {n,k}
        for (int64_t i = 0; i < m; ++i) {
            T* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const T* bj = b + j * k;
                T s = T(0);
                for (int64_t p = 0; p < k; ++p) s += a[p * m + i] * bj[p];
                ci[j] += s;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Ops.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta = false, bool tb = false) {
    int64_t m = ta ? a.cols() : a.rows();
    int64_t ka = ta ? a.rows() : a.cols();
    int64_t kb = tb ? b.cols() : b.rows();
    int64_t n = tb ? b.rows() : b.cols();
    DECOR_REQUIRE(ka == kb, NumericsError,
                  "matmul inner dimension mismatch: " << ka << " vs " << kb);
    std::vector<T> out(static_cast<size_t>(m * n));
    matmul_raw(a.value().data(), b.value().data(), out.data(), m, n, ka, ta, tb, false);

    Node<T>* an = a.node();
    Node<T>* bn = b.node();
    auto backward = [an, bn, m, n, k = ka, ta, tb](const std::vector<T>& adj, Gradients<T>& g) {
        if (an->requires_grad) {
            std::vector<T>& da = g.of(an);
            // dA = adj x opB(B) arranged to match A's storage.
            if (!ta) {
                matmul_raw(adj.data(), bn->value.data(), da.data(), m, k, n, false, !tb, true);
            } else {
                matmul_raw(bn->value.data(), adj.data(), da.data(), k, m, n, tb, true, true);
            }
        }
        if (bn->requires_grad) {
            std::vector<T>& db = g.of(bn);
            if (!tb) {
                matmul_raw(an->value.data(), adj.data(), db.data(), k, n, m, !ta, false, true);
            } else {
                matmul_raw(adj.data(), an->value.data(), db.data(), n, k, m, true, ta, true);
            }
        }
    };
    return Tensor<T>(make_op_node<T>({m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
                                     std::move(backward), "matmul"));
}

namespace detail {
template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b, FwdFn fwd, BwdFn bwd,
                             const char* name) {
    DECOR_REQUIRE(a.numel() == b.numel() && a.rows() == b.rows(), NumericsError,
                  name << ": shape mismatch");
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.value()[i], b.value()[i]);
    Node<T>* an = a.node();
    Node<T>* bn = b.node();
    auto backward = [an, bn, bwd](const std::vector<T>& adj, Gradients<T>& g) {
        if (an->requires_grad) {
            std::vector<T>& da = g.of(an);
            for (size_t i = 0; i < adj.size(); ++i) da[i] += bwd(adj[i], an->value[i], bn->value[i], true);
        }
        if (bn->requires_grad) {
            std::vector<T>& db = g.of(bn);
            for (size_t i = 0; i < adj.size(); ++i) db[i] += bwd(adj[i], an->value[i], bn->value[i], false);
        }
    };
    return Tensor<T>(make_op_node<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                                     std::move(backward), name));
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise(
        a, b, [](T x, T y) { return x + y; },
        [](T adj, T, T, bool) { return adj; }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise(
        a, b, [](T x, T y) { return x - y; },
        [](T adj, T, T, bool wrt_a) { return wrt_a ? adj : -adj; }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise(
        a, b, [](T x, T y) { return x * y; },
        [](T adj, T x, T y, bool wrt_a) { return wrt_a ? adj * y : adj * x; }, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
    Node<T>* an = a.node();
    auto backward = [an, c](const std::vector<T>& adj, Gradients<T>& g) {
        if (!an->requires_grad) return;
        std::vector<T>& da = g.of(an);
        for (size_t i = 0; i < adj.size(); ++i) da[i] += adj[i] * c;
    };
    return Tensor<T>(make_op_node<T>(a.shape(), std::move(out), {a.node_ptr()},
                                     std::move(backward), "scale"));
}

// m {r,c} + v {c} broadcast over rows.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& m, const Tensor<T>& v) {
    DECOR_REQUIRE(m.cols() == v.numel(), NumericsError, "add_rowvec width mismatch");
    int64_t r = m.rows(), c = m.cols();
    std::vector<T> out(m.value().size());
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j)
            out[static_cast<size_t>(i * c + j)] = m.value()[static_cast<size_t>(i * c + j)] + v.value()[static_cast<size_t>(j)];
    Node<T>* mn = m.node();
    Node<T>* vn = v.node();
    auto backward = [mn, vn, r, c](const std::vector<T>& adj, Gradients<T>& g) {
        if (mn->requires_grad) {
            std::vector<T>& dm = g.of(mn);
            for (size_t i = 0; i < adj.size(); ++i) dm[i] += adj[i];
        }
        if (vn->requires_grad) {
            std::vector<T>& dv = g.of(vn);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) dv[static_cast<size_t>(j)] += adj[static_cast<size_t>(i * c + j)];
        }
    };
    return Tensor<T>(make_op_node<T>(m.shape(), std::move(out), {m.node_ptr(), v.node_ptr()},
                                     std::move(backward), "add_rowvec"));
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
    Node<T>* an = a.node();
    auto node = make_op_node<T>(a.shape(), std::move(out), {a.node_ptr()}, nullptr, "tanh");
    Node<T>* self = node.get();
    if (node->requires_grad) {
        node->backward = [an, self](const std::vector<T>& adj, Gradients<T>& g) {
            std::vector<T>& da = g.of(an);
            for (size_t i = 0; i < adj.size(); ++i) {
                T y = self->value[i];
                da[i] += adj[i] * (T(1) - y * y);
            }
        };
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
    Node<T>* an = a.node();
    auto backward = [an](const std::vector<T>& adj, Gradients<T>& g) {
        std::vector<T>& da = g.of(an);
        for (size_t i = 0; i < adj.size(); ++i)
            if (an->value[i] > T(0)) da[i] += adj[i];
    };
    return Tensor<T>(make_op_node<T>(a.shape(), std::move(out), {a.node_ptr()},
                                     std::move(backward), "relu"));
}

// Row gather from an embedding table; backward scatter-adds.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int32_t>& idx) {
    DECOR_REQUIRE(!idx.empty(), NumericsError, "gather_rows: empty index list");
    int64_t v = table.rows(), d = table.cols();
    std::vector<T> out(idx.size() * static_cast<size_t>(d));
    for (size_t i = 0; i < idx.size(); ++i) {
        DECOR_REQUIRE(idx[i] >= 0 && idx[i] < v, NumericsError,
                      "gather_rows: index " << idx[i] << " out of range [0," << v << ")");
        std::copy_n(table.value().data() + static_cast<size_t>(idx[i]) * d, d,
                    out.data() + i * static_cast<size_t>(d));
    }
    Node<T>* tn = table.node();
    auto backward = [tn, idx, d](const std::vector<T>& adj, Gradients<T>& g) {
        std::vector<T>& dt = g.of(tn);
        for (size_t i = 0; i < idx.size(); ++i) {
            T* dst = dt.data() + static_cast<size_t>(idx[i]) * d;
            const T* src = adj.data() + i * static_cast<size_t>(d);
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    };
    return Tensor<T>(make_op_node<T>({static_cast<int64_t>(idx.size()), d}, std::move(out),
                                     {table.node_ptr()}, std::move(backward), "gather_rows"));
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    DECOR_REQUIRE(!parts.empty(), NumericsError, "concat_rows: no parts");
    int64_t c = parts[0].cols(), r = 0;
    for (const auto& p : parts) {
        DECOR_REQUIRE(p.cols() == c, NumericsError, "concat_rows: width mismatch");
        r += p.rows();
    }
    std::vector<T> out;
    out.reserve(static_cast<size_t>(r * c));
    std::vector<NodePtr<T>> parents;
    std::vector<Node<T>*> raw;
    for (const auto& p : parts) {
        out.insert(out.end(), p.value().begin(), p.value().end());
        parents.push_back(p.node_ptr());
        raw.push_back(p.node());
    }
    auto backward = [raw, c](const std::vector<T>& adj, Gradients<T>& g) {
        size_t off = 0;
        for (Node<T>* p : raw) {
            size_t len = p->value.size();
            if (p->requires_grad) {
                std::vector<T>& dp = g.of(p);
                for (size_t i = 0; i < len; ++i) dp[i] += adj[off + i];
            }
            off += len;
        }
    };
    return Tensor<T>(make_op_node<T>({r, c}, std::move(out), std::move(parents),
                                     std::move(backward), "concat_rows"));
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    DECOR_REQUIRE(a.rows() == b.rows(), NumericsError, "concat_cols: row mismatch");
    int64_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<T> out(static_cast<size_t>(r * (ca + cb)));
    for (int64_t i = 0; i < r; ++i) {
        std::copy_n(a.value().data() + i * ca, ca, out.data() + i * (ca + cb));
        std::copy_n(b.value().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    Node<T>* an = a.node();
    Node<T>* bn = b.node();
    auto backward = [an, bn, r, ca, cb](const std::vector<T>& adj, Gradients<T>& g) {
        if (an->requires_grad) {
            std::vector<T>& da = g.of(an);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < ca; ++j) da[static_cast<size_t>(i * ca + j)] += adj[static_cast<size_t>(i * (ca + cb) + j)];
        }
        if (bn->requires_grad) {
            std::vector<T>& db = g.of(bn);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < cb; ++j) db[static_cast<size_t>(i * cb + j)] += adj[static_cast<size_t>(i * (ca + cb) + ca + j)];
        }
    };
    return Tensor<T>(make_op_node<T>({r, ca + cb}, std::move(out), {a.node_ptr(), b.node_ptr()},
                                     std::move(backward), "concat_cols"));
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int64_t start, int64_t len) {
    DECOR_REQUIRE(start >= 0 && len >= 1 && start + len <= a.rows(), NumericsError,
                  "slice_rows out of range");
    int64_t c = a.cols();
    std::vector<T> out(a.value().begin() + start * c, a.value().begin() + (start + len) * c);
    Node<T>* an = a.node();
    auto backward = [an, start, len, c](const std::vector<T>& adj, Gradients<T>& g) {
        std::vector<T>& da = g.of(an);
        for (int64_t i = 0; i < len * c; ++i) da[static_cast<size_t>(start * c + i)] += adj[static_cast<size_t>(i)];
    };
    return Tensor<T>(make_op_node<T>({len, c}, std::move(out), {a.node_ptr()},
                                     std::move(backward), "slice_rows"));
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int64_t start, int64_t len) {
    DECOR_REQUIRE(start >= 0 && len >= 1 && start + len <= a.cols(), NumericsError,
                  "slice_cols out of range");
    int64_t r = a.rows(), c = a.cols();
    std::vector<T> out(static_cast<size_t>(r * len));
    for (int64_t i = 0; i < r; ++i)
        std::copy_n(a.value().data() + i * c + start, len, out.data() + i * len);
    Node<T>* an = a.node();
    auto backward = [an, start, len, r, c](const std::vector<T>& adj, Gradients<T>& g) {
        std::vector<T>& da = g.of(an);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < len; ++j) da[static_cast<size_t>(i * c + start + j)] += adj[static_cast<size_t>(i * len + j)];
    };
    return Tensor<T>(make_op_node<T>({r, len}, std::move(out), {a.node_ptr()},
                                     std::move(backward), "slice_cols"));
}

// Softmax over the last dimension, one distribution per row.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    DECOR_REQUIRE(a.numel() >= 1, NumericsError, "softmax_rows: empty input");
    int64_t r = a.rows(), c = a.cols();
    std::vector<T> out(a.value().size());
    for (int64_t i = 0; i < r; ++i) {
        const T* x = a.value().data() + i * c;
        T* y = out.data() + i * c;
        T mx = x[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        T sum = T(0);
        for (int64_t j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (int64_t j = 0; j < c; ++j) y[j] /= sum;
    }
    Node<T>* an = a.node();
    auto node = make_op_node<T>(a.shape(), std::move(out), {a.node_ptr()}, nullptr, "softmax_rows");
    Node<T>* self = node.get();
    if (node->requires_grad) {
        node->backward = [an, self, r, c](const std::vector<T>& adj, Gradients<T>& g) {
            std::vector<T>& da = g.of(an);
            for (int64_t i = 0; i < r; ++i) {
                const T* y = self->value.data() + i * c;
                const T* dy = adj.data() + i * c;
                T dot = T(0);
                for (int64_t j = 0; j < c; ++j) dot += dy[j] * y[j];
                T* dx = da.data() + i * c;
                for (int64_t j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
            }
        };
    }
    return Tensor<T>(std::move(node));
}

// Per-row layer norm with affine parameters, population variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    int64_t r = a.rows(), c = a.cols();
    DECOR_REQUIRE(gain.numel() == c && bias.numel() == c, NumericsError,
                  "layer_norm parameter width mismatch");
    DECOR_REQUIRE(eps > T(0), NumericsError, "layer_norm: eps must be positive");
    std::vector<T> out(a.value().size());
    std::vector<T> inv_std(static_cast<size_t>(r)), means(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        const T* x = a.value().data() + i * c;
        T mean = T(0);
        for (int64_t j = 0; j < c; ++j) mean += x[j];
        mean /= static_cast<T>(c);
        T var = T(0);
        for (int64_t j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<T>(c);
        T is = T(1) / std::sqrt(var + eps);
        means[static_cast<size_t>(i)] = mean;
        inv_std[static_cast<size_t>(i)] = is;
        T* y = out.data() + i * c;
        for (int64_t j = 0; j < c; ++j)
            y[j] = (x[j] - mean) * is * gain.value()[static_cast<size_t>(j)] + bias.value()[static_cast<size_t>(j)];
    }
    Node<T>* an = a.node();
    Node<T>* gn = gain.node();
    Node<T>* bn = bias.node();
    auto backward = [an, gn, bn, r, c, means, inv_std](const std::vector<T>& adj, Gradients<T>& g) {
        for (int64_t i = 0; i < r; ++i) {
            const T* x = an->value.data() + i * c;
            const T* dy = adj.data() + i * c;
            T mean = means[static_cast<size_t>(i)];
            T is = inv_std[static_cast<size_t>(i)];
            if (gn->requires_grad) {
                std::vector<T>& dg = g.of(gn);
                for (int64_t j = 0; j < c; ++j) dg[static_cast<size_t>(j)] += dy[j] * (x[j] - mean) * is;
            }
            if (bn->requires_grad) {
                std::vector<T>& db = g.of(bn);
                for (int64_t j = 0; j < c; ++j) db[static_cast<size_t>(j)] += dy[j];
            }
            if (an->requires_grad) {
                std::vector<T>& da = g.of(an);
                // dx = is/c * (c*h - sum(h) - xhat * sum(h*xhat)), h = dy*gain
                T sum_h = T(0), sum_hx = T(0);
                for (int64_t j = 0; j < c; ++j) {
                    T h = dy[j] * gn->value[static_cast<size_t>(j)];
                    T xhat = (x[j] - mean) * is;
                    sum_h += h;
                    sum_hx += h * xhat;
                }
                T* dx = da.data() + i * c;
                for (int64_t j = 0; j < c; ++j) {
                    T h = dy[j] * gn->value[static_cast<size_t>(j)];
                    T xhat = (x[j] - mean) * is;
                    dx[j] += is * (h - sum_h / static_cast<T>(c) - xhat * sum_hx / static_cast<T>(c));
                }
            }
        }
    };
    return Tensor<T>(make_op_node<T>(a.shape(), std::move(out),
                                     {a.node_ptr(), gain.node_ptr(), bias.node_ptr()},
                                     std::move(backward), "layer_norm"));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T s = T(0);
    for (T x : a.value()) s += x;
    Node<T>* an = a.node();
    auto backward = [an](const std::vector<T>& adj, Gradients<T>& g) {
        std::vector<T>& da = g.of(an);
        for (size_t i = 0; i < da.size(); ++i) da[i] += adj[0];
    };
    return Tensor<T>(make_op_node<T>({1}, {s}, {a.node_ptr()}, std::move(backward), "sum"));
}

template <typename T>
Tensor<T> sum_squares(const Tensor<T>& a) {
    T s = T(0);
    for (T x : a.value()) s += x * x;
    Node<T>* an = a.node();
    auto backward = [an](const std::vector<T>& adj, Gradients<T>& g) {
        std::vector<T>& da = g.of(an);
        for (size_t i = 0; i < da.size(); ++i) da[i] += T(2) * an->value[i] * adj[0];
    };
    return Tensor<T>(make_op_node<T>({1}, {s}, {a.node_ptr()}, std::move(backward), "sum_squares"));
}

// Mean cross entropy over rows with integer targets; rows whose target is
// ignore_index are excluded from both the loss and the normalizer.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int32_t>& targets,
                        int32_t ignore_index = -1) {
    int64_t r = logits.rows(), c = logits.cols();
    DECOR_REQUIRE(static_cast<int64_t>(targets.size()) == r, NumericsError,
                  "cross_entropy: one target per row required");
    T loss = T(0);
    int64_t counted = 0;
    std::vector<T> logprob(logits.value().size());
    for (int64_t i = 0; i < r; ++i) {
        const T* x = logits.value().data() + i * c;
        T mx = x[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        T lse = T(0);
        for (int64_t j = 0; j < c; ++j) lse += std::exp(x[j] - mx);
        lse = std::log(lse) + mx;
        T* lp = logprob.data() + i * c;
        for (int64_t j = 0; j < c; ++j) lp[j] = x[j] - lse;
        if (targets[static_cast<size_t>(i)] == ignore_index) continue;
        DECOR_REQUIRE(targets[static_cast<size_t>(i)] >= 0 && targets[static_cast<size_t>(i)] < c, NumericsError,
                      "cross_entropy: target out of range");
        loss -= lp[targets[static_cast<size_t>(i)]];
        ++counted;
    }
    DECOR_REQUIRE(counted > 0, NumericsError, "cross_entropy: all rows ignored");
    loss /= static_cast<T>(counted);
    Node<T>* ln = logits.node();
    auto backward = [ln, targets, ignore_index, r, c, counted, logprob](const std::vector<T>& adj,
                                                                        Gradients<T>& g) {
        std::vector<T>& dl = g.of(ln);
        T f = adj[0] / static_cast<T>(counted);
        for (int64_t i = 0; i < r; ++i) {
            if (targets[static_cast<size_t>(i)] == ignore_index) continue;
            const T* lp = logprob.data() + i * c;
            T* dx = dl.data() + i * c;
            for (int64_t j = 0; j < c; ++j) dx[j] += f * std::exp(lp[j]);
            dx[targets[static_cast<size_t>(i)]] -= f;
        }
    };
    return Tensor<T>(make_op_node<T>({1}, {loss}, {logits.node_ptr()}, std::move(backward),
                                     "cross_entropy"));
}

// Forward identity, zero gradient flow. Implemented as a fresh leaf; under
// a replay log the forwarded value is frozen across probe evaluations.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& a) {
    std::vector<T> v = replay_aux(a.value());
    return Tensor<T>::leaf(a.shape(), std::move(v), false);
}

// Inverted dropout; the mask is frozen by the replay log under grad_check.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, T p, std::mt19937_64& rng, bool training) {
    if (!training || p <= T(0)) return a;
    DECOR_REQUIRE(p < T(1), NumericsError, "dropout: p must be < 1");
    std::vector<T> mask(a.value().size());
    T keep = T(1) - p;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& m : mask) m = uni(rng) < static_cast<double>(keep) ? T(1) / keep : T(0);
    mask = replay_aux(std::move(mask));
    std::vector<T> out(a.value().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * mask[i];
    Node<T>* an = a.node();
    auto backward = [an, mask](const std::vector<T>& adj, Gradients<T>& g) {
        std::vector<T>& da = g.of(an);
        for (size_t i = 0; i < adj.size(); ++i) da[i] += adj[i] * mask[i];
    };
    return Tensor<T>(make_op_node<T>(a.shape(), std::move(out), {a.node_ptr()},
                                     std::move(backward), "dropout"));
}

// ---------------------------------------------------------------------------
// Reverse pass: iterative topological order from the root, adjoints into an
// external Gradients store.
// ---------------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& root, Gradients<T>& grads) {
    DECOR_REQUIRE(root.numel() == 1, NumericsError, "backward: root must be scalar");
    if (!root.requires_grad()) return;

    std::vector<Node<T>*> order;
    std::unordered_map<Node<T>*, uint8_t> state;  // 0 new, 1 open, 2 done
    std::vector<Node<T>*> stack{root.node()};
    while (!stack.empty()) {
        Node<T>* n = stack.back();
        uint8_t& st = state[n];
        if (st == 0) {
            st = 1;
            for (const auto& p : n->parents) {
                if (p->requires_grad && state[p.get()] == 0) stack.push_back(p.get());
            }
        } else {
            stack.pop_back();
            if (st == 1) {
                st = 2;
                order.push_back(n);
            }
        }
    }

    grads.of(root.node())[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (!n->backward) continue;
        const std::vector<T>* adj = grads.find(n);
        if (adj == nullptr) continue;
        n->backward(*adj, grads);
    }
}

}  // namespace decor::num
