#include "gengnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Core>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

using detail::Node;
using detail::Buffer;
using NodePtr = std::shared_ptr<Node>;
using IndexBuffer = std::vector<std::size_t, detail::UninitAllocator<std::size_t>>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
    os << ']';
    return os.str();
}

namespace {

#if defined(__GLIBC__)
// Every training step frees and reallocates the same tape-sized buffers. With
// the default thresholds glibc maps and unmaps them each time.
const bool g_heap_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
}();
#endif

thread_local Tape* g_active_tape = nullptr;
bool g_strict = false;

NodePtr new_node(Shape shape, Buffer values) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return node;
}

void check_finite(const Tensor& t, const char* op) {
    if (!g_strict) return;
    for (double v : t.data())
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite operand");
}

bool recording(std::initializer_list<const Tensor*> inputs) {
    if (!g_active_tape) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// Wraps a forward result. When `record` is set the node joins the active tape
// with `parents` and `backward`; otherwise it is a plain constant.
Tensor finish(Shape shape, Buffer values, bool record, std::vector<NodePtr> parents,
              std::function<void(Node&)> backward) {
    NodePtr node = new_node(std::move(shape), std::move(values));
    if (record) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
        g_active_tape->record(node);
    }
    return Tensor(std::move(node));
}

int normalize_axis(int axis, int rank, const char* op) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank)
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return a;
}

// Splits a shape around `axis` into (outer, mid, inner) extents.
struct AxisSplit {
    std::size_t outer = 1, mid = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
    AxisSplit r;
    for (int k = 0; k < axis; ++k) r.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(k)]);
    r.mid = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
    for (std::size_t k = static_cast<std::size_t>(axis) + 1; k < s.size(); ++k) r.inner *= static_cast<std::size_t>(s[k]);
    return r;
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
    Shape out;
    std::vector<std::size_t> sa, sb;  // per-output-axis strides into a and b (0 = broadcast)
    bool same = false;
};

std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size());
    std::size_t acc = 1;
    for (std::size_t k = s.size(); k-- > 0;) {
        st[k] = acc;
        acc *= static_cast<std::size_t>(s[k]);
    }
    return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    Broadcast p;
    if (a == b) {
        p.out = a;
        p.same = true;
        return p;
    }
    const std::size_t r = std::max(a.size(), b.size());
    p.out.assign(r, 1);
    p.sa.assign(r, 0);
    p.sb.assign(r, 0);
    const auto st_a = strides_of(a);
    const auto st_b = strides_of(b);
    for (std::size_t k = 0; k < r; ++k) {
        const std::ptrdiff_t ka = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(r - a.size());
        const std::ptrdiff_t kb = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(r - b.size());
        const int da = ka >= 0 ? a[static_cast<std::size_t>(ka)] : 1;
        const int db = kb >= 0 ? b[static_cast<std::size_t>(kb)] : 1;
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        p.out[k] = std::max(da, db);
        if (da != 1) p.sa[k] = st_a[static_cast<std::size_t>(ka)];
        if (db != 1) p.sb[k] = st_b[static_cast<std::size_t>(kb)];
    }
    return p;
}

// Calls f(o, ia, ib) for every output element in row-major order.
template <class F>
void for_each_broadcast(const Broadcast& p, F&& f) {
    const std::size_t total = shape_numel(p.out);
    if (p.same) {
        for (std::size_t o = 0; o < total; ++o) f(o, o, o);
        return;
    }
    const std::size_t r = p.out.size();
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    const std::size_t inner = static_cast<std::size_t>(p.out[r - 1]);
    const std::size_t ia_step = p.sa[r - 1], ib_step = p.sb[r - 1];
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < total; o += inner) {
        std::size_t xa = ia, xb = ib;
        for (std::size_t k = 0; k < inner; ++k, xa += ia_step, xb += ib_step) f(o + k, xa, xb);
        // advance the outer multi-index
        for (std::size_t d = r - 1; d-- > 0;) {
            ++idx[d];
            ia += p.sa[d];
            ib += p.sb[d];
            if (idx[d] < static_cast<std::size_t>(p.out[d])) break;
            ia -= p.sa[d] * idx[d];
            ib -= p.sb[d] * idx[d];
            idx[d] = 0;
        }
    }
}

enum class BinOp { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
    check_finite(a, name);
    check_finite(b, name);
    Broadcast p = plan_broadcast(a.shape(), b.shape(), name);
    Buffer out(shape_numel(p.out));
    const double* av = a.data().data();
    const double* bv = b.data().data();
    switch (op) {
        case BinOp::add: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; }); break;
        case BinOp::sub: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] - bv[j]; }); break;
        case BinOp::mul: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; }); break;
        case BinOp::div: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] / bv[j]; }); break;
    }
    const bool rec = recording({&a, &b});
    Shape shape = p.out;
    return finish(std::move(shape), std::move(out), rec, {a.node(), b.node()}, [p = std::move(p), op](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        const double* g = self.grad.data();
        const double* av = na.value.data();
        const double* bv = nb.value.data();
        if (na.requires_grad) {
            double* ga = na.grad_buffer().data();
            switch (op) {
                case BinOp::add:
                case BinOp::sub: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; }); break;
                case BinOp::mul: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * bv[j]; }); break;
                case BinOp::div: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] / bv[j]; }); break;
            }
        }
        if (nb.requires_grad) {
            double* gb = nb.grad_buffer().data();
            switch (op) {
                case BinOp::add: for_each_broadcast(p, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; }); break;
                case BinOp::sub: for_each_broadcast(p, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; }); break;
                case BinOp::mul: for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * av[i]; }); break;
                case BinOp::div:
                    for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] -= g[o] * av[i] / (bv[j] * bv[j]); });
                    break;
            }
        }
    });
}

// Elementwise map with derivative expressed through (x, y = f(x)).
template <class F, class D>
Tensor unary(const Tensor& a, const char* name, F f, D dfdx) {
    check_finite(a, name);
    const auto src = a.data();
    Buffer out(src.size());
    for (std::size_t k = 0; k < src.size(); ++k) out[k] = f(src[k]);
    const bool rec = recording({&a});
    return finish(a.shape(), std::move(out), rec, {a.node()}, [dfdx](Node& self) {
        Node& na = *self.parents[0];
        if (!na.requires_grad) return;
        double* ga = na.grad_buffer().data();
        const std::size_t n = self.value.size();
        for (std::size_t k = 0; k < n; ++k) ga[k] += self.grad[k] * dfdx(na.value[k], self.value[k]);
    });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(new_node({}, {0.0})) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    for (int d : shape)
        if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    if (shape_numel(shape) != values.size())
        throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    node_ = new_node(std::move(shape), Buffer(values.begin(), values.end()));
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, 0.0, requires_grad); }

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    auto node = new_node(shape, Buffer(shape_numel(shape), value));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

int Tensor::dim(int axis) const { return shape()[static_cast<std::size_t>(normalize_axis(axis, rank(), "dim"))]; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::initializer_list<int> index) const {
    if (static_cast<int>(index.size()) != rank()) throw ShapeError("at(): index rank differs from tensor rank");
    std::size_t flat = 0;
    std::size_t k = 0;
    for (int i : index) {
        const int d = shape()[k++];
        if (i < 0 || i >= d) throw ShapeError("at(): index out of range");
        flat = flat * static_cast<std::size_t>(d) + static_cast<std::size_t>(i);
    }
    return node_->value[flat];
}

Tensor Tensor::clone() const { return Tensor(new_node(node_->shape, node_->value)); }

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw ContractError("backward: tape already consumed (one backward pass per forward scope)");
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("backward: loss does not depend on any learnable tensor");
    consumed_ = true;
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& node = **it;
        if (node.backward && !node.grad.empty()) node.backward(node);
    }
    for (auto& node : nodes_) {
        node->backward = nullptr;
        node->parents.clear();
    }
    nodes_.clear();
}

void set_strict_numerics(bool on) { g_strict = on; }
bool strict_numerics() { return g_strict; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::div, "div"); }
Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
    return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a, "sigmoid",
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

namespace {

// tanh via a single exp; libm tanh dominated profiles of the edge FFNs.
inline double fast_tanh(double u) {
    if (u > 20.0) return 1.0;
    if (u < -20.0) return -1.0;
    return 1.0 - 2.0 / (std::exp(2.0 * u) + 1.0);
}

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + fast_tanh(kGeluC * (x + kGeluA * x * x * x))); }

Tensor gelu(const Tensor& a) {
    return unary(a, "gelu", gelu_scalar, [](double x, double) {
        const double t = fast_tanh(kGeluC * (x + kGeluA * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    });
}

Tensor tanh(const Tensor& a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor square(const Tensor& a) {
    return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    check_finite(a, "matmul");
    check_finite(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Buffer out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    MapM(out.data(), m, n).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, n);
    const bool rec = recording({&a, &b});
    return finish({m, n}, std::move(out), rec, {a.node(), b.node()}, [m, k, n](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        MapC g(self.grad.data(), m, n);
        if (na.requires_grad) MapM(na.grad_buffer().data(), m, k).noalias() += g * MapC(nb.value.data(), k, n).transpose();
        if (nb.requires_grad) MapM(nb.grad_buffer().data(), k, n).noalias() += MapC(na.value.data(), m, k).transpose() * g;
    });
}

Tensor matmul_last(const Tensor& x, const Tensor& w) {
    if (x.rank() < 1 || w.rank() != 2 || x.dim(-1) != w.dim(0))
        throw ShapeError("matmul_last: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
    check_finite(x, "matmul_last");
    check_finite(w, "matmul_last");
    const int k = w.dim(0), n = w.dim(1);
    const auto m = static_cast<Eigen::Index>(x.numel() / static_cast<std::size_t>(k));
    Shape shape = x.shape();
    shape.back() = n;
    Buffer out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    if (m > 0) MapM(out.data(), m, n).noalias() = MapC(x.data().data(), m, k) * MapC(w.data().data(), k, n);
    const bool rec = recording({&x, &w});
    return finish(std::move(shape), std::move(out), rec, {x.node(), w.node()}, [m, k, n](Node& self) {
        if (m == 0) return;
        Node& nx = *self.parents[0];
        Node& nw = *self.parents[1];
        MapC g(self.grad.data(), m, n);
        if (nx.requires_grad) MapM(nx.grad_buffer().data(), m, k).noalias() += g * MapC(nw.value.data(), k, n).transpose();
        if (nw.requires_grad) MapM(nw.grad_buffer().data(), k, n).noalias() += MapC(nx.value.data(), m, k).transpose() * g;
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() < 1 || w.rank() != 2 || x.dim(-1) != w.dim(0) || b.shape() != Shape{w.dim(1)})
        throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()));
    check_finite(x, "linear");
    check_finite(w, "linear");
    check_finite(b, "linear");
    const int k = w.dim(0), n = w.dim(1);
    const auto m = static_cast<Eigen::Index>(x.numel() / static_cast<std::size_t>(k));
    Shape shape = x.shape();
    shape.back() = n;
    Buffer out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    if (m > 0) {
        MapM o(out.data(), m, n);
        o.noalias() = MapC(x.data().data(), m, k) * MapC(w.data().data(), k, n);
        o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), n);
    }
    const bool rec = recording({&x, &w, &b});
    return finish(std::move(shape), std::move(out), rec, {x.node(), w.node(), b.node()}, [m, k, n](Node& self) {
        if (m == 0) return;
        Node& nx = *self.parents[0];
        Node& nw = *self.parents[1];
        Node& nb = *self.parents[2];
        MapC g(self.grad.data(), m, n);
        if (nx.requires_grad) MapM(nx.grad_buffer().data(), m, k).noalias() += g * MapC(nw.value.data(), k, n).transpose();
        if (nw.requires_grad) MapM(nw.grad_buffer().data(), k, n).noalias() += MapC(nx.value.data(), m, k).transpose() * g;
        if (nb.requires_grad) Eigen::Map<Eigen::RowVectorXd>(nb.grad_buffer().data(), n) += g.colwise().sum();
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& a, Shape shape) {
    int infer = -1;
    std::size_t known = 1;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (shape[k] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one inferred axis");
            infer = static_cast<int>(k);
        } else {
            known *= static_cast<std::size_t>(shape[k]);
        }
    }
    if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = static_cast<int>(a.numel() / known);
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    const bool rec = recording({&a});
    Buffer values(a.data().begin(), a.data().end());
    return finish(std::move(shape), std::move(values), rec, {a.node()}, [](Node& self) {
        Node& na = *self.parents[0];
        if (!na.requires_grad) return;
        auto& ga = na.grad_buffer();
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += self.grad[k];
    });
}

namespace {

// For output flat index o of a permuted tensor, the source flat index.
IndexBuffer permute_map(const Shape& in, const std::vector<int>& axes, Shape& out) {
    const std::size_t r = in.size();
    out.resize(r);
    const auto st = strides_of(in);
    std::vector<std::size_t> src_stride(r);
    for (std::size_t k = 0; k < r; ++k) {
        out[k] = in[static_cast<std::size_t>(axes[k])];
        src_stride[k] = st[static_cast<std::size_t>(axes[k])];
    }
    const std::size_t total = shape_numel(in);
    IndexBuffer map(total);
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < total; ++o) {
        map[o] = src;
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            src += src_stride[d];
            if (idx[d] < static_cast<std::size_t>(out[d])) break;
            src -= src_stride[d] * idx[d];
            idx[d] = 0;
        }
    }
    return map;
}

Tensor gather_flat(const Tensor& a, Shape shape, IndexBuffer map) {
    const auto src = a.data();
    Buffer out(map.size());
    for (std::size_t o = 0; o < map.size(); ++o) out[o] = src[map[o]];
    const bool rec = recording({&a});
    return finish(std::move(shape), std::move(out), rec, {a.node()}, [map = std::move(map)](Node& self) {
        Node& na = *self.parents[0];
        if (!na.requires_grad) return;
        double* ga = na.grad_buffer().data();
        for (std::size_t o = 0; o < map.size(); ++o) ga[map[o]] += self.grad[o];
    });
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    const int r = a.rank();
    if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes length differs from rank of " + shape_str(a.shape()));
    std::vector<int> seen(static_cast<std::size_t>(r), 0);
    std::vector<int> norm(axes.size());
    for (std::size_t k = 0; k < axes.size(); ++k) {
        norm[k] = normalize_axis(axes[k], r, "permute");
        if (seen[static_cast<std::size_t>(norm[k])]++) throw ShapeError("permute: repeated axis");
    }
    Shape out;
    auto map = permute_map(a.shape(), norm, out);
    return gather_flat(a, std::move(out), std::move(map));
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
    const int r = a.rank();
    std::vector<int> axes(static_cast<std::size_t>(r));
    for (int k = 0; k < r; ++k) axes[static_cast<std::size_t>(k)] = k;
    std::swap(axes[static_cast<std::size_t>(normalize_axis(axis0, r, "transpose"))],
              axes[static_cast<std::size_t>(normalize_axis(axis1, r, "transpose"))]);
    return permute(a, axes);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    const int r = parts[0].rank();
    const int ax = normalize_axis(axis, r, "concat");
    Shape shape = parts[0].shape();
    int total = 0;
    for (const Tensor& p : parts) {
        bool ok = p.rank() == r;
        for (int k = 0; ok && k < r; ++k)
            if (k != ax && p.shape()[static_cast<std::size_t>(k)] != shape[static_cast<std::size_t>(k)]) ok = false;
        if (!ok) throw ShapeError("concat: " + shape_str(p.shape()) + " does not match " + shape_str(parts[0].shape()));
        check_finite(p, "concat");
        total += p.shape()[static_cast<std::size_t>(ax)];
    }
    shape[static_cast<std::size_t>(ax)] = total;
    const AxisSplit s = split_axis(shape, ax);
    Buffer out(shape_numel(shape));
    std::vector<std::size_t> widths;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = static_cast<std::size_t>(p.shape()[static_cast<std::size_t>(ax)]) * s.inner;
        widths.push_back(w);
        const double* src = p.data().data();
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy(src + o * w, src + (o + 1) * w, out.begin() + static_cast<std::ptrdiff_t>(o * s.mid * s.inner + offset));
        offset += w;
    }
    bool rec = false;
    std::vector<NodePtr> parents;
    for (const Tensor& p : parts) {
        rec = rec || recording({&p});
        parents.push_back(p.node());
    }
    const std::size_t row = s.mid * s.inner, outer = s.outer;
    return finish(std::move(shape), std::move(out), rec, std::move(parents), [widths, row, outer](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            Node& np = *self.parents[k];
            const std::size_t w = widths[k];
            if (np.requires_grad) {
                double* gp = np.grad_buffer().data();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t q = 0; q < w; ++q) gp[o * w + q] += self.grad[o * row + offset + q];
            }
            offset += w;
        }
    });
}

Tensor slice(const Tensor& a, int axis, int start, int length) {
    const int ax = normalize_axis(axis, a.rank(), "slice");
    const int d = a.shape()[static_cast<std::size_t>(ax)];
    if (start < 0 || length < 0 || start + length > d)
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) + ") outside axis of extent " +
                         std::to_string(d) + " in " + shape_str(a.shape()));
    Shape shape = a.shape();
    shape[static_cast<std::size_t>(ax)] = length;
    const AxisSplit s = split_axis(a.shape(), ax);
    IndexBuffer map;
    map.reserve(shape_numel(shape));
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t m = 0; m < static_cast<std::size_t>(length); ++m)
            for (std::size_t i = 0; i < s.inner; ++i)
                map.push_back((o * s.mid + static_cast<std::size_t>(start) + m) * s.inner + i);
    return gather_flat(a, std::move(shape), std::move(map));
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    Broadcast p = plan_broadcast(a.shape(), shape, "broadcast_to");
    if (p.out != shape) throw ShapeError("broadcast_to: cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
    IndexBuffer map(shape_numel(shape));
    for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t) { map[o] = i; });
    return gather_flat(a, shape, std::move(map));
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a, int axis, bool keepdim) {
    const int ax = normalize_axis(axis, a.rank(), "sum");
    check_finite(a, "sum");
    const AxisSplit s = split_axis(a.shape(), ax);
    Shape shape = a.shape();
    if (keepdim)
        shape[static_cast<std::size_t>(ax)] = 1;
    else
        shape.erase(shape.begin() + ax);
    Buffer out(s.outer * s.inner, 0.0);
    const double* src = a.data().data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t m = 0; m < s.mid; ++m)
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += src[(o * s.mid + m) * s.inner + i];
    const bool rec = recording({&a});
    return finish(std::move(shape), std::move(out), rec, {a.node()}, [s](Node& self) {
        Node& na = *self.parents[0];
        if (!na.requires_grad) return;
        double* ga = na.grad_buffer().data();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t m = 0; m < s.mid; ++m)
                for (std::size_t i = 0; i < s.inner; ++i) ga[(o * s.mid + m) * s.inner + i] += self.grad[o * s.inner + i];
    });
}

Tensor mean(const Tensor& a, int axis, bool keepdim) {
    const int ax = normalize_axis(axis, a.rank(), "mean");
    const int d = a.shape()[static_cast<std::size_t>(ax)];
    if (d == 0) throw ShapeError("mean: empty axis in " + shape_str(a.shape()));
    return scale(sum(a, ax, keepdim), 1.0 / d);
}

Tensor sum_all(const Tensor& a) {
    check_finite(a, "sum_all");
    double total = 0.0;
    for (double v : a.data()) total += v;
    const bool rec = recording({&a});
    return finish({}, {total}, rec, {a.node()}, [](Node& self) {
        Node& na = *self.parents[0];
        if (!na.requires_grad) return;
        for (double& g : na.grad_buffer()) g += self.grad[0];
    });
}

Tensor mean_all(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

// ---------------------------------------------------------------------------
// Normalisation / probability

Tensor softmax(const Tensor& a) {
    if (a.rank() < 1) throw ShapeError("softmax: needs rank >= 1");
    check_finite(a, "softmax");
    const std::size_t c = static_cast<std::size_t>(a.dim(-1));
    const std::size_t rows = c ? a.numel() / c : 0;
    Buffer out(a.numel());
    const double* src = a.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = src + r * c;
        double* y = out.data() + r * c;
        const double mx = *std::max_element(x, x + c);
        double z = 0.0;
        for (std::size_t k = 0; k < c; ++k) z += (y[k] = std::exp(x[k] - mx));
        for (std::size_t k = 0; k < c; ++k) y[k] /= z;
    }
    const bool rec = recording({&a});
    return finish(a.shape(), std::move(out), rec, {a.node()}, [rows, c](Node& self) {
        Node& na = *self.parents[0];
        if (!na.requires_grad) return;
        double* ga = na.grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* s = self.value.data() + r * c;
            const double* g = self.grad.data() + r * c;
            double dot = 0.0;
            for (std::size_t k = 0; k < c; ++k) dot += g[k] * s[k];
            for (std::size_t k = 0; k < c; ++k) ga[r * c + k] += s[k] * (g[k] - dot);
        }
    });
}

Tensor log_softmax(const Tensor& a) {
    if (a.rank() < 1) throw ShapeError("log_softmax: needs rank >= 1");
    check_finite(a, "log_softmax");
    const std::size_t c = static_cast<std::size_t>(a.dim(-1));
    const std::size_t rows = c ? a.numel() / c : 0;
    Buffer out(a.numel());
    const double* src = a.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = src + r * c;
        const double mx = *std::max_element(x, x + c);
        double z = 0.0;
        for (std::size_t k = 0; k < c; ++k) z += std::exp(x[k] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t k = 0; k < c; ++k) out[r * c + k] = x[k] - lz;
    }
    const bool rec = recording({&a});
    return finish(a.shape(), std::move(out), rec, {a.node()}, [rows, c](Node& self) {
        Node& na = *self.parents[0];
        if (!na.requires_grad) return;
        double* ga = na.grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* ls = self.value.data() + r * c;
            const double* g = self.grad.data() + r * c;
            double gs = 0.0;
            for (std::size_t k = 0; k < c; ++k) gs += g[k];
            for (std::size_t k = 0; k < c; ++k) ga[r * c + k] += g[k] - std::exp(ls[k]) * gs;
        }
    });
}

Tensor layer_norm(const Tensor& h, const Tensor& gamma, const Tensor& beta, double eps) {
    if (h.rank() < 1) throw ShapeError("layer_norm: needs rank >= 1");
    const int f = h.dim(-1);
    if (gamma.shape() != Shape{f} || beta.shape() != Shape{f})
        throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " must match feature extent of " + shape_str(h.shape()));
    if (!(eps > 0)) throw InvalidArgument("layer_norm: eps must be positive");
    check_finite(h, "layer_norm");
    const std::size_t c = static_cast<std::size_t>(f);
    const std::size_t rows = c ? h.numel() / c : 0;
    Buffer out(h.numel());
    Buffer xhat(h.numel());
    Buffer inv(rows);
    const double* x = h.data().data();
    const double* gm = gamma.data().data();
    const double* bt = beta.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * c;
        double mu = 0.0;
        for (std::size_t k = 0; k < c; ++k) mu += xr[k];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t k = 0; k < c; ++k) var += (xr[k] - mu) * (xr[k] - mu);
        var /= static_cast<double>(c);
        inv[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t k = 0; k < c; ++k) {
            xhat[r * c + k] = (xr[k] - mu) * inv[r];
            out[r * c + k] = gm[k] * xhat[r * c + k] + bt[k];
        }
    }
    const bool rec = recording({&h, &gamma, &beta});
    return finish(h.shape(), std::move(out), rec, {h.node(), gamma.node(), beta.node()},
                  [xhat = std::move(xhat), inv = std::move(inv), rows, c](Node& self) {
                      Node& nh = *self.parents[0];
                      Node& ng = *self.parents[1];
                      Node& nb = *self.parents[2];
                      const double* g = self.grad.data();
                      if (ng.requires_grad) {
                          double* gg = ng.grad_buffer().data();
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t k = 0; k < c; ++k) gg[k] += g[r * c + k] * xhat[r * c + k];
                      }
                      if (nb.requires_grad) {
                          double* gb = nb.grad_buffer().data();
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t k = 0; k < c; ++k) gb[k] += g[r * c + k];
                      }
                      if (nh.requires_grad) {
                          double* gh = nh.grad_buffer().data();
                          const double* gm = ng.value.data();
                          for (std::size_t r = 0; r < rows; ++r) {
                              double m1 = 0.0, m2 = 0.0;
                              for (std::size_t k = 0; k < c; ++k) {
                                  const double d = g[r * c + k] * gm[k];
                                  m1 += d;
                                  m2 += d * xhat[r * c + k];
                              }
                              m1 /= static_cast<double>(c);
                              m2 /= static_cast<double>(c);
                              for (std::size_t k = 0; k < c; ++k)
                                  gh[r * c + k] += inv[r] * (g[r * c + k] * gm[k] - m1 - xhat[r * c + k] * m2);
                          }
                      }
                  });
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout: probability must lie in [0,1)");
    if (!training || p == 0.0) return a;
    Buffer mask(a.numel());
    const double keep = 1.0 / (1.0 - p);
    for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep;
    return mul(a, Tensor(new_node(a.shape(), std::move(mask))));
}

}  // namespace gengnn
