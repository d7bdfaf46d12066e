#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace gengnn {

class Rng;

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Allocator whose value-initialization is a no-op, so sized construction of a
// buffer that is about to be overwritten skips the zero fill.
template <class T>
struct UninitAllocator : std::allocator<T> {
    using value_type = T;
    template <class U>
    struct rebind {
        using other = UninitAllocator<U>;
    };
    UninitAllocator() = default;
    template <class U>
    UninitAllocator(const UninitAllocator<U>&) noexcept {}
    // Vectorized Eigen kernels round differently depending on the alignment of
    // their operands, so a fixed alignment keeps results independent of the heap.
    static constexpr std::align_val_t kAlign{64};
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
    template <class U>
    void construct(U* p) noexcept {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

using Buffer = std::vector<double, UninitAllocator<double>>;

struct Node {
    Shape shape;
    Buffer value;
    Buffer grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Buffer& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

// Dense row-major float64 array. Copies share the underlying node, so a
// Tensor behaves like a handle; use clone() for an independent copy.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);

    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int axis) const;
    std::size_t numel() const { return node_->value.size(); }

    std::span<const double> data() const { return node_->value; }
    // Direct write access, intended for leaves (parameters, inputs).
    std::span<double> mutable_data() { return node_->value; }
    double item() const;
    double at(std::initializer_list<int> index) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    // Empty span if no gradient has reached this tensor.
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    Tensor clone() const;  // detached copy
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Reverse-mode tape. Constructing a Tape makes it the active recorder for the
// current thread until it is destroyed; ops only record while a tape is
// active and at least one operand requires a gradient. Without an active tape
// every op is a plain forward evaluation.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
    // gradient. Leaves keep accumulating across tapes until zero_grad().
    void backward(const Tensor& loss);

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

    static Tape* active();
    void record(std::shared_ptr<detail::Node> node);

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;
    bool consumed_ = false;
    Tape* previous_ = nullptr;
};

// When enabled, ops reject non-finite operands with NumericError.
void set_strict_numerics(bool on);
bool strict_numerics();

// -- elementwise, numpy-style broadcasting ----------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor tanh(const Tensor& a);
Tensor square(const Tensor& a);

// GELU tanh approximation evaluated by the gelu primitive.
double gelu_scalar(double x);

// -- linear algebra ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
// Applies w ([k,n]) to the last axis of x ([..., k]) giving [..., n].
Tensor matmul_last(const Tensor& x, const Tensor& w);
// matmul_last(x, w) + b with b of shape [n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// -- shape ------------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
// Swaps two axes (negative axes count from the end).
Tensor transpose(const Tensor& a, int axis0 = 0, int axis1 = 1);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int length);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

// -- reductions -------------------------------------------------------------
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// -- normalisation / probability --------------------------------------------
Tensor softmax(const Tensor& a);      // over the last axis
Tensor log_softmax(const Tensor& a);  // over the last axis
Tensor layer_norm(const Tensor& h, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Inverted dropout: zeroes entries with probability p and rescales the rest
// by 1/(1-p). Identity when !training or p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool training);

}  // namespace gengnn
