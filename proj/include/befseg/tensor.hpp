#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace befseg {

namespace debug {
// Fault-injection switch: when set, the sigmoid backward rule is scaled by
// 1.5 so the verification harness can prove the gradient checker catches a
// wrong derivative. Never set outside `verify --inject-fault` and tests.
extern bool corrupt_sigmoid_backward;
}  // namespace debug

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Thread-local switch controlling whether ops record backward closures.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;   // row-major
    bool requires_grad = false;
    std::vector<double> grad;   // sized like data iff requires_grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // empty for leaves
    const char* op = "leaf";

    std::size_t size() const { return data.size(); }
};

}  // namespace detail

// Dense N-dimensional float64 tensor participating in a reverse-mode
// autodiff graph. Copies are shallow handles to the same node, so tensors
// are cheap to pass around; parameter updates mutate the buffer in place
// between steps, after the previous graph has been dropped.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const;
    std::size_t size() const;
    bool requires_grad() const;

    const std::vector<double>& values() const;
    // Mutable access for the optimizer; only valid on leaves between steps.
    std::vector<double>& values_mut();

    const std::vector<double>& grad() const;
    std::vector<double>& grad_mut();
    void zero_grad();

    // value of a size-1 tensor
    double item() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// ---- elementwise (equal shapes; scalar-constant variants below) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// multiply every element by a size-1 graph tensor (differentiable gate)
Tensor scale_by(const Tensor& a, const Tensor& gate);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // rank-2
Tensor reshape(const Tensor& a, Shape new_shape);
// x: [n,m] plus row vector [m], added to every row
Tensor add_rowvec(const Tensor& x, const Tensor& row);

// ---- convolution ----
// input [C_in,H,W], kernels [C_out,C_in,kh,kw] (kh, kw odd), replicate-edge
// padding, output [C_out, (H-1)/stride+1, (W-1)/stride+1]
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride = 1);
// x: [C,H,W] plus per-channel bias [C]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// ---- activations / normalizers ----
Tensor sigmoid(const Tensor& x);
Tensor log_clamped(const Tensor& x, double floor = 1e-12);
Tensor softmax_lastdim(const Tensor& x);

// ---- spatial reductions / resampling on [C,H,W] ----
Tensor global_avg_pool(const Tensor& x);  // -> [C]

enum class Resample { kUpsampleNearest2x, kMaxPool2x, kAvgPool2x };
Tensor resample(const Tensor& x, Resample mode);

// ---- full reductions ----
Tensor sum_all(const Tensor& x);   // -> shape {1}
Tensor mean_all(const Tensor& x);  // -> shape {1}

// ---- composed conveniences ----
inline Tensor silu(const Tensor& x) { return mul(x, sigmoid(x)); }
inline Tensor dot(const Tensor& a, const Tensor& b) { return sum_all(mul(a, b)); }
inline Tensor one_minus(const Tensor& x) { return add_scalar(scale(x, -1.0), 1.0); }

// Reverse sweep from a scalar loss; each reachable node is visited exactly
// once in reverse topological order and gradients accumulate additively
// over fan-out.
void backward(const Tensor& loss);

// Central-difference gradient check of a scalar-valued tensor function.
// Returns max over coordinates of |analytic - numeric| /
// max(1, |analytic|, |numeric|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-5);

}  // namespace befseg
