#include "befseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace befseg {

namespace debug {
bool corrupt_sigmoid_backward = false;
}

std::string shape_str(const Shape& s) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out << ',';
        out << s[i];
    }
    out << ']';
    return out.str();
}

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    if (n->requires_grad) n->grad.assign(n->data.size(), 0.0);
    return n;
}

// Allocates the output node for an op. The node tracks gradients (keeping
// its parents alive and accepting a backward closure) only when grad mode
// is on and at least one parent participates; otherwise it is a detached
// leaf so dead graph segments are freed eagerly.
NodePtr make_op_node(Shape shape, const std::vector<NodePtr>& parents, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data.assign(shape_numel(n->shape), 0.0);
    n->op = op;
    bool track = g_grad_enabled;
    if (track) {
        bool any = false;
        for (const auto& p : parents) any = any || p->requires_grad;
        track = any;
    }
    if (track) {
        n->requires_grad = true;
        n->grad.assign(n->data.size(), 0.0);
        n->parents = parents;
    }
    return n;
}

const NodePtr& need(const Tensor& t, const char* op) {
    if (!t.defined()) fail(std::string(op) + ": tensor is undefined");
    return t.node();
}

void need_same_shape(const Node& a, const Node& b, const char* op) {
    if (a.shape != b.shape)
        fail(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
             shape_str(b.shape));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        fail("from_vector: shape " + shape_str(shape) + " wants " +
             std::to_string(shape_numel(shape)) + " values, got " + std::to_string(data.size()));
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }
std::size_t Tensor::rank() const { return shape().size(); }
std::size_t Tensor::size() const { return need(*this, "size")->data.size(); }
bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }

const std::vector<double>& Tensor::values() const { return need(*this, "values")->data; }

std::vector<double>& Tensor::values_mut() { return need(*this, "values_mut")->data; }

const std::vector<double>& Tensor::grad() const {
    const auto& n = need(*this, "grad");
    if (!n->requires_grad) fail("grad: tensor does not require gradients");
    return n->grad;
}

std::vector<double>& Tensor::grad_mut() {
    const auto& n = need(*this, "grad_mut");
    if (!n->requires_grad) fail("grad_mut: tensor does not require gradients");
    return n->grad;
}

void Tensor::zero_grad() {
    const auto& n = need(*this, "zero_grad");
    if (n->requires_grad) std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

double Tensor::item() const {
    const auto& n = need(*this, "item");
    if (n->data.size() != 1)
        fail("item: tensor has " + std::to_string(n->data.size()) + " elements, expected 1");
    return n->data[0];
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    const auto& na = need(a, "add");
    const auto& nb = need(b, "add");
    need_same_shape(*na, *nb, "add");
    auto out = make_op_node(na->shape, {na, nb}, "add");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na->data[i] + nb->data[i];
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& pa = *o.parents[0];
            Node& pb = *o.parents[1];
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                if (pa.requires_grad) pa.grad[i] += o.grad[i];
                if (pb.requires_grad) pb.grad[i] += o.grad[i];
            }
        };
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const auto& na = need(a, "sub");
    const auto& nb = need(b, "sub");
    need_same_shape(*na, *nb, "sub");
    auto out = make_op_node(na->shape, {na, nb}, "sub");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na->data[i] - nb->data[i];
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& pa = *o.parents[0];
            Node& pb = *o.parents[1];
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                if (pa.requires_grad) pa.grad[i] += o.grad[i];
                if (pb.requires_grad) pb.grad[i] -= o.grad[i];
            }
        };
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const auto& na = need(a, "mul");
    const auto& nb = need(b, "mul");
    need_same_shape(*na, *nb, "mul");
    auto out = make_op_node(na->shape, {na, nb}, "mul");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na->data[i] * nb->data[i];
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& pa = *o.parents[0];
            Node& pb = *o.parents[1];
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                if (pa.requires_grad) pa.grad[i] += o.grad[i] * pb.data[i];
                if (pb.requires_grad) pb.grad[i] += o.grad[i] * pa.data[i];
            }
        };
    return Tensor(out);
}

Tensor div(const Tensor& a, const Tensor& b) {
    const auto& na = need(a, "div");
    const auto& nb = need(b, "div");
    need_same_shape(*na, *nb, "div");
    auto out = make_op_node(na->shape, {na, nb}, "div");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na->data[i] / nb->data[i];
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& pa = *o.parents[0];
            Node& pb = *o.parents[1];
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                double inv = 1.0 / pb.data[i];
                if (pa.requires_grad) pa.grad[i] += o.grad[i] * inv;
                if (pb.requires_grad) pb.grad[i] -= o.grad[i] * pa.data[i] * inv * inv;
            }
        };
    return Tensor(out);
}

Tensor scale(const Tensor& a, double c) {
    const auto& na = need(a, "scale");
    auto out = make_op_node(na->shape, {na}, "scale");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na->data[i] * c;
    if (out->requires_grad)
        out->backward_fn = [c](Node& o) {
            Node& pa = *o.parents[0];
            if (!pa.requires_grad) return;
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * c;
        };
    return Tensor(out);
}

Tensor add_scalar(const Tensor& a, double c) {
    const auto& na = need(a, "add_scalar");
    auto out = make_op_node(na->shape, {na}, "add_scalar");
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na->data[i] + c;
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& pa = *o.parents[0];
            if (!pa.requires_grad) return;
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
        };
    return Tensor(out);
}

Tensor scale_by(const Tensor& a, const Tensor& gate) {
    const auto& na = need(a, "scale_by");
    const auto& ng = need(gate, "scale_by");
    if (ng->data.size() != 1)
        fail("scale_by: gate must have a single element, got shape " + shape_str(ng->shape));
    auto out = make_op_node(na->shape, {na, ng}, "scale_by");
    double s = ng->data[0];
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = na->data[i] * s;
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& pa = *o.parents[0];
            Node& pg = *o.parents[1];
            double s = pg.data[0];
            double gate_acc = 0.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                if (pa.requires_grad) pa.grad[i] += o.grad[i] * s;
                gate_acc += o.grad[i] * pa.data[i];
            }
            if (pg.requires_grad) pg.grad[0] += gate_acc;
        };
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& na = need(a, "matmul");
    const auto& nb = need(b, "matmul");
    if (na->shape.size() != 2 || nb->shape.size() != 2)
        fail("matmul: expects rank-2 operands, got " + shape_str(na->shape) + " and " +
             shape_str(nb->shape));
    if (na->shape[1] != nb->shape[0])
        fail("matmul: inner dimensions disagree, " + shape_str(na->shape) + " x " +
             shape_str(nb->shape));
    const std::size_t m = na->shape[0], k = na->shape[1], n = nb->shape[1];
    auto out = make_op_node({m, n}, {na, nb}, "matmul");
    const double* A = na->data.data();
    const double* B = nb->data.data();
    double* C = out->data.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = A[i * k + p];
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    if (out->requires_grad)
        out->backward_fn = [m, k, n](Node& o) {
            Node& pa = *o.parents[0];
            Node& pb = *o.parents[1];
            const double* G = o.grad.data();
            if (pa.requires_grad) {
                // dA = G * B^T
                const double* B = pb.data.data();
                double* dA = pa.grad.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = G + i * n;
                        const double* brow = B + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        dA[i * k + p] += acc;
                    }
            }
            if (pb.requires_grad) {
                // dB = A^T * G
                const double* A = pa.data.data();
                double* dB = pb.grad.data();
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        double av = A[i * k + p];
                        const double* grow = G + i * n;
                        double* drow = dB + p * n;
                        for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
                    }
            }
        };
    return Tensor(out);
}

Tensor transpose(const Tensor& a) {
    const auto& na = need(a, "transpose");
    if (na->shape.size() != 2)
        fail("transpose: expects a rank-2 tensor, got " + shape_str(na->shape));
    const std::size_t m = na->shape[0], n = na->shape[1];
    auto out = make_op_node({n, m}, {na}, "transpose");
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->data[j * m + i] = na->data[i * n + j];
    if (out->requires_grad)
        out->backward_fn = [m, n](Node& o) {
            Node& pa = *o.parents[0];
            if (!pa.requires_grad) return;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pa.grad[i * n + j] += o.grad[j * m + i];
        };
    return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    const auto& na = need(a, "reshape");
    if (shape_numel(new_shape) != na->data.size())
        fail("reshape: cannot view " + shape_str(na->shape) + " as " + shape_str(new_shape));
    auto out = make_op_node(std::move(new_shape), {na}, "reshape");
    out->data = na->data;
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& pa = *o.parents[0];
            if (!pa.requires_grad) return;
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
        };
    return Tensor(out);
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
    const auto& nx = need(x, "add_rowvec");
    const auto& nr = need(row, "add_rowvec");
    if (nx->shape.size() != 2 || nr->shape.size() != 1 || nx->shape[1] != nr->shape[0])
        fail("add_rowvec: expects [n,m] plus [m], got " + shape_str(nx->shape) + " and " +
             shape_str(nr->shape));
    const std::size_t n = nx->shape[0], m = nx->shape[1];
    auto out = make_op_node(nx->shape, {nx, nr}, "add_rowvec");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out->data[i * m + j] = nx->data[i * m + j] + nr->data[j];
    if (out->requires_grad)
        out->backward_fn = [n, m](Node& o) {
            Node& px = *o.parents[0];
            Node& pr = *o.parents[1];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    double g = o.grad[i * m + j];
                    if (px.requires_grad) px.grad[i * m + j] += g;
                    if (pr.requires_grad) pr.grad[j] += g;
                }
        };
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride) {
    const auto& ni = need(input, "conv2d");
    const auto& nk = need(kernels, "conv2d");
    if (ni->shape.size() != 3)
        fail("conv2d: input must be [C,H,W], got " + shape_str(ni->shape));
    if (nk->shape.size() != 4)
        fail("conv2d: kernels must be [C_out,C_in,kh,kw], got " + shape_str(nk->shape));
    if (nk->shape[1] != ni->shape[0])
        fail("conv2d: kernel input channels " + std::to_string(nk->shape[1]) +
             " do not match input channels " + std::to_string(ni->shape[0]));
    if (nk->shape[2] % 2 == 0 || nk->shape[3] % 2 == 0)
        fail("conv2d: kernel window must be odd, got " + std::to_string(nk->shape[2]) + "x" +
             std::to_string(nk->shape[3]));
    if (stride == 0) fail("conv2d: stride must be positive");

    const std::size_t cin = ni->shape[0], h = ni->shape[1], w = ni->shape[2];
    const std::size_t cout = nk->shape[0], kh = nk->shape[2], kw = nk->shape[3];
    const std::size_t ho = (h - 1) / stride + 1;
    const std::size_t wo = (w - 1) / stride + 1;
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);

    auto out = make_op_node({cout, ho, wo}, {ni, nk}, "conv2d");
    const double* in = ni->data.data();
    const double* ker = nk->data.data();
    double* o = out->data.data();

    // Edge padding replicates the border pixel: sample coordinates are
    // clamped into [0, h-1] x [0, w-1] before reading.
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* iplane = in + ci * h * w;
                    const double* kplane = ker + (co * cin + ci) * kh * kw;
                    for (std::size_t u = 0; u < kh; ++u) {
                        std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(oy * stride) +
                                            static_cast<std::ptrdiff_t>(u) - ph;
                        cy = std::clamp<std::ptrdiff_t>(cy, 0, static_cast<std::ptrdiff_t>(h) - 1);
                        const double* irow = iplane + static_cast<std::size_t>(cy) * w;
                        const double* krow = kplane + u * kw;
                        for (std::size_t v = 0; v < kw; ++v) {
                            std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(ox * stride) +
                                                static_cast<std::ptrdiff_t>(v) - pw;
                            cx = std::clamp<std::ptrdiff_t>(cx, 0,
                                                            static_cast<std::ptrdiff_t>(w) - 1);
                            acc += irow[static_cast<std::size_t>(cx)] * krow[v];
                        }
                    }
                }
                o[(co * ho + oy) * wo + ox] = acc;
            }

    if (out->requires_grad)
        out->backward_fn = [cin, h, w, cout, kh, kw, ho, wo, ph, pw, stride](Node& on) {
            Node& pi = *on.parents[0];
            Node& pk = *on.parents[1];
            const double* g = on.grad.data();
            const double* in = pi.data.data();
            const double* ker = pk.data.data();
            double* din = pi.requires_grad ? pi.grad.data() : nullptr;
            double* dker = pk.requires_grad ? pk.grad.data() : nullptr;
            for (std::size_t co = 0; co < cout; ++co)
                for (std::size_t oy = 0; oy < ho; ++oy)
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        double go = g[(co * ho + oy) * wo + ox];
                        if (go == 0.0) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const std::size_t ibase = ci * h * w;
                            const std::size_t kbase = (co * cin + ci) * kh * kw;
                            for (std::size_t u = 0; u < kh; ++u) {
                                std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(oy * stride) +
                                                    static_cast<std::ptrdiff_t>(u) - ph;
                                cy = std::clamp<std::ptrdiff_t>(
                                    cy, 0, static_cast<std::ptrdiff_t>(h) - 1);
                                const std::size_t rbase = ibase + static_cast<std::size_t>(cy) * w;
                                for (std::size_t v = 0; v < kw; ++v) {
                                    std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(ox * stride) +
                                                        static_cast<std::ptrdiff_t>(v) - pw;
                                    cx = std::clamp<std::ptrdiff_t>(
                                        cx, 0, static_cast<std::ptrdiff_t>(w) - 1);
                                    const std::size_t ii = rbase + static_cast<std::size_t>(cx);
                                    const std::size_t ki = kbase + u * kw + v;
                                    if (din) din[ii] += go * ker[ki];
                                    if (dker) dker[ki] += go * in[ii];
                                }
                            }
                        }
                    }
        };
    return Tensor(out);
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    const auto& nx = need(x, "add_channel_bias");
    const auto& nb = need(bias, "add_channel_bias");
    if (nx->shape.size() != 3 || nb->shape.size() != 1 || nb->shape[0] != nx->shape[0])
        fail("add_channel_bias: expects [C,H,W] plus [C], got " + shape_str(nx->shape) +
             " and " + shape_str(nb->shape));
    const std::size_t c = nx->shape[0], hw = nx->shape[1] * nx->shape[2];
    auto out = make_op_node(nx->shape, {nx, nb}, "add_channel_bias");
    for (std::size_t ci = 0; ci < c; ++ci) {
        double b = nb->data[ci];
        for (std::size_t i = 0; i < hw; ++i) out->data[ci * hw + i] = nx->data[ci * hw + i] + b;
    }
    if (out->requires_grad)
        out->backward_fn = [c, hw](Node& o) {
            Node& px = *o.parents[0];
            Node& pb = *o.parents[1];
            for (std::size_t ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) {
                    double g = o.grad[ci * hw + i];
                    if (px.requires_grad) px.grad[ci * hw + i] += g;
                    acc += g;
                }
                if (pb.requires_grad) pb.grad[ci] += acc;
            }
        };
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// activations / normalizers
// ---------------------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
    const auto& nx = need(x, "sigmoid");
    auto out = make_op_node(nx->shape, {nx}, "sigmoid");
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        double v = nx->data[i];
        // Evaluate through exp(-|v|) so neither branch overflows.
        double e = std::exp(-std::abs(v));
        out->data[i] = v >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    }
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& px = *o.parents[0];
            if (!px.requires_grad) return;
            double fault = debug::corrupt_sigmoid_backward ? 1.5 : 1.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                double y = o.data[i];
                px.grad[i] += o.grad[i] * y * (1.0 - y) * fault;
            }
        };
    return Tensor(out);
}

Tensor log_clamped(const Tensor& x, double floor) {
    const auto& nx = need(x, "log_clamped");
    if (floor <= 0.0) fail("log_clamped: floor must be positive");
    auto out = make_op_node(nx->shape, {nx}, "log_clamped");
    for (std::size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = std::log(std::max(nx->data[i], floor));
    if (out->requires_grad)
        out->backward_fn = [floor](Node& o) {
            Node& px = *o.parents[0];
            if (!px.requires_grad) return;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                double v = px.data[i];
                // Below the clamp the output is constant, so the slope is 0.
                if (v > floor) px.grad[i] += o.grad[i] / v;
            }
        };
    return Tensor(out);
}

Tensor softmax_lastdim(const Tensor& x) {
    const auto& nx = need(x, "softmax_lastdim");
    if (nx->shape.empty() || nx->shape.back() == 0)
        fail("softmax_lastdim: needs a non-empty last dimension, got " + shape_str(nx->shape));
    const std::size_t n = nx->shape.back();
    const std::size_t rows = nx->data.size() / n;
    auto out = make_op_node(nx->shape, {nx}, "softmax_lastdim");
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = nx->data.data() + r * n;
        double* dst = out->data.data() + r * n;
        double hi = src[0];
        for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, src[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            dst[j] = std::exp(src[j] - hi);
            denom += dst[j];
        }
        for (std::size_t j = 0; j < n; ++j) dst[j] /= denom;
    }
    if (out->requires_grad)
        out->backward_fn = [rows, n](Node& o) {
            Node& px = *o.parents[0];
            if (!px.requires_grad) return;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = o.data.data() + r * n;
                const double* g = o.grad.data() + r * n;
                double inner = 0.0;
                for (std::size_t j = 0; j < n; ++j) inner += g[j] * y[j];
                double* dx = px.grad.data() + r * n;
                for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - inner);
            }
        };
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// spatial reductions / resampling
// ---------------------------------------------------------------------------

Tensor global_avg_pool(const Tensor& x) {
    const auto& nx = need(x, "global_avg_pool");
    if (nx->shape.size() != 3)
        fail("global_avg_pool: expects [C,H,W], got " + shape_str(nx->shape));
    const std::size_t c = nx->shape[0], hw = nx->shape[1] * nx->shape[2];
    if (hw == 0) fail("global_avg_pool: empty spatial extent");
    auto out = make_op_node({c}, {nx}, "global_avg_pool");
    for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += nx->data[ci * hw + i];
        out->data[ci] = acc / static_cast<double>(hw);
    }
    if (out->requires_grad)
        out->backward_fn = [c, hw](Node& o) {
            Node& px = *o.parents[0];
            if (!px.requires_grad) return;
            double inv = 1.0 / static_cast<double>(hw);
            for (std::size_t ci = 0; ci < c; ++ci) {
                double g = o.grad[ci] * inv;
                for (std::size_t i = 0; i < hw; ++i) px.grad[ci * hw + i] += g;
            }
        };
    return Tensor(out);
}

Tensor resample(const Tensor& x, Resample mode) {
    const auto& nx = need(x, "resample");
    if (nx->shape.size() != 3)
        fail("resample: expects [C,H,W], got " + shape_str(nx->shape));
    const std::size_t c = nx->shape[0], h = nx->shape[1], w = nx->shape[2];

    if (mode == Resample::kUpsampleNearest2x) {
        const std::size_t ho = h * 2, wo = w * 2;
        auto out = make_op_node({c, ho, wo}, {nx}, "upsample_nearest2x");
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xw = 0; xw < w; ++xw) {
                    double v = nx->data[(ci * h + y) * w + xw];
                    std::size_t base = (ci * ho + 2 * y) * wo + 2 * xw;
                    out->data[base] = v;
                    out->data[base + 1] = v;
                    out->data[base + wo] = v;
                    out->data[base + wo + 1] = v;
                }
        if (out->requires_grad)
            out->backward_fn = [c, h, w, ho, wo](Node& o) {
                Node& px = *o.parents[0];
                if (!px.requires_grad) return;
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t xw = 0; xw < w; ++xw) {
                            std::size_t base = (ci * ho + 2 * y) * wo + 2 * xw;
                            px.grad[(ci * h + y) * w + xw] += o.grad[base] + o.grad[base + 1] +
                                                              o.grad[base + wo] +
                                                              o.grad[base + wo + 1];
                        }
            };
        return Tensor(out);
    }

    if (h % 2 != 0 || w % 2 != 0)
        fail("resample: pooling needs even spatial dims, got " + shape_str(nx->shape));
    const std::size_t ho = h / 2, wo = w / 2;

    if (mode == Resample::kAvgPool2x) {
        auto out = make_op_node({c, ho, wo}, {nx}, "avgpool2x");
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xw = 0; xw < wo; ++xw) {
                    std::size_t base = (ci * h + 2 * y) * w + 2 * xw;
                    out->data[(ci * ho + y) * wo + xw] =
                        0.25 * (nx->data[base] + nx->data[base + 1] + nx->data[base + w] +
                                nx->data[base + w + 1]);
                }
        if (out->requires_grad)
            out->backward_fn = [c, h, w, ho, wo](Node& o) {
                Node& px = *o.parents[0];
                if (!px.requires_grad) return;
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t y = 0; y < ho; ++y)
                        for (std::size_t xw = 0; xw < wo; ++xw) {
                            double g = 0.25 * o.grad[(ci * ho + y) * wo + xw];
                            std::size_t base = (ci * h + 2 * y) * w + 2 * xw;
                            px.grad[base] += g;
                            px.grad[base + 1] += g;
                            px.grad[base + w] += g;
                            px.grad[base + w + 1] += g;
                        }
            };
        return Tensor(out);
    }

    // max pooling; ties resolve to the first element in scan order so the
    // backward route is deterministic
    auto out = make_op_node({c, ho, wo}, {nx}, "maxpool2x");
    std::vector<std::size_t> argmax(out->data.size());
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t xw = 0; xw < wo; ++xw) {
                std::size_t base = (ci * h + 2 * y) * w + 2 * xw;
                std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
                std::size_t best = cand[0];
                for (int t = 1; t < 4; ++t)
                    if (nx->data[cand[t]] > nx->data[best]) best = cand[t];
                std::size_t oi = (ci * ho + y) * wo + xw;
                out->data[oi] = nx->data[best];
                argmax[oi] = best;
            }
    if (out->requires_grad)
        out->backward_fn = [argmax = std::move(argmax)](Node& o) {
            Node& px = *o.parents[0];
            if (!px.requires_grad) return;
            for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[argmax[i]] += o.grad[i];
        };
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// full reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    const auto& nx = need(x, "sum_all");
    auto out = make_op_node({1}, {nx}, "sum_all");
    double acc = 0.0;
    for (double v : nx->data) acc += v;
    out->data[0] = acc;
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& px = *o.parents[0];
            if (!px.requires_grad) return;
            double g = o.grad[0];
            for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += g;
        };
    return Tensor(out);
}

Tensor mean_all(const Tensor& x) {
    const auto& nx = need(x, "mean_all");
    if (nx->data.empty()) fail("mean_all: tensor is empty");
    auto out = make_op_node({1}, {nx}, "mean_all");
    double acc = 0.0;
    for (double v : nx->data) acc += v;
    out->data[0] = acc / static_cast<double>(nx->data.size());
    if (out->requires_grad)
        out->backward_fn = [](Node& o) {
            Node& px = *o.parents[0];
            if (!px.requires_grad) return;
            double g = o.grad[0] / static_cast<double>(px.grad.size());
            for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += g;
        };
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// reverse sweep
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    const auto& root = need(loss, "backward");
    if (root->data.size() != 1)
        fail("backward: expected a scalar loss, got shape " + shape_str(root->shape));
    if (!root->requires_grad)
        fail("backward: loss does not require gradients; nothing to propagate");

    // Iterative post-order DFS over grad-tracking ancestors. Inputs land in
    // `order` before the nodes that consume them, so walking it back to
    // front propagates every node's gradient exactly once.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next].get();
            ++next;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
    if (step <= 0.0) fail("grad_check: step must be positive");
    const auto& nx = need(x, "grad_check");

    // Analytic pass: run f on a fresh grad-tracking copy of x.
    std::vector<double> analytic(nx->data.size(), 0.0);
    {
        bool prev = GradMode::enabled();
        GradMode::set_enabled(true);
        Tensor leaf = Tensor::from_vector(nx->shape, nx->data, /*requires_grad=*/true);
        Tensor y = f(leaf);
        if (y.size() != 1)
            fail("grad_check: f must return a scalar, got shape " + shape_str(y.shape()));
        // If f never touches its argument the output carries no graph and
        // the true gradient is identically zero.
        if (y.requires_grad()) {
            backward(y);
            analytic = leaf.grad();
        }
        GradMode::set_enabled(prev);
    }

    // Numeric pass: symmetric differences with no graph recording.
    NoGradGuard ng;
    double max_err = 0.0;
    std::vector<double> probe = nx->data;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        double keep = probe[i];
        probe[i] = keep + step;
        double fp = f(Tensor::from_vector(nx->shape, probe)).item();
        probe[i] = keep - step;
        double fm = f(Tensor::from_vector(nx->shape, probe)).item();
        probe[i] = keep;
        double numeric = (fp - fm) / (2.0 * step);
        double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
    }
    return max_err;
}

}  // namespace befseg
