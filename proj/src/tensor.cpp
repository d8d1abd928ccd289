#include "dbgi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dbgi {

std::int64_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                           std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void TensorNode::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

namespace {

thread_local bool g_grad_enabled = true;

void check(bool ok, const std::string& msg) {
    if (!ok) throw ContractViolation(msg);
}

NodePtr new_node(Shape shape, std::vector<double> data) {
    auto node = std::make_shared<TensorNode>();
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
        throw ContractViolation("tensor data length does not match shape " + shape_str(shape));
    node->shape = std::move(shape);
    node->data = std::move(data);
    return node;
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_enabled) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

// Attach parents + backprop closure to a freshly computed result node.
Tensor make_op(NodePtr node, std::initializer_list<const Tensor*> inputs,
               std::function<void(const TensorNode&)> backprop) {
    if (tracking(inputs)) {
        node->requires_grad = true;
        for (const Tensor* t : inputs)
            if (t->defined()) node->parents.push_back(t->node());
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    auto n = numel(shape);
    check(n >= 0, "negative extent in shape");
    return Tensor(new_node(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_node({}, {value})); }

Tensor Tensor::from_data(Shape shape, std::vector<double> values) {
    return Tensor(new_node(std::move(shape), std::move(values)));
}

const Shape& Tensor::shape() const {
    check(defined(), "use of undefined tensor");
    return node_->shape;
}

std::int64_t Tensor::dim(std::size_t axis) const {
    check(axis < shape().size(), "axis out of range");
    return node_->shape[axis];
}

std::int64_t Tensor::size() const { return static_cast<std::int64_t>(data().size()); }

std::vector<double>& Tensor::data() {
    check(defined(), "use of undefined tensor");
    return node_->data;
}

const std::vector<double>& Tensor::data() const {
    check(defined(), "use of undefined tensor");
    return node_->data;
}

double Tensor::at(std::int64_t flat) const {
    const auto& d = data();
    check(flat >= 0 && flat < static_cast<std::int64_t>(d.size()), "flat index out of range");
    return d[static_cast<std::size_t>(flat)];
}

double Tensor::value() const {
    check(size() == 1, "value() requires a single-element tensor, got " + shape_str(shape()));
    return data()[0];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    check(defined(), "use of undefined tensor");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const {
    return defined() && node_->grad.size() == node_->data.size();
}

const std::vector<double>& Tensor::grad() const {
    check(has_grad(), "gradient not populated");
    return node_->grad;
}

std::vector<double>& Tensor::grad_mut() {
    check(defined(), "use of undefined tensor");
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (defined()) node_->grad.clear();
}

Tensor Tensor::clone() const {
    return Tensor(new_node(shape(), data()));
}

bool Tensor::all_finite() const {
    for (double v : data())
        if (!std::isfinite(v)) return false;
    return true;
}

// ---- broadcasting machinery ----

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        check(da == db || da == 1 || db == 1,
              "shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides of `shape` as seen from `out` (0 on broadcast axes).
std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<std::int64_t> strides(out.size(), 0);
    std::int64_t s = 1;
    const std::size_t off = out.size() - shape.size();
    for (std::size_t i = shape.size(); i-- > 0;) {
        strides[off + i] = (shape[i] == 1 && out[off + i] != 1) ? 0 : s;
        s *= shape[i];
    }
    return strides;
}

// Walks output indices in row-major order, yielding flat offsets into both operands.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, Fn&& fn) {
    const std::int64_t total = numel(out);
    const std::size_t r = out.size();
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t o = 0; o < total; ++o) {
        fn(o, ia, ib);
        for (std::size_t ax = r; ax-- > 0;) {
            ++idx[ax];
            ia += sa[ax];
            ib += sb[ax];
            if (idx[ax] < out[ax]) break;
            ia -= sa[ax] * out[ax];
            ib -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

enum class BinOp { add, sub, mul };

Tensor broadcast_binary(const Tensor& a, const Tensor& b, BinOp op) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
    const auto& da = a.data();
    const auto& db = b.data();
    for_each_broadcast(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        const double x = da[static_cast<std::size_t>(ia)];
        const double y = db[static_cast<std::size_t>(ib)];
        out[static_cast<std::size_t>(o)] = op == BinOp::add ? x + y
                                         : op == BinOp::sub ? x - y
                                                            : x * y;
    });
    auto node = new_node(out_shape, std::move(out));
    return make_op(std::move(node), {&a, &b},
                   [an = a.node(), bn = b.node(), sa, sb, op](const TensorNode& self) {
                       if (an->requires_grad) an->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       for_each_broadcast(self.shape, sa, sb,
                                          [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                           const double g = self.grad[static_cast<std::size_t>(o)];
                           switch (op) {
                               case BinOp::add:
                                   if (an->requires_grad) an->grad[static_cast<std::size_t>(ia)] += g;
                                   if (bn->requires_grad) bn->grad[static_cast<std::size_t>(ib)] += g;
                                   break;
                               case BinOp::sub:
                                   if (an->requires_grad) an->grad[static_cast<std::size_t>(ia)] += g;
                                   if (bn->requires_grad) bn->grad[static_cast<std::size_t>(ib)] -= g;
                                   break;
                               case BinOp::mul:
                                   if (an->requires_grad)
                                       an->grad[static_cast<std::size_t>(ia)] +=
                                           g * bn->data[static_cast<std::size_t>(ib)];
                                   if (bn->requires_grad)
                                       bn->grad[static_cast<std::size_t>(ib)] +=
                                           g * an->data[static_cast<std::size_t>(ia)];
                                   break;
                           }
                       });
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return broadcast_binary(a, b, BinOp::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return broadcast_binary(a, b, BinOp::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return broadcast_binary(a, b, BinOp::mul); }

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data());
    for (double& v : out) v *= factor;
    auto node = new_node(a.shape(), std::move(out));
    return make_op(std::move(node), {&a}, [an = a.node(), factor](const TensorNode& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += factor * self.grad[i];
    });
}

Tensor add_const(const Tensor& a, double constant) {
    std::vector<double> out(a.data());
    for (double& v : out) v += constant;
    auto node = new_node(a.shape(), std::move(out));
    return make_op(std::move(node), {&a}, [an = a.node()](const TensorNode& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2, "matmul lhs must be rank 2, got " + shape_str(a.shape()));
    check(b.rank() == 1 || b.rank() == 2, "matmul rhs must be rank 1 or 2");
    const std::int64_t r = a.dim(0), k = a.dim(1);
    const std::int64_t k2 = b.dim(0);
    check(k ==
          k2, "matmul inner dimensions differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const bool vec = b.rank() == 1;
    const std::int64_t c = vec ? 1 : b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(r * c), 0.0);
    const auto& da = a.data();
    const auto& db = b.data();
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::int64_t t = 0; t < k; ++t)
                acc += da[static_cast<std::size_t>(i * k + t)] * db[static_cast<std::size_t>(t * c + j)];
            out[static_cast<std::size_t>(i * c + j)] = acc;
        }
    Shape out_shape = vec ? Shape{r} : Shape{r, c};
    auto node = new_node(std::move(out_shape), std::move(out));
    return make_op(std::move(node), {&a, &b}, [an = a.node(), bn = b.node(), r, k, c](const TensorNode& self) {
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) {
                const double g = self.grad[static_cast<std::size_t>(i * c + j)];
                if (g == 0.0) continue;
                for (std::int64_t t = 0; t < k; ++t) {
                    if (an->requires_grad)
                        an->grad[static_cast<std::size_t>(i * k + t)] +=
                            g * bn->data[static_cast<std::size_t>(t * c + j)];
                    if (bn->requires_grad)
                        bn->grad[static_cast<std::size_t>(t * c + j)] +=
                            g * an->data[static_cast<std::size_t>(i * k + t)];
                }
            }
    });
}

Tensor transpose(const Tensor& a) {
    check(a.rank() == 2, "transpose requires rank 2, got " + shape_str(a.shape()));
    const std::int64_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(static_cast<std::size_t>(r * c));
    const auto& da = a.data();
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j)
            out[static_cast<std::size_t>(j * r + i)] = da[static_cast<std::size_t>(i * c + j)];
    auto node = new_node({c, r}, std::move(out));
    return make_op(std::move(node), {&a}, [an = a.node(), r, c](const TensorNode& self) {
        an->ensure_grad();
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j)
                an->grad[static_cast<std::size_t>(i * c + j)] +=
                    self.grad[static_cast<std::size_t>(j * r + i)];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    check(numel(shape) == a.size(),
          "reshape to " + shape_str(shape) + " changes element count of " + shape_str(a.shape()));
    auto node = new_node(std::move(shape), a.data());
    return make_op(std::move(node), {&a}, [an = a.node()](const TensorNode& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

// ---- elementwise nonlinearities ----

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd_from_out_and_in) {
    std::vector<double> out(a.data().size());
    const auto& da = a.data();
    for (std::size_t i = 0; i < da.size(); ++i) out[i] = fwd(da[i]);
    auto node = new_node(a.shape(), std::move(out));
    return make_op(std::move(node), {&a},
                   [an = a.node(), bwd = bwd_from_out_and_in](const TensorNode& self) {
                       an->ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                           an->grad[i] += self.grad[i] * bwd(self.data[i], an->data[i]);
                   });
}

}  // namespace

Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a,
                    [](double x) {
                        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                        const double e = std::exp(x);
                        return e / (1.0 + e);
                    },
                    [](double y, double) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary_op(a, [](double x) { return std::tanh(x); },
                    [](double y, double) { return 1.0 - y * y; });
}

Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double, double x) { return 1.0 / x; });
}

Tensor softmax(const Tensor& a) {
    check(a.rank() >= 1, "softmax requires rank >= 1");
    const std::int64_t cols = a.shape().back();
    const std::int64_t rows = a.size() / cols;
    std::vector<double> out(a.data().size());
    const auto& da = a.data();
    for (std::int64_t rr = 0; rr < rows; ++rr) {
        const std::size_t base = static_cast<std::size_t>(rr * cols);
        double mx = da[base];
        for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, da[base + static_cast<std::size_t>(j)]);
        double denom = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            const double e = std::exp(da[base + static_cast<std::size_t>(j)] - mx);
            out[base + static_cast<std::size_t>(j)] = e;
            denom += e;
        }
        for (std::int64_t j = 0; j < cols; ++j) out[base + static_cast<std::size_t>(j)] /= denom;
    }
    auto node = new_node(a.shape(), std::move(out));
    return make_op(std::move(node), {&a}, [an = a.node(), rows, cols](const TensorNode& self) {
        an->ensure_grad();
        for (std::int64_t rr = 0; rr < rows; ++rr) {
            const std::size_t base = static_cast<std::size_t>(rr * cols);
            double dot = 0.0;
            for (std::int64_t j = 0; j < cols; ++j)
                dot += self.grad[base + static_cast<std::size_t>(j)] * self.data[base + static_cast<std::size_t>(j)];
            for (std::int64_t j = 0; j < cols; ++j) {
                const std::size_t i = base + static_cast<std::size_t>(j);
                an->grad[i] += self.data[i] * (self.grad[i] - dot);
            }
        }
    });
}

// ---- reductions / selection ----

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto node = new_node({}, {acc});
    return make_op(std::move(node), {&a}, [an = a.node()](const TensorNode& self) {
        an->ensure_grad();
        const double g = self.grad[0];
        for (double& gv : an->grad) gv += g;
    });
}

Tensor pick(const Tensor& a, std::int64_t flat) {
    check(flat >= 0 && flat < a.size(), "pick index out of range");
    auto node = new_node({}, {a.data()[static_cast<std::size_t>(flat)]});
    return make_op(std::move(node), {&a}, [an = a.node(), flat](const TensorNode& self) {
        an->ensure_grad();
        an->grad[static_cast<std::size_t>(flat)] += self.grad[0];
    });
}

Tensor row(const Tensor& a, std::int64_t r) {
    check(a.rank() == 2, "row() requires rank 2, got " + shape_str(a.shape()));
    check(r >= 0 && r < a.dim(0), "row index out of range");
    const std::int64_t c = a.dim(1);
    const auto& da = a.data();
    std::vector<double> out(da.begin() + r * c, da.begin() + (r + 1) * c);
    auto node = new_node({c}, std::move(out));
    return make_op(std::move(node), {&a}, [an = a.node(), r, c](const TensorNode& self) {
        an->ensure_grad();
        for (std::int64_t j = 0; j < c; ++j)
            an->grad[static_cast<std::size_t>(r * c + j)] += self.grad[static_cast<std::size_t>(j)];
    });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_channels of zero tensors");
    const Shape& first = parts.front().shape();
    check(first.size() == 4, "concat_channels requires NCHW tensors");
    std::int64_t channels = 0;
    for (const Tensor& t : parts) {
        check(t.rank() == 4 && t.dim(0) == first[0] && t.dim(2) == first[2] && t.dim(3) == first[3],
              "concat_channels operands disagree outside the channel axis");
        channels += t.dim(1);
    }
    const std::int64_t n = first[0], h = first[2], w = first[3], hw = h * w;
    std::vector<double> out(static_cast<std::size_t>(n * channels * hw));
    std::int64_t coff = 0;
    for (const Tensor& t : parts) {
        const std::int64_t tc = t.dim(1);
        const auto& d = t.data();
        for (std::int64_t b = 0; b < n; ++b)
            std::copy(d.begin() + b * tc * hw, d.begin() + (b + 1) * tc * hw,
                      out.begin() + (b * channels + coff) * hw);
        coff += tc;
    }
    auto node = new_node({n, channels, h, w}, std::move(out));

    std::vector<NodePtr> pnodes;
    std::vector<std::int64_t> pchans;
    for (const Tensor& t : parts) {
        pnodes.push_back(t.node());
        pchans.push_back(t.dim(1));
    }
    std::vector<const Tensor*> refs;
    for (const Tensor& t : parts) refs.push_back(&t);
    bool track = false;
    for (const Tensor& t : parts) track = track || t.requires_grad();
    if (g_grad_enabled && track) {
        node->requires_grad = true;
        node->parents = pnodes;
        node->backprop = [pnodes, pchans, n, channels, hw](const TensorNode& self) {
            std::int64_t coff2 = 0;
            for (std::size_t p = 0; p < pnodes.size(); ++p) {
                const std::int64_t tc = pchans[p];
                if (pnodes[p]->requires_grad) {
                    pnodes[p]->ensure_grad();
                    for (std::int64_t b = 0; b < n; ++b)
                        for (std::int64_t i = 0; i < tc * hw; ++i)
                            pnodes[p]->grad[static_cast<std::size_t>(b * tc * hw + i)] +=
                                self.grad[static_cast<std::size_t>((b * channels + coff2) * hw + i)];
                }
                coff2 += tc;
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor slice_channels(const Tensor& a, std::int64_t begin, std::int64_t end) {
    check(a.rank() == 4, "slice_channels requires NCHW tensors");
    const std::int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3), hw = h * w;
    check(0 <= begin && begin < end && end <= c, "channel slice out of range");
    const std::int64_t oc = end - begin;
    std::vector<double> out(static_cast<std::size_t>(n * oc * hw));
    const auto& d = a.data();
    for (std::int64_t b = 0; b < n; ++b)
        std::copy(d.begin() + (b * c + begin) * hw, d.begin() + (b * c + end) * hw,
                  out.begin() + b * oc * hw);
    auto node = new_node({n, oc, h, w}, std::move(out));
    return make_op(std::move(node), {&a}, [an = a.node(), n, c, hw, begin, oc](const TensorNode& self) {
        an->ensure_grad();
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t i = 0; i < oc * hw; ++i)
                an->grad[static_cast<std::size_t>((b * c + begin) * hw + i)] +=
                    self.grad[static_cast<std::size_t>(b * oc * hw + i)];
    });
}

// ---- convolution / pooling ----

namespace {

std::int64_t conv_extent(std::int64_t in, int pad, int dilation, std::int64_t k, int stride) {
    return (in + 2 * pad - static_cast<std::int64_t>(dilation) * (k - 1) - 1) / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding, int dilation) {
    check(input.rank() == 4, "conv2d input must be NCHW, got " + shape_str(input.shape()));
    check(kernel.rank() == 4, "conv2d kernel must be OCKhKw, got " + shape_str(kernel.shape()));
    check(stride >= 1 && dilation >= 1 && padding >= 0, "conv2d stride/dilation/padding out of range");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t o = kernel.dim(0), kc = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    check(kc == c, "conv2d kernel expects " + std::to_string(kc) + " input channels, image has " +
                       std::to_string(c));
    if (bias.defined())
        check(bias.rank() == 1 && bias.dim(0) == o, "conv2d bias must have one entry per output channel");
    const std::int64_t oh = conv_extent(h, padding, dilation, kh, stride);
    const std::int64_t ow = conv_extent(w, padding, dilation, kw, stride);
    check(oh >= 1 && ow >= 1, "conv2d kernel does not fit the padded input");

    std::vector<double> out(static_cast<std::size_t>(n * o * oh * ow), 0.0);
    const auto& din = input.data();
    const auto& dk = kernel.data();
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t f = 0; f < o; ++f) {
            const double bv = bias.defined() ? bias.data()[static_cast<std::size_t>(f)] : 0.0;
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = bv;
                    for (std::int64_t ch = 0; ch < c; ++ch)
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = y * stride - padding + ky * dilation;
                            if (iy < 0 || iy >= h) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = x * stride - padding + kx * dilation;
                                if (ix < 0 || ix >= w) continue;
                                acc += din[static_cast<std::size_t>(((b * c + ch) * h + iy) * w + ix)] *
                                       dk[static_cast<std::size_t>(((f * c + ch) * kh + ky) * kw + kx)];
                            }
                        }
                    out[static_cast<std::size_t>(((b * o + f) * oh + y) * ow + x)] = acc;
                }
        }
    auto node = new_node({n, o, oh, ow}, std::move(out));
    return make_op(
        std::move(node), {&input, &kernel, &bias},
        [in = input.node(), kn = kernel.node(), bn = bias.defined() ? bias.node() : nullptr, n, c, h, w,
         o, kh, kw, oh, ow, stride, padding, dilation](const TensorNode& self) {
            const bool gi = in->requires_grad, gk = kn->requires_grad;
            const bool gb = bn && bn->requires_grad;
            if (gi) in->ensure_grad();
            if (gk) kn->ensure_grad();
            if (gb) bn->ensure_grad();
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t f = 0; f < o; ++f)
                    for (std::int64_t y = 0; y < oh; ++y)
                        for (std::int64_t x = 0; x < ow; ++x) {
                            const double g =
                                self.grad[static_cast<std::size_t>(((b * o + f) * oh + y) * ow + x)];
                            if (g == 0.0) continue;
                            if (gb) bn->grad[static_cast<std::size_t>(f)] += g;
                            for (std::int64_t ch = 0; ch < c; ++ch)
                                for (std::int64_t ky = 0; ky < kh; ++ky) {
                                    const std::int64_t iy = y * stride - padding + ky * dilation;
                                    if (iy < 0 || iy >= h) continue;
                                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                                        const std::int64_t ix = x * stride - padding + kx * dilation;
                                        if (ix < 0 || ix >= w) continue;
                                        const std::size_t ii =
                                            static_cast<std::size_t>(((b * c + ch) * h + iy) * w + ix);
                                        const std::size_t ki =
                                            static_cast<std::size_t>(((f * c + ch) * kh + ky) * kw + kx);
                                        if (gi) in->grad[ii] += g * kn->data[ki];
                                        if (gk) kn->grad[ki] += g * in->data[ii];
                                    }
                                }
                        }
        });
}

Tensor avg_pool2d(const Tensor& input, int window, int stride) {
    check(input.rank() == 4, "avg_pool2d input must be NCHW");
    check(window >= 1 && stride >= 1, "avg_pool2d window/stride out of range");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    check(window <= h && window <= w, "avg_pool2d window exceeds input extent " + shape_str(input.shape()));
    const std::int64_t oh = (h - window) / stride + 1;
    const std::int64_t ow = (w - window) / stride + 1;
    const double inv = 1.0 / (static_cast<double>(window) * window);
    std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow));
    const auto& d = input.data();
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (int ky = 0; ky < window; ++ky)
                        for (int kx = 0; kx < window; ++kx)
                            acc += d[static_cast<std::size_t>(
                                ((b * c + ch) * h + y * stride + ky) * w + x * stride + kx)];
                    out[static_cast<std::size_t>(((b * c + ch) * oh + y) * ow + x)] = acc * inv;
                }
    auto node = new_node({n, c, oh, ow}, std::move(out));
    return make_op(std::move(node), {&input},
                   [an = input.node(), n, c, h, w, oh, ow, window, stride, inv](const TensorNode& self) {
                       an->ensure_grad();
                       for (std::int64_t b = 0; b < n; ++b)
                           for (std::int64_t ch = 0; ch < c; ++ch)
                               for (std::int64_t y = 0; y < oh; ++y)
                                   for (std::int64_t x = 0; x < ow; ++x) {
                                       const double g =
                                           self.grad[static_cast<std::size_t>(((b * c + ch) * oh + y) * ow + x)] *
                                           inv;
                                       for (int ky = 0; ky < window; ++ky)
                                           for (int kx = 0; kx < window; ++kx)
                                               an->grad[static_cast<std::size_t>(
                                                   ((b * c + ch) * h + y * stride + ky) * w + x * stride + kx)] += g;
                                   }
                   });
}

Tensor max_pool2d(const Tensor& input, int window, int stride, int padding) {
    check(input.rank() == 4, "max_pool2d input must be NCHW");
    check(window >= 1 && stride >= 1 && padding >= 0, "max_pool2d window/stride/padding out of range");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t oh = (h + 2 * padding - window) / stride + 1;
    const std::int64_t ow = (w + 2 * padding - window) / stride + 1;
    check(oh >= 1 && ow >= 1, "max_pool2d window exceeds padded input");
    std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow));
    std::vector<std::int64_t> argmax(out.size());
    const auto& d = input.data();
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    double best = 0.0;
                    std::int64_t best_idx = -1;
                    for (int ky = 0; ky < window; ++ky) {
                        const std::int64_t iy = y * stride - padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < window; ++kx) {
                            const std::int64_t ix = x * stride - padding + kx;
                            if (ix < 0 || ix >= w) continue;
                            const std::size_t ii = static_cast<std::size_t>(((b * c + ch) * h + iy) * w + ix);
                            if (best_idx < 0 || d[ii] > best) {
                                best = d[ii];
                                best_idx = static_cast<std::int64_t>(ii);
                            }
                        }
                    }
                    check(best_idx >= 0, "max_pool2d window has no in-bounds elements");
                    const std::size_t oi = static_cast<std::size_t>(((b * c + ch) * oh + y) * ow + x);
                    out[oi] = best;
                    argmax[oi] = best_idx;
                }
    auto node = new_node({n, c, oh, ow}, std::move(out));
    return make_op(std::move(node), {&input},
                   [an = input.node(), argmax = std::move(argmax)](const TensorNode& self) {
                       an->ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                           an->grad[static_cast<std::size_t>(argmax[i])] += self.grad[i];
                   });
}

Tensor global_avg_pool(const Tensor& input) {
    check(input.rank() == 4, "global_avg_pool input must be NCHW");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    check(h >= 1 && w >= 1, "global_avg_pool on empty spatial extent");
    const double inv = 1.0 / static_cast<double>(h * w);
    std::vector<double> out(static_cast<std::size_t>(n * c));
    const auto& d = input.data();
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            const std::size_t base = static_cast<std::size_t>((b * c + ch) * h * w);
            for (std::int64_t i = 0; i < h * w; ++i) acc += d[base + static_cast<std::size_t>(i)];
            out[static_cast<std::size_t>(b * c + ch)] = acc * inv;
        }
    auto node = new_node({n, c, 1, 1}, std::move(out));
    return make_op(std::move(node), {&input}, [an = input.node(), h, w, inv](const TensorNode& self) {
        an->ensure_grad();
        for (std::size_t oc = 0; oc < self.grad.size(); ++oc) {
            const double g = self.grad[oc] * inv;
            const std::size_t base = oc * static_cast<std::size_t>(h * w);
            for (std::int64_t i = 0; i < h * w; ++i) an->grad[base + static_cast<std::size_t>(i)] += g;
        }
    });
}

// ---- batch normalization ----

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool training, double momentum, double epsilon) {
    check(epsilon > 0.0, "batch_norm epsilon must be positive");
    check(input.rank() == 2 || input.rank() == 4, "batch_norm input must be rank 2 or 4");
    const std::int64_t n = input.dim(0);
    const std::int64_t c = input.dim(1);
    const std::int64_t hw = input.rank() == 4 ? input.dim(2) * input.dim(3) : 1;
    const std::int64_t m = n * hw;  // samples per channel
    check(gamma.size() == c && beta.size() == c && running_mean.size() == c && running_var.size() == c,
          "batch_norm per-channel tensors must have " + std::to_string(c) + " entries");

    const auto& d = input.data();
    auto channel_index = [&](std::int64_t b, std::int64_t ch, std::int64_t i) {
        return static_cast<std::size_t>((b * c + ch) * hw + i);
    };

    std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
    std::vector<double> var(static_cast<std::size_t>(c), 0.0);
    if (training) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t i = 0; i < hw; ++i) acc += d[channel_index(b, ch, i)];
            mean[static_cast<std::size_t>(ch)] = acc / static_cast<double>(m);
        }
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            const double mu = mean[static_cast<std::size_t>(ch)];
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t i = 0; i < hw; ++i) {
                    const double dv = d[channel_index(b, ch, i)] - mu;
                    acc += dv * dv;
                }
            var[static_cast<std::size_t>(ch)] = acc / static_cast<double>(m);
        }
        // Running stats track the unbiased variance; with one value per channel
        // there is no variance estimate and the update is skipped.
        if (m > 1) {
            auto& rm = running_mean.data();
            auto& rv = running_var.data();
            const double corr = static_cast<double>(m) / static_cast<double>(m - 1);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                rm[static_cast<std::size_t>(ch)] =
                    (1.0 - momentum) * rm[static_cast<std::size_t>(ch)] +
                    momentum * mean[static_cast<std::size_t>(ch)];
                rv[static_cast<std::size_t>(ch)] =
                    (1.0 - momentum) * rv[static_cast<std::size_t>(ch)] +
                    momentum * var[static_cast<std::size_t>(ch)] * corr;
            }
        }
    } else {
        mean = running_mean.data();
        var = running_var.data();
    }

    std::vector<double> inv_std(static_cast<std::size_t>(c));
    for (std::int64_t ch = 0; ch < c; ++ch)
        inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + epsilon);

    std::vector<double> xhat(d.size());
    std::vector<double> out(d.size());
    const auto& dg = gamma.data();
    const auto& db = beta.data();
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < hw; ++i) {
                const std::size_t ii = channel_index(b, ch, i);
                xhat[ii] = (d[ii] - mean[static_cast<std::size_t>(ch)]) * inv_std[static_cast<std::size_t>(ch)];
                out[ii] = dg[static_cast<std::size_t>(ch)] * xhat[ii] + db[static_cast<std::size_t>(ch)];
            }

    auto node = new_node(input.shape(), std::move(out));
    return make_op(
        std::move(node), {&input, &gamma, &beta},
        [in = input.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
         inv_std = std::move(inv_std), n, c, hw, m, training](const TensorNode& self) {
            const bool gi = in->requires_grad, gg = gn->requires_grad, gb = bn->requires_grad;
            if (gi) in->ensure_grad();
            if (gg) gn->ensure_grad();
            if (gb) bn->ensure_grad();
            auto channel_index = [&](std::int64_t b, std::int64_t ch, std::int64_t i) {
                return static_cast<std::size_t>((b * c + ch) * hw + i);
            };
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::int64_t b = 0; b < n; ++b)
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const std::size_t ii = channel_index(b, ch, i);
                        sum_dy += self.grad[ii];
                        sum_dy_xhat += self.grad[ii] * xhat[ii];
                    }
                if (gg) gn->grad[static_cast<std::size_t>(ch)] += sum_dy_xhat;
                if (gb) bn->grad[static_cast<std::size_t>(ch)] += sum_dy;
                if (!gi) continue;
                const double g = gn->data[static_cast<std::size_t>(ch)];
                const double istd = inv_std[static_cast<std::size_t>(ch)];
                if (training) {
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (std::int64_t b = 0; b < n; ++b)
                        for (std::int64_t i = 0; i < hw; ++i) {
                            const std::size_t ii = channel_index(b, ch, i);
                            in->grad[ii] += g * istd *
                                            (self.grad[ii] - inv_m * sum_dy - xhat[ii] * inv_m * sum_dy_xhat);
                        }
                } else {
                    for (std::int64_t b = 0; b < n; ++b)
                        for (std::int64_t i = 0; i < hw; ++i) {
                            const std::size_t ii = channel_index(b, ch, i);
                            in->grad[ii] += g * istd * self.grad[ii];
                        }
                }
            }
        });
}

// ---- reverse sweep ----

void backward(const Tensor& loss) {
    check(loss.defined(), "backward on undefined tensor");
    check(loss.size() == 1, "backward requires a scalar loss, got " + shape_str(loss.shape()));

    // Iterative post-order DFS over the recorded graph.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && !seen.count(parent)) {
                seen.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backprop && node->grad.size() == node->data.size()) node->backprop(*node);
    }
}

}  // namespace dbgi
