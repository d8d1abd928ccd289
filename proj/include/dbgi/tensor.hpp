#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbgi {

// Raised when an operation's shape/value contract is violated. Maps to CLI exit code 1.
class ContractViolation : public std::runtime_error {
public:
    explicit ContractViolation(const std::string& what) : std::runtime_error(what) {}
};

// Raised on filesystem / format failures. Maps to CLI exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One entry of the dynamic computation tape. Values are 64-bit floats in
// row-major order. `backprop` scatters this node's grad into its parents;
// it is only set while gradient recording is enabled and some parent
// requires a gradient.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(const TensorNode&)> backprop;

    void ensure_grad();
};

// Thread-local switch for tape recording. Forward values are always computed;
// with recording off no graph edges or closures are created.
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

// Value-semantics handle to a tape node. Copies share storage; use clone()
// for an independent copy of the values.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor from_data(Shape shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::int64_t dim(std::size_t axis) const;
    std::int64_t size() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;
    double at(std::int64_t flat) const;
    double value() const;  // single-element tensors only

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& grad_mut();
    void zero_grad();

    Tensor clone() const;  // detached value copy
    bool all_finite() const;

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

// ---- elementwise / linear algebra ----
// add/sub/mul broadcast right-aligned: trailing dims must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_const(const Tensor& a, double constant);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);  // (r,k)x(k,c)->(r,c) or (r,k)x(k)->(r)
Tensor transpose(const Tensor& a);                // rank-2
Tensor reshape(const Tensor& a, Shape shape);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softmax(const Tensor& a);  // vector: whole; rank>=2: last axis

Tensor sum(const Tensor& a);                       // -> rank-0 scalar
Tensor pick(const Tensor& a, std::int64_t flat);   // -> rank-0 scalar
Tensor row(const Tensor& a, std::int64_t r);       // rank-2 row -> vector

Tensor concat_channels(const std::vector<Tensor>& parts);           // NCHW, axis 1
Tensor slice_channels(const Tensor& a, std::int64_t begin, std::int64_t end);

// ---- convolution / pooling / normalization ----
// Cross-correlation (no kernel flip). bias may be an undefined Tensor.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding, int dilation);
Tensor avg_pool2d(const Tensor& input, int window, int stride);
Tensor max_pool2d(const Tensor& input, int window, int stride, int padding);
Tensor global_avg_pool(const Tensor& input);

// Per-channel batch statistics over all non-channel positions (rank 2: N x C,
// rank 4: N x C x H x W). Train mode normalizes with biased batch variance and
// updates running stats in place with the unbiased estimate; a channel with a
// single value has no variance estimate and leaves the running stats untouched.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool training, double momentum, double epsilon);

// Reverse-mode sweep from a scalar loss. Populates grad on every reachable
// node with requires_grad; grads accumulate across calls until zero_grad.
void backward(const Tensor& loss);

}  // namespace dbgi
