#pragma once

#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgt {

class TensorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
struct Node;
struct Access;
}

/// Dense row-major tensor of doubles. Copies are shallow handles onto the
/// same storage; ops record themselves onto the autodiff graph whenever an
/// input has requires_grad set.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, double stddev, std::mt19937_64& rng,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int size() const;
    int dim(int i) const;
    int ndim() const;
    bool requires_grad() const;

    const std::vector<double>& data() const;
    std::vector<double>& data_mut();
    const std::vector<double>& grad() const;
    bool has_grad() const;
    void zero_grad();

    double value() const;  // scalar tensors only
    double at(const std::vector<int>& idx) const;

    /// Reverse-mode sweep from a scalar loss. Accumulates into leaf grads.
    void backward() const;

    /// Stable identity of the underlying storage (for parameter bookkeeping).
    const void* id() const;

private:
    std::shared_ptr<detail::Node> node_;
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    friend struct detail::Access;
};

// ---- primitive forward ops -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);             // (m,k)x(k,n)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // (n,i)x(i,o)+b
Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b); // (h,w,ci)
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, double c);
Tensor concat_lastdim(const std::vector<Tensor>& xs);
Tensor bilinear_sample(const Tensor& map, const Tensor& coords);   // map (h,w,c), coords (n,2) as (x,y)
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);
Tensor scatter_weighted_sum(const Tensor& messages, const Tensor& weights,
                            const std::vector<int>& sinks, int num_sinks);
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor sum(const Tensor& x);
Tensor exp(const Tensor& x);

enum class OpKind {
    Matmul,
    Linear,
    Conv1x1,
    Relu,
    Sigmoid,
    SoftmaxLastdim,
    Add,
    Sub,
    MulScalar,
    ConcatLastdim,
    BilinearSample,
    GatherRows,
    ScatterWeightedSum,
};

/// Generic dispatcher over the primitive set. Index-bearing kinds (gather,
/// scatter) read their integer arguments from trailing tensors; MulScalar
/// reads the scalar from a one-element tensor.
Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs);

/// Extension point for fused ops with hand-written backward rules. The
/// caller supplies the forward result; the backward callback receives the
/// output gradient plus, per input, its data and a gradient buffer (null for
/// inputs that do not require grad).
using CustomBackward = std::function<void(
    const std::vector<double>& out_grad,
    const std::vector<const std::vector<double>*>& in_data,
    const std::vector<std::vector<double>*>& in_grad)>;

Tensor custom_op(std::vector<int> shape, std::vector<double> data,
                 const std::vector<Tensor>& inputs, CustomBackward backward);

// ---- gradient verification -------------------------------------------------

struct GradCheckReport {
    double max_relative_error = 0.0;
    bool pass = false;
};

/// Compares analytic gradients of f() w.r.t. the given leaves against central
/// finite differences. f must rebuild its graph on every call and be
/// deterministic (checked; a mismatch throws). Differences below the 1e-8
/// absolute floor are ignored. max_probes_per_leaf < 0 probes every element.
GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                           double eps, double tol, int max_probes_per_leaf = -1,
                           unsigned probe_seed = 0);

}  // namespace hgt
