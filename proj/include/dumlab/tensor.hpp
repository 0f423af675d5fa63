#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dumlab/errors.hpp"
#include "dumlab/rng.hpp"

namespace dumlab {

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first accumulation

    // reverse-mode tape linkage
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;  // nullptr on leaves
    uint64_t node_id = 0;
    bool consumed = false;

    bool is_leaf() const { return !backward_fn; }
    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

uint64_t next_node_id();

}  // namespace detail

// Dense n-d tensor of doubles with optional participation in a reverse-mode
// tape. Value semantics via shared impl: copies alias the same storage, which
// is what the tape needs; use clone() for a deep copy.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
    static Tensor eye(size_t n);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    size_t numel() const { return impl_->data.size(); }
    size_t rank() const { return impl_->shape.size(); }
    // rank-2 helpers (rank-1 counts as a single row)
    size_t rows() const;
    size_t cols() const;

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double item() const;
    double& at(size_t i) { return impl_->data[i]; }
    double at(size_t i) const { return impl_->data[i]; }
    double& at(size_t i, size_t j);
    double at(size_t i, size_t j) const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v);
    const std::vector<double>& grad() const;
    void zero_grad();

    // Runs the tape from this scalar output. A second call through the same
    // non-leaf nodes throws NumericalError.
    void backward();

    Tensor detach() const;  // same values, off the tape
    Tensor clone() const;   // deep copy, off the tape

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    static Tensor from_impl(std::shared_ptr<detail::TensorImpl> impl);

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

enum class OpKind { Add, Sub, Mul, Div, Exp, Log, Tanh, Relu, Softplus, Neg, Pow };

// --- elementwise, with trailing-dimension broadcasting ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// clamp from above; gradient is zero where the clamp engages
Tensor clamp_max(const Tensor& a, double hi);

// spec-surface dispatcher; unary kinds ignore b
Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b = Tensor(), double pow_exponent = 1.0);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// --- special functions (elementwise, differentiable) ---
Tensor lgamma(const Tensor& a);   // grad: digamma
Tensor digamma(const Tensor& a);  // grad: trigamma

// --- matmul / structure ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor gather_rows(const Tensor& a, const std::vector<size_t>& idx);
// per-row pick: a is N x C, labels has N entries; result shape {N}
Tensor take_per_row(const Tensor& a, const std::vector<size_t>& labels);
// glue C equal-length vectors into the columns of an N x C matrix
Tensor stack_cols(const std::vector<Tensor>& cols);

// --- reductions (full and rank-2 axis forms) ---
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis);
Tensor logsumexp(const Tensor& a);
Tensor logsumexp(const Tensor& a, int axis);
Tensor max(const Tensor& a);
Tensor max(const Tensor& a, int axis);

// softmax over the trailing axis of a rank-2 tensor (or a rank-1 vector)
Tensor softmax(const Tensor& a);

}  // namespace dumlab
