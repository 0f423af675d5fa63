#include "dumlab/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "dumlab/special.hpp"

namespace dumlab {

size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << s[i] << (i + 1 < s.size() ? "," : "");
    os << ")";
    return os.str();
}

namespace detail {
uint64_t next_node_id() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

using detail::TensorImpl;

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
    impl_->node_id = detail::next_node_id();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : Tensor(shape, std::vector<double>(shape_numel(shape), fill), requires_grad) {}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Shape{}, std::vector<double>{v}, requires_grad); }
Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::full(Shape shape, double v, bool requires_grad) { return Tensor(std::move(shape), v, requires_grad); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    std::vector<double> d(shape_numel(shape));
    for (double& v : d) v = stddev * rng.normal();
    return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::eye(size_t n) {
    Tensor t(Shape{n, n});
    for (size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

size_t Tensor::rows() const {
    if (rank() == 2) return impl_->shape[0];
    if (rank() == 1) return 1;
    throw ShapeError("rows() needs rank 1 or 2, got " + shape_str(shape()));
}

size_t Tensor::cols() const {
    if (rank() == 2) return impl_->shape[1];
    if (rank() == 1) return impl_->shape[0];
    throw ShapeError("cols() needs rank 1 or 2, got " + shape_str(shape()));
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor with " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

double& Tensor::at(size_t i, size_t j) {
    if (rank() != 2) throw ShapeError("at(i,j) needs rank 2");
    return impl_->data[i * impl_->shape[1] + j];
}

double Tensor::at(size_t i, size_t j) const { return const_cast<Tensor*>(this)->at(i, j); }

Tensor& Tensor::set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
}

const std::vector<double>& Tensor::grad() const { return impl_->ensure_grad(); }

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;  // copy of values, no tape linkage
    t.impl_->node_id = detail::next_node_id();
    return t;
}

Tensor Tensor::clone() const { return detach(); }

Tensor Tensor::from_impl(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

void Tensor::backward() {
    if (numel() != 1) throw ShapeError("backward() requires a scalar output");
    // gather reachable tape nodes
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::shared_ptr<TensorImpl>> stack{impl_};
    std::vector<std::shared_ptr<TensorImpl>> keepalive;
    while (!stack.empty()) {
        auto node = stack.back();
        stack.pop_back();
        if (!seen.insert(node.get()).second) continue;
        keepalive.push_back(node);
        if (!node->is_leaf()) {
            if (node->consumed) throw NumericalError("backward re-run without a fresh forward pass");
            order.push_back(node.get());
            for (auto& p : node->parents) stack.push_back(p);
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorImpl* a, const TensorImpl* b) { return a->node_id > b->node_id; });
    impl_->ensure_grad()[0] = 1.0;
    for (TensorImpl* node : order) {
        node->ensure_grad();
        node->backward_fn(*node);
        node->consumed = true;
    }
}

// ---------------------------------------------------------------- broadcasting machinery

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        const size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1)
            throw BroadcastError("shapes " + shape_str(a) + " and " + shape_str(b) + " not broadcastable");
        out[r - 1 - i] = std::max(da, db);
    }
    return out;
}

// element strides of `s` viewed inside out-shape `out`, 0 on broadcast dims
std::vector<size_t> map_strides(const Shape& s, const Shape& out) {
    std::vector<size_t> native(s.size(), 1);
    for (size_t i = s.size(); i-- > 1;) native[i - 1] = native[i] * s[i];
    std::vector<size_t> m(out.size(), 0);
    for (size_t i = 0; i < out.size(); ++i) {
        const size_t off = out.size() - 1 - i;
        if (i < s.size()) {
            const size_t d = s[s.size() - 1 - i];
            m[out.size() - 1 - i] = (d == 1 && out[off] != 1) ? 0 : native[s.size() - 1 - i];
        }
    }
    return m;
}

// Calls fn(out_linear, a_linear, b_linear) for every output element.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<size_t>& astr, const std::vector<size_t>& bstr, Fn&& fn) {
    const size_t n = shape_numel(out);
    const size_t r = out.size();
    if (r == 0) {
        fn(0, 0, 0);
        return;
    }
    std::vector<size_t> idx(r, 0);
    size_t ao = 0, bo = 0;
    for (size_t lin = 0; lin < n; ++lin) {
        fn(lin, ao, bo);
        for (size_t d = r; d-- > 0;) {
            idx[d]++;
            ao += astr[d];
            bo += bstr[d];
            if (idx[d] < out[d]) break;
            ao -= astr[d] * out[d];
            bo -= bstr[d] * out[d];
            idx[d] = 0;
        }
    }
}

bool wants_tape(const Tensor& t) { return t.requires_grad() || !t.impl()->is_leaf(); }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<std::shared_ptr<TensorImpl>> parents,
                   std::function<void(TensorImpl&)> backward_fn) {
    bool track = false;
    for (auto& p : parents)
        if (p->requires_grad || !p->is_leaf()) track = true;
    Tensor out(std::move(shape), std::move(data));
    if (track) {
        out.impl()->parents = std::move(parents);
        out.impl()->backward_fn = std::move(backward_fn);
    }
    return out;
}

// fval(a,b) -> value; dfa/dfb(a,b,out) -> partials
template <typename F, typename Da, typename Db>
Tensor binary_op(const Tensor& a, const Tensor& b, F fval, Da dfa, Db dfb) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const auto astr = map_strides(a.shape(), out_shape);
    const auto bstr = map_strides(b.shape(), out_shape);
    std::vector<double> out(shape_numel(out_shape));
    const auto& ad = a.data();
    const auto& bd = b.data();
    for_each_broadcast(out_shape, astr, bstr,
                       [&](size_t o, size_t ai, size_t bi) { out[o] = fval(ad[ai], bd[bi]); });

    auto ai_ = a.impl();
    auto bi_ = b.impl();
    auto bw = [ai_, bi_, out_shape, astr, bstr, dfa, dfb](TensorImpl& self) {
        const bool need_a = ai_->requires_grad || !ai_->is_leaf();
        const bool need_b = bi_->requires_grad || !bi_->is_leaf();
        if (need_a) ai_->ensure_grad();
        if (need_b) bi_->ensure_grad();
        const auto& ad = ai_->data;
        const auto& bd = bi_->data;
        const auto& g = self.grad;
        const auto& od = self.data;
        for_each_broadcast(out_shape, astr, bstr, [&](size_t o, size_t ac, size_t bc) {
            if (need_a) ai_->grad[ac] += g[o] * dfa(ad[ac], bd[bc], od[o]);
            if (need_b) bi_->grad[bc] += g[o] * dfb(ad[ac], bd[bc], od[o]);
        });
    };
    return make_result(out_shape, std::move(out), {ai_, bi_}, std::move(bw));
}

template <typename F, typename D>
Tensor unary_op(const Tensor& a, F fval, D dfdx) {
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = fval(ad[i]);
    auto ai_ = a.impl();
    auto bw = [ai_, dfdx](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t i = 0; i < self.data.size(); ++i)
            ai_->grad[i] += self.grad[i] * dfdx(ai_->data[i], self.data[i]);
    };
    return make_result(a.shape(), std::move(out), {ai_}, std::move(bw));
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

}  // namespace

// ---------------------------------------------------------------- elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double y : b.data())
        if (y == 0.0) throw DomainError("division by zero");
    return binary_op(
        a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Tensor log(const Tensor& a) {
    for (double x : a.data())
        if (x <= 0.0) throw DomainError("log of non-positive value");
    return unary_op(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
double softplus_val(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}
double sigmoid_val(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Tensor softplus(const Tensor& a) {
    return unary_op(
        a, [](double x) { return softplus_val(x); }, [](double x, double) { return sigmoid_val(x); });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a, [](double x) { return sigmoid_val(x); }, [](double, double o) { return o * (1.0 - o); });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor pow(const Tensor& a, double p) {
    const bool integral = p == std::floor(p);
    if (!integral)
        for (double x : a.data())
            if (x < 0.0) throw DomainError("pow of negative base with non-integer exponent");
    return unary_op(
        a, [p](double x) { return std::pow(x, p); },
        [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Tensor sqrt(const Tensor& a) { return pow(a, 0.5); }
Tensor square(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp_max(const Tensor& a, double hi) {
    return unary_op(
        a, [hi](double x) { return x < hi ? x : hi; }, [hi](double x, double) { return x < hi ? 1.0 : 0.0; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(
        a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(
        a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor lgamma(const Tensor& a) {
    for (double x : a.data())
        if (x <= 0.0) throw DomainError("lgamma of non-positive value");
    return unary_op(
        a, [](double x) { return log_gamma(x); }, [](double x, double) { return dumlab::digamma(x); });
}

Tensor digamma(const Tensor& a) {
    for (double x : a.data())
        if (x <= 0.0) throw DomainError("digamma of non-positive value");
    return unary_op(
        a, [](double x) { return dumlab::digamma(x); }, [](double x, double) { return dumlab::trigamma(x); });
}

Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b, double pow_exponent) {
    const bool is_binary = kind == OpKind::Add || kind == OpKind::Sub || kind == OpKind::Mul || kind == OpKind::Div;
    if (is_binary && !b.defined()) throw ShapeError("binary elementwise op needs two operands");
    switch (kind) {
        case OpKind::Add: return add(a, b);
        case OpKind::Sub: return sub(a, b);
        case OpKind::Mul: return mul(a, b);
        case OpKind::Div: return div(a, b);
        case OpKind::Exp: return exp(a);
        case OpKind::Log: return log(a);
        case OpKind::Tanh: return tanh(a);
        case OpKind::Relu: return relu(a);
        case OpKind::Softplus: return softplus(a);
        case OpKind::Neg: return neg(a);
        case OpKind::Pow: return pow(a, pow_exponent);
    }
    throw ConfigError("unknown elementwise op kind");
}

// ---------------------------------------------------------------- matmul & structure

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul needs rank-2 operands");
    const size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(m * n);
    MMap(out.data(), m, n) = CMap(a.data().data(), m, k) * CMap(b.data().data(), k, n);

    auto ai_ = a.impl();
    auto bi_ = b.impl();
    auto bw = [ai_, bi_, m, k, n](TensorImpl& self) {
        CMap gc(self.grad.data(), m, n);
        if (ai_->requires_grad || !ai_->is_leaf()) {
            ai_->ensure_grad();
            MMap(ai_->grad.data(), m, k).noalias() += gc * CMap(bi_->data.data(), k, n).transpose();
        }
        if (bi_->requires_grad || !bi_->is_leaf()) {
            bi_->ensure_grad();
            MMap(bi_->grad.data(), k, n).noalias() += CMap(ai_->data.data(), m, k).transpose() * gc;
        }
    };
    return make_result(Shape{m, n}, std::move(out), {ai_, bi_}, std::move(bw));
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose needs rank 2");
    const size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    MMap(out.data(), n, m) = CMap(a.data().data(), m, n).transpose();
    auto ai_ = a.impl();
    auto bw = [ai_, m, n](TensorImpl& self) {
        ai_->ensure_grad();
        MMap(ai_->grad.data(), m, n).noalias() += CMap(self.grad.data(), n, m).transpose();
    };
    return make_result(Shape{n, m}, std::move(out), {ai_}, std::move(bw));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes element count");
    auto ai_ = a.impl();
    auto bw = [ai_](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ai_->grad[i] += self.grad[i];
    };
    return make_result(std::move(shape), a.data(), {ai_}, std::move(bw));
}

Tensor gather_rows(const Tensor& a, const std::vector<size_t>& idx) {
    if (a.rank() != 2) throw ShapeError("gather_rows needs rank 2");
    const size_t c = a.shape()[1];
    std::vector<double> out(idx.size() * c);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.shape()[0]) throw ShapeError("gather_rows index out of range");
        std::copy_n(a.data().data() + idx[i] * c, c, out.data() + i * c);
    }
    auto ai_ = a.impl();
    auto bw = [ai_, idx, c](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i)
            for (size_t j = 0; j < c; ++j) ai_->grad[idx[i] * c + j] += self.grad[i * c + j];
    };
    return make_result(Shape{idx.size(), c}, std::move(out), {ai_}, std::move(bw));
}

Tensor take_per_row(const Tensor& a, const std::vector<size_t>& labels) {
    if (a.rank() != 2) throw ShapeError("take_per_row needs rank 2");
    const size_t n = a.shape()[0], c = a.shape()[1];
    if (labels.size() != n) throw ShapeError("take_per_row label count mismatch");
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] >= c) throw ShapeError("take_per_row label out of range");
        out[i] = a.data()[i * c + labels[i]];
    }
    auto ai_ = a.impl();
    auto bw = [ai_, labels, c](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t i = 0; i < labels.size(); ++i) ai_->grad[i * c + labels[i]] += self.grad[i];
    };
    return make_result(Shape{n}, std::move(out), {ai_}, std::move(bw));
}

Tensor stack_cols(const std::vector<Tensor>& cols) {
    if (cols.empty()) throw ShapeError("stack_cols needs at least one column");
    const size_t n = cols[0].numel(), c = cols.size();
    std::vector<double> out(n * c);
    std::vector<std::shared_ptr<TensorImpl>> parents;
    for (size_t k = 0; k < c; ++k) {
        if (cols[k].numel() != n || cols[k].rank() > 2)
            throw ShapeError("stack_cols columns must be equal-length vectors");
        for (size_t i = 0; i < n; ++i) out[i * c + k] = cols[k].data()[i];
        parents.push_back(cols[k].impl());
    }
    auto ps = parents;
    auto bw = [ps, n, c](TensorImpl& self) {
        for (size_t k = 0; k < c; ++k) {
            ps[k]->ensure_grad();
            for (size_t i = 0; i < n; ++i) ps[k]->grad[i] += self.grad[i * c + k];
        }
    };
    return make_result(Shape{n, c}, std::move(out), std::move(parents), std::move(bw));
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    auto ai_ = a.impl();
    auto bw = [ai_](TensorImpl& self) {
        ai_->ensure_grad();
        for (double& g : ai_->grad) g += self.grad[0];
    };
    return make_result(Shape{}, {s}, {ai_}, std::move(bw));
}

namespace {
void check_axis(const Tensor& a, int axis) {
    if (a.rank() != 2) throw ShapeError("axis reductions need rank 2, got " + shape_str(a.shape()));
    if (axis != 0 && axis != 1) throw ShapeError("invalid axis " + std::to_string(axis));
}
}  // namespace

Tensor sum(const Tensor& a, int axis) {
    check_axis(a, axis);
    const size_t m = a.shape()[0], n = a.shape()[1];
    const size_t len = axis == 0 ? n : m;
    std::vector<double> out(len, 0.0);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += a.data()[i * n + j];
    auto ai_ = a.impl();
    auto bw = [ai_, m, n, axis](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) ai_->grad[i * n + j] += self.grad[axis == 0 ? j : i];
    };
    return make_result(Shape{len}, std::move(out), {ai_}, std::move(bw));
}

Tensor mean(const Tensor& a) { return sum(a) * (1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, int axis) {
    check_axis(a, axis);
    const double extent = static_cast<double>(a.shape()[axis]);
    return sum(a, axis) * (1.0 / extent);
}

Tensor logsumexp(const Tensor& a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : a.data()) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : a.data()) s += std::exp(x - mx);
    const double val = mx + std::log(s);
    auto ai_ = a.impl();
    auto bw = [ai_, val](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t i = 0; i < ai_->data.size(); ++i) ai_->grad[i] += self.grad[0] * std::exp(ai_->data[i] - val);
    };
    return make_result(Shape{}, {val}, {ai_}, std::move(bw));
}

Tensor logsumexp(const Tensor& a, int axis) {
    check_axis(a, axis);
    const size_t m = a.shape()[0], n = a.shape()[1];
    const size_t len = axis == 0 ? n : m;
    std::vector<double> out(len);
    auto slice_val = [&](size_t k) {
        double mx = -std::numeric_limits<double>::infinity();
        const size_t cnt = axis == 0 ? m : n;
        for (size_t t = 0; t < cnt; ++t) mx = std::max(mx, a.data()[axis == 0 ? t * n + k : k * n + t]);
        double s = 0.0;
        for (size_t t = 0; t < cnt; ++t) s += std::exp(a.data()[(axis == 0 ? t * n + k : k * n + t)] - mx);
        return mx + std::log(s);
    };
    for (size_t k = 0; k < len; ++k) out[k] = slice_val(k);
    auto ai_ = a.impl();
    auto vals = out;
    auto bw = [ai_, m, n, axis, vals](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) {
                const size_t k = axis == 0 ? j : i;
                ai_->grad[i * n + j] += self.grad[k] * std::exp(ai_->data[i * n + j] - vals[k]);
            }
    };
    return make_result(Shape{len}, std::move(out), {ai_}, std::move(bw));
}

Tensor max(const Tensor& a) {
    size_t arg = 0;
    for (size_t i = 1; i < a.numel(); ++i)
        if (a.data()[i] > a.data()[arg]) arg = i;
    auto ai_ = a.impl();
    auto bw = [ai_, arg](TensorImpl& self) {
        ai_->ensure_grad();
        ai_->grad[arg] += self.grad[0];
    };
    return make_result(Shape{}, {a.data()[arg]}, {ai_}, std::move(bw));
}

Tensor max(const Tensor& a, int axis) {
    check_axis(a, axis);
    const size_t m = a.shape()[0], n = a.shape()[1];
    const size_t len = axis == 0 ? n : m;
    std::vector<double> out(len);
    std::vector<size_t> args(len);
    for (size_t k = 0; k < len; ++k) {
        const size_t cnt = axis == 0 ? m : n;
        size_t best = axis == 0 ? k : k * n;
        for (size_t t = 1; t < cnt; ++t) {
            const size_t lin = axis == 0 ? t * n + k : k * n + t;
            if (a.data()[lin] > a.data()[best]) best = lin;
        }
        args[k] = best;
        out[k] = a.data()[best];
    }
    auto ai_ = a.impl();
    auto bw = [ai_, args](TensorImpl& self) {
        ai_->ensure_grad();
        for (size_t k = 0; k < args.size(); ++k) ai_->grad[args[k]] += self.grad[k];
    };
    return make_result(Shape{len}, std::move(out), {ai_}, std::move(bw));
}

Tensor softmax(const Tensor& a) {
    if (a.rank() == 1) {
        Tensor lse = logsumexp(a);
        return exp(sub(a, reshape(lse, Shape{1})));
    }
    if (a.rank() != 2) throw ShapeError("softmax needs rank 1 or 2");
    Tensor lse = logsumexp(a, 1);  // {m}
    return exp(sub(a, reshape(lse, Shape{a.shape()[0], 1})));
}

}  // namespace dumlab
