#include "dumlab/linalg.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace dumlab {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

using detail::TensorImpl;

Tensor tracked_result(Shape shape, std::vector<double> data, std::vector<std::shared_ptr<TensorImpl>> parents,
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

// lower triangle with halved diagonal
EMat phi(const EMat& m) {
    EMat r = m.triangularView<Eigen::Lower>();
    r.diagonal() *= 0.5;
    return r;
}

}  // namespace

CholeskyResult cholesky(const Tensor& A, double jitter) {
    if (A.rank() != 2 || A.shape()[0] != A.shape()[1]) throw ShapeError("cholesky needs a square matrix");
    const size_t n = A.shape()[0];
    CMap a(A.data().data(), n, n);
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + a.cwiseAbs().maxCoeff()))
        throw NumericalError("cholesky input is not symmetric");

    double jit = jitter;
    int escalations = 0;
    EMat lower;
    for (;;) {
        EMat shifted = a;
        shifted.diagonal().array() += jit;
        Eigen::LLT<EMat> llt(shifted);
        if (llt.info() == Eigen::Success) {
            lower = llt.matrixL();
            // LLT can report success on barely-indefinite inputs; check the residual
            const double resid = (lower * lower.transpose() - shifted).norm();
            if (resid <= 1e-8 * (1.0 + shifted.norm()) && lower.diagonal().minCoeff() > 0.0) break;
        }
        if (jit >= 1e-2) throw NumericalError("cholesky failed: matrix not positive definite up to jitter 1e-2");
        jit = jit == 0.0 ? 1e-8 : jit * 10.0;
        ++escalations;
    }

    std::vector<double> ldata(n * n);
    MMap(ldata.data(), n, n) = lower;

    auto ai_ = A.impl();
    auto bw = [ai_, n](TensorImpl& self) {
        ai_->ensure_grad();
        CMap L(self.data.data(), n, n);
        CMap Lbar(self.grad.data(), n, n);
        // Abar = sym(L^{-T} Phi(L^T Lbar) L^{-1}); valid for symmetric upstream A
        EMat P = phi(L.transpose() * Lbar);
        EMat X = L.transpose().triangularView<Eigen::Upper>().solve(P);
        X = L.transpose().triangularView<Eigen::Upper>().solve(X.transpose()).transpose();
        EMat Abar = 0.5 * (X + X.transpose());
        MMap(ai_->grad.data(), n, n) += Abar;
    };
    Tensor L = tracked_result(Shape{n, n}, std::move(ldata), {ai_}, std::move(bw));
    return {L, jit, escalations};
}

Tensor trisolve_lower(const Tensor& L, const Tensor& B) {
    if (L.rank() != 2 || L.shape()[0] != L.shape()[1]) throw ShapeError("trisolve needs a square L");
    const size_t n = L.shape()[0];
    const Tensor Bm = B.rank() == 1 ? reshape(B, Shape{B.numel(), 1}) : B;
    if (Bm.shape()[0] != n) throw ShapeError("trisolve dimension mismatch");
    const size_t m = Bm.shape()[1];
    std::vector<double> out(n * m);
    MMap(out.data(), n, m) =
        CMap(L.data().data(), n, n).triangularView<Eigen::Lower>().solve(CMap(Bm.data().data(), n, m));

    auto li_ = L.impl();
    auto bi_ = Bm.impl();
    auto bw = [li_, bi_, n, m](TensorImpl& self) {
        CMap Lm(li_->data.data(), n, n);
        CMap X(self.data.data(), n, m);
        CMap Xbar(self.grad.data(), n, m);
        EMat Bbar = Lm.transpose().triangularView<Eigen::Upper>().solve(EMat(Xbar));
        if (bi_->requires_grad || !bi_->is_leaf()) {
            bi_->ensure_grad();
            MMap(bi_->grad.data(), n, m) += Bbar;
        }
        if (li_->requires_grad || !li_->is_leaf()) {
            li_->ensure_grad();
            EMat Lbar = -(Bbar * X.transpose());
            MMap(li_->grad.data(), n, n) += EMat(Lbar.triangularView<Eigen::Lower>());
        }
    };
    Tensor out_t = tracked_result(Shape{n, m}, std::move(out), {li_, bi_}, std::move(bw));
    return B.rank() == 1 ? reshape(out_t, Shape{n}) : out_t;
}

Tensor trisolve_lower_transposed(const Tensor& L, const Tensor& B) {
    if (L.rank() != 2 || L.shape()[0] != L.shape()[1]) throw ShapeError("trisolve needs a square L");
    const size_t n = L.shape()[0];
    const Tensor Bm = B.rank() == 1 ? reshape(B, Shape{B.numel(), 1}) : B;
    if (Bm.shape()[0] != n) throw ShapeError("trisolve dimension mismatch");
    const size_t m = Bm.shape()[1];
    std::vector<double> out(n * m);
    MMap(out.data(), n, m) =
        CMap(L.data().data(), n, n).transpose().triangularView<Eigen::Upper>().solve(CMap(Bm.data().data(), n, m));

    auto li_ = L.impl();
    auto bi_ = Bm.impl();
    auto bw = [li_, bi_, n, m](TensorImpl& self) {
        CMap Lm(li_->data.data(), n, n);
        CMap Y(self.data.data(), n, m);
        CMap Ybar(self.grad.data(), n, m);
        EMat Bbar = Lm.triangularView<Eigen::Lower>().solve(EMat(Ybar));
        if (bi_->requires_grad || !bi_->is_leaf()) {
            bi_->ensure_grad();
            MMap(bi_->grad.data(), n, m) += Bbar;
        }
        if (li_->requires_grad || !li_->is_leaf()) {
            li_->ensure_grad();
            EMat Lbar = -(Y * Bbar.transpose());
            MMap(li_->grad.data(), n, n) += EMat(Lbar.triangularView<Eigen::Lower>());
        }
    };
    Tensor out_t = tracked_result(Shape{n, m}, std::move(out), {li_, bi_}, std::move(bw));
    return B.rank() == 1 ? reshape(out_t, Shape{n}) : out_t;
}

double power_iteration(const Tensor& W, std::vector<double>& u_state, int steps) {
    if (W.rank() != 2) throw ShapeError("power_iteration needs rank 2");
    const size_t m = W.shape()[0], n = W.shape()[1];
    if (u_state.size() != m) throw ShapeError("power_iteration u_state length mismatch");
    if (steps < 1) throw ConfigError("power_iteration needs steps >= 1");
    CMap w(W.data().data(), m, n);
    Eigen::Map<Eigen::VectorXd> u(u_state.data(), m);
    Eigen::VectorXd v(n);
    const double eps = 1e-12;
    for (int s = 0; s < steps; ++s) {
        v = w.transpose() * u;
        const double vn = v.norm();
        if (vn < eps) return 0.0;
        v /= vn;
        Eigen::VectorXd wu = w * v;
        const double un = wu.norm();
        if (un < eps) return 0.0;
        u = wu / un;
    }
    return u.dot(w * v);
}

}  // namespace dumlab
