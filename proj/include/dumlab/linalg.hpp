#pragma once

#include <vector>

#include "dumlab/tensor.hpp"

namespace dumlab {

struct CholeskyResult {
    Tensor L;            // lower triangular, differentiable w.r.t. A
    double jitter_used;  // diagonal shift that made the factorization succeed
    int escalations;     // number of x10 escalations applied
};

// Factor A + jitter*I = L L^T. On failure the jitter escalates x10 (from 1e-8
// when the requested jitter is zero) up to 1e-2, then throws NumericalError.
CholeskyResult cholesky(const Tensor& A, double jitter = 0.0);

// Solve L X = B (L lower triangular), differentiable in both arguments.
Tensor trisolve_lower(const Tensor& L, const Tensor& B);
// Solve L^T X = B.
Tensor trisolve_lower_transposed(const Tensor& L, const Tensor& B);

// One-or-more power iteration steps estimating the top singular value of W.
// u_state (length = rows of W) persists across calls so that a single step
// per call converges over the course of training.
double power_iteration(const Tensor& W, std::vector<double>& u_state, int steps);

}  // namespace dumlab
