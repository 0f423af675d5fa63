#include <cmath>

#include "doctest.h"
#include "dumlab/linalg.hpp"
#include "dumlab/tensor.hpp"
#include "oracles.hpp"

using namespace dumlab;

namespace {
Tensor random_spd(size_t n, Rng& rng, double ridge) {
    Tensor M = Tensor::randn({n, n}, rng);
    Tensor A = Tensor::zeros({n, n});
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < n; ++k) s += M.at(k, i) * M.at(k, j);
            A.at(i, j) = s + (i == j ? ridge : 0.0);
        }
    return A;
}
}  // namespace

TEST_CASE("cholesky identity and reconstruction") {
    auto r = cholesky(Tensor::eye(4), 0.0);
    CHECK(r.escalations == 0);
    CHECK(r.jitter_used == 0.0);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 4; ++j) CHECK(r.L.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));

    Rng rng(2);
    Tensor A = random_spd(6, rng, 1e-6);
    auto c = cholesky(A, 0.0);
    double frob_err = 0.0, frob = 0.0;
    for (size_t i = 0; i < 6; ++i)
        for (size_t j = 0; j < 6; ++j) {
            double rec = 0.0;
            for (size_t k = 0; k < 6; ++k) rec += c.L.at(i, k) * c.L.at(j, k);
            const double target = A.at(i, j) + (i == j ? c.jitter_used : 0.0);
            frob_err += (rec - target) * (rec - target);
            frob += target * target;
        }
    CHECK(std::sqrt(frob_err / frob) < 1e-8);
}

TEST_CASE("cholesky of zeros escalates jitter") {
    auto r = cholesky(Tensor::zeros({3, 3}), 0.0);
    CHECK(r.escalations > 0);
    CHECK(r.jitter_used == doctest::Approx(1e-8));
    for (size_t i = 0; i < 3; ++i) CHECK(r.L.at(i, i) == doctest::Approx(std::sqrt(r.jitter_used)));
}

TEST_CASE("cholesky rejects indefinite matrices past max jitter") {
    Tensor A({2, 2}, {1.0, 0.0, 0.0, -5.0});
    CHECK_THROWS_AS(cholesky(A, 0.0), NumericalError);
}

TEST_CASE("cholesky + triangular solves reproduce gaussian elimination") {
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const size_t n = 3 + rng.integer(8);  // n <= 10
        Tensor A = random_spd(n, rng, 0.5);
        Tensor b = Tensor::randn({n}, rng);
        auto c = cholesky(A, 0.0);
        Tensor x = trisolve_lower_transposed(c.L, trisolve_lower(c.L, b));
        // oracle solves the jittered system, identical here since jitter_used == 0
        REQUIRE(c.jitter_used == 0.0);
        auto ox = oracles::gauss_solve(A.data(), b.data());
        for (size_t i = 0; i < n; ++i) CHECK(x.data()[i] == doctest::Approx(ox[i]).epsilon(1e-6));
    }
}

TEST_CASE("cholesky and trisolve gradients match finite differences") {
    Rng rng(6);
    // parameterize A = M M^T + ridge I through a free matrix M
    Tensor M = Tensor::randn({4, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({4}, rng, 1.0, true);
    auto loss = [&] {
        Tensor A = add(matmul(M, transpose(M)), mul_scalar(Tensor::eye(4), 0.5));
        Tensor L = cholesky(A, 0.0).L;
        Tensor x = trisolve_lower_transposed(L, trisolve_lower(L, b));
        Tensor diag_term = sum(log(mul(L, Tensor::eye(4)) + (Tensor::full({4, 4}, 1.0) - Tensor::eye(4))));
        return add(sum(square(x)), diag_term);
    };
    CHECK(oracles::max_grad_error(loss, {M, b}, 1e-5) < 1e-4);
}

TEST_CASE("power iteration") {
    Tensor W({2, 2}, {3.0, 0.0, 0.0, 1.0});
    std::vector<double> u = {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
    const double sigma = power_iteration(W, u, 50);
    CHECK(sigma == doctest::Approx(3.0).epsilon(1e-6));

    Rng rng(8);
    Tensor R = Tensor::randn({8, 8}, rng);
    std::vector<double> u2(8);
    for (auto& v : u2) v = rng.normal();
    double nrm = 0.0;
    for (double v : u2) nrm += v * v;
    for (auto& v : u2) v /= std::sqrt(nrm);
    auto u3 = u2;
    const double s100 = power_iteration(R, u2, 100);
    const double oracle = oracles::top_singular_value(R.data(), 8, 8);
    CHECK(std::abs(s100 - oracle) / oracle < 1e-4);

    // one step repeated 100 times converges to the same limit
    double s_incr = 0.0;
    for (int i = 0; i < 100; ++i) s_incr = power_iteration(R, u3, 1);
    CHECK(std::abs(s_incr - oracle) / oracle < 1e-4);

    // zero matrix
    std::vector<double> uz = {1.0, 0.0};
    CHECK(power_iteration(Tensor::zeros({2, 3}), uz, 5) == 0.0);
}
