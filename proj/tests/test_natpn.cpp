#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dumlab/natpn.hpp"
#include "dumlab/special.hpp"
#include "oracles.hpp"

using namespace dumlab;

namespace {

// Marsaglia-Tsang gamma sampler, shape a >= 1
double sample_gamma(double a, Rng& rng) {
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

std::vector<double> sample_dirichlet(const std::vector<double>& alpha, Rng& rng) {
    std::vector<double> g(alpha.size());
    double s = 0.0;
    for (size_t i = 0; i < alpha.size(); ++i) s += g[i] = sample_gamma(alpha[i], rng);
    for (double& v : g) v /= s;
    return g;
}

double dirichlet_logpdf(const std::vector<double>& alpha, const std::vector<double>& theta) {
    double a0 = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    double lp = std::lgamma(a0);
    for (size_t i = 0; i < alpha.size(); ++i)
        lp += (alpha[i] - 1.0) * std::log(theta[i]) - std::lgamma(alpha[i]);
    return lp;
}

PriorConfig uniform_prior(size_t C) {
    PriorConfig p;
    p.resolve(C);
    return p;
}

}  // namespace

TEST_CASE("evidence budget algebra and clamp") {
    BudgetConfig dim;  // H=2: log N_H = log(4 pi)
    Tensor lp({1}, {-std::log(4.0 * M_PI)});
    CHECK(evidence(lp, dim, 2).item() == doctest::Approx(1.0).epsilon(1e-12));

    BudgetConfig constant;
    constant.mode = BudgetMode::Constant;
    constant.constant_value = 1000.0;
    CHECK(evidence(Tensor({1}, {0.0}), constant, 2).item() == doctest::Approx(1000.0));

    // log N_H + log_prob = 40 clamps at e^30
    constant.constant_value = std::exp(10.0);
    Tensor big = evidence(Tensor({1}, {30.0}), constant, 2);
    CHECK(std::isfinite(big.item()));
    CHECK(big.item() == doctest::Approx(std::exp(30.0)));
}

TEST_CASE("bayesian update hand example and identities") {
    PriorConfig prior = uniform_prior(2);  // n_prior = 2, chi = (1/2, 1/2)
    Tensor chi_i({1, 2}, {1.0, 0.0});
    Tensor n_i({1}, {2.0});
    EvidentialPosterior post = bayesian_update(chi_i, n_i, prior);
    CHECK(post.alpha.at(0, 0) == doctest::Approx(3.0));
    CHECK(post.alpha.at(0, 1) == doctest::Approx(1.0));
    CHECK(post.n_post.item() == doctest::Approx(4.0));
    CHECK(post.chi_post.at(0, 0) == doctest::Approx(0.75));
    CHECK(post.chi_post.at(0, 1) == doctest::Approx(0.25));

    // n_i = 0 returns the prior, for random priors
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t C = 2 + rng.integer(5);
        PriorConfig p;
        p.n_prior = 0.1 + 10.0 * rng.uniform();
        double s = 0.0;
        for (size_t c = 0; c < C; ++c) s += *p.chi_prior.insert(p.chi_prior.end(), 0.05 + rng.uniform());
        for (double& v : p.chi_prior) v /= s;
        p.resolve(C);
        Tensor chi = softmax(Tensor::randn({3, C}, rng));
        EvidentialPosterior id = bayesian_update(chi, Tensor({3}, 0.0), p);
        for (size_t i = 0; i < 3; ++i) {
            CHECK(id.n_post.data()[i] == doctest::Approx(p.n_prior).epsilon(1e-12));
            for (size_t c = 0; c < C; ++c)
                CHECK(id.chi_post.at(i, c) == doctest::Approx(p.chi_prior[c]).epsilon(1e-12));
        }
        // alpha row sums equal n_post within 1e-9 for generic evidence too
        Tensor ni({3}, {0.3, 7.0, 123.4});
        EvidentialPosterior gen = bayesian_update(chi, ni, p);
        for (size_t i = 0; i < 3; ++i) {
            double row = 0.0;
            for (size_t c = 0; c < C; ++c) row += gen.alpha.at(i, c);
            CHECK(std::abs(row - gen.n_post.data()[i]) < 1e-9);
        }
    }

    // huge evidence converges to chi_i
    EvidentialPosterior lim = bayesian_update(chi_i, Tensor({1}, {1e9}), prior);
    CHECK(std::abs(lim.chi_post.at(0, 0) - 1.0) < 1e-6);
    CHECK(std::abs(lim.chi_post.at(0, 1) - 0.0) < 1e-6);
}

TEST_CASE("bayesian loss closed-form values") {
    // lambda=0, alpha all ones: loss = -(psi(1) - psi(C))
    for (size_t C : {2ul, 5ul}) {
        EvidentialPosterior post;
        post.alpha = Tensor({3, C}, 1.0);
        post.n_post = Tensor({3}, static_cast<double>(C));
        post.chi_post = Tensor({3, C}, 1.0 / C);
        const double expect = -(digamma(1.0) - digamma(static_cast<double>(C)));
        CHECK(bayesian_loss(post, {0, 1, 0}, 0.0).item() == doctest::Approx(expect).epsilon(1e-10));
        if (C == 2) CHECK(bayesian_loss(post, {1, 1, 0}, 0.0).item() == doctest::Approx(1.0).epsilon(1e-10));
    }

    EvidentialPosterior bad;
    bad.alpha = Tensor({1, 2}, {1.0, -0.5});
    CHECK_THROWS_AS(bayesian_loss(bad, {0}, 0.0), DomainError);
}

TEST_CASE("dirichlet entropy against a Monte-Carlo oracle") {
    const std::vector<double> alpha = {2.0, 3.0, 4.0};
    const double closed = dirichlet_entropy(Tensor({1, 3}, std::vector<double>(alpha))).item();

    Rng rng(777);
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double nll = -dirichlet_logpdf(alpha, sample_dirichlet(alpha, rng));
        s += nll;
        s2 += nll * nll;
    }
    const double mc = s / n;
    const double se = std::sqrt((s2 / n - mc * mc) / n);
    CHECK(std::abs(closed - mc) < 3.0 * se);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(9);
    // through the update: chi_i (via softmax of logits) and n_i (via softplus)
    Tensor logits = Tensor::randn({4, 3}, rng, 1.0, true);
    Tensor raw_n = Tensor::randn({4}, rng, 1.0, true);
    PriorConfig prior = uniform_prior(3);
    std::vector<size_t> y = {0, 2, 1, 1};
    auto loss = [&] {
        EvidentialPosterior post = bayesian_update(softmax(logits), softplus(raw_n), prior);
        return bayesian_loss(post, y, 0.3);
    };
    CHECK(oracles::max_grad_error(loss, {logits, raw_n}) < 1e-4);

    // directly w.r.t. alpha
    Tensor alpha({2, 3}, {2.0, 0.7, 1.4, 5.0, 3.2, 0.9});
    alpha.set_requires_grad(true);
    auto direct = [&] {
        EvidentialPosterior post;
        post.alpha = alpha;
        return bayesian_loss(post, {1, 0}, 0.5);
    };
    CHECK(oracles::max_grad_error(direct, {alpha}) < 1e-4);
}

TEST_CASE("uncertainty scores") {
    EvidentialPosterior post;
    post.alpha = Tensor({1, 2}, {10.0, 1.0});
    post.n_post = Tensor({1}, {11.0});
    UncertaintyScores s = scores(post);
    CHECK(s.labels[0] == 0);
    const double p0 = 10.0 / 11.0, p1 = 1.0 / 11.0;
    CHECK(s.predictive_entropy.item() == doctest::Approx(-(p0 * std::log(p0) + p1 * std::log(p1))).epsilon(1e-9));
    CHECK(s.predictive_entropy.item() == doctest::Approx(0.3046).epsilon(1e-3));
    CHECK(s.aleatoric.item() == s.predictive_entropy.item());

    for (double k : {0.5, 1.0, 7.0}) {
        EvidentialPosterior sym;
        sym.alpha = Tensor({1, 3}, k);
        sym.n_post = Tensor({1}, {3.0 * k});
        CHECK(scores(sym).predictive_entropy.item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    }

    // alpha -> 2 alpha: same label and entropy, doubled n_post
    EvidentialPosterior twice;
    twice.alpha = mul_scalar(post.alpha, 2.0);
    twice.n_post = mul_scalar(post.n_post, 2.0);
    UncertaintyScores s2 = scores(twice);
    CHECK(s2.labels[0] == s.labels[0]);
    CHECK(s2.predictive_entropy.item() == doctest::Approx(s.predictive_entropy.item()).epsilon(1e-12));
    CHECK(s2.epistemic.item() == doctest::Approx(2.0 * s.epistemic.item()));
}

TEST_CASE("entropy regularization pulls the loss optimum toward uniform") {
    // one-parameter family alpha(t) = (1 + 9t, 1, 1), label 0
    auto optimum_entropy = [](double lambda) {
        double best_loss = 1e300, best_entropy = 0.0;
        for (int k = 0; k <= 1000; ++k) {
            const double t = k / 1000.0;
            EvidentialPosterior post;
            post.alpha = Tensor({1, 3}, {1.0 + 9.0 * t, 1.0, 1.0});
            const double loss = bayesian_loss(post, {0}, lambda).item();
            if (loss < best_loss) {
                best_loss = loss;
                best_entropy = dirichlet_entropy(post.alpha).item();
            }
        }
        return best_entropy;
    };
    const double e0 = optimum_entropy(0.0);
    const double e1 = optimum_entropy(0.2);
    const double e2 = optimum_entropy(1.0);
    CHECK(e1 >= e0);
    CHECK(e2 >= e1);
}

TEST_CASE("epistemic ranking is invariant to the budget scale") {
    RadialFlowStack flow(2, 4, 31);
    Rng rng(32);
    Tensor z = Tensor::randn({50, 2}, rng, 2.0);
    Tensor lp = flow.log_prob(z);

    auto ranking = [&](double budget_value) {
        BudgetConfig b;
        b.mode = BudgetMode::Constant;
        b.constant_value = budget_value;
        Tensor n_i = evidence(lp, b, 2);
        std::vector<size_t> order(50);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t c) { return n_i.data()[a] < n_i.data()[c]; });
        return order;
    };
    CHECK(ranking(1.0) == ranking(100.0));
    CHECK(ranking(1.0) == ranking(0.01));
}

TEST_CASE("natpn head forward and checkpoint") {
    NatpnHead head(2, 3, 4, PriorConfig{}, BudgetConfig{}, 41);
    Rng rng(42);
    Tensor z = Tensor::randn({6, 2}, rng);
    EvidentialPosterior post = head.forward(z);
    CHECK(post.alpha.shape() == Shape{6, 3});
    for (double v : post.alpha.data()) CHECK(v > 0.0);
    for (size_t i = 0; i < 6; ++i) CHECK(post.n_post.data()[i] > 3.0);  // prior floor

    // gradcheck through the whole head
    Tensor zg = Tensor::randn({4, 2}, rng, 1.0, true);
    std::vector<Tensor> params = head.parameters();
    params.push_back(zg);
    auto loss = [&] { return bayesian_loss(head.forward(zg), {0, 1, 2, 0}, 0.1); };
    CHECK(oracles::max_grad_error(loss, params) < 1e-4);

    const std::string dumped = head.to_json().dump();
    NatpnHead loaded = NatpnHead::from_json(nlohmann::json::parse(dumped));
    EvidentialPosterior a = head.forward(z), b = loaded.forward(z);
    CHECK(a.alpha.data() == b.alpha.data());
    CHECK(loaded.to_json().dump() == dumped);
}
