#include <cmath>

#include "doctest.h"
#include "dumlab/flows.hpp"
#include "dumlab/metrics.hpp"
#include "oracles.hpp"

using namespace dumlab;
using namespace dumlab::eval;

TEST_CASE("accuracy") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(accuracy({1, 2, 3}, {0, 0, 0}) == 0.0);
    CHECK(accuracy({0, 1, 1, 0}, {0, 1, 0, 0}) == doctest::Approx(0.75));
    // permutation invariance when both arrays move together (reversal)
    CHECK(accuracy({1, 0, 0, 1}, {0, 0, 1, 1}) == accuracy({1, 0, 0, 1}, {1, 1, 0, 0}));
    CHECK_THROWS_AS(accuracy({1}, {1, 2}), ShapeError);
}

TEST_CASE("brier score") {
    // one-hot correct prediction
    Tensor onehot({2, 3}, {1, 0, 0, 0, 0, 1});
    CHECK(brier(onehot, {0, 2}) == 0.0);
    // uniform binary prediction: (1/2)^2 + (1/2)^2 per sample
    Tensor uniform({4, 2}, 0.5);
    CHECK(brier(uniform, {0, 1, 0, 1}) == doctest::Approx(0.5));

    // random probabilities vs the naive loop, and batch-order invariance
    Rng rng(1);
    const size_t n = 30, c = 4;
    Tensor probs = softmax(Tensor::randn({n, c}, rng));
    std::vector<size_t> y(n);
    for (size_t i = 0; i < n; ++i) y[i] = rng.integer(c);
    double naive = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) {
            const double d = probs.at(i, j) - (y[i] == j ? 1.0 : 0.0);
            naive += d * d;
        }
    CHECK(brier(probs, y) == doctest::Approx(naive / n).epsilon(1e-12));

    std::vector<size_t> rev(n);
    std::vector<double> rp(n * c);
    for (size_t i = 0; i < n; ++i) {
        rev[i] = y[n - 1 - i];
        for (size_t j = 0; j < c; ++j) rp[i * c + j] = probs.at(n - 1 - i, j);
    }
    CHECK(brier(Tensor({n, c}, rp), rev) == doctest::Approx(brier(probs, y)).epsilon(1e-12));

    // a wrong confident prediction is worse than the uniform one
    Tensor confident({1, 2}, {0.99, 0.01});
    Tensor hedged({1, 2}, {0.5, 0.5});
    CHECK(brier(hedged, {1}) < brier(confident, {1}));

    Tensor off({1, 2}, {0.6, 0.6});
    CHECK_THROWS_AS(brier(off, {0}), DomainError);
}

TEST_CASE("auroc basics and oracle equality") {
    CHECK(auroc({0.0, 0.0}, {1.0, 1.0}) == 1.0);
    CHECK(auroc({1.0, 1.0}, {0.0, 0.0}) == 0.0);
    CHECK(auroc({0.3, 0.3, 0.3}, {0.3, 0.3}) == 0.5);  // all ties

    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 1 + rng.integer(50), m = 1 + rng.integer(50);
        std::vector<double> id(n), ood(m);
        // coarse quantization forces plenty of ties
        for (double& v : id) v = std::floor(rng.uniform(-3.0, 3.0) * 4.0) / 4.0;
        for (double& v : ood) v = std::floor(rng.uniform(-2.0, 4.0) * 4.0) / 4.0;
        const double fast = auroc(id, ood);
        CHECK(fast == doctest::Approx(oracles::pairwise_auroc(id, ood)).epsilon(1e-12));
        CHECK(fast >= 0.0);
        CHECK(fast <= 1.0);

        // invariance under strictly increasing transforms
        auto mapped = [&](auto f) {
            std::vector<double> a(id), b(ood);
            for (double& v : a) v = f(v);
            for (double& v : b) v = f(v);
            return auroc(a, b);
        };
        CHECK(mapped([](double v) { return std::exp(v); }) == doctest::Approx(fast).epsilon(1e-12));
        CHECK(mapped([](double v) { return 3.0 * v - 7.0; }) == doctest::Approx(fast).epsilon(1e-12));

        // swapping roles mirrors the score
        CHECK(auroc(ood, id) == doctest::Approx(1.0 - fast).epsilon(1e-12));
    }
}

TEST_CASE("uncertainty grid export") {
    RadialFlowStack flow(2, 3, 3);
    GridExport g = uncertainty_grid([&](const Tensor& pts) { return flow.log_prob(pts); }, 6.0, 50);
    CHECK(g.values.size() == 2500);
    CHECK(g.resolution == 50);
    CHECK(g.x_min == -6.0);
    CHECK(g.x_max == 6.0);
    for (double v : g.values) CHECK(std::isfinite(v));

    const std::string csv = g.to_csv();
    CHECK(csv.substr(0, csv.find('\n')) == "x_min,x_max,y_min,y_max,resolution");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2503);

    // corner of the lattice really is (-extent, -extent)
    GridExport tiny = uncertainty_grid([](const Tensor& pts) { return sum(pts, 1); }, 2.0, 3);
    CHECK(tiny.values[0] == doctest::Approx(-4.0));
    CHECK(tiny.values[4] == doctest::Approx(0.0));   // center
    CHECK(tiny.values[8] == doctest::Approx(4.0));   // opposite corner
}

TEST_CASE("seed aggregation") {
    MetricSummary same = aggregate({3.5, 3.5, 3.5});
    CHECK(same.mean == 3.5);
    CHECK(same.std == 0.0);

    MetricSummary two = aggregate({70.0, 72.0});
    CHECK(two.mean == doctest::Approx(71.0));
    CHECK(two.std == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(two.render() == "71.00 ± 1.41");

    MetricSummary one = aggregate({71.12});
    CHECK(!one.has_std);
    CHECK(one.render() == "71.12");

    MetricSummary styled = aggregate({71.0, 71.24});
    CHECK(styled.render() == "71.12 ± 0.17");
}
