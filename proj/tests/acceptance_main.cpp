// Acceptance harness: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Thresholds marked "frozen" were measured once during
// bring-up and fixed as regression constants.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dumlab/data.hpp"
#include "dumlab/encoder.hpp"
#include "dumlab/experiment.hpp"
#include "dumlab/flows.hpp"
#include "dumlab/gp.hpp"
#include "dumlab/metrics.hpp"
#include "dumlab/natpn.hpp"
#include "dumlab/rng.hpp"
#include "dumlab/tensor.hpp"
#include "dumlab/trainer.hpp"
#include "oracles.hpp"

using namespace dumlab;
namespace fs = std::filesystem;

namespace {

bool g_all_pass = true;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
    if (!ok) g_all_pass = false;
    std::printf("criterion %2d: %s  %s (%s)\n", id, ok ? "PASS" : "FAIL", what.c_str(),
                detail.c_str());
    std::fflush(stdout);
}

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

// minimal full-batch Adam for the self-contained fixtures
struct Adam {
    double lr;
    std::vector<std::vector<double>> m, v;
    int t = 0;
    Adam(const std::vector<Tensor>& params, double lr_) : lr(lr_) {
        for (const auto& p : params) {
            m.emplace_back(p.numel(), 0.0);
            v.emplace_back(p.numel(), 0.0);
        }
    }
    void step(std::vector<Tensor>& params) {
        ++t;
        const double bc1 = 1.0 - std::pow(0.9, t), bc2 = 1.0 - std::pow(0.999, t);
        for (size_t pi = 0; pi < params.size(); ++pi) {
            const auto& g = params[pi].grad();
            for (size_t i = 0; i < g.size(); ++i) {
                m[pi][i] = 0.9 * m[pi][i] + 0.1 * g[i];
                v[pi][i] = 0.999 * v[pi][i] + 0.001 * g[i] * g[i];
                params[pi].data()[i] -= lr * (m[pi][i] / bc1) / (std::sqrt(v[pi][i] / bc2) + 1e-8);
            }
        }
    }
};

// ---------------------------------------------------------------------------
// recipe access and experiment runs

fs::path recipe_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "dumlab_acceptance_recipes";
        fs::remove_all(d);
        if (emit_recipes(d.string()) != 0) throw ConfigError("cannot emit recipes for acceptance");
        return d;
    }();
    return dir;
}

ExperimentConfig recipe(const std::string& name) {
    return load_config((recipe_dir() / (name + ".json")).string());
}

using Metrics = std::map<std::string, double>;

Metrics seed_metrics(const ExperimentConfig& cfg, uint64_t seed) {
    SeedResult r = run_seed(cfg, seed, "");
    return Metrics(r.metrics.begin(), r.metrics.end());
}

// mean of one metric over a list of seeds
double mean_metric(const ExperimentConfig& cfg, const std::vector<uint64_t>& seeds,
                   const std::string& name, Metrics* last = nullptr) {
    double sum = 0.0;
    for (uint64_t s : seeds) {
        Metrics m = seed_metrics(cfg, s);
        sum += m.at(name);
        if (last) *last = std::move(m);
    }
    return sum / static_cast<double>(seeds.size());
}

// ---------------------------------------------------------------------------
// criterion 1: autodiff vs central finite differences

void criterion_1() {
    size_t cases = 0;
    double worst = 0.0;
    auto check = [&](const std::function<Tensor()>& loss, std::vector<Tensor> params) {
        worst = std::max(worst, oracles::max_grad_error(loss, params));
        ++cases;
    };

    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
        Tensor b = Tensor::randn({3, 4}, rng, 1.0, true);
        const std::vector<size_t> labels = {1, 3, 0};

        check([&] { return sum(square(add(a, b))); }, {a, b});
        check([&] { return sum(square(sub(a, b))); }, {a, b});
        check([&] { return sum(mul(a, b)); }, {a, b});
        check([&] { return sum(div(a, add_scalar(square(b), 1.0))); }, {a, b});
        check([&] { return sum(exp(mul_scalar(a, 0.3))); }, {a});
        check([&] { return sum(log(add_scalar(square(a), 0.5))); }, {a});
        check([&] { return sum(tanh(a)); }, {a});
        check([&] { return sum(sigmoid(a)); }, {a});
        check([&] { return sum(softplus(a)); }, {a});
        check([&] { return sum(mul(relu(a), b)); }, {a, b});
        check([&] { return sum(sqrt(add_scalar(square(a), 0.5))); }, {a});
        check([&] { return sum(pow(add_scalar(square(a), 0.5), 1.7)); }, {a});
        check([&] { return sum(lgamma(add_scalar(square(a), 0.5))); }, {a});
        check([&] { return sum(digamma(add_scalar(square(a), 0.5))); }, {a});
        check([&] { return sum(matmul(a, transpose(b))); }, {a, b});
        check([&] { return logsumexp(a); }, {a});
        check([&] { return sum(take_per_row(softmax(a), labels)); }, {a});
        check([&] { return sum(mul(clamp_max(a, 0.5), b)); }, {a, b});
        check([&] { return mean(mul(sum(a, 1), mean(b, 1))); }, {a, b});
        check([&] { return sum(mul(logsumexp(a, 1), mean(b, 1))); }, {a, b});
    }

    // end-to-end: encoder plus each head loss, including a reconstruction term
    for (uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(100 + seed);
        Tensor X = Tensor::randn({6, 2}, rng);
        const std::vector<size_t> y = {0, 1, 0, 1, 1, 0};

        EncoderConfig ec;
        ec.input_dim = 2;
        ec.hidden_dim = 6;
        ec.num_layers = 2;
        ec.latent_dim = 2;
        ec.recon_lambda = seed == 0 ? 0.5 : 0.0;
        Encoder enc(ec, seed);
        NatpnHead head(2, 2, 2, {}, {}, seed + 1);
        NatpnTrainable trainable(head);
        auto loss_fn = [&] {
            auto fr = enc.forward(X, Mode::Train);
            Rng r(7);
            Tensor l = trainable.loss(fr.z, y, 6.0, r);
            if (fr.x_hat.defined())
                l = add(l, mul_scalar(reconstruction_loss(X, fr.x_hat), ec.recon_lambda));
            return l;
        };
        std::vector<Tensor> params = enc.parameters();
        for (auto& p : head.parameters()) params.push_back(p);
        // nudge off zero-initialized biases: a ReLU preactivation sitting
        // exactly on the kink makes central differences wrong by construction
        Rng nudge(seed + 55);
        for (auto& p : params)
            for (double& v : p.data()) v += (nudge.uniform() - 0.5) * 0.1;
        check(loss_fn, params);

        GpConfig gc;
        gc.latent_dim = 2;
        gc.num_classes = 2;
        gc.num_inducing = 4;
        GpHead gp(gc, seed + 2);
        auto gp_loss = [&] {
            auto fr = enc.forward(X, Mode::Train);
            Rng r(11);  // common random numbers keep the ELBO sample fixed
            return neg(gp.elbo(fr.z, y, 4, 6.0, r));
        };
        std::vector<Tensor> gp_params = enc.parameters();
        for (auto& p : gp.parameters()) gp_params.push_back(p);
        for (auto& p : gp_params)
            for (double& v : p.data()) v += (nudge.uniform() - 0.5) * 0.1;
        check(gp_loss, gp_params);
    }

    report(1, cases >= 100 && worst < 1e-4, "autodiff matches central finite differences",
           std::to_string(cases) + " cases, max rel err " + fmt(worst, "%.2e"));
}

// ---------------------------------------------------------------------------
// criterion 2: flow normalization and per-layer log-det

double determinant(std::vector<double> A, size_t n) {
    double det = 1.0;
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
        if (piv != col) {
            for (size_t c = 0; c < n; ++c) std::swap(A[col * n + c], A[piv * n + c]);
            det = -det;
        }
        det *= A[col * n + col];
        for (size_t r = col + 1; r < n; ++r) {
            const double f = A[r * n + col] / A[col * n + col];
            for (size_t c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
        }
    }
    return det;
}

void criterion_2() {
    // fit a 2-D stack to a two-lobe target so the quadrature exercises a
    // genuinely trained density, not the near-identity initialization
    Rng rng(21);
    const size_t n = 256;
    std::vector<double> pts(n * 2);
    for (size_t i = 0; i < n; ++i) {
        const double cx = (i % 2 == 0) ? -1.5 : 1.5;
        pts[2 * i] = cx + 0.6 * rng.normal();
        pts[2 * i + 1] = 0.6 * rng.normal();
    }
    Tensor Z({n, 2}, std::move(pts));
    RadialFlowStack flow(2, 6, 22);
    std::vector<Tensor> params = flow.parameters();
    Adam adam(params, 0.02);
    for (int step = 0; step < 300; ++step) {
        for (auto p : params) p.zero_grad();
        Tensor loss = fit_nll_loss(flow, Z);
        loss.backward();
        adam.step(params);
    }

    // 400^2 trapezoid quadrature of exp(log_prob) over [-10, 10]^2
    const size_t res = 400;
    const double lo = -10.0, hi = 10.0, h = (hi - lo) / static_cast<double>(res - 1);
    double integral = 0.0;
    for (size_t i = 0; i < res; ++i) {
        std::vector<double> row(res * 2);
        for (size_t j = 0; j < res; ++j) {
            row[2 * j] = lo + h * static_cast<double>(i);
            row[2 * j + 1] = lo + h * static_cast<double>(j);
        }
        Tensor lp = flow.log_prob(Tensor({res, 2}, std::move(row)));
        const double wi = (i == 0 || i == res - 1) ? 0.5 : 1.0;
        for (size_t j = 0; j < res; ++j) {
            const double wj = (j == 0 || j == res - 1) ? 0.5 : 1.0;
            integral += wi * wj * std::exp(lp.at(j));
        }
    }
    integral *= h * h;

    // per-layer log-det against a numerical Jacobian for H <= 4
    double worst_logdet = 0.0;
    for (size_t H = 1; H <= 4; ++H) {
        RadialFlowStack layer(H, 1, 30 + H);
        Rng prng(40 + H);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> z0(H);
            for (double& v : z0) v = prng.normal();
            Tensor z({1, H}, std::vector<double>(z0));
            const double reported = layer.transform(z).second.at(0);
            const double eps = 1e-6;
            std::vector<double> J(H * H);
            for (size_t d = 0; d < H; ++d) {
                std::vector<double> zp = z0, zm = z0;
                zp[d] += eps;
                zm[d] -= eps;
                Tensor fp = layer.transform(Tensor({1, H}, std::move(zp))).first;
                Tensor fm = layer.transform(Tensor({1, H}, std::move(zm))).first;
                for (size_t o = 0; o < H; ++o) J[o * H + d] = (fp.at(o) - fm.at(o)) / (2.0 * eps);
            }
            const double numeric = std::log(std::abs(determinant(J, H)));
            worst_logdet = std::max(worst_logdet, std::abs(numeric - reported));
        }
    }

    const bool ok = integral >= 0.99 && integral <= 1.01 && worst_logdet < 1e-5;
    report(2, ok, "trained flow normalizes and per-layer log-det matches numerical Jacobian",
           "integral " + fmt(integral, "%.5f") + ", max log-det err " + fmt(worst_logdet, "%.2e"));
}

// ---------------------------------------------------------------------------
// criterion 3: evidential identities and Dirichlet entropy Monte Carlo

double gamma_sample(Rng& rng, double shape) {
    if (shape < 1.0) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        const double x = rng.normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

void criterion_3() {
    const size_t C = 4;
    Rng rng(3);

    // zero evidence reproduces the prior exactly
    PriorConfig prior;
    prior.n_prior = 7.0;
    prior.chi_prior = {0.1, 0.2, 0.3, 0.4};
    Tensor chi({5, C}, 1.0 / static_cast<double>(C));
    EvidentialPosterior flat = bayesian_update(chi, Tensor::zeros({5}), prior);
    bool exact_prior = true;
    for (size_t i = 0; i < 5; ++i)
        for (size_t c = 0; c < C; ++c)
            exact_prior = exact_prior && flat.alpha.at(i, c) == prior.n_prior * prior.chi_prior[c];

    // concentration mass identity on random posteriors
    double worst_mass = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> logits(3 * C), ns(3);
        for (double& v : logits) v = rng.normal();
        for (double& v : ns) v = std::exp(2.0 * rng.normal());
        EvidentialPosterior post =
            bayesian_update(softmax(Tensor({3, C}, std::move(logits))), Tensor({3}, std::move(ns)),
                            prior);
        for (size_t i = 0; i < 3; ++i) {
            double mass = 0.0;
            for (size_t c = 0; c < C; ++c) mass += post.alpha.at(i, c);
            worst_mass = std::max(worst_mass, std::abs(mass - post.n_post.at(i)));
        }
    }

    // closed-form Dirichlet entropy vs 1e5-sample Monte Carlo, 3 standard errors
    const size_t S = 100000;
    double worst_sigma = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> alpha(C);
        for (double& a : alpha) a = rng.uniform(0.3, 5.0);
        double alpha0 = 0.0, log_beta = 0.0;
        for (double a : alpha) {
            alpha0 += a;
            log_beta += std::lgamma(a);
        }
        log_beta -= std::lgamma(alpha0);

        double sum = 0.0, sum2 = 0.0;
        for (size_t s = 0; s < S; ++s) {
            std::vector<double> g(C);
            double total = 0.0;
            for (size_t c = 0; c < C; ++c) {
                g[c] = gamma_sample(rng, alpha[c]);
                total += g[c];
            }
            double neg_log_pdf = log_beta;
            for (size_t c = 0; c < C; ++c) neg_log_pdf -= (alpha[c] - 1.0) * std::log(g[c] / total);
            sum += neg_log_pdf;
            sum2 += neg_log_pdf * neg_log_pdf;
        }
        const double mc = sum / static_cast<double>(S);
        const double se =
            std::sqrt((sum2 / static_cast<double>(S) - mc * mc) / static_cast<double>(S));
        const double analytic = dirichlet_entropy(Tensor({1, C}, std::move(alpha))).at(0);
        worst_sigma = std::max(worst_sigma, std::abs(analytic - mc) / se);
    }

    const bool ok = exact_prior && worst_mass < 1e-9 && worst_sigma < 3.0;
    report(3, ok, "evidential update identities and entropy Monte Carlo",
           "mass err " + fmt(worst_mass, "%.1e") + ", worst entropy deviation " +
               fmt(worst_sigma, "%.2f") + " sigma");
}

// ---------------------------------------------------------------------------
// criterion 4: SVGP with K = N matches exact GP regression

void criterion_4() {
    const size_t n = 20;
    Rng rng(13);
    std::vector<double> xs(n), ys(n);
    for (size_t i = 0; i < n; ++i) {
        xs[i] = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        ys[i] = std::sin(2.0 * xs[i]) + 0.05 * rng.normal();
    }
    Tensor X({n, 1}, std::vector<double>(xs));
    Tensor Y({n}, std::vector<double>(ys));
    const double noise = 0.05;

    GpConfig cfg;
    cfg.latent_dim = 1;
    cfg.num_classes = 1;
    cfg.num_inducing = n;
    GpHead head(cfg, 14);
    head.set_inducing(X);

    // whitened start: zero KL and the prior predictive, before any training
    const double init_kl = std::abs(head.kl().item());
    auto [mu0, var0] = head.predict_regression(X);
    double prior_err = 0.0;
    for (size_t i = 0; i < n; ++i) {
        prior_err = std::max(prior_err, std::abs(mu0.at(i)));
        prior_err = std::max(prior_err, std::abs(var0.at(i) - head.outputscale()));
    }

    // variational parameters only; kernel and inducing stay at the oracle's values
    std::vector<Tensor> trainable = {head.parameters()[3], head.parameters()[4]};
    Adam adam(trainable, 0.05);
    for (int step = 0; step < 1500; ++step) {
        for (auto p : trainable) p.zero_grad();
        Tensor loss = neg(head.elbo_regression(X, Y, noise, static_cast<double>(n)));
        loss.backward();
        adam.step(trainable);
    }

    KernelConfig kc;  // rbf, lengthscale 1, outputscale 1: matches the head init
    Tensor Kxx = kernel_eval(kc, X, X);
    std::vector<double> Kn = Kxx.data();
    for (size_t i = 0; i < n; ++i) Kn[i * n + i] += noise;
    std::vector<double> alpha = oracles::gauss_solve(Kn, ys);

    auto [mu, var] = head.predict_regression(X);
    double mse_mu = 0.0, mse_var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double exact_mu = 0.0;
        for (size_t j = 0; j < n; ++j) exact_mu += Kxx.at(i, j) * alpha[j];
        std::vector<double> col(n);
        for (size_t j = 0; j < n; ++j) col[j] = Kxx.at(j, i);
        std::vector<double> w = oracles::gauss_solve(Kn, col);
        double exact_var = Kxx.at(i, i);
        for (size_t j = 0; j < n; ++j) exact_var -= Kxx.at(j, i) * w[j];
        mse_mu += (mu.at(i) - exact_mu) * (mu.at(i) - exact_mu);
        mse_var += (var.at(i) - exact_var) * (var.at(i) - exact_var);
    }
    const double rmse_mu = std::sqrt(mse_mu / static_cast<double>(n));
    const double rmse_var = std::sqrt(mse_var / static_cast<double>(n));

    const bool ok = init_kl < 1e-12 && prior_err < 1e-9 && rmse_mu < 1e-3 && rmse_var < 1e-3;
    report(4, ok, "SVGP with K = N matches the exact GP oracle",
           "init KL " + fmt(init_kl, "%.1e") + ", mean RMSE " + fmt(rmse_mu, "%.1e") +
               ", var RMSE " + fmt(rmse_var, "%.1e"));
}

// ---------------------------------------------------------------------------
// criterion 5: AUROC against the pairwise oracle

void criterion_5() {
    Rng rng(5);
    double worst = 0.0, worst_mono = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const size_t ni = 1 + static_cast<size_t>(rng.uniform() * 30);
        const size_t no = 1 + static_cast<size_t>(rng.uniform() * 30);
        std::vector<double> id(ni), ood(no);
        // half-integer grid forces plenty of exact ties
        for (double& v : id) v = std::floor(rng.uniform() * 10.0) / 2.0;
        for (double& v : ood) v = std::floor(rng.uniform() * 10.0) / 2.0 + (trial % 2);
        const double fast = eval::auroc(id, ood);
        worst = std::max(worst, std::abs(fast - oracles::pairwise_auroc(id, ood)));

        auto monotone = [](std::vector<double> v) {
            for (double& x : v) x = x * x * x + 2.0 * x;  // strictly increasing
            return v;
        };
        worst_mono = std::max(worst_mono, std::abs(fast - eval::auroc(monotone(id), monotone(ood))));
    }
    report(5, worst < 1e-12 && worst_mono < 1e-12,
           "rank AUROC equals the pairwise oracle and is transform invariant",
           "max err " + fmt(worst, "%.1e") + ", transform err " + fmt(worst_mono, "%.1e"));
}

// ---------------------------------------------------------------------------
// criterion 6: feature collapse on the two-Gaussian toy

void criterion_6() {
    ExperimentConfig base = recipe("toy_collapse_natpn");
    base.checkpoints = false;
    base.eval.grid_export = false;
    const std::vector<uint64_t> seeds = {0, 1, 2, 3};

    struct Variant {
        double ratio = 0.0, auroc = 0.0;
    };
    auto run_variant = [&](Constraint c, double lip, double recon) {
        ExperimentConfig cfg = base;
        cfg.encoder.constraint = c;
        cfg.encoder.lipschitz_c = lip;
        cfg.encoder.recon_lambda = recon;
        Variant v;
        for (uint64_t s : seeds) {
            Metrics m = seed_metrics(cfg, s);
            v.ratio += m.at("latent_variance_ratio");
            v.auroc += m.at("auroc_epistemic_far_grid");
        }
        v.ratio /= static_cast<double>(seeds.size());
        v.auroc /= static_cast<double>(seeds.size());
        return v;
    };

    Variant none = run_variant(Constraint::None, 1.0, 0.0);
    std::vector<Variant> bilip;
    for (double c : {1.0, 2.0, 5.0}) bilip.push_back(run_variant(Constraint::Bilipschitz, c, 0.0));
    std::vector<Variant> recon;
    for (double lam : {0.1, 1.0}) recon.push_back(run_variant(Constraint::None, 1.0, lam));

    bool ratio_ok = true;
    double min_bilip_ratio = 1.0, best_bilip_auroc = 0.0;
    for (const Variant& v : bilip) {
        ratio_ok = ratio_ok && none.ratio < v.ratio;
        min_bilip_ratio = std::min(min_bilip_ratio, v.ratio);
        best_bilip_auroc = std::max(best_bilip_auroc, v.auroc);
    }
    // frozen bring-up constant: the spec-level 0.05 AUROC separation
    const bool auroc_ok = best_bilip_auroc - none.auroc >= 0.05;
    bool recon_ok = true;
    for (const Variant& v : recon) recon_ok = recon_ok && v.ratio < min_bilip_ratio;

    report(6, ratio_ok && auroc_ok && recon_ok,
           "unconstrained encoders collapse; bi-Lipschitz prevents it, reconstruction does not",
           "ratio none " + fmt(none.ratio) + " vs bilip min " + fmt(min_bilip_ratio) +
               ", far-grid AUROC gap " + fmt(best_bilip_auroc - none.auroc) + ", recon ratios " +
               fmt(recon[0].ratio) + "/" + fmt(recon[1].ratio));
}

// ---------------------------------------------------------------------------
// criteria 7 and 8: training-scheme direction and OODom saturation

void criteria_7_8() {
    const std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
    auto study = [&](const std::string& name) {
        ExperimentConfig cfg = recipe(name);
        cfg.checkpoints = false;
        double acc = 0.0, kana = 0.0, oodom = 0.0;
        for (uint64_t s : seeds) {
            Metrics m = seed_metrics(cfg, s);
            acc += m.at("accuracy");
            kana += m.at("auroc_epistemic_kana");
            oodom += m.at("auroc_epistemic_oodom");
        }
        const double n = static_cast<double>(seeds.size());
        return std::array<double, 3>{acc / n, kana / n, oodom / n};
    };
    auto joint = study("mnist_joint_none");
    auto sequential = study("mnist_sequential_none");

    const bool ok7 = joint[1] >= sequential[1] && joint[0] >= 0.95 && sequential[0] >= 0.95;
    report(7, ok7, "joint training beats sequential on epistemic OOD detection",
           "kana AUROC joint " + fmt(joint[1]) + " vs sequential " + fmt(sequential[1]) +
               ", accuracy " + fmt(joint[0]) + "/" + fmt(sequential[0]));

    const bool ok8 = joint[2] >= 0.99 && sequential[2] >= 0.99;
    report(8, ok8, "out-of-domain inputs are detected with near-certainty",
           "oodom AUROC joint " + fmt(joint[2]) + ", sequential " + fmt(sequential[2]));
}

// ---------------------------------------------------------------------------
// criterion 9: insensitivity to the evidential prior, sensitivity to lambda

void criterion_9() {
    ExperimentConfig base = recipe("mnist_joint_none");
    base.checkpoints = false;

    std::vector<double> accs, preds;
    double entropy_lambda0 = 0.0;
    for (double np : {10.0, 100.0, 1000.0}) {
        for (double lam : {0.0, 1e-5, 1e-3}) {
            ExperimentConfig cfg = base;
            cfg.head.n_prior = np;
            cfg.head.entropy_lambda = lam;
            Metrics m = seed_metrics(cfg, 0);
            accs.push_back(m.at("accuracy"));
            preds.push_back(m.at("auroc_predictive_kana"));
            if (np == 10.0 && lam == 0.0) entropy_lambda0 = m.at("mean_posterior_entropy");
        }
    }
    const double acc_spread = *std::max_element(accs.begin(), accs.end()) -
                              *std::min_element(accs.begin(), accs.end());
    const double pred_spread = *std::max_element(preds.begin(), preds.end()) -
                               *std::min_element(preds.begin(), preds.end());

    ExperimentConfig strong = base;
    strong.head.n_prior = 10.0;
    strong.head.entropy_lambda = 0.1;
    const double entropy_strong = seed_metrics(strong, 0).at("mean_posterior_entropy");

    const bool ok = acc_spread < 0.02 && pred_spread < 0.05 && entropy_strong > entropy_lambda0;
    report(9, ok, "prior scale and small lambda barely move results; lambda 0.1 flattens posteriors",
           "acc spread " + fmt(acc_spread) + ", pred AUROC spread " + fmt(pred_spread) +
               ", entropy " + fmt(entropy_lambda0) + " -> " + fmt(entropy_strong));
}

// ---------------------------------------------------------------------------
// criterion 10: kernel choice barely moves toy accuracy

void criterion_10() {
    ExperimentConfig base = recipe("toy_collapse_due");
    base.checkpoints = false;
    base.eval.grid_export = false;
    const std::vector<uint64_t> seeds = {0, 1};

    std::vector<double> accs;
    for (KernelFamily f : {KernelFamily::Rbf, KernelFamily::Rq, KernelFamily::Matern12,
                           KernelFamily::Matern32, KernelFamily::Matern52}) {
        ExperimentConfig cfg = base;
        cfg.head.kernel.family = f;
        accs.push_back(mean_metric(cfg, seeds, "accuracy"));
    }
    const double spread = *std::max_element(accs.begin(), accs.end()) -
                          *std::min_element(accs.begin(), accs.end());
    report(10, spread < 0.02, "all five kernels land in a 2-point accuracy band",
           "spread " + fmt(spread) + ", min " + fmt(*std::min_element(accs.begin(), accs.end())));
}

// ---------------------------------------------------------------------------
// criterion 11: bit-identical re-runs

void criterion_11() {
    ExperimentConfig cfg = recipe("toy_collapse_natpn");
    cfg.dataset.toy.per_class = 60;
    cfg.dataset.toy.grid_resolution = 12;
    for (auto& phase : cfg.train.phases) phase.epochs = 5;
    cfg.seeds = {0, 1};
    cfg.checkpoints = true;

    auto run_into = [&](const std::string& tag) {
        const fs::path dir = fs::temp_directory_path() / ("dumlab_acceptance_" + tag);
        fs::remove_all(dir);
        fs::create_directories(dir);
        for (uint64_t s : cfg.seeds) run_seed(cfg, s, dir.string());
        return dir;
    };
    const fs::path a = run_into("det_a"), b = run_into("det_b");

    bool identical = true;
    std::string mismatch = "none";
    for (const auto& entry : fs::directory_iterator(a)) {
        std::ifstream fa(entry.path(), std::ios::binary);
        std::ifstream fb(b / entry.path().filename(), std::ios::binary);
        std::ostringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        if (!fb || sa.str() != sb.str()) {
            identical = false;
            mismatch = entry.path().filename().string();
        }
    }
    fs::remove_all(a);
    fs::remove_all(b);
    report(11, identical, "re-running a config with the same seed is bit identical",
           "first mismatch: " + mismatch);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criteria_7_8();
    criterion_9();
    criterion_10();
    criterion_11();
    std::printf("%s\n", g_all_pass ? "all criteria passed" : "some criteria FAILED");
    return g_all_pass ? 0 : 1;
}
