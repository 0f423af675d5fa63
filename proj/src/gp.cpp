#include "dumlab/gp.hpp"

#include <cmath>

#include "dumlab/linalg.hpp"
#include "dumlab/serialize.hpp"

namespace dumlab {

namespace {
constexpr double kSoftplusUnit = 0.5413248546129181;  // softplus(x) = 1

double inverse_softplus(double v) {
    if (v <= 0.0) throw ConfigError("softplus-positive parameter must start positive");
    return std::log(std::expm1(v));
}
}  // namespace

std::string kernel_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::Rbf: return "rbf";
        case KernelFamily::Rq: return "rq";
        case KernelFamily::Matern12: return "matern12";
        case KernelFamily::Matern32: return "matern32";
        case KernelFamily::Matern52: return "matern52";
    }
    throw ConfigError("unknown kernel family");
}

KernelFamily kernel_from_name(const std::string& s) {
    if (s == "rbf") return KernelFamily::Rbf;
    if (s == "rq") return KernelFamily::Rq;
    if (s == "matern12") return KernelFamily::Matern12;
    if (s == "matern32") return KernelFamily::Matern32;
    if (s == "matern52") return KernelFamily::Matern52;
    throw ConfigError("unknown kernel family: " + s);
}

void KernelConfig::validate() const {
    if (lengthscale <= 0.0 || outputscale <= 0.0 || rq_alpha <= 0.0)
        throw ConfigError("kernel hyperparameters must be positive");
}

Tensor kernel_gram(KernelFamily family, const Tensor& lengthscale, const Tensor& outputscale,
                   double rq_alpha, const Tensor& A, const Tensor& B) {
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols())
        throw ShapeError("kernel_gram expects n x H and m x H");
    const size_t n = A.rows();
    // squared distances via the expansion ||a||^2 + ||b||^2 - 2 a.b, floored
    // at zero against round-off
    Tensor cross2 = mul_scalar(matmul(A, transpose(B)), 2.0);
    Tensor r2 = relu(add(reshape(sum(square(A), 1), {n, 1}), sub(sum(square(B), 1), cross2)));

    switch (family) {
        case KernelFamily::Rbf:
            return mul(outputscale, exp(neg(div(r2, mul_scalar(square(lengthscale), 2.0)))));
        case KernelFamily::Rq: {
            Tensor base = add_scalar(div(r2, mul_scalar(square(lengthscale), 2.0 * rq_alpha)), 1.0);
            return mul(outputscale, pow(base, -rq_alpha));
        }
        default: break;
    }
    Tensor t = div(sqrt(add_scalar(r2, 1e-12)), lengthscale);
    if (family == KernelFamily::Matern12) return mul(outputscale, exp(neg(t)));
    if (family == KernelFamily::Matern32) {
        Tensor u = mul_scalar(t, std::sqrt(3.0));
        return mul(outputscale, mul(add_scalar(u, 1.0), exp(neg(u))));
    }
    Tensor u = mul_scalar(t, std::sqrt(5.0));
    Tensor poly = add(add_scalar(u, 1.0), mul_scalar(square(t), 5.0 / 3.0));
    return mul(outputscale, mul(poly, exp(neg(u))));
}

Tensor kernel_eval(const KernelConfig& cfg, const Tensor& A, const Tensor& B) {
    cfg.validate();
    return kernel_gram(cfg.family, Tensor::scalar(cfg.lengthscale), Tensor::scalar(cfg.outputscale),
                       cfg.rq_alpha, A, B);
}

Tensor init_inducing(const Tensor& z_sample, size_t num_inducing, uint64_t seed) {
    if (z_sample.rank() != 2) throw ShapeError("init_inducing expects M x H");
    const size_t m = z_sample.rows(), h = z_sample.cols();
    if (m < num_inducing) throw ConfigError("init_inducing needs at least K sample points");
    Rng rng(seed);
    std::vector<size_t> perm = rng.permutation(m);
    std::vector<double> centers(num_inducing * h);
    for (size_t k = 0; k < num_inducing; ++k)
        std::copy_n(z_sample.data().data() + perm[k] * h, h, centers.data() + k * h);

    std::vector<size_t> assign(m);
    for (int iter = 0; iter < 10; ++iter) {
        for (size_t i = 0; i < m; ++i) {
            size_t best = 0;
            double best_d = 1e300;
            for (size_t k = 0; k < num_inducing; ++k) {
                double d = 0.0;
                for (size_t j = 0; j < h; ++j) {
                    const double diff = z_sample.data()[i * h + j] - centers[k * h + j];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            assign[i] = best;
        }
        std::vector<double> sums(num_inducing * h, 0.0);
        std::vector<size_t> counts(num_inducing, 0);
        for (size_t i = 0; i < m; ++i) {
            counts[assign[i]]++;
            for (size_t j = 0; j < h; ++j) sums[assign[i] * h + j] += z_sample.data()[i * h + j];
        }
        for (size_t k = 0; k < num_inducing; ++k)
            if (counts[k] > 0)
                for (size_t j = 0; j < h; ++j) centers[k * h + j] = sums[k * h + j] / counts[k];
    }
    return Tensor({num_inducing, h}, std::move(centers));
}

void GpConfig::validate() const {
    if (latent_dim == 0 || num_classes == 0 || num_inducing == 0)
        throw ConfigError("gp dimensions must be positive");
    if (init_lengthscale <= 0.0 || init_outputscale <= 0.0 || rq_alpha <= 0.0)
        throw ConfigError("gp kernel init values must be positive");
    if (jitter < 0.0) throw ConfigError("jitter must be nonnegative");
}

nlohmann::json GpConfig::to_json() const {
    return {{"latent_dim", latent_dim},
            {"num_classes", num_classes},
            {"num_inducing", num_inducing},
            {"kernel", kernel_name(kernel)},
            {"rq_alpha", rq_alpha},
            {"init_lengthscale", init_lengthscale},
            {"init_outputscale", init_outputscale},
            {"jitter", jitter},
            {"train_samples", train_samples},
            {"eval_samples", eval_samples}};
}

GpConfig GpConfig::from_json(const nlohmann::json& j) {
    GpConfig c;
    c.latent_dim = j.at("latent_dim").get<size_t>();
    c.num_classes = j.at("num_classes").get<size_t>();
    c.num_inducing = j.at("num_inducing").get<size_t>();
    c.kernel = kernel_from_name(j.at("kernel").get<std::string>());
    c.rq_alpha = j.at("rq_alpha").get<double>();
    c.init_lengthscale = j.at("init_lengthscale").get<double>();
    c.init_outputscale = j.at("init_outputscale").get<double>();
    c.jitter = j.at("jitter").get<double>();
    c.train_samples = j.at("train_samples").get<size_t>();
    c.eval_samples = j.at("eval_samples").get<size_t>();
    c.validate();
    return c;
}

GpHead::GpHead(GpConfig config, uint64_t seed) : config_(config) {
    config_.validate();
    const size_t K = config_.num_inducing;
    Rng rng(seed);
    Z_ = Tensor::randn({K, config_.latent_dim}, rng, 1.0, true);
    for (size_t c = 0; c < config_.num_classes; ++c) {
        m_.push_back(Tensor::zeros({K}, true));
        // softplus(diag) = 1 and zero off-diagonal: the whitened prior S = I
        std::vector<double> raw(K * K, 0.0);
        for (size_t k = 0; k < K; ++k) raw[k * K + k] = kSoftplusUnit;
        L_raw_.push_back(Tensor({K, K}, std::move(raw), true));
    }
    lengthscale_raw_ = Tensor::scalar(inverse_softplus(config_.init_lengthscale), true);
    outputscale_raw_ = Tensor::scalar(inverse_softplus(config_.init_outputscale), true);

    eye_mask_ = Tensor::eye(K);
    std::vector<double> strict(K * K, 0.0);
    for (size_t i = 0; i < K; ++i)
        for (size_t j = 0; j < i; ++j) strict[i * K + j] = 1.0;
    strict_lower_mask_ = Tensor({K, K}, std::move(strict));
}

void GpHead::set_inducing(const Tensor& Z) {
    if (Z.shape() != Shape{config_.num_inducing, config_.latent_dim})
        throw ShapeError("set_inducing shape mismatch");
    Z_ = Tensor(Z.shape(), Z.data(), true);
}

double GpHead::lengthscale() const { return softplus(lengthscale_raw_).item(); }
double GpHead::outputscale() const { return softplus(outputscale_raw_).item(); }

Tensor GpHead::variational_chol(size_t c) const {
    return add(mul(L_raw_[c], strict_lower_mask_), mul(softplus(L_raw_[c]), eye_mask_));
}

std::pair<std::vector<Tensor>, std::vector<Tensor>> GpHead::marginals(const Tensor& z) const {
    if (z.rank() != 2 || z.cols() != config_.latent_dim)
        throw ShapeError("gp head expects N x " + std::to_string(config_.latent_dim) + " latents");
    const size_t n = z.rows();
    Tensor ls = softplus(lengthscale_raw_);
    Tensor os = softplus(outputscale_raw_);

    Tensor Kzz = kernel_gram(config_.kernel, ls, os, config_.rq_alpha, Z_, Z_);
    Tensor L = cholesky(Kzz, config_.jitter).L;
    Tensor Kzx = kernel_gram(config_.kernel, ls, os, config_.rq_alpha, Z_, z);  // K x N
    Tensor A = trisolve_lower(L, Kzx);                                          // K x N
    Tensor q = sum(square(A), 0);                                               // N
    Tensor kdiag = mul(Tensor::full({n}, 1.0), os);                             // k(z,z) = sigma^2

    std::vector<Tensor> mus, vars;
    for (size_t c = 0; c < config_.num_classes; ++c) {
        Tensor mu = reshape(matmul(transpose(A), reshape(m_[c], {config_.num_inducing, 1})), {n});
        Tensor T = matmul(transpose(variational_chol(c)), A);
        Tensor var = add(sub(kdiag, q), sum(square(T), 0));
        // floor against round-off; marginal variance must stay positive
        var = add_scalar(relu(add_scalar(var, -1e-10)), 1e-10);
        mus.push_back(mu);
        vars.push_back(var);
    }
    return {mus, vars};
}

GpHead::Prediction GpHead::predict(const Tensor& z) const {
    auto [mus, vars] = marginals(z);
    Prediction p;
    p.mu = stack_cols(mus);
    p.var = stack_cols(vars);
    p.probs = softmax(p.mu);
    return p;
}

Tensor GpHead::kl() const {
    const double K = static_cast<double>(config_.num_inducing);
    Tensor total = Tensor::scalar(0.0);
    for (size_t c = 0; c < config_.num_classes; ++c) {
        Tensor L = variational_chol(c);
        Tensor logdet = mul_scalar(sum(mul(log(softplus(L_raw_[c])), eye_mask_)), 2.0);
        Tensor term = sub(add(sum(square(m_[c])), sum(square(L))), add_scalar(logdet, K));
        total = add(total, mul_scalar(term, 0.5));
    }
    return total;
}

Tensor GpHead::elbo(const Tensor& z, const std::vector<size_t>& y, size_t num_samples, double n_total,
                    Rng& rng) const {
    if (num_samples < 1) throw ConfigError("elbo needs at least one sample");
    if (y.size() != z.rows()) throw ShapeError("elbo label count mismatch");
    const size_t n = z.rows();
    auto [mus, vars] = marginals(z);
    Tensor mu = stack_cols(mus);
    Tensor sd = sqrt(stack_cols(vars));

    Tensor acc = Tensor::zeros({n});
    for (size_t s = 0; s < num_samples; ++s) {
        Tensor eps = Tensor::randn({n, config_.num_classes}, rng);
        Tensor f = add(mu, mul(sd, eps));
        Tensor loglik = take_per_row(sub(f, reshape(logsumexp(f, 1), {n, 1})), y);
        acc = add(acc, loglik);
    }
    Tensor expected = mul_scalar(sum(acc), 1.0 / static_cast<double>(num_samples));
    return sub(mul_scalar(expected, n_total / static_cast<double>(n)), kl());
}

Tensor GpHead::elbo_regression(const Tensor& z, const Tensor& y, double noise_var, double n_total) const {
    const size_t n = z.rows();
    if (y.numel() != n) throw ShapeError("elbo_regression target count mismatch");
    auto [mus, vars] = marginals(z);
    // E_q[log N(y; f, noise)] = log N(y; mu, noise) - var / (2 noise)
    Tensor resid = square(sub(y, mus[0]));
    Tensor per_point = mul_scalar(add(resid, vars[0]), -0.5 / noise_var);
    per_point = add_scalar(per_point, -0.5 * std::log(2.0 * M_PI * noise_var));
    return sub(mul_scalar(sum(per_point), n_total / static_cast<double>(n)), kl());
}

std::pair<Tensor, Tensor> GpHead::predict_regression(const Tensor& z) const {
    auto [mus, vars] = marginals(z);
    return {mus[0], vars[0]};
}

std::vector<Tensor> GpHead::parameters() {
    std::vector<Tensor> params = {Z_, lengthscale_raw_, outputscale_raw_};
    for (auto& m : m_) params.push_back(m);
    for (auto& l : L_raw_) params.push_back(l);
    return params;
}

nlohmann::json GpHead::to_json() const {
    nlohmann::json j;
    j["config"] = config_.to_json();
    j["Z"] = tensor_to_json(Z_);
    j["lengthscale_raw"] = tensor_to_json(lengthscale_raw_);
    j["outputscale_raw"] = tensor_to_json(outputscale_raw_);
    j["m"] = nlohmann::json::array();
    j["L_raw"] = nlohmann::json::array();
    for (size_t c = 0; c < config_.num_classes; ++c) {
        j["m"].push_back(tensor_to_json(m_[c]));
        j["L_raw"].push_back(tensor_to_json(L_raw_[c]));
    }
    return j;
}

GpHead GpHead::from_json(const nlohmann::json& j) {
    GpHead head(GpConfig::from_json(j.at("config")), 0);
    head.Z_ = tensor_from_json(j.at("Z"), true);
    head.lengthscale_raw_ = tensor_from_json(j.at("lengthscale_raw"), true);
    head.outputscale_raw_ = tensor_from_json(j.at("outputscale_raw"), true);
    head.m_.clear();
    head.L_raw_.clear();
    for (const auto& mj : j.at("m")) head.m_.push_back(tensor_from_json(mj, true));
    for (const auto& lj : j.at("L_raw")) head.L_raw_.push_back(tensor_from_json(lj, true));
    return head;
}

}  // namespace dumlab
