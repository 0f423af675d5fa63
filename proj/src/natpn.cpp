#include "dumlab/natpn.hpp"

#include <cmath>

#include "dumlab/serialize.hpp"

namespace dumlab {

void PriorConfig::resolve(size_t num_classes) {
    if (n_prior <= 0.0) n_prior = static_cast<double>(num_classes);
    if (chi_prior.empty()) chi_prior.assign(num_classes, 1.0 / static_cast<double>(num_classes));
    if (chi_prior.size() != num_classes)
        throw ConfigError("chi_prior has " + std::to_string(chi_prior.size()) + " entries, expected " +
                          std::to_string(num_classes));
    validate();
}

void PriorConfig::validate() const {
    if (n_prior <= 0.0) throw ConfigError("n_prior must be positive");
    if (entropy_lambda < 0.0) throw ConfigError("entropy_lambda must be nonnegative");
    double s = 0.0;
    for (double v : chi_prior) {
        if (v <= 0.0) throw ConfigError("chi_prior entries must be strictly positive");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("chi_prior must sum to 1");
}

nlohmann::json PriorConfig::to_json() const {
    return {{"n_prior", n_prior}, {"chi_prior", chi_prior}, {"entropy_lambda", entropy_lambda}};
}

PriorConfig PriorConfig::from_json(const nlohmann::json& j) {
    PriorConfig p;
    p.n_prior = j.at("n_prior").get<double>();
    p.chi_prior = j.at("chi_prior").get<std::vector<double>>();
    p.entropy_lambda = j.at("entropy_lambda").get<double>();
    return p;
}

double BudgetConfig::log_budget(size_t latent_dim) const {
    if (mode == BudgetMode::DimNormalized)
        return 0.5 * static_cast<double>(latent_dim) * std::log(4.0 * M_PI);
    if (constant_value <= 0.0) throw ConfigError("constant certainty budget must be positive");
    return std::log(constant_value);
}

nlohmann::json BudgetConfig::to_json() const {
    return {{"mode", mode == BudgetMode::DimNormalized ? "dim_normalized" : "constant"},
            {"constant_value", constant_value}};
}

BudgetConfig BudgetConfig::from_json(const nlohmann::json& j) {
    BudgetConfig b;
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "dim_normalized") b.mode = BudgetMode::DimNormalized;
    else if (mode == "constant") b.mode = BudgetMode::Constant;
    else throw ConfigError("unknown budget mode: " + mode);
    b.constant_value = j.at("constant_value").get<double>();
    return b;
}

Tensor evidence(const Tensor& flow_log_prob, const BudgetConfig& budget, size_t latent_dim) {
    Tensor log_n = add_scalar(flow_log_prob, budget.log_budget(latent_dim));
    return exp(clamp_max(log_n, 30.0));
}

EvidentialPosterior bayesian_update(const Tensor& chi_i, const Tensor& n_i, const PriorConfig& prior) {
    if (chi_i.rank() != 2) throw ShapeError("bayesian_update expects N x C chi");
    const size_t n = chi_i.rows(), C = chi_i.cols();
    if (n_i.numel() != n) throw ShapeError("bayesian_update: n_i batch size mismatch");
    if (prior.chi_prior.size() != C) throw ConfigError("prior is not resolved for this class count");

    Tensor prior_alpha({C}, std::vector<double>(prior.chi_prior));
    prior_alpha = mul_scalar(prior_alpha, prior.n_prior);

    EvidentialPosterior post;
    post.alpha = add(prior_alpha, mul(reshape(n_i, {n, 1}), chi_i));
    post.n_post = add_scalar(n_i, prior.n_prior);
    post.chi_post = div(post.alpha, reshape(post.n_post, {n, 1}));
    return post;
}

Tensor dirichlet_entropy(const Tensor& alpha) {
    const size_t C = alpha.cols();
    Tensor alpha0 = sum(alpha, 1);
    Tensor log_beta = sub(sum(lgamma(alpha), 1), lgamma(alpha0));
    Tensor second = mul(add_scalar(alpha0, -static_cast<double>(C)), digamma(alpha0));
    Tensor third = sum(mul(add_scalar(alpha, -1.0), digamma(alpha)), 1);
    return sub(add(log_beta, second), third);
}

Tensor bayesian_loss(const EvidentialPosterior& post, const std::vector<size_t>& y, double lambda) {
    const Tensor& alpha = post.alpha;
    if (y.size() != alpha.rows()) throw ShapeError("bayesian_loss: label count mismatch");
    for (double v : alpha.data())
        if (v <= 0.0) throw DomainError("bayesian_loss: alpha must be strictly positive");

    Tensor alpha0 = sum(alpha, 1);
    Tensor expected_loglik = sub(digamma(take_per_row(alpha, y)), digamma(alpha0));
    Tensor per_row = neg(expected_loglik);
    if (lambda != 0.0) per_row = sub(per_row, mul_scalar(dirichlet_entropy(alpha), lambda));
    return mean(per_row);
}

UncertaintyScores scores(const EvidentialPosterior& post) {
    const size_t n = post.alpha.rows(), C = post.alpha.cols();
    Tensor p = div(post.alpha, reshape(sum(post.alpha, 1), {n, 1}));
    UncertaintyScores s;
    s.labels.resize(n);
    for (size_t i = 0; i < n; ++i) {
        size_t best = 0;
        for (size_t c = 1; c < C; ++c)
            if (p.at(i, c) > p.at(i, best)) best = c;
        s.labels[i] = best;
    }
    s.predictive_entropy = neg(sum(mul(p, log(p)), 1));
    s.aleatoric = s.predictive_entropy;
    s.epistemic = post.n_post;
    return s;
}

NatpnHead::NatpnHead(size_t latent_dim, size_t num_classes, size_t flow_layers, PriorConfig prior,
                     BudgetConfig budget, uint64_t seed)
    : latent_dim_(latent_dim),
      num_classes_(num_classes),
      flow_(latent_dim, flow_layers, seed ^ 0x9e3779b97f4a7c15ull),
      prior_(std::move(prior)),
      budget_(budget) {
    prior_.resolve(num_classes);
    Rng rng(seed);
    W_ = Tensor::randn({latent_dim, num_classes}, rng, std::sqrt(1.0 / latent_dim), true);
    b_ = Tensor::zeros({num_classes}, true);
}

Tensor NatpnHead::whitened(const Tensor& z) const {
    if (!has_latent_scaling()) return z;
    return mul(sub(z, scale_mean_), scale_inv_std_);
}

Tensor NatpnHead::flow_log_prob(const Tensor& z) const {
    // density of the whitened coordinates on purpose: evidence must not decay
    // with the arbitrary overall scale of the encoder's latent space
    return flow_.log_prob(whitened(z));
}

void NatpnHead::set_latent_scaling(const Tensor& latent_sample) {
    if (latent_sample.rank() != 2 || latent_sample.cols() != latent_dim_)
        throw ShapeError("latent sample must be N x latent_dim");
    const size_t n = latent_sample.rows(), h = latent_dim_;
    if (n < 2) throw ShapeError("latent scaling needs at least 2 samples");
    std::vector<double> mean(h, 0.0), inv_std(h, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < h; ++j) mean[j] += latent_sample.at(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < h; ++j) {
            const double d = latent_sample.at(i, j) - mean[j];
            inv_std[j] += d * d;
        }
    double sd_max = 1e-12;
    for (size_t j = 0; j < h; ++j)
        sd_max = std::max(sd_max, std::sqrt(inv_std[j] / static_cast<double>(n - 1)));
    for (size_t j = 0; j < h; ++j) {
        // floor relative to the widest dimension: a collapsed direction must
        // not be blown up into amplified noise, it should contribute nothing
        const double sd = std::max(std::sqrt(inv_std[j] / static_cast<double>(n - 1)), 1e-3 * sd_max);
        inv_std[j] = 1.0 / sd;
    }
    scale_mean_ = Tensor({h}, std::move(mean));
    scale_inv_std_ = Tensor({h}, std::move(inv_std));
}

// the classifier reads the same whitened coordinates as the flow, so its
// logits cannot saturate when the encoder settles on a large latent scale
Tensor NatpnHead::class_logits(const Tensor& z) const {
    return add(matmul(whitened(z), W_), b_);
}

EvidentialPosterior NatpnHead::forward(const Tensor& z) const {
    Tensor chi_i = softmax(class_logits(z));
    Tensor n_i = evidence(flow_log_prob(z), budget_, latent_dim_);
    return bayesian_update(chi_i, n_i, prior_);
}

std::vector<Tensor> NatpnHead::parameters() {
    std::vector<Tensor> params = {W_, b_};
    for (auto& p : flow_.parameters()) params.push_back(p);
    return params;
}

nlohmann::json NatpnHead::to_json() const {
    nlohmann::json j = {{"latent_dim", latent_dim_}, {"num_classes", num_classes_},
                        {"W", tensor_to_json(W_)},   {"b", tensor_to_json(b_)},
                        {"flow", flow_.to_json()},   {"prior", prior_.to_json()},
                        {"budget", budget_.to_json()}};
    if (has_latent_scaling()) {
        j["scale_mean"] = tensor_to_json(scale_mean_);
        j["scale_inv_std"] = tensor_to_json(scale_inv_std_);
    }
    return j;
}

NatpnHead NatpnHead::from_json(const nlohmann::json& j) {
    NatpnHead head(j.at("latent_dim").get<size_t>(), j.at("num_classes").get<size_t>(), 0,
                   PriorConfig::from_json(j.at("prior")), BudgetConfig::from_json(j.at("budget")), 0);
    head.W_ = tensor_from_json(j.at("W"), true);
    head.b_ = tensor_from_json(j.at("b"), true);
    head.flow_ = RadialFlowStack::from_json(j.at("flow"));
    if (j.contains("scale_mean")) {
        head.scale_mean_ = tensor_from_json(j.at("scale_mean"), false);
        head.scale_inv_std_ = tensor_from_json(j.at("scale_inv_std"), false);
    }
    return head;
}

}  // namespace dumlab
