#include "dumlab/encoder.hpp"

#include <cmath>
#include <string>

#include "dumlab/linalg.hpp"
#include "dumlab/serialize.hpp"

namespace dumlab {

namespace {

LinearLayer make_linear(size_t in, size_t out, double stddev, Rng& rng) {
    LinearLayer layer;
    layer.W = Tensor::randn({in, out}, rng, stddev, true);
    layer.b = Tensor::zeros({out}, true);
    Tensor u = Tensor::randn({in}, rng);
    double norm = 0.0;
    for (double v : u.data()) norm += v * v;
    norm = std::sqrt(norm);
    layer.u_state = u.data();
    for (double& v : layer.u_state) v /= norm;
    return layer;
}

Tensor affine(const Tensor& h, const Tensor& W, const Tensor& b) { return add(matmul(h, W), b); }

nlohmann::json linear_to_json(const LinearLayer& layer) {
    nlohmann::json j;
    j["W"] = tensor_to_json(layer.W);
    j["b"] = tensor_to_json(layer.b);
    j["u_state"] = layer.u_state;
    j["sigma_hat"] = layer.sigma_hat;
    return j;
}

LinearLayer linear_from_json(const nlohmann::json& j) {
    LinearLayer layer;
    layer.W = tensor_from_json(j.at("W"), true);
    layer.b = tensor_from_json(j.at("b"), true);
    layer.u_state = j.at("u_state").get<std::vector<double>>();
    layer.sigma_hat = j.at("sigma_hat").get<double>();
    return layer;
}

}  // namespace

std::string constraint_name(Constraint c) {
    switch (c) {
        case Constraint::None: return "none";
        case Constraint::Residual: return "residual";
        case Constraint::Bilipschitz: return "bilipschitz";
    }
    throw ConfigError("unknown constraint");
}

Constraint constraint_from_name(const std::string& s) {
    if (s == "none") return Constraint::None;
    if (s == "residual") return Constraint::Residual;
    if (s == "bilipschitz") return Constraint::Bilipschitz;
    throw ConfigError("unknown constraint name: " + s);
}

void EncoderConfig::validate() const {
    if (input_dim == 0 || hidden_dim == 0 || latent_dim == 0 || num_layers == 0)
        throw ConfigError("encoder dimensions must be positive");
    if (constraint == Constraint::Bilipschitz && lipschitz_c <= 0.0)
        throw ConfigError("lipschitz_c must be positive under the bilipschitz constraint");
    if (recon_lambda < 0.0) throw ConfigError("recon_lambda must be nonnegative");
}

nlohmann::json EncoderConfig::to_json() const {
    return {{"input_dim", input_dim},
            {"hidden_dim", hidden_dim},
            {"num_layers", num_layers},
            {"latent_dim", latent_dim},
            {"constraint", constraint_name(constraint)},
            {"lipschitz_c", lipschitz_c},
            {"use_final_batchnorm", use_final_batchnorm},
            {"recon_lambda", recon_lambda}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.input_dim = j.at("input_dim").get<size_t>();
    c.hidden_dim = j.at("hidden_dim").get<size_t>();
    c.num_layers = j.at("num_layers").get<size_t>();
    c.latent_dim = j.at("latent_dim").get<size_t>();
    c.constraint = constraint_from_name(j.at("constraint").get<std::string>());
    c.lipschitz_c = j.at("lipschitz_c").get<double>();
    c.use_final_batchnorm = j.at("use_final_batchnorm").get<bool>();
    c.recon_lambda = j.at("recon_lambda").get<double>();
    c.validate();
    return c;
}

Encoder::Encoder(EncoderConfig config, uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const size_t D = config_.input_dim, Hd = config_.hidden_dim, L = config_.num_layers;

    layers_.push_back(make_linear(D, Hd, std::sqrt(2.0 / D), rng));
    for (size_t i = 1; i < L; ++i) layers_.push_back(make_linear(Hd, Hd, std::sqrt(2.0 / Hd), rng));
    out_layer_ = make_linear(Hd, config_.latent_dim, std::sqrt(1.0 / Hd), rng);

    if (config_.use_final_batchnorm) {
        final_bn_.gamma = Tensor::full({config_.latent_dim}, 1.0, true);
        final_bn_.beta = Tensor::zeros({config_.latent_dim}, true);
        final_bn_.running_mean.assign(config_.latent_dim, 0.0);
        final_bn_.running_var.assign(config_.latent_dim, 1.0);
    }

    if (config_.recon_lambda > 0.0) {
        // the decoder reads the last hidden block, before the latent
        // projection; reconstructing from the projection output would force
        // the latent itself to stay information-complete
        for (size_t i = 0; i < L; ++i) decoder_.push_back(make_linear(Hd, Hd, std::sqrt(2.0 / Hd), rng));
        decoder_.push_back(make_linear(Hd, D, std::sqrt(1.0 / Hd), rng));
    }
}

Tensor Encoder::effective_weight(const LinearLayer& layer) const {
    if (config_.constraint != Constraint::Bilipschitz) return layer.W;
    if (layer.sigma_hat <= config_.lipschitz_c) return layer.W;
    // soft spectral normalization; the scale is a plain constant so gradients
    // reach W scaled but the scale itself is not differentiated through
    return mul_scalar(layer.W, config_.lipschitz_c / layer.sigma_hat);
}

void Encoder::check_finite(const Tensor& t, size_t layer_index) const {
    for (double v : t.data())
        if (!std::isfinite(v))
            throw NumericalError("encoder: non-finite activations at layer " + std::to_string(layer_index));
}

Tensor Encoder::apply_batchnorm(const Tensor& h, Mode mode) {
    BatchNormLayer& bn = final_bn_;
    const size_t C = config_.latent_dim;
    const size_t n = h.rows();

    Tensor gamma = bn.gamma;
    if (config_.constraint == Constraint::Bilipschitz && bn.sigma_hat > config_.lipschitz_c)
        gamma = mul_scalar(bn.gamma, config_.lipschitz_c / bn.sigma_hat);

    if (mode == Mode::Train) {
        Tensor mu = mean(h, 0);
        Tensor centered = sub(h, mu);
        Tensor var = mean(square(centered), 0);
        Tensor normed = div(centered, sqrt(add_scalar(var, bn.eps)));
        // running stats track the unbiased batch variance and stay off the tape
        const double bessel = n > 1 ? static_cast<double>(n) / (n - 1) : 1.0;
        for (size_t c = 0; c < C; ++c) {
            bn.running_mean[c] = (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * mu.data()[c];
            bn.running_var[c] = (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * bessel * var.data()[c];
        }
        return add(mul(normed, gamma), bn.beta);
    }
    Tensor mu({C}, bn.running_mean);
    std::vector<double> denom(C);
    for (size_t c = 0; c < C; ++c) denom[c] = std::sqrt(bn.running_var[c] + bn.eps);
    Tensor normed = div(sub(h, mu), Tensor({C}, denom));
    return add(mul(normed, gamma), bn.beta);
}

Encoder::ForwardResult Encoder::forward(const Tensor& x, Mode mode) {
    for (double v : x.data())
        if (!std::isfinite(v)) throw NumericalError("encoder: non-finite input");
    if (x.cols() != config_.input_dim)
        throw ShapeError("encoder: input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(config_.input_dim));

    Tensor h = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
        Tensor a = relu(affine(h, effective_weight(layers_[i]), layers_[i].b));
        // residual shortcut only between equal-width hidden layers
        const bool residual = config_.constraint != Constraint::None && i > 0;
        h = residual ? add(h, a) : a;
        check_finite(h, i);
    }
    Tensor z = affine(h, effective_weight(out_layer_), out_layer_.b);
    // the hidden shortcuts cannot reach past the latent projection, so when
    // the dimensions line up the constraint extends to an input-to-latent
    // shortcut; without it the projection alone could still collapse features
    if (config_.constraint != Constraint::None && config_.input_dim == config_.latent_dim)
        z = add(z, x);
    if (config_.use_final_batchnorm) z = apply_batchnorm(z, mode);
    check_finite(z, layers_.size());

    ForwardResult result;
    result.z = z;
    if (config_.recon_lambda > 0.0) {
        Tensor d = h;
        for (size_t i = 0; i + 1 < decoder_.size(); ++i) d = relu(affine(d, decoder_[i].W, decoder_[i].b));
        result.x_hat = affine(d, decoder_.back().W, decoder_.back().b);
        check_finite(result.x_hat, layers_.size() + decoder_.size());
    }
    return result;
}

void Encoder::reset_last_layer(uint64_t seed) {
    Rng rng(seed);
    out_layer_ = make_linear(config_.hidden_dim, config_.latent_dim, std::sqrt(1.0 / config_.hidden_dim), rng);
}

void Encoder::spectral_step() {
    if (config_.constraint != Constraint::Bilipschitz)
        throw ConfigError("spectral_step requires the bilipschitz constraint");
    for (auto& layer : layers_) layer.sigma_hat = power_iteration(layer.W, layer.u_state, 1);
    out_layer_.sigma_hat = power_iteration(out_layer_.W, out_layer_.u_state, 1);
    if (config_.use_final_batchnorm) {
        double s = 0.0;
        for (size_t c = 0; c < config_.latent_dim; ++c)
            s = std::max(s, std::abs(final_bn_.gamma.data()[c]) / std::sqrt(final_bn_.running_var[c] + final_bn_.eps));
        final_bn_.sigma_hat = s;
    }
}

std::vector<Tensor> Encoder::parameters() {
    std::vector<Tensor> params;
    for (auto& layer : layers_) {
        params.push_back(layer.W);
        params.push_back(layer.b);
    }
    params.push_back(out_layer_.W);
    params.push_back(out_layer_.b);
    if (config_.use_final_batchnorm) {
        params.push_back(final_bn_.gamma);
        params.push_back(final_bn_.beta);
    }
    for (auto& layer : decoder_) {
        params.push_back(layer.W);
        params.push_back(layer.b);
    }
    return params;
}

nlohmann::json Encoder::to_json() const {
    nlohmann::json j;
    j["config"] = config_.to_json();
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : layers_) j["layers"].push_back(linear_to_json(layer));
    j["out_layer"] = linear_to_json(out_layer_);
    if (config_.use_final_batchnorm) {
        j["final_bn"] = {{"gamma", tensor_to_json(final_bn_.gamma)},
                         {"beta", tensor_to_json(final_bn_.beta)},
                         {"running_mean", final_bn_.running_mean},
                         {"running_var", final_bn_.running_var},
                         {"sigma_hat", final_bn_.sigma_hat}};
    }
    j["decoder"] = nlohmann::json::array();
    for (const auto& layer : decoder_) j["decoder"].push_back(linear_to_json(layer));
    return j;
}

Encoder Encoder::from_json(const nlohmann::json& j) {
    Encoder enc(EncoderConfig::from_json(j.at("config")), 0);
    enc.layers_.clear();
    for (const auto& lj : j.at("layers")) enc.layers_.push_back(linear_from_json(lj));
    enc.out_layer_ = linear_from_json(j.at("out_layer"));
    if (enc.config_.use_final_batchnorm) {
        const auto& bj = j.at("final_bn");
        enc.final_bn_.gamma = tensor_from_json(bj.at("gamma"), true);
        enc.final_bn_.beta = tensor_from_json(bj.at("beta"), true);
        enc.final_bn_.running_mean = bj.at("running_mean").get<std::vector<double>>();
        enc.final_bn_.running_var = bj.at("running_var").get<std::vector<double>>();
        enc.final_bn_.sigma_hat = bj.at("sigma_hat").get<double>();
    }
    enc.decoder_.clear();
    for (const auto& lj : j.at("decoder")) enc.decoder_.push_back(linear_from_json(lj));
    return enc;
}

Tensor reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
    if (x.shape() != x_hat.shape()) throw ShapeError("reconstruction_loss: shape mismatch");
    return mean(square(sub(x_hat, x)));
}

}  // namespace dumlab
