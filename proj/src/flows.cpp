#include "dumlab/flows.hpp"

#include <cmath>

#include "dumlab/serialize.hpp"

namespace dumlab {

namespace {
// softplus(x) = 1 at x = log(e - 1); used to start alpha at 1 and beta at 0
constexpr double kSoftplusUnit = 0.5413248546129181;
}  // namespace

RadialFlowStack::RadialFlowStack(size_t latent_dim, size_t num_layers, uint64_t seed)
    : latent_dim_(latent_dim) {
    if (latent_dim == 0) throw ConfigError("flow latent_dim must be positive");
    Rng rng(seed);
    for (size_t i = 0; i < num_layers; ++i) {
        RadialLayer layer;
        layer.z0 = Tensor::randn({latent_dim}, rng, 0.1, true);
        layer.alpha_raw = Tensor::scalar(kSoftplusUnit + 0.01 * rng.normal(), true);
        layer.beta_raw = Tensor::scalar(kSoftplusUnit + 0.01 * rng.normal(), true);
        layers_.push_back(layer);
    }
}

std::pair<Tensor, Tensor> RadialFlowStack::transform(const Tensor& z) const {
    if (z.rank() != 2 || z.cols() != latent_dim_)
        throw ShapeError("flow transform expects N x " + std::to_string(latent_dim_));
    for (double v : z.data())
        if (!std::isfinite(v)) throw NumericalError("flow transform: non-finite input");

    const size_t n = z.rows();
    const double Hm1 = static_cast<double>(latent_dim_) - 1.0;
    Tensor u = z;
    Tensor logdet = Tensor::zeros({n});
    for (const auto& layer : layers_) {
        Tensor alpha = softplus(layer.alpha_raw);
        Tensor beta = add(neg(alpha), softplus(layer.beta_raw));
        Tensor diff = sub(u, layer.z0);                     // N x H
        Tensor r = sqrt(sum(square(diff), 1));              // N
        Tensor h = div(Tensor::full({n}, 1.0), add(r, alpha));
        Tensor bh = mul(beta, h);                           // N
        u = add(u, mul(diff, reshape(bh, {n, 1})));
        // log|det J| = (H-1) log(1 + bh) + log(1 + bh - beta h^2 r)
        Tensor first = log(add_scalar(bh, 1.0));
        Tensor second = log(add_scalar(sub(bh, mul(bh, mul(h, r))), 1.0));
        logdet = add(logdet, add(mul_scalar(first, Hm1), second));
    }
    for (double v : u.data())
        if (!std::isfinite(v)) throw NumericalError("flow transform: non-finite output");
    return {u, logdet};
}

Tensor RadialFlowStack::log_prob(const Tensor& z) const {
    auto [u, logdet] = transform(z);
    const double c = -0.5 * static_cast<double>(latent_dim_) * std::log(2.0 * M_PI);
    Tensor base = add_scalar(mul_scalar(sum(square(u), 1), -0.5), c);
    return add(base, logdet);
}

std::vector<Tensor> RadialFlowStack::parameters() {
    std::vector<Tensor> params;
    for (auto& layer : layers_) {
        params.push_back(layer.z0);
        params.push_back(layer.alpha_raw);
        params.push_back(layer.beta_raw);
    }
    return params;
}

nlohmann::json RadialFlowStack::to_json() const {
    nlohmann::json j;
    j["latent_dim"] = latent_dim_;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : layers_)
        j["layers"].push_back({{"z0", tensor_to_json(layer.z0)},
                               {"alpha_raw", tensor_to_json(layer.alpha_raw)},
                               {"beta_raw", tensor_to_json(layer.beta_raw)}});
    return j;
}

RadialFlowStack RadialFlowStack::from_json(const nlohmann::json& j) {
    RadialFlowStack stack(j.at("latent_dim").get<size_t>(), 0, 0);
    for (const auto& lj : j.at("layers")) {
        RadialLayer layer;
        layer.z0 = tensor_from_json(lj.at("z0"), true);
        layer.alpha_raw = tensor_from_json(lj.at("alpha_raw"), true);
        layer.beta_raw = tensor_from_json(lj.at("beta_raw"), true);
        stack.layers_.push_back(layer);
    }
    return stack;
}

Tensor fit_nll_loss(const RadialFlowStack& stack, const Tensor& z) {
    return neg(mean(stack.log_prob(z)));
}

}  // namespace dumlab
