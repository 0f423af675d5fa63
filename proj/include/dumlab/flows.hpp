#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dumlab/tensor.hpp"

#include "json.hpp"

namespace dumlab {

struct RadialLayer {
    Tensor z0;         // H-vector center
    Tensor alpha_raw;  // alpha = softplus(alpha_raw) > 0
    Tensor beta_raw;   // beta = -alpha + softplus(beta_raw), keeps the layer invertible
};

// Stack of radial flow layers over a standard-normal base. The flow runs
// data -> base: log_prob pushes z through the layers and scores the result
// under the base, so only density evaluation is ever needed (no sampling,
// no closed-form inverse).
class RadialFlowStack {
  public:
    // near-identity start: small random centers, alpha ~ 1, beta ~ 0
    RadialFlowStack(size_t latent_dim, size_t num_layers, uint64_t seed);

    // push z (N x H) through every layer; returns the base-space points and
    // the per-row accumulated log |det J|
    std::pair<Tensor, Tensor> transform(const Tensor& z) const;

    Tensor log_prob(const Tensor& z) const;  // N reals

    std::vector<Tensor> parameters();
    size_t latent_dim() const { return latent_dim_; }
    size_t num_layers() const { return layers_.size(); }
    const RadialLayer& layer(size_t i) const { return layers_[i]; }

    nlohmann::json to_json() const;
    static RadialFlowStack from_json(const nlohmann::json& j);

  private:
    size_t latent_dim_;
    std::vector<RadialLayer> layers_;
};

// mean negative log likelihood of the batch, differentiable through z and
// through every flow parameter
Tensor fit_nll_loss(const RadialFlowStack& stack, const Tensor& z);

}  // namespace dumlab
