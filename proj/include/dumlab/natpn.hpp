#pragma once

#include <cstdint>
#include <vector>

#include "dumlab/flows.hpp"
#include "dumlab/tensor.hpp"

#include "json.hpp"

namespace dumlab {

struct PriorConfig {
    double n_prior = 0.0;            // pseudo-observation count; <= 0 means "use C"
    std::vector<double> chi_prior;   // C-simplex; empty means uniform
    double entropy_lambda = 0.0;

    void resolve(size_t num_classes);  // fill defaults, then validate
    void validate() const;
    nlohmann::json to_json() const;
    static PriorConfig from_json(const nlohmann::json& j);
};

enum class BudgetMode { DimNormalized, Constant };

struct BudgetConfig {
    BudgetMode mode = BudgetMode::DimNormalized;
    double constant_value = 1.0;

    // dim_normalized keeps budget * base-mode density O(1) for any latent
    // dimension: log N_H = (H/2) log(4 pi)
    double log_budget(size_t latent_dim) const;
    nlohmann::json to_json() const;
    static BudgetConfig from_json(const nlohmann::json& j);
};

struct EvidentialPosterior {
    Tensor alpha;     // N x C Dirichlet concentrations, alpha = n_post * chi_post
    Tensor n_post;    // N
    Tensor chi_post;  // N x C simplex rows
};

// n_i = N_H * P(z|w), computed in log space and clamped at e^30
Tensor evidence(const Tensor& flow_log_prob, const BudgetConfig& budget, size_t latent_dim);

EvidentialPosterior bayesian_update(const Tensor& chi_i, const Tensor& n_i, const PriorConfig& prior);

// entropy of Dir(alpha) per row, in closed form
Tensor dirichlet_entropy(const Tensor& alpha);

// mean over the batch of -(psi(alpha_y) - psi(alpha_0)) - lambda * H[Dir(alpha)]
Tensor bayesian_loss(const EvidentialPosterior& post, const std::vector<size_t>& y, double lambda);

struct UncertaintyScores {
    std::vector<size_t> labels;  // argmax of the mean categorical
    Tensor predictive_entropy;   // N, entropy of alpha / alpha_0
    Tensor aleatoric;            // N, same entropy for this head
    Tensor epistemic;            // N, n_post (higher = more certain)
};

UncertaintyScores scores(const EvidentialPosterior& post);

// linear decoder g_psi + radial-flow density + Bayesian update in one bundle
class NatpnHead {
  public:
    NatpnHead(size_t latent_dim, size_t num_classes, size_t flow_layers, PriorConfig prior,
              BudgetConfig budget, uint64_t seed);

    EvidentialPosterior forward(const Tensor& z) const;
    Tensor flow_log_prob(const Tensor& z) const;
    Tensor class_logits(const Tensor& z) const;  // pre-softmax chi logits

    // data-dependent init: whiten latents per dimension before the flow so the
    // near-identity base density covers them at any latent scale; evidence is
    // scored in these normalized coordinates
    void set_latent_scaling(const Tensor& latent_sample);
    bool has_latent_scaling() const { return scale_inv_std_.defined(); }
    Tensor whitened(const Tensor& z) const;  // identity until scaling is set

    std::vector<Tensor> parameters();
    RadialFlowStack& flow() { return flow_; }
    const PriorConfig& prior() const { return prior_; }
    const BudgetConfig& budget() const { return budget_; }
    size_t num_classes() const { return num_classes_; }

    nlohmann::json to_json() const;
    static NatpnHead from_json(const nlohmann::json& j);

  private:
    size_t latent_dim_, num_classes_;
    Tensor W_, b_;  // g_psi
    Tensor scale_mean_, scale_inv_std_;  // constant whitening affine (empty = identity)
    RadialFlowStack flow_;
    PriorConfig prior_;
    BudgetConfig budget_;
};

}  // namespace dumlab
