#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dumlab/tensor.hpp"

#include "json.hpp"

namespace dumlab {

enum class KernelFamily { Rbf, Rq, Matern12, Matern32, Matern52 };

std::string kernel_name(KernelFamily f);
KernelFamily kernel_from_name(const std::string& s);

struct KernelConfig {
    KernelFamily family = KernelFamily::Rbf;
    double lengthscale = 1.0;
    double outputscale = 1.0;  // sigma^2
    double rq_alpha = 1.0;
    void validate() const;
};

// Gram matrix k(A_i, B_j) for fixed hyperparameters; n x m
Tensor kernel_eval(const KernelConfig& cfg, const Tensor& A, const Tensor& B);

// differentiable Gram used in training, lengthscale/outputscale as tensors
Tensor kernel_gram(KernelFamily family, const Tensor& lengthscale, const Tensor& outputscale,
                   double rq_alpha, const Tensor& A, const Tensor& B);

// k-means (10 iterations) centroids of an embedding sample, K x H
Tensor init_inducing(const Tensor& z_sample, size_t num_inducing, uint64_t seed);

struct GpConfig {
    size_t latent_dim = 2;
    size_t num_classes = 2;
    size_t num_inducing = 20;
    KernelFamily kernel = KernelFamily::Rbf;
    double rq_alpha = 1.0;
    double init_lengthscale = 1.0;
    double init_outputscale = 1.0;
    double jitter = 1e-6;
    size_t train_samples = 8;
    size_t eval_samples = 32;
    void validate() const;
    nlohmann::json to_json() const;
    static GpConfig from_json(const nlohmann::json& j);
};

// Sparse variational GP classification head with one independent GP per
// class sharing the kernel and the inducing locations. The variational
// posterior is whitened: m = 0, S = I is exactly the prior and has KL = 0.
class GpHead {
  public:
    GpHead(GpConfig config, uint64_t seed);

    void set_inducing(const Tensor& Z);  // adopt init_inducing output

    struct Prediction {
        Tensor mu;     // N x C latent means
        Tensor var;    // N x C latent marginal variances, strictly positive
        Tensor probs;  // softmax of mu
    };
    Prediction predict(const Tensor& z) const;

    // sampled-softmax ELBO; eps ~ N(0,1) reparameterization noise comes from
    // rng so callers can fix common random numbers
    Tensor elbo(const Tensor& z, const std::vector<size_t>& y, size_t num_samples, double n_total,
                Rng& rng) const;

    // Gaussian-likelihood hooks used to cross-check against exact GP regression
    Tensor elbo_regression(const Tensor& z, const Tensor& y, double noise_var, double n_total) const;
    std::pair<Tensor, Tensor> predict_regression(const Tensor& z) const;  // class-0 latent mu/var

    Tensor kl() const;  // summed over classes, whitened closed form

    std::vector<Tensor> parameters();
    const GpConfig& config() const { return config_; }
    double lengthscale() const;
    double outputscale() const;
    const Tensor& inducing() const { return Z_; }

    nlohmann::json to_json() const;
    static GpHead from_json(const nlohmann::json& j);

  private:
    Tensor variational_chol(size_t c) const;  // lower triangular with softplus diagonal
    // per-class marginal (mu, var) for the whole batch
    std::pair<std::vector<Tensor>, std::vector<Tensor>> marginals(const Tensor& z) const;

    GpConfig config_;
    Tensor Z_;                   // K x H
    std::vector<Tensor> m_;      // C vectors of length K
    std::vector<Tensor> L_raw_;  // C raw K x K matrices
    Tensor lengthscale_raw_, outputscale_raw_;  // softplus-positive scalars
    Tensor eye_mask_, strict_lower_mask_;       // constant K x K masks
};

}  // namespace dumlab
