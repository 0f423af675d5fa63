#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dumlab/tensor.hpp"

#include "json.hpp"

namespace dumlab {

enum class Constraint { None, Residual, Bilipschitz };

std::string constraint_name(Constraint c);
Constraint constraint_from_name(const std::string& s);

struct EncoderConfig {
    size_t input_dim = 2;
    size_t hidden_dim = 128;
    size_t num_layers = 4;  // hidden linear layers ("4 linear layers of 128")
    size_t latent_dim = 2;
    Constraint constraint = Constraint::None;
    double lipschitz_c = 1.0;  // soft spectral bound, used when bilipschitz
    bool use_final_batchnorm = false;
    double recon_lambda = 0.0;  // decoder attached iff > 0

    void validate() const;
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

enum class Mode { Train, Eval };

struct LinearLayer {
    Tensor W;  // in x out
    Tensor b;  // out
    std::vector<double> u_state;  // persisted power-iteration vector (length in)
    double sigma_hat = 0.0;       // latest top-singular-value estimate
};

struct BatchNormLayer {
    Tensor gamma, beta;
    std::vector<double> running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;
    double sigma_hat = 0.0;  // max |gamma_c| / sqrt(running_var_c + eps)
};

// MLP core architecture f_phi. Residual blocks sit between the equal-width
// hidden layers; the first projection and the latent head stay plain.
class Encoder {
  public:
    Encoder(EncoderConfig config, uint64_t seed);

    struct ForwardResult {
        Tensor z;      // N x latent_dim
        Tensor x_hat;  // defined iff recon_lambda > 0
    };
    ForwardResult forward(const Tensor& x, Mode mode);

    // reinitialize the hidden->latent head only (joint-phase stabilizer)
    void reset_last_layer(uint64_t seed);

    // one power-iteration step per constrained weight; rescaling is soft
    // (weights shrink only when sigma_hat exceeds the Lipschitz constant)
    void spectral_step();

    std::vector<Tensor> parameters();
    const EncoderConfig& config() const { return config_; }
    const LinearLayer& hidden_layer(size_t i) const { return layers_[i]; }
    const LinearLayer& output_layer() const { return out_layer_; }
    const BatchNormLayer& final_batchnorm() const { return final_bn_; }

    nlohmann::json to_json() const;
    static Encoder from_json(const nlohmann::json& j);

  private:
    Tensor effective_weight(const LinearLayer& layer) const;
    Tensor apply_batchnorm(const Tensor& h, Mode mode);
    void check_finite(const Tensor& t, size_t layer_index) const;

    EncoderConfig config_;
    std::vector<LinearLayer> layers_;  // num_layers hidden linears
    LinearLayer out_layer_;            // hidden -> latent
    BatchNormLayer final_bn_;          // used iff use_final_batchnorm
    std::vector<LinearLayer> decoder_;  // mirror back to input_dim, iff recon_lambda > 0
};

// plain mean-squared error over all entries; the recon_lambda factor is
// applied at the call site
Tensor reconstruction_loss(const Tensor& x, const Tensor& x_hat);

}  // namespace dumlab
