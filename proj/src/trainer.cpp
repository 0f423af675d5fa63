#include "dumlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace dumlab {

OptimizerKind optimizer_from_name(const std::string& s) {
    if (s == "sgd_momentum") return OptimizerKind::SgdMomentum;
    if (s == "adamw") return OptimizerKind::AdamW;
    throw ConfigError("unknown optimizer: " + s);
}

std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::SgdMomentum ? "sgd_momentum" : "adamw";
}

void optimizer_step(OptimizerKind kind, std::vector<Tensor>& params, OptimizerState& state, double lr,
                    double weight_decay) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameter list");
    ++state.t;
    const double bc1 = 1.0 - std::pow(0.9, state.t);
    const double bc2 = 1.0 - std::pow(0.999, state.t);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        if (state.m[pi].size() != p.numel()) throw ShapeError("optimizer state shape mismatch");
        const auto& g = p.grad();
        auto& pd = p.data();
        for (size_t i = 0; i < pd.size(); ++i) {
            if (weight_decay > 0.0) pd[i] *= 1.0 - lr * weight_decay;
            if (kind == OptimizerKind::SgdMomentum) {
                state.m[pi][i] = 0.9 * state.m[pi][i] + g[i];
                pd[i] -= lr * state.m[pi][i];
            } else {
                state.m[pi][i] = 0.9 * state.m[pi][i] + 0.1 * g[i];
                state.v[pi][i] = 0.999 * state.v[pi][i] + 0.001 * g[i] * g[i];
                pd[i] -= lr * (state.m[pi][i] / bc1) / (std::sqrt(state.v[pi][i] / bc2) + 1e-8);
            }
        }
    }
}

ScheduleKind schedule_from_name(const std::string& s) {
    if (s == "constant") return ScheduleKind::Constant;
    if (s == "cosine") return ScheduleKind::Cosine;
    if (s == "linear_warmup") return ScheduleKind::LinearWarmup;
    if (s == "multistep") return ScheduleKind::Multistep;
    throw ConfigError("unknown schedule: " + s);
}

std::string schedule_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::LinearWarmup: return "linear_warmup";
        case ScheduleKind::Multistep: return "multistep";
    }
    throw ConfigError("unknown schedule kind");
}

double schedule_lr(const Schedule& schedule, double base_lr, size_t step, size_t total_steps) {
    if (total_steps == 0 || step > total_steps) throw ConfigError("schedule_lr: step out of range");
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    switch (schedule.kind) {
        case ScheduleKind::Constant: return base_lr;
        case ScheduleKind::Cosine:
            return schedule.eta_min + 0.5 * (base_lr - schedule.eta_min) * (1.0 + std::cos(M_PI * frac));
        case ScheduleKind::LinearWarmup: return base_lr * frac;
        case ScheduleKind::Multistep: {
            double lr = base_lr;
            for (double m : schedule.milestones)
                if (frac >= m) lr *= schedule.factor;
            return lr;
        }
    }
    throw ConfigError("unknown schedule kind");
}

void TrainPlan::validate() const {
    if (phases.empty()) throw ConfigError("train plan has no phases");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    static const std::map<std::string, int> order = {
        {"pretrain", 0}, {"warmup", 1}, {"main", 2}, {"finetune", 3}};
    int last = -1;
    size_t mains = 0;
    for (const auto& phase : phases) {
        auto it = order.find(phase.name);
        if (it == order.end()) throw ConfigError("unknown phase name: " + phase.name);
        if (it->second <= last) throw ConfigError("phase order must be pretrain?, warmup?, main, finetune?");
        last = it->second;
        if (phase.name == "main") {
            ++mains;
            if (phase.scheme != "joint" && phase.scheme != "sequential")
                throw ConfigError("main scheme must be joint or sequential");
        }
        if (phase.epochs == 0) throw ConfigError("phase '" + phase.name + "' has zero epochs; drop it instead");
        if (phase.name == "warmup" && phase.trainable != Trainable::HeadOnly)
            throw ConfigError("warmup phase must be head_only");
        const bool enc_active = phase.trainable != Trainable::HeadOnly &&
                                !(phase.name == "main" && phase.scheme == "sequential");
        if (enc_active && phase.encoder_lr <= 0.0)
            throw ConfigError("encoder_lr must be positive in phase " + phase.name);
        if (phase.trainable != Trainable::EncoderOnly && phase.head_lr <= 0.0)
            throw ConfigError("head_lr must be positive in phase " + phase.name);
    }
    if (mains != 1) throw ConfigError("exactly one main phase is required");
}

Tensor NatpnTrainable::loss(const Tensor& z, const std::vector<size_t>& y, double, Rng&) {
    return bayesian_loss(head_.forward(z), y, head_.prior().entropy_lambda);
}

Tensor NatpnTrainable::warmup_loss(const Tensor& z, const std::vector<size_t>& y, double, Rng&) {
    // flow NLL plus cross entropy on the class logits: both head components
    // must be informative before the Bayesian loss can couple them, otherwise
    // it settles into the zero-evidence prior fixed point
    Tensor logits = head_.class_logits(z);
    Tensor ce = neg(mean(take_per_row(sub(logits, reshape(logsumexp(logits, 1), {z.rows(), 1})), y)));
    return add(neg(mean(head_.flow_log_prob(z))), ce);
}

void NatpnTrainable::on_main_start(const Tensor& latents) {
    if (scaling_set_) return;
    head_.set_latent_scaling(latents);
    scaling_set_ = true;
}

Tensor DueTrainable::loss(const Tensor& z, const std::vector<size_t>& y, double n_total, Rng& rng) {
    Tensor elbo = head_.elbo(z, y, head_.config().train_samples, n_total, rng);
    return mul_scalar(neg(elbo), 1.0 / n_total);
}

void DueTrainable::on_main_start(const Tensor& latents) {
    if (inducing_set_) return;
    head_.set_inducing(init_inducing(latents, head_.config().num_inducing, inducing_seed_));
    inducing_set_ = true;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,phase,loss,lr_encoder,lr_head,grad_norm\n";
    for (const auto& row : log)
        out << row.epoch << ',' << row.phase << ',' << row.loss << ',' << row.lr_encoder << ','
            << row.lr_head << ',' << row.grad_norm << '\n';
    return out.str();
}

namespace {

Tensor cross_entropy(const Tensor& logits, const std::vector<size_t>& y) {
    const size_t n = logits.rows();
    Tensor loglik = take_per_row(sub(logits, reshape(logsumexp(logits, 1), {n, 1})), y);
    return neg(mean(loglik));
}

std::vector<size_t> slice(const std::vector<size_t>& perm, size_t lo, size_t hi) {
    return {perm.begin() + lo, perm.begin() + hi};
}

double global_grad_norm(const std::vector<std::vector<Tensor>*>& groups) {
    double s = 0.0;
    for (auto* g : groups)
        for (const auto& p : *g)
            if (!p.grad().empty())
                for (double v : p.grad()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

TrainResult run(const TrainPlan& plan, Encoder& encoder, TrainableHead& head,
                const data::Dataset& train, const PhaseCallback& on_phase_end) {
    plan.validate();
    train.validate();
    const size_t n = train.size();
    const double n_total = static_cast<double>(n);
    Rng rng(plan.seed);

    // throwaway linear probe for the cross-entropy pretrain phase
    Tensor probe_W, probe_b;
    const bool has_pretrain =
        std::any_of(plan.phases.begin(), plan.phases.end(), [](const Phase& p) { return p.name == "pretrain"; });
    if (has_pretrain) {
        const size_t h = encoder.config().latent_dim;
        probe_W = Tensor::randn({h, train.num_classes}, rng, std::sqrt(1.0 / h), true);
        probe_b = Tensor::zeros({train.num_classes}, true);
    }

    TrainResult result;
    size_t global_epoch = 0;
    bool head_initialized = false;
    for (const auto& phase : plan.phases) {
        const bool sequential_main = phase.name == "main" && phase.scheme == "sequential";
        const bool head_only = phase.trainable == Trainable::HeadOnly || sequential_main;
        const bool is_pretrain = phase.name == "pretrain";
        const bool is_warmup = phase.name == "warmup";

        if (phase.name == "main" && phase.reset_last_layer)
            encoder.reset_last_layer(plan.seed ^ 0xabcdef12345ull);
        if (!is_pretrain && !head_initialized) {
            // latent sample for data-dependent head initialization
            const size_t sample = std::min<size_t>(n, 1024);
            Tensor xs = gather_rows(train.inputs, slice(rng.permutation(n), 0, sample)).detach();
            head.on_main_start(encoder.forward(xs, Mode::Eval).z.detach());
            head_initialized = true;
        }

        std::vector<Tensor> enc_params = encoder.parameters();
        std::vector<Tensor> head_params = is_pretrain ? std::vector<Tensor>{probe_W, probe_b}
                                                      : head.parameters();
        OptimizerState enc_state, head_state;

        // frozen encoder: embed the whole set once and batch from the cache
        Tensor cached_z;
        if (head_only && !is_pretrain) cached_z = encoder.forward(train.inputs, Mode::Eval).z.detach();

        for (size_t epoch = 0; epoch < phase.epochs; ++epoch, ++global_epoch) {
            const double lr_enc = schedule_lr(phase.encoder_schedule, phase.encoder_lr, epoch, phase.epochs);
            const double lr_head = schedule_lr(phase.head_schedule, phase.head_lr, epoch, phase.epochs);

            std::vector<size_t> perm = rng.permutation(n);
            double loss_sum = 0.0;
            size_t batches = 0;
            double grad_norm = 0.0;
            for (size_t lo = 0; lo < n; lo += plan.batch_size, ++batches) {
                const size_t hi = std::min(n, lo + plan.batch_size);
                std::vector<size_t> idx = slice(perm, lo, hi);
                std::vector<size_t> yb(idx.size());
                for (size_t i = 0; i < idx.size(); ++i) yb[i] = train.labels[idx[i]];

                for (auto p : enc_params) p.zero_grad();
                for (auto p : head_params) p.zero_grad();

                auto head_loss = [&](const Tensor& zb) {
                    return is_warmup ? head.warmup_loss(zb, yb, n_total, rng)
                                     : head.loss(zb, yb, n_total, rng);
                };
                Tensor loss;
                if (head_only && !is_pretrain) {
                    Tensor zb = gather_rows(cached_z, idx);
                    loss = head_loss(zb);
                } else {
                    Tensor xb = gather_rows(train.inputs, idx).detach();
                    auto out = encoder.forward(xb, head_only ? Mode::Eval : Mode::Train);
                    loss = is_pretrain ? cross_entropy(add(matmul(out.z, probe_W), probe_b), yb)
                                       : head_loss(out.z);
                    // the decoder trains alongside the encoder in every phase
                    // that updates it, including cross-entropy pretraining
                    if (encoder.config().recon_lambda > 0.0)
                        loss = add(loss, mul_scalar(reconstruction_loss(xb, out.x_hat),
                                                    encoder.config().recon_lambda));
                }
                if (!std::isfinite(loss.item()))
                    throw NumericalError("NaN loss in phase '" + phase.name + "' at epoch " +
                                         std::to_string(epoch));
                loss.backward();
                loss_sum += loss.item();
                grad_norm = global_grad_norm({&enc_params, &head_params});

                if (!head_only)
                    optimizer_step(phase.encoder_optimizer, enc_params, enc_state, lr_enc,
                                   phase.encoder_weight_decay);
                if (phase.trainable != Trainable::EncoderOnly || is_pretrain)
                    optimizer_step(phase.head_optimizer, head_params, head_state, lr_head,
                                   phase.head_weight_decay);
                if (!head_only && encoder.config().constraint == Constraint::Bilipschitz)
                    encoder.spectral_step();
            }
            result.log.push_back({global_epoch, phase.name, loss_sum / batches, head_only ? 0.0 : lr_enc,
                                  lr_head, grad_norm});
        }
        if (on_phase_end) on_phase_end(phase.name);
    }
    return result;
}

}  // namespace dumlab
