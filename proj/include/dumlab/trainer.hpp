#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dumlab/data.hpp"
#include "dumlab/encoder.hpp"
#include "dumlab/gp.hpp"
#include "dumlab/natpn.hpp"
#include "dumlab/tensor.hpp"

namespace dumlab {

enum class OptimizerKind { SgdMomentum, AdamW };

OptimizerKind optimizer_from_name(const std::string& s);
std::string optimizer_name(OptimizerKind k);

struct OptimizerState {
    std::vector<std::vector<double>> m, v;  // momentum / first and second moments
    int t = 0;
};

// one update over params using the gradients stored on the tensors;
// weight decay is decoupled from the gradient path for both optimizers
void optimizer_step(OptimizerKind kind, std::vector<Tensor>& params, OptimizerState& state, double lr,
                    double weight_decay);

enum class ScheduleKind { Constant, Cosine, LinearWarmup, Multistep };

ScheduleKind schedule_from_name(const std::string& s);
std::string schedule_name(ScheduleKind k);

struct Schedule {
    ScheduleKind kind = ScheduleKind::Constant;
    double eta_min = 0.0;                         // cosine floor
    std::vector<double> milestones = {0.7, 0.9};  // multistep, fractions of total
    double factor = 0.2;                          // multistep decay per milestone
};

double schedule_lr(const Schedule& schedule, double base_lr, size_t step, size_t total_steps);

enum class Trainable { EncoderHead, HeadOnly, EncoderOnly };

struct Phase {
    std::string name;  // pretrain | warmup | main | finetune
    size_t epochs = 1;
    double encoder_lr = 1e-3;
    double head_lr = 5e-3;
    OptimizerKind encoder_optimizer = OptimizerKind::AdamW;
    OptimizerKind head_optimizer = OptimizerKind::AdamW;
    Schedule encoder_schedule, head_schedule;
    double encoder_weight_decay = 1e-6;
    double head_weight_decay = 1e-6;
    Trainable trainable = Trainable::EncoderHead;
    std::string scheme = "joint";   // main phase only: joint | sequential
    bool reset_last_layer = false;  // stabilizer, fires once at phase start
};

struct TrainPlan {
    std::vector<Phase> phases;
    uint64_t seed = 0;
    size_t batch_size = 64;
    void validate() const;
};

// adapter over the two uncertainty heads so one trainer drives both
class TrainableHead {
  public:
    virtual ~TrainableHead() = default;
    virtual Tensor loss(const Tensor& z, const std::vector<size_t>& y, double n_total, Rng& rng) = 0;
    // loss used in the head-only warmup phase; defaults to the main loss
    virtual Tensor warmup_loss(const Tensor& z, const std::vector<size_t>& y, double n_total,
                               Rng& rng) {
        return loss(z, y, n_total, rng);
    }
    virtual std::vector<Tensor> parameters() = 0;
    // called once at the start of the first phase that trains the head
    // (warmup or main), with a detached latent sample for data-dependent init
    virtual void on_main_start(const Tensor& latents) { (void)latents; }
};

class NatpnTrainable : public TrainableHead {
  public:
    explicit NatpnTrainable(NatpnHead& head) : head_(head) {}
    Tensor loss(const Tensor& z, const std::vector<size_t>& y, double n_total, Rng& rng) override;
    // warmup fits the flow density to the latents directly, so the Bayesian
    // loss starts from informative evidence instead of the cold prior
    Tensor warmup_loss(const Tensor& z, const std::vector<size_t>& y, double n_total,
                       Rng& rng) override;
    std::vector<Tensor> parameters() override { return head_.parameters(); }
    void on_main_start(const Tensor& latents) override;

  private:
    NatpnHead& head_;
    bool scaling_set_ = false;
};

class DueTrainable : public TrainableHead {
  public:
    explicit DueTrainable(GpHead& head, uint64_t inducing_seed = 0)
        : head_(head), inducing_seed_(inducing_seed) {}
    Tensor loss(const Tensor& z, const std::vector<size_t>& y, double n_total, Rng& rng) override;
    std::vector<Tensor> parameters() override { return head_.parameters(); }
    void on_main_start(const Tensor& latents) override;

  private:
    GpHead& head_;
    uint64_t inducing_seed_;
    bool inducing_set_ = false;
};

struct TrainLogRow {
    size_t epoch = 0;  // global, across phases
    std::string phase;
    double loss = 0.0;
    double lr_encoder = 0.0;
    double lr_head = 0.0;
    double grad_norm = 0.0;
};

std::string train_log_csv(const std::vector<TrainLogRow>& log);

struct TrainResult {
    std::vector<TrainLogRow> log;
};

// phase-boundary hook, called after each completed phase (checkpointing)
using PhaseCallback = std::function<void(const std::string& phase_name)>;

TrainResult run(const TrainPlan& plan, Encoder& encoder, TrainableHead& head,
                const data::Dataset& train, const PhaseCallback& on_phase_end = {});

}  // namespace dumlab
