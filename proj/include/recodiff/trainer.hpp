#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "recodiff/codec.hpp"
#include "recodiff/data.hpp"
#include "recodiff/denoiser.hpp"
#include "recodiff/schedule.hpp"

namespace recodiff {

struct TrainConfig {
    double lr = 3e-4;
    int warmup_steps = 500;
    double sc_rate = 0.5;
    double clip_eps = 0.2;
    double rl_weight = 1.0;
    int batch_size = 16;
    long max_steps = 2000;
    uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-8;
    bool anchor_noise = false;  // adds N(0, beta_bar_0) to the z0 anchor
    long checkpoint_every = 0;  // 0 disables periodic checkpoints

    void validate() const;
};

struct TrainStepReport {
    long step = 0;
    double t_sampled = 0.0;  // batch mean of the per-example diffusion times
    bool used_sc = false;
    double loss_diffusion = 0.0;
    double loss_ce = 0.0;
    double loss_rl = 0.0;    // meaningful only when used_sc
    double advantage = 0.0;  // batch mean of clipped advantages; only when used_sc
    double loss_length = 0.0;
    double grad_norm = 0.0;
};

// ---- loss and reward primitives ----

// mean squared error over positions and dims
double diffusion_loss(const Latent& pred, const Latent& z0);

// mean token-level negative log softmax of the tied logits at the gold ids;
// pad positions excluded. pred must cover at least |y| positions.
double reconstruction_loss(const Latent& pred, const TokenSeq& y, const EmbeddingTable& table);

// sentence BLEU of the rounded prediction against the decoded form of y
double reward(const Latent& pred, const TokenSeq& y, const EmbeddingTable& table);

// clip(reward(z0_sc) - reward(z0_hat), -eps, +eps)
double advantage(const Latent& z0_sc, const Latent& z0_hat, const TokenSeq& y,
                 const EmbeddingTable& table, double eps);

// -advantage * mean log p(y | z0_sc); the advantage is a constant w.r.t. the
// gradient (REINFORCE with a non-differentiable reward)
double rl_loss(const Latent& z0_sc, double advantage_value, const TokenSeq& y,
               const EmbeddingTable& table);

// ---- deterministic per-step randomness ----
// All training randomness is a pure function of (seed, step, example), which
// is what makes checkpoint resume bitwise identical.
bool sc_decision(uint64_t seed, long step, double sc_rate);
int sample_time(uint64_t seed, long step, int example_index, int T);
Mat sample_noise(uint64_t seed, long step, int example_index, int rows, int cols);

double lr_at(const TrainConfig& config, long step);  // linear warmup, inverse-sqrt decay

struct AdamState {
    std::vector<Mat> m;
    std::vector<Mat> v;
    long updates = 0;
};

// thrown when a step produces a non-finite loss; message carries the dump
struct TrainDivergedError : std::runtime_error {
    explicit TrainDivergedError(const std::string& what) : std::runtime_error(what) {}
};

class Trainer {
  public:
    Trainer(DenoiserParams* params, NoiseSchedule schedule, ScalingPolicy policy,
            TrainConfig config);

    TrainStepReport train_step(const Batch& batch);

    long step() const { return step_; }
    void set_step(long s) { step_ = s; }
    const TrainConfig& config() const { return config_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const ScalingPolicy& policy() const { return policy_; }
    DenoiserParams& params() { return *params_; }
    AdamState& adam() { return adam_; }

  private:
    DenoiserParams* params_;
    NoiseSchedule schedule_;
    ScalingPolicy policy_;
    TrainConfig config_;
    AdamState adam_;
    long step_ = 0;  // completed steps
};

// Epoch-wise driver: shuffles per epoch with a seed derived from the epoch
// index, so resuming at step k continues the exact same batch stream.
void run_training(Trainer& trainer, const std::vector<ParallelPair>& train_set, long target_steps,
                  const std::function<void(const TrainStepReport&)>& on_step);

// ---- test/probe hooks ----

// Losses of one example with an injected (already detached) self-condition
// value; used by gradient tests and by train_step itself. When z0_hat is
// null the non-SC branch is built. ce_coeff scales the reconstruction term
// inside the total (1 + rl_weight * advantage on SC steps).
struct ExampleLossValues {
    double diffusion = 0.0;
    double ce = 0.0;
    double length = 0.0;
    double total = 0.0;
};

ExampleLossValues example_loss_on_tape(Tape& tape, ParamBind& pb, const DenoiserParams& params,
                                       const ParallelPair& pair, int t, const Mat& z_t,
                                       const Mat& z0, const Mat* z0_hat, double ce_coeff,
                                       int len_offset_max, int* total_node_out);

}  // namespace recodiff
