#pragma once

#include <functional>

#include "recodiff/data.hpp"
#include "recodiff/denoiser.hpp"
#include "recodiff/trainer.hpp"

namespace recodiff {

// Small autoregressive encoder-decoder used as the perplexity scorer for MBR
// re-ranking. Trained separately from the diffusion model, on the same pairs.
struct ScorerConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ffn = 128;
    int max_len = 32;

    void validate() const;
};

struct ScorerParams {
    ScorerConfig config;
    int vocab_size = 0;
    ParamStore store;
};

ScorerParams init_scorer_params(const ScorerConfig& config, int vocab_size, Rng& rng);

// teacher-forced mean negative log-likelihood per target token
double scorer_nll(const ScorerParams& params, const TokenSeq& y, const TokenSeq& x);
// exp(nll); lower is better
double scorer_perplexity(const ScorerParams& params, const TokenSeq& y, const TokenSeq& x);

struct ScorerTrainReport {
    long step = 0;
    double loss = 0.0;
};

void train_scorer(ScorerParams& params, const std::vector<ParallelPair>& train_set,
                  long target_steps, int batch_size, double lr, uint64_t seed,
                  const std::function<void(const ScorerTrainReport&)>& on_step = nullptr);

}  // namespace recodiff
