#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "recodiff/denoiser.hpp"
#include "recodiff/schedule.hpp"

namespace recodiff {

enum class MbrMetric { bleu, perplexity };

std::string mbr_metric_name(MbrMetric m);
MbrMetric mbr_metric_from_name(const std::string& name);

struct SamplerConfig {
    int n_steps = 20;
    int delta = 1;  // asymmetric time offset, in coarse grid units
    int n_candidates = 5;
    int length_beams = 0;  // 0 means min(n_candidates, 5)
    MbrMetric metric = MbrMetric::bleu;
    uint64_t seed = 1;

    int effective_length_beams() const;
    void validate(int T) const;
};

struct Candidate {
    TokenSeq tokens;
    double score = 0.0;  // normalized so lower is better
    int trajectory_len = 0;
};

// scorer(tokens, source) -> perplexity-like value, lower is better
using PerplexityScorer = std::function<double(const TokenSeq&, const TokenSeq&)>;

// (z_t - sqrt(1 - bb_t) * z0_hat) / sqrt(bb_t), unscaled schedule. t >= 1.
Latent estimate_noise(const Latent& z_t, const Latent& z0_hat, int t,
                      const NoiseSchedule& schedule);

// sqrt(1 - bb_prev) * z0_hat + sqrt(bb_prev) * eps_tilde, with bb treated as 0
// at the terminal step so t_prev = 0 returns z0_hat exactly.
Latent ddim_step(const Latent& z0_hat, const Latent& eps_tilde, int t_prev,
                 const NoiseSchedule& schedule);

// evenly spaced time grid T = grid[0] > ... > grid[n_steps] = 0
std::vector<int> sampling_grid(int T, int n_steps);

// observer(candidate_index, t, latent) is called at every grid point,
// including the initial draw at T
using StepObserver = std::function<void(int, int, const Mat&)>;

// Full reverse process for one source: length beams from the length head,
// per-candidate Gaussian starts, self-conditioned DDIM trajectory with the
// asymmetric time offset, rounding, and scoring. Returns exactly
// config.n_candidates candidates.
std::vector<Candidate> generate(const TokenSeq& x, const DenoiserParams& params,
                                const NoiseSchedule& schedule, const SamplerConfig& config,
                                const PerplexityScorer* scorer = nullptr,
                                const StepObserver* observer = nullptr);

// index of the winner under the metric; ties break toward the lowest index
int mbr_select_index(const std::vector<Candidate>& candidates, MbrMetric metric,
                     const PerplexityScorer* scorer, const TokenSeq& source);
Candidate mbr_select(const std::vector<Candidate>& candidates, MbrMetric metric,
                     const PerplexityScorer* scorer, const TokenSeq& source);

}  // namespace recodiff
