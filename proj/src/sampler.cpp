#include "recodiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "recodiff/bleu.hpp"
#include "recodiff/rng.hpp"

namespace recodiff {

std::string mbr_metric_name(MbrMetric m) { return m == MbrMetric::bleu ? "bleu" : "perplexity"; }

MbrMetric mbr_metric_from_name(const std::string& name) {
    if (name == "bleu") return MbrMetric::bleu;
    if (name == "perplexity") return MbrMetric::perplexity;
    throw std::invalid_argument("unknown MBR metric: " + name);
}

int SamplerConfig::effective_length_beams() const {
    const int k = length_beams > 0 ? length_beams : std::min(n_candidates, 5);
    return std::min(k, n_candidates);
}

void SamplerConfig::validate(int T) const {
    if (n_steps < 1) throw std::invalid_argument("SamplerConfig: n_steps must be >= 1");
    if (n_steps > T) throw std::invalid_argument("SamplerConfig: n_steps must be <= T");
    if (delta < 0) throw std::invalid_argument("SamplerConfig: delta must be >= 0");
    if (n_candidates < 1) throw std::invalid_argument("SamplerConfig: need n_candidates >= 1");
    if (length_beams > n_candidates) {
        throw std::invalid_argument("SamplerConfig: length_beams must be <= n_candidates");
    }
}

Latent estimate_noise(const Latent& z_t, const Latent& z0_hat, int t,
                      const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.T) throw std::invalid_argument("estimate_noise: t must be in [1, T]");
    check_same_shape(z_t.values, z0_hat.values, "estimate_noise");
    const double bb = schedule.beta_bar_at(t);
    const double signal = std::sqrt(1.0 - bb);
    const double inv_std = 1.0 / std::sqrt(bb);
    Latent out(Mat(z_t.values.rows, z_t.values.cols), t);
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values.a[i] = (z_t.values.a[i] - signal * z0_hat.values.a[i]) * inv_std;
    }
    return out;
}

Latent ddim_step(const Latent& z0_hat, const Latent& eps_tilde, int t_prev,
                 const NoiseSchedule& schedule) {
    if (t_prev < 0 || t_prev >= schedule.T) {
        throw std::invalid_argument("ddim_step: t_prev must be in [0, T)");
    }
    check_same_shape(z0_hat.values, eps_tilde.values, "ddim_step");
    const double bb = t_prev == 0 ? 0.0 : schedule.beta_bar_at(t_prev);
    const double signal = std::sqrt(1.0 - bb);
    const double noise_std = std::sqrt(bb);
    Latent out(Mat(z0_hat.values.rows, z0_hat.values.cols), t_prev);
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values.a[i] = signal * z0_hat.values.a[i] + noise_std * eps_tilde.values.a[i];
    }
    return out;
}

std::vector<int> sampling_grid(int T, int n_steps) {
    std::vector<int> grid(static_cast<size_t>(n_steps) + 1);
    for (int j = 0; j <= n_steps; ++j) {
        grid[static_cast<size_t>(j)] =
            static_cast<int>(std::lround(static_cast<double>(T) * (n_steps - j) / n_steps));
    }
    return grid;
}

namespace {

constexpr int kEosId = 2;
constexpr uint64_t kTagCandidate = 0xca9d;

// pairwise similarity that tolerates empty decodes
double candidate_sim(const TokenSeq& a, const TokenSeq& b) {
    if (b.empty()) return a.empty() ? 1.0 : 0.0;
    return bleu(a, b);
}

std::vector<double> consensus_scores(const std::vector<Candidate>& cands) {
    const size_t n = cands.size();
    std::vector<double> scores(n, 1.0);
    if (n < 2) return scores;
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            mean += candidate_sim(cands[i].tokens, cands[j].tokens);
        }
        scores[i] = 1.0 - mean / static_cast<double>(n - 1);
    }
    return scores;
}

}  // namespace

std::vector<Candidate> generate(const TokenSeq& x, const DenoiserParams& params,
                                const NoiseSchedule& schedule, const SamplerConfig& config,
                                const PerplexityScorer* scorer, const StepObserver* observer) {
    config.validate(schedule.T);
    if (x.empty()) throw std::invalid_argument("generate: empty source");
    if (config.metric == MbrMetric::perplexity && !scorer) {
        throw std::invalid_argument("generate: perplexity metric requires a scorer");
    }

    const SourceMemory memory = encode_source(x, params);
    const std::vector<double> len_probs = predict_length(memory, params);
    const std::vector<int> offsets = top_k_length_offsets(
        len_probs, config.effective_length_beams(), params.config.len_offset_max);
    const int k = static_cast<int>(offsets.size());

    struct Beam {
        int length;
        int n_seeds;
    };
    std::vector<Beam> beams;
    for (int off : offsets) {
        const int len = std::clamp(x.length() + off, 1, params.config.max_len);
        beams.push_back(Beam{len, config.n_candidates / k});
    }
    // the remainder seeds go to the longest beam
    int remainder = config.n_candidates - (config.n_candidates / k) * k;
    if (remainder > 0) {
        size_t longest = 0;
        for (size_t i = 1; i < beams.size(); ++i) {
            if (beams[i].length > beams[longest].length) longest = i;
        }
        beams[longest].n_seeds += remainder;
    }

    const std::vector<int> grid = sampling_grid(schedule.T, config.n_steps);
    const int delta_fine = static_cast<int>(
        std::lround(static_cast<double>(config.delta) * schedule.T / config.n_steps));

    std::vector<Candidate> cands;
    int candidate_index = 0;
    for (const Beam& beam : beams) {
        for (int s = 0; s < beam.n_seeds; ++s, ++candidate_index) {
            Rng rng(derive_seed(config.seed, static_cast<uint64_t>(candidate_index), kTagCandidate));
            Latent z(random_normal(beam.length, params.config.d, rng), schedule.T);
            if (observer) (*observer)(candidate_index, schedule.T, z.values);

            Latent z0_hat;
            bool have_sc = false;
            for (int j = 0; j < config.n_steps; ++j) {
                const int t = grid[static_cast<size_t>(j)];
                const int t_prev = grid[static_cast<size_t>(j) + 1];
                const int t_call = std::min(schedule.T, t + delta_fine);
                const Latent pred =
                    denoise(z, have_sc ? &z0_hat : nullptr, memory, t_call, params);
                const Latent eps = estimate_noise(z, pred, t, schedule);
                z = ddim_step(pred, eps, t_prev, schedule);
                z0_hat = pred;
                have_sc = true;
                if (observer && t_prev > 0) (*observer)(candidate_index, t_prev, z.values);
            }

            Candidate c;
            c.tokens = round_to_tokens(z0_hat.values, params.table_view(), kEosId);
            c.trajectory_len = beam.length;
            cands.push_back(std::move(c));
        }
    }

    if (config.metric == MbrMetric::bleu) {
        const std::vector<double> scores = consensus_scores(cands);
        for (size_t i = 0; i < cands.size(); ++i) cands[i].score = scores[i];
    } else {
        for (Candidate& c : cands) c.score = (*scorer)(c.tokens, x);
    }
    return cands;
}

int mbr_select_index(const std::vector<Candidate>& candidates, MbrMetric metric,
                     const PerplexityScorer* scorer, const TokenSeq& source) {
    if (candidates.empty()) throw std::invalid_argument("mbr_select: empty candidate list");
    std::vector<double> scores;
    if (metric == MbrMetric::bleu) {
        scores = consensus_scores(candidates);
    } else {
        if (!scorer) throw std::invalid_argument("mbr_select: perplexity metric requires a scorer");
        for (const Candidate& c : candidates) scores.push_back((*scorer)(c.tokens, source));
    }
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
        if (scores[static_cast<size_t>(i)] < scores[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

Candidate mbr_select(const std::vector<Candidate>& candidates, MbrMetric metric,
                     const PerplexityScorer* scorer, const TokenSeq& source) {
    return candidates[static_cast<size_t>(mbr_select_index(candidates, metric, scorer, source))];
}

}  // namespace recodiff
