#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "recodiff/bleu.hpp"
#include "recodiff/data.hpp"
#include "recodiff/denoiser.hpp"
#include "recodiff/sampler.hpp"
#include "recodiff/schedule.hpp"

namespace recodiff {

// One measurement snapshot of a model: the self-conditioning quality gap, the
// six-combination input probe, and the per-step sampling deviation.
struct ProbeReport {
    long step = 0;
    double delta_bleu = 0.0;
    std::map<std::string, double> combo_bleu;                     // exactly 6 entries
    std::vector<std::pair<int, double>> measured_step_deviation;  // (t, std)
};

// Abstract denoiser call so probes also run against synthetic models in
// tests: (example, z_t, self_cond-or-null, t) -> z0 prediction.
using DenoiseFn = std::function<Mat(const ParallelPair&, const Mat&, const Mat*, int)>;

DenoiseFn model_denoise_fn(const DenoiserParams& params);

// default probe times {T/4, T/2, 3T/4}
std::vector<int> default_probe_time_grid(int T);

// Mean over examples and probe times of BLEU(decode(z0_sc)) -
// BLEU(decode(z0_hat)), where the z_t fed to both passes is a training-mode
// forward sample.
double delta_bleu_probe(const DenoiseFn& denoise_fn, const EmbeddingTable& table,
                        const std::vector<ParallelPair>& valid_set, const NoiseSchedule& schedule,
                        const ScalingPolicy& policy, const std::vector<int>& t_grid,
                        uint64_t seed);
double delta_bleu_probe(const DenoiserParams& params, const std::vector<ParallelPair>& valid_set,
                        const NoiseSchedule& schedule, const ScalingPolicy& policy,
                        const std::vector<int>& t_grid, uint64_t seed);

// Feeds the six (self_cond, z_t) combinations - self_cond in {0, z0, zT},
// z_t in {z0 at t=0, zT at t=T} - and records decoded BLEU per combination.
ProbeReport combo_probe(const DenoiseFn& denoise_fn, const EmbeddingTable& table,
                        const std::vector<ParallelPair>& valid_set, const NoiseSchedule& schedule,
                        uint64_t seed);
ProbeReport combo_probe(const DenoiserParams& params, const std::vector<ParallelPair>& valid_set,
                        const NoiseSchedule& schedule, uint64_t seed);

extern const char* const kComboKeys[6];

// Runs the sampler over examples and measures, per grid time t, the standard
// deviation of z_t - sqrt(1-bb_t) * Emb(y): the operational reconstruction
// error proxy. Compare against sqrt(bb_t) * lambda(t).
std::vector<std::pair<int, double>> measure_step_deviation(
    const DenoiserParams& params, const NoiseSchedule& schedule,
    const std::vector<ParallelPair>& examples, const SamplerConfig& config);

// ---- training-dynamics aggregation ----

struct DynamicsRow {
    std::string run;
    long window_end_step = 0;
    std::string field;
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};

struct DynamicsSummary {
    std::vector<DynamicsRow> rows;
    int skipped_lines = 0;
};

// Parses a JSON-lines metrics log (one record per step; "run" groups
// interleaved runs) and emits windowed means and standard deviations per
// numeric field. Malformed lines are skipped and counted.
DynamicsSummary dynamics_summary(const std::string& log_path, long window = 100);
DynamicsSummary dynamics_summary_lines(const std::vector<std::string>& lines, long window = 100);

// step,series,value rows; series is "<run>.<field>.mean" / ".std"
void write_dynamics_csv(const DynamicsSummary& summary, const std::string& path);

}  // namespace recodiff
