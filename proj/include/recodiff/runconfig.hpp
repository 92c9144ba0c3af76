#pragma once

#include <string>
#include <vector>

#include "recodiff/data.hpp"
#include "recodiff/denoiser.hpp"
#include "recodiff/sampler.hpp"
#include "recodiff/schedule.hpp"
#include "recodiff/trainer.hpp"

namespace recodiff {

extern const char* const kVersionString;

// Everything one run needs, mirroring the component configs section by
// section. File format: flat INI ([task], [model], [train], [schedule],
// [sampler], [run]); command-line flags override file values.
struct RunConfig {
    TaskSpec task;
    DenoiserConfig model;
    TrainConfig train;
    SamplerConfig sampler;

    ScheduleKind sched_kind = ScheduleKind::sqrt_kind;
    int T = 2000;
    double s = 1e-4;
    double k1 = 3.0;
    double k2 = 7.5e-4;

    std::string out_dir = "runs";
    std::string run_id = "run";
    long log_every = 1;
    long probe_every = 0;  // 0 disables training-time probes
    int probe_examples = 64;

    NoiseSchedule make_noise_schedule() const { return make_schedule(sched_kind, T, s); }
    ScalingPolicy make_policy() const { return make_scaling_policy(k1, k2); }

    // cross-field consistency; throws std::invalid_argument with a
    // field-level message
    void validate() const;
};

RunConfig load_run_config(const std::string& path);
// "section.key=value" form, same keys as the file
void apply_override(RunConfig& config, const std::string& key, const std::string& value);
void save_run_config(const RunConfig& config, const std::string& path);

// Creates out_dir/run_id. An existing run directory is refused unless force
// (wiped marker) or resume is set.
std::string prepare_run_dir(const RunConfig& config, bool force, bool resume);

// newest checkpoint file in a run dir ("" if none)
std::string latest_checkpoint(const std::string& run_dir);

}  // namespace recodiff
