#pragma once

#include <string>

#include "recodiff/data.hpp"
#include "recodiff/denoiser.hpp"
#include "recodiff/sampler.hpp"
#include "recodiff/scorer.hpp"
#include "recodiff/trainer.hpp"

namespace recodiff {

// Versioned checkpoint container. Layout (documented for reimplementation):
//   bytes 0..7   magic "RECODIF1"
//   bytes 8..15  little-endian uint64 header length H
//   bytes 16..16+H-1  JSON header: version, kind, configs, schedule
//                descriptor (kind, T, s, k1, k2 - beta_bar is recomputed,
//                never stored), vocabulary tokens, completed step count,
//                optimizer metadata, and a tensor manifest [{name, rows,
//                cols}] in payload order
//   remainder    row-major float64 (little-endian) tensor payloads, manifest
//                order: parameters "p:<name>", then optimizer moments
//                "m:<name>" and "v:<name>" when present
struct Checkpoint {
    DenoiserParams params;
    AdamState adam;
    bool has_adam = false;
    long step = 0;
    NoiseSchedule schedule;
    ScalingPolicy policy;
    TrainConfig train;
    TaskSpec task;
    Vocabulary vocab;
};

void save_checkpoint(const std::string& path, const DenoiserParams& params, const AdamState* adam,
                     long step, const NoiseSchedule& schedule, const ScalingPolicy& policy,
                     const TrainConfig& train, const TaskSpec& task, const Vocabulary& vocab);

Checkpoint load_checkpoint(const std::string& path);

void save_scorer_checkpoint(const std::string& path, const ScorerParams& params,
                            const Vocabulary& vocab);
ScorerParams load_scorer_checkpoint(const std::string& path, Vocabulary* vocab_out = nullptr);

}  // namespace recodiff
