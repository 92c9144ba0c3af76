#pragma once

#include <string>
#include <vector>

#include "recodiff/mat.hpp"

namespace recodiff {

enum class ScheduleKind { sqrt_kind, linear_kind };

std::string schedule_kind_name(ScheduleKind kind);
ScheduleKind schedule_kind_from_name(const std::string& name);

// Cumulative forward-process variances beta_bar[0..T]. Immutable after
// construction; beta_bar is always recomputed from (kind, T, s), never stored
// on disk.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::sqrt_kind;
    int T = 0;
    double s = 0.0;
    std::vector<double> beta_bar;  // size T+1, strictly increasing, beta_bar[T] < 1

    double beta_bar_at(int t) const { return beta_bar[static_cast<size_t>(t)]; }

    // per-step variance beta_t recovered from the cumulative form
    double beta_step(int t) const {
        return 1.0 - (1.0 - beta_bar[static_cast<size_t>(t)]) /
                         (1.0 - beta_bar[static_cast<size_t>(t) - 1]);
    }
};

// Time-aware training-noise scale lambda(t) = k1 + k2*t. Sampling-side math
// always uses the unscaled schedule; lambda applies to the forward process at
// training time only.
struct ScalingPolicy {
    double k1 = 1.0;
    double k2 = 0.0;
};

ScalingPolicy make_scaling_policy(double k1, double k2);

inline double lambda_at(const ScalingPolicy& policy, int t) { return policy.k1 + policy.k2 * t; }

// A length x dim block of embedding-space reals tagged with its diffusion time.
struct Latent {
    Mat values;
    int time = 0;

    Latent() = default;
    Latent(Mat v, int t) : values(std::move(v)), time(t) {}

    int length() const { return values.rows; }
    int dim() const { return values.cols; }
};

// s in [0, 1): s = 0 is accepted for hand-checkable grids even though it puts
// beta_bar[0] at exactly 0.
NoiseSchedule make_schedule(ScheduleKind kind, int T, double s);

enum class ForwardMode { train, unscaled };

// Closed-form forward sample: sqrt(1-bb_t)*z0 + sqrt(bb_t)*lambda(t)*noise,
// with lambda replaced by 1 in unscaled mode. noise must be a standard-normal
// draw of the same shape as z0.
Latent forward_sample(const Latent& z0, int t, const Latent& noise, const NoiseSchedule& schedule,
                      const ScalingPolicy& policy, ForwardMode mode);

struct AlignmentReport {
    bool aligned = false;
    std::vector<int> violations;  // all t in [0,T] with lambda(t) <= 1
};

// True iff lambda(t) > 1 for every t in [0,T]: the sampling-side variance is
// then strictly smaller than the training-side variance at every step.
AlignmentReport check_alignment(const NoiseSchedule& schedule, const ScalingPolicy& policy);

}  // namespace recodiff
