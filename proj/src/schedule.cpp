#include "recodiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace recodiff {

namespace {
constexpr double kClampDelta = 1e-4;
}

std::string schedule_kind_name(ScheduleKind kind) {
    return kind == ScheduleKind::sqrt_kind ? "sqrt" : "linear";
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "sqrt") return ScheduleKind::sqrt_kind;
    if (name == "linear") return ScheduleKind::linear_kind;
    throw std::invalid_argument("unknown schedule kind: " + name);
}

ScalingPolicy make_scaling_policy(double k1, double k2) {
    if (!(k1 > 0.0)) throw std::invalid_argument("ScalingPolicy: k1 must be > 0");
    if (k2 < 0.0) throw std::invalid_argument("ScalingPolicy: k2 must be >= 0");
    return ScalingPolicy{k1, k2};
}

NoiseSchedule make_schedule(ScheduleKind kind, int T, double s) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (s < 0.0 || s >= 1.0) throw std::invalid_argument("make_schedule: s must be in [0, 1)");

    NoiseSchedule sched;
    sched.kind = kind;
    sched.T = T;
    sched.s = s;
    sched.beta_bar.resize(static_cast<size_t>(T) + 1);

    for (int t = 0; t <= T; ++t) {
        const double frac = static_cast<double>(t) / T;
        double bb;
        if (kind == ScheduleKind::sqrt_kind) {
            bb = std::sqrt(frac + s);
        } else {
            bb = frac + s;
        }
        sched.beta_bar[static_cast<size_t>(t)] = std::min(bb, 1.0 - kClampDelta);
    }

    for (int t = 0; t < T; ++t) {
        if (!(sched.beta_bar[static_cast<size_t>(t) + 1] > sched.beta_bar[static_cast<size_t>(t)])) {
            throw std::runtime_error("make_schedule: beta_bar not strictly increasing at t=" +
                                     std::to_string(t));
        }
    }
    return sched;
}

Latent forward_sample(const Latent& z0, int t, const Latent& noise, const NoiseSchedule& schedule,
                      const ScalingPolicy& policy, ForwardMode mode) {
    if (t < 1 || t > schedule.T) {
        throw std::invalid_argument("forward_sample: t must be in [1, T]");
    }
    check_same_shape(z0.values, noise.values, "forward_sample");

    const double bb = schedule.beta_bar_at(t);
    const double signal = std::sqrt(1.0 - bb);
    const double scale = mode == ForwardMode::train ? lambda_at(policy, t) : 1.0;
    const double noise_std = std::sqrt(bb) * scale;

    Latent out(Mat(z0.values.rows, z0.values.cols), t);
    for (size_t i = 0; i < z0.values.size(); ++i) {
        out.values.a[i] = signal * z0.values.a[i] + noise_std * noise.values.a[i];
    }
    return out;
}

AlignmentReport check_alignment(const NoiseSchedule& schedule, const ScalingPolicy& policy) {
    AlignmentReport report;
    for (int t = 0; t <= schedule.T; ++t) {
        if (!(lambda_at(policy, t) > 1.0)) report.violations.push_back(t);
    }
    report.aligned = report.violations.empty();
    return report;
}

}  // namespace recodiff
