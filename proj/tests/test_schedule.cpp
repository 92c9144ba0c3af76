#include <doctest.h>

#include <cmath>

#include "recodiff/rng.hpp"
#include "recodiff/schedule.hpp"

using namespace recodiff;

TEST_SUITE_BEGIN("schedule");

TEST_CASE("make_schedule sqrt shape and anchors") {
    const NoiseSchedule s = make_schedule(ScheduleKind::sqrt_kind, 2000, 1e-4);
    CHECK(s.beta_bar.size() == 2001);
    CHECK(s.T == 2000);
    CHECK(s.beta_bar_at(0) == doctest::Approx(0.01).epsilon(1e-12));  // sqrt(1e-4)
    CHECK(s.beta_bar_at(2000) < 1.0);
}

TEST_CASE("make_schedule hand grid at T=4, s=0") {
    const NoiseSchedule s = make_schedule(ScheduleKind::sqrt_kind, 4, 0.0);
    CHECK(s.beta_bar_at(0) == doctest::Approx(0.0));
    CHECK(s.beta_bar_at(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.beta_bar_at(2) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(s.beta_bar_at(3) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
    CHECK(s.beta_bar_at(4) == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
}

TEST_CASE("make_schedule rejects bad arguments") {
    CHECK_THROWS_AS(make_schedule(ScheduleKind::sqrt_kind, 0, 1e-4), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(ScheduleKind::sqrt_kind, 10, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(ScheduleKind::sqrt_kind, 10, 1.0), std::invalid_argument);
}

TEST_CASE("beta_bar strictly increasing for random configs") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int T = rng.uniform_int(1, 500);
        const double s = rng.uniform(0.0, 0.5);
        const ScheduleKind kind =
            rng.uniform() < 0.5 ? ScheduleKind::sqrt_kind : ScheduleKind::linear_kind;
        const NoiseSchedule sched = make_schedule(kind, T, s);
        for (int t = 0; t < T; ++t) {
            REQUIRE(sched.beta_bar_at(t + 1) > sched.beta_bar_at(t));
        }
        CHECK(sched.beta_bar_at(T) < 1.0);
    }
}

TEST_CASE("lambda_at") {
    const ScalingPolicy paper = make_scaling_policy(3.0, 7.5e-4);
    CHECK(lambda_at(paper, 0) == doctest::Approx(3.0));
    CHECK(lambda_at(paper, 2000) == doctest::Approx(4.5));
    const ScalingPolicy identity = make_scaling_policy(1.0, 0.0);
    CHECK(lambda_at(identity, 0) == doctest::Approx(1.0));
    CHECK(lambda_at(identity, 1234) == doctest::Approx(1.0));
}

TEST_CASE("forward_sample with zero noise is pure signal scaling") {
    const NoiseSchedule sched = make_schedule(ScheduleKind::sqrt_kind, 100, 1e-4);
    const ScalingPolicy policy = make_scaling_policy(3.0, 7.5e-4);
    Rng rng(11);
    const Latent z0(random_normal(3, 4, rng), 0);
    const Latent zero_noise(Mat(3, 4), 0);
    for (int t : {1, 50, 100}) {
        for (ForwardMode mode : {ForwardMode::train, ForwardMode::unscaled}) {
            const Latent zt = forward_sample(z0, t, zero_noise, sched, policy, mode);
            const double signal = std::sqrt(1.0 - sched.beta_bar_at(t));
            for (size_t i = 0; i < z0.values.size(); ++i) {
                REQUIRE(zt.values.a[i] == doctest::Approx(signal * z0.values.a[i]).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("forward_sample rejects shape mismatch and bad t") {
    const NoiseSchedule sched = make_schedule(ScheduleKind::sqrt_kind, 10, 1e-4);
    const ScalingPolicy policy = make_scaling_policy(3.0, 0.0);
    const Latent z0(Mat(2, 3), 0);
    CHECK_THROWS_AS(
        forward_sample(z0, 1, Latent(Mat(3, 2), 0), sched, policy, ForwardMode::train),
        std::invalid_argument);
    CHECK_THROWS_AS(
        forward_sample(z0, 0, Latent(Mat(2, 3), 0), sched, policy, ForwardMode::train),
        std::invalid_argument);
    CHECK_THROWS_AS(
        forward_sample(z0, 11, Latent(Mat(2, 3), 0), sched, policy, ForwardMode::train),
        std::invalid_argument);
}

TEST_CASE("forward_sample empirical std matches closed form at t=T") {
    const NoiseSchedule sched = make_schedule(ScheduleKind::sqrt_kind, 2000, 1e-4);
    const ScalingPolicy policy = make_scaling_policy(3.0, 7.5e-4);
    const int t = 2000;
    const Latent z0(Mat(2, 2), 0);  // zero signal isolates the noise term
    Rng rng(123);

    const int n_draws = 100000;
    double sq = 0.0;
    for (int i = 0; i < n_draws; ++i) {
        const Latent noise(random_normal(2, 2, rng), t);
        const Latent zt = forward_sample(z0, t, noise, sched, policy, ForwardMode::train);
        for (double v : zt.values.a) sq += v * v;
    }
    const double emp_std = std::sqrt(sq / (n_draws * 4.0));
    const double expected = std::sqrt(sched.beta_bar_at(t)) * lambda_at(policy, t);
    CHECK(std::abs(emp_std - expected) / expected < 0.01);
}

TEST_CASE("unscaled marginal agrees with chained per-step transitions") {
    // superposition oracle: composing q(z_t | z_{t-1}) with beta_t recovered
    // from the cumulative schedule must match the closed-form marginal
    const int T = 12;
    const NoiseSchedule sched = make_schedule(ScheduleKind::sqrt_kind, T, 1e-3);
    const ScalingPolicy identity = make_scaling_policy(1.0, 0.0);
    const int t_star = 9;
    const double z0_val = 0.8;

    Rng rng(77);
    const int n_draws = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n_draws; ++i) {
        double z = z0_val;
        for (int t = 1; t <= t_star; ++t) {
            const double beta_t = sched.beta_step(t);
            z = std::sqrt(1.0 - beta_t) * z + std::sqrt(beta_t) * rng.normal();
        }
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n_draws;
    const double var = sq / n_draws - mean * mean;

    const double bb = sched.beta_bar_at(t_star);
    const double expected_mean = std::sqrt(1.0 - bb) * z0_val;
    const double expected_std = std::sqrt(bb);

    // 3 standard errors
    const double se_mean = expected_std / std::sqrt(static_cast<double>(n_draws));
    CHECK(std::abs(mean - expected_mean) < 3.0 * se_mean);
    const double se_std = expected_std / std::sqrt(2.0 * n_draws);
    CHECK(std::abs(std::sqrt(var) - expected_std) < 3.0 * se_std);

    // the closed form itself is what forward_sample(unscaled) computes
    const Latent z0(Mat(1, 1, {z0_val}), 0);
    const Latent eps(Mat(1, 1, {0.5}), 0);
    const Latent zt = forward_sample(z0, t_star, eps, sched, identity, ForwardMode::unscaled);
    CHECK(zt.values.a[0] ==
          doctest::Approx(expected_mean + expected_std * 0.5).epsilon(1e-12));
}

TEST_CASE("scaling equivariance: train minus unscaled is the extra noise term") {
    const NoiseSchedule sched = make_schedule(ScheduleKind::sqrt_kind, 200, 1e-4);
    const ScalingPolicy policy = make_scaling_policy(2.0, 1e-3);
    Rng rng(5);
    const Latent z0(random_normal(4, 3, rng), 0);
    for (int t : {1, 77, 200}) {
        const Latent noise(random_normal(4, 3, rng), t);
        const Latent a = forward_sample(z0, t, noise, sched, policy, ForwardMode::train);
        const Latent b = forward_sample(z0, t, noise, sched, policy, ForwardMode::unscaled);
        const double coeff = std::sqrt(sched.beta_bar_at(t)) * (lambda_at(policy, t) - 1.0);
        for (size_t i = 0; i < noise.values.size(); ++i) {
            REQUIRE(a.values.a[i] - b.values.a[i] ==
                    doctest::Approx(coeff * noise.values.a[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("check_alignment is the predicate min lambda > 1") {
    const NoiseSchedule sched = make_schedule(ScheduleKind::sqrt_kind, 2000, 1e-4);

    const AlignmentReport ok = check_alignment(sched, make_scaling_policy(3.0, 7.5e-4));
    CHECK(ok.aligned);
    CHECK(ok.violations.empty());

    const AlignmentReport vanilla = check_alignment(sched, make_scaling_policy(1.0, 0.0));
    CHECK_FALSE(vanilla.aligned);  // lambda == 1 everywhere is not strictly smaller
    CHECK(vanilla.violations.size() == 2001);

    const AlignmentReport low = check_alignment(sched, make_scaling_policy(0.5, 0.0));
    CHECK_FALSE(low.aligned);
    CHECK(low.violations.size() == 2001);

    // boundary: lambda(0) = 1 exactly, > 1 later
    const AlignmentReport edge = check_alignment(sched, make_scaling_policy(1.0, 1e-3));
    CHECK_FALSE(edge.aligned);
    CHECK(edge.violations.size() == 1);
    CHECK(edge.violations[0] == 0);
}

TEST_SUITE_END();
