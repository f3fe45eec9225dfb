#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flameguide/diffusion.hpp"

using namespace flameguide;

namespace {

FeatureMap<double> random_map(MapShape s, std::mt19937_64& rng) {
    return standard_normal(s, rng);
}

Denoiser constant_denoiser(FeatureMap<double> out) {
    return [out = std::move(out)](const FeatureMap<double>&, std::size_t, const FeatureMap<double>&,
                                  const FeatureMap<double>&) { return out; };
}

const MapShape kShape{4, 3, 3};

}  // namespace

TEST(Schedule, ConstantBetaClosedForm) {
    const auto s = make_linear_schedule(3, 0.1, 0.1);
    EXPECT_EQ(s.alpha(1), 0.9);
    EXPECT_EQ(s.alpha_bar(1), 0.9);
    EXPECT_EQ(s.alpha_bar(2), 0.9 * 0.9);
    EXPECT_EQ(s.alpha_bar(3), 0.9 * 0.9 * 0.9);
    EXPECT_EQ(s.alpha_bar(2), 0.81);
    // 0.729 itself is one ulp away from the rounded product of the stored alphas.
    EXPECT_NEAR(s.alpha_bar(3), 0.729, 2e-16);
}

TEST(Schedule, SingleStep) {
    const auto s = make_linear_schedule(1, 0.3, 0.5);
    EXPECT_EQ(s.steps(), 1u);
    EXPECT_EQ(s.beta(1), 0.3);
    EXPECT_EQ(s.alpha_bar(1), 1.0 - 0.3);
}

TEST(Schedule, LinearEndpointsAndRunningProduct) {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    EXPECT_EQ(s.beta(1), 1e-4);
    EXPECT_EQ(s.beta(1000), 0.02);
    long double running = 1.0L;
    for (std::size_t t = 1; t <= 1000; ++t) {
        const long double beta = 1e-4L + (0.02L - 1e-4L) * static_cast<long double>(t - 1) / 999.0L;
        EXPECT_NEAR(s.beta(t), static_cast<double>(beta), 1e-15);
        running *= 1.0L - beta;
        EXPECT_NEAR(s.alpha_bar(t), static_cast<double>(running), 1e-10);
    }
}

TEST(Schedule, AlphaBarPositiveAndDecreasing) {
    std::mt19937_64 rng(1);
    // Betas up to 0.3 keep alpha_bar_T above the double underflow threshold
    // for the longest schedule drawn here.
    std::uniform_real_distribution<double> u(1e-6, 0.3);
    for (int trial = 0; trial < 200; ++trial) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        const auto s = make_linear_schedule(1 + trial * 5, a, b);
        for (std::size_t t = 1; t <= s.steps(); ++t) {
            EXPECT_GT(s.alpha_bar(t), 0.0);
            if (t > 1) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
        }
    }
}

TEST(Schedule, RangeViolationsRejected) {
    EXPECT_THROW(make_linear_schedule(0, 0.1, 0.2), UsageError);
    EXPECT_THROW(make_linear_schedule(3, 0.0, 0.2), UsageError);
    EXPECT_THROW(make_linear_schedule(3, 0.3, 0.2), UsageError);
    EXPECT_THROW(make_linear_schedule(3, 0.1, 1.0), UsageError);
    const auto s = make_linear_schedule(3, 0.1, 0.2);
    EXPECT_THROW(s.beta(0), ValidationError);
    EXPECT_THROW(s.beta(4), ValidationError);
}

TEST(QSample, NoiselessAndPureNoiseLimits) {
    std::mt19937_64 rng(2);
    const auto s = make_linear_schedule(10, 0.01, 0.2);
    const auto z0 = random_map(kShape, rng), eps = random_map(kShape, rng);
    const FeatureMap<double> zero(kShape);
    const auto a = q_sample(z0, 4, zero, s), b = q_sample(zero, 4, eps, s);
    EXPECT_EQ(a.t, 4u);
    for (std::size_t i = 0; i < z0.data.size(); ++i) {
        EXPECT_EQ(a.z.data[i], std::sqrt(s.alpha_bar(4)) * z0.data[i]);
        EXPECT_EQ(b.z.data[i], std::sqrt(1 - s.alpha_bar(4)) * eps.data[i]);
    }
    EXPECT_THROW(q_sample(z0, 11, eps, s), ValidationError);
}

TEST(QSample, MonteCarloMoments) {
    const auto s = make_linear_schedule(20, 0.01, 0.3);
    const std::size_t t = 7, trials = 100000;
    const double z0 = 0.8;
    const FeatureMap<double> z0map({1, 1, 1}, FeatureTag::latent, z0);
    std::mt19937_64 rng(3);
    double sum = 0, sum_sq = 0;
    std::vector<double> samples(trials);
    for (std::size_t n = 0; n < trials; ++n) {
        const auto z = q_sample(z0map, t, standard_normal({1, 1, 1}, rng), s).z.data[0];
        samples[n] = z;
        sum += z;
    }
    const double mean = sum / trials;
    for (double z : samples) sum_sq += (z - mean) * (z - mean);
    const double var = sum_sq / (trials - 1);
    const double want_mean = std::sqrt(s.alpha_bar(t)) * z0, want_var = 1 - s.alpha_bar(t);
    EXPECT_LE(std::abs(mean - want_mean), 3 * std::sqrt(want_var / trials));
    EXPECT_LE(std::abs(var - want_var), 3 * want_var * std::sqrt(2.0 / (trials - 1)));
}

TEST(QStep, StepwiseChainMatchesMarginalMoments) {
    const auto s = make_linear_schedule(5, 0.05, 0.25);
    const std::size_t trials = 100000;
    const FeatureMap<double> z0({1, 1, 1}, FeatureTag::latent, -0.6);
    std::mt19937_64 rng(4);
    double sum = 0, sum_sq = 0;
    for (std::size_t n = 0; n < trials; ++n) {
        LatentState st{z0, 0};
        for (std::size_t t = 1; t <= 5; ++t) st = q_step(st, standard_normal({1, 1, 1}, rng), s);
        EXPECT_EQ(st.t, 5u);
        sum += st.z.data[0];
        sum_sq += st.z.data[0] * st.z.data[0];
    }
    const double mean = sum / trials, var = sum_sq / trials - mean * mean;
    const double want_mean = std::sqrt(s.alpha_bar(5)) * -0.6, want_var = 1 - s.alpha_bar(5);
    EXPECT_LE(std::abs(mean - want_mean), 3 * std::sqrt(want_var / trials));
    EXPECT_LE(std::abs(var - want_var), 3 * want_var * std::sqrt(2.0 / (trials - 1)));
}

TEST(PStepMean, ZeroPrediction) {
    std::mt19937_64 rng(5);
    const auto s = make_linear_schedule(10, 0.01, 0.2);
    const LatentState zt{random_map(kShape, rng), 6};
    const auto mu = p_step_mean(zt, FeatureMap<double>(kShape), s);
    for (std::size_t i = 0; i < mu.data.size(); ++i) EXPECT_DOUBLE_EQ(mu.data[i], zt.z.data[i] / std::sqrt(s.alpha(6)));
}

TEST(PStepMean, OneStepInversion) {
    std::mt19937_64 rng(6);
    const auto s = make_linear_schedule(10, 0.01, 0.2);
    const auto z0 = random_map(kShape, rng), eps = random_map(kShape, rng);
    const auto mu = p_step_mean(q_sample(z0, 1, eps, s), eps, s);
    for (std::size_t i = 0; i < mu.data.size(); ++i) EXPECT_NEAR(mu.data[i], z0.data[i], 1e-10);
}

TEST(PStepMean, MatchesScalarFormula) {
    std::mt19937_64 rng(7);
    const auto s = make_linear_schedule(50, 1e-3, 0.05);
    for (std::size_t t = 1; t <= 50; t += 7) {
        const LatentState zt{random_map(kShape, rng), t};
        const auto eps = random_map(kShape, rng);
        const auto mu = p_step_mean(zt, eps, s);
        const double beta = s.beta(t), alpha = 1 - beta;
        double abar = 1;
        for (std::size_t k = 1; k <= t; ++k) abar *= 1 - s.beta(k);
        for (std::size_t i = 0; i < mu.data.size(); ++i)
            EXPECT_NEAR(mu.data[i], (zt.z.data[i] - beta / std::sqrt(1 - abar) * eps.data[i]) / std::sqrt(alpha), 1e-10);
    }
}

TEST(SampleLoop, ZeroDenoiserSingleStep) {
    std::mt19937_64 rng(8);
    const auto s = make_linear_schedule(1, 0.2, 0.2);
    const LatentState zT{random_map(kShape, rng), 1};
    const FeatureMap<double> C(kShape), id(kShape);
    const auto out = sample_loop(zT, zero_denoiser(), C, id, s, 42);
    EXPECT_EQ(out.t, 0u);
    for (std::size_t i = 0; i < out.z.data.size(); ++i) EXPECT_DOUBLE_EQ(out.z.data[i], zT.z.data[i] / std::sqrt(0.8));
}

TEST(SampleLoop, FixedSeedIsBitIdentical) {
    std::mt19937_64 rng(9);
    const auto s = make_linear_schedule(25, 1e-3, 0.1);
    const LatentState zT{random_map(kShape, rng), 25};
    const auto C = random_map(kShape, rng);
    const FeatureMap<double> id(kShape);
    const auto a = sample_loop(zT, zero_denoiser(), C, id, s, 5);
    const auto b = sample_loop(zT, zero_denoiser(), C, id, s, 5);
    const auto c = sample_loop(zT, zero_denoiser(), C, id, s, 6);
    EXPECT_EQ(a.z.data, b.z.data);
    EXPECT_NE(a.z.data, c.z.data);
    EXPECT_EQ(a.z.shape, zT.z.shape);
}

TEST(SampleLoop, TeacherForcedRecoversPlantedLatent) {
    std::mt19937_64 rng(10);
    for (std::size_t T : {2u, 10u, 50u}) {
        const auto s = make_linear_schedule(T, 1e-3, 0.2);
        const auto z0 = random_map(kShape, rng), eps = random_map(kShape, rng);
        for (bool with_guidance : {false, true}) {
            const FeatureMap<double> C = with_guidance ? random_map(kShape, rng) : FeatureMap<double>(kShape);
            const LatentState zT = q_sample(z0, T, eps, s);
            const auto out = sample_loop(zT, teacher_forced_denoiser(z0, s), C, FeatureMap<double>(kShape), s, 1,
                                         SampleOptions{false, {}});
            for (std::size_t i = 0; i < z0.data.size(); ++i) EXPECT_NEAR(out.z.data[i], z0.data[i], 1e-6) << "T=" << T;
        }
    }
}

TEST(SampleLoop, DenoiserSeesInjectedLatent) {
    std::mt19937_64 rng(11);
    const auto s = make_linear_schedule(3, 0.1, 0.1);
    const LatentState zT{random_map(kShape, rng), 3};
    const auto C = random_map(kShape, rng);
    bool checked = false;
    const Denoiser spy = [&](const FeatureMap<double>& input, std::size_t t, const FeatureMap<double>&,
                             const FeatureMap<double>&) {
        if (t == 3) {
            for (std::size_t i = 0; i < input.data.size(); ++i) EXPECT_EQ(input.data[i], zT.z.data[i] + C.data[i]);
            checked = true;
        }
        return FeatureMap<double>(input.shape);
    };
    sample_loop(zT, spy, C, FeatureMap<double>(kShape), s, 0);
    EXPECT_TRUE(checked);
}

TEST(SampleLoop, ShapeViolationsRejected) {
    std::mt19937_64 rng(12);
    const auto s = make_linear_schedule(3, 0.1, 0.1);
    const LatentState zT{random_map(kShape, rng), 3};
    const FeatureMap<double> C(kShape);
    EXPECT_THROW(sample_loop(zT, constant_denoiser(FeatureMap<double>({4, 2, 2})), C, C, s, 0), ValidationError);
    EXPECT_THROW(sample_loop(LatentState{zT.z, 2}, zero_denoiser(), C, C, s, 0), ValidationError);
}

TEST(TrainingLoss, PerfectAndUnitOffsetPredictors) {
    std::mt19937_64 rng(13);
    const auto s = make_linear_schedule(10, 0.01, 0.2);
    const auto z0 = random_map(kShape, rng), eps = random_map(kShape, rng);
    const FeatureMap<double> C(kShape);
    EXPECT_EQ(training_loss(z0, 5, eps, constant_denoiser(eps), C, C, s), 0.0);
    auto shifted = eps;
    for (auto& v : shifted.data) v += 1.0;
    EXPECT_NEAR(training_loss(z0, 5, eps, constant_denoiser(shifted), C, C, s), 1.0, 1e-12);
}

TEST(TrainingLoss, MatchesScalarMse) {
    std::mt19937_64 rng(14);
    const auto s = make_linear_schedule(10, 0.01, 0.2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto z0 = random_map(kShape, rng), eps = random_map(kShape, rng), pred = random_map(kShape, rng);
        const FeatureMap<double> C(kShape);
        double want = 0;
        for (std::size_t i = 0; i < eps.data.size(); ++i) want += (eps.data[i] - pred.data[i]) * (eps.data[i] - pred.data[i]);
        want /= static_cast<double>(eps.data.size());
        const double got = training_loss(z0, 1 + trial % 10, eps, constant_denoiser(pred), C, C, s);
        EXPECT_NEAR(got, want, 1e-10);
        EXPECT_GT(got, 0.0);
    }
}

TEST(TrainingLoss, TeacherForcedDenoiserHasZeroLoss) {
    std::mt19937_64 rng(15);
    const auto s = make_linear_schedule(10, 0.01, 0.2);
    const auto z0 = random_map(kShape, rng), eps = random_map(kShape, rng);
    const FeatureMap<double> C(kShape);
    EXPECT_NEAR(training_loss(z0, 6, eps, teacher_forced_denoiser(z0, s), C, C, s), 0.0, 1e-20);
}
