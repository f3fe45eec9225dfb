#pragma once

// Desk-scale DDPM kernel: linear noise schedule, forward noising (stepwise
// and closed-form marginal), the reverse-step mean under epsilon
// prediction, ancestral sampling with a pluggable denoiser, and the
// epsilon-regression training loss.
//
// Steps are 1-based: t in [1, T]. The reverse variance is fixed to beta_t.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flameguide/encoder.hpp"
#include "flameguide/tensor.hpp"

namespace flameguide {

struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    std::size_t steps() const { return betas.size(); }
    double beta(std::size_t t) const { return betas[index(t)]; }
    double alpha(std::size_t t) const { return alphas[index(t)]; }
    double alpha_bar(std::size_t t) const { return alpha_bars[index(t)]; }

    std::size_t index(std::size_t t) const {
        if (t < 1 || t > betas.size())
            throw ValidationError("diffusion step " + std::to_string(t) + " outside [1, " +
                                  std::to_string(betas.size()) + "]");
        return t - 1;
    }

    /// Builds alphas and running products from betas.
    static NoiseSchedule from_betas(std::vector<double> betas) {
        if (betas.empty()) throw UsageError("noise schedule needs at least one step");
        NoiseSchedule s;
        s.betas = std::move(betas);
        double running = 1.0;
        for (double b : s.betas) {
            if (!(b > 0.0 && b < 1.0)) throw UsageError("noise schedule betas must lie in (0, 1)");
            s.alphas.push_back(1.0 - b);
            running *= 1.0 - b;
            s.alpha_bars.push_back(running);
        }
        return s;
    }
};

/// T betas linearly spaced from beta_start to beta_end inclusive.
inline NoiseSchedule make_linear_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw UsageError("make_linear_schedule: need at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw UsageError("make_linear_schedule: require 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[i] = beta_start + f * (beta_end - beta_start);
    }
    if (steps > 1) betas.back() = beta_end;
    return NoiseSchedule::from_betas(std::move(betas));
}

struct LatentState {
    FeatureMap<double> z;
    std::size_t t = 0;
};

/// phi(z_t, t, C, z_id) -> epsilon prediction with the latent's shape.
using Denoiser = std::function<FeatureMap<double>(const FeatureMap<double>& z_t, std::size_t t,
                                                  const FeatureMap<double>& guidance,
                                                  const FeatureMap<double>& identity_features)>;

inline FeatureMap<double> standard_normal(MapShape shape, std::mt19937_64& rng, FeatureTag tag = FeatureTag::latent) {
    FeatureMap<double> out(shape, tag);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : out.data) v = normal(rng);
    return out;
}

/// One forward transition: sqrt(1 - beta_t) z_{t-1} + sqrt(beta_t) noise.
inline LatentState q_step(const LatentState& prev, const FeatureMap<double>& noise, const NoiseSchedule& s) {
    require_same_shape(prev.z, noise, "q_step");
    const std::size_t t = prev.t + 1;
    const double a = std::sqrt(1.0 - s.beta(t)), b = std::sqrt(s.beta(t));
    LatentState next{prev.z, t};
    for (std::size_t i = 0; i < next.z.data.size(); ++i) next.z.data[i] = a * prev.z.data[i] + b * noise.data[i];
    return next;
}

/// Closed-form marginal z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps.
inline LatentState q_sample(const FeatureMap<double>& z0, std::size_t t, const FeatureMap<double>& eps,
                            const NoiseSchedule& s) {
    require_same_shape(z0, eps, "q_sample");
    const double abar = s.alpha_bar(t);
    const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    LatentState out{z0, t};
    out.z.tag = FeatureTag::latent;
    for (std::size_t i = 0; i < z0.data.size(); ++i) out.z.data[i] = a * z0.data[i] + b * eps.data[i];
    return out;
}

/// mu = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t).
inline FeatureMap<double> p_step_mean(const LatentState& zt, const FeatureMap<double>& eps_hat, const NoiseSchedule& s) {
    require_same_shape(zt.z, eps_hat, "p_step_mean");
    const std::size_t t = zt.t;
    const double coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    const double scale = 1.0 / std::sqrt(s.alpha(t));
    FeatureMap<double> mu = zt.z;
    for (std::size_t i = 0; i < mu.data.size(); ++i) mu.data[i] = scale * (zt.z.data[i] - coef * eps_hat.data[i]);
    return mu;
}

struct SampleOptions {
    bool add_noise = true;
    /// Called after each reverse step with the new state (t already decremented).
    std::function<void(const LatentState&)> on_step;
};

/// Ancestral sampling from z_T down to z_0. The denoiser sees the latent with
/// guidance injected. Fresh noise sqrt(beta_t) * n is added for t > 1 only.
inline LatentState sample_loop(const LatentState& zT, const Denoiser& denoiser, const FeatureMap<double>& guidance,
                               const FeatureMap<double>& identity_features, const NoiseSchedule& s,
                               std::uint64_t seed, const SampleOptions& opts = {}) {
    if (zT.t != s.steps())
        throw ValidationError("sample_loop: start state has t=" + std::to_string(zT.t) + ", schedule has T=" +
                              std::to_string(s.steps()));
    std::mt19937_64 rng(seed);
    LatentState state = zT;
    for (std::size_t t = s.steps(); t >= 1; --t) {
        state.t = t;
        const FeatureMap<double> eps_hat = denoiser(inject(state.z, guidance), t, guidance, identity_features);
        if (eps_hat.shape != state.z.shape)
            throw ValidationError("sample_loop: denoiser returned " + eps_hat.shape.str() + ", expected " +
                                  state.z.shape.str());
        FeatureMap<double> next = p_step_mean(state, eps_hat, s);
        if (t > 1 && opts.add_noise) {
            const double sigma = std::sqrt(s.beta(t));
            const auto noise = standard_normal(next.shape, rng);
            for (std::size_t i = 0; i < next.data.size(); ++i) next.data[i] += sigma * noise.data[i];
        }
        state.z = std::move(next);
        state.t = t - 1;
        if (opts.on_step) opts.on_step(state);
    }
    return state;
}

/// Mean squared error between eps and phi(q_sample(z0, t, eps), t, C, z_id).
inline double training_loss(const FeatureMap<double>& z0, std::size_t t, const FeatureMap<double>& eps,
                            const Denoiser& denoiser, const FeatureMap<double>& guidance,
                            const FeatureMap<double>& identity_features, const NoiseSchedule& s) {
    const LatentState zt = q_sample(z0, t, eps, s);
    const FeatureMap<double> pred = denoiser(zt.z, t, guidance, identity_features);
    if (pred.shape != eps.shape)
        throw ValidationError("training_loss: denoiser returned " + pred.shape.str() + ", expected " + eps.shape.str());
    double total = 0.0;
    for (std::size_t i = 0; i < eps.data.size(); ++i) {
        const double d = eps.data[i] - pred.data[i];
        total += d * d;
    }
    return total / static_cast<double>(eps.data.size());
}

/// Predicts zero noise.
inline Denoiser zero_denoiser() {
    return [](const FeatureMap<double>& z, std::size_t, const FeatureMap<double>&, const FeatureMap<double>&) {
        return FeatureMap<double>(z.shape, FeatureTag::latent, 0.0);
    };
}

/// Returns the noise that explains the input under q(z_t | z_0) for a known
/// z_0: (z_t - sqrt(abar_t) z_0) / sqrt(1 - abar_t). With guidance C the
/// input is z_t + C, so C is subtracted first.
inline Denoiser teacher_forced_denoiser(FeatureMap<double> z0, NoiseSchedule s) {
    return [z0 = std::move(z0), s = std::move(s)](const FeatureMap<double>& input, std::size_t t,
                                                  const FeatureMap<double>& guidance, const FeatureMap<double>&) {
        require_same_shape(input, z0, "teacher_forced_denoiser");
        const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
        FeatureMap<double> eps(input.shape, FeatureTag::latent);
        for (std::size_t i = 0; i < eps.data.size(); ++i) {
            const double zt = input.data[i] - (guidance.shape == input.shape ? guidance.data[i] : 0.0);
            eps.data[i] = (zt - a * z0.data[i]) / b;
        }
        return eps;
    };
}

}  // namespace flameguide
