#pragma once

// Temporal aggregation of fixed-length windows into one sequence: window
// planning plus a linear crossfade over overlapping frames.

#include <algorithm>
#include <concepts>
#include <string>
#include <vector>

#include "flameguide/common.hpp"

namespace flameguide {

struct WindowPlan {
    std::size_t window_length = 12;
    std::size_t overlap = 0;
    std::vector<std::size_t> starts;
    std::size_t total = 0;

    std::size_t end(std::size_t w) const { return starts[w] + window_length; }
    friend bool operator==(const WindowPlan&, const WindowPlan&) = default;
};

/// Starts step by window - overlap; the last window is shifted left to end
/// exactly at `frames`. A sequence shorter than the window gets one window
/// truncated to the sequence length.
inline WindowPlan plan_windows(std::size_t frames, std::size_t window = 12, std::size_t overlap = 0) {
    if (window == 0) throw UsageError("plan_windows: window length must be positive");
    if (overlap >= window)
        throw UsageError("plan_windows: overlap " + std::to_string(overlap) + " must be less than window " +
                         std::to_string(window));
    WindowPlan plan;
    plan.total = frames;
    plan.overlap = overlap;
    plan.window_length = window;
    if (frames == 0) return plan;
    if (frames < window) {
        plan.window_length = frames;
        plan.overlap = 0;
        plan.starts = {0};
        return plan;
    }
    const std::size_t step = window - overlap;
    std::size_t start = 0;
    plan.starts.push_back(0);
    while (start + window < frames) {
        start = std::min(start + step, frames - window);
        plan.starts.push_back(start);
    }
    return plan;
}

struct FrameContribution {
    std::size_t window;
    double weight;
};

/// Per-window frame payloads, frame-major: data[f * frame_size + i].
template <std::floating_point T>
struct FrameBlock {
    std::size_t frame_size = 0;
    std::vector<T> data;

    std::size_t frames() const { return frame_size == 0 ? 0 : data.size() / frame_size; }
    const T* frame(std::size_t f) const { return data.data() + f * frame_size; }
};

template <std::floating_point T>
struct BlendedSequence {
    FrameBlock<T> frames;
    std::vector<std::vector<FrameContribution>> contributions;
};

/// Crossfade weights per frame, normalized to sum to one. Within the overlap
/// between consecutive windows a and b (length L), the i-th frame weighs b by
/// (2i + 1) / (2L) and a by the complement; a window's weight is the product
/// of its ramp-in and ramp-out factors.
inline std::vector<std::vector<FrameContribution>> blend_weights(const WindowPlan& plan) {
    std::vector<std::vector<FrameContribution>> out(plan.total);
    const std::size_t count = plan.starts.size();
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t s = plan.starts[w], e = plan.end(w);
        for (std::size_t f = s; f < e && f < plan.total; ++f) {
            double weight = 1.0;
            if (w > 0 && f < plan.end(w - 1)) {
                const std::size_t len = plan.end(w - 1) - s;
                weight *= static_cast<double>(2 * (f - s) + 1) / static_cast<double>(2 * len);
            }
            if (w + 1 < count && f >= plan.starts[w + 1]) {
                const std::size_t ns = plan.starts[w + 1];
                const std::size_t len = e - ns;
                weight *= 1.0 - static_cast<double>(2 * (f - ns) + 1) / static_cast<double>(2 * len);
            }
            out[f].push_back({w, weight});
        }
    }
    for (auto& contribs : out) {
        double total = 0.0;
        for (const auto& c : contribs) total += c.weight;
        for (auto& c : contribs) c.weight /= total;
    }
    return out;
}

/// Blends window payloads into one sequence of plan.total frames. Results
/// are clamped to the range spanned by the contributing frames, so identical
/// payloads come through bit-exact.
template <std::floating_point T>
BlendedSequence<T> blend(const std::vector<FrameBlock<T>>& windows, const WindowPlan& plan) {
    if (windows.size() != plan.starts.size())
        throw ValidationError("blend: " + std::to_string(windows.size()) + " window payloads for " +
                              std::to_string(plan.starts.size()) + " planned windows");
    const std::size_t frame_size = windows.empty() ? 0 : windows.front().frame_size;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        if (windows[w].frame_size != frame_size || windows[w].frames() != plan.window_length ||
            windows[w].data.size() != plan.window_length * frame_size)
            throw ValidationError("blend: window " + std::to_string(w) + " does not hold " +
                                  std::to_string(plan.window_length) + " frames of size " + std::to_string(frame_size));
    }
    BlendedSequence<T> out;
    out.contributions = blend_weights(plan);
    out.frames.frame_size = frame_size;
    out.frames.data.assign(plan.total * frame_size, T(0));
    for (std::size_t f = 0; f < plan.total; ++f) {
        const auto& contribs = out.contributions[f];
        const T* ref = windows[contribs[0].window].frame(f - plan.starts[contribs[0].window]);
        T* dst = out.frames.data.data() + f * frame_size;
        for (std::size_t i = 0; i < frame_size; ++i) {
            T lo = ref[i], hi = ref[i];
            double acc = 0.0;
            for (std::size_t c = 1; c < contribs.size(); ++c) {
                const T v = windows[contribs[c].window].frame(f - plan.starts[contribs[c].window])[i];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                acc += contribs[c].weight * (static_cast<double>(v) - static_cast<double>(ref[i]));
            }
            dst[i] = std::clamp(static_cast<T>(static_cast<double>(ref[i]) + acc), lo, hi);
        }
    }
    return out;
}

}  // namespace flameguide
