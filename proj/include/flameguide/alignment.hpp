#pragma once

// Structured face alignment: carry an identity's shape coefficients onto
// every frame of a driving sequence, keeping the driving expression and pose.

#include <string>
#include <vector>

#include "flameguide/assets.hpp"

namespace flameguide {

struct AlignedSequence {
    std::vector<double> identity_shape;
    ParamSequence frames;
};

/// Frame i of the result is (identity.shape, driving[i].expression,
/// driving[i].pose). The full driving pose is transferred, neck and eyes
/// included; the identity's own pose is ignored.
inline AlignedSequence align(const FlameParams& identity, const ParamSequence& driving) {
    validate_sequence(driving);
    AlignedSequence out;
    out.identity_shape = identity.shape;
    out.frames.fps = driving.fps;
    out.frames.frames.reserve(driving.frames.size());
    for (std::size_t i = 0; i < driving.frames.size(); ++i) {
        const auto& d = driving.frames[i];
        if (d.shape.size() != identity.shape.size())
            throw ValidationError("align: identity shape width " + std::to_string(identity.shape.size()) +
                                  " != driving shape width " + std::to_string(d.shape.size()) + " (frame " +
                                  std::to_string(i) + ")");
        if (!identity.expression.empty() && d.expression.size() != identity.expression.size())
            throw ValidationError("align: identity expression width " + std::to_string(identity.expression.size()) +
                                  " != driving expression width " + std::to_string(d.expression.size()));
        if (!identity.pose.empty() && d.pose.size() != identity.pose.size())
            throw ValidationError("align: identity pose width " + std::to_string(identity.pose.size()) +
                                  " != driving pose width " + std::to_string(d.pose.size()));
        out.frames.frames.push_back(FlameParams{identity.shape, d.expression, d.pose});
    }
    return out;
}

/// Frame i of the result is (base[i].shape, replacement[i].expression, base[i].pose).
inline ParamSequence substitute_expression(const ParamSequence& base, const ParamSequence& replacement) {
    if (base.frames.size() != replacement.frames.size())
        throw ValidationError("substitute_expression: frame counts differ (" + std::to_string(base.frames.size()) +
                              " vs " + std::to_string(replacement.frames.size()) + ")");
    ParamSequence out = base;
    for (std::size_t i = 0; i < out.frames.size(); ++i) {
        const auto& r = replacement.frames[i].expression;
        if (r.size() != out.frames[i].expression.size())
            throw ValidationError("substitute_expression: expression widths differ at frame " + std::to_string(i) +
                                  " (" + std::to_string(out.frames[i].expression.size()) + " vs " +
                                  std::to_string(r.size()) + ")");
        out.frames[i].expression = r;
    }
    return out;
}

}  // namespace flameguide
