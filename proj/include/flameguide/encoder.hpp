#pragma once

// Geometric guidance encoder, forward pass only. One branch per guidance
// condition (depth, normal, render): a strided conv stack, single-head
// spatial self-attention, then a zero-initialized 3x3 output conv. Branch
// outputs are summed into the guidance tensor, which is added to the noisy
// latent.
//
// Weight file layout (little-endian):
//   "GGEW"  u16 version(=1)
//   u32 branch_count  u32 latent_channels  u32 heads
//   u32 conv_layers   { u32 out_channels  u32 kernel  u32 stride } * conv_layers
//   u32 output_kernel
//   { u32 tag  u32 input_channels } * branch_count
//   per branch:
//     per conv layer: f32 weight[out][in][k][k]  f32 bias[out]
//     f32 query[C][C] key[C][C] value[C][C] output[C][C]
//     f32 output_weight[C][C][k][k]  f32 output_bias[C]

#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flameguide/tensor.hpp"

namespace flameguide {

enum class Activation { none, silu };

template <std::floating_point T>
T silu(T x) {
    return x / (T(1) + std::exp(-x));
}

template <std::floating_point T>
struct ConvLayer {
    std::size_t in_channels = 0, out_channels = 0, kernel = 3, stride = 1;
    std::vector<T> weight;  // out x in x kernel x kernel
    std::vector<T> bias;    // out
    Activation activation = Activation::silu;

    ConvLayer() = default;
    ConvLayer(std::size_t in, std::size_t out, std::size_t k, std::size_t s, Activation act = Activation::silu)
        : in_channels(in), out_channels(out), kernel(k), stride(s), weight(out * in * k * k, T(0)), bias(out, T(0)),
          activation(act) {}

    T& w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
        return weight[((o * in_channels + i) * kernel + ky) * kernel + kx];
    }
    T w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
        return weight[((o * in_channels + i) * kernel + ky) * kernel + kx];
    }
};

/// Projection matrices, each channels x channels, row-major (out, in).
template <std::floating_point T>
struct AttentionWeights {
    std::size_t channels = 0, heads = 1;
    std::vector<T> query, key, value, output;

    AttentionWeights() = default;
    AttentionWeights(std::size_t c, std::size_t h)
        : channels(c), heads(h), query(c * c, T(0)), key(c * c, T(0)), value(c * c, T(0)), output(c * c, T(0)) {}

    static AttentionWeights identity(std::size_t c, std::size_t h = 1) {
        AttentionWeights a(c, h);
        for (std::size_t i = 0; i < c; ++i)
            a.query[i * c + i] = a.key[i * c + i] = a.value[i * c + i] = a.output[i * c + i] = T(1);
        return a;
    }
};

struct LayerSpec {
    std::size_t out_channels, kernel, stride;
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct BranchSpec {
    FeatureTag tag;
    std::size_t input_channels;
    friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

struct GGEConfig {
    std::vector<BranchSpec> branches{{FeatureTag::depth, 1}, {FeatureTag::normal, 3}, {FeatureTag::render, 3}};
    std::vector<LayerSpec> conv_layers{{16, 3, 2}, {32, 3, 2}, {64, 3, 2}, {4, 3, 1}};
    std::size_t latent_channels = 4;
    std::size_t heads = 1;
    std::size_t output_kernel = 3;

    std::size_t downsample() const {
        std::size_t f = 1;
        for (const auto& l : conv_layers) f *= l.stride;
        return f;
    }

    /// Latent shape for a guidance image of the given size.
    MapShape latent_shape(std::size_t height, std::size_t width) const {
        return {latent_channels, height / downsample(), width / downsample()};
    }

    void validate() const {
        if (branches.empty()) throw ValidationError("encoder config has no branches");
        if (conv_layers.empty()) throw ValidationError("encoder config has no conv layers");
        if (conv_layers.back().out_channels != latent_channels)
            throw ValidationError("last conv layer must produce latent_channels channels");
        if (heads == 0 || latent_channels % heads != 0)
            throw ValidationError("latent channels must be divisible by the attention head count");
        for (const auto& l : conv_layers)
            if (l.kernel % 2 == 0 || l.stride < 1 || l.out_channels == 0)
                throw ValidationError("conv layers need odd kernels, positive strides and channels");
        if (output_kernel % 2 == 0) throw ValidationError("output conv kernel must be odd");
    }

    friend bool operator==(const GGEConfig&, const GGEConfig&) = default;
};

template <std::floating_point T>
struct BranchWeights {
    BranchSpec spec;
    std::vector<ConvLayer<T>> convs;
    AttentionWeights<T> attention;
    ConvLayer<T> zero_out;
};

template <std::floating_point T>
struct EncoderWeights {
    GGEConfig config;
    std::vector<BranchWeights<T>> branches;
};

// ---------------------------------------------------------------------------
// Forward operations

/// 2D cross-correlation with zero padding kernel/2, then bias and activation.
template <std::floating_point T>
FeatureMap<T> conv_forward(const FeatureMap<T>& input, const ConvLayer<T>& layer) {
    if (input.channels() != layer.in_channels)
        throw ValidationError("conv_forward: input has " + std::to_string(input.channels()) +
                              " channels, layer expects " + std::to_string(layer.in_channels));
    if (layer.kernel % 2 == 0 || layer.stride == 0) throw ValidationError("conv_forward: kernel must be odd");
    const std::size_t pad = layer.kernel / 2;
    const std::size_t H = input.height(), W = input.width();
    const std::size_t OH = (H - 1) / layer.stride + 1, OW = (W - 1) / layer.stride + 1;
    FeatureMap<T> out(MapShape{layer.out_channels, OH, OW}, input.tag);
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        T* dst = &out.at(o, 0, 0);
        std::fill(dst, dst + OH * OW, layer.bias[o]);
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
            for (std::size_t ky = 0; ky < layer.kernel; ++ky) {
                for (std::size_t kx = 0; kx < layer.kernel; ++kx) {
                    const T wv = layer.w(o, i, ky, kx);
                    if (wv == T(0)) continue;
                    for (std::size_t oy = 0; oy < OH; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * layer.stride + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        const T* src = input.data.data() + (i * H + static_cast<std::size_t>(iy)) * W;
                        T* row = dst + oy * OW;
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * layer.stride + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                            row[ox] += wv * src[ix];
                        }
                    }
                }
            }
        }
    }
    if (layer.activation == Activation::silu)
        for (auto& v : out.data) v = silu(v);
    return out;
}

namespace detail {

/// In-place numerically stable softmax.
template <std::floating_point T>
void softmax(std::span<T> row) {
    T peak = row[0];
    for (T v : row) peak = std::max(peak, v);
    T total = 0;
    for (T& v : row) total += (v = std::exp(v - peak));
    for (T& v : row) v /= total;
}

/// Token matrix (tokens x channels) times a (out, in) projection, transposed.
template <std::floating_point T>
std::vector<T> project_tokens(const std::vector<T>& tokens, std::size_t count, std::size_t channels,
                              const std::vector<T>& proj) {
    std::vector<T> out(count * channels, T(0));
    for (std::size_t l = 0; l < count; ++l)
        for (std::size_t o = 0; o < channels; ++o) {
            T acc = 0;
            for (std::size_t i = 0; i < channels; ++i) acc += proj[o * channels + i] * tokens[l * channels + i];
            out[l * channels + o] = acc;
        }
    return out;
}

template <std::floating_point T>
void check_attention(const FeatureMap<T>& input, const AttentionWeights<T>& a) {
    if (a.heads == 0 || input.channels() % a.heads != 0)
        throw ValidationError("self_attention: " + std::to_string(input.channels()) +
                              " channels not divisible by " + std::to_string(a.heads) + " heads");
    if (a.channels != input.channels())
        throw ValidationError("self_attention: projections sized for " + std::to_string(a.channels) +
                              " channels, input has " + std::to_string(input.channels()));
}

template <std::floating_point T>
std::vector<T> tokens_of(const FeatureMap<T>& input) {
    const std::size_t L = input.height() * input.width(), C = input.channels();
    std::vector<T> x(L * C);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t l = 0; l < L; ++l) x[l * C + c] = input.data[c * L + l];
    return x;
}

/// Attention probabilities of query token `l` in head `h` over all tokens.
template <std::floating_point T>
void attention_row(const std::vector<T>& q, const std::vector<T>& k, std::size_t L, std::size_t C, std::size_t h,
                   std::size_t d, std::size_t l, std::vector<T>& row) {
    const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
    row.resize(L);
    for (std::size_t m = 0; m < L; ++m) {
        T s = 0;
        for (std::size_t c = h * d; c < (h + 1) * d; ++c) s += q[l * C + c] * k[m * C + c];
        row[m] = s * inv_sqrt_d;
    }
    softmax(std::span<T>(row));
}

}  // namespace detail

/// Softmax attention matrices, one L x L row-major block per head. Intended
/// for inspection on small inputs; the forward pass never materializes them.
template <std::floating_point T>
std::vector<std::vector<T>> attention_probabilities(const FeatureMap<T>& input, const AttentionWeights<T>& a) {
    detail::check_attention(input, a);
    const std::size_t L = input.height() * input.width(), C = input.channels(), d = C / a.heads;
    const auto x = detail::tokens_of(input);
    const auto q = detail::project_tokens(x, L, C, a.query);
    const auto k = detail::project_tokens(x, L, C, a.key);
    std::vector<std::vector<T>> out(a.heads, std::vector<T>(L * L));
    std::vector<T> row;
    for (std::size_t h = 0; h < a.heads; ++h)
        for (std::size_t l = 0; l < L; ++l) {
            detail::attention_row(q, k, L, C, h, d, l, row);
            std::copy(row.begin(), row.end(), out[h].begin() + static_cast<std::ptrdiff_t>(l * L));
        }
    return out;
}

/// x + W_o * concat_h(softmax(Q_h K_h^T / sqrt(d)) V_h) over the H*W spatial tokens.
template <std::floating_point T>
FeatureMap<T> self_attention_forward(const FeatureMap<T>& input, const AttentionWeights<T>& a) {
    detail::check_attention(input, a);
    const std::size_t L = input.height() * input.width(), C = input.channels(), d = C / a.heads;
    const auto x = detail::tokens_of(input);
    const auto q = detail::project_tokens(x, L, C, a.query);
    const auto k = detail::project_tokens(x, L, C, a.key);
    const auto v = detail::project_tokens(x, L, C, a.value);

    std::vector<T> mixed(L * C, T(0));
    std::vector<T> row;
    for (std::size_t h = 0; h < a.heads; ++h)
        for (std::size_t l = 0; l < L; ++l) {
            detail::attention_row(q, k, L, C, h, d, l, row);
            for (std::size_t m = 0; m < L; ++m) {
                const T p = row[m];
                for (std::size_t c = h * d; c < (h + 1) * d; ++c) mixed[l * C + c] += p * v[m * C + c];
            }
        }
    const auto projected = detail::project_tokens(mixed, L, C, a.output);
    FeatureMap<T> out = input;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t l = 0; l < L; ++l) out.data[c * L + l] += projected[l * C + c];
    return out;
}

/// Conv stack, self-attention, zero-initialized output conv. Output lives at
/// latent resolution with latent channel count.
template <std::floating_point T>
FeatureMap<T> encode_branch(const FeatureMap<T>& guidance, const BranchWeights<T>& branch, const GGEConfig& config) {
    if (guidance.channels() != branch.spec.input_channels)
        throw ValidationError(std::string("encode_branch(") + to_string(branch.spec.tag) + "): expected " +
                              std::to_string(branch.spec.input_channels) + " input channels, got " +
                              std::to_string(guidance.channels()));
    const std::size_t f = config.downsample();
    if (guidance.height() % f != 0 || guidance.width() % f != 0)
        throw ValidationError("encode_branch: input size " + guidance.shape.str() + " not divisible by downsample " +
                              std::to_string(f));
    FeatureMap<T> h = guidance;
    for (const auto& layer : branch.convs) h = conv_forward(h, layer);
    h = self_attention_forward(h, branch.attention);
    h = conv_forward(h, branch.zero_out);
    h.tag = FeatureTag::guidance;
    return h;
}

/// C = sum over branches, element-wise. `expected_count` of 0 skips the count check.
template <std::floating_point T>
FeatureMap<T> fuse(std::span<const FeatureMap<T>> branch_outputs, std::size_t expected_count = 3) {
    if (branch_outputs.empty() || (expected_count != 0 && branch_outputs.size() != expected_count))
        throw ValidationError("fuse: expected " + std::to_string(expected_count) + " branch outputs, got " +
                              std::to_string(branch_outputs.size()));
    FeatureMap<T> out = branch_outputs[0];
    for (std::size_t m = 1; m < branch_outputs.size(); ++m) out = add(out, branch_outputs[m], "fuse");
    out.tag = FeatureTag::guidance;
    return out;
}

/// Noisy latent plus guidance, element-wise.
template <std::floating_point T>
FeatureMap<T> inject(const FeatureMap<T>& noisy_latent, const FeatureMap<T>& guidance) {
    FeatureMap<T> out = add(noisy_latent, guidance, "inject");
    out.tag = FeatureTag::latent;
    return out;
}

/// Runs every branch on its matching guidance image and fuses the results.
template <std::floating_point T>
FeatureMap<T> encode_guidance(std::span<const FeatureMap<T>> guidance, const EncoderWeights<T>& weights) {
    if (guidance.size() != weights.branches.size())
        throw ValidationError("encode_guidance: " + std::to_string(guidance.size()) + " guidance maps for " +
                              std::to_string(weights.branches.size()) + " branches");
    std::vector<FeatureMap<T>> outs;
    outs.reserve(guidance.size());
    for (std::size_t m = 0; m < guidance.size(); ++m)
        outs.push_back(encode_branch(guidance[m], weights.branches[m], weights.config));
    return fuse(std::span<const FeatureMap<T>>(outs), weights.branches.size());
}

// ---------------------------------------------------------------------------
// Initialization and serialization

enum class OutputInit { zero, random };

namespace detail {

template <std::floating_point T>
void fill_uniform(std::vector<T>& v, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : v) x = static_cast<T>(static_cast<float>(dist(rng)));
}

}  // namespace detail

/// Seed-deterministic initialization, uniform in +-1/sqrt(fan_in). The output
/// conv is all zeros unless OutputInit::random is requested (used to stand
/// in for trained weights). Values are rounded to float32 so weights survive
/// a file round trip exactly.
template <std::floating_point T>
EncoderWeights<T> init_encoder_weights(const GGEConfig& config, std::uint64_t seed, OutputInit out_init = OutputInit::zero) {
    config.validate();
    std::mt19937_64 rng(seed);
    EncoderWeights<T> w;
    w.config = config;
    for (const auto& spec : config.branches) {
        BranchWeights<T> b;
        b.spec = spec;
        std::size_t in = spec.input_channels;
        for (const auto& l : config.conv_layers) {
            ConvLayer<T> layer(in, l.out_channels, l.kernel, l.stride, Activation::silu);
            const double bound = 1.0 / std::sqrt(static_cast<double>(in * l.kernel * l.kernel));
            detail::fill_uniform(layer.weight, bound, rng);
            detail::fill_uniform(layer.bias, bound, rng);
            b.convs.push_back(std::move(layer));
            in = l.out_channels;
        }
        const std::size_t C = config.latent_channels;
        b.attention = AttentionWeights<T>(C, config.heads);
        const double abound = 1.0 / std::sqrt(static_cast<double>(C));
        for (auto* m : {&b.attention.query, &b.attention.key, &b.attention.value, &b.attention.output})
            detail::fill_uniform(*m, abound, rng);
        b.zero_out = ConvLayer<T>(C, C, config.output_kernel, 1, Activation::none);
        if (out_init == OutputInit::random) {
            const double obound = 1.0 / std::sqrt(static_cast<double>(C * config.output_kernel * config.output_kernel));
            detail::fill_uniform(b.zero_out.weight, obound, rng);
            detail::fill_uniform(b.zero_out.bias, obound, rng);
        }
        w.branches.push_back(std::move(b));
    }
    return w;
}

inline constexpr char kWeightsMagic[] = "GGEW";
inline constexpr std::uint16_t kWeightsVersion = 1;

template <std::floating_point T>
void write_encoder_weights(std::ostream& os, const EncoderWeights<T>& w) {
    const auto& cfg = w.config;
    cfg.validate();
    detail::BinaryWriter out(os);
    out.magic(std::string_view(kWeightsMagic, 4));
    out.put(kWeightsVersion);
    out.put(static_cast<std::uint32_t>(cfg.branches.size()));
    out.put(static_cast<std::uint32_t>(cfg.latent_channels));
    out.put(static_cast<std::uint32_t>(cfg.heads));
    out.put(static_cast<std::uint32_t>(cfg.conv_layers.size()));
    for (const auto& l : cfg.conv_layers) {
        out.put(static_cast<std::uint32_t>(l.out_channels));
        out.put(static_cast<std::uint32_t>(l.kernel));
        out.put(static_cast<std::uint32_t>(l.stride));
    }
    out.put(static_cast<std::uint32_t>(cfg.output_kernel));
    for (const auto& b : cfg.branches) {
        out.put(static_cast<std::uint32_t>(b.tag));
        out.put(static_cast<std::uint32_t>(b.input_channels));
    }
    for (const auto& b : w.branches) {
        for (const auto& layer : b.convs) {
            out.put_f32(layer.weight);
            out.put_f32(layer.bias);
        }
        out.put_f32(b.attention.query);
        out.put_f32(b.attention.key);
        out.put_f32(b.attention.value);
        out.put_f32(b.attention.output);
        out.put_f32(b.zero_out.weight);
        out.put_f32(b.zero_out.bias);
    }
    out.check("encoder weights");
}

template <std::floating_point T>
EncoderWeights<T> read_encoder_weights(std::istream& is, const std::string& source = "<stream>") {
    detail::BinaryReader in(is, source);
    in.expect_magic(std::string_view(kWeightsMagic, 4));
    if (in.get<std::uint16_t>() != kWeightsVersion) throw IoError(source + ": unsupported weights version");
    auto dim = [&](const char* what) {
        const auto v = in.get<std::uint32_t>();
        if (v > 4096) throw IoError(source + ": implausible " + std::string(what) + " " + std::to_string(v));
        return static_cast<std::size_t>(v);
    };
    GGEConfig cfg;
    const std::size_t branch_count = dim("branch count");
    cfg.latent_channels = dim("latent channels");
    cfg.heads = dim("head count");
    cfg.conv_layers.resize(dim("conv layer count"));
    for (auto& l : cfg.conv_layers) l = {dim("out channels"), dim("kernel"), dim("stride")};
    cfg.output_kernel = dim("output kernel");
    cfg.branches.resize(branch_count);
    for (auto& b : cfg.branches) {
        const auto tag = dim("tag");
        if (tag > static_cast<std::size_t>(FeatureTag::other)) throw IoError(source + ": unknown branch tag");
        b = {static_cast<FeatureTag>(tag), dim("input channels")};
    }
    cfg.validate();

    auto read_into = [&](std::vector<T>& v) {
        for (auto& x : v) x = static_cast<T>(in.get<float>());
    };
    EncoderWeights<T> w;
    w.config = cfg;
    for (const auto& spec : cfg.branches) {
        BranchWeights<T> b;
        b.spec = spec;
        std::size_t ch = spec.input_channels;
        for (const auto& l : cfg.conv_layers) {
            ConvLayer<T> layer(ch, l.out_channels, l.kernel, l.stride, Activation::silu);
            read_into(layer.weight);
            read_into(layer.bias);
            b.convs.push_back(std::move(layer));
            ch = l.out_channels;
        }
        b.attention = AttentionWeights<T>(cfg.latent_channels, cfg.heads);
        read_into(b.attention.query);
        read_into(b.attention.key);
        read_into(b.attention.value);
        read_into(b.attention.output);
        b.zero_out = ConvLayer<T>(cfg.latent_channels, cfg.latent_channels, cfg.output_kernel, 1, Activation::none);
        read_into(b.zero_out.weight);
        read_into(b.zero_out.bias);
        w.branches.push_back(std::move(b));
    }
    in.expect_eof();
    return w;
}

template <std::floating_point T>
void save_encoder_weights(const std::filesystem::path& path, const EncoderWeights<T>& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_encoder_weights(os, w);
}

template <std::floating_point T>
EncoderWeights<T> load_encoder_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open weights file: " + path.string());
    return read_encoder_weights<T>(is, path.string());
}

}  // namespace flameguide
