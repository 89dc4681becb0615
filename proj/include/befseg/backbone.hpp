#pragma once

#include <cstddef>
#include <vector>

#include "befseg/image.hpp"
#include "befseg/rng.hpp"
#include "befseg/tensor.hpp"

namespace befseg {

// Geometry of the feature pyramid: level l (1-based) has dims
// [channels[l-1], H/2^(l+1), W/2^(l+1)].
struct BackboneConfig {
    std::size_t num_scales = 3;
    std::vector<std::size_t> channels = {16, 32, 64};
    std::size_t height = 64;
    std::size_t width = 64;

    void validate() const;
    std::size_t level_height(std::size_t level) const;  // level is 1-based
    std::size_t level_width(std::size_t level) const;
};

// Xavier-uniform initialization: U(-s, s) with s = sqrt(6/(fan_in+fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct ConvLayer {
    Tensor weight;  // [C_out, C_in, 3, 3]
    Tensor bias;    // [C_out]
};

// Five convolutions at the default depth: two stride-2 stem layers down to
// H/4, then one conv per level. Level 1 keeps the stem resolution (stride
// 1); every later level halves it, which lands each level on the configured
// H/2^(l+1) grid. Every conv is followed by the sigmoid-gated activation
// x*sigmoid(x).
struct BackboneParams {
    ConvLayer stem1;                // 3 -> kStemWidth, stride 2
    ConvLayer stem2;                // kStemWidth -> kStemWidth, stride 2
    std::vector<ConvLayer> levels;  // level 1 stride 1, levels 2..L stride 2
};

inline constexpr std::size_t kStemWidth = 8;

BackboneParams init_backbone(const BackboneConfig& config, Rng& rng);

struct FeaturePyramid {
    std::vector<Tensor> levels;  // [C_l, H_l, W_l] per level
    bool encoded = false;        // false: raw features, true: encoder output
};

FeaturePyramid extract_features(const Image& image, const BackboneParams& params,
                                const BackboneConfig& config);

// Single-head self-attention plus a two-layer MLP, both residual, over the
// H*W tokens of one pyramid level. The fixed sinusoidal position table
// feeds only the query/key projections, so zeroed weights make the whole
// block an exact identity.
struct EncoderBlock {
    std::size_t width = 0;   // token width C_l
    std::size_t height = 0;  // spatial dims of the level
    std::size_t spatial_width = 0;
    Tensor wq, wk, wv, wo;   // [C, C]
    Tensor mlp_w1, mlp_b1;   // [C, 2C], [2C]
    Tensor mlp_w2, mlp_b2;   // [2C, C], [C]
    Tensor positional;       // [H*W, C], constant
    bool use_positional = true;
};

EncoderBlock init_encoder_block(std::size_t width, std::size_t height, std::size_t spatial_width,
                                Rng& rng);

// Constant table of summed per-axis sinusoids, one row per token in row-
// major (y, x) order.
Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t channels);

Tensor encode_scale(const Tensor& features, const EncoderBlock& block);

// Applies the per-level encoder blocks to a raw pyramid.
FeaturePyramid encode_pyramid(const FeaturePyramid& raw, const std::vector<EncoderBlock>& blocks);

}  // namespace befseg
