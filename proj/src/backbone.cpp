#include "befseg/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace befseg {

void BackboneConfig::validate() const {
    if (num_scales < 2)
        throw std::invalid_argument("backbone: num_scales must be at least 2, got " +
                                    std::to_string(num_scales));
    if (channels.size() != num_scales)
        throw std::invalid_argument("backbone: expected " + std::to_string(num_scales) +
                                    " channel widths, got " + std::to_string(channels.size()));
    for (std::size_t c : channels)
        if (c == 0 || c % 2 != 0)
            throw std::invalid_argument(
                "backbone: channel widths must be positive and even (sin/cos position pairs), "
                "got " + std::to_string(c));
    std::size_t divisor = std::size_t{1} << (num_scales + 1);
    if (height == 0 || width == 0 || height % divisor != 0 || width % divisor != 0)
        throw std::invalid_argument("backbone: input " + std::to_string(height) + "x" +
                                    std::to_string(width) + " must be divisible by 2^" +
                                    std::to_string(num_scales + 1) + " = " +
                                    std::to_string(divisor));
}

std::size_t BackboneConfig::level_height(std::size_t level) const {
    return height >> (level + 1);
}

std::size_t BackboneConfig::level_width(std::size_t level) const {
    return width >> (level + 1);
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> vals(n);
    for (double& v : vals) v = rng.uniform(-s, s);
    return Tensor::from_vector(std::move(shape), std::move(vals), /*requires_grad=*/true);
}

namespace {

ConvLayer init_conv(std::size_t c_in, std::size_t c_out, Rng& rng) {
    ConvLayer layer;
    layer.weight = xavier_uniform({c_out, c_in, 3, 3}, c_in * 9, c_out * 9, rng);
    layer.bias = Tensor::zeros({c_out}, /*requires_grad=*/true);
    return layer;
}

Tensor conv_silu(const Tensor& x, const ConvLayer& layer, std::size_t stride) {
    return silu(add_channel_bias(conv2d(x, layer.weight, stride), layer.bias));
}

}  // namespace

BackboneParams init_backbone(const BackboneConfig& config, Rng& rng) {
    config.validate();
    BackboneParams p;
    p.stem1 = init_conv(3, kStemWidth, rng);
    p.stem2 = init_conv(kStemWidth, kStemWidth, rng);
    std::size_t prev = kStemWidth;
    for (std::size_t l = 0; l < config.num_scales; ++l) {
        p.levels.push_back(init_conv(prev, config.channels[l], rng));
        prev = config.channels[l];
    }
    return p;
}

FeaturePyramid extract_features(const Image& image, const BackboneParams& params,
                                const BackboneConfig& config) {
    if (image.height != config.height || image.width != config.width)
        throw std::invalid_argument("extract_features: image " + std::to_string(image.height) +
                                    "x" + std::to_string(image.width) + " does not match config " +
                                    std::to_string(config.height) + "x" +
                                    std::to_string(config.width));

    Tensor x = to_tensor(image);
    x = conv_silu(x, params.stem1, 2);
    x = conv_silu(x, params.stem2, 2);

    FeaturePyramid pyramid;
    pyramid.encoded = false;
    for (std::size_t l = 0; l < params.levels.size(); ++l) {
        x = conv_silu(x, params.levels[l], l == 0 ? 1 : 2);
        pyramid.levels.push_back(x);
    }
    return pyramid;
}

Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t channels) {
    // Per-axis 1-D sinusoids (sin on even channels, cos on odd, geometric
    // frequency ladder) summed over the two axes.
    auto axis_code = [&](std::size_t pos, std::size_t c) {
        double exponent = static_cast<double>(2 * (c / 2)) / static_cast<double>(channels);
        double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
        return (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    };
    std::vector<double> table(height * width * channels);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < channels; ++c)
                table[(y * width + x) * channels + c] = axis_code(y, c) + axis_code(x, c);
    return Tensor::from_vector({height * width, channels}, std::move(table));
}

EncoderBlock init_encoder_block(std::size_t width, std::size_t height, std::size_t spatial_width,
                                Rng& rng) {
    EncoderBlock b;
    b.width = width;
    b.height = height;
    b.spatial_width = spatial_width;
    b.wq = xavier_uniform({width, width}, width, width, rng);
    b.wk = xavier_uniform({width, width}, width, width, rng);
    b.wv = xavier_uniform({width, width}, width, width, rng);
    b.wo = xavier_uniform({width, width}, width, width, rng);
    b.mlp_w1 = xavier_uniform({width, 2 * width}, width, 2 * width, rng);
    b.mlp_b1 = Tensor::zeros({2 * width}, /*requires_grad=*/true);
    b.mlp_w2 = xavier_uniform({2 * width, width}, 2 * width, width, rng);
    b.mlp_b2 = Tensor::zeros({width}, /*requires_grad=*/true);
    b.positional = positional_encoding(height, spatial_width, width);
    return b;
}

Tensor encode_scale(const Tensor& features, const EncoderBlock& block) {
    const Shape& s = features.shape();
    if (s.size() != 3 || s[0] != block.width || s[1] != block.height ||
        s[2] != block.spatial_width)
        throw std::invalid_argument("encode_scale: features " + shape_str(s) +
                                    " do not match block [" + std::to_string(block.width) + "," +
                                    std::to_string(block.height) + "," +
                                    std::to_string(block.spatial_width) + "]");

    const std::size_t n = s[1] * s[2];  // token count
    const std::size_t c = block.width;

    // [C,H,W] -> tokens [N,C]
    Tensor tokens = transpose(reshape(features, {c, n}));

    // attention; the position table biases only what queries and keys see
    Tensor qk_in = block.use_positional ? add(tokens, block.positional) : tokens;
    Tensor q = matmul(qk_in, block.wq);
    Tensor k = matmul(qk_in, block.wk);
    Tensor v = matmul(tokens, block.wv);
    Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(c)));
    Tensor attn = softmax_lastdim(scores);
    Tensor attended = matmul(matmul(attn, v), block.wo);
    Tensor y = add(tokens, attended);

    // MLP with residual
    Tensor hidden = silu(add_rowvec(matmul(y, block.mlp_w1), block.mlp_b1));
    Tensor out = add_rowvec(matmul(hidden, block.mlp_w2), block.mlp_b2);
    Tensor z = add(y, out);

    return reshape(transpose(z), {c, s[1], s[2]});
}

FeaturePyramid encode_pyramid(const FeaturePyramid& raw, const std::vector<EncoderBlock>& blocks) {
    if (raw.levels.size() != blocks.size())
        throw std::invalid_argument("encode_pyramid: " + std::to_string(raw.levels.size()) +
                                    " levels but " + std::to_string(blocks.size()) + " blocks");
    FeaturePyramid encoded;
    encoded.encoded = true;
    for (std::size_t l = 0; l < blocks.size(); ++l)
        encoded.levels.push_back(encode_scale(raw.levels[l], blocks[l]));
    return encoded;
}

}  // namespace befseg
