#include "befseg/decoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "befseg/backbone.hpp"

namespace befseg {

namespace {

// shared single-head attention core: q_in/kv_in are token matrices, the
// projections carry their own input widths
Tensor attend(const Tensor& q_in, const Tensor& kv_in, const Tensor& wq, const Tensor& wk,
              const Tensor& wv, const Tensor& wo) {
    const double d = static_cast<double>(wq.shape()[1]);
    Tensor q = matmul(q_in, wq);
    Tensor k = matmul(kv_in, wk);
    Tensor v = matmul(kv_in, wv);
    Tensor attn = softmax_lastdim(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d)));
    return matmul(matmul(attn, v), wo);
}

}  // namespace

DecoderParams init_decoder(std::size_t num_queries, std::size_t query_dim,
                           std::size_t num_classes, std::size_t token_width,
                           std::size_t num_rounds, Rng& rng) {
    if (num_rounds == 0)
        throw std::invalid_argument("decoder: needs at least one round");
    if (num_queries == 0 || query_dim == 0 || num_classes == 0 || token_width == 0)
        throw std::invalid_argument("decoder: all widths must be positive");

    DecoderParams p;
    p.num_queries = num_queries;
    p.query_dim = query_dim;
    p.num_classes = num_classes;
    const std::size_t d = query_dim;
    for (std::size_t t = 0; t < num_rounds; ++t) {
        DecoderRound r;
        r.cross_wq = xavier_uniform({d, d}, d, d, rng);
        r.cross_wk = xavier_uniform({token_width, d}, token_width, d, rng);
        r.cross_wv = xavier_uniform({token_width, d}, token_width, d, rng);
        r.cross_wo = xavier_uniform({d, d}, d, d, rng);
        r.self_wq = xavier_uniform({d, d}, d, d, rng);
        r.self_wk = xavier_uniform({d, d}, d, d, rng);
        r.self_wv = xavier_uniform({d, d}, d, d, rng);
        r.self_wo = xavier_uniform({d, d}, d, d, rng);
        r.mlp_w1 = xavier_uniform({d, 2 * d}, d, 2 * d, rng);
        r.mlp_b1 = Tensor::zeros({2 * d}, /*requires_grad=*/true);
        r.mlp_w2 = xavier_uniform({2 * d, d}, 2 * d, d, rng);
        r.mlp_b2 = Tensor::zeros({d}, /*requires_grad=*/true);
        p.rounds.push_back(std::move(r));
    }
    p.query_init = xavier_uniform({num_queries, d}, d, d, rng);
    p.mask_w3 = xavier_uniform({d, d}, d, d, rng);
    p.pixel_kernel = xavier_uniform({d, token_width, 1, 1}, token_width, d, rng);
    p.cls_weight = xavier_uniform({d, num_classes}, d, num_classes, rng);
    return p;
}

Tensor decode_step(const Tensor& queries, const Tensor& tokens, const DecoderRound& round) {
    if (queries.rank() != 2 || tokens.rank() != 2)
        throw std::invalid_argument("decode_step: queries " + shape_str(queries.shape()) +
                                    " and tokens " + shape_str(tokens.shape()) +
                                    " must be rank 2");
    if (queries.shape()[1] != round.cross_wq.shape()[0])
        throw std::invalid_argument("decode_step: query width " +
                                    std::to_string(queries.shape()[1]) + " does not match round " +
                                    std::to_string(round.cross_wq.shape()[0]));
    if (tokens.shape()[1] != round.cross_wk.shape()[0])
        throw std::invalid_argument("decode_step: token width " +
                                    std::to_string(tokens.shape()[1]) + " does not match round " +
                                    std::to_string(round.cross_wk.shape()[0]));

    Tensor q = add(queries, attend(queries, tokens, round.cross_wq, round.cross_wk,
                                   round.cross_wv, round.cross_wo));
    q = add(q, attend(q, q, round.self_wq, round.self_wk, round.self_wv, round.self_wo));
    Tensor hidden = silu(add_rowvec(matmul(q, round.mlp_w1), round.mlp_b1));
    return add(q, add_rowvec(matmul(hidden, round.mlp_w2), round.mlp_b2));
}

Tensor run_decoder(const Tensor& tokens, const DecoderParams& params) {
    Tensor q = params.query_init;
    for (const DecoderRound& round : params.rounds) q = decode_step(q, tokens, round);
    return q;
}

Tensor predict_masks(const Tensor& queries, const Tensor& pixel_features,
                     const DecoderParams& params) {
    const Shape& fs = pixel_features.shape();
    if (fs.size() != 3)
        throw std::invalid_argument("predict_masks: pixel features must be [C,H,W], got " +
                                    shape_str(fs));
    Tensor embedded = conv2d(pixel_features, params.pixel_kernel);  // [d, H, W]
    const std::size_t d = params.query_dim, h = fs[1], w = fs[2];
    Tensor pixel_mat = reshape(embedded, {d, h * w});
    Tensor mask_queries = matmul(queries, params.mask_w3);  // rows are W3*Q_k
    Tensor logits = matmul(mask_queries, pixel_mat);        // [K, H*W]
    return reshape(sigmoid(logits), {params.num_queries, h, w});
}

Tensor predict_classes(const Tensor& queries, const DecoderParams& params) {
    return softmax_lastdim(matmul(queries, params.cls_weight));
}

Tensor upsample_masks_to(const Tensor& masks, std::size_t height, std::size_t width) {
    const Shape& s = masks.shape();
    if (s.size() != 3)
        throw std::invalid_argument("upsample_masks_to: expects [K,h,w], got " + shape_str(s));
    Tensor out = masks;
    while (out.shape()[1] < height && out.shape()[2] < width)
        out = resample(out, Resample::kUpsampleNearest2x);
    if (out.shape()[1] != height || out.shape()[2] != width)
        throw std::invalid_argument("upsample_masks_to: cannot reach " + std::to_string(height) +
                                    "x" + std::to_string(width) + " from " + shape_str(s) +
                                    " by doubling");
    return out;
}

LabelMap semantic_argmax(const Tensor& masks) {
    const Shape& s = masks.shape();
    if (s.size() != 3)
        throw std::invalid_argument("semantic_argmax: expects [K,H,W], got " + shape_str(s));
    const std::size_t k = s[0], h = s[1], w = s[2];
    LabelMap out{h, w, std::vector<std::uint8_t>(h * w, 0)};
    const auto& v = masks.values();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t best = 0;
            double best_v = v[y * w + x];
            for (std::size_t q = 1; q < k; ++q) {
                double cand = v[(q * h + y) * w + x];
                if (cand > best_v) {  // strict: ties keep the lowest index
                    best_v = cand;
                    best = q;
                }
            }
            out.at(y, x) = static_cast<std::uint8_t>(best);
        }
    return out;
}

}  // namespace befseg
