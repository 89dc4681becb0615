#pragma once

#include <cstddef>
#include <vector>

#include "befseg/image.hpp"
#include "befseg/rng.hpp"
#include "befseg/tensor.hpp"

namespace befseg {

// One decoding round: queries attend to feature tokens, then to each other,
// then pass through an MLP — every stage residual. The cross-attention
// key/value projections absorb the token width, so incoming features need
// no separate adapter.
struct DecoderRound {
    Tensor cross_wq;  // [d, d]
    Tensor cross_wk;  // [C_z, d]
    Tensor cross_wv;  // [C_z, d]
    Tensor cross_wo;  // [d, d]
    Tensor self_wq, self_wk, self_wv, self_wo;  // [d, d]
    Tensor mlp_w1, mlp_w2;                      // [d, 2d], [2d, d]
    Tensor mlp_b1, mlp_b2;                      // [2d], [d]
};

struct DecoderParams {
    std::size_t num_queries = 0;   // K
    std::size_t query_dim = 0;     // d
    std::size_t num_classes = 0;   // C_cls
    std::vector<DecoderRound> rounds;
    Tensor query_init;    // [K, d], learned Q(0)
    Tensor mask_w3;       // [d, d]
    Tensor pixel_kernel;  // [d, C_z, 1, 1]
    Tensor cls_weight;    // [d, C_cls]
};

DecoderParams init_decoder(std::size_t num_queries, std::size_t query_dim,
                           std::size_t num_classes, std::size_t token_width,
                           std::size_t num_rounds, Rng& rng);

// One round of query refinement against tokens [N, C_z].
Tensor decode_step(const Tensor& queries, const Tensor& tokens, const DecoderRound& round);

// Runs all rounds starting from the learned initial queries.
Tensor run_decoder(const Tensor& tokens, const DecoderParams& params);

struct PredictionSet {
    Tensor masks;        // [K, H_m, W_m], values in (0,1)
    Tensor class_probs;  // [K, C_cls], rows sum to 1
};

// Mask k at pixel (x,y) is sigmoid(<W3 * Q_k, P(x,y)>), with P the 1x1
// pixel embedding of the feature map.
Tensor predict_masks(const Tensor& queries, const Tensor& pixel_features,
                     const DecoderParams& params);

Tensor predict_classes(const Tensor& queries, const DecoderParams& params);

// Repeated nearest 2x upsampling of [K, h, w] masks to the target size;
// dims must be reachable by whole doublings.
Tensor upsample_masks_to(const Tensor& masks, std::size_t height, std::size_t width);

// Per-pixel winner across query masks under the fixed query k <-> class k
// assignment; ties go to the lowest query index.
LabelMap semantic_argmax(const Tensor& masks);

}  // namespace befseg
