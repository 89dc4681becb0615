#pragma once

#include <cstddef>
#include <vector>

#include "befseg/backbone.hpp"
#include "befseg/bridge.hpp"
#include "befseg/image.hpp"
#include "befseg/tensor.hpp"

namespace befseg {

struct LossWeights {
    double lambda1 = 1.0;  // classification
    double lambda2 = 1.0;  // mask
    double lambda3 = 0.1;  // boundary alignment

    void validate() const;
};

struct LossBreakdown {
    double cls = 0.0;
    double mask = 0.0;
    double edge = 0.0;
    double total = 0.0;
};

// true at index c iff class c occupies at least one pixel
std::vector<bool> classes_present(const LabelMap& gt, std::size_t num_classes);

// Constant one-hot class targets [K, C] under the fixed assignment: query k
// targets class k when present in the ground truth, otherwise background 0.
Tensor cls_targets_from_labels(const LabelMap& gt, std::size_t num_queries,
                               std::size_t num_classes);

// Constant binary masks [K, H, W]: G_k = indicator(gt == k).
Tensor one_hot_masks(const LabelMap& gt, std::size_t num_queries);

// Mean over queries of cross-entropy -log p_k(target_k), probabilities
// clamped at 1e-12 before the log.
Tensor cls_loss(const Tensor& class_probs, const LabelMap& gt);

// Mean over queries of BCE(M_k, G_k) + Dice loss with smoothing epsilon 1.
// Masks must already be at ground-truth resolution.
Tensor mask_loss(const Tensor& masks, const LabelMap& gt);

// Weighted sum lambda1*cls + lambda2*mask + lambda3*edge. The edge branch
// stays in the graph even at lambda3 = 0, where its parameter gradients are
// exactly zero.
Tensor total_loss(const Tensor& cls, const Tensor& mask, const Tensor& edge,
                  const LossWeights& weights);

}  // namespace befseg
