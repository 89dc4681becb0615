#include "befseg/losses.hpp"

#include <stdexcept>
#include <string>

namespace befseg {

void LossWeights::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw std::invalid_argument("loss weights must be non-negative, got (" +
                                    std::to_string(lambda1) + ", " + std::to_string(lambda2) +
                                    ", " + std::to_string(lambda3) + ")");
}

std::vector<bool> classes_present(const LabelMap& gt, std::size_t num_classes) {
    std::vector<bool> present(num_classes, false);
    for (std::uint8_t l : gt.labels)
        if (l < num_classes) present[l] = true;
    return present;
}

Tensor cls_targets_from_labels(const LabelMap& gt, std::size_t num_queries,
                               std::size_t num_classes) {
    std::vector<bool> present = classes_present(gt, num_classes);
    std::vector<double> onehot(num_queries * num_classes, 0.0);
    for (std::size_t k = 0; k < num_queries; ++k) {
        std::size_t target = (k < num_classes && present[k]) ? k : 0;
        onehot[k * num_classes + target] = 1.0;
    }
    NoGradGuard ng;
    return Tensor::from_vector({num_queries, num_classes}, std::move(onehot));
}

Tensor one_hot_masks(const LabelMap& gt, std::size_t num_queries) {
    const std::size_t hw = gt.height * gt.width;
    std::vector<double> bits(num_queries * hw, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        std::uint8_t l = gt.labels[i];
        if (l < num_queries) bits[l * hw + i] = 1.0;
    }
    NoGradGuard ng;
    return Tensor::from_vector({num_queries, gt.height, gt.width}, std::move(bits));
}

Tensor cls_loss(const Tensor& class_probs, const LabelMap& gt) {
    const Shape& s = class_probs.shape();
    if (s.size() != 2)
        throw std::invalid_argument("cls_loss: probabilities must be [K,C], got " +
                                    shape_str(s));
    Tensor targets = cls_targets_from_labels(gt, s[0], s[1]);
    // one-hot selection: sum(T * log p) picks the target log-probability
    Tensor picked = sum_all(mul(targets, log_clamped(class_probs)));
    return scale(picked, -1.0 / static_cast<double>(s[0]));
}

Tensor mask_loss(const Tensor& masks, const LabelMap& gt) {
    const Shape& s = masks.shape();
    if (s.size() != 3 || s[1] != gt.height || s[2] != gt.width)
        throw std::invalid_argument("mask_loss: masks " + shape_str(s) +
                                    " do not match ground truth " + std::to_string(gt.height) +
                                    "x" + std::to_string(gt.width));
    const std::size_t k = s[0], hw = s[1] * s[2];
    Tensor targets = one_hot_masks(gt, k);

    // complement of the target, constant
    Tensor targets_inv;
    {
        NoGradGuard ng;
        std::vector<double> inv(targets.values());
        for (double& v : inv) v = 1.0 - v;
        targets_inv = Tensor::from_vector(s, std::move(inv));
    }

    // binary cross-entropy: a global mean equals the mean over queries of
    // per-query means because every mask has the same pixel count
    Tensor bce_terms = add(mul(targets, log_clamped(masks)),
                           mul(targets_inv, log_clamped(one_minus(masks))));
    Tensor bce = scale(mean_all(bce_terms), -1.0);

    // Dice: per-query sums via multiplication with a ones column
    Tensor ones_col;
    {
        NoGradGuard ng;
        ones_col = Tensor::full({hw, 1}, 1.0);
    }
    Tensor mask_sums = matmul(reshape(masks, {k, hw}), ones_col);             // [K,1]
    Tensor inter_sums = matmul(reshape(mul(masks, targets), {k, hw}), ones_col);
    Tensor target_sums;
    {
        NoGradGuard ng;
        std::vector<double> sums(k, 0.0);
        const auto& tv = targets.values();
        for (std::size_t q = 0; q < k; ++q)
            for (std::size_t i = 0; i < hw; ++i) sums[q] += tv[q * hw + i];
        target_sums = Tensor::from_vector({k, 1}, std::move(sums));
    }
    const double eps = 1.0;
    Tensor numer = add_scalar(scale(inter_sums, 2.0), eps);
    Tensor denom = add_scalar(add(mask_sums, target_sums), eps);
    Tensor dice = mean_all(one_minus(div(numer, denom)));

    return add(bce, dice);
}

Tensor total_loss(const Tensor& cls, const Tensor& mask, const Tensor& edge,
                  const LossWeights& weights) {
    weights.validate();
    return add(add(scale(cls, weights.lambda1), scale(mask, weights.lambda2)),
               scale(edge, weights.lambda3));
}

}  // namespace befseg
