#include "befseg/bridge.hpp"

#include <stdexcept>
#include <string>

namespace befseg {

BridgeParams init_bridge(const BackboneConfig& config, Rng& rng) {
    config.validate();
    BridgeParams p;
    for (std::size_t i = 0; i + 1 < config.num_scales; ++i) {
        std::size_t c = config.channels[i];       // common width: the finer level's
        std::size_t cj = config.channels[i + 1];
        BridgePairParams pair;
        pair.gate_fine = xavier_uniform({c}, c, 1, rng);
        pair.gate_coarse = xavier_uniform({c}, c, 1, rng);
        pair.proj_fine = xavier_uniform({c, c, 1, 1}, c, c, rng);
        pair.proj_coarse = xavier_uniform({c, cj, 1, 1}, cj, c, rng);
        p.pairs.push_back(std::move(pair));
    }
    return p;
}

Tensor gate_alpha(const Tensor& proj_fine, const Tensor& proj_coarse,
                  const BridgePairParams& params) {
    std::size_t c = params.gate_fine.shape()[0];
    if (proj_fine.shape()[0] != c || proj_coarse.shape()[0] != c)
        throw std::invalid_argument(
            "gate_alpha: projected widths " + std::to_string(proj_fine.shape()[0]) + " and " +
            std::to_string(proj_coarse.shape()[0]) + " must both equal the gate width " +
            std::to_string(c));
    Tensor pre = add(dot(params.gate_fine, global_avg_pool(proj_fine)),
                     dot(params.gate_coarse, global_avg_pool(proj_coarse)));
    return sigmoid(pre);
}

Tensor bridge_pair(const Tensor& fine, const Tensor& coarse_upsampled, const Tensor& alpha) {
    if (fine.shape() != coarse_upsampled.shape())
        throw std::invalid_argument("bridge_pair: shape mismatch " + shape_str(fine.shape()) +
                                    " vs " + shape_str(coarse_upsampled.shape()));
    return add(scale_by(fine, alpha), scale_by(coarse_upsampled, one_minus(alpha)));
}

BridgedPyramid build_bridged_pyramid(const FeaturePyramid& encoded, const BridgeParams& params) {
    if (encoded.levels.size() < 2)
        throw std::invalid_argument("build_bridged_pyramid: needs at least 2 levels, got " +
                                    std::to_string(encoded.levels.size()));
    if (params.pairs.size() + 1 != encoded.levels.size())
        throw std::invalid_argument("build_bridged_pyramid: " +
                                    std::to_string(encoded.levels.size()) + " levels need " +
                                    std::to_string(encoded.levels.size() - 1) + " pairs, got " +
                                    std::to_string(params.pairs.size()));
    BridgedPyramid out;
    for (std::size_t i = 0; i + 1 < encoded.levels.size(); ++i) {
        const BridgePairParams& pair = params.pairs[i];
        Tensor fine = conv2d(encoded.levels[i], pair.proj_fine);
        Tensor coarse = conv2d(encoded.levels[i + 1], pair.proj_coarse);
        Tensor alpha = gate_alpha(fine, coarse, pair);
        while (coarse.shape()[1] < fine.shape()[1])
            coarse = resample(coarse, Resample::kUpsampleNearest2x);
        out.levels.push_back(bridge_pair(fine, coarse, alpha));
        out.alphas.push_back(alpha);
    }
    return out;
}

BoundaryHead init_boundary_head(const BackboneConfig& config, Rng& rng) {
    config.validate();
    BoundaryHead head;
    for (std::size_t c : config.channels)
        head.projections.push_back(xavier_uniform({1, c, 1, 1}, c, 1, rng));
    return head;
}

Tensor boundary_map(const Tensor& encoded_level, const Tensor& projection) {
    return sigmoid(conv2d(encoded_level, projection));
}

Tensor edge_loss(const FeaturePyramid& encoded, const EdgePyramid& edges,
                 const BoundaryHead& head) {
    if (encoded.levels.size() != edges.size() || encoded.levels.size() != head.projections.size())
        throw std::invalid_argument(
            "edge_loss: got " + std::to_string(encoded.levels.size()) + " levels, " +
            std::to_string(edges.size()) + " edge maps, " +
            std::to_string(head.projections.size()) + " head projections");

    Tensor total;
    for (std::size_t l = 0; l < edges.size(); ++l) {
        const Tensor& z = encoded.levels[l];
        const EdgeMap& e = edges[l];
        if (z.shape()[1] != e.height || z.shape()[2] != e.width)
            throw std::invalid_argument("edge_loss: level " + std::to_string(l + 1) +
                                        " features " + shape_str(z.shape()) + " vs edge map " +
                                        std::to_string(e.height) + "x" + std::to_string(e.width));
        Tensor target;
        {
            NoGradGuard ng;
            target = Tensor::from_vector({1, e.height, e.width}, e.values);
        }
        Tensor diff = sub(boundary_map(z, head.projections[l]), target);
        Tensor level_loss = mean_all(mul(diff, diff));
        total = total.defined() ? add(total, level_loss) : level_loss;
    }
    return total;
}

}  // namespace befseg
