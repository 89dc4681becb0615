#pragma once

#include <vector>

#include "befseg/backbone.hpp"
#include "befseg/image.hpp"
#include "befseg/tensor.hpp"

namespace befseg {

// Fusion parameters for one adjacent scale pair (finer level i, coarser
// level i+1). Both levels are first mapped to the finer level's width C by
// 1x1 kernels; the gate vectors then act on pooled projected features.
struct BridgePairParams {
    Tensor gate_fine;    // [C]
    Tensor gate_coarse;  // [C]
    Tensor proj_fine;    // [C, C_i, 1, 1]
    Tensor proj_coarse;  // [C, C_j, 1, 1]
};

struct BridgeParams {
    std::vector<BridgePairParams> pairs;  // one per adjacent pair, L-1 total
};

BridgeParams init_bridge(const BackboneConfig& config, Rng& rng);

// Scalar fusion weight: sigmoid of the two gate dot products over globally
// averaged projected features. Output is a size-1 tensor in (0,1),
// differentiable through both inputs and both gates.
Tensor gate_alpha(const Tensor& proj_fine, const Tensor& proj_coarse,
                  const BridgePairParams& params);

// Convex combination alpha*fine + (1-alpha)*coarse of two equally shaped
// feature maps.
Tensor bridge_pair(const Tensor& fine, const Tensor& coarse_upsampled, const Tensor& alpha);

struct BridgedPyramid {
    std::vector<Tensor> levels;  // L-1 fused maps, each at the finer member's dims
    std::vector<Tensor> alphas;  // the gate value used per pair
};

BridgedPyramid build_bridged_pyramid(const FeaturePyramid& encoded, const BridgeParams& params);

// Per-level 1x1 readout producing the boundary probability map compared
// against the edge targets.
struct BoundaryHead {
    std::vector<Tensor> projections;  // [1, C_l, 1, 1] per level
};

BoundaryHead init_boundary_head(const BackboneConfig& config, Rng& rng);

// Boundary probability map sigmoid(head_l(Z_l)) for one level, shape
// [1, H_l, W_l].
Tensor boundary_map(const Tensor& encoded_level, const Tensor& projection);

// Sum over levels of the mean squared gap between the boundary map and the
// edge target at that scale.
Tensor edge_loss(const FeaturePyramid& encoded, const EdgePyramid& edges,
                 const BoundaryHead& head);

}  // namespace befseg
