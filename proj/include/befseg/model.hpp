#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "befseg/backbone.hpp"
#include "befseg/bridge.hpp"
#include "befseg/checkpoint.hpp"
#include "befseg/decoder.hpp"
#include "befseg/image.hpp"
#include "befseg/losses.hpp"
#include "befseg/rng.hpp"
#include "befseg/tensor.hpp"

namespace befseg {

struct ModelConfig {
    std::size_t image_size = 64;  // square input
    std::size_t num_classes = 4;
    std::size_t num_scales = 3;
    std::vector<std::size_t> channels = {16, 32, 64};
    std::size_t num_queries = 4;
    std::size_t query_dim = 32;
    std::size_t decoder_rounds = 2;

    void validate() const;
    BackboneConfig backbone() const;
    // (H_l, W_l) per level, finest first
    std::vector<std::pair<std::size_t, std::size_t>> scale_dims() const;
};

struct ForwardResult {
    FeaturePyramid encoded;
    BridgedPyramid bridged;
    Tensor queries;             // [K, d] after all rounds
    PredictionSet predictions;  // masks at the finest bridged resolution
    Tensor masks_full;          // [K, H, W] at image resolution
};

// The full pipeline: convolutional feature extraction, per-scale encoding,
// cross-scale bridging, query decoding, and the boundary readout — with
// every parameter registered under a stable name for checkpoints and the
// optimizer.
class Model {
public:
    Model(ModelConfig config, Rng& rng);

    // the registry points into this object, so it must stay put
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return config_; }
    const ParamList& params() const { return params_; }
    ParamList& params() { return params_; }

    ForwardResult forward(const Image& image) const;

    // Composite objective for one sample; edge targets must match the
    // pyramid dims.
    Tensor loss(const ForwardResult& fwd, const LabelMap& gt, const EdgePyramid& edges,
                const LossWeights& weights, LossBreakdown* breakdown = nullptr) const;

    // Edge supervision targets for an input image at every pyramid scale.
    EdgePyramid edge_targets(const Image& image) const;

    void save(const std::string& path) const;
    void load(const std::string& path);

    void zero_grad();

    const BoundaryHead& boundary_head() const { return boundary_; }

    // total parameter count (for reporting)
    std::size_t parameter_count() const;

private:
    void register_params();

    ModelConfig config_;
    BackboneParams backbone_;
    std::vector<EncoderBlock> encoders_;
    BridgeParams bridge_;
    BoundaryHead boundary_;
    DecoderParams decoder_;
    ParamList params_;
};

}  // namespace befseg
